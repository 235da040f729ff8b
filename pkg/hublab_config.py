"""
Configuration models for builders, the simulated cluster and run manifests.
"""

import os
from typing import Dict, Optional

from pydantic import BaseModel, ConfigDict, Field, field_validator

from hublab_errors import Algorithm, GraphClass, GraphFormat, RankingMethod

WORKERS_ENV = "HUBLAB_WORKERS"

DEFAULT_ALPHA = 4.0
DEFAULT_BETA = 8.0
DEFAULT_ETA = 16
DEFAULT_SAMPLES = 16

PSI_THRESHOLDS: Dict[GraphClass, float] = {
    GraphClass.SCALE_FREE: 100.0,
    GraphClass.ROAD: 500.0,
}


def default_workers() -> int:
    """Worker count from HUBLAB_WORKERS, else the machine's parallelism"""
    raw = os.environ.get(WORKERS_ENV)
    if raw:
        try:
            value = int(raw)
        except ValueError:
            value = 0
        if value >= 1:
            return value
    return os.cpu_count() or 1


def default_sync_count(n: int) -> int:
    """⌈log₈ n⌉ supersteps, at least one"""
    syncs, reach = 1, 8
    while reach < n:
        syncs += 1
        reach *= 8
    return syncs


class BuildConfig(BaseModel):
    """Shared-memory builder settings"""

    model_config = ConfigDict(frozen=True)

    workers: int = Field(default_factory=default_workers, ge=1)
    alpha: float = Field(default=DEFAULT_ALPHA, gt=1.0)
    seed: int = 0


class ClusterConfig(BaseModel):
    """Simulated cluster settings"""

    model_config = ConfigDict(frozen=True, ser_json_inf_nan="constants")

    q: int = Field(default=1, ge=1)
    sync_count: Optional[int] = Field(default=None, ge=1)
    beta: float = Field(default=DEFAULT_BETA, gt=1.0)
    psi_threshold: float = Field(default=PSI_THRESHOLDS[GraphClass.SCALE_FREE], ge=0.0)
    eta: int = Field(default=DEFAULT_ETA, ge=0)
    workers_per_node: int = Field(default=1, ge=1)
    seed: int = 0

    @classmethod
    def for_graph_class(cls, graph_class: GraphClass, **overrides: object) -> "ClusterConfig":
        fields: Dict[str, object] = {"psi_threshold": PSI_THRESHOLDS[graph_class]}
        fields.update(overrides)
        return cls(**fields)  # type: ignore[arg-type]

    def syncs_for(self, n: int) -> int:
        return self.sync_count if self.sync_count is not None else default_sync_count(n)


class RunManifest(BaseModel):
    """Everything needed to reproduce a labeling"""

    input_path: str
    input_format: GraphFormat
    directed: bool = False
    weighted: bool = True
    random_weights: bool = False
    weight_seed: int = 0
    ranking: RankingMethod = RankingMethod.DEGREE
    samples: int = DEFAULT_SAMPLES
    ranking_seed: int = 0
    algorithm: Algorithm
    build: Optional[BuildConfig] = None
    cluster: Optional[ClusterConfig] = None
    early_termination: bool = True
    labels_path: str
    shards_dir: Optional[str] = None
    traffic_path: Optional[str] = None
    graph_digest: str
    ranking_digest: str

    @field_validator("samples")
    @classmethod
    def _positive_samples(cls, value: int) -> int:
        if value < 1:
            raise ValueError("samples must be >= 1")
        return value

    def write(self, path: str) -> None:
        with open(path, "w", encoding="utf-8") as f:
            f.write(self.model_dump_json(indent=2))
            f.write("\n")

    @classmethod
    def read(cls, path: str) -> "RunManifest":
        with open(path, encoding="utf-8") as f:
            return cls.model_validate_json(f.read())
