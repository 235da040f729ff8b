"""
Exception hierarchy and status enums shared by every hublab module.
"""

from enum import Enum
from typing import Optional


class CheckStatus(Enum):
    """Outcome of a single verification check"""

    PASS = "PASS"
    FAIL = "FAIL"
    SKIPPED = "SKIPPED"


class Algorithm(Enum):
    """Labeling construction algorithms"""

    # Shared memory
    SEQPLL = "seqpll"
    LCC = "lcc"
    GLL = "gll"
    PLANT = "plant"

    # Simulated cluster
    DGLL = "dgll"
    HYBRID = "hybrid"

    @property
    def distributed(self) -> bool:
        return self in (Algorithm.DGLL, Algorithm.HYBRID)


class QueryMode(Enum):
    """Label storage / query modes"""

    QLSN = "qlsn"  # full labeling replicated on the querying node
    QFDL = "qfdl"  # hub-partitioned labels, partial minima reduced
    QDOL = "qdol"  # overlapping vertex-partition pairs, one node answers


class RankingMethod(Enum):
    DEGREE = "degree"
    BETWEENNESS = "betweenness"


class GraphClass(Enum):
    """Network family; selects the hybrid switch threshold default"""

    SCALE_FREE = "scale-free"
    ROAD = "road"


class GraphFormat(Enum):
    DIMACS = "dimacs"
    EDGES = "edges"


class HubLabelError(Exception):
    """Base class for all hublab errors"""


class GraphParseError(HubLabelError, ValueError):
    """Malformed graph input"""

    def __init__(self, message: str, line_number: Optional[int] = None):
        self.line_number = line_number
        if line_number is not None:
            message = f"line {line_number}: {message}"
        super().__init__(message)


class GraphDomainError(HubLabelError, ValueError):
    """Graph input outside the supported domain (e.g. non-positive weights)"""


class ContractViolation(HubLabelError):
    """An operation was called with its precondition broken"""


class LayoutError(HubLabelError):
    """Label storage layout does not match the requested query mode"""


class LabelFormatError(HubLabelError):
    """A serialized labeling could not be decoded"""


class QueryFormatError(HubLabelError, ValueError):
    """Malformed query file"""

    def __init__(self, message: str, line_number: Optional[int] = None):
        self.line_number = line_number
        if line_number is not None:
            message = f"line {line_number}: {message}"
        super().__init__(message)
