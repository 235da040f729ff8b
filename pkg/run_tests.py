#!/usr/bin/env python3
"""
Test runner for the hublab suites.

Runs the unit, cluster, integration and acceptance suites with a summary,
so a quick pass can skip the slow property runs.
"""

import argparse
import subprocess
import sys
from pathlib import Path
from typing import Dict, List


def run_command(cmd: List[str], description: str = "") -> bool:
    """Run a command and return success status"""
    print(f"\n{'=' * 60}")
    if description:
        print(f"Running: {description}")
    print(f"Command: {' '.join(cmd)}")
    print("=" * 60)

    try:
        subprocess.run(cmd, check=True, capture_output=False)
        print(f"✅ {description or 'Command'} completed successfully")
        return True
    except subprocess.CalledProcessError as e:
        print(f"❌ {description or 'Command'} failed with exit code {e.returncode}")
        return False
    except FileNotFoundError:
        print(f"❌ Command not found: {cmd[0]}")
        return False


def suite_table(base_cmd: List[str]) -> Dict[str, Dict[str, object]]:
    return {
        "unit": {
            "description": "Graph, label store, builders and queries",
            "cmd": [*base_cmd, "-m", "not cluster and not integration and not slow"],
        },
        "cluster": {
            "description": "Simulated cluster: bus, DGLL, PLaNT, hybrid, QFDL/QDOL",
            "cmd": [*base_cmd, "-m", "cluster and not slow"],
        },
        "integration": {
            "description": "Command line runs end to end",
            "cmd": [*base_cmd, "-m", "integration and not slow"],
        },
        "acceptance": {
            "description": "Seeded property runs over random graphs",
            "cmd": [*base_cmd, "-m", "slow"],
        },
    }


def main() -> int:
    parser = argparse.ArgumentParser(description="Run hublab tests")
    parser.add_argument(
        "--suite",
        choices=["all", "unit", "cluster", "integration", "acceptance"],
        default="all",
        help="Test suite to run",
    )
    parser.add_argument("--verbose", "-v", action="store_true", help="Verbose output")
    parser.add_argument(
        "--quick", action="store_true", help="Skip the slow acceptance suite"
    )

    args = parser.parse_args()

    project_dir = Path(__file__).parent
    print(f"Running tests from: {project_dir}")

    base_cmd = [sys.executable, "-m", "pytest"]
    if args.verbose:
        base_cmd.extend(["-v", "-s"])

    suites = suite_table(base_cmd)
    if args.suite == "all":
        suites_to_run = list(suites.keys())
        if args.quick:
            suites_to_run.remove("acceptance")
    else:
        suites_to_run = [args.suite]

    print(f"Suites to run: {', '.join(suites_to_run)}")

    success_count = 0
    for suite_name in suites_to_run:
        suite = suites[suite_name]
        if run_command(list(suite["cmd"]), str(suite["description"])):  # type: ignore[call-overload]
            success_count += 1

    total_count = len(suites_to_run)
    print(f"\n{'=' * 60}")
    print("TEST SUMMARY")
    print(f"{'=' * 60}")
    print(f"Suites run: {total_count}")
    print(f"Successful: {success_count}")
    print(f"Failed: {total_count - success_count}")

    if success_count == total_count:
        print("🎉 All test suites passed!")
        return 0
    print("❌ Some test suites failed")
    return 1


if __name__ == "__main__":
    sys.exit(main())
