"""Stochastic state reduction driven by probability current."""

from pathlib import Path

__version__ = "0.1.0"

SCENARIO_DIR = Path(__file__).resolve().parent / "scenarios"


def shipped_scenarios() -> list[Path]:
    return sorted(SCENARIO_DIR.glob("*.scn"))
