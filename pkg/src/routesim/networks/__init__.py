"""Bundled synthetic road networks for experiments and tests."""
from __future__ import annotations

from importlib import resources
from pathlib import Path


def available() -> list[str]:
    """Names of the bundled network files, without the .csv suffix."""
    root = resources.files(__package__)
    return sorted(p.name[:-4] for p in root.iterdir() if p.name.endswith(".csv"))


def bundled_path(name: str) -> Path:
    """Filesystem path of a bundled network, e.g. ``bundled_path('two_route')``."""
    candidate = resources.files(__package__) / f"{name}.csv"
    if not candidate.is_file():
        raise ValueError(f"unknown bundled network {name!r}; available: {', '.join(available())}")
    return Path(str(candidate))
