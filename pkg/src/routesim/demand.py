"""Demand: agent populations, synthetic generation and CSV exchange."""
from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path
from typing import TYPE_CHECKING

import numpy as np

from .behaviors import BEHAVIOR_NAMES
from .netgraph import Network, shortest_path

if TYPE_CHECKING:
    from .humans import HumanModelParams

KINDS = ("human", "av")
DEMAND_HEADER = ("id", "origin", "dest", "departure", "kind", "behavior")


@dataclass
class AgentSpec:
    """One trip request: who travels, where, when, and as what kind of agent.

    ``behavior`` and ``weights`` only matter for vehicle agents; ``weights``
    overrides the named preset when both are present. ``model_params``
    optionally pins a per-agent human model; agents without one use the
    scenario default.
    """

    id: int
    origin: str
    dest: str
    departure: int
    kind: str = "human"
    behavior: str | None = None
    weights: tuple[float, float, float, float] | None = None
    model_params: "HumanModelParams | None" = None


@dataclass
class DemandConfig:
    """Synthetic demand recipe: weighted O-D pairs and a departure window."""

    n_agents: int
    od_pairs: list[tuple[str, str, float]]
    departure_window: tuple[int, int] = (0, 3600)
    seed: int = 0


def validate_specs(specs, net: Network) -> None:
    """Check a population against a network; raises ValueError on problems."""
    seen_ids: set[int] = set()
    for spec in specs:
        if spec.id in seen_ids:
            raise ValueError(f"duplicate agent id {spec.id}")
        seen_ids.add(spec.id)
        for nid in (spec.origin, spec.dest):
            if nid not in net.nodes:
                raise ValueError(f"agent {spec.id}: unknown node {nid!r}")
        if spec.origin == spec.dest:
            raise ValueError(f"agent {spec.id}: origin equals destination")
        if spec.departure < 0:
            raise ValueError(f"agent {spec.id}: departure must be >= 0")
        if spec.kind not in KINDS:
            raise ValueError(f"agent {spec.id}: kind must be one of {KINDS}, got {spec.kind!r}")
        if spec.kind == "av" and spec.behavior is None and spec.weights is None:
            raise ValueError(f"agent {spec.id}: vehicle agents need a behavior")
        if spec.behavior is not None and spec.behavior not in BEHAVIOR_NAMES:
            raise ValueError(
                f"agent {spec.id}: unknown behavior {spec.behavior!r};"
                f" expected one of {', '.join(BEHAVIOR_NAMES)}"
            )


def generate_demand(net: Network, cfg: DemandConfig) -> list[AgentSpec]:
    """Sample a synthetic all-human population.

    O-D pairs are drawn with the configured weights and departures uniformly
    as integer seconds inside the window (both ends inclusive). The result is
    a pure function of ``(net, cfg)``; the same seed reproduces the same
    population byte for byte.
    """
    if cfg.n_agents < 1:
        raise ValueError(f"n_agents must be >= 1, got {cfg.n_agents}")
    if not cfg.od_pairs:
        raise ValueError("od_pairs must not be empty")
    start, end = cfg.departure_window
    if start < 0 or end < start:
        raise ValueError(f"departure_window must satisfy 0 <= start <= end, got {cfg.departure_window}")
    weights = []
    for origin, dest, weight in cfg.od_pairs:
        if weight < 0:
            raise ValueError(f"od pair {origin}->{dest}: negative weight {weight}")
        # Confirms reachability up front so later episodes cannot fail.
        shortest_path(net, origin, dest, net.fftimes())
        weights.append(float(weight))
    total = sum(weights)
    if total <= 0:
        raise ValueError("od pair weights must not all be zero")
    probs = np.array(weights) / total
    rng = np.random.default_rng(cfg.seed)
    od_indices = rng.choice(len(cfg.od_pairs), size=cfg.n_agents, p=probs)
    departures = rng.integers(start, end, size=cfg.n_agents, endpoint=True)
    specs = []
    for agent_id in range(cfg.n_agents):
        origin, dest, _ = cfg.od_pairs[int(od_indices[agent_id])]
        specs.append(AgentSpec(agent_id, origin, dest, int(departures[agent_id])))
    return specs


def _format_weights(weights) -> str:
    return ";".join(repr(float(w)) for w in weights)


def write_demand_csv(specs, path) -> Path:
    """Write agents as ``id,origin,dest,departure,kind,behavior`` rows.

    A ``weights`` column is appended only when at least one agent carries a
    per-agent behavior weight override.
    """
    path = Path(path)
    with_weights = any(spec.weights is not None for spec in specs)
    header = list(DEMAND_HEADER) + (["weights"] if with_weights else [])
    with path.open("w", newline="", encoding="utf-8") as handle:
        writer = csv.writer(handle)
        writer.writerow(header)
        for spec in specs:
            row = [
                spec.id,
                spec.origin,
                spec.dest,
                spec.departure,
                spec.kind,
                spec.behavior or "",
            ]
            if with_weights:
                row.append(_format_weights(spec.weights) if spec.weights is not None else "")
            writer.writerow(row)
    return path


def load_demand(path, net: Network) -> list[AgentSpec]:
    """Read a demand CSV back into validated agent specs."""
    path = Path(path)
    specs: list[AgentSpec] = []
    with path.open(newline="", encoding="utf-8") as handle:
        reader = csv.DictReader(handle)
        fields = tuple(reader.fieldnames or ())
        if fields not in (DEMAND_HEADER, DEMAND_HEADER + ("weights",)):
            raise ValueError(f"{path}: expected header {','.join(DEMAND_HEADER)}[,weights]")
        for line_no, row in enumerate(reader, start=2):
            try:
                agent_id = int(row["id"])
                departure = int(row["departure"])
            except ValueError:
                raise ValueError(f"{path}:{line_no}: id and departure must be integers") from None
            weights = None
            raw_weights = (row.get("weights") or "").strip()
            if raw_weights:
                parts = raw_weights.split(";")
                if len(parts) != 4:
                    raise ValueError(f"{path}:{line_no}: weights needs 4 ';'-separated values")
                weights = tuple(float(p) for p in parts)
            specs.append(
                AgentSpec(
                    agent_id,
                    row["origin"].strip(),
                    row["dest"].strip(),
                    departure,
                    row["kind"].strip() or "human",
                    row["behavior"].strip() or None,
                    weights,
                )
            )
    if not specs:
        raise ValueError(f"{path}: no agent rows found")
    validate_specs(specs, net)
    return specs
