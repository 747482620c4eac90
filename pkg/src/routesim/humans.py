"""Human driver behavior: route cost beliefs, logit choice, day-to-day learning.

Each human driver keeps one perceived cost per route in its route set.
Choices are sampled from a multinomial logit over the negated, scaled costs;
after traveling, the belief of the chosen route is revised from the observed
travel time according to one of three classic day-to-day adjustment rules.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .pathgen import RouteSet

MODELS = ("culo", "gawron", "weighted_average")


@dataclass
class HumanModelParams:
    """Parameters of the human learning and choice model.

    model : one of ``culo``, ``gawron``, ``weighted_average``
    learn_rate : weight of new experience, in (0, 1]
    logit_scale : choice sensitivity in 1/seconds, >= 0 (0 gives uniform choice)
    discount : old-cost multiplier of the culo rule, in (0, 1]
    time_mult : personal scaling of perceived times, > 0
    """

    model: str = "weighted_average"
    learn_rate: float = 0.2
    logit_scale: float = 0.1
    discount: float = 0.99
    time_mult: float = 1.0

    def validate(self) -> None:
        if self.model not in MODELS:
            raise ValueError(f"unknown human model {self.model!r}; expected one of {MODELS}")
        if not 0.0 < self.learn_rate <= 1.0:
            raise ValueError(f"learn_rate must be in (0, 1], got {self.learn_rate}")
        if self.logit_scale < 0.0:
            raise ValueError(f"logit_scale must be >= 0, got {self.logit_scale}")
        if not 0.0 < self.discount <= 1.0:
            raise ValueError(f"discount must be in (0, 1], got {self.discount}")
        if not self.time_mult > 0.0:
            raise ValueError(f"time_mult must be > 0, got {self.time_mult}")


@dataclass
class CostBeliefs:
    """Perceived cost and experience count per route index."""

    costs: list[float]
    counts: list[int] = field(default_factory=list)

    def __post_init__(self):
        if not self.counts:
            self.counts = [0] * len(self.costs)
        if len(self.counts) != len(self.costs):
            raise ValueError("costs and counts must have equal length")


def init_beliefs(routes: RouteSet) -> CostBeliefs:
    """Fresh beliefs: free-flow times as costs, all experience counts zero."""
    if len(routes) == 0:
        raise ValueError(f"route set {routes.origin}->{routes.dest} is empty")
    return CostBeliefs(costs=[route.fftime for route in routes])


def choice_probabilities(beliefs: CostBeliefs, params: HumanModelParams) -> list[float]:
    """Multinomial logit probabilities over the route set.

    P(r) is proportional to exp(-logit_scale * time_mult * cost_r), computed
    with the usual max-shift for numerical stability. A zero logit_scale
    yields the uniform distribution.
    """
    params.validate()
    scale = params.logit_scale * params.time_mult
    utilities = [-scale * c for c in beliefs.costs]
    top = max(utilities)
    weights = [math.exp(u - top) for u in utilities]
    total = sum(weights)
    return [w / total for w in weights]


def choose_route(beliefs: CostBeliefs, params: HumanModelParams, rng: np.random.Generator) -> int:
    """Sample a route index from the logit choice distribution."""
    probs = choice_probabilities(beliefs, params)
    draw = float(rng.random())
    acc = 0.0
    for index, p in enumerate(probs):
        acc += p
        if draw < acc:
            return index
    return len(probs) - 1


def update_beliefs(
    beliefs: CostBeliefs, chosen: int, observed: float, params: HumanModelParams
) -> CostBeliefs:
    """Apply one day-to-day learning step and return the new beliefs.

    weighted_average
        ``C_chosen <- (1 - lr) * C_chosen + lr * observed``
    gawron
        The chosen route updates like weighted_average with ``lr``; every
        other route is then pulled toward the updated chosen cost with
        ``lr / 2``, modeling belief diffusion between alternatives.
    culo
        ``C_chosen <- discount * C_chosen + observed``; costs accumulate,
        which progressively hardens the logit choice.

    Unchosen routes keep their cost exactly under weighted_average and culo.
    The chosen route's experience count increments by one.
    """
    params.validate()
    if not 0 <= chosen < len(beliefs.costs):
        raise ValueError(f"chosen index {chosen} out of range")
    if not (math.isfinite(observed) and observed >= 0.0):
        raise ValueError(f"observed travel time must be finite and >= 0, got {observed}")
    lr = params.learn_rate
    costs = list(beliefs.costs)
    if params.model == "weighted_average":
        costs[chosen] = (1.0 - lr) * costs[chosen] + lr * observed
    elif params.model == "gawron":
        updated = (1.0 - lr) * costs[chosen] + lr * observed
        half = lr / 2.0
        for index in range(len(costs)):
            if index != chosen:
                costs[index] = (1.0 - half) * costs[index] + half * updated
        costs[chosen] = updated
    else:  # culo
        costs[chosen] = params.discount * costs[chosen] + observed
    counts = list(beliefs.counts)
    counts[chosen] += 1
    return CostBeliefs(costs=costs, counts=counts)


BELIEFS_HEADER = ("episode", "id", "route_index", "cost", "count")


def write_beliefs_csv(path, episode: int, beliefs_by_agent: dict[int, CostBeliefs]) -> Path:
    """Snapshot belief states as ``episode,id,route_index,cost,count`` rows."""
    path = Path(path)
    with path.open("w", newline="", encoding="utf-8") as handle:
        writer = csv.writer(handle)
        writer.writerow(BELIEFS_HEADER)
        for agent_id in sorted(beliefs_by_agent):
            beliefs = beliefs_by_agent[agent_id]
            for index, (cost, count) in enumerate(zip(beliefs.costs, beliefs.counts)):
                writer.writerow([episode, agent_id, index, repr(cost), count])
    return path

