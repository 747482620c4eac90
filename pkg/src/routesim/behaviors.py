"""Vehicle agent objectives expressed as weights over group travel times.

A reward is a linear combination of four travel-time statistics measured at
the end of an episode: the agent's own time, the mean over the vehicle agent
group (including the agent), the mean over the human group, and the mean over
everyone. Negative weights mean "minimize", positive weights mean "maximize".
"""
from __future__ import annotations

from dataclasses import dataclass


@dataclass(frozen=True)
class BehaviorWeights:
    w_own: float
    w_group: float
    w_other: float
    w_all: float


@dataclass(frozen=True)
class GroupStats:
    """Episode travel-time statistics from one agent's point of view.

    An empty comparison group (for example no human drivers left) is
    reported as 0 so rewards stay finite.
    """

    t_own: float
    t_group: float
    t_other: float
    t_all: float


PRESETS: dict[str, BehaviorWeights] = {
    "selfish": BehaviorWeights(-1.0, 0.0, 0.0, 0.0),
    "altruistic": BehaviorWeights(0.0, 0.0, 0.0, -1.0),
    "collaborative": BehaviorWeights(-0.5, -0.5, 0.0, 0.0),
    "competitive": BehaviorWeights(-0.5, 0.0, 0.5, 0.0),
    "malicious": BehaviorWeights(0.0, 0.0, 1.0, 0.0),
    "social": BehaviorWeights(-0.5, 0.0, 0.0, -0.5),
}

BEHAVIOR_NAMES = tuple(sorted(PRESETS))


def preset(name: str) -> BehaviorWeights:
    """Look up a named behavior preset; unknown names raise ValueError."""
    try:
        return PRESETS[name]
    except KeyError:
        raise ValueError(
            f"unknown behavior {name!r}; expected one of {', '.join(BEHAVIOR_NAMES)}"
        ) from None


def compute_reward(weights: BehaviorWeights, stats: GroupStats) -> float:
    return (
        weights.w_own * stats.t_own
        + weights.w_group * stats.t_group
        + weights.w_other * stats.t_other
        + weights.w_all * stats.t_all
    )
