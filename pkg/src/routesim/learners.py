"""Tabular route-choice learners for vehicle agents.

Two update rules over the same table representation: independent Q-learning
(each agent fits its own reward) and value decomposition (all agents fit one
team reward through the sum of their individual values). Episodes are single
decisions, so updates have no bootstrap term; they are plain running averages
toward observed rewards.

Observations are discretized for the tables: each same-O-D route count maps
to one of four occupancy bins (0, 1-2, 3-5, 6+) and is combined with the
agent's departure bucket.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path
from statistics import fmean

from .marlenv import AgentTurn, Observation, Phase, TrafficEnvironment
from .pathgen import RouteSet

LEARNER_KINDS = ("iql", "vdn", "random")

_BIN_EDGES = (0, 2, 5)  # counts 0 | 1-2 | 3-5 | 6+


def _bin_count(count: int) -> int:
    for bin_index, edge in enumerate(_BIN_EDGES):
        if count <= edge:
            return bin_index
    return len(_BIN_EDGES)


def encode(observation: Observation) -> str:
    """Discretize an observation into a hashable, CSV-safe table key."""
    bins = ";".join(str(_bin_count(c)) for c in observation.counts)
    return f"{bins}|{observation.departure_bucket}"


@dataclass
class TrainSchedule:
    """Episode budget and epsilon-greedy exploration plan.

    Epsilon decays linearly from ``eps_start`` to ``eps_end`` across the
    episode budget. ``learn_rate`` must lie in (0, 1]; for the team update
    the effective step on the joint value is ``n_agents * learn_rate``, so
    keep it below ``2 / n_agents`` to avoid oscillation.
    """

    episodes: int
    eps_start: float = 1.0
    eps_end: float = 0.05
    learn_rate: float = 0.1

    def validate(self) -> None:
        if self.episodes < 1:
            raise ValueError(f"episodes must be >= 1, got {self.episodes}")
        if not 0.0 <= self.eps_end <= self.eps_start <= 1.0:
            raise ValueError(
                f"need 0 <= eps_end <= eps_start <= 1, got {self.eps_start}..{self.eps_end}"
            )
        if not 0.0 < self.learn_rate <= 1.0:
            raise ValueError(f"learn_rate must be in (0, 1], got {self.learn_rate}")

    def epsilon(self, episode: int) -> float:
        if self.episodes <= 1:
            return self.eps_end
        progress = min(max(episode / (self.episodes - 1), 0.0), 1.0)
        return self.eps_start + (self.eps_end - self.eps_start) * progress


class QTable:
    """Action values keyed by (observation key, action index).

    Unseen entries default to the negated free-flow time of the action's
    route, so the initial greedy preference is the nominally fastest route.
    """

    def __init__(self, defaults):
        self.defaults = [float(d) for d in defaults]
        if not self.defaults:
            raise ValueError("a QTable needs at least one action")
        self.values: dict[tuple[str, int], float] = {}

    @classmethod
    def for_route_set(cls, routes: RouteSet) -> "QTable":
        return cls([-route.fftime for route in routes])

    @property
    def n_actions(self) -> int:
        return len(self.defaults)

    def get(self, key: str, action: int) -> float:
        return self.values.get((key, action), self.defaults[action])

    def set(self, key: str, action: int, value: float) -> None:
        self.values[(key, action)] = value

    def best_action(self, key: str) -> int:
        best = 0
        best_value = self.get(key, 0)
        for action in range(1, self.n_actions):
            value = self.get(key, action)
            if value > best_value:
                best, best_value = action, value
        return best

    def act(self, key: str, rng) -> int:
        return self.best_action(key)


class RandomPolicy:
    """Uniform-random baseline policy; never updates."""

    def __init__(self, n_actions: int):
        if n_actions < 1:
            raise ValueError("a policy needs at least one action")
        self.n_actions = n_actions

    def act(self, key: str, rng) -> int:
        return int(rng.integers(self.n_actions))


def select_action(q: QTable, key: str, epsilon: float, rng) -> int:
    """Epsilon-greedy choice; argmax ties resolve to the lowest index."""
    if not 0.0 <= epsilon <= 1.0:
        raise ValueError(f"epsilon must be in [0, 1], got {epsilon}")
    if epsilon > 0.0 and float(rng.random()) < epsilon:
        return int(rng.integers(q.n_actions))
    return q.best_action(key)


def iql_update(q: QTable, key: str, action: int, reward: float, learn_rate: float) -> None:
    """Independent running-average update: Q += lr * (reward - Q)."""
    if not 0.0 < learn_rate <= 1.0:
        raise ValueError(f"learn_rate must be in (0, 1], got {learn_rate}")
    value = q.get(key, action)
    q.set(key, action, value + learn_rate * (reward - value))


def vdn_update(tables: dict[int, QTable], taken, team_reward: float, learn_rate: float) -> None:
    """Team update through the summed joint value.

    ``taken`` maps agent id to its (key, action) of this episode; it must
    cover exactly the agents in ``tables``. All individual values move by the
    same delta computed from the pre-update joint value, so identical agents
    receive identical updates.
    """
    if not 0.0 < learn_rate <= 1.0:
        raise ValueError(f"learn_rate must be in (0, 1], got {learn_rate}")
    if set(taken) != set(tables):
        raise ValueError("taken actions and tables must cover the same agents")
    q_total = sum(tables[aid].get(key, action) for aid, (key, action) in taken.items())
    delta = learn_rate * (team_reward - q_total)
    for aid, (key, action) in taken.items():
        tables[aid].set(key, action, tables[aid].get(key, action) + delta)


def train(env: TrafficEnvironment, kind: str, schedule: TrainSchedule):
    """Run the training phase and fit one policy per vehicle agent.

    Parameters
    ----------
    env : TrafficEnvironment
        Must already be in the training phase (mutation done). Humans keep
        following their configured conduct while agents explore.
    kind : str
        ``iql``, ``vdn`` or ``random``. The team update uses the mean of the
        per-agent rewards as the shared team reward, which equals every
        individual reward whenever all vehicle agents share behavior weights
        with no self term.
    schedule : TrainSchedule

    Returns
    -------
    (policies, trace)
        ``policies`` maps agent id to its policy; ``trace`` holds one mean
        vehicle-agent reward per training episode (0.0 when there are none).
    """
    if kind not in LEARNER_KINDS:
        raise ValueError(f"unknown learner {kind!r}; expected one of {LEARNER_KINDS}")
    schedule.validate()
    if env.phase != Phase.TRAINING:
        raise RuntimeError(f"train() requires the training phase, not {env.phase.value}")
    av_ids = env.av_ids()
    if kind == "random":
        policies = {aid: RandomPolicy(len(env.route_set_for(aid))) for aid in av_ids}
    else:
        policies = {aid: QTable.for_route_set(env.route_set_for(aid)) for aid in av_ids}
    trace: list[float] = []
    for episode in range(schedule.episodes):
        epsilon = schedule.epsilon(episode)
        taken: dict[int, tuple[str, int]] = {}
        turn = env.reset()
        while isinstance(turn, AgentTurn):
            agent_id = turn.agent_id
            if env.is_av(agent_id):
                key = encode(turn.observation)
                policy = policies[agent_id]
                if kind == "random":
                    action = policy.act(key, env.exploration_rng(agent_id))
                else:
                    action = select_action(policy, key, epsilon, env.exploration_rng(agent_id))
                taken[agent_id] = (key, action)
                turn = env.step(action)
            else:
                turn = env.step(None)
        rewards = turn.rewards
        if kind == "iql":
            for agent_id, (key, action) in taken.items():
                iql_update(policies[agent_id], key, action, rewards[agent_id], schedule.learn_rate)
        elif kind == "vdn" and taken:
            team_reward = fmean(rewards[aid] for aid in sorted(taken))
            vdn_update(policies, taken, team_reward, schedule.learn_rate)
        trace.append(fmean(rewards.values()) if rewards else 0.0)
    return policies, trace


@dataclass(frozen=True)
class EvalSummary:
    """Aggregate outcome of the testing phase."""

    episodes: int
    mean_tt_human: float | None
    mean_tt_av: float | None
    mean_tt_all: float
    mean_reward_av: float | None
    tt_ratio: float | None
    route_fractions: dict[str, list[float]]


def evaluate(env: TrafficEnvironment, policies, n_episodes: int = 100) -> EvalSummary:
    """Execute learned policies greedily for ``n_episodes`` test days.

    Moves the environment into the testing phase if needed. Vehicle agents
    act greedily (no exploration); humans follow their configured conduct.
    """
    if n_episodes < 1:
        raise ValueError(f"n_episodes must be >= 1, got {n_episodes}")
    if env.phase == Phase.TRAINING:
        env.begin_testing()
    if env.phase != Phase.TESTING:
        raise RuntimeError(f"evaluate() requires the testing phase, not {env.phase.value}")
    if set(policies) != set(env.av_ids()):
        raise ValueError("policies must cover exactly the vehicle agents")
    human_tt: list[float] = []
    av_tt: list[float] = []
    all_tt: list[float] = []
    rewards: list[float] = []
    od_counts: dict[str, list[int]] = {}
    for _ in range(n_episodes):
        turn = env.reset()
        while isinstance(turn, AgentTurn):
            agent_id = turn.agent_id
            if env.is_av(agent_id):
                key = encode(turn.observation)
                action = policies[agent_id].act(key, env.exploration_rng(agent_id))
                turn = env.step(action)
            else:
                turn = env.step(None)
        for agent_id, tt in sorted(turn.travel_times.items()):
            all_tt.append(tt)
            if env.is_av(agent_id):
                av_tt.append(tt)
            else:
                human_tt.append(tt)
        for agent_id, reward in sorted(turn.rewards.items()):
            rewards.append(reward)
        for agent_id, choice in sorted(turn.choices.items()):
            spec = env.spec_of(agent_id)
            od = f"{spec.origin}->{spec.dest}"
            counts = od_counts.setdefault(od, [0] * len(env.route_set_for(agent_id)))
            counts[choice] += 1
    mean_human = fmean(human_tt) if human_tt else None
    mean_av = fmean(av_tt) if av_tt else None
    ratio = None
    if mean_human is not None and mean_av is not None and mean_av != 0:
        ratio = mean_human / mean_av
    fractions = {
        od: [c / sum(counts) for c in counts] for od, counts in sorted(od_counts.items())
    }
    return EvalSummary(
        episodes=n_episodes,
        mean_tt_human=mean_human,
        mean_tt_av=mean_av,
        mean_tt_all=fmean(all_tt),
        mean_reward_av=fmean(rewards) if rewards else None,
        tt_ratio=ratio,
        route_fractions=fractions,
    )


POLICY_HEADER = ("agent", "obs_key", "action", "value")


def save_policies(policies, path) -> Path:
    """Write learned table entries as ``agent,obs_key,action,value`` rows.

    Only explicitly learned entries are stored; defaults are reproducible
    from the route sets. Random policies contribute no rows.
    """
    path = Path(path)
    with path.open("w", newline="", encoding="utf-8") as handle:
        writer = csv.writer(handle)
        writer.writerow(POLICY_HEADER)
        for agent_id in sorted(policies):
            policy = policies[agent_id]
            if not isinstance(policy, QTable):
                continue
            for key, action in sorted(policy.values):
                writer.writerow([agent_id, key, action, repr(policy.values[(key, action)])])
    return path


def load_policies(path, env: TrafficEnvironment) -> dict[int, QTable]:
    """Rebuild greedy-ready QTables for the environment's vehicle agents."""
    path = Path(path)
    policies = {aid: QTable.for_route_set(env.route_set_for(aid)) for aid in env.av_ids()}
    with path.open(newline="", encoding="utf-8") as handle:
        reader = csv.DictReader(handle)
        if tuple(reader.fieldnames or ()) != POLICY_HEADER:
            raise ValueError(f"{path}: expected header {','.join(POLICY_HEADER)!r}")
        for row in reader:
            agent_id = int(row["agent"])
            if agent_id not in policies:
                raise ValueError(f"{path}: policy row for unknown vehicle agent {agent_id}")
            policies[agent_id].set(row["obs_key"], int(row["action"]), float(row["value"]))
    return policies
