"""Sequential day-to-day route choice environment.

Every episode is one day. Agents act once per day in departure order (ties
broken by id): each picks a route index from its O-D route set, optionally
observing how many earlier-departing agents with the same O-D pair chose
each route. When the last agent has acted the day is simulated with the
configured traffic model, human drivers revise their cost beliefs, and every
vehicle agent receives a reward from its behavior weights.

A run moves through three phases:

1. ``human_only``: the whole population consists of human drivers that learn
   day by day until their choices stabilize.
2. ``training``: :meth:`TrafficEnvironment.mutation` converts part of the
   population into vehicle agents (same id, O-D pair and departure time);
   learners now drive their actions.
3. ``testing``: policies are executed greedily and KPIs are collected.

A single master seed determines every stochastic stream (demand, per-agent
choices, mutation, exploration), so identical configurations reproduce runs
bit for bit.
"""
from __future__ import annotations

import hashlib
from dataclasses import dataclass, field, replace
from enum import Enum
from pathlib import Path
from statistics import fmean

import numpy as np

from .behaviors import BehaviorWeights, GroupStats, compute_reward, preset
from .demand import AgentSpec, DemandConfig, generate_demand, load_demand, validate_specs
from .humans import CostBeliefs, HumanModelParams, choose_route, init_beliefs, update_beliefs
from .netgraph import Network, load_network
from .pathgen import RouteSet, generate_routes
from .recorder import EpisodeRow, Recorder
from .traffic import Assignment, BprModel, EpisodeResult, PointQueueModel, simulate

POST_MUTATION_MODES = ("stochastic", "adaptive", "frozen")


def child_seed(master: int, label: str) -> int:
    """Derive a stable 64-bit seed for one named consumer of randomness.

    Uses SHA-256 of ``"master:label"`` so streams are independent of each
    other and reproducible across platforms and Python processes.
    """
    digest = hashlib.sha256(f"{master}:{label}".encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "big")


class Phase(str, Enum):
    HUMAN_ONLY = "human_only"
    TRAINING = "training"
    TESTING = "testing"


@dataclass
class RouteGenParams:
    k: int = 3
    penalty: float = 1.3
    max_detour: float = 2.0


@dataclass
class MutationSpec:
    """Which agents become vehicle agents and what they want.

    Either a population ``share`` in [0, 1] (selected uniformly at random
    under the master seed) or an explicit ``agent_ids`` list.
    """

    share: float = 0.0
    agent_ids: list[int] | None = None
    behavior: str = "selfish"


@dataclass
class EnvConfig:
    """File-based environment description used by the CLI runner."""

    network: str | Path
    demand: DemandConfig | str | Path
    routes: RouteGenParams = field(default_factory=RouteGenParams)
    model: BprModel | PointQueueModel = field(default_factory=BprModel)
    human: HumanModelParams = field(default_factory=HumanModelParams)
    human_episodes: int = 100
    mutation: MutationSpec = field(default_factory=MutationSpec)
    post_mutation_humans: str = "stochastic"
    time_mult_range: tuple[float, float] | None = None
    seed: int = 0


@dataclass(frozen=True)
class Observation:
    """What the acting agent sees before choosing.

    counts : per route index, how many earlier-departing agents sharing the
        same O-D pair already picked that route today
    departure_bucket : the agent's departure time in 600 s bins
    """

    counts: tuple[int, ...]
    departure_bucket: int


@dataclass(frozen=True)
class AgentTurn:
    agent_id: int
    observation: Observation


@dataclass(frozen=True)
class EpisodeEnd:
    """Closing record of a day: rewards exist only for vehicle agents."""

    day: int
    phase: str
    rewards: dict[int, float]
    travel_times: dict[int, float]
    choices: dict[int, int]
    result: EpisodeResult


@dataclass
class _AgentState:
    spec: AgentSpec
    params: HumanModelParams
    beliefs: CostBeliefs
    choice_rng: np.random.Generator
    explore_rng: np.random.Generator
    last_choice: int | None = None


class TrafficEnvironment:
    """Sequential multi-agent environment over one road network.

    Parameters
    ----------
    net : Network
    agents : sequence of AgentSpec
        The population. Ids must be unique; O-D pairs must be reachable.
    route_params : RouteGenParams
        Controls route set generation per distinct O-D pair.
    model : BprModel or PointQueueModel
        Within-day traffic model.
    human : HumanModelParams
        Default human learning model; per-agent overrides win.
    mutation : MutationSpec
        Who mutates into vehicle agents and with which behavior.
    post_mutation_humans : str
        Human conduct after mutation: ``stochastic`` keeps sampling from
        frozen beliefs, ``adaptive`` keeps learning as well, ``frozen``
        repeats the last chosen route deterministically.
    window_s : float, optional
        Departure-window length used by the BPR hourly scaling; derived
        from the departure spread when omitted.
    seed : int
        Master seed for all stochastic streams.
    recorder : Recorder, optional
        Episode sink; a fresh one is created when omitted.
    """

    def __init__(
        self,
        net: Network,
        agents,
        *,
        route_params: RouteGenParams | None = None,
        model: BprModel | PointQueueModel | None = None,
        human: HumanModelParams | None = None,
        mutation: MutationSpec | None = None,
        post_mutation_humans: str = "stochastic",
        time_mult_range: tuple[float, float] | None = None,
        window_s: float | None = None,
        seed: int = 0,
        recorder: Recorder | None = None,
    ):
        agents = [spec for spec in agents]
        if not agents:
            raise ValueError("the population must contain at least one agent")
        validate_specs(agents, net)
        self.net = net
        self.route_params = route_params or RouteGenParams()
        self.model = model if model is not None else BprModel()
        base_human = human if human is not None else HumanModelParams()
        base_human.validate()
        self.mutation_spec = mutation or MutationSpec()
        preset(self.mutation_spec.behavior)
        if post_mutation_humans not in POST_MUTATION_MODES:
            raise ValueError(
                f"post_mutation_humans must be one of {POST_MUTATION_MODES},"
                f" got {post_mutation_humans!r}"
            )
        self.post_mutation_humans = post_mutation_humans
        self.window_s = window_s
        self.seed = seed
        self.recorder = recorder if recorder is not None else Recorder()

        self._route_sets: dict[tuple[str, str], RouteSet] = {}
        for od in sorted({(spec.origin, spec.dest) for spec in agents}):
            self._route_sets[od] = generate_routes(
                net,
                od[0],
                od[1],
                k=self.route_params.k,
                penalty=self.route_params.penalty,
                max_detour=self.route_params.max_detour,
            )

        tm_rng = None
        if time_mult_range is not None:
            lo, hi = time_mult_range
            if not (0 < lo <= hi):
                raise ValueError(f"time_mult_range must satisfy 0 < lo <= hi, got {time_mult_range}")
            tm_rng = np.random.default_rng(child_seed(seed, "time_mult"))
        self._states: dict[int, _AgentState] = {}
        for spec in sorted(agents, key=lambda s: s.id):
            if spec.model_params is not None:
                params = replace(spec.model_params)
            else:
                params = replace(base_human)
                if tm_rng is not None:
                    params.time_mult = float(tm_rng.uniform(lo, hi))
            params.validate()
            self._states[spec.id] = _AgentState(
                spec=spec,
                params=params,
                beliefs=init_beliefs(self._route_sets[(spec.origin, spec.dest)]),
                choice_rng=np.random.default_rng(child_seed(seed, f"agent:{spec.id}:choice")),
                explore_rng=np.random.default_rng(child_seed(seed, f"agent:{spec.id}:explore")),
            )
        self._mutation_rng = np.random.default_rng(child_seed(seed, "mutation"))
        self._cycle = sorted(self._states, key=lambda aid: (self._states[aid].spec.departure, aid))
        self.day = 0
        self.phase = Phase.HUMAN_ONLY
        self._mutated = False
        self._pending: dict[int, int] = {}
        self._position = 0
        self._awaiting_reset = True

    @classmethod
    def from_config(cls, cfg: EnvConfig, recorder: Recorder | None = None) -> "TrafficEnvironment":
        """Build an environment by loading the files referenced by ``cfg``."""
        net = load_network(cfg.network)
        if isinstance(cfg.demand, DemandConfig):
            agents = generate_demand(net, cfg.demand)
            start, end = cfg.demand.departure_window
            window_s = float(end - start)
        else:
            agents = load_demand(cfg.demand, net)
            window_s = None
        return cls(
            net,
            agents,
            route_params=cfg.routes,
            model=cfg.model,
            human=cfg.human,
            mutation=cfg.mutation,
            post_mutation_humans=cfg.post_mutation_humans,
            time_mult_range=cfg.time_mult_range,
            window_s=window_s,
            seed=cfg.seed,
            recorder=recorder,
        )

    # population views -------------------------------------------------

    @property
    def agent_ids(self) -> list[int]:
        return sorted(self._states)

    def spec_of(self, agent_id: int) -> AgentSpec:
        return self._states[agent_id].spec

    def beliefs_of(self, agent_id: int) -> CostBeliefs:
        return self._states[agent_id].beliefs

    def is_av(self, agent_id: int) -> bool:
        return self._states[agent_id].spec.kind == "av"

    def av_ids(self) -> list[int]:
        return sorted(aid for aid in self._states if self.is_av(aid))

    def human_ids(self) -> list[int]:
        return sorted(aid for aid in self._states if not self.is_av(aid))

    def route_set_for(self, agent_id: int) -> RouteSet:
        spec = self._states[agent_id].spec
        return self._route_sets[(spec.origin, spec.dest)]

    def exploration_rng(self, agent_id: int) -> np.random.Generator:
        return self._states[agent_id].explore_rng

    # episode cycle ----------------------------------------------------

    def reset(self) -> AgentTurn:
        """Start a new day and hand the first agent its observation."""
        self.day += 1
        self._pending = {}
        self._position = 0
        self._awaiting_reset = False
        first = self._cycle[0]
        return AgentTurn(first, self._observe(first))

    def step(self, action: int | None = None) -> AgentTurn | EpisodeEnd:
        """Commit the acting agent's route choice and advance the cycle.

        ``action`` may be None, in which case the agent picks behaviorally
        from its cost beliefs (the standard way to drive human drivers).
        Passing an explicit index overrides the behavioral choice, which is
        how learners control vehicle agents. Returns the next agent's turn,
        or an :class:`EpisodeEnd` after the last agent has acted.
        """
        if self._awaiting_reset:
            raise RuntimeError("no episode in progress; call reset() first")
        agent_id = self._cycle[self._position]
        state = self._states[agent_id]
        routes = self._route_sets[(state.spec.origin, state.spec.dest)]
        if action is None:
            action = self._behavioral_choice(state)
        action = int(action)
        if not 0 <= action < len(routes):
            raise ValueError(
                f"action {action} out of range for agent {agent_id}"
                f" with {len(routes)} routes"
            )
        self._pending[agent_id] = action
        self._position += 1
        if self._position < len(self._cycle):
            nxt = self._cycle[self._position]
            return AgentTurn(nxt, self._observe(nxt))
        return self._finish_episode()

    def _observe(self, agent_id: int) -> Observation:
        spec = self._states[agent_id].spec
        routes = self._route_sets[(spec.origin, spec.dest)]
        counts = [0] * len(routes)
        for other_id, choice in self._pending.items():
            other = self._states[other_id].spec
            if (other.origin, other.dest) == (spec.origin, spec.dest):
                counts[choice] += 1
        return Observation(tuple(counts), spec.departure // 600)

    def _behavioral_choice(self, state: _AgentState) -> int:
        if (
            self.phase != Phase.HUMAN_ONLY
            and state.spec.kind == "human"
            and self.post_mutation_humans == "frozen"
            and state.last_choice is not None
        ):
            return state.last_choice
        return choose_route(state.beliefs, state.params, state.choice_rng)

    def _humans_learn_now(self) -> bool:
        if self.phase == Phase.HUMAN_ONLY:
            return True
        return self.post_mutation_humans == "adaptive"

    def _weights_for(self, spec: AgentSpec) -> BehaviorWeights:
        if spec.weights is not None:
            return BehaviorWeights(*spec.weights)
        return preset(spec.behavior)

    def _finish_episode(self) -> EpisodeEnd:
        choices = {}
        for agent_id in self._cycle:
            spec = self._states[agent_id].spec
            route = self._route_sets[(spec.origin, spec.dest)][self._pending[agent_id]]
            choices[agent_id] = (route, spec.departure)
        result = simulate(self.net, self.model, Assignment(choices, self.window_s))
        times = result.travel_times
        av_times = [times[aid] for aid in self._cycle if self.is_av(aid)]
        human_times = [times[aid] for aid in self._cycle if not self.is_av(aid)]
        t_group = fmean(av_times) if av_times else 0.0
        t_other = fmean(human_times) if human_times else 0.0
        t_all = fmean([times[aid] for aid in self._cycle])
        rewards: dict[int, float] = {}
        for agent_id in self._cycle:
            state = self._states[agent_id]
            if state.spec.kind == "av":
                stats = GroupStats(times[agent_id], t_group, t_other, t_all)
                rewards[agent_id] = compute_reward(self._weights_for(state.spec), stats)
        learn = self._humans_learn_now()
        for agent_id in self._cycle:
            state = self._states[agent_id]
            if learn and state.spec.kind == "human":
                state.beliefs = update_beliefs(
                    state.beliefs, self._pending[agent_id], times[agent_id], state.params
                )
            state.last_choice = self._pending[agent_id]
        rows = [
            EpisodeRow(
                episode=self.day,
                phase=self.phase.value,
                agent_id=aid,
                kind=self._states[aid].spec.kind,
                origin=self._states[aid].spec.origin,
                dest=self._states[aid].spec.dest,
                route_index=self._pending[aid],
                departure=self._states[aid].spec.departure,
                travel_time=times[aid],
                reward=rewards.get(aid),
            )
            for aid in sorted(self._states)
        ]
        flow_rows = [(self.day, eid, result.flows[eid]) for eid in sorted(result.flows)]
        self.recorder.record(rows, flow_rows)
        self._awaiting_reset = True
        return EpisodeEnd(
            self.day, self.phase.value, rewards, dict(times), dict(self._pending), result
        )

    # phase control ----------------------------------------------------

    def mutation(self) -> list[int]:
        """Convert part of the human population into vehicle agents.

        Selected agents keep their id, O-D pair and departure time; only the
        kind and behavior change. May run exactly once, between episodes,
        while still in the human_only phase. Advances the phase to training
        even when nothing mutates (share 0). Returns the sorted mutated ids.
        """
        if self._mutated:
            raise RuntimeError("mutation() may only run once")
        if self.phase != Phase.HUMAN_ONLY:
            raise RuntimeError(f"mutation() requires the human_only phase, not {self.phase.value}")
        if not self._awaiting_reset and self._pending:
            raise RuntimeError("cannot mutate in the middle of an episode")
        humans = self.human_ids()
        if self.mutation_spec.agent_ids is not None:
            selected = sorted(set(int(a) for a in self.mutation_spec.agent_ids))
            for agent_id in selected:
                if agent_id not in self._states:
                    raise ValueError(f"cannot mutate unknown agent {agent_id}")
                if self.is_av(agent_id):
                    raise ValueError(f"agent {agent_id} is already a vehicle agent")
        else:
            share = self.mutation_spec.share
            if not 0.0 <= share <= 1.0:
                raise ValueError(f"mutation share must be in [0, 1], got {share}")
            count = int(share * len(humans) + 0.5)
            order = self._mutation_rng.permutation(len(humans))
            selected = sorted(humans[int(i)] for i in order[:count])
        for agent_id in selected:
            spec = self._states[agent_id].spec
            spec.kind = "av"
            spec.behavior = self.mutation_spec.behavior
        self._mutated = True
        self.phase = Phase.TRAINING
        return selected

    def begin_testing(self) -> None:
        """Lock in the testing phase; only valid after training has begun."""
        if self.phase != Phase.TRAINING:
            raise RuntimeError(f"begin_testing() requires the training phase, not {self.phase.value}")
        self.phase = Phase.TESTING


def run_human_episode(env: TrafficEnvironment) -> EpisodeEnd:
    """Play one full day with every agent choosing behaviorally."""
    turn = env.reset()
    while isinstance(turn, AgentTurn):
        turn = env.step(None)
    return turn
