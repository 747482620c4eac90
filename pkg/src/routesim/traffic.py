"""Within-day traffic models: static BPR delays and a point-queue link model.

Both models take a complete route assignment for one day and return per-agent
travel times plus per-edge flow counts. The BPR variant is a static volume
delay function that ignores departure times; the point-queue variant is an
event-driven FIFO simulation where capacity limits the edge exit rate.
"""
from __future__ import annotations

import heapq
import math
from dataclasses import dataclass, field

from .netgraph import Network
from .pathgen import Route


@dataclass(frozen=True)
class BprModel:
    """Volume delay t = t0 * (1 + alpha * (x / capacity) ** beta).

    Edge flow counts are converted to hourly rates before applying the
    formula: x = count * 3600 / W with W the departure-window length in
    seconds (at least 1 s), so capacities keep their vehicles-per-hour units
    even for short demand windows.
    """

    alpha: float = 0.15
    beta: float = 4.0

    def __post_init__(self):
        if self.alpha < 0:
            raise ValueError(f"alpha must be >= 0, got {self.alpha}")
        if self.beta < 1:
            raise ValueError(f"beta must be >= 1, got {self.beta}")


@dataclass(frozen=True)
class PointQueueModel:
    """Point queue: a vehicle entering edge e at time T exits at
    max(T + t0_e, last_exit_e + 3600 / capacity_e), FIFO per edge."""


TrafficModel = BprModel | PointQueueModel


@dataclass
class Assignment:
    """Chosen route and departure second per agent id for one day.

    ``window_s`` is the demand departure-window length used by the BPR
    hourly flow scaling; when omitted it is derived from the departure
    spread (minimum 1 s).
    """

    choices: dict[int, tuple[Route, int]] = field(default_factory=dict)
    window_s: float | None = None


@dataclass
class EpisodeResult:
    """Outcome of one simulated day.

    travel_times : seconds per agent id
    flows : vehicles per edge id (raw counts over the whole day)
    arrivals : arrival second per agent id; point-queue model only
    """

    travel_times: dict[int, float]
    flows: dict[str, int]
    arrivals: dict[int, float] = field(default_factory=dict)


def _count_flows(net: Network, asg: Assignment) -> dict[str, int]:
    flows = {eid: 0 for eid in sorted(net.edges)}
    for route, _departure in asg.choices.values():
        for eid in route.edges:
            flows[eid] += 1
    return flows


def _effective_window(asg: Assignment) -> float:
    if asg.window_s is not None:
        window = float(asg.window_s)
    else:
        departures = [departure for _route, departure in asg.choices.values()]
        window = float(max(departures) - min(departures)) if departures else 0.0
    return max(1.0, window)


def _simulate_bpr(net: Network, model: BprModel, asg: Assignment) -> EpisodeResult:
    flows = _count_flows(net, asg)
    window = _effective_window(asg)
    edge_time = {}
    for eid, count in flows.items():
        edge = net.edges[eid]
        hourly = count * 3600.0 / window
        edge_time[eid] = edge.fftime * (1.0 + model.alpha * (hourly / edge.capacity) ** model.beta)
    travel_times = {
        agent_id: sum(edge_time[eid] for eid in route.edges)
        for agent_id, (route, _dep) in asg.choices.items()
    }
    arrivals = {
        agent_id: dep + travel_times[agent_id]
        for agent_id, (_route, dep) in asg.choices.items()
    }
    return EpisodeResult(travel_times=travel_times, flows=flows, arrivals=arrivals)


def _simulate_pointqueue(net: Network, asg: Assignment) -> EpisodeResult:
    flows = _count_flows(net, asg)
    # Events are (time, departure, agent id, leg index); the departure/id
    # fields serialize simultaneous entries deterministically, matching the
    # agent cycle order of the environment.
    events: list[tuple[float, int, int, int]] = []
    for agent_id, (route, departure) in asg.choices.items():
        heapq.heappush(events, (float(departure), departure, agent_id, 0))
    last_exit: dict[str, float] = {eid: -math.inf for eid in net.edges}
    arrivals: dict[int, float] = {}
    while events:
        time, departure, agent_id, leg = heapq.heappop(events)
        route = asg.choices[agent_id][0]
        edge = net.edges[route.edges[leg]]
        headway = 3600.0 / edge.capacity
        exit_time = max(time + edge.fftime, last_exit[edge.id] + headway)
        last_exit[edge.id] = exit_time
        if leg + 1 < len(route.edges):
            heapq.heappush(events, (exit_time, departure, agent_id, leg + 1))
        else:
            arrivals[agent_id] = exit_time
    travel_times = {
        agent_id: arrivals[agent_id] - departure
        for agent_id, (_route, departure) in asg.choices.items()
    }
    return EpisodeResult(travel_times=travel_times, flows=flows, arrivals=arrivals)


def simulate(net: Network, model: TrafficModel, asg: Assignment) -> EpisodeResult:
    """Run one day of traffic for a complete assignment.

    Every agent must have a nonnegative departure and a route that exists in
    the network. Identical inputs produce identical results; there is no
    randomness in either traffic model.
    """
    for agent_id, (route, departure) in asg.choices.items():
        if departure < 0:
            raise ValueError(f"agent {agent_id}: departure must be >= 0")
        for eid in route.edges:
            if eid not in net.edges:
                raise ValueError(f"agent {agent_id}: route uses unknown edge {eid!r}")
    if isinstance(model, BprModel):
        return _simulate_bpr(net, model, asg)
    if isinstance(model, PointQueueModel):
        return _simulate_pointqueue(net, asg)
    raise TypeError(f"unsupported traffic model {model!r}")
