"""routesim: day-to-day urban route choice with learning vehicle agents.

A population of drivers repeatedly commutes over a road network. Human
drivers pick routes by multinomial logit over learned cost beliefs and
adjust those beliefs day by day. Part of the population can mutate into
vehicle agents that instead learn tabular policies (independent Q-learning
or value decomposition over a team reward) against configurable objectives,
from selfish to malicious. Congestion comes from an internal traffic model,
either a static volume-delay function or an event-driven point queue.
"""
from .behaviors import BEHAVIOR_NAMES, BehaviorWeights, GroupStats, compute_reward, preset
from .demand import AgentSpec, DemandConfig, generate_demand, load_demand, write_demand_csv
from .humans import (
    CostBeliefs,
    HumanModelParams,
    choice_probabilities,
    choose_route,
    init_beliefs,
    update_beliefs,
)
from .learners import (
    EvalSummary,
    QTable,
    RandomPolicy,
    TrainSchedule,
    evaluate,
    iql_update,
    load_policies,
    save_policies,
    select_action,
    train,
    vdn_update,
)
from .marlenv import (
    AgentTurn,
    EnvConfig,
    EpisodeEnd,
    MutationSpec,
    Observation,
    Phase,
    RouteGenParams,
    TrafficEnvironment,
    child_seed,
    run_human_episode,
)
from .netgraph import Edge, Network, NetworkFormatError, Node, UnreachableError, load_network, shortest_path
from .pathgen import Route, RouteSet, generate_routes, read_routes_csv, write_routes_csv
from .recorder import KpiSummary, Recorder, render_charts, write_kpis_json
from .traffic import Assignment, BprModel, EpisodeResult, PointQueueModel, simulate

__version__ = "0.1.0"

__all__ = [
    "AgentSpec",
    "AgentTurn",
    "Assignment",
    "BEHAVIOR_NAMES",
    "BehaviorWeights",
    "BprModel",
    "CostBeliefs",
    "DemandConfig",
    "Edge",
    "EnvConfig",
    "EpisodeEnd",
    "EpisodeResult",
    "EvalSummary",
    "GroupStats",
    "HumanModelParams",
    "KpiSummary",
    "MutationSpec",
    "Network",
    "NetworkFormatError",
    "Node",
    "Observation",
    "Phase",
    "PointQueueModel",
    "QTable",
    "RandomPolicy",
    "Recorder",
    "Route",
    "RouteGenParams",
    "RouteSet",
    "TrafficEnvironment",
    "TrainSchedule",
    "UnreachableError",
    "child_seed",
    "choice_probabilities",
    "choose_route",
    "compute_reward",
    "evaluate",
    "generate_demand",
    "generate_routes",
    "init_beliefs",
    "iql_update",
    "load_demand",
    "load_network",
    "load_policies",
    "preset",
    "read_routes_csv",
    "render_charts",
    "run_human_episode",
    "save_policies",
    "select_action",
    "shortest_path",
    "simulate",
    "train",
    "update_beliefs",
    "vdn_update",
    "write_demand_csv",
    "write_kpis_json",
    "write_routes_csv",
]
