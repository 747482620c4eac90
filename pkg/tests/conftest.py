"""Shared fixtures and independent oracle helpers.

The oracle functions recompute the quantities under test from first
principles, by exhaustive enumeration or direct formula evaluation,
without calling into the package's own algorithms. Tests compare the
package against these so that a bug cannot cancel itself out.
"""

from __future__ import annotations

import math

import pytest

from routesim import Edge, Network, Node
from routesim.networks import bundled_path
from routesim.netgraph import load_network

# Upper critical values of the chi-square distribution at p = 0.001,
# keyed by degrees of freedom (standard table values).
CHI2_CRIT_P001 = {
    1: 10.828,
    2: 13.816,
    3: 16.266,
    4: 18.467,
    5: 20.515,
    9: 27.877,
    11: 31.264,
    19: 43.820,
}


def enumerate_simple_paths(net: Network, origin: str, dest: str):
    """Every simple path from origin to dest as a tuple of edge ids.

    Plain depth-first search with an explicit visited set. Only usable
    on small networks; the tests keep node counts at or below 12.
    """
    paths: list[tuple[str, ...]] = []

    def walk(node: str, visited: set[str], acc: list[str]) -> None:
        if node == dest:
            paths.append(tuple(acc))
            return
        for edge in net.out_edges[node]:
            if edge.to in visited:
                continue
            visited.add(edge.to)
            acc.append(edge.id)
            walk(edge.to, visited, acc)
            acc.pop()
            visited.remove(edge.to)

    walk(origin, {origin}, [])
    return paths


def path_cost(net: Network, edges, weights=None) -> float:
    """Sum of per-edge weights along a path; free-flow time by default."""
    total = 0.0
    for eid in edges:
        edge = net.edges[eid]
        total += edge.length / edge.speed if weights is None else weights[eid]
    return total


def min_cost_paths(net: Network, origin: str, dest: str, weights=None):
    """All minimum-cost simple paths by brute-force enumeration."""
    paths = enumerate_simple_paths(net, origin, dest)
    if not paths:
        return []
    best = min(path_cost(net, p, weights) for p in paths)
    return [p for p in paths if path_cost(net, p, weights) <= best + 1e-12]


def oracle_bpr_edge_time(edge: Edge, count: int, window_s: float,
                         alpha: float = 0.15, beta: float = 4.0) -> float:
    """Volume-delay time of one edge, straight from the formula."""
    window = max(float(window_s), 1.0)
    hourly = count * 3600.0 / window
    t0 = edge.length / edge.speed
    return t0 * (1.0 + alpha * (hourly / edge.capacity) ** beta)


def oracle_route_time(net: Network, edges, flows, window_s: float,
                      alpha: float = 0.15, beta: float = 4.0) -> float:
    """Route travel time under given edge counts, recomputed edge by edge."""
    return sum(
        oracle_bpr_edge_time(net.edges[eid], flows.get(eid, 0), window_s, alpha, beta)
        for eid in edges
    )


def oracle_two_route_ue(net: Network, route_a, route_b, n_agents: int,
                        window_s: float, alpha: float = 0.15,
                        beta: float = 4.0) -> int:
    """Equilibrium count on route_a by enumerating every integer split.

    Tries all n_agents + 1 ways to divide the population between the two
    routes and returns the count on route_a that minimises the absolute
    travel-time gap, the discrete user-equilibrium point.
    """
    best_n, best_gap = 0, math.inf
    for n_a in range(n_agents + 1):
        flows: dict[str, int] = {}
        for eid in route_a:
            flows[eid] = flows.get(eid, 0) + n_a
        for eid in route_b:
            flows[eid] = flows.get(eid, 0) + (n_agents - n_a)
        t_a = oracle_route_time(net, route_a, flows, window_s, alpha, beta)
        t_b = oracle_route_time(net, route_b, flows, window_s, alpha, beta)
        gap = abs(t_a - t_b)
        if gap < best_gap:
            best_n, best_gap = n_a, gap
    return best_n


def chi2_stat(observed, expected) -> float:
    """Pearson chi-square statistic for observed vs expected counts."""
    return sum((o - e) ** 2 / e for o, e in zip(observed, expected))


def build_network(edge_rows, extra_nodes=()):
    """Network from (id, frm, to, length, speed, capacity) rows."""
    node_ids = set(extra_nodes)
    for row in edge_rows:
        node_ids.add(row[1])
        node_ids.add(row[2])
    nodes = [Node(nid) for nid in sorted(node_ids)]
    edges = [Edge(*row) for row in edge_rows]
    return Network(nodes, edges)


def diamond_net() -> Network:
    """Four-node diamond: two disjoint two-edge routes from O to D.

    Top route O-A-D takes 100 s free flow, bottom route O-B-D takes
    120 s. Capacities of 600 veh/h make x/c equal n/10 for a 60 s
    departure window.
    """
    return build_network([
        ("OA", "O", "A", 500.0, 10.0, 600.0),
        ("AD", "A", "D", 500.0, 10.0, 600.0),
        ("OB", "O", "B", 600.0, 10.0, 600.0),
        ("BD", "B", "D", 600.0, 10.0, 600.0),
    ])


@pytest.fixture(scope="session")
def two_route_net() -> Network:
    return load_network(bundled_path("two_route"))


@pytest.fixture(scope="session")
def three_route_net() -> Network:
    return load_network(bundled_path("three_route"))


@pytest.fixture(scope="session")
def grid3_net() -> Network:
    return load_network(bundled_path("grid3"))


# Acceptance tests append one line each here; the terminal summary hook
# prints them after the run so every criterion gets a visible verdict.
ACCEPTANCE_LINES: list[str] = []


@pytest.fixture
def acceptance_report():
    def record(criterion: str, passed: bool, detail: str) -> None:
        verdict = "PASS" if passed else "FAIL"
        ACCEPTANCE_LINES.append(f"{verdict} {criterion}: {detail}")

    return record


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.write_sep("=", "acceptance criteria")
    for line in ACCEPTANCE_LINES:
        terminalreporter.write_line(line)
