"""Route set generation: the discrete action space for every O-D pair.

Alternative routes are found with an iterative penalty method. Each Dijkstra
pass runs on working edge weights that start at free-flow times; after every
discovered path the weights of its edges are multiplied by a penalty factor,
pushing later searches onto different streets.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

from .netgraph import Network, shortest_path


@dataclass(frozen=True)
class Route:
    """Loop-free edge sequence connecting an origin to a destination."""

    edges: tuple[str, ...]
    origin: str
    dest: str
    fftime: float


@dataclass(frozen=True)
class RouteSet:
    """Routes of one O-D pair, sorted by free-flow time then edge ids.

    The position of a route inside ``routes`` is the action index used by
    choice models and learners, so the ordering must stay deterministic.
    """

    origin: str
    dest: str
    routes: tuple[Route, ...]

    def __len__(self) -> int:
        return len(self.routes)

    def __iter__(self):
        return iter(self.routes)

    def __getitem__(self, index: int) -> Route:
        return self.routes[index]


def build_route(net: Network, edge_ids) -> Route:
    """Validate an edge sequence as a connected loop-free path and wrap it."""
    edge_ids = tuple(edge_ids)
    if not edge_ids:
        raise ValueError("a route needs at least one edge")
    edges = []
    for eid in edge_ids:
        if eid not in net.edges:
            raise ValueError(f"unknown edge id {eid!r}")
        edges.append(net.edges[eid])
    visited = [edges[0].frm]
    for prev, nxt in zip(edges, edges[1:]):
        if prev.to != nxt.frm:
            raise ValueError(f"edges {prev.id!r} and {nxt.id!r} are not consecutive")
    for edge in edges:
        visited.append(edge.to)
    if len(set(visited)) != len(visited):
        raise ValueError("route revisits a node")
    fftime = sum(edge.fftime for edge in edges)
    return Route(edge_ids, edges[0].frm, edges[-1].to, fftime)


def generate_routes(
    net: Network,
    origin: str,
    dest: str,
    k: int = 3,
    penalty: float = 1.3,
    max_detour: float = 2.0,
) -> RouteSet:
    """Generate up to ``k`` alternative routes for one O-D pair.

    Parameters
    ----------
    net : Network
    origin, dest : str
        Node ids; the destination must be reachable.
    k : int
        Number of routes requested, at least 1. Sparse networks may yield
        fewer; that is not an error.
    penalty : float
        Multiplier, strictly greater than 1, applied to the working weights
        of every edge of a found path before the next search.
    max_detour : float
        Cap on ``fftime / fftime(fastest route)``, at least 1. Paths beyond
        the cap are discarded but still penalized so the search can move on.

    Returns
    -------
    RouteSet
        Between 1 and ``k`` distinct routes sorted by free-flow time, ties
        broken by edge-id sequence. The whole procedure is deterministic.
    """
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    if not penalty > 1.0:
        raise ValueError(f"penalty must be > 1, got {penalty}")
    if not max_detour >= 1.0:
        raise ValueError(f"max_detour must be >= 1, got {max_detour}")
    working = net.fftimes()
    seen: set[tuple[str, ...]] = set()
    kept: list[Route] = []
    base_fftime = None
    for _ in range(10 * k):
        path = tuple(shortest_path(net, origin, dest, working))
        if path not in seen:
            seen.add(path)
            route = build_route(net, path)
            # The first path is searched on pure free-flow weights, so its
            # fftime is the global minimum and anchors the detour ratio.
            if base_fftime is None:
                base_fftime = route.fftime
            if route.fftime <= max_detour * base_fftime:
                kept.append(route)
        for eid in path:
            working[eid] *= penalty
        if len(kept) >= k:
            break
    kept.sort(key=lambda r: (r.fftime, r.edges))
    return RouteSet(origin, dest, tuple(kept))


ROUTES_HEADER = ("origin", "dest", "route_index", "edge_sequence", "fftime")


def write_routes_csv(route_sets, path) -> Path:
    """Write route sets as ``origin,dest,route_index,edge_sequence,fftime`` rows."""
    path = Path(path)
    with path.open("w", newline="", encoding="utf-8") as handle:
        writer = csv.writer(handle)
        writer.writerow(ROUTES_HEADER)
        for rs in route_sets:
            for index, route in enumerate(rs.routes):
                writer.writerow(
                    [rs.origin, rs.dest, index, ";".join(route.edges), repr(route.fftime)]
                )
    return path


def read_routes_csv(path, net: Network) -> list[RouteSet]:
    """Read route sets back from CSV, revalidating every path against ``net``."""
    path = Path(path)
    grouped: dict[tuple[str, str], list[tuple[int, Route]]] = {}
    with path.open(newline="", encoding="utf-8") as handle:
        reader = csv.DictReader(handle)
        if reader.fieldnames is None or tuple(reader.fieldnames) != ROUTES_HEADER:
            raise ValueError(f"{path}: expected header {','.join(ROUTES_HEADER)!r}")
        for row in reader:
            route = build_route(net, row["edge_sequence"].split(";"))
            if (route.origin, route.dest) != (row["origin"], row["dest"]):
                raise ValueError(f"{path}: edge sequence does not match o-d of row {row!r}")
            if abs(route.fftime - float(row["fftime"])) > 1e-9:
                raise ValueError(f"{path}: stored fftime disagrees with network for {row!r}")
            grouped.setdefault((route.origin, route.dest), []).append(
                (int(row["route_index"]), route)
            )
    sets = []
    for (origin, dest), indexed in grouped.items():
        indexed.sort(key=lambda pair: pair[0])
        if [i for i, _ in indexed] != list(range(len(indexed))):
            raise ValueError(f"{path}: route_index values for {origin}->{dest} are not 0..n-1")
        sets.append(RouteSet(origin, dest, tuple(route for _, route in indexed)))
    return sets
