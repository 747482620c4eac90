"""Directed road network: CSV ingestion, validation and shortest paths.

Networks are plain edge lists. Every edge carries a length in meters, a
free-flow speed in m/s and a capacity in vehicles per hour; the free-flow
traversal time is ``length / speed``. The file format is a two-section CSV,
a ``node`` section followed by an ``edge`` section, each introduced by its
own header line::

    node,id,x,y
    node,O,0,0
    ...
    edge,id,from,to,length,speed,capacity
    edge,OA,O,A,500,10,600
    ...

Node coordinates are optional and only used for plotting or inspection.
"""
from __future__ import annotations

import csv
import heapq
import math
from dataclasses import dataclass
from pathlib import Path

NODE_HEADER = ("node", "id", "x", "y")
EDGE_HEADER = ("edge", "id", "from", "to", "length", "speed", "capacity")


class NetworkFormatError(ValueError):
    """A network file is malformed or violates a structural invariant."""


class UnreachableError(ValueError):
    """No path exists between the requested origin and destination."""


@dataclass(frozen=True)
class Node:
    id: str
    x: float | None = None
    y: float | None = None


@dataclass(frozen=True)
class Edge:
    id: str
    frm: str
    to: str
    length: float
    speed: float
    capacity: float

    @property
    def fftime(self) -> float:
        """Free-flow traversal time in seconds."""
        return self.length / self.speed


class Network:
    """Immutable directed graph of :class:`Node` and :class:`Edge` objects.

    Construction validates the graph: node and edge ids must be unique,
    edge endpoints must exist, and length, speed and capacity must be
    strictly positive. Instances are not meant to be mutated afterwards.
    """

    def __init__(self, nodes, edges):
        node_map: dict[str, Node] = {}
        for node in nodes:
            if node.id in node_map:
                raise NetworkFormatError(f"duplicate node id {node.id!r}")
            node_map[node.id] = node
        edge_map: dict[str, Edge] = {}
        for edge in edges:
            if edge.id in edge_map:
                raise NetworkFormatError(f"duplicate edge id {edge.id!r}")
            for endpoint in (edge.frm, edge.to):
                if endpoint not in node_map:
                    raise NetworkFormatError(
                        f"edge {edge.id!r} references undefined node {endpoint!r}"
                    )
            if not (edge.length > 0 and edge.speed > 0 and edge.capacity > 0):
                raise NetworkFormatError(
                    f"edge {edge.id!r} must have positive length, speed and capacity"
                )
            if not math.isfinite(edge.fftime):
                raise NetworkFormatError(f"edge {edge.id!r} has non-finite free-flow time")
            edge_map[edge.id] = edge
        self.nodes = node_map
        self.edges = edge_map
        self.out_edges: dict[str, list[Edge]] = {nid: [] for nid in node_map}
        for edge in edge_map.values():
            self.out_edges[edge.frm].append(edge)
        for adjacent in self.out_edges.values():
            adjacent.sort(key=lambda e: e.id)

    def fftimes(self) -> dict[str, float]:
        """Free-flow time per edge id, the canonical cost vector."""
        return {eid: e.fftime for eid, e in self.edges.items()}

    def __repr__(self) -> str:
        return f"Network(nodes={len(self.nodes)}, edges={len(self.edges)})"


def _parse_float(raw: str, path: Path, line: int, column: str) -> float:
    try:
        return float(raw)
    except ValueError:
        raise NetworkFormatError(
            f"{path}:{line}: cannot parse {column}={raw!r} as a number"
        ) from None


def load_network(path) -> Network:
    """Parse the two-section node/edge CSV at ``path`` into a Network.

    Raises :class:`NetworkFormatError` on unreadable rows, missing headers,
    duplicate ids, dangling edge endpoints or non-positive attributes.
    """
    path = Path(path)
    nodes: list[Node] = []
    edges: list[Edge] = []
    section = None
    with path.open(newline="", encoding="utf-8") as handle:
        for line_no, row in enumerate(csv.reader(handle), start=1):
            row = [field.strip() for field in row]
            if not row or not any(row):
                continue
            if tuple(row) == NODE_HEADER:
                section = "node"
                continue
            if tuple(row) == EDGE_HEADER:
                section = "edge"
                continue
            if section is None:
                raise NetworkFormatError(
                    f"{path}:{line_no}: expected header {','.join(NODE_HEADER)!r} first"
                )
            if row[0] != section:
                raise NetworkFormatError(
                    f"{path}:{line_no}: row tag {row[0]!r} does not match section {section!r}"
                )
            if section == "node":
                if len(row) != len(NODE_HEADER):
                    raise NetworkFormatError(f"{path}:{line_no}: node row needs 4 fields")
                _, nid, x_raw, y_raw = row
                x = _parse_float(x_raw, path, line_no, "x") if x_raw else None
                y = _parse_float(y_raw, path, line_no, "y") if y_raw else None
                nodes.append(Node(nid, x, y))
            else:
                if len(row) != len(EDGE_HEADER):
                    raise NetworkFormatError(f"{path}:{line_no}: edge row needs 7 fields")
                _, eid, frm, to, length, speed, capacity = row
                edges.append(
                    Edge(
                        eid,
                        frm,
                        to,
                        _parse_float(length, path, line_no, "length"),
                        _parse_float(speed, path, line_no, "speed"),
                        _parse_float(capacity, path, line_no, "capacity"),
                    )
                )
    if not nodes:
        raise NetworkFormatError(f"{path}: no node rows found")
    if not edges:
        raise NetworkFormatError(f"{path}: no edge rows found")
    return Network(nodes, edges)


def shortest_path(net: Network, origin: str, dest: str, weights: dict[str, float]) -> list[str]:
    """Minimum-total-weight simple path from origin to dest as an edge-id list.

    Parameters
    ----------
    net : Network
    origin, dest : str
        Node ids; must differ and exist in the network.
    weights : dict
        Nonnegative cost per edge id. Every edge of the network must be
        covered.

    Returns
    -------
    list of str
        Ordered edge ids of the cheapest path. Among equal-weight paths the
        lexicographically smallest edge-id sequence is returned, so results
        are reproducible across runs and platforms.

    Raises
    ------
    UnreachableError
        If dest cannot be reached from origin.
    ValueError
        On unknown node ids, origin equal to dest, or missing/negative weights.
    """
    for nid in (origin, dest):
        if nid not in net.nodes:
            raise ValueError(f"unknown node id {nid!r}")
    if origin == dest:
        raise ValueError("origin and destination must differ")
    # Heap entries are (cost, edge-id sequence, node); the sequence makes
    # equal-cost pops resolve to the lexicographically smallest path.
    heap: list[tuple[float, tuple[str, ...], str]] = [(0.0, (), origin)]
    done: set[str] = set()
    while heap:
        cost, seq, node = heapq.heappop(heap)
        if node == dest:
            return list(seq)
        if node in done:
            continue
        done.add(node)
        for edge in net.out_edges[node]:
            if edge.to in done:
                continue
            try:
                w = weights[edge.id]
            except KeyError:
                raise ValueError(f"missing weight for edge {edge.id!r}") from None
            if w < 0:
                raise ValueError(f"negative weight {w} on edge {edge.id!r}")
            heapq.heappush(heap, (cost + w, seq + (edge.id,), edge.to))
    raise UnreachableError(f"no path from {origin!r} to {dest!r}")
