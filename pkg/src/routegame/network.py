"""Directed routing networks with affine edge latencies.

A network couples a small directed graph with a population of agents split
into source groups. Every group ships a fixed number of agents from its
source node to the shared destination along one of a few admissible paths.
Latency parameters are stored as exact rationals so that downstream
equilibrium computations never accumulate rounding error.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from typing import Iterable, Iterator, Mapping, Union

RationalLike = Union[int, str, Fraction]


def as_rational(value: RationalLike | float) -> Fraction:
    """Convert a user-supplied number to an exact Fraction.

    Strings are parsed exactly ("0.05" becomes 1/20, "1/3" stays 1/3).
    Floats are accepted but converted via their decimal repr so that a
    literal like 0.05 means 1/20 rather than the nearest binary float.
    """
    if isinstance(value, Fraction):
        return value
    if isinstance(value, bool):
        raise TypeError("booleans are not valid latency parameters")
    if isinstance(value, int):
        return Fraction(value)
    if isinstance(value, float):
        return Fraction(repr(value))
    if isinstance(value, str):
        return Fraction(value.strip())
    raise TypeError(f"cannot interpret {value!r} as a rational number")


@dataclass(frozen=True)
class AffineLatency:
    """Latency base + slope * load, both coefficients nonnegative rationals."""

    base: Fraction
    slope: Fraction

    @classmethod
    def of(cls, base: RationalLike | float, slope: RationalLike | float = 0) -> "AffineLatency":
        return cls(as_rational(base), as_rational(slope))

    @classmethod
    def constant(cls, value: RationalLike | float) -> "AffineLatency":
        return cls.of(value, 0)

    @classmethod
    def free_flow(cls, t0: RationalLike | float, capacity: int) -> "AffineLatency":
        # t0 * (1 + load / capacity): base t0, slope t0 / capacity.
        t0f = as_rational(t0)
        if capacity < 1:
            raise ValueError(f"capacity must be >= 1, got {capacity}")
        return cls(t0f, t0f / capacity)

    def __call__(self, load: int) -> Fraction:
        return latency_eval(self, load)


def latency_eval(latency: AffineLatency, load: int) -> Fraction:
    """Exact travel time of an edge carrying `load` agents."""
    if load < 0:
        raise ValueError(f"edge load must be nonnegative, got {load}")
    return latency.base + latency.slope * load


@dataclass(frozen=True)
class Edge:
    """Directed edge with an affine latency. Self-loops need an explicit opt-in."""

    id: str
    src: str
    dst: str
    latency: AffineLatency
    allow_self_loop: bool = False


@dataclass(frozen=True)
class Path:
    """A route given as a sequence of edge ids. Must not repeat an edge."""

    edges: tuple[str, ...]

    def __init__(self, edges: Iterable[str]):
        object.__setattr__(self, "edges", tuple(edges))

    def __iter__(self) -> Iterator[str]:
        return iter(self.edges)

    def __len__(self) -> int:
        return len(self.edges)


@dataclass(frozen=True)
class GroupSpec:
    """A population of identical agents sharing a source and a strategy set.

    `strategies` holds one admissible path per strategy index; `labels` are
    display names aligned with it (generated from the paths when omitted).
    """

    name: str
    source: str
    size: int
    strategies: tuple[Path, ...]
    labels: tuple[str, ...] = ()

    def __post_init__(self) -> None:
        if not self.labels:
            object.__setattr__(
                self, "labels", tuple("+".join(p.edges) for p in self.strategies)
            )

    @property
    def n_strategies(self) -> int:
        return len(self.strategies)


@dataclass(frozen=True)
class Network:
    """Immutable routing game instance: graph, latencies and source groups."""

    name: str
    nodes: tuple[str, ...]
    edges: tuple[Edge, ...]
    destination: str
    groups: tuple[GroupSpec, ...]

    def edge_map(self) -> dict[str, Edge]:
        return {e.id: e for e in self.edges}

    def group_map(self) -> dict[str, GroupSpec]:
        return {g.name: g for g in self.groups}

    @property
    def total_agents(self) -> int:
        return sum(g.size for g in self.groups)

    def group_index(self, name: str) -> int:
        for i, g in enumerate(self.groups):
            if g.name == name:
                return i
        raise KeyError(f"no group named {name!r}")


def _check_path(
    net: Network,
    edges_by_id: Mapping[str, Edge],
    group: GroupSpec,
    k: int,
    path: Path,
    out: list[str],
) -> None:
    label = f"group {group.name!r} strategy {k}"
    if len(path) == 0:
        out.append(f"{label}: empty path")
        return
    seen: set[str] = set()
    prev_dst: str | None = None
    for eid in path:
        edge = edges_by_id.get(eid)
        if edge is None:
            out.append(f"{label}: unknown edge id {eid!r}")
            return
        if eid in seen:
            out.append(f"{label}: edge {eid!r} repeated")
            return
        seen.add(eid)
        if prev_dst is not None and edge.src != prev_dst:
            out.append(f"{label}: edge {eid!r} starts at {edge.src!r}, expected {prev_dst!r}")
            return
        prev_dst = edge.dst
    first = edges_by_id[path.edges[0]]
    if first.src != group.source:
        out.append(f"{label}: path starts at {first.src!r}, not source {group.source!r}")
    if prev_dst != net.destination:
        out.append(f"{label}: path ends at {prev_dst!r}, not destination {net.destination!r}")


def validate_network(net: Network) -> list[str]:
    """Return every invariant violation found, one human-readable line each.

    An empty list means the instance is well formed. Violations include
    duplicate ids, dangling endpoints, negative latency coefficients,
    undeclared self-loops, malformed strategy paths, empty strategy sets,
    nonpositive group sizes and an empty total population.
    """
    out: list[str] = []
    seen_nodes: set[str] = set()
    for n in net.nodes:
        if n in seen_nodes:
            out.append(f"duplicate node name {n!r}")
        seen_nodes.add(n)

    edges_by_id: dict[str, Edge] = {}
    for e in net.edges:
        if e.id in edges_by_id:
            out.append(f"duplicate edge id {e.id!r}")
            continue
        edges_by_id[e.id] = e
        if e.src not in seen_nodes:
            out.append(f"edge {e.id!r}: unknown source node {e.src!r}")
        if e.dst not in seen_nodes:
            out.append(f"edge {e.id!r}: unknown target node {e.dst!r}")
        if e.src == e.dst and not e.allow_self_loop:
            out.append(f"edge {e.id!r}: self-loop at {e.src!r} without allow_self_loop")
        if e.latency.base < 0 or e.latency.slope < 0:
            out.append(f"edge {e.id!r}: negative latency coefficient")

    if net.destination not in seen_nodes:
        out.append(f"destination {net.destination!r} is not a node")

    seen_groups: set[str] = set()
    for g in net.groups:
        if g.name in seen_groups:
            out.append(f"duplicate group name {g.name!r}")
            continue
        seen_groups.add(g.name)
        if g.source not in seen_nodes:
            out.append(f"group {g.name!r}: unknown source node {g.source!r}")
        if g.size < 1:
            out.append(f"group {g.name!r}: size must be >= 1, got {g.size}")
        if len(g.strategies) == 0:
            out.append(f"group {g.name!r}: empty strategy set")
        if len(g.labels) != len(g.strategies):
            out.append(f"group {g.name!r}: {len(g.labels)} labels for {len(g.strategies)} strategies")
        for k, path in enumerate(g.strategies):
            _check_path(net, edges_by_id, g, k, path, out)

    if not net.groups:
        out.append("network has no groups")
    return out


def check_network(net: Network) -> Network:
    """Raise ValueError listing all violations; return the network unchanged if valid."""
    problems = validate_network(net)
    if problems:
        raise ValueError("invalid network:\n" + "\n".join(f"  - {p}" for p in problems))
    return net


def enumerate_paths(net: Network, source: str, max_len: int) -> list[Path]:
    """All simple source->destination paths with at most max_len edges.

    Deterministic output: depth-first over edges sorted by id, results
    ordered lexicographically by their edge-id sequences. Returns [] when
    the destination is unreachable within the bound.
    """
    if max_len < 1:
        raise ValueError(f"max_len must be >= 1, got {max_len}")
    by_src: dict[str, list[Edge]] = {}
    for e in sorted(net.edges, key=lambda e: e.id):
        by_src.setdefault(e.src, []).append(e)

    found: list[Path] = []
    stack: list[str] = []
    visited: set[str] = {source}

    def walk(node: str) -> None:
        if node == net.destination and stack:
            found.append(Path(stack))
            return
        if len(stack) >= max_len:
            return
        for e in by_src.get(node, ()):
            if e.dst in visited:
                continue
            stack.append(e.id)
            visited.add(e.dst)
            walk(e.dst)
            visited.remove(e.dst)
            stack.pop()

    walk(source)
    found.sort(key=lambda p: p.edges)
    return found
