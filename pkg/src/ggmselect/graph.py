"""Graphs on vertices ``1..p`` and the separation algorithms used for model selection.

Three edge kinds are supported: undirected (``i -- j``), bidirected (``i <-> j``)
and directed (``i -> j``).  A :class:`Graph` is an immutable value; every
operation here is a pure function of its arguments.
"""
from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field
from itertools import combinations
from typing import Iterable

UNDIRECTED = "undirected"
BIDIRECTED = "bidirected"
DIRECTED = "directed"
KINDS = (UNDIRECTED, BIDIRECTED, DIRECTED)

_EDGE_TOKENS = {UNDIRECTED: "--", BIDIRECTED: "<->", DIRECTED: "->"}


class GraphError(ValueError):
    """Invalid graph, vertex set or separation query."""


class NoSeparatorError(GraphError):
    """No separating set exists among the admissible vertices."""


def _norm(kind: str, i: int, j: int) -> tuple[int, int]:
    if kind == DIRECTED:
        return (i, j)
    return (i, j) if i < j else (j, i)


@dataclass(frozen=True)
class Graph:
    """A simple graph of a single edge kind on vertices ``1..p``.

    Undirected and bidirected edges are stored as ``(min, max)`` pairs,
    directed edges as ``(tail, head)``.
    """

    p: int
    kind: str
    edges: frozenset = field(default_factory=frozenset)

    def __post_init__(self):
        if self.kind not in KINDS:
            raise GraphError(f"unknown graph kind {self.kind!r}")
        if self.p < 0:
            raise GraphError("vertex count must be nonnegative")
        normed = set()
        pairs = set()
        for i, j in self.edges:
            i, j = int(i), int(j)
            if not (1 <= i <= self.p and 1 <= j <= self.p):
                raise GraphError(f"edge ({i}, {j}) out of range 1..{self.p}")
            if i == j:
                raise GraphError(f"self-loop at vertex {i}")
            key = (min(i, j), max(i, j))
            e = _norm(self.kind, i, j)
            if key in pairs and e not in normed:
                raise GraphError(f"more than one edge between {key[0]} and {key[1]}")
            pairs.add(key)
            normed.add(e)
        object.__setattr__(self, "edges", frozenset(normed))

    @classmethod
    def from_edges(cls, p: int, kind: str, edges: Iterable[tuple[int, int]] = ()) -> "Graph":
        return cls(p, kind, frozenset(tuple(e) for e in edges))

    @classmethod
    def complete(cls, p: int, kind: str = UNDIRECTED) -> "Graph":
        """Complete graph; directed edges point from lower to higher label."""
        return cls(p, kind, frozenset(combinations(range(1, p + 1), 2)))

    @property
    def vertices(self) -> range:
        return range(1, self.p + 1)

    def has_edge(self, i: int, j: int) -> bool:
        return _norm(self.kind, i, j) in self.edges

    def adjacent(self, i: int, j: int) -> bool:
        return (i, j) in self.edges or (j, i) in self.edges

    def with_edge(self, i: int, j: int) -> "Graph":
        return Graph(self.p, self.kind, self.edges | {_norm(self.kind, i, j)})

    def without_edge(self, i: int, j: int) -> "Graph":
        return Graph(self.p, self.kind, self.edges - {_norm(self.kind, i, j)})

    def neighbors(self, v: int) -> set[int]:
        """Vertices joined to ``v`` by an edge, ignoring direction."""
        out = set()
        for a, b in self.edges:
            if a == v:
                out.add(b)
            elif b == v:
                out.add(a)
        return out

    def children(self, v: int) -> set[int]:
        return {b for a, b in self.edges if a == v}

    def sorted_edges(self) -> list[tuple[int, int]]:
        return sorted(self.edges)

    def __len__(self) -> int:
        return len(self.edges)


def _check_kind(g: Graph, kind: str) -> None:
    if g.kind != kind:
        raise GraphError(f"expected a {kind} graph, got {g.kind}")


def _check_vertex(g: Graph, v: int) -> None:
    if not 1 <= v <= g.p:
        raise GraphError(f"vertex {v} out of range 1..{g.p}")


def _vertex_sets(g: Graph, *sets: Iterable[int]) -> list[frozenset[int]]:
    out = [frozenset(int(v) for v in s) for s in sets]
    for s in out:
        for v in s:
            _check_vertex(g, v)
    for a, b in combinations(out, 2):
        if a & b:
            raise GraphError(f"vertex sets overlap in {sorted(a & b)}")
    return out


def _require_dag(g: Graph) -> None:
    _check_kind(g, DIRECTED)
    if not is_acyclic(g):
        raise GraphError("directed graph contains a cycle")


# --- orderings -------------------------------------------------------------


def is_acyclic(g: Graph) -> bool:
    """True iff the directed graph ``g`` has no directed cycle."""
    _check_kind(g, DIRECTED)
    indeg = {v: 0 for v in g.vertices}
    for _, b in g.edges:
        indeg[b] += 1
    queue = [v for v in g.vertices if indeg[v] == 0]
    seen = 0
    while queue:
        v = queue.pop()
        seen += 1
        for c in g.children(v):
            indeg[c] -= 1
            if indeg[c] == 0:
                queue.append(c)
    return seen == g.p


def is_well_numbering(g: Graph, order: Iterable[int]) -> bool:
    """True iff every edge ``i -> j`` has ``i`` before ``j`` in ``order``."""
    _require_dag(g)
    order = tuple(order)
    if sorted(order) != list(g.vertices):
        raise GraphError(f"ordering {order} is not a permutation of 1..{g.p}")
    rank = {v: k for k, v in enumerate(order)}
    return all(rank[a] < rank[b] for a, b in g.edges)


def topological_extension(g: Graph) -> tuple[int, ...]:
    """Well-numbering of a DAG, taking the lowest available label first."""
    import heapq

    _require_dag(g)
    indeg = {v: 0 for v in g.vertices}
    for _, b in g.edges:
        indeg[b] += 1
    heap = [v for v in g.vertices if indeg[v] == 0]
    heapq.heapify(heap)
    order = []
    while heap:
        v = heapq.heappop(heap)
        order.append(v)
        for c in g.children(v):
            indeg[c] -= 1
            if indeg[c] == 0:
                heapq.heappush(heap, c)
    return tuple(order)


def parents(g: Graph, j: int) -> frozenset[int]:
    _check_kind(g, DIRECTED)
    _check_vertex(g, j)
    return frozenset(a for a, b in g.edges if b == j)


def ancestors(g: Graph, vs: Iterable[int]) -> frozenset[int]:
    """The vertices in ``vs`` together with all their ancestors."""
    _check_kind(g, DIRECTED)
    pa: dict[int, list[int]] = {v: [] for v in g.vertices}
    for a, b in g.edges:
        pa[b].append(a)
    out = set(vs)
    stack = list(out)
    while stack:
        v = stack.pop()
        for u in pa[v]:
            if u not in out:
                out.add(u)
                stack.append(u)
    return frozenset(out)


def induced_subgraph(g: Graph, keep: Iterable[int]) -> Graph:
    """Subgraph on ``keep``; vertex labels are preserved."""
    keep = frozenset(keep)
    return Graph(g.p, g.kind, frozenset(e for e in g.edges if e[0] in keep and e[1] in keep))


def moralize(g: Graph) -> Graph:
    """Join all parents of a common child, then drop edge directions."""
    _require_dag(g)
    und = {tuple(sorted(e)) for e in g.edges}
    for v in g.vertices:
        und.update(combinations(sorted(parents(g, v)), 2))
    return Graph(g.p, UNDIRECTED, frozenset(und))


# --- separation ------------------------------------------------------------


def _reach(g: Graph, sources: Iterable[int], passable) -> set[int]:
    """Vertices reachable from ``sources`` where only ``passable`` vertices relay."""
    seen = set(sources)
    queue = deque(seen)
    while queue:
        v = queue.popleft()
        for w in g.neighbors(v):
            if w in seen:
                continue
            seen.add(w)
            if passable(w):
                queue.append(w)
    return seen


def separates_undirected(g: Graph, A, B, C=()) -> bool:
    """True iff every path from ``A`` to ``B`` in ``g`` meets ``C``."""
    _check_kind(g, UNDIRECTED)
    A, B, C = _vertex_sets(g, A, B, C)
    reached = _reach(g, A, lambda w: w not in C)
    return not (reached & B)


def separates_bidirected(g: Graph, A, B, C=()) -> bool:
    """True iff no path from ``A`` to ``B`` has all its interior vertices in ``C``."""
    _check_kind(g, BIDIRECTED)
    A, B, C = _vertex_sets(g, A, B, C)
    reached = _reach(g, A, lambda w: w in C)
    return not (reached & B)


def d_separates(g: Graph, A, B, C=()) -> bool:
    """d-separation of ``A`` and ``B`` given ``C`` in a DAG.

    Reachability over (vertex, direction) states: a trail may continue through
    a noncollider outside ``C`` and through a collider with a descendant in
    ``C`` (equivalently, a collider that is an ancestor of ``C``).
    """
    _require_dag(g)
    A, B, C = _vertex_sets(g, A, B, C)
    anc_c = ancestors(g, C)
    pa: dict[int, set[int]] = {v: set() for v in g.vertices}
    ch: dict[int, set[int]] = {v: set() for v in g.vertices}
    for a, b in g.edges:
        pa[b].add(a)
        ch[a].add(b)

    # "up": arrived from a child (edge points away from v toward where we came
    # from, i.e. no arrowhead at v); "down": arrived from a parent.
    queue = deque((a, "up") for a in A)
    visited = set()
    while queue:
        v, direction = queue.popleft()
        if (v, direction) in visited:
            continue
        visited.add((v, direction))
        if v in B:
            return False
        if direction == "up":
            if v not in C:
                queue.extend((u, "up") for u in pa[v])
                queue.extend((c, "down") for c in ch[v])
        else:
            if v not in C:
                queue.extend((c, "down") for c in ch[v])
            if v in anc_c:
                queue.extend((u, "up") for u in pa[v])
    return True


# --- minimum separators ----------------------------------------------------


def _min_cut_size(adj: dict[int, set[int]], s: int, t: int, removable: frozenset[int],
                  limit: int | None = None) -> int:
    """Max number of internally vertex-disjoint s-t paths through ``removable``.

    Vertices outside ``removable`` (other than s, t) get unbounded capacity.
    Unit-capacity node splitting: vertex v becomes (v, 0) -> (v, 1).
    Stops early once the flow exceeds ``limit``.
    """
    big = len(adj) + 1
    cap: dict[tuple, dict[tuple, int]] = {}

    def add(u, w, c):
        cap.setdefault(u, {}).setdefault(w, 0)
        cap[u][w] += c
        cap.setdefault(w, {}).setdefault(u, 0)

    for v in adj:
        if v in (s, t):
            add((v, 0), (v, 1), big)
        else:
            add((v, 0), (v, 1), 1 if v in removable else big)
        for w in adj[v]:
            add((v, 1), (w, 0), big)

    src, sink = (s, 1), (t, 0)
    flow = 0
    while True:
        prev = {src: None}
        queue = deque([src])
        while queue and sink not in prev:
            u = queue.popleft()
            for w, c in cap[u].items():
                if c > 0 and w not in prev:
                    prev[w] = u
                    queue.append(w)
        if sink not in prev:
            return flow
        w = sink
        while prev[w] is not None:
            u = prev[w]
            cap[u][w] -= 1
            cap[w][u] += 1
            w = u
        flow += 1
        if flow >= big:
            return flow
        if limit is not None and flow > limit:
            return flow


def _lex_min_separator(adj: dict[int, set[int]], i: int, j: int,
                       candidates: frozenset[int]) -> frozenset[int]:
    """Lexicographically smallest minimum i-j vertex cut within ``candidates``."""
    if j in adj[i]:
        raise GraphError(f"vertices {i} and {j} are adjacent; no separator exists")
    k = _min_cut_size(adj, i, j, candidates)
    if k > len(adj):
        raise NoSeparatorError(f"no separator of {i} and {j} within {sorted(candidates)}")
    chosen: list[int] = []
    for v in sorted(candidates):
        if len(chosen) == k:
            break
        trial = set(chosen) | {v}
        sub = {u: nb - trial for u, nb in adj.items() if u not in trial}
        need = k - len(trial)
        if _min_cut_size(sub, i, j, candidates - trial, limit=need) == need:
            chosen.append(v)
    return frozenset(chosen)


def min_vertex_separator(g: Graph, i: int, j: int) -> frozenset[int]:
    """Smallest set separating ``i`` from ``j`` in an undirected graph.

    Among all separators of minimum size the lexicographically smallest
    sorted tuple is returned.  The edge ``i -- j`` must be absent.
    """
    _check_kind(g, UNDIRECTED)
    _check_vertex(g, i)
    _check_vertex(g, j)
    if i == j:
        raise GraphError("need two distinct vertices")
    if g.has_edge(i, j):
        raise GraphError(f"edge {i} -- {j} is present; remove it first")
    adj = {v: g.neighbors(v) for v in g.vertices}
    return _lex_min_separator(adj, i, j, frozenset(g.vertices) - {i, j})


def min_d_separator(g: Graph, i: int, j: int, allowed: Iterable[int]) -> frozenset[int]:
    """Smallest subset of ``allowed`` that d-separates ``i`` and ``j`` in a DAG.

    Minimal d-separators lie inside the ancestral set of ``{i, j}``, and for a
    set there d-separation is ordinary separation in the moral graph of that
    ancestral set.  Ties are broken lexicographically.  Raises
    :class:`NoSeparatorError` when ``i`` and ``j`` are d-connected given every
    subset of ``allowed``.
    """
    _require_dag(g)
    _check_vertex(g, i)
    _check_vertex(g, j)
    if i == j:
        raise GraphError("need two distinct vertices")
    if g.adjacent(i, j):
        raise GraphError(f"vertices {i} and {j} are adjacent; remove the edge first")
    allowed = frozenset(allowed)
    if {i, j} & allowed:
        raise GraphError("allowed set must exclude i and j")
    anc = ancestors(g, {i, j})
    moral = moralize(induced_subgraph(g, anc))
    adj = {v: moral.neighbors(v) for v in anc}
    return _lex_min_separator(adj, i, j, allowed & anc)


# --- edge-list text format -------------------------------------------------


def to_edgelist(g: Graph) -> str:
    tok = _EDGE_TOKENS[g.kind]
    lines = [f"p={g.p}"] + [f"{a} {tok} {b}" for a, b in g.sorted_edges()]
    return "\n".join(lines) + "\n"


def parse_edgelist(text: str, kind: str | None = None) -> Graph:
    """Parse ``p=<int>`` followed by one ``i -- j`` / ``i <-> j`` / ``i -> j`` per line.

    Blank lines and ``#`` comments are ignored.  All edges must share one kind;
    an empty graph takes ``kind`` (default undirected).
    """
    p = None
    found_kind = None
    edges = []
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if p is None:
            key, _, val = line.partition("=")
            if key.strip() != "p" or not val.strip().isdigit():
                raise GraphError(f"line {lineno}: expected header 'p=<int>', got {raw!r}")
            p = int(val)
            continue
        parts = line.split()
        if len(parts) != 3 or parts[1] not in _EDGE_TOKENS.values():
            raise GraphError(f"line {lineno}: cannot parse edge {raw!r}")
        ek = {v: k for k, v in _EDGE_TOKENS.items()}[parts[1]]
        if found_kind is None:
            found_kind = ek
        elif ek != found_kind:
            raise GraphError(f"line {lineno}: mixed edge kinds")
        try:
            edges.append((int(parts[0]), int(parts[2])))
        except ValueError:
            raise GraphError(f"line {lineno}: vertex labels must be integers") from None
    if p is None:
        raise GraphError("missing 'p=<int>' header")
    if kind is not None and found_kind is not None and kind != found_kind:
        raise GraphError(f"expected {kind} edges, found {found_kind}")
    return Graph.from_edges(p, found_kind or kind or UNDIRECTED, edges)
