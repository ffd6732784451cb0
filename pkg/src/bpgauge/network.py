"""Graphs, tensor network states and exact contraction.

Vertex tensors are stored as plain arrays in a fixed axis layout::

    T_v[s, b_1, ..., b_k]

where ``s`` is the physical (site) axis and ``b_1..b_k`` are the bonds of
``graph.incident(v)`` in that order. Vertices without a physical index carry a
dummy site axis of dimension 1. :meth:`TensorNetworkState.site_tensor` wraps
an array into a :class:`~bpgauge.tensor.LabeledTensor` when labels are wanted.

Both state types carry a ``log_scale``: the represented state is
``exp(log_scale)`` times the contraction of the stored tensors. Gauging
normalizes bond tensors and keeps the discarded factor there.
"""

from __future__ import annotations

import itertools
from collections import deque
from dataclasses import dataclass, field
from typing import Hashable, Mapping

import numpy as np

from .errors import DimensionMismatch, InvalidSpec, TooLarge
from .tensor import BOND, DTYPE, SITE, Index, LabeledTensor, contract

DEFAULT_CONTRACT_LIMIT = 2 ** 24


def _sort_key(x):
    # vertex ids are usually ints or tuples of ints; anything else sorts by repr
    if isinstance(x, (int, np.integer)):
        return (0, int(x))
    if isinstance(x, tuple):
        return (1, x)
    return (2, repr(x))


class Graph:
    """Undirected connected multigraph with integer edge ids.

    ``edges`` maps ``edge_id -> (v, w)``. Parallel edges are allowed; self
    loops are not.
    """

    def __init__(self, vertices, edges, check_connected: bool = True):
        verts = sorted(set(vertices), key=_sort_key)
        if not verts:
            raise InvalidSpec("graph needs at least one vertex")
        vset = set(verts)
        emap = {}
        for item in edges:
            eid, v, w = item
            if eid in emap:
                raise InvalidSpec(f"duplicate edge id {eid!r}")
            if v == w:
                raise InvalidSpec(f"self loop on vertex {v!r}")
            if v not in vset or w not in vset:
                raise InvalidSpec(f"edge {eid!r} references unknown vertex")
            emap[eid] = (v, w)
        self.vertices = tuple(verts)
        self.edges = dict(sorted(emap.items(), key=lambda kv: _sort_key(kv[0])))
        self._incident = {v: [] for v in verts}
        for eid, (v, w) in self.edges.items():
            self._incident[v].append(eid)
            self._incident[w].append(eid)
        self._incident = {v: tuple(es) for v, es in self._incident.items()}
        self._position = {v: n for n, v in enumerate(verts)}
        if check_connected and not self.is_connected():
            raise InvalidSpec("graph is not connected")

    @classmethod
    def from_pairs(cls, pairs, vertices=None, **kw):
        pairs = list(pairs)
        if vertices is None:
            vertices = {x for p in pairs for x in p}
        return cls(vertices, [(n, v, w) for n, (v, w) in enumerate(pairs)], **kw)

    def __repr__(self):
        return f"Graph(|V|={len(self.vertices)}, |E|={len(self.edges)})"

    def __eq__(self, other):
        return (
            isinstance(other, Graph)
            and self.vertices == other.vertices
            and self.edges == other.edges
        )

    def __hash__(self):
        return hash((self.vertices, tuple(self.edges.items())))

    @property
    def num_vertices(self):
        return len(self.vertices)

    @property
    def num_edges(self):
        return len(self.edges)

    def position(self, v) -> int:
        return self._position[v]

    def incident(self, v):
        return self._incident[v]

    def degree(self, v) -> int:
        return len(self._incident[v])

    def endpoints(self, eid):
        return self.edges[eid]

    def other(self, eid, v):
        a, b = self.edges[eid]
        if v == a:
            return b
        if v == b:
            return a
        raise KeyError(f"vertex {v!r} is not on edge {eid!r}")

    def slot(self, v, eid) -> int:
        """Position of ``eid`` among the bonds of ``v`` (0-based, site excluded)."""
        return self._incident[v].index(eid)

    def neighbors(self, v):
        return [self.other(e, v) for e in self._incident[v]]

    def directed_edges(self):
        """All ``(edge_id, source)`` pairs, each edge in both orientations."""
        out = []
        for eid, (v, w) in self.edges.items():
            out.append((eid, v))
            out.append((eid, w))
        return out

    def is_connected(self) -> bool:
        seen = {self.vertices[0]}
        todo = [self.vertices[0]]
        while todo:
            v = todo.pop()
            for u in self.neighbors(v):
                if u not in seen:
                    seen.add(u)
                    todo.append(u)
        return len(seen) == len(self.vertices)

    def is_tree(self) -> bool:
        return self.num_edges == self.num_vertices - 1

    def bfs_rank(self, root=None):
        """Breadth-first visiting rank of every vertex, neighbours in edge order."""
        root = self.vertices[0] if root is None else root
        rank = {root: 0}
        queue = deque([root])
        while queue:
            v = queue.popleft()
            for u in self.neighbors(v):
                if u not in rank:
                    rank[u] = len(rank)
                    queue.append(u)
        return rank

    def bipartition(self):
        """Two-colouring as ``{v: 0 or 1}``, or ``None`` if the graph is not bipartite."""
        colour = {self.vertices[0]: 0}
        todo = [self.vertices[0]]
        while todo:
            v = todo.pop()
            for u in self.neighbors(v):
                if u not in colour:
                    colour[u] = 1 - colour[v]
                    todo.append(u)
                elif colour[u] == colour[v]:
                    return None
        return colour


def bond_id(eid):
    return ("b", eid)


def site_id(v):
    return ("s", v)


def _freeze(arr):
    arr = np.ascontiguousarray(arr, dtype=DTYPE)
    arr.flags.writeable = False
    return arr


@dataclass(frozen=True)
class TensorNetworkState:
    """A graph with one tensor per vertex (see module docstring for layout)."""

    graph: Graph
    tensors: Mapping[Hashable, np.ndarray]
    site_dims: Mapping[Hashable, int | None]
    log_scale: float = 0.0

    def __post_init__(self):
        g = self.graph
        tensors = {}
        dims = {}
        for v in g.vertices:
            if v not in self.tensors:
                raise DimensionMismatch(f"missing tensor on vertex {v!r}")
            t = np.asarray(self.tensors[v])
            d = self.site_dims.get(v)
            if t.ndim != g.degree(v) + 1:
                raise DimensionMismatch(
                    f"tensor on {v!r} has {t.ndim} axes, expected {g.degree(v) + 1}"
                )
            if d is not None and t.shape[0] != d:
                raise DimensionMismatch(f"site dim of {v!r} is {t.shape[0]}, expected {d}")
            if d is None and t.shape[0] != 1:
                raise DimensionMismatch(f"vertex {v!r} has no site index but site axis {t.shape[0]}")
            tensors[v] = _freeze(t)
            dims[v] = d
        for eid, (v, w) in g.edges.items():
            a = tensors[v].shape[1 + g.slot(v, eid)]
            b = tensors[w].shape[1 + g.slot(w, eid)]
            if a != b:
                raise DimensionMismatch(f"bond {eid!r} has dims {a} and {b} on its endpoints")
        object.__setattr__(self, "tensors", tensors)
        object.__setattr__(self, "site_dims", dims)
        object.__setattr__(self, "log_scale", float(self.log_scale))

    @classmethod
    def from_labeled(cls, graph: Graph, site_tensors: Mapping, log_scale=0.0):
        """Build from labeled tensors whose bond indices use :func:`bond_id`."""
        arrays, dims = {}, {}
        for v in graph.vertices:
            t = site_tensors[v]
            sites = [ix for ix in t.indices if ix.kind == SITE]
            if len(sites) > 1:
                raise DimensionMismatch(f"tensor on {v!r} has more than one site index")
            bonds = [bond_id(e) for e in graph.incident(v)]
            order = [ix.key for ix in sites] + [(b, 0) for b in bonds]
            if len(order) != t.rank:
                raise DimensionMismatch(f"tensor on {v!r} does not carry exactly its incident bonds")
            data = t.transpose(order).data
            if not sites:
                data = data[None, ...]
            arrays[v] = data
            dims[v] = sites[0].dim if sites else None
        return cls(graph, arrays, dims, log_scale)

    def with_tensors(self, updates: Mapping, log_scale=None):
        tensors = dict(self.tensors)
        tensors.update(updates)
        return TensorNetworkState(
            self.graph, tensors, self.site_dims,
            self.log_scale if log_scale is None else log_scale,
        )

    def bond_dim(self, eid) -> int:
        v, _ = self.graph.edges[eid]
        return self.tensors[v].shape[1 + self.graph.slot(v, eid)]

    def bond_index(self, eid) -> Index:
        return Index(bond_id(eid), self.bond_dim(eid), BOND)

    def site_index(self, v):
        d = self.site_dims[v]
        return None if d is None else Index(site_id(v), d, SITE)

    def site_tensor(self, v) -> LabeledTensor:
        g = self.graph
        bonds = [self.bond_index(e) for e in g.incident(v)]
        s = self.site_index(v)
        data = self.tensors[v]
        if s is None:
            return LabeledTensor(bonds, data[0])
        return LabeledTensor([s] + bonds, data)

    def max_bond_dim(self) -> int:
        return max((self.bond_dim(e) for e in self.graph.edges), default=1)

    def normalized(self):
        """Rescale every tensor to unit Frobenius norm, moving the scale into ``log_scale``."""
        new, shift = {}, 0.0
        for v, t in self.tensors.items():
            n = np.linalg.norm(t)
            new[v] = t / n
            shift += np.log(n)
        return TensorNetworkState(self.graph, new, self.site_dims, self.log_scale + shift)


@dataclass(frozen=True)
class VidalState:
    """Vertex tensors ``gamma`` plus a non-negative descending vector ``lambdas[e]`` per edge."""

    graph: Graph
    gamma: Mapping[Hashable, np.ndarray]
    lambdas: Mapping[Hashable, np.ndarray]
    site_dims: Mapping[Hashable, int | None]
    log_scale: float = 0.0

    def __post_init__(self):
        lam = {}
        for eid in self.graph.edges:
            x = np.asarray(self.lambdas[eid], dtype=float).reshape(-1)
            if np.any(x < 0):
                raise ValueError(f"negative bond weight on edge {eid!r}")
            if np.any(np.diff(x) > 1e-14 * max(x[0], 1e-300)):
                raise ValueError(f"bond weights on edge {eid!r} are not descending")
            x = x.copy()
            x.flags.writeable = False
            lam[eid] = x
        object.__setattr__(self, "lambdas", lam)
        # reuse TNS validation for the gamma layout
        tns = TensorNetworkState(self.graph, self.gamma, self.site_dims)
        object.__setattr__(self, "gamma", tns.tensors)
        object.__setattr__(self, "site_dims", tns.site_dims)
        object.__setattr__(self, "log_scale", float(self.log_scale))
        for eid in self.graph.edges:
            if tns.bond_dim(eid) != len(lam[eid]):
                raise DimensionMismatch(f"lambda on {eid!r} does not match the bond dimension")

    def lambda_tensor(self, eid) -> LabeledTensor:
        x = self.lambdas[eid]
        ix = Index(bond_id(eid), len(x))
        return LabeledTensor((ix, Index(("lam", eid), len(x))), np.diag(x))

    def bond_dim(self, eid) -> int:
        return len(self.lambdas[eid])

    def as_tns(self) -> TensorNetworkState:
        """The bare gamma tensors as a state (bond weights dropped)."""
        return TensorNetworkState(self.graph, self.gamma, self.site_dims, self.log_scale)

    def with_updates(self, gamma=None, lambdas=None, log_scale=None):
        g = dict(self.gamma)
        g.update(gamma or {})
        lam = dict(self.lambdas)
        lam.update(lambdas or {})
        return VidalState(
            self.graph, g, lam, self.site_dims,
            self.log_scale if log_scale is None else log_scale,
        )

    @classmethod
    def from_tns(cls, tns: TensorNetworkState):
        """Wrap a plain state with unit bond weights."""
        lam = {e: np.ones(tns.bond_dim(e)) for e in tns.graph.edges}
        return cls(tns.graph, tns.tensors, lam, tns.site_dims, tns.log_scale)


def scale_axis(t: np.ndarray, axis: int, vec) -> np.ndarray:
    shape = [1] * t.ndim
    shape[axis] = -1
    return t * np.reshape(vec, shape)


def vidal_to_symmetric(vs: VidalState) -> TensorNetworkState:
    """Absorb the square root of each bond weight into both endpoint tensors."""
    g = vs.graph
    out = {}
    for v in g.vertices:
        t = vs.gamma[v]
        for k, eid in enumerate(g.incident(v)):
            t = scale_axis(t, 1 + k, np.sqrt(vs.lambdas[eid]))
        out[v] = t
    return TensorNetworkState(g, out, vs.site_dims, vs.log_scale)


def vidal_to_plain(vs: VidalState, absorb: str = "symmetric") -> TensorNetworkState:
    """Absorb bond weights completely.

    ``absorb="symmetric"`` splits each weight evenly; ``"toward_vertex_ordering"``
    puts the whole weight on the endpoint that sorts first.
    """
    if absorb == "symmetric":
        return vidal_to_symmetric(vs)
    if absorb != "toward_vertex_ordering":
        raise ValueError(f"unknown absorb mode {absorb!r}")
    g = vs.graph
    out = {}
    for v in g.vertices:
        t = vs.gamma[v]
        for k, eid in enumerate(g.incident(v)):
            a, b = g.edges[eid]
            first = a if g.position(a) < g.position(b) else b
            if v == first:
                t = scale_axis(t, 1 + k, vs.lambdas[eid])
        out[v] = t
    return TensorNetworkState(g, out, vs.site_dims, vs.log_scale)


# -- exact contraction -------------------------------------------------------

def _result_size(a: LabeledTensor, b: LabeledTensor) -> int:
    shared = set(a.keys) & set(b.keys)
    size = 1
    for ix in a.indices + b.indices:
        if ix.key not in shared:
            size *= ix.dim
    return size


def contract_network(tensors, limit: int = DEFAULT_CONTRACT_LIMIT) -> LabeledTensor:
    """Contract a list of labeled tensors pairwise, greedily choosing the
    pair with the smallest intermediate; disconnected parts are joined by
    outer products at the end."""
    pool = list(tensors)
    if not pool:
        raise ValueError("nothing to contract")
    for t in pool:
        if t.data.size > limit:
            raise TooLarge(f"input tensor of size {t.data.size} exceeds limit {limit}")
    while len(pool) > 1:
        best = None
        for i, j in itertools.combinations(range(len(pool)), 2):
            if not set(pool[i].keys) & set(pool[j].keys):
                continue
            size = _result_size(pool[i], pool[j])
            if best is None or size < best[0]:
                best = (size, i, j)
        if best is None:
            # only disconnected pieces remain
            best = min(
                (_result_size(pool[i], pool[j]), i, j)
                for i, j in itertools.combinations(range(len(pool)), 2)
            )
        size, i, j = best
        if size > limit:
            raise TooLarge(f"intermediate of size {size} exceeds limit {limit}")
        merged = contract(pool[i], pool[j])
        pool = [t for n, t in enumerate(pool) if n not in (i, j)] + [merged]
    return pool[0]


def exact_contract(tns: TensorNetworkState, limit: int = DEFAULT_CONTRACT_LIMIT):
    """Contract all bonds of ``tns``.

    Returns a :class:`LabeledTensor` over the site indices in vertex order,
    or a complex scalar when no site index is present. ``log_scale`` is
    applied to the result.
    """
    g = tns.graph
    open_size = 1
    for v in g.vertices:
        open_size *= tns.site_dims[v] or 1
    if open_size > limit:
        raise TooLarge(f"output of size {open_size} exceeds limit {limit}")
    out = contract_network([tns.site_tensor(v) for v in g.vertices], limit)
    factor = np.exp(tns.log_scale)
    sites = [tns.site_index(v) for v in g.vertices if tns.site_dims[v] is not None]
    if not sites:
        return out.scalar() * factor
    out = out.transpose([s.key for s in sites])
    return out.scale(factor)


def dense_state(state, limit: int = DEFAULT_CONTRACT_LIMIT) -> np.ndarray:
    """Full amplitude vector (vertex order, row-major) of a TNS or VidalState."""
    if isinstance(state, VidalState):
        state = vidal_to_plain(state, "toward_vertex_ordering")
    res = exact_contract(state, limit)
    if isinstance(res, LabeledTensor):
        return np.asarray(res.data).reshape(-1)
    return np.array([res])


def norm_network(tns: TensorNetworkState):
    """Ket and bra tensors of the closed network <psi|psi>."""
    g = tns.graph
    ket = [tns.site_tensor(v) for v in g.vertices]
    return ket + [t.dag() for t in ket]


def exact_norm(tns: TensorNetworkState, limit: int = DEFAULT_CONTRACT_LIMIT) -> float:
    """<psi|psi> by exact contraction of the norm network (includes ``log_scale``)."""
    res = contract_network(norm_network(tns), limit).scalar()
    return float(res.real) * np.exp(2 * tns.log_scale)


def norm_vertex_environment(tns: TensorNetworkState, v, incoming: Mapping) -> LabeledTensor:
    """Contract ``T_v``, its conjugate and messages on some incident edges.

    ``incoming`` maps edge id to a message given either as an array
    ``M[ket, bra]`` or a :class:`LabeledTensor` carrying the ket and bra
    copies of that edge's bond index. The site index is summed. Open indices
    are the ket and bra copies of the uncovered bonds, ket copies first.
    """
    g = tns.graph
    ket = tns.site_tensor(v)
    bra = ket.dag()
    inc = set(g.incident(v))
    for eid, m in incoming.items():
        if eid not in inc:
            raise DimensionMismatch(f"edge {eid!r} is not incident to {v!r}")
        kix = tns.bond_index(eid)
        bix = kix.bra()
        if isinstance(m, LabeledTensor):
            if {ix.key for ix in m.indices} != {kix.key, bix.key}:
                raise DimensionMismatch(f"message on {eid!r} does not carry that bond's indices")
            msg = m
        else:
            arr = np.asarray(m)
            if arr.shape != (kix.dim, kix.dim):
                raise DimensionMismatch(f"message on {eid!r} has shape {arr.shape}")
            msg = LabeledTensor((kix, bix), arr)
        ket = contract(ket, msg)
    out = contract(ket, bra)
    open_edges = [e for e in g.incident(v) if e not in incoming]
    kets = [tns.bond_index(e).key for e in open_edges]
    bras = [tns.bond_index(e).bra().key for e in open_edges]
    return out.transpose(kets + bras)


def insert_gauge(tns: TensorNetworkState, eid, x: np.ndarray) -> TensorNetworkState:
    """Insert ``X^{-1} X`` on an edge: the first endpoint takes ``X^{-1}``, the second ``X``."""
    g = tns.graph
    v, w = g.edges[eid]
    xinv = np.linalg.inv(x)
    tv = np.moveaxis(np.tensordot(tns.tensors[v], xinv, axes=(1 + g.slot(v, eid), 0)), -1, 1 + g.slot(v, eid))
    tw = np.moveaxis(np.tensordot(tns.tensors[w], x, axes=(1 + g.slot(w, eid), 1)), -1, 1 + g.slot(w, eid))
    return tns.with_tensors({v: tv, w: tw})


def apply_bond_matrix(t: np.ndarray, axis: int, m: np.ndarray) -> np.ndarray:
    """``t`` with ``m`` multiplied on bond axis ``axis``: new[..., k, ...] = sum_a t[..., a, ...] m[a, k]."""
    return np.moveaxis(np.tensordot(t, m, axes=(axis, 0)), -1, axis)
