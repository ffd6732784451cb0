"""Lattice builders and state constructors."""

from __future__ import annotations

import itertools
from dataclasses import dataclass

import networkx as nx
import numpy as np

from .errors import InvalidSpec
from .network import Graph, TensorNetworkState, VidalState

KINDS = ("square", "cubic", "hexagonal", "random_regular", "path", "tree")


@dataclass(frozen=True)
class LatticeSpec:
    """Geometry description.

    ``dims`` holds ``(Lx, Ly)`` for square, ``(Lx, Ly, Lz)`` for cubic,
    ``(rows, cols)`` for hexagonal, ``(n, z)`` for random_regular, ``(L,)``
    for path and ``(n,)`` for a random tree. ``periodic`` applies per
    dimension to the hypercubic kinds only.
    """

    kind: str
    dims: tuple
    periodic: tuple = ()
    seed: int = 0

    def __post_init__(self):
        if self.kind not in KINDS:
            raise InvalidSpec(f"unknown lattice kind {self.kind!r}; expected one of {KINDS}")
        dims = tuple(int(d) for d in self.dims)
        object.__setattr__(self, "dims", dims)
        want = {"square": 2, "cubic": 3, "hexagonal": 2, "random_regular": 2, "path": 1, "tree": 1}
        if len(dims) != want[self.kind]:
            raise InvalidSpec(f"{self.kind} needs {want[self.kind]} dimensions, got {dims}")
        if any(d < 1 for d in dims):
            raise InvalidSpec("lattice dimensions must be >= 1")
        periodic = tuple(bool(p) for p in self.periodic)
        if periodic and self.kind not in ("square", "cubic", "path"):
            raise InvalidSpec(f"periodic boundaries are not supported for {self.kind}")
        if periodic and len(periodic) not in (1, len(dims)):
            raise InvalidSpec("periodic must give one flag or one per dimension")
        if len(periodic) == 1:
            periodic = periodic * len(dims)
        object.__setattr__(self, "periodic", periodic or (False,) * len(dims))
        if self.kind == "random_regular":
            n, z = dims
            if (n * z) % 2 or z >= n:
                raise InvalidSpec(f"no {z}-regular graph on {n} vertices")

    @classmethod
    def square(cls, lx, ly=None, periodic=False):
        return cls("square", (lx, lx if ly is None else ly), (periodic,))

    @classmethod
    def cubic(cls, lx, ly=None, lz=None, periodic=False):
        ly = lx if ly is None else ly
        lz = lx if lz is None else lz
        return cls("cubic", (lx, ly, lz), (periodic,))

    @classmethod
    def path(cls, length):
        return cls("path", (length,))


def _hypercubic(dims, periodic):
    verts = list(itertools.product(*[range(d) for d in dims]))
    edges = []
    # bonds grouped by direction; within a direction ordered so that the
    # fastest varying coordinate is the bond direction itself
    for axis, (n, wrap) in enumerate(zip(dims, periodic)):
        others = [range(d) for k, d in enumerate(dims) if k != axis]
        for rest in itertools.product(*reversed(others)):
            rest = tuple(reversed(rest))
            for x in range(n):
                if x + 1 < n:
                    nxt = x + 1
                elif wrap and n > 1:
                    nxt = 0
                else:
                    continue
                a = rest[:axis] + (x,) + rest[axis:]
                b = rest[:axis] + (nxt,) + rest[axis:]
                edges.append((a, b))
    return Graph.from_pairs(edges, vertices=verts)


def build_graph(spec: LatticeSpec) -> Graph:
    kind, dims = spec.kind, spec.dims
    if kind in ("square", "cubic"):
        return _hypercubic(dims, spec.periodic)
    if kind == "path":
        (n,) = dims
        pairs = [(k, k + 1) for k in range(n - 1)]
        if spec.periodic[0] and n > 2:
            pairs.append((n - 1, 0))
        return Graph.from_pairs(pairs, vertices=range(n))
    if kind == "hexagonal":
        rows, cols = dims
        h = nx.hexagonal_lattice_graph(rows, cols)
        pairs = sorted(tuple(sorted(e)) for e in h.edges())
        return Graph.from_pairs(pairs, vertices=h.nodes())
    if kind == "random_regular":
        n, z = dims
        for k in range(1000):
            h = nx.random_regular_graph(z, n, seed=spec.seed + k)
            if nx.is_connected(h):
                pairs = sorted(tuple(sorted(e)) for e in h.edges())
                return Graph.from_pairs(pairs, vertices=range(n))
        raise InvalidSpec(f"could not draw a connected {z}-regular graph on {n} vertices")
    if kind == "tree":
        (n,) = dims
        if n == 1:
            return Graph([0], [])
        if n == 2:
            return Graph.from_pairs([(0, 1)])
        rng = np.random.default_rng(spec.seed)
        seq = [int(x) for x in rng.integers(0, n, size=n - 2)]
        h = nx.from_prufer_sequence(seq)
        pairs = sorted(tuple(sorted(e)) for e in h.edges())
        return Graph.from_pairs(pairs, vertices=range(n))
    raise InvalidSpec(kind)


def random_tns(graph: Graph, chi: int, site_dim: int = 2, seed: int = 0, complex_entries: bool = False) -> TensorNetworkState:
    """I.i.d. standard-normal vertex tensors (real unless ``complex_entries``)."""
    if chi < 1 or site_dim < 1:
        raise InvalidSpec("chi and site_dim must be >= 1")
    rng = np.random.default_rng(seed)
    tensors = {}
    for v in graph.vertices:
        shape = (site_dim,) + (chi,) * graph.degree(v)
        t = rng.standard_normal(shape)
        if complex_entries:
            t = t + 1j * rng.standard_normal(shape)
        tensors[v] = t
    return TensorNetworkState(graph, tensors, {v: site_dim for v in graph.vertices})


def product_state(graph: Graph, local: dict) -> VidalState:
    """Bond-dimension-one state from a vector per vertex."""
    gamma = {}
    dims = {}
    for v in graph.vertices:
        vec = np.asarray(local[v], dtype=complex)
        gamma[v] = vec.reshape((len(vec),) + (1,) * graph.degree(v))
        dims[v] = len(vec)
    lam = {e: np.ones(1) for e in graph.edges}
    return VidalState(graph, gamma, lam, dims)


def neel_state(graph: Graph, pattern=None) -> VidalState:
    """Alternating up/down product state; ``pattern`` maps vertex to 0 (up) or 1 (down)."""
    if pattern is None:
        pattern = graph.bipartition()
        if pattern is None:
            raise InvalidSpec("graph is not bipartite; no Neel pattern exists")
    else:
        for eid, (v, w) in graph.edges.items():
            if pattern[v] == pattern[w]:
                raise InvalidSpec(f"pattern is not a bipartition (edge {eid!r})")
    up, down = np.array([1.0, 0.0]), np.array([0.0, 1.0])
    return product_state(graph, {v: (down if pattern[v] else up) for v in graph.vertices})


def ising_bond_factor(beta: float) -> np.ndarray:
    """``A`` with ``A @ A.T = [[e^{b/2}, e^{-b/2}], [e^{-b/2}, e^{b/2}]]``."""
    w = np.array([[np.exp(beta / 2), np.exp(-beta / 2)], [np.exp(-beta / 2), np.exp(beta / 2)]])
    evals, vecs = np.linalg.eigh(w)
    return vecs * np.sqrt(np.clip(evals, 0.0, None))[None, :]


def ising_sqrt_partition_state(graph: Graph, beta: float, h: float = 0.0) -> TensorNetworkState:
    """State whose squared amplitudes are Boltzmann weights of the ferromagnetic
    Ising model ``E(s) = -sum_<vw> s_v s_w - h sum_v s_v``; site index 0 is
    ``s = +1``. Its norm is the partition function.
    """
    if beta < 0:
        raise InvalidSpec("beta must be non-negative")
    a = ising_bond_factor(beta)
    spins = np.array([1.0, -1.0])
    tensors = {}
    for v in graph.vertices:
        z = graph.degree(v)
        t = np.exp(beta * h * spins / 2).reshape((2,) + (1,) * z)
        for k in range(z):
            shape = [2] + [1] * z
            shape[1 + k] = 2
            t = t * a.reshape(shape)
        tensors[v] = t
    return TensorNetworkState(graph, tensors, {v: 2 for v in graph.vertices})


def ising_energy(graph: Graph, spins, h: float = 0.0) -> float:
    """Classical energy of a configuration ``{v: +1 or -1}``."""
    e = -h * sum(spins[v] for v in graph.vertices)
    for v, w in graph.edges.values():
        e -= spins[v] * spins[w]
    return float(e)


def brute_force_partition(graph: Graph, beta: float, h: float = 0.0) -> float:
    total = 0.0
    verts = graph.vertices
    for conf in itertools.product((1, -1), repeat=len(verts)):
        total += np.exp(-beta * ising_energy(graph, dict(zip(verts, conf)), h))
    return float(total)


def parse_lattice(text: str, periodic=False, seed=0) -> LatticeSpec:
    """Parse ``square:6x6``, ``cubic:4``, ``hexagonal:3x3``, ``random_regular:200x3``,
    ``path:20`` or ``tree:10``."""
    if ":" not in text:
        raise InvalidSpec(f"lattice must look like kind:dims, got {text!r}")
    kind, dims = text.split(":", 1)
    try:
        nums = tuple(int(x) for x in dims.lower().split("x"))
    except ValueError:
        raise InvalidSpec(f"bad lattice dimensions {dims!r}") from None
    if kind == "square" and len(nums) == 1:
        nums = nums * 2
    if kind == "cubic" and len(nums) == 1:
        nums = nums * 3
    return LatticeSpec(kind, nums, (periodic,) if periodic else (), seed)
