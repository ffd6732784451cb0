"""Expectation values from rank-one environments and from exact contraction."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DegenerateState, DimensionMismatch
from .evolution import PAULI_X, PAULI_Z, Gate, _site_shape, apply_gate_dense
from .gauging import _weighted
from .network import Graph, TensorNetworkState, VidalState, dense_state, scale_axis
from .tensor import Index, LabeledTensor


@dataclass(frozen=True)
class LocalOperator:
    matrix: np.ndarray
    name: str = "O"

    def __post_init__(self):
        m = np.asarray(self.matrix, dtype=complex)
        if m.ndim != 2 or m.shape[0] != m.shape[1]:
            raise DimensionMismatch(f"local operator must be square, got {m.shape}")
        object.__setattr__(self, "matrix", m)

    def tensor(self, v) -> LabeledTensor:
        d = self.matrix.shape[0]
        return LabeledTensor((Index(("s", v), d), Index(("s", v), d, conj_level=1)), self.matrix)


SZ = LocalOperator(np.diag([0.5, -0.5]), "Sz")
SX = LocalOperator(0.5 * PAULI_X, "Sx")
IDENTITY2 = LocalOperator(np.eye(2), "I")


def _fully_weighted(vs: VidalState, v):
    t = _weighted(vs.gamma, vs.graph, vs.lambdas, v, None)
    return t


def rank_one_expectation(vs: VidalState, op: LocalOperator, v) -> complex:
    """``<O_v>`` with every incident bond weighted by ``Lambda`` on ket and bra."""
    t = _fully_weighted(vs, v)
    if op.matrix.shape[0] != t.shape[0]:
        raise DimensionMismatch("operator does not match the site dimension")
    m = t.reshape(t.shape[0], -1)
    num = np.vdot(m, op.matrix @ m)
    den = np.vdot(m, m)
    if abs(den) == 0:
        raise DegenerateState("vanishing single-site norm")
    return complex(num / den)


def exact_expectation(state, op: LocalOperator, v) -> complex:
    """``<psi|O_v|psi> / <psi|psi>`` by exact contraction."""
    g: Graph = state.graph
    psi = dense_state(state)
    shape = _site_shape(g, state.site_dims)
    p = g.position(v)
    t = psi.reshape(shape)
    applied = np.moveaxis(np.tensordot(op.matrix, t, axes=(1, p)), 0, p).reshape(-1)
    den = np.vdot(psi, psi)
    if den == 0:
        raise DegenerateState("state has zero norm")
    return complex(np.vdot(psi, applied) / den)


def exact_two_site_energy(state, terms) -> float:
    """``sum <psi|h|psi> / <psi|psi>`` over ``(Gate, edge)`` terms, exactly."""
    psi = dense_state(state)
    den = np.vdot(psi, psi).real
    if den == 0:
        raise DegenerateState("state has zero norm")
    total = 0.0
    for h, eid in terms:
        total += np.vdot(psi, apply_gate_dense(psi, state.graph, h, eid, state.site_dims))
    return float(np.real(total) / den)


def rank_one_two_site_energy(vs: VidalState, terms) -> float:
    """Sum of two-site expectations with ``Lambda`` environments on every outer bond.

    ``terms`` holds ``(Gate, edge)`` pairs; each gate array is
    ``h[out_a, out_b, in_a, in_b]`` with ``a`` the first endpoint of the edge.
    """
    g = vs.graph
    total = 0.0
    for h, eid in terms:
        v, w = g.edges[eid]
        av, aw = 1 + g.slot(v, eid), 1 + g.slot(w, eid)
        tv = _weighted(vs.gamma, g, vs.lambdas, v, eid)
        tw = _weighted(vs.gamma, g, vs.lambdas, w, eid)
        tv = scale_axis(tv, av, vs.lambdas[eid])
        a = np.moveaxis(tv, [0, av], [-2, -1])
        b = np.moveaxis(tw, [0, aw], [-2, -1])
        a = a.reshape(-1, a.shape[-2], a.shape[-1])
        b = b.reshape(-1, b.shape[-2], b.shape[-1])
        theta = np.einsum("asx,btx->asbt", a, b)
        num = np.einsum("asbt,uvst,aubv->", theta.conj(), h.array, theta)
        den = np.vdot(theta, theta)
        if abs(den) == 0:
            raise DegenerateState("vanishing two-site norm")
        total += num / den
    return float(np.real(total))


def tfim_terms(graph: Graph, g: float):
    """``H = sum X X - g sum Z`` as two-site terms; each field term is split
    evenly over the incident bonds of its site."""
    xx = np.kron(PAULI_X, PAULI_X)
    eye = np.eye(2)
    terms = []
    for eid, (v, w) in graph.edges.items():
        h = xx - g * (np.kron(PAULI_Z, eye) / graph.degree(v) + np.kron(eye, PAULI_Z) / graph.degree(w))
        terms.append((Gate.from_matrix(h, (2, 2)), eid))
    return terms


def tfim_energy_exact(state, g: float) -> float:
    """Energy per site of ``H = sum X X - g sum Z`` by exact contraction."""
    return exact_two_site_energy(state, tfim_terms(state.graph, g)) / state.graph.num_vertices


def tfim_ground_energy(graph: Graph, g: float) -> float:
    """Exact-diagonalization ground energy per site (small graphs only)."""
    n = graph.num_vertices
    if n > 14:
        raise ValueError("exact diagonalization limited to 14 sites")
    dim = 2**n
    h = np.zeros((dim, dim))
    for t, eid in tfim_terms(graph, g):
        for k in range(dim):
            e = np.zeros(dim)
            e[k] = 1.0
            h[:, k] += apply_gate_dense(e, graph, t, eid, {v: 2 for v in graph.vertices}).real
    return float(np.linalg.eigvalsh(h)[0] / n)
