"""Two-site gate application, Trotterized imaginary time and random circuits.

Gates act on the two endpoints of an edge. Bond weights stay normalized to
unit sum; the removed factors go into ``log_scale`` so amplitudes are
reproduced exactly when nothing is truncated.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np
import scipy.linalg

from .bp import BpConfig, MessageSet
from .errors import ConfigError, DimensionMismatch, TooLarge
from .gauging import (
    NO_TRUNCATION,
    TruncationPolicy,
    _edge_transform,
    _unweight,
    _weighted,
    bp_gauge,
    vidal_distance,
)
from .network import (
    Graph,
    TensorNetworkState,
    VidalState,
    apply_bond_matrix,
    dense_state,
    scale_axis,
    vidal_to_symmetric,
)
from .tensor import Index, LabeledTensor, psd_sqrt, truncated_svd

PAULI_X = np.array([[0.0, 1.0], [1.0, 0.0]])
PAULI_Z = np.array([[1.0, 0.0], [0.0, -1.0]])


@dataclass(frozen=True)
class Gate:
    """Two-site operator ``array[out_a, out_b, in_a, in_b]``.

    ``a`` is the first endpoint of the edge the gate is applied to.
    """

    array: np.ndarray
    unitary: bool = False

    def __post_init__(self):
        a = np.asarray(self.array, dtype=complex)
        if a.ndim == 2:
            raise DimensionMismatch("pass the gate as a 4-index array; use Gate.from_matrix for matrices")
        if a.ndim != 4 or a.shape[:2] != a.shape[2:]:
            raise DimensionMismatch(f"gate must have shape (da, db, da, db), got {a.shape}")
        object.__setattr__(self, "array", a)

    @classmethod
    def from_matrix(cls, m, dims, unitary=False):
        da, db = dims
        return cls(np.asarray(m).reshape(da, db, da, db), unitary)

    @property
    def dims(self):
        return self.array.shape[:2]

    def matrix(self):
        da, db = self.dims
        return self.array.reshape(da * db, da * db)

    def reversed(self):
        """Same operator with the roles of the two sites exchanged."""
        return Gate(self.array.transpose(1, 0, 3, 2), self.unitary)

    def tensor(self, v, w) -> LabeledTensor:
        da, db = self.dims
        out_v, out_w = Index(("s", v), da), Index(("s", w), db)
        in_v, in_w = Index(("s", v), da, conj_level=1), Index(("s", w), db, conj_level=1)
        return LabeledTensor((out_v, out_w, in_v, in_w), self.array)


@dataclass(frozen=True)
class SiteFactor:
    """Single-site operator ``matrix[out, in]``."""

    matrix: np.ndarray

    def __post_init__(self):
        m = np.asarray(self.matrix, dtype=complex)
        if m.ndim != 2 or m.shape[0] != m.shape[1]:
            raise DimensionMismatch(f"site factor must be square, got {m.shape}")
        object.__setattr__(self, "matrix", m)


@dataclass(frozen=True)
class EvolutionConfig:
    max_chi: int = 2
    svd_cutoff: float = 1e-14
    regauge_every: int = 0
    regauge_target: float = 1e-3
    regauge_max_iters: int = 200
    seed: int = 0
    observable_schedule: Optional[tuple] = None

    def __post_init__(self):
        if self.max_chi < 1:
            raise ConfigError("max_chi must be >= 1")
        if self.regauge_every < 0:
            raise ConfigError("regauge_every must be >= 0")
        if not self.regauge_target > 0:
            raise ConfigError("regauge_target must be positive")

    @property
    def truncation(self):
        return TruncationPolicy(self.max_chi, self.svd_cutoff)

    def observe(self, gate_id):
        return self.observable_schedule is None or gate_id in self.observable_schedule


@dataclass
class StepRecord:
    step: int
    gate_id: int
    f_n: Optional[float]
    F_n: Optional[float]
    energy: Optional[float]
    c_estimate: Optional[float]
    seconds: float


@dataclass
class Trajectory:
    records: list = field(default_factory=list)
    final_state: Optional[VidalState] = None

    CSV_COLUMNS = ("step", "gate_id", "f_n", "F_n", "energy", "C_estimate", "seconds")

    def fidelities(self):
        return [r.f_n for r in self.records if r.f_n is not None]

    def running_fidelity(self):
        """``(prod f_i)^(1/n)`` over the recorded gate fidelities."""
        f = self.fidelities()
        if not f:
            return None
        return float(np.exp(np.mean(np.log(np.maximum(f, 1e-300)))))

    def energies(self):
        return [r.energy for r in self.records if r.energy is not None]

    def csv_rows(self):
        return [
            (r.step, r.gate_id, r.f_n, r.F_n, r.energy, r.c_estimate, r.seconds)
            for r in self.records
        ]


# -- gate application --------------------------------------------------------

def _gate_for_edge(graph, gate, eid, site_dims):
    v, w = graph.edges[eid]
    if tuple(gate.dims) != (site_dims[v] or 1, site_dims[w] or 1):
        raise DimensionMismatch(
            f"gate dims {gate.dims} do not match site dims {(site_dims[v], site_dims[w])} on edge {eid!r}"
        )
    return v, w


def _split_site_and_bond(t, axis):
    """``t`` as a matrix ``(other bonds, site * bond)`` plus the shape of the other bonds."""
    moved = np.moveaxis(t, [0, axis], [-2, -1])
    return moved.reshape(-1, moved.shape[-2] * moved.shape[-1]), moved.shape[:-2]


def _restore(mat, rest, d, k, axis):
    """Inverse of :func:`_split_site_and_bond` for a new bond dimension ``k``."""
    return np.moveaxis(mat.reshape(rest + (d, k)), [-2, -1], [0, axis])


def _truncation_error(s, discarded):
    total = float(np.sum(s**2) + np.sum(discarded**2))
    return float(np.sqrt(np.sum(discarded**2) / total)) if total > 0 else 0.0


def _reduced_update(theta_v, av, theta_w, aw, lam, gate, trunc):
    """Gate plus truncated SVD on the reduced core of two environment-weighted tensors.

    Returns ``(new_v, new_w, s, error)``; ``new_v diag(s) new_w`` replaces
    ``theta_v diag(lam) theta_w`` on the edge.
    """
    mv, rest_v = _split_site_and_bond(theta_v, av)
    mw, rest_w = _split_site_and_bond(theta_w, aw)
    dv, dw = theta_v.shape[0], theta_w.shape[0]
    chi = len(lam)
    qv, rv = np.linalg.qr(mv)
    qw, rw = np.linalg.qr(mw)
    rv = rv.reshape(-1, dv, chi)
    rw = rw.reshape(-1, dw, chi)
    core = np.einsum("asx,x,btx->asbt", rv, lam, rw)
    core = np.einsum("uvst,asbt->auvb", gate.array, core)
    ra, rb = rv.shape[0], rw.shape[0]
    u, s, vh, disc = truncated_svd(core.reshape(ra * dv, dw * rb), trunc.max_rank, trunc.effective_cutoff())
    k = len(s)
    new_v = qv @ u.reshape(ra, dv * k)
    new_w = qw @ vh.reshape(k, dw, rb).transpose(2, 1, 0).reshape(rb, dw * k)
    new_v = _restore(new_v, rest_v, dv, k, av)
    new_w = _restore(new_w, rest_w, dw, k, aw)
    return new_v, new_w, s, _truncation_error(s, disc)


def _naive_update(theta_v, av, theta_w, aw, lam, gate, trunc):
    """Same contract as :func:`_reduced_update`, forming the full two-site tensor."""
    mv, rest_v = _split_site_and_bond(theta_v, av)
    mw, rest_w = _split_site_and_bond(theta_w, aw)
    dv, dw = theta_v.shape[0], theta_w.shape[0]
    chi = len(lam)
    a = mv.reshape(-1, dv, chi)
    b = mw.reshape(-1, dw, chi)
    theta = np.einsum("asx,x,btx->asbt", a, lam, b)
    theta = np.einsum("uvst,asbt->auvb", gate.array, theta)
    na, nb = a.shape[0], b.shape[0]
    u, s, vh, disc = truncated_svd(theta.reshape(na * dv, dw * nb), trunc.max_rank, trunc.effective_cutoff())
    k = len(s)
    new_v = _restore(u.reshape(na, dv * k), rest_v, dv, k, av)
    new_w = _restore(vh.reshape(k, dw, nb).transpose(2, 1, 0).reshape(nb, dw * k), rest_w, dw, k, aw)
    return new_v, new_w, s, _truncation_error(s, disc)


def _vidal_gate(vs, gate, eid, trunc, update):
    g = vs.graph
    v, w = _gate_for_edge(g, gate, eid, vs.site_dims)
    if v == w:
        raise DimensionMismatch("gate on a self-loop")
    av, aw = 1 + g.slot(v, eid), 1 + g.slot(w, eid)
    theta_v = _weighted(vs.gamma, g, vs.lambdas, v, eid)
    theta_w = _weighted(vs.gamma, g, vs.lambdas, w, eid)
    new_v, new_w, s, err = update(theta_v, av, theta_w, aw, vs.lambdas[eid], gate, trunc)
    gamma = dict(vs.gamma)
    gamma[v] = _unweight(new_v, g, vs.lambdas, v, eid)
    gamma[w] = _unweight(new_w, g, vs.lambdas, w, eid)
    total = float(np.sum(s))
    lambdas = dict(vs.lambdas)
    lambdas[eid] = s / total
    return vs.with_updates(gamma, lambdas, vs.log_scale + np.log(total)), err


def apply_gate_simple_update(vs: VidalState, gate: Gate, eid, trunc: TruncationPolicy = NO_TRUNCATION):
    """Simple update through QR-reduced site tensors. Returns ``(state, truncation_error)``."""
    return _vidal_gate(vs, gate, eid, trunc, _reduced_update)


def apply_gate_naive_simple_update(vs: VidalState, gate: Gate, eid, trunc: TruncationPolicy = NO_TRUNCATION):
    """Simple update on the full two-site tensor (reference variant)."""
    return _vidal_gate(vs, gate, eid, trunc, _naive_update)


def apply_gate_bp(tns: TensorNetworkState, msgs: MessageSet, gate: Gate, eid, trunc: TruncationPolicy = NO_TRUNCATION):
    """Gate update with message environments on every other edge of the pair.

    Square roots of the incoming messages are absorbed on the surrounding
    bonds, the edge itself is brought to diagonal form from its two
    messages, the reduced update is applied and the surrounding square roots
    are removed again. The updated edge carries ``sqrt(s)`` on both sides and
    its two messages become ``diag(s)`` at unit trace.

    Returns ``(state, messages, truncation_error)``.
    """
    g = tns.graph
    v, w = _gate_for_edge(g, gate, eid, tns.site_dims)
    if v == w:
        raise DimensionMismatch("gate on a self-loop")
    tensors = dict(tns.tensors)
    removers = {}
    for x in (v, w):
        t = tensors[x]
        for k, f in enumerate(g.incident(x)):
            if f == eid:
                continue
            half, inv_half = psd_sqrt(msgs[(f, g.other(f, x))], check=False)
            t = apply_bond_matrix(t, 1 + k, half.conj().T)
            removers[(x, k)] = inv_half.conj().T
        tensors[x] = t
    av, aw = 1 + g.slot(v, eid), 1 + g.slot(w, eid)
    x_v, y_t, lam = _edge_transform(msgs[(eid, v)], msgs[(eid, w)], NO_TRUNCATION)
    theta_v = apply_bond_matrix(tensors[v], av, x_v)
    theta_w = apply_bond_matrix(tensors[w], aw, y_t)
    new_v, new_w, s, err = _reduced_update(theta_v, av, theta_w, aw, lam, gate, trunc)
    root = np.sqrt(s)
    new_v = scale_axis(new_v, av, root)
    new_w = scale_axis(new_w, aw, root)
    for x, t, a in ((v, new_v, av), (w, new_w, aw)):
        for k, f in enumerate(g.incident(x)):
            if 1 + k != a:
                t = apply_bond_matrix(t, 1 + k, removers[(x, k)])
        tensors[x] = t
    out = TensorNetworkState(g, tensors, tns.site_dims, tns.log_scale)
    new_msgs = dict(msgs.messages)
    m = np.diag(s / np.sum(s)).astype(complex)
    new_msgs[(eid, v)] = m
    new_msgs[(eid, w)] = m.copy()
    return out, MessageSet(g, new_msgs), err


def apply_site_factor(vs: VidalState, op: SiteFactor, v) -> VidalState:
    """Multiply ``op`` into the site index of ``Gamma_v``; the norm goes to ``log_scale``."""
    t = np.tensordot(op.matrix, vs.gamma[v], axes=(1, 0))
    n = float(np.linalg.norm(t))
    if n == 0:
        return vs.with_updates({**vs.gamma, v: t})
    return vs.with_updates({**vs.gamma, v: t / n}, log_scale=vs.log_scale + np.log(n))


# -- programs ----------------------------------------------------------------

def bfs_edge_order(graph: Graph):
    """Edges sorted by the breadth-first ranks of their endpoints."""
    rank = graph.bfs_rank()

    def key(eid):
        a, b = graph.edges[eid]
        return tuple(sorted((rank[a], rank[b])))

    return sorted(graph.edges, key=key)


def tfim_bond_gate(delta_beta: float) -> Gate:
    """``exp(-delta_beta * X X)`` on two qubits."""
    xx = np.kron(PAULI_X, PAULI_X)
    return Gate.from_matrix(scipy.linalg.expm(-delta_beta * xx), (2, 2))


def trotter_ising_layer(graph: Graph, g: float, delta_beta: float):
    """One second-order Trotter step of ``exp(-delta_beta H)`` with
    ``H = sum_<vw> X_v X_w - g sum_v Z_v``.

    Half-step bond gates in BFS edge order, then the field factor on every
    site, then the half-step bond gates in reverse order. Returns a list of
    ``(Gate, edge)`` and ``(SiteFactor, vertex)`` items.
    """
    half = tfim_bond_gate(delta_beta / 2)
    field = SiteFactor(scipy.linalg.expm(delta_beta * g * PAULI_Z))
    order = bfs_edge_order(graph)
    program = [(half, e) for e in order]
    program += [(field, v) for v in graph.vertices]
    program += [(half, e) for e in reversed(order)]
    return program


def random_two_site_unitary(seed, dims=(2, 2)) -> Gate:
    """Haar-random unitary on the product space of ``dims``."""
    rng = np.random.default_rng(seed)
    n = int(np.prod(dims))
    z = (rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n))) / np.sqrt(2)
    q, r = np.linalg.qr(z)
    d = np.diag(r)
    q = q * (d / np.abs(d))[None, :]
    return Gate.from_matrix(q, dims, unitary=True)


def cross_hatch_order(graph: Graph):
    """Horizontal bonds row by row, then vertical bonds column by column.

    Vertices must be 2-d coordinates ``(x, y)``; a bond is horizontal when
    its endpoints share ``y``.
    """
    horiz, vert = [], []
    for eid, (a, b) in graph.edges.items():
        if a[1] == b[1]:
            horiz.append((a[1], min(a[0], b[0]), eid))
        else:
            vert.append((a[0], min(a[1], b[1]), eid))
    return [e for *_, e in sorted(horiz, key=lambda t: t[:2])] + [e for *_, e in sorted(vert, key=lambda t: t[:2])]


def random_unitary_layers(graph: Graph, layers: int, seed: int = 0):
    """Cross-hatch layers of independent Haar-random two-site unitaries."""
    rng = np.random.default_rng(seed)
    order = cross_hatch_order(graph)
    program = []
    for _ in range(layers):
        for e in order:
            program.append((random_two_site_unitary(int(rng.integers(2**63))), e))
    return program


# -- evolution driver --------------------------------------------------------

def _site_shape(graph, site_dims):
    return tuple(site_dims[v] or 1 for v in graph.vertices)


def apply_gate_dense(psi: np.ndarray, graph: Graph, gate: Gate, eid, site_dims) -> np.ndarray:
    """Apply a gate to a flat amplitude vector in vertex order."""
    v, w = graph.edges[eid]
    pv, pw = graph.position(v), graph.position(w)
    t = psi.reshape(_site_shape(graph, site_dims))
    out = np.tensordot(gate.array, t, axes=([2, 3], [pv, pw]))
    return np.moveaxis(out, [0, 1], [pv, pw]).reshape(-1)


def apply_site_dense(psi: np.ndarray, graph: Graph, op: SiteFactor, v, site_dims) -> np.ndarray:
    p = graph.position(v)
    t = psi.reshape(_site_shape(graph, site_dims))
    return np.moveaxis(np.tensordot(op.matrix, t, axes=(1, p)), 0, p).reshape(-1)


def _default_verifier(state):
    try:
        return dense_state(state)
    except TooLarge:
        return None


def fidelity(psi_new, target) -> float:
    """``|<psi_new|target>|^2 / (|psi_new|^2 |target|^2)``."""
    num = abs(np.vdot(psi_new, target)) ** 2
    den = np.vdot(psi_new, psi_new).real * np.vdot(target, target).real
    return float(num / den)


def regauge(vs: VidalState, cfg: EvolutionConfig) -> VidalState:
    """Symmetric form, belief propagation to ``cfg.regauge_target``, back to Vidal form."""
    bp_cfg = BpConfig(target_delta=cfg.regauge_target, max_iters=cfg.regauge_max_iters)
    out, _ = bp_gauge(vidal_to_symmetric(vs), bp_cfg)
    return out


def evolve(
    initial: VidalState,
    program: Sequence,
    cfg: EvolutionConfig = EvolutionConfig(),
    verifier: Optional[Callable] = _default_verifier,
    energy: Optional[Callable] = None,
) -> Trajectory:
    """Run a gate program with simple updates and optional periodic regauging.

    ``program`` holds ``(Gate, edge)`` and ``(SiteFactor, vertex)`` items.
    For each scheduled two-site gate the exact verifier (``state -> dense
    vector`` or ``None``) supplies the gate fidelity ``f_n``; ``energy`` maps
    the current :class:`VidalState` to a number.
    """
    g = initial.graph
    vs = initial
    traj = Trajectory()
    trunc = cfg.truncation
    log_f = []
    gate_id = 0
    start = time.perf_counter()
    for step, (op, where) in enumerate(program):
        if isinstance(op, SiteFactor):
            vs = apply_site_factor(vs, op, where)
            continue
        observe = cfg.observe(gate_id)
        before = verifier(vs) if (observe and verifier is not None) else None
        vs, _ = apply_gate_simple_update(vs, op, where, trunc)
        if cfg.regauge_every and (gate_id + 1) % cfg.regauge_every == 0:
            vs = regauge(vs, cfg)
        f_n = f_run = e = c = None
        if observe:
            if before is not None:
                after = verifier(vs)
                if after is not None:
                    f_n = fidelity(after, apply_gate_dense(before, g, op, where, vs.site_dims))
                    log_f.append(np.log(max(f_n, 1e-300)))
                    f_run = float(np.exp(np.mean(log_f)))
            if energy is not None:
                e = float(energy(vs))
            c = vidal_distance(vs)
        traj.records.append(StepRecord(step, gate_id, f_n, f_run, e, c, time.perf_counter() - start))
        gate_id += 1
    traj.final_state = vs
    return traj
