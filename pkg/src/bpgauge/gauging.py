"""Transforming tensor network states into the Vidal gauge.

Three routines reach the same fixed point:

* :func:`bp_gauge` runs belief propagation on the untouched state and gauges
  once at the end;
* :func:`eager_gauge` regauges after every sweep and restarts messages from
  the new bond weights;
* :func:`simple_update_gauge` sweeps identity simple-update steps over edges.

Bond weights are normalized to unit sum on every edge and the removed factor
is accumulated in ``VidalState.log_scale``.
"""

from __future__ import annotations

import time
from dataclasses import dataclass
from typing import Optional

import numpy as np

from . import _kernels as K
from .bp import (
    SEQUENTIAL,
    BpConfig,
    GaugeReport,
    MessageSet,
    _delta,
    bp_iterate,
    bp_run,
    init_messages,
)
from .errors import ConfigError, DegenerateMessage
from .network import (
    TensorNetworkState,
    VidalState,
    apply_bond_matrix,
    scale_axis,
    vidal_to_symmetric,
)
from .tensor import hermitian_trace_distance, psd_sqrt, truncated_svd

#: singular values below this fraction of the largest are numerically zero
NULL_CUTOFF = 1e-13


@dataclass(frozen=True)
class TruncationPolicy:
    max_rank: Optional[int] = None
    cutoff: Optional[float] = None

    def __post_init__(self):
        if self.max_rank is not None and self.max_rank < 1:
            raise ConfigError("max_rank must be >= 1")
        if self.cutoff is not None and not 0 <= self.cutoff < 1:
            raise ConfigError("cutoff must lie in [0, 1)")

    def effective_cutoff(self, floor=NULL_CUTOFF):
        return max(self.cutoff or 0.0, floor)


NO_TRUNCATION = TruncationPolicy()


def _edge_transform(m_vw, m_wv, trunc):
    """Bond transforms for one edge from its two messages.

    Returns ``(x, y_t, lam)`` such that attaching ``x`` to the bond of the
    first endpoint and ``y_t`` to the second leaves ``x diag(lam) y_t^T`` in
    place of the identity (on the support of the messages).
    """
    half_v, inv_v = psd_sqrt(m_vw, check=False)
    half_w, inv_w = psd_sqrt(m_wv, check=False)
    core = half_v.conj() @ half_w.conj().T
    if not np.any(core):
        raise DegenerateMessage("bond core vanished; messages have disjoint support")
    u, s, vh, _ = truncated_svd(core, trunc.max_rank, trunc.effective_cutoff())
    x = inv_v.conj() @ u
    y_t = (vh @ inv_w.conj().T).T
    return x, y_t, s


def _gauge(tns: TensorNetworkState, msgs: MessageSet, trunc: TruncationPolicy):
    g = tns.graph
    tensors = dict(tns.tensors)
    lambdas, transforms = {}, {}
    log_scale = tns.log_scale
    for eid, (v, w) in g.edges.items():
        x, y_t, s = _edge_transform(msgs[(eid, v)], msgs[(eid, w)], trunc)
        total = float(np.sum(s))
        lambdas[eid] = s / total
        log_scale += np.log(total)
        tensors[v] = apply_bond_matrix(tensors[v], 1 + g.slot(v, eid), x)
        tensors[w] = apply_bond_matrix(tensors[w], 1 + g.slot(w, eid), y_t)
        transforms[eid] = (x, y_t)
    vs = VidalState(g, tensors, lambdas, tns.site_dims, log_scale)
    return vs, transforms


def gauge_from_messages(
    tns: TensorNetworkState, msgs: MessageSet, trunc: TruncationPolicy = NO_TRUNCATION
) -> VidalState:
    """Vidal form of ``tns`` built from (converged) messages.

    On every edge the core ``conj(h_vw) h_wv^dagger`` of the two square-root
    messages is decomposed as ``U diag(lam) V^dagger``; the first endpoint
    takes ``conj(h_vw^-1) U`` and the second ``V^dagger h_wv^-dagger`` (on its
    bond axis, transposed). Null singular values and anything removed by
    ``trunc`` are discarded.
    """
    return _gauge(tns, msgs, trunc)[0]


def lambda_messages(vs: VidalState) -> MessageSet:
    """Messages ``diag(lam)`` (unit trace) on both orientations of every edge."""
    g = vs.graph
    out = {}
    for eid, (v, w) in g.edges.items():
        lam = vs.lambdas[eid]
        m = np.diag(lam / lam.sum()).astype(complex)
        out[(eid, v)] = m
        out[(eid, w)] = m.copy()
    return MessageSet(g, out)


def bp_gauge(tns: TensorNetworkState, cfg: BpConfig = BpConfig(), trunc: TruncationPolicy = NO_TRUNCATION, msgs=None):
    """Belief propagation to ``cfg.target_delta`` followed by one gauge transformation."""
    start = time.perf_counter()
    msgs, report = bp_run(tns, cfg, msgs)
    vs = gauge_from_messages(tns, msgs, trunc)
    report.wall_time = time.perf_counter() - start
    return vs, report


def eager_gauge(tns: TensorNetworkState, cfg: BpConfig = BpConfig(), trunc: TruncationPolicy = NO_TRUNCATION, msgs=None):
    """Alternate one BP sweep on the symmetric form with a full regauge.

    After each regauge the messages are reset to the new bond weights. The
    reported delta compares consecutive sweeps in the gauge of the input
    state (messages are mapped back through the accumulated bond
    transforms), so it matches :func:`bp_gauge` sweep by sweep when no damping
    is used.
    """
    g = tns.graph
    if msgs is None:
        msgs = init_messages(tns, cfg.init, cfg.seed)
    order = cfg.order_for(g) if cfg.schedule == SEQUENTIAL else None
    # acc[eid] = (G, H): current bond axis of v is T_v's bond times G, of w times H
    acc = {e: (np.eye(tns.bond_dim(e), dtype=complex),) * 2 for e in g.edges}
    state = tns
    report = GaugeReport()
    vs = None
    start = time.perf_counter()

    def to_input_gauge(m):
        out = {}
        for eid, (v, w) in g.edges.items():
            gm, hm = acc[eid]
            out[(eid, v)] = K.normalize_message(hm @ m[(eid, v)] @ hm.conj().T)
            out[(eid, w)] = K.normalize_message(gm @ m[(eid, w)] @ gm.conj().T)
        return out

    for _ in range(cfg.max_iters):
        # both sides mapped through the same transforms, so directions a
        # dropped null space hides do not register as change
        before = to_input_gauge(msgs)
        msgs, _ = bp_iterate(state, msgs, cfg, order)
        delta = _delta(g, before, to_input_gauge(msgs))
        vs, transforms = _gauge(state, msgs, trunc)
        state = vidal_to_symmetric(vs)
        msgs = lambda_messages(vs)
        for eid, (x, y_t) in transforms.items():
            gm, hm = acc[eid]
            root = np.sqrt(vs.lambdas[eid])
            acc[eid] = (gm @ x * root[None, :], hm @ y_t * root[None, :])
        report.record(delta, time.perf_counter() - start)
        if delta <= cfg.target_delta:
            report.converged = True
            break
    report.wall_time = time.perf_counter() - start
    return vs, report


# -- simple-update gauging ---------------------------------------------------

def _without_bond(t, axis):
    """Move ``axis`` last and flatten the rest: shape ``(rest, chi)``."""
    moved = np.moveaxis(t, axis, -1)
    return moved.reshape(-1, moved.shape[-1]), moved.shape[:-1]


def _inverse_weights(lam):
    inv = np.zeros_like(lam)
    mask = lam > NULL_CUTOFF * lam[0]
    inv[mask] = 1.0 / lam[mask]
    return inv


def _weighted(vs_gamma, g, lambdas, v, skip):
    t = vs_gamma[v]
    for k, f in enumerate(g.incident(v)):
        if f != skip:
            t = scale_axis(t, 1 + k, lambdas[f])
    return t


def _unweight(t, g, lambdas, v, skip):
    for k, f in enumerate(g.incident(v)):
        if f != skip:
            t = scale_axis(t, 1 + k, _inverse_weights(lambdas[f]))
    return t


def _isometry_residual(r):
    """Normalized trace distance of ``R^T conj(R)`` from the identity."""
    gram = r.T @ r.conj()
    return hermitian_trace_distance(gram, np.eye(gram.shape[0]))


def su_gauge_edge(gamma, lambdas, g, eid, trunc: TruncationPolicy = NO_TRUNCATION, log_scale=0.0):
    """Identity simple-update step on one edge, updating ``gamma``/``lambdas`` in place.

    Returns ``(log_scale, residual)`` where ``residual`` is the sum, over the
    two orientations of the edge, of the isometry defect measured before the
    step.
    """
    v, w = g.edges[eid]
    av, bv = 1 + g.slot(v, eid), 1 + g.slot(w, eid)
    mv, shape_v = _without_bond(_weighted(gamma, g, lambdas, v, eid), av)
    mw, shape_w = _without_bond(_weighted(gamma, g, lambdas, w, eid), bv)
    qv, rv = np.linalg.qr(mv)
    qw, rw = np.linalg.qr(mw)
    residual = _isometry_residual(rv) + _isometry_residual(rw)
    core = (rv * lambdas[eid][None, :]) @ rw.T
    u, s, vh, _ = truncated_svd(core, trunc.max_rank, trunc.effective_cutoff())
    new_v = (qv @ u).reshape(shape_v + (len(s),))
    new_w = (qw @ vh.T).reshape(shape_w + (len(s),))
    new_v = np.moveaxis(new_v, -1, av)
    new_w = np.moveaxis(new_w, -1, bv)
    gamma[v] = _unweight(new_v, g, lambdas, v, eid)
    gamma[w] = _unweight(new_w, g, lambdas, w, eid)
    total = float(np.sum(s))
    lambdas[eid] = s / total
    return log_scale + np.log(total), residual


def su_edge_order(graph, cfg: BpConfig = BpConfig()):
    """Undirected edges in order of first appearance in the BP sweep order."""
    seen, out = set(), []
    for eid, _ in cfg.order_for(graph):
        if eid not in seen:
            seen.add(eid)
            out.append(eid)
    return out


def simple_update_gauge(state, cfg: BpConfig = BpConfig(), trunc: TruncationPolicy = NO_TRUNCATION):
    """Sweep identity simple-update steps until the isometry residual is below target.

    ``state`` may be a :class:`VidalState` or a plain state (wrapped with unit
    bond weights). The per-sweep figure of merit averages, over directed edges,
    the defect of each edge's isometry condition as seen by the QR factors
    inside that sweep; it lags the true distance by at most one sweep.
    """
    if isinstance(state, TensorNetworkState):
        state = VidalState.from_tns(state)
    g = state.graph
    gamma = dict(state.gamma)
    lambdas = {e: np.asarray(l, dtype=float) for e, l in state.lambdas.items()}
    log_scale = state.log_scale
    order = su_edge_order(g, cfg)
    report = GaugeReport()
    start = time.perf_counter()
    for _ in range(cfg.max_iters):
        total = 0.0
        for eid in order:
            log_scale, res = su_gauge_edge(gamma, lambdas, g, eid, trunc, log_scale)
            total += res
        delta = total / (2 * g.num_edges)
        report.record(delta, time.perf_counter() - start)
        if delta <= cfg.target_delta:
            report.converged = True
            break
    report.wall_time = time.perf_counter() - start
    return VidalState(g, gamma, lambdas, state.site_dims, log_scale), report


# -- diagnostics -------------------------------------------------------------

def vidal_distance(vs: VidalState) -> float:
    """Average over directed edges of the isometry defect of the Vidal tensors.

    For vertex ``v`` and edge ``e``, ``Gamma_v`` with the weights of every
    other incident edge absorbed is contracted with its conjugate over all
    but ``e``; the result is compared with the identity in normalized trace
    distance.
    """
    g = vs.graph
    total = 0.0
    for v in g.vertices:
        for k, eid in enumerate(g.incident(v)):
            w = _weighted(vs.gamma, g, vs.lambdas, v, eid)
            m, _ = _without_bond(w, 1 + k)
            gram = m.T @ m.conj()
            total += hermitian_trace_distance(gram, np.eye(gram.shape[0]))
    return total / (2 * g.num_edges)


def lambda_spectra_distance(a: VidalState, b: VidalState) -> float:
    """Largest per-edge max-abs difference of bond weights (zero padded)."""
    worst = 0.0
    for eid in a.graph.edges:
        x, y = a.lambdas[eid], b.lambdas[eid]
        n = max(len(x), len(y))
        x = np.pad(x, (0, n - len(x)))
        y = np.pad(y, (0, n - len(y)))
        worst = max(worst, float(np.max(np.abs(x - y))))
    return worst
