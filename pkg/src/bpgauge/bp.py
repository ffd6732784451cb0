"""Belief propagation on the norm network of a tensor network state.

A message ``M[(e, v)]`` lives on the directed edge from ``v`` across bond
``e``; it is a ``chi x chi`` Hermitian PSD matrix indexed ``[ket, bra]``,
normalized to unit trace. The message entering vertex ``w`` on bond ``e`` is
``M[(e, other(e, w))]``.
"""

from __future__ import annotations

import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from . import _kernels as K
from .errors import ConfigError, DegenerateMessage
from .network import Graph, TensorNetworkState
from .tensor import (
    Index,
    LabeledTensor,
    batched_trace_distance,
    psd_sqrt,
)
from .network import bond_id

SEQUENTIAL = "sequential"
SYNCHRONOUS = "synchronous"


def default_edge_order(graph: Graph, root=None):
    """Deterministic sweep order over directed edges.

    Vertices are ranked by breadth-first search from ``root`` (smallest vertex
    by default). Messages pointing toward the root come first, leaves inward;
    then messages pointing away from the root, root outward. On a tree one
    sweep in this order reaches the exact fixed point.
    """
    rank = graph.bfs_rank(root)
    inward, outward = [], []
    for eid, (a, b) in graph.edges.items():
        for src, dst in ((a, b), (b, a)):
            if rank[dst] < rank[src]:
                inward.append((eid, src))
            else:
                outward.append((eid, src))
    inward.sort(key=lambda de: -rank[de[1]])
    outward.sort(key=lambda de: rank[de[1]])
    return inward + outward


@dataclass(frozen=True)
class BpConfig:
    schedule: str = SEQUENTIAL
    max_iters: int = 500
    target_delta: float = 1e-10
    damping: float = 0.0
    edge_order: Optional[tuple] = None
    init: str = "identity"
    seed: int = 0
    threads: int = 1

    def __post_init__(self):
        if self.schedule not in (SEQUENTIAL, SYNCHRONOUS):
            raise ConfigError(f"unknown schedule {self.schedule!r}")
        if self.max_iters < 1:
            raise ConfigError("max_iters must be >= 1")
        if not self.target_delta > 0:
            raise ConfigError("target_delta must be positive")
        if not 0 <= self.damping < 1:
            raise ConfigError("damping must lie in [0, 1)")
        if self.init not in ("identity", "random_psd"):
            raise ConfigError(f"unknown init strategy {self.init!r}")
        if self.threads < 1:
            raise ConfigError("threads must be >= 1")

    def order_for(self, graph: Graph):
        if self.edge_order is not None:
            order = list(self.edge_order)
            if sorted(map(repr, order)) != sorted(map(repr, graph.directed_edges())):
                raise ConfigError("edge_order must list every directed edge exactly once")
            return order
        return default_edge_order(graph)


@dataclass
class GaugeReport:
    iterations: int = 0
    final_delta: float = float("inf")
    deltas: list = field(default_factory=list)
    times: list = field(default_factory=list)
    wall_time: float = 0.0
    converged: bool = False

    def record(self, delta, elapsed):
        self.deltas.append(float(delta))
        self.times.append(float(elapsed))
        self.iterations = len(self.deltas)
        self.final_delta = float(delta)
        self.wall_time = float(elapsed)

    def csv_rows(self):
        return [(n + 1, d, t) for n, (d, t) in enumerate(zip(self.deltas, self.times))]


class MessageSet:
    """Unit-trace Hermitian messages on every directed edge."""

    __slots__ = ("graph", "messages")

    def __init__(self, graph: Graph, messages: dict, check: bool = False):
        self.graph = graph
        self.messages = dict(messages)
        missing = set(graph.directed_edges()) - set(self.messages)
        if missing:
            raise ValueError(f"messages missing on directed edges {sorted(map(repr, missing))[:3]}")
        if check:
            self.check()

    def __getitem__(self, de):
        return self.messages[de]

    def __iter__(self):
        return iter(self.messages)

    def __len__(self):
        return len(self.messages)

    def copy(self):
        return MessageSet(self.graph, self.messages)

    def incoming(self, v):
        """Messages entering ``v``, in the order of ``graph.incident(v)``."""
        g = self.graph
        return [self.messages[(e, g.other(e, v))] for e in g.incident(v)]

    def tensor(self, de) -> LabeledTensor:
        m = self.messages[de]
        ix = Index(bond_id(de[0]), m.shape[0])
        return LabeledTensor((ix, ix.bra()), m)

    def check(self, herm_tol=1e-10, psd_tol=1e-12, trace_tol=1e-10):
        for de, m in self.messages.items():
            scale = max(np.linalg.norm(m), 1e-300)
            if np.linalg.norm(m - m.conj().T) > herm_tol * scale:
                raise ValueError(f"message {de!r} is not Hermitian")
            ev = np.linalg.eigvalsh((m + m.conj().T) / 2)
            if ev[0] < -psd_tol * max(ev[-1], 1e-300):
                raise ValueError(f"message {de!r} is not PSD")
            if abs(np.trace(m) - 1) > trace_tol:
                raise ValueError(f"message {de!r} does not have unit trace")
        return True


class SqrtMessageSet:
    """Square-root factors ``h`` with ``h^dagger h`` the corresponding message."""

    __slots__ = ("graph", "messages")

    def __init__(self, graph: Graph, messages: dict):
        self.graph = graph
        self.messages = dict(messages)

    def __getitem__(self, de):
        return self.messages[de]

    @classmethod
    def from_messages(cls, msgs: MessageSet):
        out = {}
        for de, m in msgs.messages.items():
            half, _ = psd_sqrt(m)
            out[de] = half / np.linalg.norm(half)
        return cls(msgs.graph, out)

    def squared(self) -> MessageSet:
        out = {}
        for de, h in self.messages.items():
            out[de] = K.normalize_message(h.conj().T @ h)
        return MessageSet(self.graph, out)


def init_messages(tns: TensorNetworkState, strategy: str = "identity", seed: int = 0) -> MessageSet:
    g = tns.graph
    out = {}
    if strategy == "identity":
        for de in g.directed_edges():
            chi = tns.bond_dim(de[0])
            out[de] = np.eye(chi, dtype=complex) / chi
    elif strategy == "random_psd":
        rng = np.random.default_rng(seed)
        for de in g.directed_edges():
            chi = tns.bond_dim(de[0])
            a = rng.standard_normal((chi, chi)).astype(complex)
            m = a.conj().T @ a
            out[de] = m / np.trace(m).real
    else:
        raise ConfigError(f"unknown init strategy {strategy!r}")
    return MessageSet(g, out)


class _Plan:
    """Precomputed layout for repeated sweeps over one state.

    Vertices with identical tensor shapes form a class whose tensors are
    stacked so that a synchronous sweep costs a handful of batched matrix
    products per class. Messages of equal bond dimension share one flat
    ``(n, chi, chi)`` array; ``slot[de] = (chi, row)`` locates them.
    """

    BATCH_ELEMENTS = 1 << 16

    def __init__(self, tns: TensorNetworkState):
        g = tns.graph
        self.tns = tns
        self.graph = g
        self.slot = {}
        counts = {}
        for de in g.directed_edges():
            chi = tns.bond_dim(de[0])
            self.slot[de] = (chi, counts.get(chi, 0))
            counts[chi] = counts.get(chi, 0) + 1
        self.counts = counts
        groups = {}
        for v in g.vertices:
            groups.setdefault(tns.tensors[v].shape, []).append(v)
        chunks = []
        for shape, verts in groups.items():
            # keep each stacked batch cache-sized; huge batches are memory bound
            step = max(1, self.BATCH_ELEMENTS // int(np.prod(shape)))
            chunks += [(shape, verts[k:k + step]) for k in range(0, len(verts), step)]
        self.classes = []
        for shape, verts in chunks:
            t = np.stack([tns.tensors[v] for v in verts])
            incoming, outgoing = {}, {}
            for k in range(1, len(shape)):
                ins = [self.slot[(g.incident(v)[k - 1], g.other(g.incident(v)[k - 1], v))] for v in verts]
                outs = [self.slot[(g.incident(v)[k - 1], v)] for v in verts]
                incoming[k] = (ins[0][0], np.array([r for _, r in ins]))
                outgoing[k] = (outs[0][0], np.array([r for _, r in outs]))
            self.classes.append((verts, t, K.BraCache(t), incoming, outgoing))
        self._single = {}

    def single(self, v):
        """Batch-of-one tensor and bra cache for sequential updates."""
        hit = self._single.get(v)
        if hit is None:
            t = self.tns.tensors[v][None]
            hit = (t, K.BraCache(t))
            self._single[v] = hit
        return hit

    # flat message storage
    def to_flat(self, msgs: MessageSet):
        flat = {chi: np.empty((n, chi, chi), dtype=complex) for chi, n in self.counts.items()}
        for de, (chi, row) in self.slot.items():
            flat[chi][row] = msgs[de]
        return flat

    def from_flat(self, flat) -> MessageSet:
        return MessageSet(self.graph, {de: flat[chi][row] for de, (chi, row) in self.slot.items()})

    def sync_sweep(self, flat, damping=0.0, threads=1):
        new = {chi: np.empty_like(a) for chi, a in flat.items()}

        def work(cls):
            verts, t, bra, incoming, outgoing = cls
            mats = [None] + [flat[chi][rows] for chi, rows in (incoming[k] for k in sorted(incoming))]
            return outgoing, K.outgoing_environments(t, mats, list(incoming), bra)

        if threads > 1 and len(self.classes) > 1:
            with ThreadPoolExecutor(threads) as pool:
                results = list(pool.map(work, self.classes))
        else:
            results = [work(c) for c in self.classes]
        for outgoing, envs in results:
            for k, e in envs.items():
                chi, rows = outgoing[k]
                new[chi][rows] = e
        for chi in new:
            m = new[chi]
            if damping:
                m = K.normalize_messages(m)
                m = (1 - damping) * m + damping * flat[chi]
            new[chi] = K.normalize_messages(m)
        return new, self.flat_delta(flat, new)

    def flat_delta(self, old, new):
        total = 0.0
        for chi in sorted(new):
            total += float(np.sum(batched_trace_distance(old[chi], new[chi])))
        return total / (2 * self.graph.num_edges)


def _blend(new, old, damping):
    if damping:
        new = (1 - damping) * K.normalize_message(new) + damping * old
    return K.normalize_message(new)


def _sequential_sweep(plan: _Plan, cur: dict, order, damping):
    """In-place sequential sweep over ``cur``; runs sharing a source share work."""
    g = plan.graph
    old = dict(cur)
    for v, des in _runs(order):
        t, bra = plan.single(v)
        mats = [None] + [cur[(e, g.other(e, v))][None] for e in g.incident(v)]
        axes = {1 + g.slot(v, e): (e, v) for e, _ in des}
        envs = K.outgoing_environments(t, mats, list(axes), bra)
        for a, de in axes.items():
            cur[de] = _blend(envs[a][0], old[de], damping)
    return _delta(g, old, cur)


def bp_update_edge(tns: TensorNetworkState, msgs: MessageSet, de) -> LabeledTensor:
    """Updated message on directed edge ``de = (edge, source)`` as a labeled matrix."""
    eid, v = de
    g = tns.graph
    axis = 1 + g.slot(v, eid)
    mats = [None] + [m[None] for m in msgs.incoming(v)]
    env = K.outgoing_environments(tns.tensors[v][None], mats, [axis])[axis][0]
    m = K.normalize_message(env)
    ix = Index(bond_id(eid), m.shape[0])
    return LabeledTensor((ix, ix.bra()), m)


def _runs(order):
    """Split the edge order into maximal runs sharing a source vertex."""
    runs = []
    for de in order:
        if runs and runs[-1][0] == de[1]:
            runs[-1][1].append(de)
        else:
            runs.append((de[1], [de]))
    return runs


def _delta(graph, old, new):
    """Average normalized trace distance between two message dicts."""
    by_dim = {}
    for de in new:
        by_dim.setdefault(new[de].shape[0], []).append(de)
    total = 0.0
    for chi in sorted(by_dim):
        des = by_dim[chi]
        a = np.stack([old[de] for de in des])
        b = np.stack([new[de] for de in des])
        total += float(np.sum(batched_trace_distance(a, b)))
    return total / (2 * graph.num_edges)


def bp_iterate(tns: TensorNetworkState, msgs: MessageSet, cfg: BpConfig = BpConfig(), order=None, plan=None):
    """One sweep updating every directed edge once. Returns ``(new_msgs, delta)``.

    Sequential: updates in ``order`` (default :func:`default_edge_order`) see
    the newest messages. Synchronous: every update reads ``msgs``.
    """
    plan = _Plan(tns) if plan is None else plan
    if cfg.schedule == SEQUENTIAL:
        order = cfg.order_for(tns.graph) if order is None else order
        cur = dict(msgs.messages)
        delta = _sequential_sweep(plan, cur, order, cfg.damping)
        return MessageSet(tns.graph, cur), delta
    flat, delta = plan.sync_sweep(plan.to_flat(msgs), cfg.damping, cfg.threads)
    return plan.from_flat(flat), delta


def bp_run(
    tns: TensorNetworkState,
    cfg: BpConfig = BpConfig(),
    msgs: Optional[MessageSet] = None,
    callback: Optional[Callable] = None,
):
    """Iterate sweeps until ``delta <= cfg.target_delta`` or ``cfg.max_iters``.

    ``callback(iteration, msgs, delta)`` is called after each sweep.
    """
    if msgs is None:
        msgs = init_messages(tns, cfg.init, cfg.seed)
    report = GaugeReport()
    start = time.perf_counter()
    plan = _Plan(tns)
    if cfg.schedule == SEQUENTIAL:
        order = cfg.order_for(tns.graph)
        cur = dict(msgs.messages)
        for n in range(cfg.max_iters):
            delta = _sequential_sweep(plan, cur, order, cfg.damping)
            report.record(delta, time.perf_counter() - start)
            if callback is not None:
                callback(n + 1, MessageSet(tns.graph, cur), delta)
            if delta <= cfg.target_delta:
                report.converged = True
                break
        return MessageSet(tns.graph, cur), report
    flat = plan.to_flat(msgs)
    for n in range(cfg.max_iters):
        flat, delta = plan.sync_sweep(flat, cfg.damping, cfg.threads)
        report.record(delta, time.perf_counter() - start)
        if callback is not None:
            callback(n + 1, plan.from_flat(flat), delta)
        if delta <= cfg.target_delta:
            report.converged = True
            break
    return plan.from_flat(flat), report


# -- square-root updates -----------------------------------------------------

def _sqrt_vertex_updates(tns, v, halves_in, des):
    g = tns.graph
    axes = {1 + g.slot(v, e): (e, v) for e, _ in des}
    dags = [None] + [h.conj().T[None] for h in halves_in]
    ks = K.outgoing_sqrt_factors(tns.tensors[v][None], dags, list(axes))
    return {axes[a]: K.sqrt_factor_from_qr(ks[a][0]) for a in axes}


def sqrt_bp_update_edge(tns: TensorNetworkState, sqrt_msgs: SqrtMessageSet, de) -> LabeledTensor:
    """New square-root message on ``de``, labeled ``(new, bond)``."""
    eid, v = de
    g = tns.graph
    halves = [sqrt_msgs[(e, g.other(e, v))] for e in g.incident(v)]
    h = _sqrt_vertex_updates(tns, v, halves, [de])[de]
    ix = Index(bond_id(eid), h.shape[0])
    return LabeledTensor((Index(("sqrt", de), h.shape[0]), ix), h)


def sqrt_bp_iterate(tns, sqrt_msgs: SqrtMessageSet, cfg: BpConfig = BpConfig(), order=None):
    """Square-root analogue of :func:`bp_iterate` (no damping).

    Returns ``(new_sqrt_msgs, delta)`` where ``delta`` compares the squared
    messages before and after the sweep.
    """
    if cfg.damping:
        raise ConfigError("damping is not defined for square-root updates")
    g = tns.graph
    old = sqrt_msgs.messages
    cur = dict(old)
    if cfg.schedule == SEQUENTIAL:
        order = cfg.order_for(g) if order is None else order
        for v, des in _runs(order):
            halves = [cur[(e, g.other(e, v))] for e in g.incident(v)]
            cur.update(_sqrt_vertex_updates(tns, v, halves, des))
    else:
        for v in g.vertices:
            halves = [old[(e, g.other(e, v))] for e in g.incident(v)]
            cur.update(_sqrt_vertex_updates(tns, v, halves, [(e, v) for e in g.incident(v)]))
    new = SqrtMessageSet(g, cur)
    sq_old = {de: h.conj().T @ h for de, h in old.items()}
    sq_new = {de: h.conj().T @ h for de, h in cur.items()}
    return new, _delta(g, sq_old, sq_new)


def sqrt_bp_run(tns, cfg: BpConfig = BpConfig(), sqrt_msgs: Optional[SqrtMessageSet] = None):
    if sqrt_msgs is None:
        sqrt_msgs = SqrtMessageSet.from_messages(init_messages(tns, cfg.init, cfg.seed))
    report = GaugeReport()
    order = cfg.order_for(tns.graph) if cfg.schedule == SEQUENTIAL else None
    start = time.perf_counter()
    for _ in range(cfg.max_iters):
        sqrt_msgs, delta = sqrt_bp_iterate(tns, sqrt_msgs, cfg, order)
        report.record(delta, time.perf_counter() - start)
        if delta <= cfg.target_delta:
            report.converged = True
            break
    return sqrt_msgs, report
