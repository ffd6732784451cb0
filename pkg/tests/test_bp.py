import numpy as np
import pytest
from hypothesis import given, strategies as st

from bpgauge.bp import (
    SEQUENTIAL,
    SYNCHRONOUS,
    BpConfig,
    MessageSet,
    SqrtMessageSet,
    bp_iterate,
    bp_run,
    bp_update_edge,
    default_edge_order,
    init_messages,
    sqrt_bp_iterate,
    sqrt_bp_update_edge,
)
from bpgauge.errors import ConfigError, DegenerateMessage
from bpgauge.models import LatticeSpec, build_graph, random_tns
from bpgauge.network import Graph, TensorNetworkState
from bpgauge.tensor import Index, LabeledTensor, hermitian_trace_distance, psd_sqrt, qr

from oracles import exact_vertex_environment, random_psd


def ntd(a, b):
    return hermitian_trace_distance(a, b)


def site_matrix(t, axis):
    """Trace-normalized sum over all but one bond of T T^*."""
    k = np.moveaxis(t, axis, -1).reshape(-1, t.shape[axis])
    m = k.T @ k.conj()
    return m / np.trace(m).real


def path_sweep_order(length):
    return [(k, k) for k in range(length - 1)] + [(k, k + 1) for k in reversed(range(length - 1))]


GRAPHS = [
    LatticeSpec.square(3),
    LatticeSpec("square", (2, 3)),
    LatticeSpec("tree", (8,), seed=1),
    LatticeSpec("random_regular", (8, 3), seed=2),
    LatticeSpec.square(2, periodic=True),
]


# -- initialization --------------------------------------------------------------

def test_identity_init():
    g = build_graph(LatticeSpec.path(2))
    msgs = init_messages(random_tns(g, 3, 2, 0))
    assert np.allclose(msgs[(0, 0)], np.eye(3) / 3)
    assert len(msgs) == 2


def test_random_init_deterministic_and_valid():
    g = build_graph(LatticeSpec.square(3))
    tns = random_tns(g, 3, 2, 0)
    a = init_messages(tns, "random_psd", 1)
    b = init_messages(tns, "random_psd", 1)
    for de in a:
        assert np.array_equal(a[de], b[de])
    assert a.check()


def test_bad_config():
    with pytest.raises(ConfigError):
        BpConfig(max_iters=0)
    with pytest.raises(ConfigError):
        BpConfig(target_delta=0)
    with pytest.raises(ConfigError):
        BpConfig(damping=1.0)
    g = build_graph(LatticeSpec.path(3))
    with pytest.raises(ConfigError):
        BpConfig(edge_order=((0, 0),)).order_for(g)


# -- single updates ----------------------------------------------------------------

def test_leaf_message_independent_of_inputs():
    g = build_graph(LatticeSpec.path(3))
    tns = random_tns(g, 3, 2, 4, complex_entries=True)
    a = bp_update_edge(tns, init_messages(tns), (0, 0)).data
    b = bp_update_edge(tns, init_messages(tns, "random_psd", 3), (0, 0)).data
    assert np.allclose(a, b, atol=1e-15)
    assert np.allclose(a, site_matrix(tns.tensors[0], 1), atol=1e-14)


def test_path_exact_message_from_partial_chain():
    g = build_graph(LatticeSpec.path(3))
    tns = random_tns(g, 3, 2, 6, complex_entries=True)
    t0, t1 = tns.tensors[0], tns.tensors[1]
    exact01 = np.einsum("sa,sb->ab", t0, t0.conj())
    msgs = init_messages(tns, "random_psd", 0)
    msgs.messages[(0, 0)] = exact01 / np.trace(exact01)
    out = bp_update_edge(tns, msgs, (1, 1)).data
    ref = np.einsum("sa,sb,tac,tbd->cd", t0, t0.conj(), t1, t1.conj())
    assert ntd(out, ref) < 1e-13


def test_left_orthogonal_tensor_passes_identity():
    g = build_graph(LatticeSpec.path(3))
    rng = np.random.default_rng(0)
    q, _ = np.linalg.qr(rng.standard_normal((2 * 3, 3)))
    a = q.reshape(2, 3, 3)
    tns = random_tns(g, 3, 2, 0).with_tensors({1: a})
    out = bp_update_edge(tns, init_messages(tns), (1, 1)).data
    assert np.allclose(out, np.eye(3) / 3, atol=1e-14)


def test_zero_slice_raises():
    g = build_graph(LatticeSpec.path(2))
    tns = TensorNetworkState(g, {0: np.zeros((2, 2)), 1: np.ones((2, 2))}, {0: 2, 1: 2})
    with pytest.raises(DegenerateMessage):
        bp_update_edge(tns, init_messages(tns), (0, 0))


@given(st.integers(0, len(GRAPHS) - 1), st.integers(1, 3), st.integers(0, 2**32 - 1))
def test_updates_preserve_positivity(which, chi, seed):
    g = build_graph(GRAPHS[which])
    tns = random_tns(g, chi, 2, seed % 997, complex_entries=True)
    msgs = init_messages(tns, "random_psd", seed)
    for de in g.directed_edges():
        m = bp_update_edge(tns, msgs, de).data
        ev = np.linalg.eigvalsh(m)
        assert np.allclose(m, m.conj().T, atol=1e-14)
        assert ev[0] >= -1e-12 * ev[-1]
        assert abs(np.trace(m) - 1) < 1e-12


# -- sweeps --------------------------------------------------------------------------

def test_fixed_point_has_zero_delta():
    g = build_graph(LatticeSpec.square(3))
    tns = random_tns(g, 2, 2, 1)
    msgs, rep = bp_run(tns, BpConfig(target_delta=1e-15, max_iters=400))
    assert rep.converged
    _, delta = bp_iterate(tns, msgs)
    assert delta <= 1e-14


@pytest.mark.parametrize("length", [2, 5, 9])
def test_path_converges_after_one_left_right_sweep(length):
    g = build_graph(LatticeSpec.path(length))
    tns = random_tns(g, 3, 2, length, complex_entries=True)
    cfg = BpConfig(edge_order=tuple(path_sweep_order(length)))
    msgs, _ = bp_iterate(tns, init_messages(tns, "random_psd", 2), cfg)
    _, delta = bp_iterate(tns, msgs, cfg)
    assert delta <= 1e-13


def test_synchronous_independent_of_thread_count():
    g = build_graph(LatticeSpec.square(4))
    tns = random_tns(g, 3, 2, 0)
    msgs = init_messages(tns, "random_psd", 1)
    a, da = bp_iterate(tns, msgs, BpConfig(schedule=SYNCHRONOUS, threads=1))
    b, db = bp_iterate(tns, msgs, BpConfig(schedule=SYNCHRONOUS, threads=3))
    assert da == db
    for de in a:
        assert np.array_equal(a[de], b[de])


def test_synchronous_matches_single_updates():
    g = build_graph(LatticeSpec("square", (2, 3)))
    tns = random_tns(g, 2, 2, 5, complex_entries=True)
    msgs = init_messages(tns, "random_psd", 1)
    new, _ = bp_iterate(tns, msgs, BpConfig(schedule=SYNCHRONOUS))
    for de in g.directed_edges():
        assert np.allclose(new[de], bp_update_edge(tns, msgs, de).data, atol=1e-14)


def test_damping_blends_before_normalizing():
    g = build_graph(LatticeSpec.path(3))
    tns = random_tns(g, 2, 2, 5)
    msgs = init_messages(tns, "random_psd", 1)
    new, _ = bp_iterate(tns, msgs, BpConfig(schedule=SYNCHRONOUS, damping=0.5))
    plain = bp_update_edge(tns, msgs, (0, 0)).data
    expect = 0.5 * plain + 0.5 * msgs[(0, 0)]
    assert np.allclose(new[(0, 0)], expect / np.trace(expect), atol=1e-14)


@pytest.mark.parametrize("seed", range(4))
def test_tree_converges_in_two_sweeps(seed):
    g = build_graph(LatticeSpec("tree", (10,), seed=seed))
    tns = random_tns(g, 3, 2, seed)
    _, rep = bp_run(tns, BpConfig(target_delta=1e-12))
    assert rep.converged and rep.iterations <= 2
    assert len(rep.deltas) == rep.iterations


def test_random_lattice_reaches_target():
    g = build_graph(LatticeSpec.square(4))
    tns = random_tns(g, 3, 2, 0)
    msgs, rep = bp_run(tns, BpConfig(target_delta=1e-10))
    assert rep.converged and rep.final_delta <= 1e-10
    assert msgs.check()


def test_nonconvergence_is_flagged_not_raised():
    g = build_graph(LatticeSpec.square(4))
    _, rep = bp_run(random_tns(g, 3, 2, 0), BpConfig(target_delta=1e-15, max_iters=2))
    assert not rep.converged and rep.iterations == 2


def test_default_order_covers_each_directed_edge_once():
    g = build_graph(LatticeSpec("random_regular", (12, 3), seed=0))
    order = default_edge_order(g)
    assert sorted(order) == sorted(g.directed_edges())


# -- tree exactness and the fixed-point identity ----------------------------------------

@pytest.mark.parametrize("seed", range(3))
def test_tree_messages_are_exact_environments(seed):
    g = build_graph(LatticeSpec("tree", (8,), seed=seed))
    tns = random_tns(g, 2, 2, seed, complex_entries=True)
    msgs, _ = bp_run(tns, BpConfig(target_delta=1e-14))
    for v in g.vertices:
        env = exact_vertex_environment(g, tns.tensors, v)
        prod = np.ones((1, 1))
        for m in msgs.incoming(v):
            prod = np.kron(prod, m)
        assert ntd(prod, env) < 1e-10


def test_fixed_point_isometry_identity():
    g = build_graph(LatticeSpec.square(3))
    tns = random_tns(g, 3, 2, 2)
    target = 1e-10
    msgs, _ = bp_run(tns, BpConfig(target_delta=target))
    for de in g.directed_edges():
        env = bp_update_edge(tns, msgs, de).data
        _, inv = psd_sqrt(msgs[de])
        dressed = inv.conj().T @ env @ inv
        assert ntd(dressed, np.eye(len(dressed))) <= 10 * target


# -- square-root updates ---------------------------------------------------------------

def test_sqrt_leaf_update():
    g = build_graph(LatticeSpec.path(3))
    tns = random_tns(g, 3, 2, 4, complex_entries=True)
    sq = SqrtMessageSet.from_messages(init_messages(tns))
    h = sqrt_bp_update_edge(tns, sq, (0, 0)).data
    assert ntd(h.conj().T @ h, site_matrix(tns.tensors[0], 1)) < 1e-13


@given(st.integers(0, len(GRAPHS) - 1), st.integers(1, 3), st.integers(0, 2**32 - 1), st.sampled_from([SEQUENTIAL, SYNCHRONOUS]))
def test_sqrt_sweep_matches_plain_sweep(which, chi, seed, schedule):
    g = build_graph(GRAPHS[which])
    tns = random_tns(g, chi, 2, seed % 991, complex_entries=True)
    msgs = init_messages(tns, "random_psd", seed)
    cfg = BpConfig(schedule=schedule)
    plain, d1 = bp_iterate(tns, msgs, cfg)
    sq, d2 = sqrt_bp_iterate(tns, SqrtMessageSet.from_messages(msgs), cfg)
    squared = sq.squared()
    for de in plain:
        assert np.max(np.abs(squared[de] - plain[de])) < 1e-10
    assert abs(d1 - d2) < 1e-9


def test_sqrt_left_sweep_factors_are_isometries():
    g = build_graph(LatticeSpec.path(5))
    tns = random_tns(g, 3, 2, 9, complex_entries=True)
    half = np.eye(1)
    for k in range(4):
        t = tns.tensors[k]
        if k:
            t = np.tensordot(half, t, axes=(1, 1)).transpose(1, 0, 2)
        lt = LabeledTensor([Index("s", t.shape[0]), Index("l", t.shape[1]), Index("r", t.shape[2])], t) if k else \
            LabeledTensor([Index("s", t.shape[0]), Index("r", t.shape[1])], t)
        rows = ["s", "l"] if k else ["s"]
        q, r = qr(lt.matrix_view(rows))
        qm = q.data.reshape(-1, q.shape[-1])
        assert np.allclose(qm.conj().T @ qm, np.eye(qm.shape[1]), atol=1e-13)
        half = r.data
