"""Acceptance gate: one test per criterion, each printing a PASS/FAIL line.

The lines are also collected and repeated in the terminal summary under
"acceptance criteria".
"""

import subprocess
import sys
import time
from pathlib import Path

import numpy as np
import pytest

from bpgauge.bench import fit_exponent, time_per_iteration
from bpgauge.bp import BpConfig, SqrtMessageSet, bp_iterate, bp_run, init_messages, sqrt_bp_iterate
from bpgauge.evolution import EvolutionConfig, evolve, random_unitary_layers, trotter_ising_layer
from bpgauge.gauging import bp_gauge, eager_gauge, lambda_messages, lambda_spectra_distance, simple_update_gauge, vidal_distance
from bpgauge.models import LatticeSpec, build_graph, ising_sqrt_partition_state, neel_state, random_tns
from bpgauge.network import vidal_to_symmetric
from bpgauge.observables import SZ, rank_one_expectation, tfim_energy_exact
from bpgauge.tensor import hermitian_trace_distance

from oracles import einsum_state, schmidt_spectrum, state_vector

ROUTINES = {"bp": bp_gauge, "eager": eager_gauge, "simple_update": simple_update_gauge}

INSTANCES = [
    (LatticeSpec.square(4), 2, 0),
    (LatticeSpec.square(4), 3, 1),
    (LatticeSpec.square(4), 4, 2),
    (LatticeSpec.square(3), 2, 3),
    (LatticeSpec.square(3), 3, 4),
    (LatticeSpec.square(3), 4, 5),
    (LatticeSpec("tree", (10,), seed=6), 3, 6),
    (LatticeSpec("tree", (10,), seed=7), 4, 7),
    (LatticeSpec("random_regular", (12, 3), seed=8), 2, 8),
    (LatticeSpec("random_regular", (12, 3), seed=9), 3, 9),
]


def label(spec, chi):
    return f"{spec.kind}{'x'.join(map(str, spec.dims))}/chi{chi}"


@pytest.fixture(scope="module")
def gauged_instances():
    """Every criterion-1 instance gauged by all three routines (timed once)."""
    cfg = BpConfig(target_delta=1e-10)
    start = time.perf_counter()
    out = []
    for spec, chi, seed in INSTANCES:
        g = build_graph(spec)
        tns = random_tns(g, chi, 2, seed)
        ref = einsum_state(g, tns.tensors)
        runs = {name: fn(tns, cfg) for name, fn in ROUTINES.items()}
        out.append((spec, chi, tns, ref, runs))
    return out, time.perf_counter() - start


def test_criterion_01_gauge_correctness(gauged_instances, verdict):
    instances, seconds = gauged_instances
    worst_c, worst_amp, failures = 0.0, 0.0, []
    for spec, chi, tns, ref, runs in instances:
        for name, (vs, rep) in runs.items():
            c = vidal_distance(vs)
            psi = state_vector(vs)
            amp = float(np.max(np.abs(psi - ref)) / np.max(np.abs(ref)))
            worst_c, worst_amp = max(worst_c, c), max(worst_amp, amp)
            if not (rep.converged and c <= 1e-8 and amp <= 1e-9):
                failures.append(f"{label(spec, chi)}:{name}")
    ok = not failures and seconds < 120
    verdict(1, ok, f"max C={worst_c:.1e} (<=1e-8), max amplitude err={worst_amp:.1e} (<=1e-9), "
                   f"{seconds:.1f}s (<120s) failures={failures}")
    assert ok


def test_criterion_02_tree_exactness(verdict):
    specs = [LatticeSpec.path(n) for n in (2, 6, 12)] + [LatticeSpec("tree", (n,), seed=s) for n, s in ((8, 0), (11, 1), (12, 2))]
    worst_delta, worst_lam, max_sweeps = 0.0, 0.0, 0
    for k, spec in enumerate(specs):
        g = build_graph(spec)
        tns = random_tns(g, 3, 2, k, complex_entries=True)
        vs, rep = bp_gauge(tns, BpConfig(target_delta=1e-13))
        max_sweeps = max(max_sweeps, rep.iterations)
        worst_delta = max(worst_delta, rep.final_delta)
        psi = einsum_state(g, tns.tensors)
        for e in g.edges:
            ref = schmidt_spectrum(psi, g, e, tns.site_dims)
            lam = np.pad(vs.lambdas[e], (0, max(0, len(ref) - vs.bond_dim(e))))
            ref = np.pad(ref, (0, max(0, len(lam) - len(ref))))
            worst_lam = max(worst_lam, float(np.max(np.abs(lam - ref))))
    ok = max_sweeps <= 2 and worst_delta <= 1e-13 and worst_lam <= 1e-9
    verdict(2, ok, f"max sweeps={max_sweeps} (<=2), max final delta={worst_delta:.1e} (<=1e-13), "
                   f"max |Lambda - Schmidt|={worst_lam:.1e} (<=1e-9)")
    assert ok


def test_criterion_03_iteration_parity(gauged_instances, verdict):
    instances, _ = gauged_instances
    pairs = [(runs["bp"][1].iterations, runs["eager"][1].iterations) for *_, runs in instances]
    ok = all(a == b for a, b in pairs)
    verdict(3, ok, f"(bp, eager) sweeps per instance: {pairs}")
    assert ok


def test_criterion_04_common_fixed_point(gauged_instances, verdict):
    instances, _ = gauged_instances
    worst = 0.0
    for *_, runs in instances:
        states = [runs[name][0] for name in ROUTINES]
        for i in range(3):
            for j in range(i):
                worst = max(worst, lambda_spectra_distance(states[i], states[j]))
    ok = worst <= 1e-6
    verdict(4, ok, f"max pairwise per-edge Lambda difference={worst:.1e} (<=1e-6)")
    assert ok


def test_criterion_05_scaling(verdict):
    start = time.perf_counter()
    chis = [4, 8, 12, 16]
    t_chi = [time_per_iteration("bp", LatticeSpec.square(6), c, sweeps=5, repeats=3) for c in chis]
    sizes = [4, 8, 12, 16]
    t_n = [time_per_iteration("bp", LatticeSpec.square(size), 4, sweeps=5, repeats=3) for size in sizes]
    a_chi = fit_exponent(chis, t_chi)
    a_n = fit_exponent([s * s for s in sizes], t_n)
    seconds = time.perf_counter() - start
    ok = 4.3 <= a_chi <= 5.7 and 0.8 <= a_n <= 1.2 and seconds < 600
    verdict(5, ok, f"chi exponent={a_chi:.2f} (in [4.3,5.7]), N exponent={a_n:.2f} (in [0.8,1.2]), "
                   f"per-sweep seconds chi={['%.2e' % t for t in t_chi]} N={['%.2e' % t for t in t_n]}, {seconds:.0f}s")
    assert ok


def test_criterion_06_speed_ordering(verdict):
    g = build_graph(LatticeSpec.square(6))
    tns = random_tns(g, 16, 2, 0)
    cfg = BpConfig(target_delta=1e-10)
    totals, sweeps, cs = {}, {}, {}
    for name, fn in ROUTINES.items():
        start = time.perf_counter()
        vs, rep = fn(tns, cfg)
        totals[name] = time.perf_counter() - start
        sweeps[name] = rep.iterations
        cs[name] = vidal_distance(vs)
    ok = totals["bp"] <= totals["eager"] and totals["bp"] <= totals["simple_update"] and max(cs.values()) <= 1e-8
    verdict(6, ok, "seconds " + ", ".join(f"{k}={v:.2f}" for k, v in totals.items())
            + " | sweeps " + ", ".join(f"{k}={v}" for k, v in sweeps.items()))
    assert ok


def crossing(deltas, target):
    """Sweeps needed to reach ``target``, interpolating log(delta) over the last sweep."""
    d = np.log(np.asarray(deltas))
    n = int(np.argmax(d <= np.log(target))) + 1
    if n == 1:
        return 1.0
    return (n - 1) + (d[n - 2] - np.log(target)) / (d[n - 2] - d[n - 1])


def test_criterion_07_critical_peak(verdict):
    start = time.perf_counter()
    g = build_graph(LatticeSpec.cubic(4))
    betas = [round(0.10 + 0.02 * k, 2) for k in range(21)]
    counts, fractional = [], []
    for beta in betas:
        _, rep = bp_run(ising_sqrt_partition_state(g, beta, 0.5), BpConfig(target_delta=1e-8))
        assert rep.converged
        counts.append(rep.iterations)
        fractional.append(crossing(rep.deltas, 1e-8))
    top = max(counts)
    tied = [b for b, c in zip(betas, counts) if c == top]
    peak = betas[int(np.argmax(fractional))]
    seconds = time.perf_counter() - start
    # integer sweep counts tie on a plateau; the interpolated crossing breaks the tie
    ok = 0.22 <= peak <= 0.34 and any(0.22 <= b <= 0.34 for b in tied) and seconds < 300
    verdict(7, ok, f"max sweeps={top} at beta={tied}; interpolated peak at beta={peak} "
                   f"({max(fractional):.2f} sweeps), window [0.22,0.34], {seconds:.0f}s")
    assert ok


def test_criterion_08_symmetric_gauge_fixed_point(verdict):
    g = build_graph(LatticeSpec.square(4))
    vs, _ = bp_gauge(random_tns(g, 3, 2, 0), BpConfig(target_delta=1e-14, max_iters=2000))
    c = vidal_distance(vs)
    sym = vidal_to_symmetric(vs)
    start = lambda_messages(vs)
    msgs, delta = bp_iterate(sym, start, BpConfig())
    err_sq, err_lin = 0.0, 0.0
    for eid, (v, w) in g.edges.items():
        lam = vs.lambdas[eid]
        sq = np.diag(lam**2 / np.sum(lam**2))
        lin = np.diag(lam / np.sum(lam))
        for de in ((eid, v), (eid, w)):
            err_sq = max(err_sq, float(np.max(np.abs(msgs[de] - sq))))
            err_lin = max(err_lin, float(np.max(np.abs(msgs[de] - lin))))
    ok = c <= 1e-10 and delta <= 1e-8 and err_sq <= 1e-8
    verdict(8, ok, f"C={c:.1e}, one-sweep delta={delta:.1e} (<=1e-8), |M - Lambda^2|={err_sq:.1e} (<=1e-8); "
                   f"messages match Lambda itself to {err_lin:.1e}")
    assert ok


def test_criterion_09_sqrt_bp_equivalence(verdict):
    worst, sweeps = 0.0, 0
    for spec, chi, seed in INSTANCES:
        g = build_graph(spec)
        tns = random_tns(g, chi, 2, seed)
        cfg = BpConfig()
        msgs = init_messages(tns)
        sq = SqrtMessageSet.from_messages(msgs)
        for _ in range(40):
            msgs, delta = bp_iterate(tns, msgs, cfg)
            sq, _ = sqrt_bp_iterate(tns, sq, cfg)
            squared = sq.squared()
            worst = max(worst, max(float(np.max(np.abs(squared[de] - msgs[de]))) for de in msgs))
            sweeps += 1
            if delta <= 1e-10:
                break
    ok = worst <= 1e-10
    verdict(9, ok, f"max |R^dag R - M| over {sweeps} sweeps on 10 instances = {worst:.1e} (<=1e-10)")
    assert ok


def test_criterion_10_evolution_with_regauging(verdict):
    start = time.perf_counter()
    g = build_graph(LatticeSpec.square(3))
    program = []
    for _ in range(8):
        program += trotter_ising_layer(g, 3.0, 0.25)
    energies = {}
    for every in (1, 0):
        cfg = EvolutionConfig(max_chi=2, regauge_every=every)
        traj = evolve(neel_state(g), program, cfg, verifier=None)
        energies[every] = tfim_energy_exact(traj.final_state, 3.0)
    fids = {1: [], 0: []}
    for seed in range(1, 6):
        layers = random_unitary_layers(g, 3, seed)
        for every in (1, 0):
            traj = evolve(neel_state(g), layers, EvolutionConfig(max_chi=2, regauge_every=every, seed=seed))
            fids[every].append(traj.running_fidelity())
    mean1, mean0 = float(np.mean(fids[1])), float(np.mean(fids[0]))
    seconds = time.perf_counter() - start
    ok = energies[1] <= energies[0] and mean1 >= mean0 and seconds < 300
    verdict(10, ok, f"energy/site regauge=1: {energies[1]:.5f}, never: {energies[0]:.5f}; "
                    f"mean F regauge=1: {mean1:.4f}, never: {mean0:.4f}; {seconds:.0f}s")
    assert ok


def test_criterion_11_infinite_lattice_consistency(verdict):
    start = time.perf_counter()
    cfg = BpConfig(target_delta=1e-12, max_iters=2000)
    g = build_graph(LatticeSpec.square(3, periodic=True))
    vs, _ = bp_gauge(ising_sqrt_partition_state(g, 0.3, 0.5), cfg)
    ref = rank_one_expectation(vs, SZ, (1, 1)).real
    diffs = []
    for size in (2, 4, 8):
        g = build_graph(LatticeSpec.square(size))
        vs, _ = bp_gauge(ising_sqrt_partition_state(g, 0.3, 0.5), cfg)
        diffs.append(abs(rank_one_expectation(vs, SZ, (size // 2, size // 2)).real - ref))
    seconds = time.perf_counter() - start
    ok = diffs[0] > diffs[1] > diffs[2] and seconds < 120
    verdict(11, ok, f"Sz periodic={ref:.6f}; |diff| for L=2,4,8: {['%.2e' % d for d in diffs]}; {seconds:.0f}s")
    assert ok


PROPERTY_TESTS = [
    "test_bp.py::test_updates_preserve_positivity",
    "test_network.py::test_gauge_insertion_leaves_contraction_unchanged",
    "test_tensor.py::test_svd_preserves_frobenius_and_reconstructs",
    "test_tensor.py::test_qr_reconstruction_property",
    "test_evolution.py::test_random_unitary_is_unitary",
    "test_evolution.py::test_trotter_layer_tends_to_identity",
    "test_evolution.py::test_gate_fidelity_bounded",
    "test_evolution.py::test_fidelity_function_bounded",
]


def test_criterion_12_property_suites(verdict):
    here = Path(__file__).parent
    from hypothesis import settings

    examples = settings().max_examples
    res = subprocess.run(
        [sys.executable, "-m", "pytest", "-q", "-p", "no:cacheprovider", "--hypothesis-show-statistics",
         *[str(here / t) for t in PROPERTY_TESTS]],
        capture_output=True, text=True, cwd=here.parent,
    )
    passing = res.stdout.count(" passing examples")
    ok = res.returncode == 0 and examples >= 100
    tail = res.stdout.strip().splitlines()[-1] if res.stdout.strip() else res.stderr[-200:]
    verdict(12, ok, f"{len(PROPERTY_TESTS)} property tests, max_examples={examples} (>=100), {tail}")
    assert ok, res.stdout[-3000:]
