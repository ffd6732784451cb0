"""Timing harness for the gauging routines."""

from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np

from .bp import BpConfig
from .gauging import bp_gauge, eager_gauge, simple_update_gauge, vidal_distance
from .models import LatticeSpec, build_graph, random_tns

ROUTINES = {
    "bp": bp_gauge,
    "eager": eager_gauge,
    "simple_update": simple_update_gauge,
}


def get_routine(name):
    try:
        return ROUTINES[name]
    except KeyError:
        raise ValueError(f"unknown routine {name!r}; expected one of {sorted(ROUTINES)}") from None


@dataclass
class Cell:
    routine: str
    lattice: str
    n: int
    chi: int
    iterations: int
    total_seconds: float
    seconds_per_iter: float
    final_delta: float
    final_c: float
    converged: bool

    HEADER = (
        "routine", "lattice", "N", "chi", "iterations", "total_seconds",
        "seconds_per_iter", "final_delta", "final_C_measured", "converged",
    )

    def row(self):
        return (
            self.routine, self.lattice, self.n, self.chi, self.iterations, self.total_seconds,
            self.seconds_per_iter, self.final_delta, self.final_c, int(self.converged),
        )


def run_cell(routine, spec: LatticeSpec, chi, cfg: BpConfig, site_dim=2, seed=0, measure=True) -> Cell:
    """Build a random state and run ``routine`` on it; only the routine is timed."""
    g = build_graph(spec)
    tns = random_tns(g, chi, site_dim, seed)
    fn = get_routine(routine)
    start = time.perf_counter()
    vs, report = fn(tns, cfg)
    total = time.perf_counter() - start
    c = vidal_distance(vs) if measure else float("nan")
    label = f"{spec.kind}:{'x'.join(map(str, spec.dims))}"
    return Cell(
        routine, label, g.num_vertices, chi, report.iterations, total,
        total / max(report.iterations, 1), report.final_delta, c, report.converged,
    )


def time_per_iteration(routine, spec: LatticeSpec, chi, sweeps=5, schedule="synchronous", seed=0, repeats=1):
    """Median wall time of one sweep over ``sweeps`` forced sweeps (after one warm-up)."""
    cfg = BpConfig(schedule=schedule, max_iters=sweeps + 1, target_delta=1e-300, seed=seed)
    g = build_graph(spec)
    tns = random_tns(g, chi, 2, seed)
    fn = get_routine(routine)
    best = []
    for _ in range(repeats):
        _, report = fn(tns, cfg)
        steps = np.diff(report.times)
        best.append(float(np.median(steps)) if len(steps) else report.times[0])
    return min(best)


def fit_exponent(xs, ys) -> float:
    """Slope of ``log y`` against ``log x`` by least squares."""
    return float(np.polyfit(np.log(np.asarray(xs, float)), np.log(np.asarray(ys, float)), 1)[0])
