"""Command-line entry point: ``bpgauge <command> key=value ... [--out file.csv]``.

Commands
--------
gauge       gauge one random state and log the per-sweep distance
bench       time the three gauging routines over bond dimension / size sweeps
ising-scan  sweeps to convergence against inverse temperature, or (mode=infinite)
            single-site magnetization on open lattices against a periodic cell
infinite    shorthand for ``ising-scan mode=infinite``
evolve      imaginary-time or random-circuit evolution with optional regauging

Exit codes: 0 success, 2 a run did not converge, 3 bad configuration.
"""

from __future__ import annotations

import argparse
import os
import sys
import time

import numpy as np

from . import bench as B
from .bp import BpConfig, bp_run
from .errors import BPGaugeError, ConfigError, InvalidSpec
from .evolution import (
    EvolutionConfig,
    Gate,
    _default_verifier,
    evolve,
    random_unitary_layers,
    trotter_ising_layer,
)
from .gauging import bp_gauge, vidal_distance
from .io import Settings, parse_pairs, read_config, write_csv
from .models import LatticeSpec, build_graph, ising_sqrt_partition_state, neel_state, parse_lattice, random_tns
from .observables import SZ, rank_one_expectation, tfim_energy_exact

EXIT_OK, EXIT_NONCONVERGED, EXIT_CONFIG = 0, 2, 3

_BP_KEYS = {
    "schedule": "sequential",
    "target_C": 1e-10,
    "max_iters": 500,
    "damping": 0.0,
    "init": "identity",
    "threads": 1,
    "seed": 0,
}
_LATTICE_KEYS = {"lattice": None, "model": "square", "L": 6, "periodic": False}


def _lattice(s: Settings, default="square:6x6") -> LatticeSpec:
    text = s.str("lattice")
    model, size, periodic = s.str("model"), s.int("L"), s.bool("periodic")
    seed = s.int("seed")
    if text is None:
        dims = {"square": f"{size}x{size}", "cubic": f"{size}x{size}x{size}"}.get(model, str(size))
        text = f"{model}:{dims}" if model else default
        s.resolved["lattice"] = text
    return parse_lattice(text, periodic=periodic, seed=seed)


def _bp_config(s: Settings, target_key="target_C") -> BpConfig:
    return BpConfig(
        schedule=s.str("schedule"),
        max_iters=s.int("max_iters"),
        target_delta=s.float(target_key),
        damping=s.float("damping"),
        init=s.str("init"),
        seed=s.int("seed"),
        threads=s.int("threads"),
    )


def _out_path(args, default):
    return args.out or default


def _companion(path, suffix):
    stem, ext = os.path.splitext(path)
    return f"{stem}.{suffix}{ext or '.csv'}"


# -- commands ----------------------------------------------------------------

def cmd_gauge(raw, args):
    s = Settings(raw, {**_BP_KEYS, **_LATTICE_KEYS, "routine": "bp", "chi": 4, "d": 2})
    spec = _lattice(s)
    cfg = _bp_config(s)
    routine = s.str("routine")
    B.get_routine(routine)
    g = build_graph(spec)
    tns = random_tns(g, s.int("chi"), s.int("d"), s.int("seed"))
    fn = B.ROUTINES[routine]
    start = time.perf_counter()
    vs, report = fn(tns, cfg)
    total = time.perf_counter() - start
    c = vidal_distance(vs)
    out = _out_path(args, f"gauge_{routine}.csv")
    write_csv(out, ("iter", "delta", "seconds"), report.csv_rows(), s.resolved)
    summary = (routine, g.num_vertices, s.int("chi"), report.iterations, total, c)
    write_csv(
        _companion(out, "summary"),
        ("routine", "N", "chi", "iterations", "total_seconds", "final_C_measured"),
        [summary],
        s.resolved,
    )
    print("routine,N,chi,iterations,total_seconds,final_C_measured")
    print(",".join(str(x) for x in summary))
    return EXIT_OK if report.converged else EXIT_NONCONVERGED


def cmd_bench(raw, args):
    keys = {
        **_BP_KEYS,
        "model": "square",
        "periodic": False,
        "routines": "bp,eager,simple_update",
        "chis": "4,8,12,16",
        "chi_sweep_L": 6,
        "Ls": "4,8,12,16",
        "L_sweep_chi": 4,
        "iter_schedule": "synchronous",
        "sweeps": 5,
        "to_target": True,
        "to_target_max_chi": 16,
    }
    s = Settings(raw, keys)
    routines = s.str_list("routines")
    for r in routines:
        B.get_routine(r)
    model = s.str("model")
    if model not in ("square", "cubic"):
        raise InvalidSpec("bench sweeps support square and cubic lattices")
    periodic = s.bool("periodic")
    cfg = _bp_config(s)
    sweeps, iter_schedule = s.int("sweeps"), s.str("iter_schedule")
    to_target = s.bool("to_target")
    dims = 2 if model == "square" else 3

    def spec_of(size):
        return LatticeSpec(model, (size,) * dims, (periodic,), s.int("seed"))

    cells = []
    for sweep, points in (
        ("chi", [(s.int("chi_sweep_L"), c) for c in s.int_list("chis")]),
        ("L", [(size, s.int("L_sweep_chi")) for size in s.int_list("Ls")]),
    ):
        for size, chi in points:
            for r in routines:
                spec = spec_of(size)
                n = int(np.prod(spec.dims))
                try:
                    per = B.time_per_iteration(r, spec, chi, sweeps, iter_schedule, s.int("seed"))
                    row = [sweep, r, size, n, chi, per]
                    if to_target and chi <= s.int("to_target_max_chi"):
                        cell = B.run_cell(r, spec, chi, cfg, seed=s.int("seed"))
                        row += [cell.iterations, cell.total_seconds, cell.final_c, int(cell.converged), ""]
                    else:
                        row += [None, None, None, None, ""]
                except BPGaugeError as exc:
                    row = [sweep, r, size, n, chi, None, None, None, None, None, str(exc)]
                cells.append(row)
                print(",".join("" if x is None else str(x) for x in row), flush=True)
    header = ("sweep", "routine", "L", "N", "chi", "seconds_per_iter", "iterations", "total_seconds",
              "final_C_measured", "converged", "error")
    out = _out_path(args, "bench.csv")
    write_csv(out, header, cells, s.resolved)
    fits = []
    for sweep, var in (("chi", 4), ("L", 3)):
        for r in routines:
            pts = [(c[var], c[5]) for c in cells if c[0] == sweep and c[1] == r and c[5]]
            if len(pts) >= 2:
                xs, ys = zip(*pts)
                fits.append((r, sweep, "chi" if sweep == "chi" else "N", B.fit_exponent(xs, ys)))
    write_csv(_companion(out, "fit"), ("routine", "sweep", "variable", "exponent"), fits, s.resolved)
    for f in fits:
        print(f"fit {f[0]} {f[2]}-exponent {f[3]:.3f}")
    return EXIT_OK


def _infinite_rows(s: Settings):
    beta, h = s.float("beta"), s.float("h")
    cfg = _bp_config(s)
    rows = []
    cell = s.int("cell")
    g = build_graph(LatticeSpec("square", (cell, cell), (True,)))
    vs, rep = bp_gauge(ising_sqrt_partition_state(g, beta, h), cfg)
    center = g.vertices[len(g.vertices) // 2]
    ref = rank_one_expectation(vs, SZ, center).real
    rows.append((beta, h, "periodic", ref, rep.iterations, None))
    ok = rep.converged
    for size in s.int_list("Ls"):
        g = build_graph(LatticeSpec.square(size))
        vs, rep = bp_gauge(ising_sqrt_partition_state(g, beta, h), cfg)
        sz = rank_one_expectation(vs, SZ, (size // 2, size // 2)).real
        rows.append((beta, h, size, sz, rep.iterations, abs(sz - ref)))
        ok = ok and rep.converged
    return rows, ok


def cmd_ising_scan(raw, args, force_mode=None):
    keys = {
        **_BP_KEYS,
        "target_C": 1e-8,
        "lattice": "cubic:4x4x4",
        "periodic": False,
        "h": 0.5,
        "betas": "0.1:0.5:0.02",
        "routines": "bp",
        "mode": "iterations",
        "beta": 0.3,
        "Ls": "2,4,8",
        "cell": 3,
    }
    if force_mode:
        keys["mode"] = force_mode
        keys["target_C"] = 1e-12
    s = Settings(raw, keys)
    mode = s.str("mode")
    if mode == "infinite":
        rows, ok = _infinite_rows(s)
        out = _out_path(args, "infinite.csv")
        write_csv(out, ("beta", "h", "L", "Sz", "iterations", "abs_diff_to_periodic"), rows, s.resolved)
        for r in rows:
            print(",".join("" if x is None else str(x) for x in r))
        return EXIT_OK if ok else EXIT_NONCONVERGED
    if mode != "iterations":
        raise ConfigError(f"mode must be iterations or infinite, got {mode!r}")
    spec = parse_lattice(s.str("lattice"), periodic=s.bool("periodic"), seed=s.int("seed"))
    g = build_graph(spec)
    cfg = _bp_config(s)
    h = s.float("h")
    rows = []
    for beta in s.float_list("betas"):
        tns = ising_sqrt_partition_state(g, beta, h)
        for r in s.str_list("routines"):
            fn = B.get_routine(r)
            if r == "bp":
                _, rep = bp_run(tns, cfg)
            else:
                _, rep = fn(tns, cfg)
            iters = rep.iterations if rep.converged else cfg.max_iters
            rows.append((beta, r, iters, rep.final_delta))
            print(f"{beta},{r},{iters}", flush=True)
    write_csv(_out_path(args, "ising_scan.csv"), ("beta", "routine", "iterations", "final_delta"), rows, s.resolved)
    return EXIT_OK


def cmd_evolve(raw, args):
    keys = {
        "lattice": "square:3x3",
        "periodic": False,
        "program": "imaginary",
        "g": 3.0,
        "dbeta": 0.25,
        "steps": 8,
        "layers": 3,
        "chi": 2,
        "svd_cutoff": 1e-14,
        "regauge_every": 0,
        "regauge_target": 1e-3,
        "max_iters": 200,
        "seed": 0,
        "threads": 1,
        "verify": True,
    }
    s = Settings(raw, keys)
    spec = parse_lattice(s.str("lattice"), periodic=s.bool("periodic"), seed=s.int("seed"))
    g = build_graph(spec)
    kind = s.str("program")
    if kind == "imaginary":
        program = []
        for _ in range(s.int("steps")):
            program += trotter_ising_layer(g, s.float("g"), s.float("dbeta"))
    elif kind == "random":
        program = random_unitary_layers(g, s.int("layers"), s.int("seed"))
    elif kind == "identity":
        eye = Gate.from_matrix(np.eye(4), (2, 2), unitary=True)
        program = [(eye, e) for e in g.edges] * s.int("layers")
    else:
        raise ConfigError(f"program must be imaginary, random or identity, got {kind!r}")
    cfg = EvolutionConfig(
        max_chi=s.int("chi"),
        svd_cutoff=s.float("svd_cutoff"),
        regauge_every=s.int("regauge_every"),
        regauge_target=s.float("regauge_target"),
        regauge_max_iters=s.int("max_iters"),
        seed=s.int("seed"),
    )
    verify = s.bool("verify")
    energy = None
    if kind == "imaginary" and verify:
        gval = s.float("g")

        def energy(state):
            try:
                return tfim_energy_exact(state, gval)
            except BPGaugeError:
                return None

    traj = evolve(neel_state(g), program, cfg, verifier=_default_verifier if verify else None, energy=energy)
    out = _out_path(args, "evolve.csv")
    write_csv(out, traj.CSV_COLUMNS, traj.csv_rows(), s.resolved)
    last = traj.records[-1] if traj.records else None
    if last is not None:
        print(f"gates={last.gate_id + 1} F={last.F_n} energy={last.energy} C={last.c_estimate}")
    return EXIT_OK


COMMANDS = {
    "gauge": cmd_gauge,
    "bench": cmd_bench,
    "ising-scan": cmd_ising_scan,
    "infinite": lambda raw, args: cmd_ising_scan(raw, args, force_mode="infinite"),
    "evolve": cmd_evolve,
}


def build_parser():
    p = argparse.ArgumentParser(prog="bpgauge", description=__doc__.split("\n\n")[0],
                                formatter_class=argparse.RawDescriptionHelpFormatter)
    p.add_argument("command", choices=sorted(COMMANDS))
    p.add_argument("settings", nargs="*", help="key=value settings (override --config)")
    p.add_argument("--config", help="file of key=value lines")
    p.add_argument("--out", help="CSV destination")
    p.add_argument("--seed", type=int)
    p.add_argument("--threads", type=int)
    p.add_argument("--max-iters", type=int, dest="max_iters")
    return p


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        raw = read_config(args.config) if args.config else {}
        raw.update(parse_pairs(args.settings))
        for key in ("seed", "threads", "max_iters"):
            value = getattr(args, key)
            if value is not None:
                raw[key] = str(value)
        return COMMANDS[args.command](raw, args)
    except (ConfigError, InvalidSpec, ValueError) as exc:
        print(f"bpgauge: configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
