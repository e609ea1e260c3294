"""Experiment harness CLI.

Subcommands
-----------
run         integrate configured (scheme, step-size) combinations on one of
            the bundled models and write CSV tables
verify      run the structural property battery; nonzero exit on failure
list-models show the bundled models and their defaults
benchmark   time the compiled and pure-python backends on the same workload

Configuration is a flat ``key = value`` text file ('#' starts a comment);
command-line flags override file values, and the EXPHAM_OUT_DIR
environment variable overrides the output directory.  Recognized keys:

    model               henon_heiles | fpu | zk
    schemes             comma list of exp_euler, ekahan, kahan, eavf, crk6,
                        ekahan_kstep
    h_list              comma list of step sizes
    T                   integration horizon (must be a multiple of each h)
    out_dir             output directory (default: results)
    repeats             timing repetitions per run (default 3, median)
    reference_substeps  internal refinement of the reference solver (default 8)
    k                   window length of the k-step scheme (default: degree-2)
    starter_substeps    starter refinement for k-step runs (default 8)
    energy_series       1/0: write per-step energy CSVs (default 1)
    p, beta, gamma, m, eps, L, dx   lattice-model parameters
    N                   grid points per direction of the 2-d model

Output files (17 significant digits, deterministic given fixed summation
order; wall-clock columns vary between runs by nature):

    <model>_order.csv                     scheme,h,E_G,wall_seconds,precompute_seconds
    <model>_<scheme>_h<h>_energy.csv      t,H,E_H,deviation_actual,deviation_predicted,residual
    <model>_summary.csv                   per-run bookkeeping incl. failures

Exit codes: 0 success, 2 bad configuration, 3 integration failure.
"""

from __future__ import annotations

import argparse
import json
import os
import statistics
import sys as _sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from .diagnostics import build_energy_report, global_error
from .integrators import (IntegrationError, Trajectory, integrate,
                          make_stepper)
from .models import MODELS, model_info

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_INTEGRATION = 3

MODEL_DEFAULTS = {
    "henon_heiles": {
        "schemes": "ekahan,kahan,eavf,exp_euler",
        "h_list": ",".join("%.17g" % (0.02 / 2**i) for i in range(5)),
        "T": "100.0",
    },
    "fpu": {
        "schemes": "ekahan,kahan,eavf,exp_euler",
        "h_list": ",".join("%.17g" % (1.0 / 2**i) for i in range(1, 5)),
        "T": "100.0",
    },
    "zk": {
        "schemes": "ekahan,kahan",
        "h_list": ",".join("%.17g" % (0.01 / 2 ** (i + 1)) for i in range(1, 5)),
        "T": "8.0",
    },
}


class ConfigError(ValueError):
    pass


KNOWN_KEYS = {
    "model", "schemes", "h_list", "T", "out_dir", "repeats",
    "reference_substeps", "k", "starter_substeps", "energy_series",
    "p", "beta", "gamma", "m", "eps", "L", "dx", "N", "alpha",
}


def parse_config_file(path) -> dict:
    """Flat ``key = value`` lines; '#' comments; unknown keys rejected."""
    cfg = {}
    for lineno, raw in enumerate(Path(path).read_text().splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{lineno}: expected 'key = value', got {raw!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        if key not in KNOWN_KEYS:
            raise ConfigError(f"{path}:{lineno}: unknown key {key!r}")
        cfg[key] = value
    return cfg


def build_model(cfg):
    name = cfg.get("model")
    if name not in MODELS:
        raise ConfigError(f"unknown model {name!r}; see 'expham list-models'")
    kwargs = {}
    if name == "fpu":
        for key, cast in (("p", int), ("beta", float), ("gamma", float),
                          ("m", float), ("eps", float), ("L", float),
                          ("dx", float), ("alpha", float)):
            if key in cfg:
                kwargs[key] = cast(cfg[key])
    elif name == "zk":
        for key, cast in (("L", float), ("N", int), ("p", int)):
            if key in cfg:
                kwargs[key] = cast(cfg[key])
    try:
        return MODELS[name](**kwargs)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"invalid parameters for model {name}: {exc}") from exc


def fmt(x) -> str:
    return "%.17g" % float(x)


def write_csv(path, header, rows):
    with open(path, "w") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(row) + "\n")


def _energy_csv_rows(report):
    rows = []
    for i in range(len(report.times)):
        rows.append([
            fmt(report.times[i]), fmt(report.energies[i]),
            fmt(report.energy_errors[i]), fmt(report.deviation_actual[i]),
            fmt(report.deviation_predicted[i]), fmt(report.deviation_residual[i]),
        ])
    return rows


def _prediction_mode(sys, scheme):
    U = sys.potential
    if not sys.conservative or not U.homogeneous:
        return None, 1
    if scheme == "ekahan" and U.degree == 3:
        return "cubic", 1
    if scheme == "ekahan_kstep" and U.degree >= 3:
        return "kstep", U.degree - 2
    return None, 1


def run_single(sys, x0, scheme, h, T, ref, *, repeats, k, starter_substeps):
    """One (scheme, h) experiment: trajectory, global error, timings."""
    n_steps = int(round(T / h))
    t0 = time.perf_counter()
    if scheme == "ekahan_kstep":
        stepper = make_stepper(sys, scheme, h, k=k)
    else:
        stepper = make_stepper(sys, scheme, h)
    precompute = time.perf_counter() - t0

    walls = []
    traj = None
    for _ in range(max(1, repeats)):
        t0 = time.perf_counter()
        traj = integrate(sys, stepper, x0, h, n_steps=n_steps, k=k,
                         starter_substeps=starter_substeps)
        walls.append(time.perf_counter() - t0)
    wall = statistics.median(walls)
    eg = global_error(traj, ref)
    return traj, eg, wall, precompute


def cmd_run(args) -> int:
    cfg = {}
    if args.config:
        cfg.update(parse_config_file(args.config))
    for flag in ("model", "schemes", "h_list", "T", "out_dir", "repeats"):
        val = getattr(args, flag, None)
        if val is not None:
            cfg[flag] = str(val)
    for item in args.param or []:
        if "=" not in item:
            raise ConfigError(f"--param expects key=value, got {item!r}")
        key, value = item.split("=", 1)
        if key.strip() not in KNOWN_KEYS:
            raise ConfigError(f"unknown --param key {key.strip()!r}")
        cfg[key.strip()] = value.strip()
    if "model" not in cfg:
        raise ConfigError("no model given (flag --model or config key 'model')")
    defaults = MODEL_DEFAULTS.get(cfg["model"], {})
    for key, value in defaults.items():
        cfg.setdefault(key, value)

    out_dir = Path(os.environ.get("EXPHAM_OUT_DIR") or cfg.get("out_dir", "results"))
    out_dir.mkdir(parents=True, exist_ok=True)
    sys_obj, x0 = build_model(cfg)
    schemes = [s.strip() for s in cfg["schemes"].split(",") if s.strip()]
    try:
        h_list = [float(tok) for tok in cfg["h_list"].split(",") if tok.strip()]
        T = float(cfg["T"])
        repeats = int(cfg.get("repeats", "3"))
        reference_substeps = int(cfg.get("reference_substeps", "8"))
        k = int(cfg.get("k", str(max(1, sys_obj.potential.degree - 2))))
        starter_substeps = int(cfg.get("starter_substeps", "8"))
        energy_series = cfg.get("energy_series", "1").strip() not in ("0", "false")
    except ValueError as exc:
        raise ConfigError(f"bad numeric value in config: {exc}") from exc

    model = cfg["model"]
    order_rows, summary_rows = [], []
    failures = 0
    references: dict[float, object] = {}

    def reference_for(h):
        if h not in references:
            n_steps = int(round(T / h))
            if abs(n_steps * h - T) > 1e-8 * max(T, h):
                raise ConfigError(f"T={T} is not an integer multiple of h={h}")
            references[h] = integrate(sys_obj, "crk6", x0, h, n_steps=n_steps,
                                      substeps=reference_substeps)
        return references[h]

    for scheme in schemes:
        for h in h_list:
            label = f"{model} {scheme} h={h:g}"
            try:
                traj, eg, wall, pre = run_single(
                    sys_obj, x0, scheme, h, T, reference_for(h), repeats=repeats,
                    k=k, starter_substeps=starter_substeps)
            except IntegrationError as exc:
                print(f"[run] {label}: FAILED at step {exc.step_index}: {exc}")
                summary_rows.append([scheme, fmt(h), "failed",
                                     str(exc.step_index), "", ""])
                failures += 1
                continue
            print(f"[run] {label}: E_G={eg:.6e} wall={wall:.3f}s "
                  f"(precompute {pre:.3f}s)")
            order_rows.append([scheme, fmt(h), fmt(eg), fmt(wall), fmt(pre)])
            summary_rows.append([scheme, fmt(h), "ok", str(traj.n_steps),
                                 fmt(sys_obj.energy(traj.states[0])),
                                 fmt(sys_obj.energy(traj.states[-1]))])
            if energy_series:
                predict, kk = _prediction_mode(sys_obj, scheme)
                ref_E = None
                if not sys_obj.conservative:
                    ref_E = [sys_obj.energy(s) for s in reference_for(h).states]
                rep = build_energy_report(sys_obj, traj, reference_energies=ref_E,
                                          predict=predict, k=kk)
                write_csv(out_dir / f"{model}_{scheme}_h{h:g}_energy.csv",
                          ["t", "H", "E_H", "deviation_actual",
                           "deviation_predicted", "residual"],
                          _energy_csv_rows(rep))
    write_csv(out_dir / f"{model}_order.csv",
              ["scheme", "h", "E_G", "wall_seconds", "precompute_seconds"],
              order_rows)
    write_csv(out_dir / f"{model}_summary.csv",
              ["scheme", "h", "status", "steps_or_failure_index", "H_start", "H_end"],
              summary_rows)
    print(f"[run] wrote {out_dir}/{model}_order.csv "
          f"and {len(order_rows)} energy series")
    return EXIT_INTEGRATION if failures else EXIT_OK


def cmd_verify(args) -> int:
    from .verification import run_all

    results = run_all(fast=args.fast)
    width = max(len(r.name) for r in results)
    failed = 0
    for r in results:
        if r.expected_fail:
            status = "XFAIL-OK" if not r.passed else "XFAIL-BAD"
        else:
            status = "PASS" if r.passed else "FAIL"
        if not r.ok:
            failed += 1
        print(f"{status:9s} {r.name:{width}s}  residual {r.residual: .3e}  "
              f"bound {r.bound:.1e}  [{r.seconds:.2f}s]")
    if args.json:
        Path(args.json).write_text(
            json.dumps([r.to_dict() for r in results], indent=2) + "\n")
    print(f"[verify] {len(results) - failed}/{len(results)} checks OK")
    return EXIT_OK if failed == 0 else 1


def cmd_list_models(args) -> int:
    for info in model_info():
        print(f"{info['model']:14s} dim: {info['dim']}\n"
              f"{'':14s} defaults: {info['defaults']}")
    return EXIT_OK


def cmd_benchmark(args) -> int:
    from .integrators import have_compiled_backend

    cfg = {"model": args.model}
    if args.param:
        for item in args.param:
            key, value = item.split("=", 1)
            cfg[key.strip()] = value.strip()
    sys_obj, x0 = build_model(cfg)
    backends = ["python"] + (["compiled"] if have_compiled_backend() else [])
    schemes = [s.strip() for s in args.schemes.split(",")]
    n_steps = int(round(args.T / args.h))
    rows = []
    for backend in backends:
        for scheme in schemes:
            t0 = time.perf_counter()
            stepper = make_stepper(sys_obj, scheme, args.h, backend=backend)
            pre = time.perf_counter() - t0
            walls = []
            for _ in range(args.repeats):
                t0 = time.perf_counter()
                integrate(sys_obj, stepper, x0, args.h, n_steps=n_steps)
                walls.append(time.perf_counter() - t0)
            wall = statistics.median(walls)
            rate = n_steps / wall
            rows.append([backend, scheme, fmt(args.h), str(n_steps),
                         fmt(wall), fmt(rate), fmt(pre)])
            print(f"[benchmark] {backend:9s} {scheme:10s} h={args.h:g} "
                  f"{n_steps} steps: {wall:.4f}s ({rate:,.0f} steps/s, "
                  f"precompute {pre:.3f}s)")
    if len(backends) == 2:
        for scheme in schemes:
            py = next(float(r[4]) for r in rows if r[0] == "python" and r[1] == scheme)
            co = next(float(r[4]) for r in rows if r[0] == "compiled" and r[1] == scheme)
            print(f"[benchmark] {scheme}: compiled is {py / co:.1f}x faster")
    if args.output:
        write_csv(args.output,
                  ["backend", "scheme", "h", "steps", "wall_seconds",
                   "steps_per_second", "precompute_seconds"], rows)
    return EXIT_OK


def build_parser():
    parser = argparse.ArgumentParser(
        prog="expham",
        description="Structure-preserving exponential integrators: "
                    "experiment harness and property suite.")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run a configured experiment")
    p_run.add_argument("-c", "--config", help="flat key=value config file")
    p_run.add_argument("--model", choices=sorted(MODELS))
    p_run.add_argument("--schemes", help="comma list of schemes")
    p_run.add_argument("--h-list", dest="h_list", help="comma list of step sizes")
    p_run.add_argument("--T", type=float, help="integration horizon")
    p_run.add_argument("--out-dir", dest="out_dir", help="output directory")
    p_run.add_argument("--repeats", type=int, help="timing repetitions (median)")
    p_run.add_argument("--param", action="append",
                       help="extra key=value (repeatable), e.g. --param gamma=0.1")
    p_run.set_defaults(func=cmd_run)

    p_ver = sub.add_parser("verify", help="run the property battery")
    p_ver.add_argument("--fast", action="store_true",
                       help="skip the long-horizon checks")
    p_ver.add_argument("--json", help="also write a JSON report to this path")
    p_ver.set_defaults(func=cmd_verify)

    p_list = sub.add_parser("list-models", help="show bundled models")
    p_list.set_defaults(func=cmd_list_models)

    p_bench = sub.add_parser("benchmark",
                             help="compare compiled and pure-python backends")
    p_bench.add_argument("--model", default="henon_heiles", choices=sorted(MODELS))
    p_bench.add_argument("--schemes", default="ekahan,eavf,crk6")
    p_bench.add_argument("--h", type=float, default=0.005)
    p_bench.add_argument("--T", type=float, default=50.0)
    p_bench.add_argument("--repeats", type=int, default=3)
    p_bench.add_argument("--param", action="append")
    p_bench.add_argument("-o", "--output", help="write a CSV table here")
    p_bench.set_defaults(func=cmd_benchmark)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=_sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    raise SystemExit(main())
