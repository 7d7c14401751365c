"""Command-line pipeline: forward, synth-data, gen-examples, learn-errors, fit-gmm, invert, report.

Exit codes: 0 success, 2 configuration error, 3 solver error, 4 I/O error.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import logging
import math
from pathlib import Path
import sys
import time


from . import io
from .cgmm import NumericError, fit_em
from .config import ConfigError, InversionConfig, defaults, load_config
from .grid import GeometryError, ScattererField
from .helmholtz import ParameterError, SolverError, solve_forward, synthesize_data
from .inversion import ConfigurationError, run_inversion
from .learning import TRUE_SCATTERERS, error_samples_for_kappa, gen_example, pool

log = logging.getLogger("gmrlm")

EXIT_OK, EXIT_CONFIG, EXIT_SOLVER, EXIT_IO = 0, 2, 3, 4


def _config(args) -> InversionConfig:
    return load_config(args.config) if args.config else defaults()


def _scatterer(name_or_path, grid):
    if name_or_path in TRUE_SCATTERERS:
        return ScattererField.from_function(grid, TRUE_SCATTERERS[name_or_path])
    fld = io.read_field(name_or_path)
    if not isinstance(fld, ScattererField):
        raise ConfigError(f"{name_or_path}: expected a real scatterer field")
    return fld


def _kappa_indices(cfg, spec):
    kappas = cfg.schedule().kappas
    if spec in (None, "all"):
        return list(range(len(kappas)))
    out = []
    for tok in spec.split(","):
        tok = tok.strip()
        try:
            out.append(int(tok))
        except ValueError:
            raise ConfigError(f"--kappas expects 'all' or level indices, got {tok!r}") from None
        if not 0 <= out[-1] < len(kappas):
            raise ConfigError(f"--kappas index {out[-1]} outside [0, {len(kappas)})")
    return out


def _learn_angles(cfg):
    angles = cfg.schedule().angles
    if cfg["learning.pool_angles"] or cfg["learning.per_angle"]:
        return list(angles)
    return [angles[0]]


def cmd_forward(args):
    cfg = _config(args)
    t0 = time.perf_counter()
    grid = cfg.grid(args.grid)
    q = _scatterer(args.scatterer, grid)
    u, rep = solve_forward(q, args.kappa, args.angle, cfg["solver.tol"], cfg.profile)
    io.write_field(args.out, u)
    io.run_report(Path(args.out).parent, "forward", cfg.dumps(),
                  extra={"kappa": args.kappa, "angle": args.angle, "grid": args.grid,
                         "scatterer": args.scatterer, "residual": rep.residual_norm},
                  timings={"total": time.perf_counter() - t0})


def cmd_synth_data(args):
    cfg = _config(args)
    t0 = time.perf_counter()
    sigma = cfg["noise.sigma"] if args.sigma is None else args.sigma
    seed = cfg["noise.seed"] if args.seed is None else args.seed
    grid = cfg.grid(args.grid)
    q = _scatterer(args.scatterer, grid)
    rec = cfg.receivers()
    sched = cfg.schedule()
    for ki, k in enumerate(sched.kappas):
        for ai, a in enumerate(sched.angles):
            d = synthesize_data(q, k, a, sigma, [seed, ki, ai], rec, cfg["solver.tol"], cfg.profile)
            io.write_data(Path(args.out) / io.data_filename(ki, ai), d, rec)
        log.info("data for kappa=%.4g written", k)
    io.write_field(Path(args.out) / "truth.csv", q)
    io.run_report(args.out, "synth-data", cfg.dumps(), seeds={"noise": seed},
                  extra={"sigma": sigma, "grid": args.grid, "scatterer": args.scatterer},
                  timings={"total": time.perf_counter() - t0})


def cmd_gen_examples(args):
    cfg = _config(args)
    t0 = time.perf_counter()
    spec = cfg.examples(args.count, args.seed, args.family)
    grid = cfg.grid(args.grid)
    for n in range(spec.count):
        io.write_field(Path(args.out) / f"example_{n:04d}.csv", gen_example(spec, n, grid))
    io.run_report(args.out, "gen-examples", cfg.dumps(), seeds={"learning": spec.seed},
                  extra={"family": spec.family, "count": spec.count, "grid": args.grid},
                  timings={"total": time.perf_counter() - t0})


def cmd_learn_errors(args):
    cfg = _config(args)
    t0 = time.perf_counter()
    spec = cfg.examples()
    sched = cfg.schedule()
    angles = _learn_angles(cfg)
    rec = cfg.receivers()
    fine, coarse = cfg.grid("fine"), cfg.grid("coarse")
    failed, timings = {}, {}
    for ki in _kappa_indices(cfg, args.kappas):
        t1 = time.perf_counter()
        sets, rep = error_samples_for_kappa(spec, sched.kappas[ki], angles, fine, coarse, rec,
                                            cfg.profile, cfg["solver.tol"])
        for a, es in sets.items():
            ai = sched.angles.index(a)
            io.write_error_samples(Path(args.out) / io.samples_filename(ki, ai), es)
        failed[ki] = rep.failed
        timings[f"kappa_{ki}"] = time.perf_counter() - t1
    timings["total"] = time.perf_counter() - t0
    io.run_report(args.out, "learn-errors", cfg.dumps(), seeds={"learning": spec.seed},
                  extra={"failed_examples": failed}, timings=timings)


def cmd_fit_gmm(args):
    cfg = _config(args)
    t0 = time.perf_counter()
    files = sorted(Path(args.samples).glob("errors_k*_a*.csv"))
    if not files:
        raise FileNotFoundError(f"no error-sample files in {args.samples}")
    by_kappa = {}
    for f in files:
        ki = int(f.stem.split("_")[1][1:])
        by_kappa.setdefault(ki, []).append((f, io.read_error_samples(f)))
    kw = dict(K=cfg["mixture.K"], tol=cfg["mixture.tol"], max_iter=cfg["mixture.max_iter"],
              seed=cfg["mixture.seed"], retries=cfg["mixture.retries"])
    extra = {}
    for ki, items in sorted(by_kappa.items()):
        if cfg["learning.per_angle"]:
            for f, es in items:
                res = fit_em(es, delta=cfg.mixture_delta(es), **kw)
                ai = int(f.stem.split("_")[2][1:])
                io.write_mixture(Path(args.out) / io.mixture_filename(ki, ai), res.model)
                extra[f"{ki}_{ai}"] = {"iterations": res.iterations, "restarts": res.restarts}
            continue
        es = pool(s for _, s in items) if cfg["learning.pool_angles"] else items[0][1]
        res = fit_em(es, delta=cfg.mixture_delta(es), **kw)
        io.write_mixture(Path(args.out) / io.mixture_filename(ki),
                         dataclasses.replace(res.model, angle_tag=None))
        extra[str(ki)] = {"iterations": res.iterations, "restarts": res.restarts}
    io.run_report(args.out, "fit-gmm", cfg.dumps(), seeds={"mixture": cfg["mixture.seed"]},
                  inputs=files, extra=extra, timings={"total": time.perf_counter() - t0})


def load_models(models_dir):
    files = sorted(Path(models_dir).glob("cgmm_k*.txt"))
    if not files:
        raise FileNotFoundError(f"no mixture files in {models_dir}")
    models = {}
    for f in files:
        m = io.read_mixture(f)
        models[m.kappa_tag if m.angle_tag is None else (m.kappa_tag, m.angle_tag)] = m
    return models, files


def cmd_invert(args):
    cfg = _config(args)
    t0 = time.perf_counter()
    data_files = sorted(Path(args.data).glob("data_k*_a*.csv"))
    if not data_files:
        raise FileNotFoundError(f"no data files in {args.data}")
    records, receivers = [], None
    for f in data_files:
        rec, receivers = io.read_data(f)
        records.append(rec)
    models, model_files = None, []
    if args.method == "gmrlm":
        if not args.models:
            raise ConfigError("--method gmrlm needs --models")
        models, model_files = load_models(args.models)
    grid = cfg.grid("coarse")
    q_true = _scatterer(args.truth, grid) if args.truth else None
    nu = cfg["noise.nu"]
    report = run_inversion(cfg.schedule(), records, receivers, grid, models=models, q_true=q_true,
                           reg=cfg.regularizer(), step=cfg.step(), profile=cfg.profile, nu=nu,
                           tol=cfg["solver.tol"])
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "report.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["kappa", "angle", "misfit", "step", "rel_error", "seconds"])
        for r in report.records:
            w.writerow([io.FMT % r.kappa, io.FMT % r.angle, io.FMT % r.misfit, io.FMT % r.step,
                        io.FMT % r.rel_error, "%.6f" % r.seconds])
    for ki, q in report.snapshots.items():
        io.write_field(out / f"q_after_k{ki}.csv", q)
    io.write_field(out / "q_final.csv", report.final)
    inputs = list(data_files) + list(model_files)
    if args.truth and args.truth not in TRUE_SCATTERERS:
        inputs.append(args.truth)
    io.run_report(out, "invert", cfg.dumps(), inputs=inputs,
                  extra={"method": args.method, "models": [str(f) for f in model_files],
                         "truth": args.truth},
                  timings={"total": time.perf_counter() - t0})


def summarize(report_csv):
    """Last relative error and cumulative time per wavenumber from a report.csv."""
    rows = {}
    with open(report_csv, newline="") as fh:
        for r in csv.DictReader(fh):
            k = float(r["kappa"])
            acc = rows.setdefault(k, {"rel_error": math.nan, "seconds": 0.0, "updates": 0})
            acc["rel_error"] = float(r["rel_error"])
            acc["seconds"] += float(r["seconds"])
            acc["updates"] += 1
    return rows


def cmd_report(args):
    rows = summarize(Path(args.run) / "report.csv")
    lines = ["kappa,kappa_over_pi,updates,rel_error,seconds"]
    for k, v in sorted(rows.items()):
        lines.append(f"{io.FMT % k},{k / math.pi:.6g},{v['updates']},{io.FMT % v['rel_error']},"
                     f"{v['seconds']:.6f}")
    text = "\n".join(lines) + "\n"
    (Path(args.run) / "summary.csv").write_text(text)
    sys.stdout.write(text)


def build_parser():
    p = argparse.ArgumentParser(prog="gmrlm", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def add(name, func, help_):
        sp = sub.add_parser(name, help=help_)
        sp.add_argument("--config", help="section.key = value file (defaults if omitted)")
        sp.set_defaults(func=func)
        return sp

    sp = add("forward", cmd_forward, "solve one forward problem and dump the scattered field")
    sp.add_argument("--kappa", type=float, required=True)
    sp.add_argument("--angle", type=float, required=True)
    sp.add_argument("--scatterer", default="example1", help="example1, example2 or a field CSV")
    sp.add_argument("--grid", choices=("coarse", "fine", "reference"), default="coarse")
    sp.add_argument("--out", required=True)

    sp = add("synth-data", cmd_synth_data, "noisy receiver data for every (kappa, angle)")
    sp.add_argument("--sigma", type=float)
    sp.add_argument("--seed", type=int)
    sp.add_argument("--scatterer", default="example1")
    sp.add_argument("--grid", choices=("coarse", "fine", "reference"), default="reference")
    sp.add_argument("--out", required=True)

    sp = add("gen-examples", cmd_gen_examples, "dump training scatterers")
    sp.add_argument("--family")
    sp.add_argument("--count", type=int)
    sp.add_argument("--seed", type=int)
    sp.add_argument("--grid", choices=("coarse", "fine", "reference"), default="coarse")
    sp.add_argument("--out", required=True)

    sp = add("learn-errors", cmd_learn_errors, "fine-minus-coarse model-error samples")
    sp.add_argument("--kappas", default="all", help="'all' or comma-separated level indices")
    sp.add_argument("--out", required=True)

    sp = add("fit-gmm", cmd_fit_gmm, "fit complex Gaussian mixtures to error samples")
    sp.add_argument("--samples", required=True)
    sp.add_argument("--out", required=True)

    sp = add("invert", cmd_invert, "recursive linearization, optionally error compensated")
    sp.add_argument("--method", choices=("rlm", "gmrlm"), default="gmrlm")
    sp.add_argument("--data", required=True)
    sp.add_argument("--models")
    sp.add_argument("--truth", help="example1, example2 or a field CSV, for relative errors")
    sp.add_argument("--out", required=True)

    sp = sub.add_parser("report", help="per-wavenumber summary of an inversion run")
    sp.add_argument("--run", required=True, help="output directory of invert")
    sp.set_defaults(func=cmd_report)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        args.func(args)
    except (ConfigError, ConfigurationError, GeometryError, ParameterError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (SolverError, NumericError) as exc:
        print(f"solver error: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    except (OSError, io.FormatError) as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
