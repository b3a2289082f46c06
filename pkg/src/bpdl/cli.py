"""Command-line entry point: ``bpdl simulate | meanfield | experiment | presets``.

Exit codes: 0 success, 2 bad configuration, 3 an acceptance flag is false.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import os
import sys
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import __version__
from .config import (Config, build_initial, build_params, build_times, load_preset,
                     preset_names)
from .errors import BadConfig, BPDLError, UnknownExperiment
from .simulator import to_jsonable

EXIT_OK, EXIT_CONFIG, EXIT_FAILED = 0, 2, 3


def _fmt(x) -> str:
    if isinstance(x, (int, np.integer)) and not isinstance(x, bool):
        return str(int(x))
    return format(float(x), ".17g")


class Outputs:
    """Writes result files into one directory and keeps their digests for the manifest."""

    def __init__(self, out_dir):
        self.dir = Path(out_dir)
        self.dir.mkdir(parents=True, exist_ok=True)
        self.files = []

    def _done(self, name):
        if name not in self.files:
            self.files.append(name)
        return self.dir / name

    def json(self, name, obj):
        p = self.dir / name
        p.write_text(json.dumps(to_jsonable(obj), indent=2, sort_keys=True) + "\n")
        return self._done(name)

    def csv(self, name, header, rows):
        lines = [",".join(header)] + [",".join(_fmt(v) for v in row) for row in rows]
        (self.dir / name).write_text("\n".join(lines) + "\n")
        return self._done(name)

    def dat(self, name, header, rows):
        """Whitespace-separated columns with a ``#`` header, for plotting tools."""
        lines = ["# " + " ".join(header)] + [" ".join(_fmt(v) for v in row) for row in rows]
        (self.dir / name).write_text("\n".join(lines) + "\n")
        return self._done(name)

    def table(self, stem, header, rows):
        self.csv(f"{stem}.csv", header, rows)
        self.dat(f"{stem}.dat", header, rows)

    def gnuplot(self, plots):
        """One PNG per data file: ``plots`` is a list of (data file, title, xlabel, ylabel, columns)."""
        out = ["set terminal pngcairo size 900,600", "set key outside", "set grid"]
        for dat, title, xl, yl, cols in plots:
            out += [f"set output '{Path(dat).stem}.png'", f"set title '{title}'", f"set xlabel '{xl}'",
                    f"set ylabel '{yl}'"]
            parts = [f"'{dat}' using 1:{c} with linespoints title '{lab}'" for c, lab in cols]
            out.append("plot " + ", \\\n     ".join(parts))
        (self.dir / "plot.gp").write_text("\n".join(out) + "\n")
        self._done("plot.gp")

    def digests(self) -> dict:
        return {name: hashlib.sha256((self.dir / name).read_bytes()).hexdigest() for name in sorted(self.files)}


def _manifest(out: Outputs, cfg: Config, args, started: str, extra: dict | None = None):
    m = {
        "subcommand": args.command,
        "config": {"source": cfg.source, "text": cfg.text, "parsed": cfg.data},
        "seed": args.seed,
        "version": __version__,
        "started": started,
        "finished": datetime.now(timezone.utc).isoformat(),
        "outputs": out.digests(),
    }
    m.update(extra or {})
    p = out.dir / "manifest.json"
    p.write_text(json.dumps(to_jsonable(m), indent=2, sort_keys=True) + "\n")


def _load_config(args, default_preset: str | None = None) -> Config:
    if args.config and args.preset:
        raise BadConfig("give either --config or --preset, not both", field="config")
    if args.config:
        return Config.from_file(args.config)
    name = args.preset or default_preset
    if name is None:
        raise BadConfig("a config file (--config) or a preset (--preset) is required", field="config")
    return load_preset(name)


def _threads(args) -> int | None:
    if args.threads is not None:
        return args.threads
    env = os.environ.get("BPDL_THREADS")
    if env:
        try:
            n = int(env)
        except ValueError:
            raise BadConfig(f"BPDL_THREADS must be an integer, got {env!r}", field="BPDL_THREADS") from None
        if n < 1:
            raise BadConfig("BPDL_THREADS must be positive", field="BPDL_THREADS")
        return n
    return None


# ---------------------------------------------------------------------------
# simulate


def _simulate(cfg: Config, args, out: Outputs) -> bool:
    from .experiments.figures import FigureRun, figure1, figure2, figure3, surviving_runs
    from .simulator import FleetSpec, run_replicates, write_positions_csv, write_traces_csv
    from .statistics import density_histogram

    params = build_params(cfg, "model")
    d = params.d
    initial = build_initial(cfg, d, "initial")
    T = cfg.number("run.T", positive=True)
    R = cfg.integer("run.replicates", 1, minimum=1)
    times = build_times(cfg, "run.snapshots", T) or (0.0, T)
    if max(times) > T or min(times) < 0:
        cfg.fail("snapshot times must lie in [0, T]", "run.snapshots")
    engine = cfg.choice("run.engine", ("auto", "faithful", "indexed"), "auto")
    load_radius = None
    for key in ("run.load_radius", "checks.load_average.radius"):
        if cfg.has(key):
            load_radius = cfg.number(key, positive=True)
    survivors = cfg.flag("run.condition_on_survival", False)
    window = tuple(cfg.numbers("run.window", [-5.0, 5.0], length=2))
    keep = cfg.flag("output.positions", False)
    needs_positions = keep or cfg.has("checks") or cfg.has("output.histograms")
    spec = FleetSpec(params, initial, T, args.seed, snapshot_times=tuple(times), engine=engine,
                     keep_positions=needs_positions, load_radius=load_radius,
                     event_cap=cfg.integer("run.event_cap", 10**9, minimum=1))
    if survivors:
        traces, examined = surviving_runs(spec, R, args.threads_resolved)
    else:
        traces, examined = run_replicates(spec, R, args.threads_resolved), R
    write_traces_csv(traces, out.dir / "traces.csv")
    out._done("traces.csv")
    if keep:
        write_positions_csv(traces, out.dir / "positions.csv")
        out._done("positions.csv")

    n0 = len(initial) if hasattr(initial, "__len__") else -1
    run = FigureRun(params, n0, traces, examined, np.asarray(times), window)
    summary = {"replicates": len(traces), "examined": examined, "survival_fraction": run.survival_fraction,
               "T": T, "c0": params.c0 if np.isfinite(params.c0) else None}
    counts = np.array([tr.count for tr in traces], dtype=float)
    rows = [[t, counts[:, k].mean(), counts[:, k].std(ddof=1) / np.sqrt(len(traces)) if len(traces) > 1 else 0.0]
            for k, t in enumerate(times)]
    out.table("count", ["t", "mean_count", "stderr"], rows)
    plots = [("count.dat", "population size", "t", "mean count", [(2, "mean count")])]
    if needs_positions:
        wc = run.window_counts()
        rows = [[t, wc[:, k].mean()] for k, t in enumerate(times)]
        out.table("window_count", ["t", "mean_window_count"], rows)
        plots.append(("window_count.dat", f"count in [{window[0]:g}, {window[1]:g}]", "t", "mean count",
                      [(2, "window count")]))
    if load_radius is not None:
        ld = run.loads()
        out.table("load", ["t", "mean_load"], [[t, ld[:, k].mean()] for k, t in enumerate(times)])
        plots.append(("load.dat", f"interaction load, r = {load_radius:g}", "t", "mean load", [(2, "load")]))

    checks, ok = {}, True
    if cfg.has("checks.profile"):
        p = "checks.profile"
        pc = figure1(run, cfg.number(f"{p}.t_early", 3.0), cfg.number(f"{p}.t_late", T),
                     cfg.number(f"{p}.bin_width", 1.0, positive=True), cfg.number(f"{p}.tol", 0.15, positive=True))
        for t in (pc.t_early, pc.t_late):
            if not np.any(np.isclose(times, t)):
                cfg.fail(f"profile time {t:g} is not a snapshot time", p)
        mid = 0.5 * (pc.edges[:-1] + pc.edges[1:])
        out.table("profile", ["x", "early", "early_se", "late", "late_se"],
                  [[mid[k], pc.early[k], pc.early_se[k], pc.late[k], pc.late_se[k]] for k in range(len(mid))])
        plots.append(("profile.dat", "binned intensity", "x", "intensity",
                      [(2, f"t = {pc.t_early:g}"), (4, f"t = {pc.t_late:g}")]))
        checks["profile"] = pc.to_dict()
        ok &= pc.passed
    if cfg.has("checks.window_average"):
        p = "checks.window_average"
        ac = figure2(run, cfg.number(f"{p}.from", 15.0), cfg.number(f"{p}.to", T),
                     cfg.number(f"{p}.tol", 0.15, positive=True))
        checks["window_average"] = ac.to_dict()
        ok &= ac.passed
    if cfg.has("checks.load_average"):
        p = "checks.load_average"
        ac = figure3(run, load_radius, cfg.number(f"{p}.from", 15.0), cfg.number(f"{p}.to", T),
                     cfg.number(f"{p}.tol", 0.20, positive=True))
        checks["load_average"] = ac.to_dict()
        ok &= ac.passed
    if cfg.has("output.histograms"):
        bw = cfg.number("output.histograms.bin_width", 1.0, positive=True)
        for t in cfg.numbers("output.histograms.times"):
            if not np.any(np.isclose(times, t)):
                cfg.fail(f"histogram time {t:g} is not a snapshot time", "output.histograms.times")
            win = params.domain.window()
            lo, hi = (float(win[0][0]), float(win[1][0])) if win is not None else window
            edges = np.arange(lo, hi + bw / 2, bw)
            h = density_histogram(traces, t, edges)
            mid = 0.5 * (edges[:-1] + edges[1:])
            stem = f"histogram_t{t:g}"
            out.table(stem, ["x", "intensity", "stderr"], [[mid[k], h.intensity[k], h.stderr[k]]
                                                         for k in range(len(mid))])
            plots.append((f"{stem}.dat", f"intensity at t = {t:g}", "x", "intensity", [(2, "intensity")]))
    summary["checks"] = checks
    summary["passed"] = bool(ok)
    out.json("summary.json", summary)
    out.gnuplot(plots)
    return bool(ok)


# ---------------------------------------------------------------------------
# meanfield


def _field(cfg: Config, params):
    from .meanfield import DensityField

    n = cfg.integer("grid.n", 256, minimum=4)
    L = cfg.number("grid.L", positive=True)
    kind = cfg.choice("initial.kind", ("constant", "cosine", "bump"))
    if kind == "constant":
        return DensityField.constant(cfg.number("initial.value", nonneg=True), n, L, params)
    if kind == "cosine":
        base, amp = cfg.number("initial.base", positive=True), cfg.number("initial.amplitude")
        k = cfg.integer("initial.k", 1, minimum=0)
        if abs(amp) > base:
            cfg.fail("amplitude larger than base makes the field negative", "initial.amplitude")
        return DensityField.from_function(lambda x: base + amp * np.cos(2 * np.pi * k * x[:, 0] / L), n, L, params)
    base = cfg.number("initial.base", 0.0, nonneg=True)
    height, width = cfg.number("initial.height", positive=True), cfg.number("initial.width", positive=True)
    return DensityField.from_function(lambda x: base + height * np.exp(-0.5 * (x[:, 0] / width) ** 2), n, L, params)


def _meanfield(cfg: Config, args, out: Outputs) -> bool:
    from . import meanfield as mf

    params = build_params(cfg, "model")
    if params.d != 1:
        cfg.fail("the command-line mean-field tasks are one-dimensional", "model.domain.d")
    task = cfg.choice("task", ("integrate", "logistic-oracle", "mass-decay", "dbc-decay", "fixed-point", "l2-decay"))
    field0 = _field(cfg, params)
    T = cfg.number("T", 5.0, positive=True)
    n_out = cfg.integer("outputs", 10, minimum=1)
    dt = cfg.number("dt", None, positive=True) if cfg.has("dt") else None
    summary = {"task": task, "grid": {"n": field0.n, "L": field0.L}, "T": T}
    ok = True
    plots = []
    try:
        g, m, a = mf._constant_rates(params)
    except ValueError as exc:
        cfg.fail(str(exc), "model")

    def snapshots(res, stem="field"):
        ts = [t for t, _ in res.snapshots]
        rows = np.column_stack([field0.axis()] + [f.values for _, f in res.snapshots])
        out.table(stem, ["x"] + [f"t={t:.6g}" for t in ts], rows.tolist())
        plots.append((f"{stem}.dat", "density", "x", "xi", [(k + 2, f"t = {t:.4g}") for k, t in enumerate(ts)]))

    if task in ("integrate", "logistic-oracle", "mass-decay"):
        step = dt or min(0.01, mf.stability_dt(field0))
        outs = np.linspace(0.0, T, n_out + 1)
        res = mf.integrate(field0, T, step, out_times=outs)
        snapshots(res)
        out.table("mass", ["t", "mass"], np.column_stack([res.times, res.mass]).tolist())
        plots.append(("mass.dat", "total mass", "t", "mass", [(2, "mass")]))
        summary.update(dt=float(res.times[1] - res.times[0]) if len(res.times) > 1 else step, max_clip=res.max_clip)
    if task == "logistic-oracle":
        if not np.allclose(field0.values, field0.values.flat[0]):
            cfg.fail("the logistic oracle needs a constant initial field", "initial")
        Ubar = params.U.mass
        r = g * params.D.mass - m
        K = r / (a * Ubar) if a * Ubar > 0 else np.inf
        x0 = float(field0.values.flat[0])
        exact = mf.logistic_closed_form(x0, r, K, [t for t, _ in res.snapshots])
        err = max(float(np.abs(f.values - e).max()) for (_, f), e in zip(res.snapshots, exact))
        tol = cfg.number("tolerance", 1e-6, positive=True)
        # order of convergence: dt halving above the stability guard
        dt0 = cfg.number("order.dt", 0.2, positive=True)
        To = cfg.number("order.T", T, positive=True)
        errs = []
        for k in range(cfg.integer("order.halvings", 2, minimum=1) + 1):
            rr = mf.integrate(field0, To, dt0 / 2**k, out_times=[To], check_stability=False)
            errs.append(float(np.abs(rr.field.values - mf.logistic_closed_form(x0, r, K, To)).max()))
        ratios = [e1 / e2 for e1, e2 in zip(errs, errs[1:])]
        band = cfg.numbers("order.band", [12.0, 20.0], length=2)
        order_ok = all(band[0] <= q <= band[1] for q in ratios)
        out.table("order", ["dt", "error"], [[dt0 / 2**k, e] for k, e in enumerate(errs)])
        ok = err < tol and order_ok
        summary.update(r=r, K=K, max_error=err, tolerance=tol, closed_form_ok=err < tol, order_errors=errs,
                       order_ratios=ratios, order_band=band, order_ok=order_ok)
    elif task == "mass-decay":
        if not g < m:
            cfg.fail("mass decay needs gamma < mu", "model")
        bound = res.mass[0] * np.exp(-(m - g) * res.times)
        excess = res.mass - bound
        ok = bool(np.all(excess <= 1e-12 * res.mass[0]))
        out.table("mass_bound", ["t", "mass", "bound"], np.column_stack([res.times, res.mass, bound]).tolist())
        summary.update(worst_excess=float(excess.max()), passed_bound=ok)
    elif task == "dbc-decay":
        rep = mf.dbc_bound_check(field0, T, dt, n_out)
        ok = rep.passed
        summary.update(bound_ok=rep.bound_ok, monotone_ok=rep.monotone_ok, worst_excess=rep.worst_excess,
                       times=rep.times)
    elif task == "fixed-point":
        c0 = mf.c0_of(params)
        fc0 = mf.apply_F(field0.with_values(np.full(field0.values.shape, c0)))
        fc0_err = float(np.abs(fc0.values - c0).max())
        ac = mf.check_assumption_C(params)
        res = mf.fixed_point(field0, cfg.number("tolerance", 1e-10, positive=True),
                             cfg.integer("max_iterations", 1000, minimum=1))
        final = float(np.abs(res.field.values - c0).max())
        growth_ok = g > 2.0**params.d * m
        ok = (fc0_err <= 1e-12 * max(1.0, c0) and res.contraction_ok and ac.passed and growth_ok
              and final < 1e-8 * max(1.0, c0))
        rows = [[k + 1, res.sup_dist[k + 1] if k + 1 < len(res.sup_dist) else np.nan, r, b, e]
                for k, (r, b, e) in enumerate(zip(res.ratios, res.bounds, res.eps0))]
        out.table("contraction", ["iteration", "sup_dist", "ratio", "bound", "eps0"], rows)
        plots.append(("contraction.dat", "fixed-point contraction", "iteration", "ratio",
                      [(3, "observed ratio"), (4, "bound")]))
        summary.pop("T")
        summary.update(c0=c0, F_c0_error=fc0_err, iterations=res.iterations, final_sup_dist=final,
                       contraction_ok=res.contraction_ok, assumption_C=ac.to_dict(), gamma_gt_2d_mu=growth_ok)
    elif task == "l2-decay":
        rep = mf.l2_decay_check(field0, T, dt, n_out)
        min_r2 = cfg.number("min_r2", 0.95, positive=True)
        ok = rep.monotone and rep.r2 > min_r2
        out.table("l2_decay", ["t", "energy"], np.column_stack([rep.times, rep.energy]).tolist())
        plots.append(("l2_decay.dat", "L2 distance to c0", "t", "energy", [(2, "energy")]))
        summary.update(monotone=rep.monotone, rate=rep.rate, r2=rep.r2, min_r2=min_r2,
                       assumption_C=mf.check_assumption_C(params).to_dict())
    summary["passed"] = bool(ok)
    out.json("summary.json", summary)
    if plots:
        out.gnuplot(plots)
    return bool(ok)


# ---------------------------------------------------------------------------
# experiments


def _experiment(cfg: Config, args, out: Outputs) -> bool:
    from .experiments import run_experiment

    res = run_experiment(args.name, cfg, args.seed, args.threads_resolved, args.expensive)
    plots = []
    for stem, (header, rows) in res.tables.items():
        out.table(stem, header, rows)
        plots.append((f"{stem}.dat", stem.replace("_", " "), header[0], "value",
                      [(k + 2, h.replace("_", " ")) for k, h in enumerate(header[1:])]))
    out.json("summary.json", {"experiment": res.name, **res.summary, "passed": res.passed})
    if plots:
        out.gnuplot(plots)
    return res.passed


# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="bpdl", description="Spatial birth-death processes with logistic competition.")
    ap.add_argument("--version", action="version", version=f"bpdl {__version__}")
    sub = ap.add_subparsers(dest="command", required=True)

    def common(p, seed=True):
        p.add_argument("--config", metavar="PATH", help="YAML run configuration")
        p.add_argument("--preset", metavar="NAME", help="named configuration shipped with the package")
        p.add_argument("--out", metavar="DIR", default="bpdl-out", help="output directory (default: bpdl-out)")
        p.add_argument("--threads", metavar="N", type=int, default=None,
                       help="worker processes (default: $BPDL_THREADS or all CPUs)")
        if seed:
            p.add_argument("--seed", metavar="U64", type=int, default=0, help="master seed (default: 0)")

    common(sub.add_parser("simulate", help="run a replicate fleet and write traces"))
    common(sub.add_parser("meanfield", help="integrate the mean-field equation"), seed=True)
    ex = sub.add_parser("experiment", help="run a named experiment")
    ex.add_argument("name", help="experiment name (see `bpdl presets`)")
    ex.add_argument("--expensive", action="store_true", help="allow experiments that take hours")
    common(ex)
    sub.add_parser("presets", help="list presets and experiment names")
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.command == "presets":
        from .experiments import EXPERIMENTS

        print("experiments:", " ".join(EXPERIMENTS))
        print("presets:", " ".join(preset_names()))
        return EXIT_OK
    started = datetime.now(timezone.utc).isoformat()
    try:
        if args.seed < 0 or args.seed >= 2**64:
            raise BadConfig("seed must be an unsigned 64-bit integer", field="seed")
        if args.threads is not None and args.threads < 1:
            raise BadConfig("--threads must be positive", field="threads")
        args.threads_resolved = _threads(args)
        if args.command == "experiment":
            from .experiments import get_experiment

            get_experiment(args.name)
            if args.config or args.preset or args.name in preset_names():
                cfg = _load_config(args, default_preset=args.name)
            else:
                cfg = Config({})
            if "experiment" in cfg.data and cfg.data["experiment"] != args.name:
                cfg.fail(f"config is for experiment {cfg.data['experiment']!r}", "experiment")
            run = _experiment
        else:
            cfg = _load_config(args)
            run = _simulate if args.command == "simulate" else _meanfield
        out = Outputs(args.out)
        passed = run(cfg, args, out)
    except UnknownExperiment as exc:
        print(f"bpdl: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except BadConfig as exc:
        print(f"bpdl: bad configuration: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except BPDLError as exc:
        print(f"bpdl: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    _manifest(out, cfg, args, started, {"passed": passed, "experiment": getattr(args, "name", None)})
    print(json.dumps({"command": args.command, "out": str(out.dir), "passed": passed}))
    return EXIT_OK if passed else EXIT_FAILED


if __name__ == "__main__":
    sys.exit(main())
