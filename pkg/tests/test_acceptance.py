"""Acceptance criteria, each run from a shipped preset through the command line.

Every test prints one ``ACCEPTANCE k ... PASS|FAIL`` line; the lines are
repeated in the terminal summary.
"""

import json
import time

import numpy as np
import pytest

from bpdl.cli import main

from conftest import ACCEPTANCE_LINES


def _record(number, title, ok, detail, elapsed):
    line = f"ACCEPTANCE {number:>2} {title}: {'PASS' if ok else 'FAIL'} ({detail}; {elapsed:.0f} s)"
    print(line)
    ACCEPTANCE_LINES.append(line)


def _run(tmp_path, *argv):
    """Run the CLI and return (exit code, summary, seconds)."""
    out = tmp_path / "_".join(a for a in argv if not a.startswith("-"))
    t0 = time.perf_counter()
    code = main([*argv, "--out", str(out)])
    elapsed = time.perf_counter() - t0
    return code, json.loads((out / "summary.json").read_text()), elapsed


def _preset(kind, name):
    return (kind, "--preset", name) if kind != "experiment" else (kind, name, "--preset", name)


@pytest.fixture(scope="module")
def tmp(tmp_path_factory):
    return tmp_path_factory.mktemp("acceptance")


# ---------------------------------------------------------------------------


def test_criterion_01_density_profile(tmp):
    code, s, el = _run(tmp, *_preset("simulate", "fig1"))
    prof = s["checks"]["profile"]
    dev = np.asarray(prof["inner_rel_dev"])
    ok = prof["replicates"] >= 50 and bool(np.all(np.abs(dev) <= 0.15)) and el <= 300 and prof["t_late"] == 25.0
    _record(1, "density profile at t=25 on [-5,5] within 15% of c0=4", ok,
            f"mean inner intensity {prof['mean_inner_intensity']:.3f}, worst bin {dev[np.argmax(np.abs(dev))]:+.1%}",
            el)
    assert code == (0 if prof["passed"] else 3)
    assert ok


def test_criterion_02_window_count(tmp):
    results = []
    total = 0.0
    for name in ("fig2", "fig2b"):
        code, s, el = _run(tmp, *_preset("simulate", name))
        total += el
        w = s["checks"]["window_average"]
        results.append((name, w, code, el))
    ok = all(abs(w["rel_dev"]) <= 0.15 and w["target"] == pytest.approx(40.0) and el <= 300
             for _, w, _, el in results)
    detail = ", ".join(f"{n}: {w['mean']:.2f} ({w['rel_dev']:+.1%})" for n, w, _, _ in results)
    _record(2, "time-averaged count in [-5,5] within 15% of 40", ok, detail, total)
    assert all(code == (0 if w["passed"] else 3) for _, w, code, _ in results)
    assert ok


def test_criterion_03_interaction_load(tmp):
    code, s, el = _run(tmp, *_preset("simulate", "fig3"))
    w = s["checks"]["load_average"]
    ok = abs(w["rel_dev"]) <= 0.20 and w["target"] == pytest.approx(160.0) and el <= 300 and code == 0
    _record(3, "interaction load r=5 within 20% of 160", ok, f"{w['mean']:.1f} ({w['rel_dev']:+.1%})", el)
    assert ok


def test_criterion_04_engine_equivalence(tmp):
    code, s, el = _run(tmp, *_preset("experiment", "engine-equivalence"))
    pres = s["presets"]
    ok = (len(pres) >= 3 and all(p["pvalue"] > 0.01 and p["replicates"] >= 500 for p in pres) and el <= 600
          and code == 0)
    _record(4, "faithful vs indexed engine, KS p > 0.01", ok,
            ", ".join(f"{p['label']} p={p['pvalue']:.3f}" for p in pres), el)
    assert ok


def test_criterion_05_martingale(tmp):
    code, s, el = _run(tmp, *_preset("experiment", "martingale"))
    labels = [k for k, v in s.items() if isinstance(v, dict)]
    reps = [s[k] for k in labels]
    ok = (len(reps) == 2 and all(abs(r["mean"]) <= 3 * r["stderr"] and 0.8 <= r["ratio"] <= 1.2
                                 and r["n_replicates"] >= 10_000 and r["t"] == 2.0 for r in reps)
          and el <= 600 and code == 0)
    _record(5, "martingale mean within 3 SE, bracket ratio in [0.8,1.2]", ok,
            ", ".join(f"{k}: mean/SE={s[k]['mean'] / s[k]['stderr']:+.2f} ratio={s[k]['ratio']:.3f}"
                      for k in labels), el)
    assert ok


def test_criterion_06_moment_equation(tmp):
    code, s, el = _run(tmp, *_preset("experiment", "moment"))
    res = s["residuals"]
    ok = ([r["t"] for r in res] == [1.0, 5.0, 25.0] and all(r["ci"][0] <= 0.0 <= r["ci"][1] for r in res)
          and el <= 900 and code == 0)
    _record(6, "first-moment residual CI contains 0 at t=1,5,25", ok,
            ", ".join(f"t={r['t']:g}: {r['residual']:+.3f} [{r['ci'][0]:+.3f},{r['ci'][1]:+.3f}]" for r in res), el)
    assert ok


def test_criterion_07_meanfield_solver(tmp):
    c1, lo, e1 = _run(tmp, *_preset("meanfield", "logistic-oracle"))
    c2, md, e2 = _run(tmp, *_preset("meanfield", "mass-decay"))
    ratios = lo["order_ratios"]
    ok = (lo["max_error"] < 1e-6 and all(12.0 <= q <= 20.0 for q in ratios) and md["passed_bound"]
          and md["worst_excess"] <= 1e-12 and e1 + e2 <= 60 and c1 == 0 and c2 == 0)
    _record(7, "logistic closed form, subcritical mass decay, RK4 order", ok,
            f"error {lo['max_error']:.2e}, halving ratios {', '.join(f'{q:.1f}' for q in ratios)}, "
            f"mass excess {md['worst_excess']:.1e}", e1 + e2)
    assert ok


def test_criterion_08_equilibrium(tmp):
    c1, fp, e1 = _run(tmp, *_preset("meanfield", "fixed-point"))
    c2, db, e2 = _run(tmp, *_preset("meanfield", "dbc-decay"))
    c3, l2, e3 = _run(tmp, *_preset("meanfield", "l2-decay"))
    ok = (fp["F_c0_error"] <= 1e-12 and fp["contraction_ok"] and fp["final_sup_dist"] < 1e-8
          and fp["assumption_C"]["passed"] and fp["gamma_gt_2d_mu"] and db["bound_ok"] and l2["monotone"]
          and l2["r2"] > 0.95 and e1 + e2 + e3 <= 120 and c1 == c2 == c3 == 0)
    _record(8, "F(c0)=c0, contraction to c0, detailed-balance bound, L2 decay", ok,
            f"|F(c0)-c0| {fp['F_c0_error']:.1e}, {fp['iterations']} iterations, bound_ok {db['bound_ok']}, "
            f"L2 R^2 {l2['r2']:.4f}", e1 + e2 + e3)
    assert ok


def test_criterion_09_stationarity(tmp):
    code, s, el = _run(tmp, *_preset("experiment", "stationarity"))
    dbc = s["dbc"]["results"]
    broken = s["broken_dbc"]["results"]
    ok = (len(dbc) == 6 and all(abs(r["mean"]) <= 3 * r["stderr"] and r["n"] >= 10_000 for r in dbc)
          and all(not r["contains_zero"] for r in broken) and el <= 600 and code == 0)
    worst = max(abs(r["mean"]) / r["stderr"] for r in dbc)
    weakest = min(abs(r["mean"]) / r["stderr"] for r in broken)
    _record(9, "E[L phi] = 0 under detailed balance; broken control excludes 0", ok,
            f"max |mean|/SE {worst:.2f} over 6 functions, control min |mean|/SE {weakest:.1f}", el)
    assert ok


def test_criterion_10_slivnyak(tmp):
    code, s, el = _run(tmp, *_preset("experiment", "slivnyak"))
    res = {r["label"]: r for r in s["results"]}
    count = [r for r in res.values() if r["exact"] is not None and r["exact"] > 20]
    ok = all(r["agree"] for r in res.values()) and len(count) == 1 and count[0]["exact_ok"] and el <= 120 \
        and code == 0
    _record(10, "Slivnyak identity for the h catalog", ok,
            ", ".join(f"{k}: {r['lhs']:.3f} vs {r['rhs']:.3f}" for k, r in res.items()), el)
    assert ok


def test_criterion_11_scaling_c1(tmp):
    code, s, el = _run(tmp, *_preset("experiment", "scaling-c1"))
    rms = np.asarray(s["rms"][0])
    ok = (s["ladder"] == [50, 100, 200, 400] and bool(np.all(np.diff(rms) < 0))
          and rms[-1] / rms[0] <= 0.45 and el <= 1200 and code == 0)
    _record(11, "mean-field scaling RMS strictly decreasing, final/initial <= 0.45", ok,
            f"RMS {', '.join(f'{v:.4f}' for v in rms)}, ratio {rms[-1] / rms[0]:.3f}", el)
    assert ok


def test_criterion_12_extinction_and_survival(tmp):
    c1, ex, e1 = _run(tmp, *_preset("experiment", "extinction"))
    c2, la, e2 = _run(tmp, *_preset("experiment", "lattice-survival"))
    sub, comp = ex["subcritical"], ex["compact"]
    lat_ok = (la["survival_condition"] and la["bpdl_survival"] > 0
              and la["bpdl_survival"] >= la["contact_survival"] - 3 * la["contact_stderr"])
    ok = (sub["replicates"] == 200 and sub["fraction"] == 1.0 and comp["fraction"] == 1.0
          and comp["mass_bound_ok"] and ex["mass_bound"]["passed"] and lat_ok and e1 + e2 <= 1200
          and c1 == c2 == 0)
    _record(12, "subcritical and compact extinction, lattice survival dominates contact process", ok,
            f"subcritical {sub['fraction']:.0%}, compact {comp['fraction']:.0%} (mass bound "
            f"{comp['mass_bound_ok']}), lattice {la['bpdl_survival']:.2f} vs contact "
            f"{la['contact_survival']:.2f}+-{la['contact_stderr']:.2f}", e1 + e2)
    assert ok


@pytest.mark.expensive
def test_criterion_13_superprocess_brackets(tmp):
    code, s, el = _run(tmp, "experiment", "scaling-c2", "--preset", "scaling-c2", "--expensive")
    k = s["ladder"].index(50)
    finite = np.asarray(s["finite_ratio"])
    limit = np.asarray(s["limit_ratio"])
    ok = (bool(np.all((finite[:, k] >= 0.8) & (finite[:, k] <= 1.2)))
          and bool(np.all((limit[:, -1] >= 0.7) & (limit[:, -1] <= 1.3))) and s["trend_ok"] and el <= 7200
          and code == 0)
    _record(13, "finite-n bracket at n=50, limit bracket trend", ok,
            f"finite {np.round(finite[:, k], 3).tolist()}, final limit {np.round(limit[:, -1], 3).tolist()}, "
            f"intercept {np.round(s['intercept'], 3).tolist()}", el)
    assert ok
