"""Command-line experiments with reproducible manifests and CSV, JSON and SVG output.

Exit codes: 0 success, 2 parameter or configuration error, 3 failed ``--check``.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import os
import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from . import exact_kernels as X
from . import observables as O
from . import svg
from . import tower as T
from .dynamics import MapSpec, expected_hits
from .errors import CertificateError, LdlabError
from .estimators import bounds, exponent, tail, windows

EXIT_OK, EXIT_USAGE, EXIT_CHECK = 0, 2, 3
PROB_KEYS = {"phat", "ci_lo", "ci_hi", "dp_lower", "dp_upper", "p", "se"}
EXPONENT_BANDS = {1.0: (0.35, 0.65), 2.0: (0.20, 0.48)}

PRESETS = {
    "stretched-exponent": ("exponent", "stretched-exponential upper tails at a fixed point, gamma = 1/(1+alpha)",
                           {"N": "1e8", "n": "25,50,100,200,400"}),
    "lower-bound": ("lowerbound", "interval lower bound on the tail at the fixed point",
                    {"n": "100,400,1600", "samples": "1000"}),
    "autocorrelation": ("autocorr", "exponential decay of autocorrelations for LogPow",
                        {"obs": "logpow:1:0:c", "nmax": "18"}),
    "lp-decay-invpow": ("lpdecay", "exponential L^p decay of P^n for InvPow",
                        {"obs": "invpow:0.5", "p": "1", "nmax": "20", "rate": "0.3"}),
    "lp-decay-logpow": ("lpdecay", "exponential L^p decay of P^n for LogPow",
                        {"obs": "logpow:1:0", "p": "2", "nmax": "18", "max_ratio": "0.75",
                         "rate": "0"}),
    "martingale": ("martingale", "martingale approximation with Azuma-Hoeffding tails",
                   {"n": "256", "alpha": "0.2"}),
    "erdos-renyi": ("erdos", "upper Erdos-Renyi law for i.i.d. exponential inputs",
                    {"alpha": "1.5", "I": "0.0945", "n": "1e7", "seeds": "50"}),
    "obstruction": ("obstruct", "no exponential large deviations near a periodic point",
                    {"map": "tent", "obs": "loglog:0:c", "nmax": "1e7", "seeds": "100"}),
    "pressure": ("pressure", "divergent pressure for observables unbounded at a periodic point",
                 {"t": "0.5", "M": "5,10,20,40"}),
    "tower": ("tower", "tower coboundary with exponential tails and no rate function",
              {"K": "2", "t": "1", "nmax": "2000"}),
    "oracle": ("oracle", "Monte Carlo against the exact cylinder DP", {"N": "1e7"}),
}
ALIASES = {"thm32": "stretched-exponent"}

DESCRIPTIONS = {
    "tail": "tail probabilities of Birkhoff sums on exact orbits",
    "exponent": "stretched-exponent fit of the upper tail",
    "lowerbound": "certified interval lower bound on the upper tail",
    "autocorr": "exact autocorrelations of the doubling map",
    "lpdecay": "L^p norms of transfer-operator iterates",
    "martingale": "martingale decomposition of a level-truncated observable",
    "erdos": "maximal window averages (Erdos-Renyi law)",
    "obstruct": "shrinking-target obstruction to exponential large deviations",
    "pressure": "pressure lower bounds and local integrability",
    "tower": "coboundary tower: MGF curve, variances and checks",
    "oracle": "Monte Carlo against the cylinder-DP sandwich",
}


class UsageError(Exception):
    pass


@dataclass
class Result:
    records: list
    summary: dict
    passed: bool | None = None
    plot: str | None = None
    notes: list = field(default_factory=list)


# ---------------------------------------------------------------------------
# argument types

def count(text) -> int:
    """Non-negative integer, accepting forms like ``1e8``."""
    try:
        v = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a number: {text!r}") from None
    if not (math.isfinite(v) and v >= 0 and v == int(v)):
        raise argparse.ArgumentTypeError(f"not a non-negative integer: {text!r}")
    return int(v)


def int_list(text):
    try:
        return [count(s) for s in str(text).split(",") if s.strip()]
    except argparse.ArgumentTypeError as exc:
        raise argparse.ArgumentTypeError(f"bad integer list {text!r}: {exc}") from None


def float_list(text):
    try:
        return [float(s) for s in str(text).split(",") if s.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad number list {text!r}") from None


def observable(text):
    try:
        return O.parse(text)
    except (ValueError, LdlabError) as exc:
        raise argparse.ArgumentTypeError(str(exc)) from None


def map_spec(text):
    if text == "doubling":
        return MapSpec.doubling()
    if text == "tent":
        return MapSpec.tent()
    raise argparse.ArgumentTypeError(f"unknown map {text!r} (doubling or tent)")


def _truthy(text) -> bool:
    v = str(text).strip().lower()
    if v in ("1", "true", "yes", "on"):
        return True
    if v in ("0", "false", "no", "off"):
        return False
    raise UsageError(f"expected a boolean, got {text!r}")


# ---------------------------------------------------------------------------
# subcommands

def _fit_slope(ns, values):
    ns = np.asarray(ns, dtype=float)
    y = np.log(np.abs(np.asarray(values, dtype=float)))
    return float(np.polyfit(ns, y, 1)[0])


def cmd_tail(a) -> Result:
    table = tail.tail_counts(a.map, a.obs, a.n, a.eps, a.N, a.seed, a.workers, a.source)
    records, series = [], []
    for e in table.eps:
        ests = table.estimates(e, a.side)
        for est in ests:
            r = est.as_record()
            records.append({k: r[k] for k in ("n", "eps", "count", "phat", "ci_lo", "ci_hi",
                                              "side", "N", "unreliable")})
        series.append((f"eps={e:g}", [x.query.n for x in ests], [x.p_hat for x in ests]))
    ok = all(not r["unreliable"] for r in records)
    plot = svg.line_plot(series, "tail probability", "n", "p_n", ylog=True)
    return Result(records, {"records": len(records), "all_reliable": ok}, ok, plot)


def default_eps(obs) -> float:
    """0.3 standard deviations of the observable."""
    return 0.3 * math.sqrt(O.variance(obs.raw)) if obs.kind != O.LOGPOW else \
        0.3 * math.sqrt(math.gamma(2 * obs.alpha + 1) - math.gamma(obs.alpha + 1) ** 2)


def cmd_exponent(a) -> Result:
    obs = O.log_pow(a.alpha, 0.0, centered=True)
    eps = default_eps(obs) if a.eps is None else a.eps
    table = tail.tail_counts(a.map, obs, a.n, [eps], a.N, a.seed, a.workers)
    ests = table.estimates(eps, "upper")
    fit = exponent.fit_exponent(ests)
    target = 1.0 / (1.0 + a.alpha)
    lo, hi = EXPONENT_BANDS.get(float(a.alpha), (target - 0.15, target + 0.15))
    summary = {"gamma_hat": fit.gamma_hat, "stderr": fit.stderr, "target": target,
               "band_lo": lo, "band_hi": hi, "alpha": a.alpha, "eps": eps,
               "n_min": fit.n_range[0], "n_max": fit.n_range[1], "points": len(fit.pairs)}
    records = [{k: r[k] for k in ("n", "eps", "count", "phat", "ci_lo", "ci_hi", "unreliable")}
               for r in (e.as_record() for e in ests)]
    plot = svg.line_plot([("-log p_n", [e.query.n for e in ests],
                           [-math.log(e.p_hat) if e.count else math.nan for e in ests])],
                         f"alpha={a.alpha:g}: gamma_hat={fit.gamma_hat:.3f}", "n", "-log p_n",
                         xlog=True, ylog=True)
    return Result(records, summary, lo <= fit.gamma_hat <= hi, plot)


def cmd_lowerbound(a) -> Result:
    obs = O.log_pow(a.alpha, 0.0)
    records = []
    for n in a.n:
        try:
            lb = exponent.lower_bound_construction(a.map, obs, n, a.eps, a.samples, a.seed,
                                                   a.slack)
            rec = lb.as_record()
        except CertificateError as exc:
            rec = {"n": n, "eps": a.eps, "points": a.samples, "failures": exc.failures}
        records.append(rec)
    failures = sum(r["failures"] for r in records)
    return Result(records, {"alpha": a.alpha, "eps": a.eps, "failures": failures},
                  failures == 0)


def cmd_autocorr(a) -> Result:
    ns = list(range(a.nmin, a.nmax + 1))
    vals = [X.autocorrelation(a.obs, n) for n in ns]
    slope = _fit_slope(ns, vals)
    control = O.polynomial((-0.5, 1.0))
    c0 = X.autocorrelation(control, 0)
    ctrl_err = max(abs(X.autocorrelation(control, n) - c0 * 2.0**-n) for n in range(1, a.nmax + 1))
    records = [{"n": n, "autocorrelation": v} for n, v in zip(ns, vals)]
    summary = {"slope": slope, "slope_limit": a.slope_limit, "control_max_error": ctrl_err}
    plot = svg.line_plot([("|C(n)|", ns, np.abs(vals))], "autocorrelation", "n", "|C(n)|",
                         ylog=True)
    return Result(records, summary, slope <= a.slope_limit and ctrl_err <= 1e-10, plot)


def cmd_lpdecay(a) -> Result:
    curve = X.lp_decay_curve(a.obs, a.p, a.nmax)
    norms = curve.norm
    C = norms[2] * math.exp(a.rate * 2) if a.nmax >= 2 else norms[0]
    records, ok = [], True
    for n, v in zip(curve.n, norms):
        rec = {"n": int(n), "norm": float(v)}
        if n >= 2 and a.rate > 0:
            rec["bound"] = C * math.exp(-a.rate * n)
            ok &= v <= rec["bound"] * (1 + 1e-12)
        if n >= 1:
            rec["ratio"] = float(v / norms[n - 1])
            if a.max_ratio is not None and n >= 5:
                ok &= rec["ratio"] <= a.max_ratio
        records.append(rec)
    summary = {"p": a.p, "slope": curve.slope, "rate": a.rate, "C": C,
               "max_ratio_from5": max((r["ratio"] for r in records if r["n"] >= 5), default=None)}
    plot = svg.line_plot([("norm", curve.n, norms)], f"L^{a.p:g} decay", "n", "norm", ylog=True)
    return Result(records, summary, bool(ok), plot)


def cmd_martingale(a) -> Result:
    parts = X.martingale_decompose(a.obs, a.n, a.alpha, a.theta, grid_bits=a.grid_bits)
    summary = {"n": parts.n, "M_n": parts.M_n, "C_n": parts.C_n, "theta": parts.theta,
               "variation": parts.variation, "tail_bound": parts.tail_bound,
               "w_tail_bound": parts.w_tail_bound, "sup_w": parts.sup_w,
               "residual": parts.residual, "telescoping_error": parts.telescoping_error,
               "sup_w_bound": parts.C_n * parts.M_n + parts.w_tail_bound}
    step = max(1, len(parts.grid) // 256)
    records = [{"x": float(x), "w": float(w), "g": float(g)}
               for x, w, g in zip(parts.grid[::step], parts.w_grid[::step], parts.g_grid[::step])]
    ok = (parts.telescoping_error <= 1e-10 and parts.residual <= parts.tail_bound
          and parts.sup_w <= summary["sup_w_bound"])
    plot = svg.line_plot([("w", parts.grid[::step], parts.w_grid[::step]),
                          ("g", parts.grid[::step], parts.g_grid[::step])],
                         "martingale decomposition", "x", "value")
    return Result(records, summary, ok, plot)


def cmd_erdos(a) -> Result:
    seeds = range(a.seed, a.seed + a.seeds)
    main = windows.erdos_renyi_ensemble(a.obs, a.n, a.I, seeds, a.workers, source=a.source)
    ref = windows.erdos_renyi_ensemble(a.obs, a.compare_n, a.I, seeds, a.workers, source=a.source)
    records = [{"seed": s, "n": w.n, "ell": w.ell, "W": w.W, "argmax": w.argmax}
               for s, w in zip(seeds, main)]
    records += [{"seed": s, "n": w.n, "ell": w.ell, "W": w.W, "argmax": w.argmax}
                for s, w in zip(seeds, ref)]
    med = float(np.median([w.W for w in main]))
    med_ref = float(np.median([w.W for w in ref]))
    summary = {"alpha": a.alpha, "I": a.I, "n": a.n, "median": med, "compare_n": a.compare_n,
               "median_compare": med_ref, "band": a.band}
    ok = abs(med - a.alpha) <= a.band and abs(med - a.alpha) < abs(med_ref - a.alpha)
    return Result(records, summary, ok)


def cmd_obstruct(a) -> Result:
    seeds = range(a.seed, a.seed + a.seeds)
    reports = windows.obstruction_ensemble(a.map, a.obs, a.gamma, a.alpha, a.I, a.nmax, seeds,
                                           a.workers)
    records = []
    for s, r in zip(seeds, reports):
        records.append({"seed": s, "N0": r.N0, "hits": len(r.hits), "hits_beyond": len(r.hits_beyond),
                        "exceedances": len(r.exceedances), "verified": len(r.verified)})
    N0 = reports[0].N0
    exact = expected_hits(a.nmax, a.gamma, N0 + 1, a.map.periodic_point)
    log_formula = math.log(a.nmax) - math.log(N0)
    mean_hits = float(np.mean([r["hits_beyond"] for r in records]))
    frac = float(np.mean([r["verified"] > 0 for r in records]))
    summary = {"M": reports[0].M, "M_min": reports[0].M_min, "N0": N0, "seeds": a.seeds,
               "fraction_verified": frac, "mean_hits_beyond": mean_hits,
               "expected_hits_exact": exact, "expected_hits_log": log_formula}
    ok = (frac >= a.min_fraction and abs(mean_hits - exact) <= a.tolerance * exact
          and abs(log_formula - exact) <= a.tolerance * exact)
    return Result(records, summary, ok)


def cmd_pressure(a) -> Result:
    rep = bounds.pressure_diagnostics(a.map, a.obs, a.t, a.M, a.n)
    records = rep.records()
    slopes = [row.slope for row in rep.levels]
    ok = all(b > s for s, b in zip(slopes, slopes[1:]))
    ok &= all(row.infinite == (row.exponent >= 1.0) for row in rep.integrability)
    summary = {"t": a.t, "lambda": rep.lam, "slopes_increasing": bool(ok),
               "infinite_for_all_n": all(row.infinite for row in rep.integrability)}
    plot = svg.line_plot([("slope", [r.M for r in rep.levels], slopes)], "pressure lower bound",
                         "M", "t M - log lambda")
    return Result(records, summary, ok, plot)


def cmd_tower(a) -> Result:
    model = T.build(a.K)
    cob = T.verify_coboundary(model, a.trajectories, a.length, a.seed)
    resid = T.stationarity_residual(model)
    curve = T.log_mgf_curve(model, a.t, a.nmax)
    early = curve.value[: min(200, a.nmax)]
    late = curve.value[200:]
    summary = {"K": a.K, "states": model.n_states, "C": model.C, "Z": model.Z,
               "log10_tail": model.log10_tail, "violations": cob.violations,
               "trajectory_mismatches": cob.trajectory_mismatches,
               "stationarity_residual": resid, "t": a.t, "nmax": a.nmax,
               "mgf_max_n_le_200": float(early.max()),
               "limsup_proxy": float(curve.limsup_proxy[a.nmax // 2]),
               "liminf_proxy": float(curve.liminf_proxy[a.nmax // 2])}
    if late.size:
        summary["mgf_min_n_gt_200"] = float(late.min())
    ok = cob.violations == 0 and cob.trajectory_mismatches == 0 and resid <= 1e-12
    if a.t == 1.0:
        ok &= early.max() >= 0.2 and late.size > 0 and late.min() <= 0.05
    if a.K <= T.MAX_DIST_K:
        var = T.variance_curve(model, a.dist_n)
        e_psi2 = T.psi_second_moment(model)
        summary["max_variance"] = max(v for _, v, _ in var)
        summary["variance_bound"] = 4 * e_psi2
        summary["max_abs_mean"] = max(abs(m) for _, _, m in var)
        ok &= summary["max_variance"] <= 4 * e_psi2 and summary["max_abs_mean"] <= 1e-10
    records = [{"n": int(n), "mgf": float(v), "limsup": float(s), "liminf": float(i)}
               for n, v, s, i in zip(curve.n, curve.value, curve.limsup_proxy, curve.liminf_proxy)]
    plot = svg.line_plot([("(1/n) log E e^(t S_n)", curve.n, curve.value)],
                         f"tower K={a.K}, t={a.t:g}", "n", "value", xlog=True)
    return Result(records, summary, bool(ok), plot)


def cmd_oracle(a) -> Result:
    rng = np.random.default_rng(a.seed)
    cases = []
    for i in range(a.cases):
        d = int(rng.integers(1, a.depth + 1))
        n = int(rng.integers(2, a.nmax + 1))
        obs = tail.random_cylinder(rng, d)
        cases.append((d, obs, n))
    records, ok = [], True
    for i, (d, obs, n) in enumerate(cases):
        cmp = tail.oracle_compare(obs, n, a.eps, a.N, a.seed + i, a.delta, a.side, a.workers)
        rec = {"case": i, "depth": d}
        rec.update(cmp.as_record())
        records.append(rec)
        ok &= cmp.within
    return Result(records, {"cases": a.cases, "all_within": bool(ok)}, bool(ok))


# ---------------------------------------------------------------------------
# parser

def _common(p):
    p.add_argument("--seed", type=count, default=None,
                   help="seed (default: $LDLAB_SEED or 0)")
    p.add_argument("--workers", type=count, default=None, help="worker threads")
    p.add_argument("--out", default=None, help="output directory")
    p.add_argument("--formats", default="csv,json,svg", help="subset of csv,json,svg")
    p.add_argument("--config", default=None, help="key = value configuration file")
    p.add_argument("--preset", default=None, help="named experiment preset")
    p.add_argument("--check", action="store_true", help="exit 3 if the self-check fails")


def build_parser():
    parser = argparse.ArgumentParser(prog="ldlab", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"ldlab {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    ps = {}

    def add(name, fn):
        p = sub.add_parser(name, help=DESCRIPTIONS[name], description=DESCRIPTIONS[name])
        _common(p)
        p.set_defaults(func=fn)
        ps[name] = p
        return p

    p = add("tail", cmd_tail)
    p.add_argument("--map", type=map_spec, default="doubling")
    p.add_argument("--obs", type=observable, default="logpow:1:0")
    p.add_argument("--n", type=int_list, default="100")
    p.add_argument("--eps", type=float_list, default="0.3")
    p.add_argument("--N", type=count, default="1e6")
    p.add_argument("--side", choices=tail.SIDES, default="upper")
    p.add_argument("--source", choices=(tail.ORBIT, tail.IID), default=tail.ORBIT)

    p = add("exponent", cmd_exponent)
    p.add_argument("--map", type=map_spec, default="doubling")
    p.add_argument("--alpha", type=float, default=1.0)
    p.add_argument("--eps", type=float, default=None, help="default 0.3 standard deviations")
    p.add_argument("--n", type=int_list, default="25,50,100,200,400")
    p.add_argument("--N", type=count, default="1e6")

    p = add("lowerbound", cmd_lowerbound)
    p.add_argument("--map", type=map_spec, default="doubling")
    p.add_argument("--alpha", type=float, default=1.0)
    p.add_argument("--n", type=int_list, default="100,400,1600")
    p.add_argument("--eps", type=float, default=0.3)
    p.add_argument("--samples", type=count, default=1000)
    p.add_argument("--slack", type=float, default=0.01)

    p = add("autocorr", cmd_autocorr)
    p.add_argument("--obs", type=observable, default="logpow:1:0:c")
    p.add_argument("--nmin", type=count, default=2)
    p.add_argument("--nmax", type=count, default=18)
    p.add_argument("--slope-limit", type=float, default=-0.3)

    p = add("lpdecay", cmd_lpdecay)
    p.add_argument("--obs", type=observable, default="invpow:0.5")
    p.add_argument("--p", type=float, default=1.0)
    p.add_argument("--nmax", type=count, default=20)
    p.add_argument("--rate", type=float, default=0.3)
    p.add_argument("--max-ratio", type=float, default=None)

    p = add("martingale", cmd_martingale)
    p.add_argument("--obs", type=observable, default="logpow:1:0")
    p.add_argument("--n", type=count, default=256)
    p.add_argument("--alpha", type=float, default=0.2)
    p.add_argument("--theta", type=float, default=math.log(2.0))
    p.add_argument("--grid-bits", type=count, default=12)

    p = add("erdos", cmd_erdos)
    p.add_argument("--obs", type=observable, default="logpow:1:0")
    p.add_argument("--alpha", type=float, default=1.5)
    p.add_argument("--I", type=float, default=0.0945)
    p.add_argument("--n", type=count, default="1e7")
    p.add_argument("--compare-n", type=count, default="1e3")
    p.add_argument("--seeds", type=count, default=50)
    p.add_argument("--band", type=float, default=0.45)
    p.add_argument("--source", choices=("iid", "orbit"), default="iid")

    p = add("obstruct", cmd_obstruct)
    p.add_argument("--map", type=map_spec, default="tent")
    p.add_argument("--obs", type=observable, default="loglog:0:c")
    p.add_argument("--gamma", type=float, default=1.0)
    p.add_argument("--alpha", type=float, default=0.5)
    p.add_argument("--I", type=float, default=2.0 * math.log(2.0))
    p.add_argument("--nmax", type=count, default="1e7")
    p.add_argument("--seeds", type=count, default=100)
    p.add_argument("--min-fraction", type=float, default=0.9)
    p.add_argument("--tolerance", type=float, default=0.25)

    p = add("pressure", cmd_pressure)
    p.add_argument("--map", type=map_spec, default="doubling")
    p.add_argument("--obs", type=observable, default="logpow:1:0")
    p.add_argument("--t", type=float, default=0.5)
    p.add_argument("--M", type=float_list, default="5,10,20,40")
    p.add_argument("--n", type=int_list, default="2,5,10,20,50,100")

    p = add("tower", cmd_tower)
    p.add_argument("--K", type=count, default=3)
    p.add_argument("--t", type=float, default=1.0)
    p.add_argument("--nmax", type=count, default=2000)
    p.add_argument("--trajectories", type=count, default=1000)
    p.add_argument("--length", type=count, default=1000)
    p.add_argument("--dist-n", type=count, default=300)

    p = add("oracle", cmd_oracle)
    p.add_argument("--cases", type=count, default=10)
    p.add_argument("--depth", type=count, default=8)
    p.add_argument("--nmax", type=count, default=32)
    p.add_argument("--eps", type=float, default=0.1)
    p.add_argument("--delta", type=float, default=2.0**-12)
    p.add_argument("--N", type=count, default="1e7")
    p.add_argument("--side", choices=("upper", "lower"), default="upper")
    return parser, ps


def read_config(path) -> dict:
    """``key = value`` lines; blank lines and ``#`` comments ignored."""
    out = {}
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise UsageError(f"cannot read config {path}: {exc.strerror}") from None
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise UsageError(f"config line {lineno}: expected 'key = value', got {line!r}")
        key, value = (s.strip() for s in line.split("=", 1))
        if not key:
            raise UsageError(f"config line {lineno}: empty key")
        out[key.replace("-", "_")] = value
    return out


def _apply_defaults(sub, overrides: dict, origin: str):
    actions = {a.dest: a for a in sub._actions if a.dest != "help"}
    fixed = {}
    for key, value in overrides.items():
        if key in ("config", "preset", "func") or key not in actions:
            raise UsageError(f"unknown {origin} key {key!r}")
        act = actions[key]
        if act.nargs == 0:
            fixed[key] = _truthy(value)
            continue
        if act.choices is not None and value not in act.choices:
            raise UsageError(f"{origin} key {key!r}: {value!r} not in {list(act.choices)}")
        try:
            fixed[key] = act.type(value) if act.type else value
        except (argparse.ArgumentTypeError, ValueError) as exc:
            raise UsageError(f"{origin} key {key!r}: {exc}") from None
    sub.set_defaults(**fixed)


def resolve(argv):
    """Parse ``argv`` with precedence flags > config file > preset > built-in defaults."""
    parser, subs = build_parser()
    args = parser.parse_args(argv)
    sub = subs[args.command]
    preset = theorem = None
    if args.preset:
        name = ALIASES.get(args.preset, args.preset)
        if name not in PRESETS:
            raise UsageError(f"unknown preset {args.preset!r}; choose from {sorted(PRESETS)}")
        command, theorem, values = PRESETS[name]
        if command != args.command:
            raise UsageError(f"preset {name!r} belongs to the {command!r} subcommand")
        preset = name
        _apply_defaults(sub, values, "preset")
    if args.config:
        _apply_defaults(sub, read_config(args.config), "config")
    args = parser.parse_args(argv)
    if args.seed is None:
        env = os.environ.get("LDLAB_SEED")
        try:
            args.seed = count(env) if env else 0
        except argparse.ArgumentTypeError:
            raise UsageError(f"LDLAB_SEED is not a non-negative integer: {env!r}") from None
    fmts = {f.strip() for f in args.formats.split(",") if f.strip()}
    if not fmts <= {"csv", "json", "svg"}:
        raise UsageError(f"unknown formats {sorted(fmts - {'csv', 'json', 'svg'})}")
    args.formats = fmts
    args.preset = preset
    args.theorem = theorem or DESCRIPTIONS[args.command]
    return args


# ---------------------------------------------------------------------------
# output

def _plain(v):
    if isinstance(v, (np.integer,)):
        return int(v)
    if isinstance(v, (np.floating,)):
        return float(v)
    if isinstance(v, np.bool_):
        return bool(v)
    if isinstance(v, MapSpec):
        return v.kind
    if isinstance(v, O.ObservableSpec):
        return _obs_text(v)
    if isinstance(v, (list, tuple)):
        return [_plain(x) for x in v]
    if isinstance(v, set):
        return sorted(v)
    return v


def _obs_text(obs):
    if obs.kind == O.LOGPOW:
        s = f"logpow:{obs.alpha:g}:{obs.center:g}"
    elif obs.kind == O.INVPOW:
        s = f"invpow:{obs.alpha:g}"
    elif obs.kind == O.LOGLOG:
        s = f"loglog:{obs.center:g}"
    elif obs.kind == O.POLY:
        s = "poly:" + ":".join(f"{c:g}" for c in obs.coeffs)
    else:
        s = f"cylinder:{obs.depth}"
    return s + (":c" if obs.centered else "")


def clean_record(rec: dict) -> dict:
    """JSON-safe flat record: non-finite numbers are dropped and flagged unreliable."""
    out = {}
    for k, v in rec.items():
        v = _plain(v)
        if isinstance(v, float) and not math.isfinite(v):
            out["unreliable"] = True
            continue
        if v is None:
            continue
        out[k] = v
    return out


def _fmt(key, v):
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return f"{v:.16e}" if key in PROB_KEYS else repr(v)
    return str(v)


def to_csv(records) -> str:
    keys = []
    for r in records:
        keys.extend(k for k in r if k not in keys)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\r\n")
    w.writerow(keys)
    for r in records:
        w.writerow([_fmt(k, r[k]) if k in r else "" for k in keys])
    return buf.getvalue()


def manifest(args) -> dict:
    params = {k: _plain(v) for k, v in sorted(vars(args).items())
              if k not in ("func", "config", "out", "formats", "check", "theorem", "preset",
                           "command", "workers")}
    return {"artifact": "artifact", "version": __version__, "command": args.command,
            "preset": args.preset, "theorem": args.theorem, "seed": args.seed,
            "workers": args.workers, "parameters": params}


def write_outputs(args, result: Result):
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "manifest.json").write_text(json.dumps(manifest(args), indent=2, sort_keys=True) + "\n")
    if "csv" in args.formats:
        (out / "results.csv").write_text(to_csv(result.records), newline="")
    if "json" in args.formats:
        payload = {"summary": result.summary, "records": result.records}
        if args.check:
            payload["check_passed"] = bool(result.passed)
        (out / "results.json").write_text(json.dumps(payload, indent=1, allow_nan=False) + "\n")
    if "svg" in args.formats and result.plot:
        (out / "plot.svg").write_text(result.plot)


def main(argv=None) -> int:
    try:
        args = resolve(sys.argv[1:] if argv is None else argv)
    except UsageError as exc:
        print(f"ldlab: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        result = args.func(args)
    except (ValueError, ArithmeticError, LdlabError) as exc:
        print(f"ldlab {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    result.records = [clean_record(r) for r in result.records]
    result.summary = clean_record(result.summary)
    if args.out:
        write_outputs(args, result)
    if args.command == "tail":
        sys.stdout.write(to_csv(result.records))
    else:
        print(json.dumps(result.summary, allow_nan=False))
    if args.check and not result.passed:
        print(f"ldlab {args.command}: self-check FAILED", file=sys.stderr)
        return EXIT_CHECK
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
