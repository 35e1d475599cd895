"""Command-line front end: ``besselharm eval | verify | report``.

Exit codes: 0 success, 2 invalid input (config, report, missing file),
3 numerical accuracy failure (partial output is kept), 4 a verification
suite did not converge or failed its tolerance.
"""

import argparse
import csv
import io
import math
import os
import sys

import numpy as np

from . import operators as op
from . import verifier as V
from .config import STANDARD_ESTIMATES, ConfigError, load, parse
from .errors import AccuracyError, BesselHarmError
from .hankel import GridFunction, make_grid, make_plan, synthesize
from .kernels import heat_closed, poisson_kernel
from .specfun import LambdaIndex

EXIT_OK, EXIT_USAGE, EXIT_ACCURACY, EXIT_FAILED = 0, 2, 3, 4


def _fail(code, msg):
    print(f"besselharm: {msg}", file=sys.stderr)
    return code


# ---------------------------------------------------------------------------
# config resolution

def _resolve_config(args):
    cfg = load(args.config) if args.config else parse("")
    if getattr(args, "seed", None) is not None:
        if args.seed < 0 or args.seed >= 2 ** 64:
            raise ConfigError("--seed must be an unsigned 64-bit integer")
        cfg.sampler.seed = args.seed
    if getattr(args, "threads", None) is not None:
        cfg.threads = args.threads
    if getattr(args, "out", None):
        cfg.output.dir = args.out
    if getattr(args, "estimate", None):
        cfg.estimates = list(args.estimate)
    if getattr(args, "target", None):
        cfg.eval.target = args.target
    return cfg.validate()


def _echo(cfg):
    text = cfg.dump()
    print(text, end="")
    os.makedirs(cfg.output.dir, exist_ok=True)
    with open(os.path.join(cfg.output.dir, "config.resolved.yaml"), "w") as fh:
        fh.write(text)


def _plan(cfg):
    lam = LambdaIndex.of(cfg.lam)
    order = cfg.grid.order or None
    return make_plan(lam, make_grid(lam, order, cfg.grid.zmax))


# ---------------------------------------------------------------------------
# eval

def _read_points(path):
    try:
        with open(path) as fh:
            rows = [r for r in csv.reader(fh) if r and not r[0].lstrip().startswith("#")]
    except OSError as exc:
        raise ConfigError(f"cannot read points file {path}: {exc}") from exc
    out = []
    for i, r in enumerate(rows):
        try:
            out.append([float(v) for v in r])
        except ValueError:
            if i == 0:
                continue            # header row
            raise ConfigError(f"non-numeric row {i + 1} in {path}") from None
    return out


def _points(cfg, args, width):
    rows = _read_points(args.points) if args.points else [list(map(float, p)) for p in cfg.eval.points]
    for r in rows:
        if len(r) not in width:
            raise ConfigError(f"point rows need {' or '.join(map(str, width))} columns, got {len(r)}")
    return rows


def _test_function(cfg, plan):
    """The (f, h f) pair selected by eval.function."""
    if cfg.eval.function == "band_limited":
        return V.band_limited_family(plan, 1, cfg.sampler.seed)[0]
    if cfg.eval.target == "transform":
        f = GridFunction(plan.grid, np.exp(-0.5 * np.sum(plan.grid.points() ** 2, axis=-1)))
    else:
        f = GridFunction(plan.grid, np.exp(-np.sum(plan.grid.points() ** 2, axis=-1)))
    return f, GridFunction(plan.grid, plan.apply(f.values))


def _operator_values(cfg, plan, pair, pts):
    """Operator values at the points (rows of pts), or on the grid if pts is None."""
    ev, ops, lam = cfg.eval, cfg.operators, plan.lam
    name = ev.operator
    if name == "multiplier":
        d = ops.laplace
        if d["psi"] == "constant":
            sym = op.LaplaceSymbol.constant(d.get("kind", "W"))
        elif d["psi"] == "imaginary_power":
            sym = op.LaplaceSymbol.imaginary_power(float(d.get("gamma", 0.5)), d.get("kind", "W"))
        else:
            sym = op.LaplaceSymbol.exponential(d.get("kind", "W"))
        zabs = np.sqrt(np.sum(plan.grid.points() ** 2, axis=-1))
        Mf = GridFunction(plan.grid, op.multiplier_values(sym, zabs) * pair[1].values)
        return plan.apply(Mf.values).reshape(-1) if pts is None else synthesize(plan, Mf, pts)
    if name == "riesz":
        m = ops.riesz.get("m") or (1,) + (0,) * (lam.n - 1)
        if pts is None:
            return op.riesz_spectral(plan, m, pair).values.reshape(-1)
        return op.riesz_spectral_at(plan, m, pair, pts)
    if pts is None:
        if ev.which != "W" and name != "semigroup":
            raise ConfigError("grid-wide maximal and g-function evaluation is available for W only")
        if name == "semigroup":
            return op.semigroup_grid(plan, ev.which, ev.t, pair).values.reshape(-1)
        if name == "maximal":
            return op.maximal_grid(plan, pair).reshape(-1)
        g = ops.heat_g
        return op.g_function_grid(plan, g.get("m") or (0,) * lam.n, g["k"], g["r"], pair).reshape(-1)
    out = []
    for x in pts:
        if name == "semigroup":
            out.append(op.semigroup_apply(lam, ev.which, ev.t, pair, x, plan=plan)[0])
        elif name == "maximal":
            out.append(op.maximal(lam, ev.which, pair, x, plan=plan))
        else:
            g = ops.heat_g if ev.which == "W" else ops.poisson_g
            out.append(op.g_function(lam, g.get("m") or (0,) * lam.n, g["k"], g["r"], ev.which, pair, x,
                                     plan=plan))
    return np.array(out)


def _fmt(v, cplx):
    v = complex(v)
    return [repr(v.real)] + ([repr(v.imag)] if cplx else [])


def cmd_eval(args):
    try:
        cfg = _resolve_config(args)
    except (ConfigError, BesselHarmError) as exc:
        return _fail(EXIT_USAGE, str(exc))
    _echo(cfg)
    n = cfg.dimension
    path = os.path.join(cfg.output.dir, "eval.csv")
    fh = open(path, "w", newline="")
    w = csv.writer(fh, lineterminator="\n")
    xs = [f"x_{i + 1}" for i in range(n)]
    try:
        ev = cfg.eval
        if ev.target == "kernel":
            rows = _points(cfg, args, (2 * n, 2 * n + 1))
            w.writerow(xs + [f"y_{i + 1}" for i in range(n)] + ["t", "value"])
            fn = heat_closed if ev.kernel == "heat" else poisson_kernel
            for r in rows:
                t = r[2 * n] if len(r) == 2 * n + 1 else ev.t
                x, y = np.array(r[:n]), np.array(r[n:2 * n])
                val = float(np.squeeze(fn(cfg.lam, t, x, y)))
                w.writerow([repr(v) for v in r[:2 * n]] + [repr(float(t)), repr(val)])
                fh.flush()
        else:
            plan = _plan(cfg)
            pair = _test_function(cfg, plan)
            rows = _points(cfg, args, (n,))
            pts = np.array(rows) if rows else None
            where = plan.grid.points().reshape(-1, n) if pts is None else pts
            if ev.target == "transform":
                inp = pair[0].values.reshape(-1) if pts is None else synthesize(plan, pair[1], pts)
                val = pair[1].values.reshape(-1) if pts is None else synthesize(plan, pair[0], pts)
            else:
                inp = pair[0].values.reshape(-1) if pts is None else synthesize(plan, pair[1], pts)
                val = _operator_values(cfg, plan, pair, pts)
            cplx = bool(np.iscomplexobj(val))
            w.writerow(xs + ["input", "value"] + (["value_im"] if cplx else []))
            for p, a, b in zip(where, inp, val):
                w.writerow([repr(float(c)) for c in p] + [repr(float(np.real(a)))] + _fmt(b, cplx))
    except AccuracyError as exc:
        fh.close()
        return _fail(EXIT_ACCURACY, f"accuracy failure: {exc} (partial output in {path})")
    except BesselHarmError as exc:
        fh.close()
        return _fail(EXIT_USAGE, str(exc))
    fh.close()
    return EXIT_OK


# ---------------------------------------------------------------------------
# verify

def _tol(cfg, key, default):
    return float(cfg.tolerances.get(key, default))


def run_estimate(cfg, eid):
    """Reports for one estimate or suite id under the campaign config."""
    lam, seed, count, thr = cfg.lam, cfg.sampler.seed, cfg.sampler.count, cfg.threads
    ops = cfg.operators
    if eid in STANDARD_ESTIMATES:
        fam = eid.split(".")[0]
        params = {}
        if fam in ("heat_g", "poisson_g"):
            d = getattr(ops, fam)
            params = {"k": d["k"], "r": d["r"]} | ({"m": d["m"]} if d.get("m") else {})
        elif fam == "riesz" and ops.riesz.get("m"):
            params = {"m": ops.riesz["m"]}
        elif fam == "laplace":
            params = {"kind": ops.laplace.get("kind", "W")}
        return [V.standard_estimate(eid, lam, count, seed, thr, params)]
    if eid == "phi_bound":
        return [V.phi_bound_suite(seed=seed)]
    if eid == "theta":
        return [V.theta_suite(cfg.dimension, cfg.sampler.theta_count, seed)]
    if eid == "involution":
        return V.involution_suite(tol=_tol(cfg, "involution", 1e-6))
    if eid == "self_reciprocity":
        return [V.self_reciprocity_suite(tol=_tol(cfg, eid, 1e-8))]
    if eid == "three_route":
        return [V.three_route_suite(seed=seed, tol=_tol(cfg, eid, 1e-6))]
    if eid == "chapman_kolmogorov":
        return [V.chapman_kolmogorov_suite(seed=seed, tol=_tol(cfg, eid, 1e-5))]
    if eid == "eigenfunction":
        return [V.eigenfunction_suite(seed=seed, tol=_tol(cfg, eid, 1e-6))]
    if eid == "poisson_closed":
        return [V.poisson_closed_suite(seed=seed, tol=_tol(cfg, eid, 1e-6))]
    if eid == "g_constant":
        return [V.g_constant_suite(seed=seed, tol=_tol(cfg, eid, 1e-4))]
    if eid == "multiplier":
        return V.multiplier_suite(seed=seed, tol_id=_tol(cfg, "multiplier_identity", 1e-8),
                                  tol_norm=_tol(cfg, "multiplier_imaginary_power", 1e-6))
    if eid == "limits":
        tr = cfg.time_rule
        return V.limits_suite(seed=seed, trule=op.TimeRule(tr.t_min, tr.t_max, tr.count),
                              tol0=_tol(cfg, "limits.t_min", 1e-3), tol_inf=_tol(cfg, "limits.t_max", 1e-6))
    if eid == "duality":
        dl = tuple(lam) if cfg.dimension == 2 else (0.5, 1.3)
        return [V.duality_suite(dl, seed=seed, tol=_tol(cfg, eid, 1e-3))]
    if eid == "bridge":
        return V.verify_bridge(lam, V.PairSampler(seed, cfg.dimension, count), thr)
    if eid == "estexp":
        return V.verify_estexp(lam, V.estexp_cases(cfg.dimension), seed=seed)
    if eid.startswith("l2."):
        return [V.l2_opnorm(eid[3:], lam, seed=seed)]
    raise ConfigError(f"unknown estimate id {eid}")


def _write_reports(out_dir, reports):
    for r in reports:
        with open(os.path.join(out_dir, f"{r.estimate_id}.json"), "w") as fh:
            fh.write(r.to_json())
    with open(os.path.join(out_dir, "summary.csv"), "w", newline="") as fh:
        fh.write(V.summary_csv(reports))


def cmd_verify(args):
    try:
        cfg = _resolve_config(args)
    except (ConfigError, BesselHarmError) as exc:
        return _fail(EXIT_USAGE, str(exc))
    _echo(cfg)
    reports = []
    try:
        for eid in cfg.estimates:
            reports.extend(run_estimate(cfg, eid))
            _write_reports(cfg.output.dir, reports)
    except AccuracyError as exc:
        _write_reports(cfg.output.dir, reports)
        return _fail(EXIT_ACCURACY, f"accuracy failure in {eid}: {exc}")
    except BesselHarmError as exc:
        return _fail(EXIT_USAGE, str(exc))
    _write_reports(cfg.output.dir, reports)
    print(format_table(reports), end="")
    bad = [r.estimate_id for r in reports if not r.ok]
    if bad:
        return _fail(EXIT_FAILED, f"not converged or failed: {', '.join(sorted(bad))}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# report

def format_table(reports):
    rows = [("estimate_id", "operator", "samples", "constant", "drift", "converged", "passed")]
    for r in sorted(reports, key=lambda r: r.estimate_id):
        c = r.max_ratio
        rows.append((r.estimate_id, r.operator, str(r.sample_count),
                     f"{c:.6g}" if isinstance(c, (int, float)) and math.isfinite(c) else str(c),
                     f"{r.drift:.3g}" if isinstance(r.drift, (int, float)) else str(r.drift),
                     "yes" if r.converged else "no", "yes" if r.ok else "no"))
    widths = [max(len(row[i]) for row in rows) for i in range(len(rows[0]))]
    buf = io.StringIO()
    for row in rows:
        buf.write("  ".join(v.ljust(w) for v, w in zip(row, widths)).rstrip() + "\n")
    return buf.getvalue()


def load_reports(paths):
    files = []
    for p in paths:
        if os.path.isdir(p):
            files.extend(sorted(os.path.join(p, f) for f in os.listdir(p) if f.endswith(".json")))
        elif os.path.isfile(p):
            files.append(p)
        else:
            raise ConfigError(f"no such report file: {p}")
    if not files:
        raise ConfigError("no report files found")
    out = []
    for f in files:
        with open(f) as fh:
            try:
                out.append(V.EstimateReport.from_json(fh.read()))
            except (BesselHarmError, TypeError) as exc:
                raise ConfigError(f"{f}: {exc}") from exc
    return out


def cmd_report(args):
    try:
        reports = load_reports(args.paths)
    except BesselHarmError as exc:
        return _fail(EXIT_USAGE, str(exc))
    print(format_table(reports), end="")
    return EXIT_OK


# ---------------------------------------------------------------------------

def build_parser():
    p = argparse.ArgumentParser(prog="besselharm", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("--config", metavar="PATH", help="campaign YAML file (defaults fill omitted fields)")
        sp.add_argument("--seed", type=int, help="sampler seed (unsigned 64-bit)")
        sp.add_argument("--threads", type=int, help="worker cap for sampled estimates")
        sp.add_argument("--out", metavar="DIR", help="output directory")

    e = sub.add_parser("eval", help="evaluate kernels, transforms or operators")
    common(e)
    e.add_argument("--target", choices=("kernel", "transform", "operator"))
    e.add_argument("--points", metavar="FILE", help="CSV of points (x..., y..., [t] for kernels)")
    e.set_defaults(func=cmd_eval)

    v = sub.add_parser("verify", help="run estimate and exact-property suites")
    common(v)
    v.add_argument("--estimate", metavar="ID", action="append", help="estimate or suite id (repeatable)")
    v.set_defaults(func=cmd_verify)

    r = sub.add_parser("report", help="summarize report files or directories")
    r.add_argument("paths", nargs="+")
    r.set_defaults(func=cmd_report)
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
