"""``repoconvexity`` command line: adjust, price, strip, extrapolate, verify.

Exit codes: 0 success, 1 invalid input, 2 verification failure.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys
import tempfile
from pathlib import Path

from .convexity import ModelParams, RepoSchedule, compute_adjustments, convexity_adjustment
from .curves import build_curve, format_curve_csv, read_curve_csv, read_quotes_csv, strip_bond_curve_from_spot_repos
from .oracle import SimConfig, mc_convexity, mc_repo_rate, quadrature_covariance
from .pricing import RepoCurveView, build_extrapolated_repo_curve, repo_rate

EXIT_OK, EXIT_INVALID, EXIT_VERIFY_FAILED = 0, 1, 2

QUADRATURE_RTOL = 1e-10
MC_SIGMAS = 3.0

REFERENCE_PARAMS = ModelParams(sigma=0.01, epsilon=0.005, theta=0.03, kappa=0.10, rho=-0.5)
REFERENCE_SCHEDULE = RepoSchedule(0.0, 1.0, 1.25, 10.0, 0.25)

DEFAULT_VERIFY_GRID = (
    (REFERENCE_PARAMS, REFERENCE_SCHEDULE),
    (REFERENCE_PARAMS, RepoSchedule(0.0, 0.0, 0.5, 5.0, 0.5)),
    (REFERENCE_PARAMS, RepoSchedule(0.0, 2.0, 3.0, 3.0, 1.0)),
    (ModelParams(0.01, 0.008, 0.0, 0.0, 0.6), RepoSchedule(0.0, 1.0, 2.0, 10.0, 1.0)),
    (ModelParams(0.012, 0.006, 1e-8, 0.5, 0.9), RepoSchedule(0.0, 0.5, 1.5, 30.0, 1.0)),
    (ModelParams(0.008, 0.01, 0.5, 1e-4, -0.7), RepoSchedule(0.0, 3.0, 3.25, 7.0, 0.25)),
    (ModelParams(0.015, 0.01, 0.1, 0.1, 0.8), RepoSchedule(0.0, 1.0, 1.5, 5.0, 0.5)),
)


def _flat_curve(rate: float, horizon: float = 30.0, step: float = 0.25):
    n = round(horizon / step)
    return build_curve(0.0, [(step * i, math.exp(-rate * step * i)) for i in range(1, n + 1)])


def load_params(path: str) -> ModelParams:
    with open(path) as fh:
        raw = json.load(fh)
    if not isinstance(raw, dict):
        raise ValueError(f"{path}: expected a JSON object of model parameters")
    names = {"sigma", "epsilon", "theta", "kappa", "rho"}
    missing, extra = names - raw.keys(), raw.keys() - names
    if missing or extra:
        raise ValueError(f"{path}: missing {sorted(missing)}, unexpected {sorted(extra)}")
    return ModelParams(**{k: float(raw[k]) for k in names})


def _finite_or_none(x: float):
    return x if math.isfinite(x) else None


def _schedule_fields(s: RepoSchedule) -> dict:
    return {
        "fix": s.fix,
        "start": s.start,
        "end": s.end,
        "bond_maturity": _finite_or_none(s.bond_maturity),
        "accrual": s.accrual,
    }


def _schedule_label(s: RepoSchedule) -> str:
    return f"{s.fix:g},{s.start:g},{s.end:g},{s.bond_maturity:g},{s.accrual:g}"


def _table(headers: list[str], rows: list[list[str]]) -> str:
    widths = [max(len(h), *(len(r[i]) for r in rows)) if rows else len(h) for i, h in enumerate(headers)]
    lines = ["  ".join(h.rjust(w) for h, w in zip(headers, widths))]
    lines += ["  ".join(c.rjust(w) for c, w in zip(r, widths)) for r in rows]
    return "\n".join(lines) + "\n"


def _num(x: float) -> str:
    return f"{x:.10e}" if math.isfinite(x) else "inf"


def _require(args, *names):
    for name in names:
        if not getattr(args, name):
            raise ValueError(f"--{name.replace('_', '-')} is required for '{args.command}'")


def _schedules(args) -> list[RepoSchedule]:
    return [RepoSchedule.parse(s) for s in args.schedule or []]


def cmd_adjust(args) -> tuple[str, int]:
    _require(args, "params", "schedule")
    params = load_params(args.params)
    rows = []
    for sched in _schedules(args):
        adj = compute_adjustments(params, sched, args.liquidity_mean, args.liquidity_std)
        rows.append((sched, adj))
    if args.json:
        payload = {
            "command": "adjust",
            "rows": [
                {
                    "schedule": _schedule_fields(s),
                    "liquidity": a.liquidity,
                    "maturity_start": a.maturity_start,
                    "maturity_end": a.maturity_end,
                    "forwardness": a.forwardness,
                    "total": a.total,
                    "residual": a.residual,
                }
                for s, a in rows
            ],
        }
        return _dump(payload), EXIT_OK
    headers = ["schedule", "L", "M_start", "M_end", "F", "C", "|residual|"]
    body = [
        [_schedule_label(s), _num(a.liquidity), _num(a.maturity_start), _num(a.maturity_end),
         _num(a.forwardness), _num(a.total), f"{abs(a.residual):.3e}"]
        for s, a in rows
    ]
    return _table(headers, body), EXIT_OK


def cmd_price(args) -> tuple[str, int]:
    _require(args, "params", "bond_curve", "schedule")
    params = load_params(args.params)
    view = RepoCurveView(read_curve_csv(args.bond_curve), params)
    rows = [(s, repo_rate(view, s)) for s in _schedules(args)]
    if args.json:
        payload = {
            "command": "price",
            "rows": [{"schedule": _schedule_fields(s), "repo_rate": f} for s, f in rows],
        }
        return _dump(payload), EXIT_OK
    return _table(["schedule", "repo_rate"], [[_schedule_label(s), _num(f)] for s, f in rows]), EXIT_OK


def cmd_strip(args) -> tuple[str, int]:
    _require(args, "quotes")
    curve = strip_bond_curve_from_spot_repos(read_quotes_csv(args.quotes))
    return format_curve_csv(curve), EXIT_OK


def cmd_extrapolate(args) -> tuple[str, int]:
    _require(args, "params", "bond_curve", "repo_curve")
    params = load_params(args.params)
    bond = read_curve_csv(args.bond_curve)
    view = RepoCurveView(bond, params, read_curve_csv(args.repo_curve))
    if args.pillars:
        pillars = [float(x) for x in args.pillars.split(",") if x.strip()]
    else:
        pillars = [x for x in bond.times if x > view.horizon]
    return format_curve_csv(build_extrapolated_repo_curve(view, pillars)), EXIT_OK


def verify_rows(grid, config: SimConfig) -> list[dict]:
    """Closed form vs quadrature vs Monte Carlo for the convexity adjustment."""
    rows = []
    for params, sched in grid:
        closed = convexity_adjustment(params, sched)
        quad = quadrature_covariance(params, sched)
        mc = mc_convexity(params, sched, config)
        quad_err = abs(closed - quad) / max(abs(closed), 1e-16)
        rows.append({
            "quantity": "convexity",
            "params": {k: getattr(params, k) for k in ("sigma", "epsilon", "theta", "kappa", "rho")},
            "schedule": _schedule_fields(sched),
            "closed_form": closed,
            "quadrature": quad,
            "quadrature_rel_error": quad_err,
            "mc_estimate": mc.estimate,
            "mc_std_error": _finite_or_none(mc.std_error),
            "pass": bool(quad_err < QUADRATURE_RTOL and abs(mc.estimate - quad) <= MC_SIGMAS * mc.std_error),
        })
    return rows


def verify_repo_rows(grid, bond, derivative, config: SimConfig) -> list[dict]:
    rows = []
    for params, sched in grid:
        closed = repo_rate(RepoCurveView(bond, params), sched)
        mc = mc_repo_rate(bond, derivative, params, sched, config)
        rows.append({
            "quantity": "repo_rate",
            "params": {k: getattr(params, k) for k in ("sigma", "epsilon", "theta", "kappa", "rho")},
            "schedule": _schedule_fields(sched),
            "closed_form": closed,
            "quadrature": None,
            "quadrature_rel_error": None,
            "mc_estimate": mc.estimate,
            "mc_std_error": _finite_or_none(mc.std_error),
            "pass": bool(abs(mc.estimate - closed) <= MC_SIGMAS * mc.std_error),
        })
    return rows


def cmd_verify(args) -> tuple[str, int]:
    config = SimConfig(n_paths=args.paths, seed=args.seed, workers=args.workers)
    if args.params or args.schedule:
        _require(args, "params", "schedule")
        params = load_params(args.params)
        grid = [(params, s) for s in _schedules(args)]
    else:
        grid = list(DEFAULT_VERIFY_GRID)
    bond = read_curve_csv(args.bond_curve) if args.bond_curve else _flat_curve(0.02)
    derivative = read_curve_csv(args.deriv_curve) if args.deriv_curve else _flat_curve(0.022)
    repo_grid = [
        (p, s) for p, s in grid
        if s.fix == bond.valuation_time and s.bond_maturity <= bond.last_time and s.end <= derivative.last_time
    ]
    rows = verify_rows(grid, config) + verify_repo_rows(repo_grid, bond, derivative, config)
    ok = all(r["pass"] for r in rows)
    code = EXIT_OK if ok else EXIT_VERIFY_FAILED
    if args.json:
        return _dump({"command": "verify", "n_paths": args.paths, "seed": args.seed, "pass": ok, "rows": rows}), code
    headers = ["quantity", "schedule", "closed_form", "quadrature", "mc_estimate", "mc_se", "result"]
    body = []
    for r in rows:
        s = r["schedule"]
        label = _schedule_label(RepoSchedule(s["fix"], s["start"], s["end"], math.inf if s["bond_maturity"] is None else s["bond_maturity"], s["accrual"]))
        body.append([
            r["quantity"], label, _num(r["closed_form"]),
            "-" if r["quadrature"] is None else _num(r["quadrature"]),
            _num(r["mc_estimate"]),
            "inf" if r["mc_std_error"] is None else f"{r['mc_std_error']:.3e}",
            "pass" if r["pass"] else "FAIL",
        ])
    text = _table(headers, body) + f"overall: {'pass' if ok else 'FAIL'} ({args.paths} paths, seed {args.seed})\n"
    return text, code


def _dump(payload) -> str:
    return json.dumps(payload, indent=2, sort_keys=True, allow_nan=False) + "\n"


def _write_atomic(path: str, text: str) -> None:
    target = Path(path)
    fd, tmp = tempfile.mkstemp(dir=target.parent or ".", prefix=f".{target.name}.")
    try:
        with os.fdopen(fd, "w") as fh:
            fh.write(text)
        os.replace(tmp, target)
    except BaseException:
        os.unlink(tmp)
        raise


COMMANDS = {
    "adjust": cmd_adjust,
    "price": cmd_price,
    "strip": cmd_strip,
    "extrapolate": cmd_extrapolate,
    "verify": cmd_verify,
}


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        # usage errors are input errors; 2 is reserved for failed verification
        self.print_usage(sys.stderr)
        self.exit(EXIT_INVALID, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="repoconvexity", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--params", help="JSON file with sigma, epsilon, theta, kappa, rho")
        p.add_argument("--bond-curve", help="CSV 'time,df'")
        p.add_argument("--repo-curve", help="observed repo curve, CSV 'time,df'")
        p.add_argument("--schedule", action="append", help="t,s,e,T,delta (repeatable; T may be inf)")
        p.add_argument("--json", action="store_true", help="machine-readable report")
        p.add_argument("--out", help="write output here instead of stdout")
        if name == "adjust":
            p.add_argument("--liquidity-mean", type=float, default=0.0)
            p.add_argument("--liquidity-std", type=float, default=0.0)
        if name == "strip":
            p.add_argument("--quotes", help="CSV 'start,end,rate,accrual'")
        if name == "extrapolate":
            p.add_argument("--pillars", help="comma-separated times beyond the observed horizon")
        if name == "verify":
            p.add_argument("--deriv-curve", help="derivative discount curve for the repo-rate check")
            p.add_argument("--paths", type=int, default=200_000)
            p.add_argument("--seed", type=int, default=42)
            p.add_argument("--workers", type=int, default=1)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        text, code = COMMANDS[args.command](args)
    except (ValueError, OSError, ArithmeticError) as exc:
        print(f"repoconvexity {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    if args.out:
        _write_atomic(args.out, text)
    else:
        sys.stdout.write(text)
    return code


if __name__ == "__main__":
    sys.exit(main())
