"""Command-line front end.

Exit codes: 0 success, 1 input or domain error, 2 non-convergence.
"""
from __future__ import annotations

import argparse
import csv
import itertools
import os
import sys
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from . import __version__
from .corrbasis import make_basis, read_basis
from .distributions import power
from .errors import NotConverged, QIFError
from .inference import goodness_of_fit, standard_errors, test_linear
from .mcstudy import (REFERENCE_NCP, REFERENCE_POWER, REFERENCE_SIZE,
                      REFERENCE_THEORETICAL_POWER, SimulationDesign, grid_designs, run_study)
from .model import get_family, read_csv
from .solver import LinearConstraint, fit, qif_value

EXIT_OK, EXIT_INPUT, EXIT_NOCONV = 0, 1, 2


@dataclass
class CliConfig:
    command: str
    data_path: Optional[str] = None
    family: str = "gaussian"
    basis: str = "ar1"
    constraint_spec: Optional[str] = None
    init: Optional[np.ndarray] = None
    multistart: bool = False
    output: str = "text"


def fmt(x) -> str:
    """17 significant digits, enough to round-trip a double."""
    return f"{x:.17g}"


def _writer(out):
    return csv.writer(out, lineterminator="\n")


def _basis_for(spec: str, n: int):
    if os.path.exists(spec):
        b = read_basis(spec)
        if b.n != n:
            raise ValueError(f"basis file is for n={b.n}, data has n={n}")
        return b
    return make_basis(spec, n)


def parse_constraint(spec: str, names: Sequence[str]) -> LinearConstraint:
    """``pin=a,b`` (those coefficients are zero) or a file of ``l_1 .. l_q b`` rows."""
    q = len(names)
    if spec.startswith("pin="):
        wanted = [w.strip() for w in spec[4:].split(",") if w.strip()]
        lookup = {name: k for k, name in enumerate(names)}
        missing = [w for w in wanted if w not in lookup]
        if missing:
            raise ValueError(f"unknown covariate(s) {missing}; have {list(names)}")
        return LinearConstraint.pin(q, [lookup[w] for w in wanted])
    rows = []
    with open(spec, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            vals = [float(v) for v in line.replace(",", " ").split()]
            if len(vals) != q + 1:
                raise ValueError(f"{spec}:{lineno}: expected {q + 1} numbers, got {len(vals)}")
            rows.append(vals)
    if not rows:
        raise ValueError(f"{spec}: no constraint rows")
    arr = np.array(rows)
    return LinearConstraint(arr[:, :q].T, arr[:, q])


def _parse_vector(text):
    if text is None:
        return None
    return np.array([float(v) for v in text.split(",")])


def _load(cfg: CliConfig):
    ds = read_csv(cfg.data_path)
    return ds, get_family(cfg.family), _basis_for(cfg.basis, ds.n_times)


def _config(args) -> CliConfig:
    return CliConfig(
        command=args.command,
        data_path=getattr(args, "data", None),
        family=getattr(args, "family", "gaussian"),
        basis=getattr(args, "basis", "ar1"),
        constraint_spec=getattr(args, "constraint", None),
        init=_parse_vector(getattr(args, "init", None)),
        multistart=getattr(args, "multistart", False),
        output=getattr(args, "output", "text"),
    )


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------

def cmd_fit(cfg: CliConfig, out=sys.stdout, grid=None) -> int:
    ds, family, basis = _load(cfg)
    if grid is not None:
        return _dump_grid(family, basis, ds, grid, out)
    res = fit(family, basis, ds, init=cfg.init, multistart=cfg.multistart)
    se = standard_errors(res)
    names = ds.covariate_names
    if cfg.output == "csv":
        w = _writer(out)
        w.writerow(["name", "estimate", "se", "t_ratio"])
        for name, b, s in zip(names, res.beta_hat, se):
            w.writerow([name, fmt(b), fmt(s), fmt(b / s)])
        w.writerow(["Q_min", fmt(res.q_min), "", ""])
        w.writerow(["iterations", res.iterations, "", ""])
        w.writerow(["converged", int(res.converged), "", ""])
    else:
        out.write(f"{'covariate':<16s}{'estimate':>14s}{'se':>14s}{'t-ratio':>14s}\n")
        for name, b, s in zip(names, res.beta_hat, se):
            out.write(f"{name:<16s}{b:>14.5f}{s:>14.5f}{b / s:>14.5f}\n")
        out.write(f"Q_min = {res.q_min:.6f}  iterations = {res.iterations}  "
                  f"converged = {res.converged}\n")
    return EXIT_OK if res.converged else EXIT_NOCONV


def _dump_grid(family, basis, ds, grid, out) -> int:
    lo, hi, steps = grid
    axis = np.linspace(lo, hi, int(steps))
    w = _writer(out)
    w.writerow(list(ds.covariate_names) + ["Q"])
    for point in itertools.product(axis, repeat=ds.n_covariates):
        try:
            qv = qif_value(family, basis, ds, np.array(point), want_gradient=False).q_value
        except QIFError:
            qv = float("nan")
        w.writerow([fmt(v) for v in point] + [fmt(qv)])
    return EXIT_OK


def cmd_test(cfg: CliConfig, out=sys.stdout) -> int:
    ds, family, basis = _load(cfg)
    if not cfg.constraint_spec:
        raise ValueError("test needs --constraint")
    con = parse_constraint(cfg.constraint_spec, ds.covariate_names)
    res = test_linear(family, basis, ds, con, init=cfg.init, multistart=cfg.multistart)
    if cfg.output == "csv":
        w = _writer(out)
        w.writerow(["Q_restricted", "Q_unrestricted", "T_N", "df", "p_value"])
        w.writerow([fmt(res.q_restricted), fmt(res.q_unrestricted), fmt(res.t_n), res.df,
                    fmt(res.p_value)])
    else:
        out.write(f"Q(restricted)   = {res.q_restricted:.3f}\n"
                  f"Q(unrestricted) = {res.q_unrestricted:.3f}\n"
                  f"T_N = {res.t_n:.3f}  df = {res.df}  P = {res.p_value:.3f}\n")
    return EXIT_OK


def cmd_gof(cfg: CliConfig, out=sys.stdout) -> int:
    ds, family, basis = _load(cfg)
    res = fit(family, basis, ds, init=cfg.init, multistart=cfg.multistart)
    if not res.converged:
        out.write("fit did not converge\n")
        return EXIT_NOCONV
    g = goodness_of_fit(res)
    if cfg.output == "csv":
        w = _writer(out)
        w.writerow(["Q", "df", "p_value"])
        w.writerow([fmt(g.q_at_min), g.df, fmt(g.p_value)])
    else:
        out.write(f"Q = {g.q_at_min:.3f}  df = {g.df}  P = {g.p_value:.3f}\n")
    return EXIT_OK


def _design_from_args(args) -> SimulationDesign:
    beta1 = args.beta1 if args.beta1 is not None else {"h0": 0.0, "h1": 0.5}[args.truth]
    return SimulationDesign(family_kind=args.family, n_subjects=args.n_subjects,
                            n_times=args.n_times, rho=args.rho, beta0=args.beta0,
                            beta1=beta1, basis_label=args.basis, n_reps=args.reps,
                            alpha=args.alpha, seed=args.seed)


def cmd_simulate(args, out=sys.stdout) -> int:
    if args.table3 or args.table4:
        return _tables(args, out)
    design = _design_from_args(args)
    report = run_study(design, workers=args.threads)
    if args.output == "csv":
        out.write(report.as_csv_row(design))
    else:
        out.write(report.as_text())
    return EXIT_OK


def _tables(args, out) -> int:
    w = _writer(out)
    truths = ["h0", "h1"] if args.table3 else ["h1"]
    w.writerow(["truth", "family", "rho", "basis", "rejection_rate", "reference_rate",
                "mean_ncp_hat", "reference_ncp", "theoretical_power",
                "reference_theoretical_power", "n_failed_fits"])
    for truth in truths:
        for key, design in grid_designs(truth, n_reps=args.reps, seed=args.seed).items():
            rep = run_study(design, workers=args.threads)
            ref_rate = (REFERENCE_SIZE if truth == "h0" else REFERENCE_POWER)[key]
            ref_ncp = REFERENCE_NCP[key] if truth == "h1" else 0.0
            ref_pow = REFERENCE_THEORETICAL_POWER[key] if truth == "h1" else design.alpha
            w.writerow([truth, key[0], key[1], key[2], fmt(rep.rejection_rate), ref_rate,
                        fmt(rep.mean_ncp_hat), ref_ncp, fmt(rep.theoretical_power), ref_pow,
                        rep.n_failed_fits])
            out.flush()
    return EXIT_OK


def cmd_power(args, out=sys.stdout) -> int:
    value = power(args.df, args.ncp, args.alpha)
    out.write(fmt(value) + "\n" if args.output == "csv" else f"power = {value:.3f}\n")
    return EXIT_OK


# ---------------------------------------------------------------------------
# argument parsing
# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="qif", description="Quadratic inference functions for longitudinal data")
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", required=True)

    def data_opts(sp):
        sp.add_argument("--data", required=True, help="long-format CSV: subject,time,y,x1,...")
        sp.add_argument("--family", default="gaussian", help="gaussian or bernoulli/logit")
        sp.add_argument("--basis", default="ar1",
                        help="identity, exchangeable, ar1, ar2 or a custom basis file")
        sp.add_argument("--init", help="comma-separated starting values")
        sp.add_argument("--multistart", action="store_true")
        sp.add_argument("--output", choices=("text", "csv"), default="text")

    sp = sub.add_parser("fit", help="estimate coefficients")
    data_opts(sp)
    sp.add_argument("--grid", nargs=3, type=float, metavar=("LO", "HI", "STEPS"),
                    help="dump Q over a grid of coefficient values instead of fitting")
    sp = sub.add_parser("test", help="test L^T beta = b")
    data_opts(sp)
    sp.add_argument("--constraint", required=True,
                    help="pin=name1,name2 or a file of 'l_1 ... l_q b' rows")
    sp = sub.add_parser("gof", help="goodness of fit")
    data_opts(sp)

    sp = sub.add_parser("simulate", help="Monte Carlo size/power study")
    sp.add_argument("--family", default="bernoulli")
    sp.add_argument("--basis", default="identity")
    sp.add_argument("--rho", type=float, default=0.2)
    sp.add_argument("--truth", choices=("h0", "h1"), default="h0")
    sp.add_argument("--beta0", type=float, default=0.0)
    sp.add_argument("--beta1", type=float, default=None, help="overrides --truth")
    sp.add_argument("--n-subjects", type=int, default=50)
    sp.add_argument("--n-times", type=int, default=5)
    sp.add_argument("--reps", type=int, default=10_000)
    sp.add_argument("--alpha", type=float, default=0.05)
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--threads", type=int, default=1)
    sp.add_argument("--table3", action="store_true", help="run the full size and power grid")
    sp.add_argument("--table4", action="store_true", help="run the noncentrality grid")
    sp.add_argument("--output", choices=("text", "csv"), default="text")

    sp = sub.add_parser("power", help="asymptotic power of the chi-squared test")
    sp.add_argument("--df", type=int, default=1)
    sp.add_argument("--ncp", type=float, required=True)
    sp.add_argument("--alpha", type=float, default=0.05)
    sp.add_argument("--output", choices=("text", "csv"), default="text")
    return p


def main(argv=None, out=None) -> int:
    out = sys.stdout if out is None else out
    args = build_parser().parse_args(argv)
    try:
        if args.command in ("fit", "test", "gof"):
            cfg = _config(args)
            if args.command == "fit":
                return cmd_fit(cfg, out, grid=args.grid)
            return cmd_test(cfg, out) if args.command == "test" else cmd_gof(cfg, out)
        if args.command == "simulate":
            return cmd_simulate(args, out)
        return cmd_power(args, out)
    except NotConverged as exc:
        print(f"qif: {exc}", file=sys.stderr)
        return EXIT_NOCONV
    except (QIFError, ValueError, OSError) as exc:
        print(f"qif: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
