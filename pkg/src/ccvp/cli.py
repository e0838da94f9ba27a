"""``ccvp`` command-line interface.

Exit codes: 0 when the requested condition holds, 1 when it was checked and
fails, 2 for usage, parse, dimension and other errors (one-line diagnostic on
standard error).
"""
from __future__ import annotations

import argparse
import logging
import os
import re
import sys
from typing import Dict, List, Optional, Sequence

import numpy as np

from . import certify, cq, fixtures, generate
from .errors import CCVPError, UsageError
from .model import Problem, load_problem

DEFAULT_SEED = 42
EXAMPLE_TOL = 1e-3
TABLE_ROWS = 10

log = logging.getLogger("ccvp")


# ---------------------------------------------------------------------------
# argument helpers


def _reals(text: str, what: str) -> np.ndarray:
    parts = [t for t in re.split(r"[,\s]+", text.strip()) if t]
    try:
        vals = np.array([float(t) for t in parts])
    except ValueError:
        raise UsageError(f"{what}: expected comma-separated reals, got {text!r}") from None
    if vals.size == 0 or not np.all(np.isfinite(vals)):
        raise UsageError(f"{what}: expected finite reals, got {text!r}")
    return vals


def _point(problem: Problem, text: Optional[str], what: str = "--point") -> np.ndarray:
    if text is None:
        if "xbar" in problem.named_points:
            return problem.point("xbar")
        raise UsageError(f"{what} is required (the problem names no point 'xbar')")
    if text in problem.named_points:
        return problem.point(text)
    x = _reals(text, what)
    if x.shape != (problem.n,):
        raise UsageError(f"{what} has {x.size} entries, the problem has {problem.n} variables")
    return x


def _vector(text: Optional[str], size: int, what: str) -> Optional[np.ndarray]:
    if text is None:
        return None
    v = _reals(text, what)
    if v.shape != (size,):
        raise UsageError(f"{what} has {v.size} entries, expected {size}")
    return v


def _seed(args) -> int:
    if args.seed is not None:
        return args.seed
    env = os.environ.get("CCVP_SEED")
    if env is None:
        return DEFAULT_SEED
    try:
        return int(env)
    except ValueError:
        raise UsageError(f"CCVP_SEED must be an integer, got {env!r}") from None


def _load(path: str) -> Problem:
    try:
        return load_problem(path)
    except OSError as exc:
        raise UsageError(f"cannot read {path}: {exc.strerror or exc}") from None


# ---------------------------------------------------------------------------
# output


def _fmt_machine(value) -> str:
    if isinstance(value, (bool, np.bool_)):
        return "true" if value else "false"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return "%.17g" % value
    if isinstance(value, np.ndarray) or isinstance(value, (list, tuple)):
        return " ".join(_fmt_machine(v) for v in np.asarray(value).ravel().tolist())
    if value is None:
        return "none"
    return str(value)


def _fmt_human(value) -> str:
    if isinstance(value, (bool, np.bool_)):
        return "true" if value else "false"
    if isinstance(value, (float, np.floating)):
        return "%.6g" % value
    if isinstance(value, np.ndarray) or isinstance(value, (list, tuple)):
        return "[" + ", ".join(_fmt_human(v) for v in np.asarray(value).ravel().tolist()) + "]"
    if value is None:
        return "-"
    return str(value)


class Report:
    """Ordered ``key -> value`` pairs plus optional human-only text blocks."""

    def __init__(self, title: str):
        self.title = title
        self.items: Dict[str, object] = {}
        self.blocks: List[str] = []

    def __setitem__(self, key, value):
        self.items[key] = value

    def render(self, machine: bool) -> str:
        if machine:
            return "".join(f"{k} {_fmt_machine(self.items[k])}\n" for k in sorted(self.items))
        width = max((len(k) for k in self.items), default=0)
        lines = [self.title]
        lines += [f"  {k.ljust(width)}  {_fmt_human(v)}" for k, v in self.items.items()]
        for block in self.blocks:
            lines += ["", block]
        return "\n".join(lines) + "\n"


def _akkt_table(report: certify.AkktReport) -> str:
    cols = ("k", "stationarity", "complementarity", "feasibility", "|mu|", "|x - limit|")
    rows = list(range(len(report.records)))
    if len(rows) > 2 * TABLE_ROWS:
        rows = rows[:TABLE_ROWS] + [None] + rows[-TABLE_ROWS:]
    out = ["  ".join(c.rjust(15) for c in cols)]
    for i in rows:
        if i is None:
            out.append("...".rjust(15))
            continue
        r = report.records[i]
        vals = (r.stationarity, r.complementarity, r.feasibility, report.mu_norms[i], report.distances[i])
        out.append(str(i).rjust(15) + "  " + "  ".join(("%.6e" % v).rjust(15) for v in vals))
    return "\n".join(out)


def _akkt_items(rep: Report, report: certify.AkktReport):
    rep["steps"] = len(report.records)
    rep["lambda"] = report.lam
    rep["limit"] = report.limit
    rep["tol_final"] = report.tol_final
    rep["converged_a0"] = report.converged_a0
    rep["converged_a1"] = report.converged_a1
    rep["converged_a2"] = report.converged_a2
    rep["akkt"] = report.akkt
    rep["bakkt"] = report.bakkt
    rep["max_stationarity"] = float(np.max(report.stationarity))
    rep["last_stationarity"] = float(report.stationarity[-1])
    rep["last_complementarity"] = float(report.complementarity[-1])
    rep["last_feasibility"] = float(report.feasibility[-1])
    rep["tail_mu_norm_sup"] = report.tail_mu_norm_sup


# ---------------------------------------------------------------------------
# commands


def _kkt(problem: Problem, x, args, seed) -> (Report, int):
    lam = _vector(args.lam, problem.m, "--lambda")
    mu = _vector(args.mu, problem.p, "--mu")
    rep = Report(f"KKT check: {problem.name or 'problem'} at {_fmt_human(x)}")
    rep["point"] = x
    rep["tol"] = args.tol
    if (lam is None) != (mu is None):
        raise UsageError("--lambda and --mu must be given together (or neither, to search)")
    if lam is not None:
        rec = certify.kkt_residual(problem, x, lam, mu)
        for k, v in rec.as_dict().items():
            rep[k] = v
        rep["lambda"] = lam
        rep["mu"] = mu
        holds = rec.satisfied(args.tol)
        rep["kkt_holds"] = holds
        return rep, 0 if holds else 1
    res = certify.search_kkt_multipliers(problem, x, tol=args.tol, seed=seed)
    rep["min_residual"] = res.min_residual
    rep["lambda"] = res.lam
    rep["mu"] = res.mu
    rep["stationarity"] = res.record.stationarity
    rep["complementarity"] = res.record.complementarity
    rep["kkt_holds"] = res.kkt_holds
    return rep, 0 if res.kkt_holds else 1


def _verify(problem: Problem, cert: certify.AkktCertificate, tol: float) -> (Report, int):
    report = certify.verify_akkt_certificate(problem, cert, tol_final=tol)
    rep = Report(f"AKKT certificate check: {problem.name or 'problem'}")
    _akkt_items(rep, report)
    rep.blocks.append(_akkt_table(report))
    rep.blocks.extend(f"note: {n}" for n in report.notes)
    return rep, 0 if report.akkt else 1


def _cq(problem: Problem, x, args, seed) -> (Report, int):
    config = cq.ProbeConfig(seed=seed)
    res = cq.cq_report(problem, x, probe=config, run_probe=args.probe_regularity)
    rep = Report(f"Constraint qualifications: {problem.name or 'problem'} at {_fmt_human(x)}")
    rep["point"] = x
    rep["rcq"] = res.rcq.holds
    if res.rcq.failing_direction is not None:
        rep["rcq_failing_direction"] = res.rcq.failing_direction
    if res.mfcq is None:
        rep["mfcq"] = "n/a"
    else:
        rep["mfcq"] = res.mfcq.holds
        rep["mfcq_slack"] = res.mfcq.slack
        if res.mfcq.witness_d is not None:
            rep["mfcq_witness"] = res.mfcq.witness_d
    if res.regularity_probe is None:
        return rep, 0 if res.rcq.holds else 1
    pr = res.regularity_probe
    rep["probe_seed"] = seed
    rep["probe_samples"] = pr.samples_tested
    rep["probe_max_distance"] = pr.max_distance
    rep["probe_per_scale_max"] = np.array(pr.per_scale_max)
    rep["regularity_violation"] = pr.violation
    rep.blocks.append(f"regularity probe: {pr.verdict} (sampling cannot prove regularity)")
    return rep, 1 if pr.violation else 0


def cmd_check_kkt(args) -> (Report, int):
    problem = _load(args.problem)
    return _kkt(problem, _point(problem, args.point), args, _seed(args))


def cmd_verify_akkt(args) -> (Report, int):
    problem = _load(args.problem)
    if args.cert is None:
        raise UsageError("verify-akkt needs --cert PATH")
    try:
        cert = certify.load_certificate(args.cert, problem)
    except OSError as exc:
        raise UsageError(f"cannot read {args.cert}: {exc.strerror or exc}") from None
    return _verify(problem, cert, args.tol)


def cmd_generate(args) -> (Report, int):
    problem = _load(args.problem)
    lam = _vector(args.lam, problem.m, "--lambda")
    x0 = _point(problem, args.point, "--point") if args.point is not None else None
    if x0 is None and "x0" in problem.named_points:
        x0 = problem.point("x0")
    config = generate.PenaltyConfig(rho0=args.rho0, gamma=args.gamma, outer_iters=args.outer)
    cert = generate.generate_akkt(problem, lam, x0, config)
    rep, code = _verify(problem, cert, args.tol)
    rep.title = f"Generated AKKT certificate: {problem.name or 'problem'}"
    rep["rho_final"] = config.rho(config.outer_iters - 1)
    if args.out:
        try:
            with open(args.out, "w", encoding="utf-8") as fh:
                fh.write(cert.to_text())
        except OSError as exc:
            raise UsageError(f"cannot write {args.out}: {exc.strerror or exc}") from None
        rep["certificate"] = args.out
    return rep, code


def cmd_cq(args) -> (Report, int):
    problem = _load(args.problem)
    return _cq(problem, _point(problem, args.point), args, _seed(args))


def cmd_example(args) -> (Report, int):
    problem, cert = fixtures.run_example(args.id)
    actions = [a for a in ("verify_akkt", "check_kkt", "cq") if getattr(args, a)]
    if len(actions) > 1:
        raise UsageError("choose at most one of --verify-akkt, --check-kkt, --cq")
    if not actions:
        if args.probe_regularity:
            raise UsageError("--probe-regularity needs --cq")
        return problem.to_text(), 0
    action = actions[0]
    if action == "verify_akkt":
        if cert is None:
            raise UsageError(f"example {args.id} has no reference certificate")
        tol = args.tol if args.tol is not None else EXAMPLE_TOL
        return _verify(problem, cert, tol)
    if args.tol is None:
        args.tol = certify.DEFAULT_TOL_FINAL
    x = _point(problem, args.point)
    if action == "check_kkt":
        return _kkt(problem, x, args, _seed(args))
    return _cq(problem, x, args, _seed(args))


# ---------------------------------------------------------------------------
# parser


def _positive_float(text):
    try:
        v = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a real number: {text!r}") from None
    if not v > 0:
        raise argparse.ArgumentTypeError(f"must be positive: {text!r}")
    return v


def _positive_int(text):
    try:
        v = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not an integer: {text!r}") from None
    if v < 1:
        raise argparse.ArgumentTypeError(f"must be at least 1: {text!r}")
    return v


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--machine", action="store_true",
                        help="print sorted `key value` lines with 17 significant digits")
    common.add_argument("--seed", type=int, default=None,
                        help=f"random seed (default: $CCVP_SEED or {DEFAULT_SEED})")
    common.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")

    def point_arg(p, help_text="named point or comma-separated reals (default: xbar)"):
        p.add_argument("--point", help=help_text)

    def tol_arg(p, default=certify.DEFAULT_TOL_FINAL):
        p.add_argument("--tol", type=_positive_float, default=default,
                       help="residual tolerance (default: %(default)s)")

    parser = _Parser(prog="ccvp", description="Optimality certificates for cone-constrained "
                                              "vector optimization problems.")
    sub = parser.add_subparsers(dest="command", metavar="COMMAND", parser_class=_Parser)
    sub.required = True

    p = sub.add_parser("check-kkt", parents=[common], help="check or search KKT multipliers at a point")
    p.add_argument("problem", help=".ccvp problem file")
    point_arg(p)
    p.add_argument("--lambda", dest="lam", help="objective weights; with --mu, check instead of search")
    p.add_argument("--mu", help="constraint multiplier")
    tol_arg(p)
    p.set_defaults(func=cmd_check_kkt)

    p = sub.add_parser("verify-akkt", parents=[common], help="verify an AKKT certificate file")
    p.add_argument("problem", help=".ccvp problem file")
    p.add_argument("--cert", help=".cert certificate file")
    tol_arg(p)
    p.set_defaults(func=cmd_verify_akkt)

    p = sub.add_parser("generate", parents=[common], help="generate an AKKT certificate by exterior penalty")
    p.add_argument("problem", help=".ccvp problem file")
    point_arg(p, "starting point: name or reals (default: x0 if named, else the origin)")
    p.add_argument("--lambda", dest="lam", help="objective weights (default: uniform)")
    p.add_argument("--rho0", type=_positive_float, default=1.0, help="initial penalty (default: 1)")
    p.add_argument("--gamma", type=_positive_float, default=10.0, help="penalty growth factor (default: 10)")
    p.add_argument("--outer", type=_positive_int, default=12, help="outer iterations (default: 12)")
    p.add_argument("--out", help="write the certificate here")
    tol_arg(p)
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("cq", parents=[common], help="RCQ, MFCQ and the AKKT-regularity probe")
    p.add_argument("problem", help=".ccvp problem file")
    point_arg(p)
    p.add_argument("--probe-regularity", action="store_true", help="run the sampling probe")
    p.set_defaults(func=cmd_cq)

    p = sub.add_parser("example", parents=[common], help="built-in examples 1, 2 and 3")
    p.add_argument("id", help="1, 2 or 3")
    p.add_argument("--verify-akkt", action="store_true", help="verify the reference certificate")
    p.add_argument("--check-kkt", action="store_true", help="search KKT multipliers at --point")
    p.add_argument("--cq", action="store_true", help="constraint qualifications at --point")
    p.add_argument("--probe-regularity", action="store_true", help="with --cq, run the probe")
    point_arg(p)
    p.add_argument("--lambda", dest="lam", help=argparse.SUPPRESS)
    p.add_argument("--mu", help=argparse.SUPPRESS)
    p.add_argument("--tol", type=_positive_float, default=None,
                   help=f"tolerance (default: {EXAMPLE_TOL:g} for --verify-akkt, "
                        f"{certify.DEFAULT_TOL_FINAL:g} otherwise)")
    p.set_defaults(func=cmd_example)
    return parser


def run(argv: Optional[Sequence[str]] = None, stdout=None, stderr=None) -> int:
    """Parse ``argv``, run the command, print its report and return the exit code."""
    stdout = stdout or sys.stdout
    stderr = stderr or sys.stderr
    parser = build_parser()
    try:
        args = parser.parse_args(list(argv) if argv is not None else None)
        logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                            format="%(levelname)s %(name)s: %(message)s", stream=stderr)
        result, code = args.func(args)
    except SystemExit as exc:  # --help
        return int(exc.code or 0)
    except (CCVPError, ValueError) as exc:
        print(f"ccvp: error: {exc}", file=stderr)
        return 2
    if isinstance(result, Report):
        stdout.write(result.render(args.machine))
    else:
        stdout.write(result)
    return code


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
