"""Optimality certificates: KKT residuals, multiplier search, AKKT/BAKKT checks.

All residuals follow one convention.  For weights ``lam`` on the unit simplex
and a multiplier ``mu`` in the dual cone ``Theta_+``::

    stationarity    = || grad g(x)^* mu + sum_i lam_i grad f_i(x_ref) ||
    complementarity = | <mu, g(x)> |
    feasibility     = dist(g(x), -Theta)

``x_ref`` defaults to ``x``; evaluating the objective gradients at the
candidate limit instead of at ``x^k`` is the form used for AKKT sequences.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple

import numpy as np

from . import cone as cones
from .errors import CertificateError, ParseError, PreconditionError, UnsupportedError, UsageError
from .model import Evaluation, Problem, evaluate, is_feasible

DEFAULT_TOL_FINAL = 1e-6
DEFAULT_TAIL_FRACTION = 0.25
DEFAULT_BAKKT_BOUND = 1e6


# ---------------------------------------------------------------------------
# residuals


@dataclass(frozen=True)
class ResidualRecord:
    stationarity: float
    complementarity: float
    feasibility: float
    simplex_defect: float
    polar_defect: float

    def worst(self) -> float:
        return max(self.stationarity, self.complementarity, self.feasibility,
                   self.simplex_defect, self.polar_defect)

    def satisfied(self, tol: float) -> bool:
        return self.worst() <= tol

    def as_dict(self):
        return {
            "stationarity": self.stationarity,
            "complementarity": self.complementarity,
            "feasibility": self.feasibility,
            "simplex_defect": self.simplex_defect,
            "polar_defect": self.polar_defect,
        }


def simplex_defect(lam) -> float:
    lam = np.asarray(lam, dtype=float)
    return abs(math.fsum(lam) - 1.0) + float(np.sum(np.maximum(0.0, -lam)))


def _stationarity_vector(jac_g, mu, grad_f_ref, lam) -> np.ndarray:
    n = jac_g.shape[1]
    return np.array([
        math.fsum(np.concatenate([jac_g[:, i] * mu, grad_f_ref[:, i] * lam]))
        for i in range(n)
    ])


def _check_dims(problem: Problem, x, lam, mu):
    x = np.asarray(x, dtype=float)
    lam = np.asarray(lam, dtype=float)
    mu = np.asarray(mu, dtype=float)
    if x.shape != (problem.n,):
        raise UsageError(f"x has shape {x.shape}, expected ({problem.n},)")
    if lam.shape != (problem.m,):
        raise UsageError(f"lambda has shape {lam.shape}, expected ({problem.m},)")
    if mu.shape != (problem.p,):
        raise UsageError(f"mu has shape {mu.shape}, expected ({problem.p},)")
    return x, lam, mu


def _record(problem, ev: Evaluation, lam, mu, grad_f_ref) -> ResidualRecord:
    stat = _stationarity_vector(ev.jac_g, mu, grad_f_ref, lam)
    return ResidualRecord(
        stationarity=float(np.linalg.norm(stat)),
        complementarity=abs(math.fsum(mu * ev.g)),
        feasibility=cones.distance_to_negative_cone(problem.cone, ev.g),
        simplex_defect=simplex_defect(lam),
        polar_defect=float(np.linalg.norm(mu - cones.project_polar(problem.cone, mu))),
    )


def kkt_residual(problem: Problem, x, lam, mu, x_ref=None) -> ResidualRecord:
    """Residuals of the KKT system at ``x`` for the multiplier ``(lam, mu)``."""
    x, lam, mu = _check_dims(problem, x, lam, mu)
    ev = evaluate(problem, x)
    if x_ref is None:
        grad_ref = ev.grad_f
    else:
        grad_ref = evaluate(problem, np.asarray(x_ref, dtype=float)).grad_f
    return _record(problem, ev, lam, mu, grad_ref)


# ---------------------------------------------------------------------------
# multiplier search


@dataclass(frozen=True)
class KKTSearchResult:
    lam: np.ndarray
    mu: np.ndarray
    min_residual: float
    kkt_holds: bool
    record: ResidualRecord


def project_simplex(v) -> np.ndarray:
    """Euclidean projection onto ``{lam >= 0, sum lam = 1}`` (sort-based)."""
    v = np.asarray(v, dtype=float)
    u = np.sort(v)[::-1]
    css = np.cumsum(u) - 1.0
    idx = np.arange(1, len(v) + 1)
    rho = np.nonzero(u - css / idx > 0)[0][-1]
    theta = css[rho] / (rho + 1.0)
    return np.maximum(v - theta, 0.0)


def _admissible(problem: Problem, g, tol):
    """Multiplier components allowed to be nonzero at a feasible point.

    Returns ``(indices, signed)``: orthant components with ``g_j >= -tol`` are
    sign-constrained, zero-cone components are free.
    """
    idx, signed = [], []
    for j, kind in enumerate(cones.component_kinds(problem.cone)):
        if kind == "zero":
            idx.append(j)
            signed.append(False)
        elif g[j] >= -tol:
            idx.append(j)
            signed.append(True)
    return np.array(idx, dtype=int), np.array(signed, dtype=bool)


class _SearchQP:
    """``min 1/2 ||A lam + B nu||^2`` over the simplex times a mixed orthant."""

    def __init__(self, A, B, signed):
        self.A, self.B, self.signed = A, B, signed
        self.m = A.shape[1]
        self.M = np.hstack([A, B])
        self.L = max(float(np.linalg.norm(self.M, 2)) ** 2, 1e-300)

    def project(self, z):
        out = z.copy()
        out[:self.m] = project_simplex(z[:self.m])
        nu = out[self.m:]
        nu[self.signed] = np.maximum(nu[self.signed], 0.0)
        return out

    def residual(self, z):
        return float(np.linalg.norm(self.M @ z))

    def fista(self, z0, max_iter=4000):
        z = self.project(z0)
        y, t = z.copy(), 1.0
        MtM = self.M.T @ self.M
        step = 1.0 / self.L
        for _ in range(max_iter):
            z_new = self.project(y - step * (MtM @ y))
            t_new = 0.5 * (1.0 + math.sqrt(1.0 + 4.0 * t * t))
            y = z_new + ((t - 1.0) / t_new) * (z_new - z)
            if np.linalg.norm(z_new - z) <= 1e-15 * (1.0 + np.linalg.norm(z)):
                z = z_new
                break
            z, t = z_new, t_new
        return z

    def polish(self, z, thresh=1e-9):
        """Solve the equality-constrained least squares on the detected support."""
        m = self.m
        lam_sup = np.nonzero(z[:m] > thresh)[0]
        nu = z[m:]
        nu_sup = np.nonzero(~self.signed | (nu > thresh))[0]
        if len(lam_sup) == 0:
            return z
        A_s = self.A[:, lam_sup]
        B_s = self.B[:, nu_sup]
        # lam_s[0] = 1 - sum(rest)
        c = A_s[:, 0]
        D = np.hstack([A_s[:, 1:] - c[:, None], B_s])
        if D.shape[1] == 0:
            u = np.zeros(0)
        else:
            u = np.linalg.lstsq(D, -c, rcond=None)[0]
        k = len(lam_sup) - 1
        lam_rest = u[:k]
        cand = np.zeros_like(z)
        cand[lam_sup[1:]] = lam_rest
        cand[lam_sup[0]] = 1.0 - math.fsum(lam_rest)
        cand[m + nu_sup] = u[k:]
        if np.any(cand[:m] < -1e-12) or np.any(cand[m:][self.signed] < -1e-12):
            return z
        cand = self.project(cand)
        return cand if self.residual(cand) <= self.residual(z) else z


def search_kkt_multipliers(problem: Problem, x_bar, tol: float = DEFAULT_TOL_FINAL,
                           restarts: int = 10, seed: int = 0) -> KKTSearchResult:
    """Best KKT multiplier at ``x_bar`` for polyhedral cones.

    Minimizes the stationarity residual over ``lam`` in the simplex and ``mu``
    in ``Theta_+``, with complementarity imposed structurally (multipliers of
    inactive orthant components are fixed at zero).  Projected gradient with
    ``restarts`` random starts plus one zero start, each followed by an exact
    least-squares polish on the detected support.  Ties keep the smallest
    ``(residual, ||mu||)``.
    """
    if not cones.is_polyhedral(problem.cone):
        raise UnsupportedError("multiplier search needs an orthant/zero cone; "
                               "check user-supplied multipliers with kkt_residual instead")
    x_bar = np.asarray(x_bar, dtype=float)
    if x_bar.shape != (problem.n,):
        raise UsageError(f"x_bar has shape {x_bar.shape}, expected ({problem.n},)")
    if not is_feasible(problem, x_bar, tol):
        raise PreconditionError(f"x_bar = {x_bar.tolist()} is not feasible within tol {tol:g}")
    ev = evaluate(problem, x_bar)
    idx, signed = _admissible(problem, ev.g, tol)
    A = ev.grad_f.T
    B = ev.jac_g[idx].T if len(idx) else np.zeros((problem.n, 0))
    qp = _SearchQP(A, B, signed)
    rng = np.random.default_rng(seed)

    starts = [np.concatenate([np.full(problem.m, 1.0 / problem.m), np.zeros(len(idx))])]
    scale = max(1.0, float(np.linalg.norm(A)))
    for _ in range(max(restarts, 10)):
        lam0 = rng.dirichlet(np.ones(problem.m))
        nu0 = rng.normal(scale=scale, size=len(idx))
        starts.append(np.concatenate([lam0, nu0]))

    best = None
    for z0 in starts:
        z = qp.polish(qp.fista(z0))
        lam = z[:problem.m]
        mu = np.zeros(problem.p)
        mu[idx] = z[problem.m:]
        rec = _record(problem, ev, lam, mu, ev.grad_f)
        key = (max(rec.stationarity, rec.complementarity), float(np.linalg.norm(mu)))
        if best is None or key < best[0]:
            best = (key, lam, mu, rec)
    (resid, _), lam, mu, rec = best
    return KKTSearchResult(lam, mu, resid, resid <= tol, rec)


# ---------------------------------------------------------------------------
# AKKT certificates


@dataclass
class AkktCertificate:
    """Weights ``lam``, candidate limit, and the pairs ``(x^k, mu^k)``."""

    lam: np.ndarray
    limit: np.ndarray
    steps: List[Tuple[np.ndarray, np.ndarray]]

    def __post_init__(self):
        self.lam = np.asarray(self.lam, dtype=float)
        self.limit = np.asarray(self.limit, dtype=float)
        self.steps = [(np.asarray(x, dtype=float), np.asarray(mu, dtype=float)) for x, mu in self.steps]
        if not self.steps:
            raise CertificateError("certificate has no steps")
        if simplex_defect(self.lam) > 1e-12:
            raise CertificateError(f"lambda {self.lam.tolist()} is not on the unit simplex")

    @property
    def mu_norms(self) -> np.ndarray:
        return np.array([np.linalg.norm(mu) for _, mu in self.steps])

    def to_text(self) -> str:
        return format_certificate(self)


@dataclass
class AkktReport:
    records: List[ResidualRecord]
    variant_stationarity: np.ndarray
    distances: np.ndarray
    mu_norms: np.ndarray
    converged_a0: bool
    converged_a1: bool
    converged_a2: bool
    tail_mu_norm_sup: float
    bakkt: bool
    limit: np.ndarray
    lam: np.ndarray
    tol_final: float
    tail_fraction: float
    bakkt_bound: float = DEFAULT_BAKKT_BOUND
    notes: List[str] = field(default_factory=list)

    @property
    def akkt(self) -> bool:
        return self.converged_a0 and self.converged_a1 and self.converged_a2

    @property
    def stationarity(self) -> np.ndarray:
        return np.array([r.stationarity for r in self.records])

    @property
    def complementarity(self) -> np.ndarray:
        return np.array([r.complementarity for r in self.records])

    @property
    def feasibility(self) -> np.ndarray:
        return np.array([r.feasibility for r in self.records])


def _tail_length(n_steps, tail_fraction):
    if not 0.0 < tail_fraction <= 1.0:
        raise UsageError(f"tail_fraction must lie in (0, 1], got {tail_fraction}")
    return max(1, int(math.ceil(tail_fraction * n_steps)))


def verify_akkt_certificate(problem: Problem, cert: AkktCertificate,
                            tol_final: float = DEFAULT_TOL_FINAL,
                            tail_fraction: float = DEFAULT_TAIL_FRACTION,
                            bakkt_bound: float = DEFAULT_BAKKT_BOUND) -> AkktReport:
    """Check (A0)-(A2) on a finite sequence.

    A finite sequence cannot prove a limit, so convergence is judged as:

    * A0: ``||x^k - limit|| <= tol_final`` at the last step and the distance
      does not grow over the tail (growth below ``tol_final`` is ignored);
    * A1: stationarity, with objective gradients at ``limit``, ``<= tol_final``
      at the last step;
    * A2: complementarity ``<= tol_final`` at the last step.

    Stationarity with objective gradients at ``x^k`` is reported alongside as
    ``variant_stationarity``.
    """
    if cert.lam.shape != (problem.m,) or cert.limit.shape != (problem.n,):
        raise UsageError("certificate dimensions do not match the problem")
    for k, (x, mu) in enumerate(cert.steps):
        if x.shape != (problem.n,) or mu.shape != (problem.p,):
            raise UsageError(f"step {k}: dimensions do not match the problem")
        if not np.all(np.isfinite(x)):
            raise CertificateError(f"step {k}: x is not finite", step=k)
        if not cones.polar_contains(problem.cone, mu, 1e-9):
            raise CertificateError(f"step {k}: mu = {mu.tolist()} is not in the dual cone", step=k)

    grad_ref = evaluate(problem, cert.limit).grad_f
    records, variant, dists = [], [], []
    for x, mu in cert.steps:
        ev = evaluate(problem, x)
        records.append(_record(problem, ev, cert.lam, mu, grad_ref))
        variant.append(float(np.linalg.norm(_stationarity_vector(ev.jac_g, mu, ev.grad_f, cert.lam))))
        dists.append(float(np.linalg.norm(x - cert.limit)))
    dists = np.array(dists)
    mu_norms = cert.mu_norms
    tail = _tail_length(len(cert.steps), tail_fraction)

    tail_d = dists[-tail:]
    a0 = bool(dists[-1] <= tol_final and np.all(np.diff(tail_d) <= tol_final))
    a1 = records[-1].stationarity <= tol_final
    a2 = records[-1].complementarity <= tol_final
    report = AkktReport(
        records=records,
        variant_stationarity=np.array(variant),
        distances=dists,
        mu_norms=mu_norms,
        converged_a0=a0,
        converged_a1=bool(a1),
        converged_a2=bool(a2),
        tail_mu_norm_sup=float(np.max(mu_norms[-tail:])),
        bakkt=False,
        limit=cert.limit.copy(),
        lam=cert.lam.copy(),
        tol_final=tol_final,
        tail_fraction=tail_fraction,
        bakkt_bound=bakkt_bound,
        notes=["convergence judged from the last step and tail monotonicity; "
               "no decay rate is implied"],
    )
    report.bakkt = check_bakkt(report, bakkt_bound)
    return report


def _bounded(mu_norms, tail, bound) -> bool:
    if not np.all(np.isfinite(mu_norms)):
        return False
    if float(np.max(mu_norms[-tail:])) > bound:
        return False
    q = max(1, int(math.ceil(len(mu_norms) / 4)))
    return bool(np.max(mu_norms[-q:]) <= 2.0 * np.max(mu_norms[:q]))


def check_bakkt(report_or_cert, bakkt_bound: float = DEFAULT_BAKKT_BOUND) -> bool:
    """Numerical judgment that the multiplier sequence stays bounded.

    Requires the tail supremum of ``||mu^k||`` to be at most ``bakkt_bound``
    and the last quarter of the sequence not to exceed twice the first
    quarter's supremum.  Given an :class:`AkktReport`, (A0)-(A2) must also
    have passed; a bare certificate is judged on boundedness alone.
    """
    if isinstance(report_or_cert, AkktReport):
        rep = report_or_cert
        tail = _tail_length(len(rep.mu_norms), rep.tail_fraction)
        return rep.akkt and _bounded(rep.mu_norms, tail, bakkt_bound)
    if isinstance(report_or_cert, AkktCertificate):
        norms = report_or_cert.mu_norms
        return _bounded(norms, _tail_length(len(norms), DEFAULT_TAIL_FRACTION), bakkt_bound)
    raise UsageError("check_bakkt expects an AkktReport or AkktCertificate")


# ---------------------------------------------------------------------------
# scalarization and weak efficiency


def max_scalarization(problem: Problem, x_bar, x) -> float:
    """``psi(x) = max_i (f_i(x) - f_i(x_bar))``."""
    x_bar = np.asarray(x_bar, dtype=float)
    x = np.asarray(x, dtype=float)
    if x.shape != (problem.n,) or x_bar.shape != (problem.n,):
        raise UsageError("point dimension does not match the problem")
    return max(f(x) - f(x_bar) for f in problem.objectives)


def weak_efficiency_oracle(problem: Problem, x_bar, box, steps_per_dim: int, tol: float = 1e-6,
                           feas_tol: float = 0.0):
    """Grid search for a feasible point that strictly improves every objective.

    ``box`` is a sequence of ``(lo, hi)`` pairs, one per variable, and each
    axis is sampled at ``steps_per_dim`` equally spaced values.

    Returns ``(True, None)`` when no grid point ``x`` with
    ``dist(g(x), -Theta) <= feas_tol`` has ``psi(x) < -tol``; otherwise
    ``(False, x)`` where ``x`` minimizes ``psi`` over such points.  This is
    grid evidence, not a proof.
    """
    n = problem.n
    if n > 4:
        raise UnsupportedError(f"grid oracle supports n <= 4, problem has n = {n}")
    if steps_per_dim < 3:
        raise UsageError("steps_per_dim must be at least 3")
    bounds = np.asarray(box, dtype=float)
    if bounds.shape != (n, 2) or np.any(bounds[:, 0] > bounds[:, 1]):
        raise UsageError("box must give one (lo, hi) pair per variable")
    lo, hi = bounds[:, 0], bounds[:, 1]
    x_bar = np.asarray(x_bar, dtype=float)
    if np.any(x_bar < lo) or np.any(x_bar > hi):
        raise UsageError("x_bar lies outside the box")

    axes = [np.linspace(lo[i], hi[i], steps_per_dim) for i in range(n)]
    X = np.stack([a.ravel() for a in np.meshgrid(*axes, indexing="ij")], axis=1)
    G = np.stack([poly.eval_array(X) for poly in problem.constraints], axis=1)
    feasible = distance_rows(problem.cone, G) <= feas_tol
    if not np.any(feasible):
        return True, None
    Xf = X[feasible]
    psi = np.max(np.stack([f.eval_array(Xf) - f(x_bar) for f in problem.objectives], axis=1), axis=1)
    worst = int(np.argmin(psi))
    if psi[worst] < -tol:
        return False, Xf[worst]
    return True, None


def distance_rows(cone: cones.Cone, Y) -> np.ndarray:
    """Row-wise ``dist(y, -Theta)`` for a matrix of points."""
    sq = np.zeros(Y.shape[0])
    for off, leaf in cones.factors(cone):
        B = Y[:, off:off + leaf.dim]
        if isinstance(leaf, cones.Orthant):
            sq += np.sum(np.maximum(B, 0.0) ** 2, axis=1)
        elif isinstance(leaf, cones.Zero):
            sq += np.sum(B ** 2, axis=1)
        else:
            # distance to -K equals the norm of the projection onto K (self-dual)
            t, nx = B[:, 0], np.linalg.norm(B[:, 1:], axis=1)
            inside = nx <= t
            apex = nx <= -t
            part = np.where(inside, t * t + nx * nx, np.where(apex, 0.0, 0.5 * (t + nx) ** 2))
            sq += part
    return np.sqrt(sq)


class Claim(enum.Enum):
    GLOBAL_WEAK_EFFICIENT = "GlobalWeakEfficient"
    NO_CLAIM = "NoClaim"


def convex_global_claim(problem: Problem, report: AkktReport, feas_tol: float = 0.0) -> Claim:
    """Global weak efficiency of ``report.limit`` for convex problems with a verified AKKT sequence."""
    if not problem.is_convex():
        return Claim.NO_CLAIM
    if not report.akkt:
        return Claim.NO_CLAIM
    if not is_feasible(problem, report.limit, feas_tol):
        return Claim.NO_CLAIM
    return Claim.GLOBAL_WEAK_EFFICIENT


# ---------------------------------------------------------------------------
# certificate file format


def _reals(tokens, lineno, what):
    try:
        return np.array([float(t) for t in tokens])
    except ValueError:
        raise ParseError(f"{what}: expected real numbers", lineno, 1) from None


def parse_certificate(text: str, problem: Optional[Problem] = None) -> AkktCertificate:
    """Read ``lambda`` / ``limit`` / ``step x... ; mu...`` lines."""
    lam = limit = None
    steps = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        keyword, _, rest = line.partition(" ")
        if keyword == "lambda":
            lam = _reals(rest.split(), lineno, "lambda")
        elif keyword == "limit":
            limit = _reals(rest.split(), lineno, "limit")
        elif keyword == "step":
            if rest.count(";") != 1:
                raise ParseError("step line needs exactly one ';' between x and mu", lineno, 1)
            xs, mus = rest.split(";")
            steps.append((_reals(xs.split(), lineno, "step x"), _reals(mus.split(), lineno, "step mu")))
        else:
            raise ParseError(f"unknown keyword {keyword!r}", lineno, 1)
    if lam is None or limit is None:
        raise ParseError("certificate needs `lambda` and `limit` lines", 1, 1)
    if not steps:
        raise ParseError("certificate has no `step` lines", 1, 1)
    if problem is not None:
        if len(lam) != problem.m or len(limit) != problem.n:
            raise ParseError("lambda/limit dimensions do not match the problem", 1, 1)
        for k, (x, mu) in enumerate(steps):
            if len(x) != problem.n or len(mu) != problem.p:
                raise ParseError(f"step {k}: dimensions do not match the problem", 1, 1)
    return AkktCertificate(lam, limit, steps)


def load_certificate(path, problem: Optional[Problem] = None) -> AkktCertificate:
    with open(path, encoding="utf-8") as fh:
        return parse_certificate(fh.read(), problem)


def format_certificate(cert: AkktCertificate) -> str:
    fmt = lambda v: " ".join(repr(float(a)) for a in v)  # noqa: E731
    lines = [f"lambda {fmt(cert.lam)}", f"limit {fmt(cert.limit)}"]
    lines += [f"step {fmt(x)} ; {fmt(mu)}" for x, mu in cert.steps]
    return "\n".join(lines) + "\n"
