"""Constraint qualifications at a feasible point: RCQ, MFCQ, AKKT-regularity probe.

RCQ is tested in its conic-hull form: the cone generated by ``+-`` the columns
of the constraint Jacobian, the generators of ``Theta`` and ``g(x_bar)`` must
be all of ``R^p``.  That holds iff every ``+-e_j`` is a nonnegative
combination of the generators, which is ``2p`` small LP feasibility problems.

The regularity probe samples the perturbation map

    K(x, r) = { grad g(x)^* mu : mu in Theta_+, |<mu, g(x)>| <= r }

near ``(x_bar, 0)`` and measures how far the samples land from
``K(x_bar, 0)``.  It can expose a failure of outer semicontinuity; it can
never prove regularity, so a clean run reads "no violation found".
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple

import numpy as np
from scipy.optimize import nnls

from . import cone as cones
from .errors import PreconditionError, UnsupportedError, UsageError
from .lp import LPResult, Status, lp_solve
from .model import Problem, evaluate, is_feasible

FEAS_TOL = 1e-9
MFCQ_BOX = 1e3
MFCQ_SLACK_TOL = 1e-9
PROBE_TOL = 1e-6


@dataclass(frozen=True)
class RCQResult:
    holds: bool
    failing_direction: Optional[np.ndarray] = None


@dataclass(frozen=True)
class MFCQResult:
    holds: bool
    witness_d: Optional[np.ndarray]
    slack: float


@dataclass
class ProbeReport:
    samples_tested: int
    max_distance: float
    worst_sample: Optional[Tuple[np.ndarray, float, np.ndarray, np.ndarray]]
    violation: bool
    per_scale_max: List[float] = field(default_factory=list)
    scales: List[Tuple[float, float]] = field(default_factory=list)

    @property
    def verdict(self) -> str:
        return "violation found" if self.violation else "no violation found"


@dataclass
class CQReport:
    rcq: RCQResult
    mfcq: Optional[MFCQResult] = None
    regularity_probe: Optional[ProbeReport] = None


def _require_polyhedral(problem: Problem, what: str):
    if not cones.is_polyhedral(problem.cone):
        raise UnsupportedError(f"{what} is implemented for orthant/zero cones only, "
                               f"not {cones.describe(problem.cone)}")


def _feasible_point(problem: Problem, x_bar, tol) -> np.ndarray:
    x_bar = np.asarray(x_bar, dtype=float)
    if x_bar.shape != (problem.n,):
        raise UsageError(f"x_bar has shape {x_bar.shape}, expected ({problem.n},)")
    if not is_feasible(problem, x_bar, tol):
        raise PreconditionError(f"x_bar = {x_bar.tolist()} is not feasible within tol {tol:g}")
    return x_bar


def _in_cone(G: np.ndarray, target: np.ndarray) -> bool:
    """Is ``target`` a nonnegative combination of the columns of ``G``?"""
    p, k = G.shape
    if k == 0:
        return bool(np.all(target == 0))
    res = lp_solve(G, target, np.zeros(k), senses=["="] * p)
    return res.status is Status.OPTIMAL


def check_rcq(problem: Problem, x_bar, tol: float = FEAS_TOL) -> RCQResult:
    """Robinson's constraint qualification for polyhedral cones."""
    _require_polyhedral(problem, "RCQ")
    x_bar = _feasible_point(problem, x_bar, tol)
    ev = evaluate(problem, x_bar)
    p = problem.p
    gens = [ev.jac_g[:, i] for i in range(problem.n)]
    gens += [-v for v in gens]
    for j, kind in enumerate(cones.component_kinds(problem.cone)):
        if kind == "orthant":
            e = np.zeros(p)
            e[j] = 1.0
            gens.append(e)
    gens.append(ev.g.copy())
    G = np.column_stack([v for v in gens if np.any(v != 0)]) if any(np.any(v != 0) for v in gens) \
        else np.zeros((p, 0))
    for j in range(p):
        for sign in (1.0, -1.0):
            e = np.zeros(p)
            e[j] = sign
            if not _in_cone(G, e):
                return RCQResult(False, e)
    return RCQResult(True, None)


def check_mfcq(problem: Problem, x_bar, box: float = MFCQ_BOX, tol: float = FEAS_TOL) -> Optional[MFCQResult]:
    """Mangasarian-Fromovitz via ``min t  s.t.  g_j + <grad g_j, d> <= t, |d|_inf <= box``.

    Returns ``None`` when ``int Theta`` is empty (the condition does not apply).
    Second-order cones have an interior but need a conic program, so they are
    rejected as unsupported.
    """
    if cones.interior_direction(problem.cone) is None:
        return None
    if not all(isinstance(leaf, cones.Orthant) for _, leaf in cones.factors(problem.cone)):
        raise UnsupportedError("MFCQ LP is implemented for orthant cones only")
    x_bar = _feasible_point(problem, x_bar, tol)
    ev = evaluate(problem, x_bar)
    n, p = problem.n, problem.p
    # variables (d, t): J d - t <= -g
    A = np.hstack([ev.jac_g, -np.ones((p, 1))])
    c = np.zeros(n + 1)
    c[-1] = 1.0
    bounds = [(-box, box)] * n + [(None, None)]
    res = lp_solve(A, -ev.g, c, senses=["<="] * p, bounds=bounds)
    if res.status is not Status.OPTIMAL:  # pragma: no cover - the box keeps it bounded and feasible
        raise UsageError(f"MFCQ LP ended with status {res.status.value}")
    t = float(res.x[-1])
    holds = t < -MFCQ_SLACK_TOL
    return MFCQResult(holds, res.x[:n].copy() if holds else None, t)


# ---------------------------------------------------------------------------
# perturbation map


def _k0_generators(problem: Problem, x_bar, tol) -> np.ndarray:
    ev = evaluate(problem, x_bar)
    cols = []
    for j, kind in enumerate(cones.component_kinds(problem.cone)):
        row = ev.jac_g[j]
        if kind == "zero":
            cols.extend([row, -row])
        elif ev.g[j] >= -tol:
            cols.append(row)
    if not cols:
        return np.zeros((problem.n, 0))
    return np.column_stack(cols)


def _distance_to_generated(G: np.ndarray, w: np.ndarray) -> float:
    if G.shape[1] == 0:
        return float(np.linalg.norm(w))
    scale = float(np.max(np.abs(w), initial=0.0))
    if scale == 0.0:
        return 0.0
    _, rnorm = nnls(G, w / scale, maxiter=50 * max(G.shape))
    return float(rnorm) * scale


def distance_to_K0(problem: Problem, x_bar, w, tol: float = FEAS_TOL) -> float:
    """Euclidean distance from ``w`` to ``K(x_bar, 0)``.

    With exact complementarity, orthant components that are inactive at
    ``x_bar`` carry a zero multiplier; active ones contribute their gradient
    as a cone generator and zero-cone components contribute ``+-`` their
    gradient.
    """
    _require_polyhedral(problem, "distance_to_K0")
    x_bar = _feasible_point(problem, x_bar, tol)
    w = np.asarray(w, dtype=float)
    if w.shape != (problem.n,):
        raise UsageError(f"w has shape {w.shape}, expected ({problem.n},)")
    return _distance_to_generated(_k0_generators(problem, x_bar, tol), w)


def perturbation_sample(problem: Problem, x, r: float, mu):
    """``(x, r, mu, w)`` with ``mu`` checked to lie in ``K(x, r)``'s index set.

    Raises :class:`UsageError` when ``mu`` is outside the dual cone or
    violates ``|<mu, g(x)>| <= r`` (with a ``1e-12`` relative slack).
    """
    x = np.asarray(x, dtype=float)
    mu = np.asarray(mu, dtype=float)
    ev = evaluate(problem, x)
    if not cones.polar_contains(problem.cone, mu, 1e-12):
        raise UsageError("mu is not in the dual cone")
    c = abs(float(mu @ ev.g))
    if c > r + 1e-12 * max(1.0, r):
        raise UsageError(f"|<mu, g(x)>| = {c:g} exceeds r = {r:g}")
    return x, float(r), mu, ev.jac_g.T @ mu


@dataclass
class ProbeConfig:
    scales: Sequence[Tuple[float, float]] = tuple((10.0 ** -j, 10.0 ** -j) for j in range(1, 7))
    samples_per_scale: int = 50
    mu_magnitudes: Sequence[float] = (1.0, 10.0, 1e3, 1e6)
    seed: int = 42
    tol: float = PROBE_TOL


def _ball_sample(rng, center, radius):
    n = len(center)
    d = rng.normal(size=n)
    norm = np.linalg.norm(d)
    if norm == 0.0:
        return center.copy()
    return center + radius * rng.uniform() ** (1.0 / n) * d / norm


def _dual_direction(rng, kinds):
    v = rng.normal(size=len(kinds))
    for j, kind in enumerate(kinds):
        if kind == "orthant":
            v[j] = abs(v[j])
    norm = np.linalg.norm(v)
    return v / norm if norm > 0 else v


TREND_SLOPE = 0.5


def _decay_slope(deltas, maxima):
    return float(np.polyfit(np.log(deltas), np.log(maxima), 1)[0])


def probe_akkt_regularity(problem: Problem, x_bar, config: Optional[ProbeConfig] = None,
                          tol: float = FEAS_TOL) -> ProbeReport:
    """Sampling probe for outer semicontinuity of ``K`` at ``(x_bar, 0)``.

    For each scale ``(delta, r)``: draw ``x`` uniformly from the ball of radius
    ``delta`` around ``x_bar``; for each magnitude draw ``mu`` in the dual cone,
    shrink it if ``|<mu, g(x)>| > r``; measure ``dist(grad g(x)^* mu, K(x_bar, 0))``.
    A violation is reported when even the smallest per-scale maximum exceeds
    ``config.tol`` and the per-scale maxima do not decrease as the scales shrink.
    Sampling noise makes a literal monotonicity check useless, so "decrease" means
    the least-squares slope of ``log max`` against ``log delta`` is at least
    ``TREND_SLOPE``: an escape that shrinks like ``sqrt(delta)`` or faster vanishes.
    Each scale uses its own child seed, so results do not depend on evaluation order.
    """
    config = config or ProbeConfig()
    _require_polyhedral(problem, "the regularity probe")
    x_bar = _feasible_point(problem, x_bar, tol)
    if config.samples_per_scale < 1 or not config.scales or not config.mu_magnitudes:
        raise UsageError("probe config needs scales, magnitudes and a positive sample count")
    G0 = _k0_generators(problem, x_bar, tol)
    kinds = cones.component_kinds(problem.cone)
    children = np.random.SeedSequence(config.seed).spawn(len(config.scales))

    per_scale, worst, worst_d, count = [], None, -1.0, 0
    for (delta, r), child in zip(config.scales, children):
        rng = np.random.default_rng(child)
        scale_max = 0.0
        for _ in range(config.samples_per_scale):
            x = _ball_sample(rng, x_bar, delta)
            ev = evaluate(problem, x)
            for mag in config.mu_magnitudes:
                mu = mag * _dual_direction(rng, kinds)
                c = abs(float(mu @ ev.g))
                if c > r:
                    mu = mu * (r / c)
                w = ev.jac_g.T @ mu
                d = _distance_to_generated(G0, w)
                count += 1
                scale_max = max(scale_max, d)
                if d > worst_d:
                    worst_d, worst = d, (x, float(r), mu, w)
        per_scale.append(scale_max)

    per_scale_arr = np.array(per_scale)
    violation = False
    if per_scale_arr.min() > config.tol:
        deltas = np.array([d for d, _ in config.scales], dtype=float)
        violation = len(per_scale_arr) < 2 or _decay_slope(deltas, per_scale_arr) < TREND_SLOPE
    return ProbeReport(count, float(max(worst_d, 0.0)), worst, violation,
                       per_scale, list(config.scales))


def cq_report(problem: Problem, x_bar, probe: Optional[ProbeConfig] = None,
              run_probe: bool = False) -> CQReport:
    """RCQ and MFCQ at ``x_bar``, plus the regularity probe when requested."""
    rcq = check_rcq(problem, x_bar)
    mfcq = check_mfcq(problem, x_bar)
    report = CQReport(rcq, mfcq)
    if run_probe:
        report.regularity_probe = probe_akkt_regularity(problem, x_bar, probe)
    return report
