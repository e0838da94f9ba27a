"""AKKT sequences from an exterior quadratic penalty on the weighted-sum objective.

For weights ``lam`` and penalty parameter ``rho`` the subproblem is

    min_x  sum_i lam_i f_i(x) + (rho / 2) dist(g(x), -Theta)^2 .

Moreau's decomposition gives the gradient of the penalty term as
``grad g(x)^* mu`` with ``mu = rho * P_{Theta_+}(g(x))``, so every approximate
stationary point of the subproblem is a pair ``(x^k, mu^k)`` with ``mu^k`` in
the dual cone and stationarity residual equal to the subproblem gradient.

This is a smooth-case generator for AKKT sequences; it is not the nonsmooth
penalty argument used to prove that such sequences exist in general.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import List, Optional

import numpy as np

from . import cone as cones
from .certify import AkktCertificate, simplex_defect
from .errors import DivergenceError, NumericalError, UsageError
from .model import Problem, evaluate

log = logging.getLogger(__name__)

DIVERGENCE_NORM = 1e8


@dataclass
class PenaltyConfig:
    rho0: float = 1.0
    gamma: float = 10.0
    outer_iters: int = 12
    eps0: float = 1e-2
    inner_max_steps: int = 5000
    armijo_c: float = 1e-4
    backtrack: float = 0.5
    initial_step: float = 1.0
    inner_method: str = "newton"

    def __post_init__(self):
        if self.inner_method not in ("newton", "gradient"):
            raise UsageError("inner_method must be 'newton' or 'gradient'")
        if self.rho0 <= 0 or self.eps0 <= 0 or self.initial_step <= 0:
            raise UsageError("rho0, eps0 and initial_step must be positive")
        if self.gamma <= 1:
            raise UsageError("gamma must exceed 1")
        if self.outer_iters < 1 or self.inner_max_steps < 1:
            raise UsageError("outer_iters and inner_max_steps must be positive")
        if not 0 < self.armijo_c < 1 or not 0 < self.backtrack < 1:
            raise UsageError("armijo_c and backtrack must lie in (0, 1)")

    def rho(self, k: int) -> float:
        return self.rho0 * self.gamma ** k

    def eps(self, k: int) -> float:
        return self.eps0 / self.gamma ** k


def _check_lambda(problem: Problem, lam) -> np.ndarray:
    lam = np.asarray(lam, dtype=float)
    if lam.shape != (problem.m,):
        raise UsageError(f"lambda has shape {lam.shape}, expected ({problem.m},)")
    if simplex_defect(lam) > 1e-9:
        raise UsageError(f"lambda {lam.tolist()} is not on the unit simplex")
    return lam


def penalty_value_grad(problem: Problem, lam, rho: float, x, exact: bool = True):
    """``(value, gradient, mu)`` of the penalized weighted-sum objective at ``x``."""
    lam = _check_lambda(problem, lam)
    if rho <= 0:
        raise UsageError("rho must be positive")
    ev = evaluate(problem, x, exact=exact)
    mu_dir = cones.project_polar(problem.cone, ev.g)
    dist2 = float(mu_dir @ mu_dir)
    mu = rho * mu_dir
    value = float(lam @ ev.f) + 0.5 * rho * dist2
    grad = ev.grad_f.T @ lam + ev.jac_g.T @ mu
    return value, grad, mu


class _Compiled:
    """Stacked float evaluation of values, gradients and Hessians for the inner loop."""

    def __init__(self, problem: Problem):
        self.m, self.p, self.n = problem.m, problem.p, problem.n
        polys = problem._all_polys()
        hess = []
        for grads in problem.grad_f + problem.jac_g:
            for d in grads:
                hess.extend(d.gradient())
        exps, coefs, owner = [], [], []
        for k, poly in enumerate(polys + hess):
            for e, c in poly.terms.items():
                exps.append(e)
                coefs.append(c)
                owner.append(k)
        self.exps = np.array(exps, dtype=float).reshape(-1, self.n)
        self.coefs = np.array(coefs)
        self.owner = np.array(owner, dtype=np.intp)
        self.n_first = len(polys)
        self.total = len(polys) + len(hess)

    def __call__(self, z, second=False):
        m, p, n = self.m, self.p, self.n
        # overflow surfaces as inf and is reported by the caller as a NumericalError
        with np.errstate(over="ignore", invalid="ignore"):
            if second:
                mono = np.prod(z ** self.exps, axis=1)
                vals = np.bincount(self.owner, weights=self.coefs * mono, minlength=self.total)
            else:
                keep = self.owner < self.n_first
                mono = np.prod(z ** self.exps[keep], axis=1)
                vals = np.bincount(self.owner[keep], weights=self.coefs[keep] * mono, minlength=self.n_first)
        f, g = vals[:m], vals[m:m + p]
        grads = vals[m + p:self.n_first].reshape(m + p, n)
        hess = vals[self.n_first:].reshape(m + p, n, n) if second else None
        return f, g, grads[:m], grads[m:], hess


def _compiled(problem: Problem) -> _Compiled:
    comp = getattr(problem, "_penalty_compiled", None)
    if comp is None:
        comp = _Compiled(problem)
        problem._penalty_compiled = comp
    return comp


def _polar_jacobian(cone: cones.Cone, y: np.ndarray) -> np.ndarray:
    """A generalized Jacobian of ``y -> P_{Theta_+}(y)``."""
    D = np.zeros((len(y), len(y)))
    for off, leaf in cones.factors(cone):
        sl = slice(off, off + leaf.dim)
        b = y[sl]
        if isinstance(leaf, cones.Orthant):
            D[sl, sl] = np.diag((b > 0).astype(float))
        elif isinstance(leaf, cones.Zero):
            D[sl, sl] = np.eye(leaf.dim)
        else:
            t, x = b[0], b[1:]
            nx = np.linalg.norm(x)
            if nx <= t:
                D[sl, sl] = np.eye(leaf.dim)
            elif nx > -t:
                w = x / nx
                blk = np.empty((leaf.dim, leaf.dim))
                blk[0, 0] = 1.0
                blk[0, 1:] = w
                blk[1:, 0] = w
                blk[1:, 1:] = (1 + t / nx) * np.eye(leaf.dim - 1) - (t / nx) * np.outer(w, w)
                D[sl, sl] = 0.5 * blk
    return D


def _penalty_closure(problem: Problem, lam, rho):
    """Float-only ``z -> (value, gradient[, hessian])`` for the inner loop."""
    comp = _compiled(problem)
    orthant = isinstance(problem.cone, cones.Orthant)

    def vg(z, second=False):
        f, g, gf, jg, hess = comp(z, second)
        mu_dir = np.maximum(g, 0.0) if orthant else cones.project_polar(problem.cone, g)
        mu = rho * mu_dir
        val = float(lam @ f) + 0.5 * rho * float(mu_dir @ mu_dir)
        grad = gf.T @ lam + jg.T @ mu
        if not (math.isfinite(val) and np.all(np.isfinite(grad))):
            raise NumericalError(f"non-finite penalty value or gradient at x = {z.tolist()}", x=z)
        if not second:
            return val, grad
        weights = np.concatenate([lam, mu])
        H = np.tensordot(weights, hess, axes=1)
        H += rho * jg.T @ _polar_jacobian(problem.cone, g) @ jg
        return val, grad, 0.5 * (H + H.T)

    return vg


def _newton_direction(H, grad):
    evals, V = np.linalg.eigh(H)
    floor = 1e-10 * max(1.0, float(np.max(np.abs(evals))))
    evals = np.maximum(np.abs(evals), floor)
    return -(V @ ((V.T @ grad) / evals))


@dataclass
class InnerResult:
    x: np.ndarray
    steps: int
    grad_norm: float
    converged: bool


def inner_minimize(problem: Problem, lam, rho: float, x_start, eps: float,
                   config: Optional[PenaltyConfig] = None, trace: Optional[list] = None) -> InnerResult:
    """Armijo line-search descent on the penalty subproblem.

    ``config.inner_method`` picks the direction:

    ``"gradient"``
        steepest descent; the first trial step is the Barzilai-Borwein step
        capped at ``initial_step`` (``initial_step`` itself on the first
        iteration).
    ``"newton"`` (default)
        the Newton direction of the generalized Hessian of the penalty, with
        eigenvalues replaced by their absolute values (floored), first trial
        step ``initial_step``.

    Steps are accepted when ``value(x + t d) <= value(x) + c t <grad, d>``,
    which for ``d = -grad`` is ``value(x) - c t ||grad||^2``.  Stops at
    ``||grad|| <= eps``, when no representable decrease is left, or after
    ``inner_max_steps`` iterations; the last two come back with
    ``converged=False`` rather than raising.

    If ``trace`` is a list, one ``(x, value, grad, direction, step, x_new,
    value_new)`` tuple is appended per accepted step.
    """
    config = config or PenaltyConfig()
    lam = _check_lambda(problem, lam)
    if rho <= 0:
        raise UsageError("rho must be positive")
    x = np.array(x_start, dtype=float)
    vg = _penalty_closure(problem, lam, rho)
    newton = config.inner_method == "newton"

    if newton:
        val, grad, H = vg(x, True)
    else:
        val, grad = vg(x)
    gnorm = float(np.linalg.norm(grad))
    prev_x = prev_g = None
    steps = 0
    while gnorm > eps and steps < config.inner_max_steps:
        t = config.initial_step
        if newton:
            d = _newton_direction(H, grad)
            slope = float(grad @ d)
            if not slope < 0:
                d, slope = -grad, -gnorm * gnorm
        else:
            d, slope = -grad, -gnorm * gnorm
            if prev_x is not None:
                s, y = x - prev_x, grad - prev_g
                sy = float(s @ y)
                if sy > 0:
                    t = min(float(s @ s) / sy, config.initial_step)
        while True:
            cand = x + t * d
            if np.array_equal(cand, x):
                return InnerResult(x, steps, gnorm, False)
            cval, cgrad = vg(cand)
            if cval <= val + config.armijo_c * t * slope:
                break
            t *= config.backtrack
        if trace is not None:
            trace.append((x, val, grad, d, t, cand, cval))
        prev_x, prev_g = x, grad
        x, val, grad = cand, cval, cgrad
        if newton:
            _, _, H = vg(x, True)
        gnorm = float(np.linalg.norm(grad))
        steps += 1
    return InnerResult(x, steps, gnorm, gnorm <= eps)


@dataclass
class GenerationLog:
    rhos: List[float] = field(default_factory=list)
    inner: List[InnerResult] = field(default_factory=list)


def generate_akkt(problem: Problem, lam=None, x0=None, config: Optional[PenaltyConfig] = None,
                  history: Optional[GenerationLog] = None) -> AkktCertificate:
    """Run the penalty loop and return its iterates as an AKKT certificate.

    Outer iteration ``k`` uses ``rho_k = rho0 * gamma^k`` and inner tolerance
    ``eps_k = eps0 / gamma^k``, warm-started from ``x^{k-1}``.  The recorded
    multiplier is ``mu^k = rho_k * P_{Theta_+}(g(x^k))`` with ``g`` evaluated
    exactly; the certificate limit is the last iterate.
    """
    config = config or PenaltyConfig()
    lam = np.full(problem.m, 1.0 / problem.m) if lam is None else _check_lambda(problem, lam)
    x = np.zeros(problem.n) if x0 is None else np.array(x0, dtype=float)
    if x.shape != (problem.n,) or not np.all(np.isfinite(x)):
        raise UsageError("x0 must be a finite vector with one entry per variable")
    steps = []
    for k in range(config.outer_iters):
        rho = config.rho(k)
        try:
            res = inner_minimize(problem, lam, rho, x, config.eps(k), config)
        except NumericalError as exc:
            raise DivergenceError(f"outer iteration {k}: {exc}", [s[0] for s in steps]) from exc
        x = res.x
        if not res.converged:
            log.info("outer %d (rho=%g): inner solve stopped at ||grad||=%.3g after %d steps",
                     k, rho, res.grad_norm, res.steps)
        if np.linalg.norm(x) > DIVERGENCE_NORM:
            raise DivergenceError(f"outer iteration {k}: ||x|| = {np.linalg.norm(x):.3g} exceeds "
                                  f"{DIVERGENCE_NORM:g}", [s[0] for s in steps] + [x])
        g = evaluate(problem, x).g
        mu = rho * cones.project_polar(problem.cone, g)
        steps.append((x.copy(), mu))
        if history is not None:
            history.rhos.append(rho)
            history.inner.append(res)
    return AkktCertificate(lam, steps[-1][0].copy(), steps)
