"""Property checks shared by the unit tests and the acceptance suite.

Each function draws its own samples from a seeded generator, asserts, and
returns a small dict of observed worst cases for reporting.
"""
import math

import numpy as np

from scipy.optimize import nnls

from ccvp import cone as cones
from ccvp.certify import AkktCertificate, kkt_residual, verify_akkt_certificate
from ccvp.cq import check_mfcq, check_rcq, perturbation_sample
from ccvp.lp import lp_solve
from ccvp.model import Polynomial, Problem, evaluate

KINDS = {
    "orthant": cones.Orthant(4),
    "zero": cones.Zero(3),
    "soc": cones.SecondOrderCone(4),
    "product": cones.Product((cones.Orthant(2), cones.SecondOrderCone(3), cones.Zero(1))),
}


def moreau(samples=1000, seed=0):
    rng = np.random.default_rng(seed)
    worst_split = worst_orth = 0.0
    for cone in KINDS.values():
        for _ in range(samples):
            y = rng.normal(scale=rng.choice([1e-3, 1.0, 1e3]), size=cone.dim)
            neg = cones.project_negative(cone, y)
            pol = cones.project_polar(cone, y)
            ny = float(np.linalg.norm(y))
            split = float(np.linalg.norm(y - neg - pol)) / (1 + ny)
            orth = abs(float(neg @ pol)) / (1 + ny * ny)
            assert split <= 1e-10
            assert orth <= 1e-10
            assert cones.polar_contains(cone, pol, 1e-10)
            worst_split, worst_orth = max(worst_split, split), max(worst_orth, orth)
    return {"split": worst_split, "orthogonality": worst_orth}


def random_polynomial(rng, nvars, nterms=4, max_deg=3):
    terms = {}
    for _ in range(nterms):
        e = tuple(int(v) for v in rng.integers(0, max_deg + 1, size=nvars))
        terms[e] = terms.get(e, 0.0) + float(rng.normal())
    return Polynomial(nvars, terms)


def central_difference(poly, x, i, h=1e-5):
    xp, xm = x.copy(), x.copy()
    xp[i] += h
    xm[i] -= h
    return (poly(xp) - poly(xm)) / (2 * h)


def gradient_fd(polys=30, points=20, seed=1):
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(polys):
        n = int(rng.integers(1, 4))
        poly = random_polynomial(rng, n)
        grad = poly.gradient()
        for _ in range(points):
            x = rng.uniform(-2, 2, size=n)
            for i in range(n):
                exact = grad[i](x)
                approx = central_difference(poly, x, i)
                err = abs(exact - approx) / max(1.0, abs(exact))
                assert err <= 1e-6, (poly, x, i, exact, approx)
                worst = max(worst, err)
    return {"relative_error": worst}


def random_orthant_problem(rng, n, p, active=None, opposed=False):
    """Linear-in-g random problem ``g_j = <a_j, x> - b_j`` at ``x_bar = 0`` (feasible).

    With ``opposed`` the last two rows are an active pair ``a, -a``, which pins
    ``<a, x> = 0`` and makes both constraint qualifications fail.
    """
    A = rng.normal(size=(p, n))
    b = np.abs(rng.normal(size=p))
    if active is None:
        active = rng.random(p) < 0.6
    if opposed and p >= 2:
        A[-1] = -A[-2]
        active[-2:] = True
    b[active] = 0.0
    cons = []
    for j in range(p):
        terms = {tuple(int(k == i) for k in range(n)): float(A[j, i]) for i in range(n)}
        terms[(0,) * n] = -float(b[j])
        cons.append(Polynomial(n, terms))
    obj = [Polynomial(n, {(1,) + (0,) * (n - 1): 1.0})]
    return Problem(tuple(f"x{i + 1}" for i in range(n)), obj, cons, cones.Orthant(p))


def rcq_mfcq_agreement(instances=50, seed=2):
    rng = np.random.default_rng(seed)
    agree = holds = 0
    for _ in range(instances):
        n = int(rng.integers(1, 4))
        p = int(rng.integers(1, 5))
        prob = random_orthant_problem(rng, n, p, opposed=bool(rng.random() < 0.4))
        x_bar = np.zeros(n)
        r = check_rcq(prob, x_bar).holds
        m = check_mfcq(prob, x_bar).holds
        assert r == m, (prob.constraints, r, m)
        agree += 1
        holds += r
    return {"instances": agree, "rcq_true": holds}


def k_scaling(samples=200, seed=3):
    rng = np.random.default_rng(seed)
    prob = random_orthant_problem(rng, 3, 4)
    worst = 0.0
    for _ in range(samples):
        x = rng.normal(size=3)
        mu = np.abs(rng.normal(size=4))
        g = evaluate(prob, x).g
        r = abs(float(mu @ g)) * (1 + rng.random())
        alpha = float(rng.uniform(0.1, 10))
        _, _, _, w = perturbation_sample(prob, x, r, mu)
        _, _, _, w_a = perturbation_sample(prob, x, alpha * r, alpha * mu)
        err = float(np.linalg.norm(w_a - alpha * w)) / max(1.0, float(np.linalg.norm(alpha * w)))
        assert err <= 1e-12
        worst = max(worst, err)
    return {"relative_error": worst}


def kkt_embedding(instances=100, seed=4):
    """Constant certificates at exact KKT points pass (A0)-(A2) at 1e-10."""
    rng = np.random.default_rng(seed)
    checked = 0
    for _ in range(instances):
        n = int(rng.integers(1, 4))
        p = int(rng.integers(1, 4))
        m = int(rng.integers(1, 3))
        # g_j = <a_j, x> - b_j with small-integer data so residuals are exact
        A = rng.integers(-3, 4, size=(p, n)).astype(float)
        b = rng.integers(0, 3, size=p).astype(float)
        active = b == 0
        mu = np.where(active, rng.integers(0, 4, size=p), 0).astype(float)
        lam = np.full(m, 1.0 / m) if m != 2 else np.array([0.5, 0.5])
        # pick objective gradients c_i so that sum lam_i c_i = -A^T mu
        C = rng.integers(-3, 4, size=(m, n)).astype(float)
        C[-1] = (-(A.T @ mu) - lam[:-1] @ C[:-1]) / lam[-1]
        names = tuple(f"x{i + 1}" for i in range(n))
        lin = lambda v, c=0.0: Polynomial(n, {**{tuple(int(k == i) for k in range(n)): float(v[i]) for i in range(n)},
                                            (0,) * n: c})
        prob = Problem(names, [lin(C[i]) for i in range(m)], [lin(A[j], -b[j]) for j in range(p)],
                       cones.Orthant(p))
        x_bar = np.zeros(n)
        rec = kkt_residual(prob, x_bar, lam, mu)
        if rec.worst() > 1e-12:
            continue
        cert = AkktCertificate(lam, x_bar, [(x_bar, mu)] * 5)
        rep = verify_akkt_certificate(prob, cert, tol_final=1e-10)
        assert rep.akkt, rec
        checked += 1
    assert checked >= instances // 2
    return {"checked": checked}


def lp_determinism(instances=30, seed=5):
    rng = np.random.default_rng(seed)
    for _ in range(instances):
        rows, cols = int(rng.integers(1, 8)), int(rng.integers(1, 8))
        A = rng.normal(size=(rows, cols))
        x_feas = rng.random(cols)
        b = A @ x_feas + rng.random(rows)
        c = rng.normal(size=cols)
        bounds = [(0.0, 5.0)] * cols
        first = lp_solve(A, b, c, bounds=bounds)
        for _ in range(3):
            again = lp_solve(A.copy(), b.copy(), c.copy(), bounds=bounds)
            assert again.status is first.status
            assert np.array_equal(again.x, first.x)
            assert again.objective == first.objective or (math.isnan(first.objective) and math.isnan(again.objective))
    return {"instances": instances}


def brute_force_kkt_residual(problem, x_bar, step=1e-3, tol=1e-6):
    """min over a lambda_1 grid of the NNLS residual in the active multipliers (m = 2)."""
    ev = evaluate(problem, x_bar)
    active = [j for j in range(problem.p) if ev.g[j] >= -tol]
    B = ev.jac_g[active].T
    best = math.inf
    for l1 in np.arange(0.0, 1.0 + step / 2, step):
        lam = np.array([l1, 1.0 - l1])
        _, r = nnls(B, -(ev.grad_f.T @ lam))
        best = min(best, r)
    return best
