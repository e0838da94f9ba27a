import numpy as np
import pytest

from ccvp import cone as cones
from ccvp import fixtures
from ccvp.certify import check_bakkt, kkt_residual, search_kkt_multipliers, verify_akkt_certificate
from ccvp.cq import check_mfcq
from ccvp.errors import DivergenceError, NumericalError, UsageError
from ccvp.generate import GenerationLog, PenaltyConfig, generate_akkt, inner_minimize, penalty_value_grad
from ccvp.model import Problem, evaluate, parse_expression

X = ("x1", "x2")
METHODS = ("newton", "gradient")


def problem_1d(f, g, cone=None):
    return Problem(("x",), [parse_expression(f, ("x",))], [parse_expression(g, ("x",))], cone or cones.Orthant(1))


# --- penalty_value_grad -----------------------------------------------------------

def test_feasible_point_has_inactive_penalty():
    prob = fixtures.convex_biobjective()
    val, grad, mu = penalty_value_grad(prob, [0.5, 0.5], 100.0, [0.0, 0.0])
    ev = evaluate(prob, [0.0, 0.0])
    assert mu.tolist() == [0.0]
    assert val == pytest.approx(0.5 * ev.f.sum())
    np.testing.assert_allclose(grad, ev.grad_f.T @ [0.5, 0.5])


@pytest.mark.parametrize("k", [2, 10, 100])
def test_example1_orthant_multiplier(k):
    rho = 1e4
    x = [1 + 1 / k, 0.0]
    val, grad, mu = penalty_value_grad(fixtures.example1(), [0.5, 0.5], rho, x)
    np.testing.assert_allclose(mu, [0.0, 0.0, rho / k**3], rtol=1e-12)
    ev = evaluate(fixtures.example1(), x)
    np.testing.assert_allclose(grad, ev.grad_f.T @ [0.5, 0.5] + ev.jac_g.T @ mu, rtol=1e-12)
    assert val == pytest.approx(0.5 * ev.f.sum() + 0.5 * rho / k**6, rel=1e-12)


def test_value_uses_distance_to_negative_cone():
    prob = Problem(X, [parse_expression("x1", X)], [parse_expression("x1", X), parse_expression("x2", X)],
                   cones.SecondOrderCone(2))
    rho = 3.0
    x = np.array([0.4, -1.1])
    val, _, mu = penalty_value_grad(prob, [1.0], rho, x)
    d = cones.distance_to_negative_cone(prob.cone, x)
    assert val == pytest.approx(0.4 + 0.5 * rho * d * d, rel=1e-12)
    assert cones.polar_contains(prob.cone, mu, 1e-12)


def test_moreau_orthogonality_at_random_points():
    rng = np.random.default_rng(7)
    for prob in (fixtures.example1(), fixtures.example3(), fixtures.convex_biobjective()):
        lam = np.full(prob.m, 1.0 / prob.m)
        for _ in range(100):
            x = rng.uniform(-2, 2, size=prob.n)
            _, _, mu = penalty_value_grad(prob, lam, 5.0, x)
            g = evaluate(prob, x).g
            neg = cones.project_negative(prob.cone, g)
            assert abs(float(mu @ neg)) <= 1e-10 * max(1.0, np.linalg.norm(mu) * np.linalg.norm(g))
            assert cones.polar_contains(prob.cone, mu, 0.0)


def test_penalty_gradient_matches_finite_differences():
    rng = np.random.default_rng(8)
    prob = fixtures.example1()
    for _ in range(20):
        x = rng.uniform(0, 2, size=2)
        _, grad, _ = penalty_value_grad(prob, [0.3, 0.7], 10.0, x)
        h = 1e-6
        fd = [(penalty_value_grad(prob, [0.3, 0.7], 10.0, x + h * e)[0]
               - penalty_value_grad(prob, [0.3, 0.7], 10.0, x - h * e)[0]) / (2 * h) for e in np.eye(2)]
        np.testing.assert_allclose(grad, fd, rtol=1e-5, atol=1e-5)


def test_penalty_rejects_bad_inputs():
    prob = fixtures.example1()
    with pytest.raises(UsageError):
        penalty_value_grad(prob, [0.6, 0.6], 1.0, [0.0, 0.0])
    with pytest.raises(UsageError):
        penalty_value_grad(prob, [1.0], 1.0, [0.0, 0.0])
    with pytest.raises(UsageError):
        penalty_value_grad(prob, [0.5, 0.5], 0.0, [0.0, 0.0])


# --- inner_minimize ---------------------------------------------------------------

@pytest.mark.parametrize("method", METHODS)
def test_inner_quadratic_without_penalty(method):
    prob = problem_1d("(x - 2)^2", "-1")
    res = inner_minimize(prob, [1.0], 1.0, [0.0], 1e-8, PenaltyConfig(inner_method=method))
    assert res.converged and res.grad_norm <= 1e-8
    assert res.x[0] == pytest.approx(2.0, abs=1e-8)


@pytest.mark.parametrize("method", METHODS)
def test_inner_linear_with_active_penalty(method):
    # x + 5 max(0, -x)^2 is minimized at x = -1/10
    prob = problem_1d("x", "-x")
    res = inner_minimize(prob, [1.0], 10.0, [1.0], 1e-9, PenaltyConfig(inner_method=method))
    assert res.converged
    assert res.x[0] == pytest.approx(-0.1, abs=1e-9)


@pytest.mark.parametrize("method", METHODS)
def test_armijo_and_descent_on_every_accepted_step(method):
    cfg = PenaltyConfig(inner_method=method)
    trace = []
    inner_minimize(fixtures.example1(), [0.5, 0.5], 1e3, [1.2, 0.1], 1e-8, cfg, trace)
    assert trace
    for x, val, grad, d, t, cand, cval in trace:
        np.testing.assert_array_equal(cand, x + t * d)
        assert cval <= val + cfg.armijo_c * t * float(grad @ d)
        assert cval <= val
        if method == "gradient":
            np.testing.assert_array_equal(d, -grad)
            assert cval <= val - cfg.armijo_c * t * float(grad @ grad)
    values = [s[1] for s in trace] + [trace[-1][6]]
    assert all(b <= a for a, b in zip(values, values[1:]))


def test_inner_step_limit_is_reported_not_raised():
    cfg = PenaltyConfig(inner_method="gradient", inner_max_steps=3)
    res = inner_minimize(fixtures.example1(), [0.5, 0.5], 1e4, [1.2, 0.1], 1e-12, cfg)
    assert not res.converged and res.steps == 3


def test_non_finite_penalty_names_the_point():
    prob = problem_1d("x^4", "-1")
    with pytest.raises(NumericalError) as info:
        inner_minimize(prob, [1.0], 1.0, [1e100], 1e-6)
    assert "1e+100" in str(info.value)


def test_config_validation():
    for bad in (dict(gamma=1.0), dict(rho0=0.0), dict(outer_iters=0), dict(armijo_c=1.5),
                dict(backtrack=0.0), dict(inner_method="bfgs")):
        with pytest.raises(UsageError):
            PenaltyConfig(**bad)
    cfg = PenaltyConfig(rho0=2.0, gamma=4.0, eps0=1.0)
    assert cfg.rho(3) == 128.0 and cfg.eps(2) == 1.0 / 16


# --- generate_akkt -----------------------------------------------------------------

def test_unbounded_objective_diverges_with_trajectory():
    prob = problem_1d("x", "-1")
    with pytest.raises(DivergenceError) as info:
        generate_akkt(prob, [1.0], [0.0])
    assert len(info.value.trajectory) >= 1
    assert abs(info.value.trajectory[-1][0]) > 1e8


def test_strictly_feasible_problem_has_zero_multipliers():
    prob = Problem(X, [parse_expression("(x1 - 3)^2 + (x2 + 1)^2", X)], [parse_expression("-1", X)],
                   cones.Orthant(1))
    cert = generate_akkt(prob, [1.0], [0.0, 0.0])
    assert all(mu.tolist() == [0.0] for _, mu in cert.steps)
    np.testing.assert_allclose(cert.limit, [3.0, -1.0], atol=1e-9)


@pytest.mark.parametrize("make", [fixtures.example1, fixtures.convex_biobjective, fixtures.example3])
def test_multipliers_are_dual_and_complementarity_identity_holds(make):
    prob = make()
    x0 = [1.2, 0.1] if prob.name == "example1" else [0.0, 0.5]
    cfg = PenaltyConfig(outer_iters=8)
    log = GenerationLog()
    cert = generate_akkt(prob, None, x0, cfg, history=log)
    assert len(cert.steps) == 8 and log.rhos == [cfg.rho(k) for k in range(8)]
    for (x, mu), rho in zip(cert.steps, log.rhos):
        assert cones.polar_contains(prob.cone, mu, 0.0)
        g = evaluate(prob, x).g
        lhs = float(mu @ g)
        proj = cones.project_polar(prob.cone, g)
        rhs = rho * float(proj @ proj)
        assert lhs >= 0.0
        assert abs(lhs - rhs) <= 1e-10 * max(1.0, abs(rhs))


def test_generation_is_deterministic():
    cfg = PenaltyConfig(outer_iters=6)
    a = generate_akkt(fixtures.example1(), [0.5, 0.5], [1.2, 0.1], cfg)
    b = generate_akkt(fixtures.example1(), [0.5, 0.5], [1.2, 0.1], cfg)
    for (xa, ma), (xb, mb) in zip(a.steps, b.steps):
        assert xa.tobytes() == xb.tobytes() and ma.tobytes() == mb.tobytes()


def test_convex_slater_problem_gives_bakkt_and_kkt():
    prob = fixtures.convex_biobjective()
    assert prob.is_convex() and check_mfcq(prob, [0.0, 0.0]).holds
    cert = generate_akkt(prob, [0.5, 0.5], [0.0, 0.0])
    rep = verify_akkt_certificate(prob, cert)
    assert rep.akkt and check_bakkt(rep)
    np.testing.assert_allclose(cert.limit, [1.0, 0.0], atol=1e-9)
    found = search_kkt_multipliers(prob, cert.limit, tol=1e-5)
    assert found.kkt_holds
    assert kkt_residual(prob, cert.limit, found.lam, found.mu).stationarity <= 1e-5


def test_example1_limit_with_diverging_multipliers():
    cert = generate_akkt(fixtures.example1(), [0.5, 0.5], [1.2, 0.1])
    np.testing.assert_allclose(cert.limit, [1.0, 0.0], atol=1e-2)
    norms = cert.mu_norms
    assert np.all(np.diff(norms[-4:]) > 0) and norms[-1] > 1e4
    assert not check_bakkt(verify_akkt_certificate(fixtures.example1(), cert))


def test_generate_input_validation():
    with pytest.raises(UsageError):
        generate_akkt(fixtures.example1(), [0.2, 0.2], [0.0, 0.0])
    with pytest.raises(UsageError):
        generate_akkt(fixtures.example1(), None, [np.nan, 0.0])
