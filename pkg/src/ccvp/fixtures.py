"""Built-in problems: the three worked examples and the convex bi-objective fixture."""
from __future__ import annotations

import numpy as np

from .certify import AkktCertificate
from .cone import Orthant, Product, Zero
from .errors import UsageError
from .model import Problem, parse_expression

VARS = ("x1", "x2")


def _polys(exprs):
    return [parse_expression(e, VARS) for e in exprs]


def example1() -> Problem:
    """Bi-objective, three orthant constraints; weakly efficient at (1, 0) without KKT."""
    return Problem(
        VARS,
        _polys(["-3*x1 - 2*x2 + 3", "-x1 - 3*x2 + 1"]),
        _polys(["-x1", "-x2", "(x1 - 1)^3 + x2"]),
        Orthant(3),
        declared_convex=False,
        named_points={"xbar": np.array([1.0, 0.0])},
        name="example1",
    )


def example1_certificate(k_max: int = 1000) -> AkktCertificate:
    """``x^k = (1 + 1/k, 0)``, ``mu^k = (0, 2k^2/3 - 5/2, 2k^2/3)`` for ``k = 2..k_max``."""
    steps = []
    for k in range(2, k_max + 1):
        mu3 = 2 * k * k / 3
        steps.append((np.array([1 + 1 / k, 0.0]), np.array([0.0, mu3 - 5 / 2, mu3])))
    return AkktCertificate(np.array([0.5, 0.5]), np.array([1.0, 0.0]), steps)


def example2() -> Problem:
    """Single objective; KKT holds at the origin while RCQ fails."""
    return Problem(
        VARS,
        _polys(["x1"]),
        _polys(["-x1", "-x2", "x2"]),
        Orthant(3),
        declared_convex=True,
        named_points={"xbar": np.array([0.0, 0.0])},
        name="example2",
    )


def example2_certificate() -> AkktCertificate:
    """Constant sequence at the exact KKT pair ``x = 0``, ``mu = (1, 0, 0)``."""
    return AkktCertificate(np.array([1.0]), np.zeros(2), [(np.zeros(2), np.array([1.0, 0.0, 0.0]))])


def example3() -> Problem:
    """Feasible set ``x1 = 0`` with ``Theta = {0} x R_+``.

    The source example defines only the constraint; the objective ``f = 0``
    is a neutral placeholder so the problem type is complete.  CQ checks
    never look at it.
    """
    return Problem(
        VARS,
        _polys(["0"]),
        _polys(["x1", "x1^2"]),
        Product((Zero(1), Orthant(1))),
        declared_convex=False,
        named_points={"xbar": np.array([0.0, 0.0])},
        name="example3",
    )


def convex_biobjective() -> Problem:
    """``f = (x1^2 + x2^2, (x1 - 2)^2 + x2^2)`` subject to ``x1 + x2 <= 1``."""
    return Problem(
        VARS,
        _polys(["x1^2 + x2^2", "(x1 - 2)^2 + x2^2"]),
        _polys(["x1 + x2 - 1"]),
        Orthant(1),
        declared_convex=True,
        named_points={"x0": np.array([0.0, 0.0]), "xbar": np.array([1.0, 0.0])},
        name="convex",
    )


def run_example(example_id):
    """``(problem, reference certificate or None)`` for example 1, 2 or 3."""
    try:
        example_id = int(example_id)
    except (TypeError, ValueError):
        raise UsageError(f"unknown example {example_id!r}; choose 1, 2 or 3") from None
    if example_id == 1:
        return example1(), example1_certificate()
    if example_id == 2:
        return example2(), example2_certificate()
    if example_id == 3:
        return example3(), None
    raise UsageError(f"unknown example {example_id!r}; choose 1, 2 or 3")
