"""Closed convex cones in R^p and their projections.

Four kinds are supported: the nonnegative orthant, the zero cone ``{0}``, the
second-order cone ``{(t, x) : ||x|| <= t}`` (axis coordinate first) and finite
products of those, flattened left to right into one coordinate block.

The dual cone used throughout is

    Theta_+ = {mu : <mu, theta> >= 0 for all theta in Theta},

so that by Moreau's decomposition every ``y`` splits orthogonally as
``y = P_{-Theta}(y) + P_{Theta_+}(y)``.

Every cone here lives in a finite-dimensional space and is therefore dually
compact; no runtime check is needed for that property (see ``DUALLY_COMPACT``).
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence, Tuple

import numpy as np

from .errors import UsageError

__all__ = [
    "Cone",
    "Orthant",
    "Zero",
    "SecondOrderCone",
    "Product",
    "DUALLY_COMPACT",
    "product",
    "project_cone",
    "project_negative",
    "project_polar",
    "polar_contains",
    "cone_contains",
    "distance_to_negative_cone",
    "interior_direction",
    "is_polyhedral",
    "factors",
    "component_kinds",
    "describe",
]

# Finite dimension implies dual compactness for every supported cone.
DUALLY_COMPACT = True


class Cone:
    """Base class; concrete cones are frozen dataclasses below."""

    dim: int

    @property
    def kind(self) -> str:
        raise NotImplementedError


@dataclass(frozen=True)
class Orthant(Cone):
    dim: int

    def __post_init__(self):
        _check_dim(self.dim, 1, "orthant")

    @property
    def kind(self):
        return "orthant"


@dataclass(frozen=True)
class Zero(Cone):
    dim: int

    def __post_init__(self):
        _check_dim(self.dim, 1, "zero")

    @property
    def kind(self):
        return "zero"


@dataclass(frozen=True)
class SecondOrderCone(Cone):
    dim: int

    def __post_init__(self):
        _check_dim(self.dim, 2, "soc")

    @property
    def kind(self):
        return "soc"


@dataclass(frozen=True)
class Product(Cone):
    parts: Tuple[Cone, ...]

    def __post_init__(self):
        if not self.parts:
            raise UsageError("product cone needs at least one factor")
        object.__setattr__(self, "parts", tuple(self.parts))
        for part in self.parts:
            if not isinstance(part, Cone):
                raise UsageError(f"product factor {part!r} is not a cone")

    @property
    def dim(self):
        return sum(part.dim for part in self.parts)

    @property
    def kind(self):
        return "product"


def _check_dim(dim, minimum, name):
    if not isinstance(dim, (int, np.integer)) or isinstance(dim, bool) or dim < minimum:
        raise UsageError(f"{name} cone dimension must be an integer >= {minimum}, got {dim!r}")


def product(parts: Sequence[Cone]) -> Cone:
    """Stack cones left to right; a single factor is returned unchanged."""
    parts = list(parts)
    if len(parts) == 1:
        return parts[0]
    return Product(tuple(parts))


def factors(cone: Cone):
    """Yield ``(offset, leaf_cone)`` pairs, flattening nested products."""
    offset = 0
    stack = [cone]
    out = []
    while stack:
        c = stack.pop(0)
        if isinstance(c, Product):
            stack = list(c.parts) + stack
            continue
        out.append((offset, c))
        offset += c.dim
    return out


def _vec(cone: Cone, y) -> np.ndarray:
    y = np.asarray(y, dtype=float)
    if y.ndim != 1 or y.shape[0] != cone.dim:
        raise UsageError(f"vector of length {y.shape[0] if y.ndim == 1 else y.shape} "
                         f"does not match cone dimension {cone.dim}")
    return y


def _soc_project(y):
    t, x = y[0], y[1:]
    nx = np.linalg.norm(x)
    if nx <= t:
        return y.copy()
    if nx <= -t:
        # covers the apex boundary nx == -t, where the closed form degenerates
        return np.zeros_like(y)
    scale = 0.5 * (t + nx)
    out = np.empty_like(y)
    out[0] = scale
    out[1:] = (scale / nx) * x
    return out


def project_cone(cone: Cone, y) -> np.ndarray:
    """Euclidean projection of ``y`` onto ``cone``."""
    y = _vec(cone, y)
    out = np.empty_like(y)
    for off, leaf in factors(cone):
        block = y[off:off + leaf.dim]
        if isinstance(leaf, Orthant):
            out[off:off + leaf.dim] = np.maximum(block, 0.0)
        elif isinstance(leaf, Zero):
            out[off:off + leaf.dim] = 0.0
        elif isinstance(leaf, SecondOrderCone):
            out[off:off + leaf.dim] = _soc_project(block)
        else:  # pragma: no cover - factors() only yields leaves
            raise UsageError(f"unknown cone {leaf!r}")
    return out


def project_negative(cone: Cone, y) -> np.ndarray:
    """Projection onto ``-cone``: ``P_{-K}(y) = -P_K(-y)``."""
    y = _vec(cone, y)
    return -project_cone(cone, -y)


def project_polar(cone: Cone, y) -> np.ndarray:
    """Projection onto the dual cone ``Theta_+`` via Moreau: ``y - P_{-Theta}(y)``."""
    y = _vec(cone, y)
    return y - project_negative(cone, y)


def polar_contains(cone: Cone, mu, tol: float = 0.0) -> bool:
    """Whether ``mu`` lies in ``Theta_+`` up to ``tol``.

    Orthant factors test ``mu_i >= -tol``; zero factors accept anything; the
    second-order cone is self-dual, so its factor tests ``||x|| <= t + tol``.
    """
    mu = _vec(cone, mu)
    if not np.all(np.isfinite(mu)):
        return False
    for off, leaf in factors(cone):
        block = mu[off:off + leaf.dim]
        if isinstance(leaf, Orthant):
            if np.any(block < -tol):
                return False
        elif isinstance(leaf, SecondOrderCone):
            if np.linalg.norm(block[1:]) > block[0] + tol:
                return False
    return True


def cone_contains(cone: Cone, y, tol: float = 0.0) -> bool:
    """Whether ``y`` lies in ``Theta`` itself, up to ``tol``."""
    y = _vec(cone, y)
    for off, leaf in factors(cone):
        block = y[off:off + leaf.dim]
        if isinstance(leaf, Orthant):
            if np.any(block < -tol):
                return False
        elif isinstance(leaf, Zero):
            if np.any(np.abs(block) > tol):
                return False
        elif np.linalg.norm(block[1:]) > block[0] + tol:
            return False
    return True


def distance_to_negative_cone(cone: Cone, y) -> float:
    """``||y - P_{-Theta}(y)||``; zero exactly when ``y`` is in ``-Theta``."""
    y = _vec(cone, y)
    return float(np.linalg.norm(y - project_negative(cone, y)))


def interior_direction(cone: Cone) -> Optional[np.ndarray]:
    """A point of ``int Theta``, or ``None`` when the interior is empty."""
    out = np.empty(cone.dim)
    for off, leaf in factors(cone):
        if isinstance(leaf, Orthant):
            out[off:off + leaf.dim] = 1.0
        elif isinstance(leaf, SecondOrderCone):
            out[off:off + leaf.dim] = 0.0
            out[off] = 1.0
        else:
            return None
    return out


def is_polyhedral(cone: Cone) -> bool:
    """True for orthant, zero, and products built only from those."""
    return all(isinstance(leaf, (Orthant, Zero)) for _, leaf in factors(cone))


def component_kinds(cone: Cone):
    """Per-coordinate kind tags, e.g. ``['zero', 'orthant']`` for ``{0} x R_+``."""
    kinds = []
    for _, leaf in factors(cone):
        kinds.extend([leaf.kind] * leaf.dim)
    return kinds


def describe(cone: Cone) -> str:
    """Human-readable form, e.g. ``zero(1) x orthant(1)``."""
    return " x ".join(f"{leaf.kind}({leaf.dim})" for _, leaf in factors(cone))
