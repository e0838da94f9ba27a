"""Polynomial problem data: parsing, differentiation, evaluation, file format.

Polynomials are stored as a map from exponent tuples to float coefficients.
Evaluation through :meth:`Polynomial.__call__` is exact on the binary inputs
followed by a single rounding, so cancellation in expanded forms such as
``x^3 - 3x^2 + 3x - 1`` near ``x = 1`` does not destroy the result.  A plain
floating-point path (:meth:`Polynomial.eval_float`, ``evaluate(..., exact=False)``)
exists for hot loops.
"""
from __future__ import annotations

import math
import os
import re
from dataclasses import dataclass, field
from typing import Dict, List, Mapping, Optional, Sequence, Tuple

import numpy as np

from . import cone as cones
from .errors import ParseError, UsageError

Exponents = Tuple[int, ...]


def _dyadic(v: float):
    """``v = num / 2**e`` exactly."""
    num, den = float(v).as_integer_ratio()
    return num, den.bit_length() - 1


class Polynomial:
    """Multivariate polynomial over ``nvars`` variables with float coefficients."""

    __slots__ = ("nvars", "terms", "_hash")

    def __init__(self, nvars: int, terms: Optional[Mapping[Exponents, float]] = None):
        if nvars < 0:
            raise UsageError("nvars must be nonnegative")
        self.nvars = int(nvars)
        clean: Dict[Exponents, float] = {}
        for exps, coef in (terms or {}).items():
            exps = tuple(int(a) for a in exps)
            if len(exps) != self.nvars or any(a < 0 for a in exps):
                raise UsageError(f"bad exponent vector {exps} for {self.nvars} variables")
            coef = float(coef)
            if coef != 0.0:
                clean[exps] = clean.get(exps, 0.0) + coef
                if clean[exps] == 0.0:
                    del clean[exps]
        self.terms = clean
        self._hash = None

    # construction helpers -------------------------------------------------
    @classmethod
    def constant(cls, nvars, value):
        return cls(nvars, {(0,) * nvars: value})

    @classmethod
    def variable(cls, nvars, index):
        if not 0 <= index < nvars:
            raise UsageError(f"variable index {index} out of range for {nvars} variables")
        exps = [0] * nvars
        exps[index] = 1
        return cls(nvars, {tuple(exps): 1.0})

    def _coerce(self, other):
        if isinstance(other, Polynomial):
            if other.nvars != self.nvars:
                raise UsageError("polynomials over different variable counts")
            return other
        if isinstance(other, (int, float, np.integer, np.floating)):
            return Polynomial.constant(self.nvars, float(other))
        return NotImplemented

    # arithmetic -----------------------------------------------------------
    def __add__(self, other):
        other = self._coerce(other)
        if other is NotImplemented:
            return other
        terms = dict(self.terms)
        for exps, coef in other.terms.items():
            terms[exps] = terms.get(exps, 0.0) + coef
        return Polynomial(self.nvars, terms)

    __radd__ = __add__

    def __neg__(self):
        return Polynomial(self.nvars, {e: -c for e, c in self.terms.items()})

    def __sub__(self, other):
        other = self._coerce(other)
        if other is NotImplemented:
            return other
        return self + (-other)

    def __rsub__(self, other):
        return (-self) + other

    def __mul__(self, other):
        other = self._coerce(other)
        if other is NotImplemented:
            return other
        terms: Dict[Exponents, float] = {}
        for e1, c1 in self.terms.items():
            for e2, c2 in other.terms.items():
                key = tuple(a + b for a, b in zip(e1, e2))
                terms[key] = terms.get(key, 0.0) + c1 * c2
        return Polynomial(self.nvars, terms)

    __rmul__ = __mul__

    def __pow__(self, k):
        if not isinstance(k, (int, np.integer)) or isinstance(k, bool) or k < 0:
            raise UsageError(f"exponent must be a nonnegative integer, got {k!r}")
        result = Polynomial.constant(self.nvars, 1.0)
        base = self
        while k:
            if k & 1:
                result = result * base
            k >>= 1
            if k:
                base = base * base
        return result

    def __eq__(self, other):
        if not isinstance(other, Polynomial):
            return NotImplemented
        return self.nvars == other.nvars and self.terms == other.terms

    def __hash__(self):
        if self._hash is None:
            self._hash = hash((self.nvars, frozenset(self.terms.items())))
        return self._hash

    def __repr__(self):
        return f"Polynomial({self.nvars}, {self.terms!r})"

    def __str__(self):
        return self.to_string()

    # queries --------------------------------------------------------------
    def is_zero(self):
        return not self.terms

    @property
    def degree(self):
        return max((sum(e) for e in self.terms), default=0)

    def derivative(self, index: int) -> "Polynomial":
        if not 0 <= index < self.nvars:
            raise UsageError(f"variable index {index} out of range for {self.nvars} variables")
        terms = {}
        for exps, coef in self.terms.items():
            a = exps[index]
            if a == 0:
                continue
            new = list(exps)
            new[index] = a - 1
            terms[tuple(new)] = coef * a
        return Polynomial(self.nvars, terms)

    def gradient(self) -> List["Polynomial"]:
        return [self.derivative(i) for i in range(self.nvars)]

    # evaluation -----------------------------------------------------------
    def _check_point(self, x):
        if len(x) != self.nvars:
            raise UsageError(f"point has {len(x)} coordinates, polynomial has {self.nvars} variables")

    def __call__(self, x) -> float:
        """Value at ``x``, computed exactly and rounded once to float."""
        x = [float(v) for v in x]
        self._check_point(x)
        if not self.terms:
            return 0.0
        if not all(math.isfinite(v) for v in x):
            return self.eval_float(x)
        xs = [_dyadic(v) for v in x]
        powers: Dict[Tuple[int, int], int] = {}
        acc = []
        for exps, coef in self.terms.items():
            num, e = _dyadic(coef)
            for i, a in enumerate(exps):
                if a:
                    key = (i, a)
                    p = powers.get(key)
                    if p is None:
                        p = powers[key] = xs[i][0] ** a
                    num *= p
                    e += xs[i][1] * a
            acc.append((num, e))
        top = max(e for _, e in acc)
        total = sum(num << (top - e) for num, e in acc)
        try:
            return total / (1 << top)
        except OverflowError:
            return self.eval_float(x)

    def eval_float(self, x) -> float:
        """Plain double-precision evaluation."""
        x = np.asarray(x, dtype=float)
        self._check_point(x)
        total = 0.0
        for exps, coef in self.terms.items():
            total += coef * float(np.prod(x ** np.asarray(exps)))
        return total

    def eval_array(self, X) -> np.ndarray:
        """Vectorized float evaluation over the rows of ``X`` (shape ``(N, nvars)``)."""
        X = np.atleast_2d(np.asarray(X, dtype=float))
        if X.shape[1] != self.nvars:
            raise UsageError("column count does not match variable count")
        out = np.zeros(X.shape[0])
        for exps, coef in self.terms.items():
            out += coef * np.prod(X ** np.asarray(exps), axis=1)
        return out

    # printing -------------------------------------------------------------
    def to_string(self, names: Optional[Sequence[str]] = None) -> str:
        """Render in the input grammar; ``parse_expression`` reads it back term-identically."""
        if names is None:
            names = [f"x{i + 1}" for i in range(self.nvars)]
        if not self.terms:
            return "0"
        pieces = []
        for exps in sorted(self.terms, key=lambda e: (-sum(e), tuple(-a for a in e))):
            coef = self.terms[exps]
            factors = []
            for name, a in zip(names, exps):
                if a == 1:
                    factors.append(name)
                elif a > 1:
                    factors.append(f"{name}^{a}")
            mag = abs(coef)
            if not factors:
                body = repr(mag)
            elif mag == 1.0:
                body = "*".join(factors)
            else:
                body = "*".join([repr(mag)] + factors)
            sign = "-" if coef < 0 else "+"
            if not pieces:
                pieces.append(body if sign == "+" else f"-{body}")
            else:
                pieces.append(f"{sign} {body}")
        return " ".join(pieces)


def differentiate(poly: Polynomial, var_index: int) -> Polynomial:
    """Exact partial derivative with respect to variable ``var_index``."""
    return poly.derivative(var_index)


# ---------------------------------------------------------------------------
# expression parser

_TOKEN = re.compile(
    r"\s*(?:(?P<num>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)"
    r"|(?P<name>[A-Za-z_][A-Za-z_0-9]*)"
    r"|(?P<op>[-+*^()]))"
)


def _tokenize(text, line, col0):
    tokens = []
    pos = 0
    while pos < len(text):
        if text[pos:].strip() == "":
            break
        m = _TOKEN.match(text, pos)
        if m is None or m.end() == pos:
            start = pos + len(text[pos:]) - len(text[pos:].lstrip())
            raise ParseError(f"unexpected character {text[start]!r}", line, col0 + start)
        kind = m.lastgroup
        start = m.start(kind)
        tokens.append((kind, m.group(kind), col0 + start))
        pos = m.end()
    tokens.append(("end", "", col0 + len(text)))
    return tokens


class _Parser:
    def __init__(self, text, variables, line, col0):
        self.vars = {name: i for i, name in enumerate(variables)}
        self.n = len(variables)
        self.line = line
        self.tokens = _tokenize(text, line, col0)
        self.i = 0

    def peek(self):
        return self.tokens[self.i]

    def take(self):
        tok = self.tokens[self.i]
        self.i += 1
        return tok

    def fail(self, msg, tok=None):
        tok = tok or self.peek()
        raise ParseError(msg, self.line, tok[2])

    def parse(self):
        poly = self.expr()
        if self.peek()[0] != "end":
            self.fail(f"unexpected token {self.peek()[1]!r}")
        return poly

    def expr(self):
        sign = 1.0
        kind, val, _ = self.peek()
        if kind == "op" and val in "+-":
            self.take()
            sign = -1.0 if val == "-" else 1.0
        poly = self.term()
        if sign < 0:
            poly = -poly
        while True:
            kind, val, _ = self.peek()
            if kind == "op" and val in "+-":
                self.take()
                rhs = self.term()
                poly = poly + rhs if val == "+" else poly - rhs
            else:
                return poly

    def term(self):
        poly = self.factor()
        while self.peek()[:2] == ("op", "*"):
            self.take()
            poly = poly * self.factor()
        return poly

    def factor(self):
        base = self.base()
        if self.peek()[:2] == ("op", "^"):
            self.take()
            tok = self.take()
            kind, val, _ = tok
            if kind == "op" and val == "-":
                self.fail("negative exponent", tok)
            if kind != "num":
                self.fail("exponent must be a nonnegative integer", tok)
            if not val.isdigit():
                self.fail(f"fractional exponent {val!r}", tok)
            base = base ** int(val)
        return base

    def base(self):
        tok = self.take()
        kind, val, _ = tok
        if kind == "num":
            return Polynomial.constant(self.n, float(val))
        if kind == "name":
            if val not in self.vars:
                self.fail(f"unknown variable {val!r}", tok)
            return Polynomial.variable(self.n, self.vars[val])
        if kind == "op" and val == "(":
            inner = self.expr()
            close = self.take()
            if close[:2] != ("op", ")"):
                self.fail("expected ')'", close)
            return inner
        if kind == "end":
            self.fail("unexpected end of expression", tok)
        self.fail(f"unexpected token {val!r}", tok)


def parse_expression(text: str, variables: Sequence[str], line: int = 1, column: int = 1) -> Polynomial:
    """Parse and expand a polynomial expression.

    Grammar::

        expr   := ['+'|'-'] term (('+'|'-') term)*
        term   := factor ('*' factor)*
        factor := base ('^' nonneg-int)?
        base   := number | name | '(' expr ')'

    ``line`` and ``column`` locate ``text`` inside a larger file for error messages.
    """
    if len(set(variables)) != len(variables):
        raise UsageError("duplicate variable names")
    return _Parser(text, list(variables), line, column).parse()


# ---------------------------------------------------------------------------
# problems


@dataclass(frozen=True)
class Evaluation:
    x: np.ndarray
    f: np.ndarray
    g: np.ndarray
    grad_f: np.ndarray  # (m, n)
    jac_g: np.ndarray  # (p, n)

    def adjoint(self, mu) -> np.ndarray:
        """``grad g(x)^* mu``, i.e. ``jac_g.T @ mu``, summed with ``math.fsum`` per coordinate."""
        mu = np.asarray(mu, dtype=float)
        return np.array([math.fsum(self.jac_g[:, i] * mu) for i in range(self.jac_g.shape[1])])

    def weighted_gradient(self, lam) -> np.ndarray:
        lam = np.asarray(lam, dtype=float)
        return np.array([math.fsum(self.grad_f[:, i] * lam) for i in range(self.grad_f.shape[1])])


@dataclass
class Problem:
    """Cone-constrained vector problem ``min f(x)  s.t.  g(x) in -cone``."""

    variables: Tuple[str, ...]
    objectives: List[Polynomial]
    constraints: List[Polynomial]
    cone: cones.Cone
    declared_convex: bool = False
    named_points: Dict[str, np.ndarray] = field(default_factory=dict)
    name: str = ""

    def __post_init__(self):
        self.variables = tuple(self.variables)
        n = len(self.variables)
        if n < 1:
            raise UsageError("problem needs at least one variable")
        if not self.objectives:
            raise UsageError("problem needs at least one objective")
        if not self.constraints:
            raise UsageError("problem needs at least one constraint component")
        for poly in list(self.objectives) + list(self.constraints):
            if poly.nvars != n:
                raise UsageError("polynomial variable count does not match problem")
        if self.cone.dim != len(self.constraints):
            raise UsageError(f"cone dimension {self.cone.dim} does not match "
                             f"{len(self.constraints)} constraint components")
        self.named_points = {k: np.asarray(v, dtype=float) for k, v in self.named_points.items()}
        for key, pt in self.named_points.items():
            if pt.shape != (n,):
                raise UsageError(f"point {key!r} has wrong dimension")
        self.grad_f = [p.gradient() for p in self.objectives]
        self.jac_g = [p.gradient() for p in self.constraints]
        self._compile()

    @property
    def n(self):
        return len(self.variables)

    @property
    def m(self):
        return len(self.objectives)

    @property
    def p(self):
        return len(self.constraints)

    def _all_polys(self):
        polys = list(self.objectives) + list(self.constraints)
        for row in self.grad_f + self.jac_g:
            polys.extend(row)
        return polys

    def _compile(self):
        exps, coefs, owner = [], [], []
        polys = self._all_polys()
        for k, poly in enumerate(polys):
            for e, c in poly.terms.items():
                exps.append(e)
                coefs.append(c)
                owner.append(k)
        self._exps = np.array(exps, dtype=float).reshape(-1, self.n)
        self._coefs = np.array(coefs, dtype=float)
        self._owner = np.array(owner, dtype=np.intp)
        self._npolys = len(polys)

    def point(self, name: str) -> np.ndarray:
        try:
            return self.named_points[name].copy()
        except KeyError:
            raise UsageError(f"no point named {name!r}") from None

    def is_convex(self) -> bool:
        """Declared convex, or auto-verified (see :func:`verify_convex`)."""
        return self.declared_convex or verify_convex(self)

    def to_text(self) -> str:
        return format_problem(self)


def _as_point(problem: Problem, x) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.shape != (problem.n,):
        raise UsageError(f"point of shape {x.shape} does not match {problem.n} variables")
    return x


def evaluate(problem: Problem, x, exact: bool = True) -> Evaluation:
    """``f``, ``g``, ``grad f`` and the Jacobian of ``g`` at ``x``.

    With ``exact=False`` every value comes from one vectorized float pass,
    which is what the penalty inner loop uses.
    """
    x = _as_point(problem, x)
    m, p, n = problem.m, problem.p, problem.n
    if exact:
        vals = np.array([poly(x) for poly in problem._all_polys()])
    else:
        mono = np.prod(x ** problem._exps, axis=1) if problem._exps.size else np.zeros(0)
        vals = np.bincount(problem._owner, weights=problem._coefs * mono, minlength=problem._npolys)
    f = vals[:m]
    g = vals[m:m + p]
    grads = vals[m + p:].reshape(m + p, n)
    return Evaluation(x=x.copy(), f=f, g=g, grad_f=grads[:m], jac_g=grads[m:])


def is_feasible(problem: Problem, x, tol: float = 0.0) -> bool:
    """``dist(g(x), -cone) <= tol``."""
    x = _as_point(problem, x)
    g = np.array([poly(x) for poly in problem.constraints])
    return cones.distance_to_negative_cone(problem.cone, g) <= tol


def _hessian(poly: Polynomial) -> np.ndarray:
    n = poly.nvars
    H = np.zeros((n, n))
    zero = [0.0] * n
    for i in range(n):
        di = poly.derivative(i)
        for j in range(n):
            H[i, j] = di.derivative(j)(zero)
    return H


def _is_psd(H) -> bool:
    scale = max(1.0, float(np.max(np.abs(H)))) if H.size else 1.0
    return bool(np.linalg.eigvalsh(0.5 * (H + H.T)).min() >= -1e-12 * scale)


def verify_convex(problem: Problem) -> bool:
    """Sufficient convexity check for quadratic-or-lower problems with polyhedral cones.

    Objectives and orthant-side constraint components need a PSD (constant)
    Hessian; components paired with a zero cone must be affine.  Anything of
    higher degree or with a second-order cone returns False (unknown).
    """
    if not cones.is_polyhedral(problem.cone):
        return False
    polys = list(problem.objectives) + list(problem.constraints)
    if any(poly.degree > 2 for poly in polys):
        return False
    if not all(_is_psd(_hessian(poly)) for poly in problem.objectives):
        return False
    for kind, poly in zip(cones.component_kinds(problem.cone), problem.constraints):
        if kind == "zero" and poly.degree > 1:
            return False
        if kind == "orthant" and not _is_psd(_hessian(poly)):
            return False
    return True


# ---------------------------------------------------------------------------
# problem file format

_CONE_KINDS = {"orthant": cones.Orthant, "zero": cones.Zero, "soc": cones.SecondOrderCone}


def _strip_comment(line):
    return line.split("#", 1)[0]


def parse_problem(text: str, name: str = "") -> Problem:
    """Read the line-oriented ``.ccvp`` problem format."""
    variables = None
    objectives, constraints, cone_parts = [], [], []
    convex = False
    points = {}
    point_lines = {}
    cone_line = 1
    pending_exprs = []  # expressions seen before `vars`
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = _strip_comment(raw)
        if not line.strip():
            continue
        stripped = line.lstrip()
        indent = len(line) - len(stripped)
        keyword, _, rest = stripped.partition(" ")
        keyword = keyword.strip()
        rest_col = indent + len(keyword) + 2
        if keyword == "vars":
            if variables is not None:
                raise ParseError("`vars` declared twice", lineno, indent + 1)
            variables = rest.split()
            if not variables:
                raise ParseError("`vars` needs at least one name", lineno, rest_col)
            if len(set(variables)) != len(variables):
                raise ParseError("duplicate variable name", lineno, rest_col)
            for v in variables:
                if not re.fullmatch(r"[A-Za-z_][A-Za-z_0-9]*", v):
                    raise ParseError(f"invalid variable name {v!r}", lineno, rest_col)
        elif keyword in ("objective", "constraint"):
            pending_exprs.append((keyword, rest, lineno, rest_col))
        elif keyword == "cone":
            parts = rest.split()
            if len(parts) != 2 or parts[0] not in _CONE_KINDS:
                raise ParseError("expected `cone <orthant|zero|soc> <dim>`", lineno, rest_col)
            try:
                dim = int(parts[1])
            except ValueError:
                raise ParseError(f"bad cone dimension {parts[1]!r}", lineno, rest_col) from None
            cone_line = lineno
            try:
                cone_parts.append(_CONE_KINDS[parts[0]](dim))
            except UsageError as exc:
                raise ParseError(str(exc), lineno, rest_col) from None
        elif keyword == "convex":
            val = rest.strip().lower()
            if val not in ("true", "false"):
                raise ParseError("expected `convex true` or `convex false`", lineno, rest_col)
            convex = val == "true"
        elif keyword == "point":
            parts = rest.split()
            if len(parts) < 2:
                raise ParseError("expected `point <name> <reals>`", lineno, rest_col)
            try:
                points[parts[0]] = np.array([float(v) for v in parts[1:]])
                point_lines[parts[0]] = (lineno, rest_col)
            except ValueError:
                raise ParseError("point coordinates must be reals", lineno, rest_col) from None
        else:
            raise ParseError(f"unknown keyword {keyword!r}", lineno, indent + 1)
    if variables is None:
        raise ParseError("missing `vars` line", 1, 1)
    for keyword, expr, lineno, col in pending_exprs:
        poly = parse_expression(expr, variables, line=lineno, column=col)
        (objectives if keyword == "objective" else constraints).append(poly)
    if not objectives:
        raise ParseError("no `objective` lines", 1, 1)
    if not constraints:
        raise ParseError("no `constraint` lines", 1, 1)
    if not cone_parts:
        raise ParseError("no `cone` lines", 1, 1)
    cone = cones.product(cone_parts)
    if cone.dim != len(constraints):
        raise ParseError(f"cone dimensions sum to {cone.dim} but there are "
                         f"{len(constraints)} constraints", cone_line, 1)
    for key, pt in points.items():
        if len(pt) != len(variables):
            raise ParseError(f"point {key!r} has {len(pt)} coordinates, expected {len(variables)}",
                             *point_lines[key])
    return Problem(tuple(variables), objectives, constraints, cone, convex, points, name)


def load_problem(path) -> Problem:
    with open(path, encoding="utf-8") as fh:
        return parse_problem(fh.read(), name=os.path.splitext(os.path.basename(str(path)))[0])


def format_problem(problem: Problem) -> str:
    names = problem.variables
    lines = [f"vars {' '.join(names)}"]
    lines += [f"objective {poly.to_string(names)}" for poly in problem.objectives]
    lines += [f"constraint {poly.to_string(names)}" for poly in problem.constraints]
    lines += [f"cone {leaf.kind} {leaf.dim}" for _, leaf in cones.factors(problem.cone)]
    lines.append(f"convex {'true' if problem.declared_convex else 'false'}")
    for key, pt in problem.named_points.items():
        lines.append(f"point {key} " + " ".join(repr(float(v)) for v in pt))
    return "\n".join(lines) + "\n"
