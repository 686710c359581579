"""Sparse multivariate polynomials: arithmetic, parsing, differentiation,
fast numeric evaluation, minor determinants, and box rescaling.

Coefficients are stored as exact rationals (`fractions.Fraction`); binary
floats embed losslessly, so a single representation serves both the exact
and the perturbed pipelines.  Numeric hot paths use cached float snapshots
(`CompiledSystem`).
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass
from fractions import Fraction
from itertools import product

import numpy as np

Exponents = tuple[int, ...]
Coefficient = Fraction


class PolyError(ValueError):
    pass


class ParseError(PolyError):
    """Syntax or semantic error in a polynomial expression, with position."""

    def __init__(self, message: str, position: int):
        super().__init__(f"{message} (at position {position})")
        self.position = position


def _as_fraction(c) -> Fraction:
    if isinstance(c, Fraction):
        return c
    if isinstance(c, int):
        return Fraction(c)
    if isinstance(c, float):
        return Fraction(c)  # exact: binary floats are dyadic rationals
    raise PolyError(f"unsupported coefficient type {type(c).__name__}")


class Polynomial:
    """Sparse polynomial over Q in ``nvars`` variables.

    Immutable after construction: no stored term has a zero coefficient and
    every exponent vector has length ``nvars``.
    """

    __slots__ = ("terms", "nvars", "_snapshot")

    def __init__(self, terms: dict, nvars: int):
        if nvars < 1:
            raise PolyError("nvars must be positive")
        clean: dict[Exponents, Fraction] = {}
        for exps, coeff in terms.items():
            exps = tuple(int(e) for e in exps)
            if len(exps) != nvars:
                raise PolyError("exponent vector length does not match nvars")
            if any(e < 0 for e in exps):
                raise PolyError("negative exponent")
            coeff = _as_fraction(coeff)
            if coeff != 0:
                clean[exps] = coeff
        self.terms = clean
        self.nvars = nvars
        self._snapshot = None

    # ------------------------------------------------------------------
    # constructors

    @classmethod
    def zero(cls, nvars: int) -> "Polynomial":
        return cls({}, nvars)

    @classmethod
    def constant(cls, c, nvars: int) -> "Polynomial":
        return cls({(0,) * nvars: _as_fraction(c)}, nvars)

    @classmethod
    def variable(cls, index: int, nvars: int) -> "Polynomial":
        exps = [0] * nvars
        exps[index] = 1
        return cls({tuple(exps): Fraction(1)}, nvars)

    # ------------------------------------------------------------------
    # ring operations

    def __add__(self, other: "Polynomial") -> "Polynomial":
        if self.nvars != other.nvars:
            raise PolyError("nvars mismatch")
        out = dict(self.terms)
        for e, c in other.terms.items():
            out[e] = out.get(e, Fraction(0)) + c
        return Polynomial(out, self.nvars)

    def __neg__(self) -> "Polynomial":
        return Polynomial({e: -c for e, c in self.terms.items()}, self.nvars)

    def __sub__(self, other: "Polynomial") -> "Polynomial":
        return self + (-other)

    def __mul__(self, other) -> "Polynomial":
        if not isinstance(other, Polynomial):
            c = _as_fraction(other)
            return Polynomial({e: c * v for e, v in self.terms.items()}, self.nvars)
        if self.nvars != other.nvars:
            raise PolyError("nvars mismatch")
        out: dict[Exponents, Fraction] = {}
        for e1, c1 in self.terms.items():
            for e2, c2 in other.terms.items():
                e = tuple(a + b for a, b in zip(e1, e2))
                out[e] = out.get(e, Fraction(0)) + c1 * c2
        return Polynomial(out, self.nvars)

    __rmul__ = __mul__

    def __pow__(self, k: int) -> "Polynomial":
        if k < 0:
            raise PolyError("negative power")
        result = Polynomial.constant(1, self.nvars)
        base = self
        while k:
            if k & 1:
                result = result * base
            base = base * base if k > 1 else base
            k >>= 1
        return result

    def __eq__(self, other) -> bool:
        return (
            isinstance(other, Polynomial)
            and self.nvars == other.nvars
            and self.terms == other.terms
        )

    def __hash__(self):
        return hash((self.nvars, frozenset(self.terms.items())))

    def __repr__(self) -> str:
        return f"Polynomial({render(self)!r}, nvars={self.nvars})"

    def is_zero(self) -> bool:
        return not self.terms

    def total_degree(self) -> int:
        if not self.terms:
            return 0
        return max(sum(e) for e in self.terms)

    # ------------------------------------------------------------------
    # calculus and substitution

    def differentiate(self, var: int) -> "Polynomial":
        if not 0 <= var < self.nvars:
            raise PolyError("variable index out of range")
        out: dict[Exponents, Fraction] = {}
        for e, c in self.terms.items():
            k = e[var]
            if k == 0:
                continue
            ne = list(e)
            ne[var] = k - 1
            key = tuple(ne)
            out[key] = out.get(key, Fraction(0)) + c * k
        return Polynomial(out, self.nvars)

    def substitute(self, var: int, value) -> "Polynomial":
        """Fix one variable to a rational constant; result drops that variable."""
        value = _as_fraction(value)
        if self.nvars == 1:
            total = sum((c * value**e[0] for e, c in self.terms.items()), Fraction(0))
            return Polynomial({(0,): total}, 1)
        out: dict[Exponents, Fraction] = {}
        for e, c in self.terms.items():
            coeff = c * value ** e[var]
            key = e[:var] + e[var + 1 :]
            out[key] = out.get(key, Fraction(0)) + coeff
        return Polynomial(out, self.nvars - 1)

    def shift_scale(self, shifts: list, ratios: list) -> "Polynomial":
        """Substitute x_j = shifts[j] + ratios[j] * y_j for every variable."""
        if len(shifts) != self.nvars or len(ratios) != self.nvars:
            raise PolyError("wrong number of shift/ratio values")
        result = self
        for j in range(self.nvars):
            result = result._shift_scale_axis(j, _as_fraction(shifts[j]), _as_fraction(ratios[j]))
        return result

    def _shift_scale_axis(self, j: int, c0: Fraction, r: Fraction) -> "Polynomial":
        out: dict[Exponents, Fraction] = {}
        for e, c in self.terms.items():
            k = e[j]
            # (c0 + r y)^k expanded binomially
            for i in range(k + 1):
                coeff = c * math.comb(k, i) * c0 ** (k - i) * r**i
                ne = list(e)
                ne[j] = i
                key = tuple(ne)
                out[key] = out.get(key, Fraction(0)) + coeff
        return Polynomial(out, self.nvars)

    def pad_variables(self, new_nvars: int) -> "Polynomial":
        """Embed into a larger ring by appending variables with exponent zero."""
        if new_nvars < self.nvars:
            raise PolyError("cannot shrink variable count")
        extra = (0,) * (new_nvars - self.nvars)
        return Polynomial({e + extra: c for e, c in self.terms.items()}, new_nvars)

    # ------------------------------------------------------------------
    # evaluation

    def evaluate(self, x) -> float | Fraction | complex:
        """Value at a point.

        Exact-rational inputs (Fraction/int) use exact arithmetic; float
        inputs use compensated accumulation (math.fsum over the terms);
        complex inputs use plain summation.
        """
        if len(x) != self.nvars:
            raise PolyError("point dimension does not match nvars")
        if all(isinstance(v, (Fraction, int)) for v in x):
            total = Fraction(0)
            for e, c in self.terms.items():
                term = c
                for v, k in zip(x, e):
                    term *= Fraction(v) ** k
                total += term
            return total
        if any(isinstance(v, complex) for v in x):
            total = 0j
            for e, c in self.terms.items():
                term = complex(c)
                for v, k in zip(x, e):
                    term *= complex(v) ** k
                total += term
            return total
        parts = []
        for e, c in self.terms.items():
            term = float(c)
            for v, k in zip(x, e):
                term *= float(v) ** k
            parts.append(term)
        return math.fsum(parts)

    def eval_grid(self, points: np.ndarray) -> np.ndarray:
        """Vectorized float evaluation on an (m, nvars) array of points."""
        exps, coeffs = self.float_snapshot()
        values = np.zeros(points.shape[0])
        for e, c in zip(exps, coeffs):
            term = np.full(points.shape[0], c)
            for j in range(self.nvars):
                if e[j]:
                    term = term * points[:, j] ** int(e[j])
            values += term
        return values

    def float_snapshot(self) -> tuple[np.ndarray, np.ndarray]:
        """Cached (exponents, coefficients) float arrays in a fixed term order."""
        if self._snapshot is None:
            items = sorted(self.terms.items())
            exps = np.array([e for e, _ in items], dtype=np.int64).reshape(len(items), self.nvars)
            coeffs = np.array([float(c) for _, c in items], dtype=float)
            self._snapshot = (exps, coeffs)
        return self._snapshot


# ----------------------------------------------------------------------
# fast stacked evaluation


class CompiledSystem:
    """Stacked numpy evaluator for a polynomial list and (optionally) its Jacobian.

    All terms of all rows are evaluated in one vectorized sweep; per-row sums
    are recovered with a 0/1 indicator matrix, which is cheap and dtype-safe
    at the tiny sizes this package deals with.
    """

    def __init__(self, polys: list[Polynomial], with_jacobian: bool = True):
        if not polys:
            raise PolyError("empty system")
        self.nvars = polys[0].nvars
        self.neq = len(polys)
        self.with_jacobian = with_jacobian
        rows = list(polys)
        if with_jacobian:
            for p in polys:
                for j in range(self.nvars):
                    rows.append(p.differentiate(j))
        exps_list, coeff_list, row_idx = [], [], []
        for i, p in enumerate(rows):
            e, c = p.float_snapshot()
            exps_list.append(e)
            coeff_list.append(c)
            row_idx.extend([i] * len(c))
        self.exps = (
            np.concatenate(exps_list) if exps_list else np.zeros((0, self.nvars), dtype=np.int64)
        )
        self.coeffs = np.concatenate(coeff_list)
        self.rows = np.zeros((len(rows), len(self.coeffs)))
        self.rows[row_idx, np.arange(len(self.coeffs))] = 1.0
        self.degrees = [p.total_degree() for p in polys]

    def _monomials(self, x: np.ndarray) -> np.ndarray:
        if len(self.coeffs) == 0:
            return np.zeros(0, dtype=x.dtype)
        return self.coeffs * np.prod(x[None, :] ** self.exps, axis=1)

    def values(self, x: np.ndarray) -> np.ndarray:
        out = self.rows @ self._monomials(np.asarray(x))
        return out[: self.neq]

    def values_and_jacobian(self, x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        if not self.with_jacobian:
            raise PolyError("compiled without Jacobian rows")
        out = self.rows @ self._monomials(np.asarray(x))
        return out[: self.neq], out[self.neq :].reshape(self.neq, self.nvars)

    def residual_inf(self, x: np.ndarray) -> float:
        return float(np.max(np.abs(self.values(x)))) if self.neq else 0.0


# ----------------------------------------------------------------------
# curve systems


class CurveSystem:
    """n-1 polynomials in n variables together with their symbolic Jacobian."""

    def __init__(self, polys: list[Polynomial]):
        if not polys:
            raise PolyError("a curve system needs at least one polynomial")
        nvars = polys[0].nvars
        if any(p.nvars != nvars for p in polys):
            raise PolyError("all polynomials must share the variable count")
        if len(polys) != nvars - 1:
            raise PolyError(f"expected {nvars - 1} polynomials in {nvars} variables, got {len(polys)}")
        self.polys = list(polys)
        self.nvars = nvars
        self.jac = [[p.differentiate(j) for j in range(nvars)] for p in polys]
        self._compiled: CompiledSystem | None = None

    @property
    def compiled(self) -> CompiledSystem:
        if self._compiled is None:
            self._compiled = CompiledSystem(self.polys, with_jacobian=True)
        return self._compiled

    def values(self, x: np.ndarray) -> np.ndarray:
        return self.compiled.values(x)

    def values_and_jacobian(self, x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        return self.compiled.values_and_jacobian(x)

    def jacobian_at(self, x: np.ndarray) -> np.ndarray:
        return self.compiled.values_and_jacobian(x)[1]

    def residual_inf(self, x: np.ndarray) -> float:
        return float(np.max(np.abs(self.values(x))))


def _det(matrix: list[list[Polynomial]]) -> Polynomial:
    n = len(matrix)
    nv = matrix[0][0].nvars
    if n == 1:
        return matrix[0][0]
    out = Polynomial.zero(nv)
    for j in range(n):
        minor = [row[:j] + row[j + 1 :] for row in matrix[1:]]
        cof = matrix[0][j] * _det(minor)
        out = out + (cof if j % 2 == 0 else -cof)
    return out


def minor_determinants(sys: CurveSystem) -> list[Polynomial]:
    """Determinants of the Jacobian with one column deleted, one per column.

    Their common zero set on the curve is the singular locus.
    """
    n = sys.nvars
    out = []
    for i in range(n):
        cols = [j for j in range(n) if j != i]
        sub = [[row[j] for j in cols] for row in sys.jac]
        out.append(_det(sub) if sub else Polynomial.constant(1, n))
    return out


# ----------------------------------------------------------------------
# rescaling into the unit frame


@dataclass(frozen=True)
class AffineMap:
    """Similarity y = scale * (x - center), with exact rational parameters."""

    center: np.ndarray
    scale: float
    center_frac: tuple
    scale_frac: Fraction

    def forward(self, x: np.ndarray) -> np.ndarray:
        return self.scale * (np.asarray(x, dtype=float) - self.center)

    def inverse(self, y: np.ndarray) -> np.ndarray:
        return self.center + np.asarray(y, dtype=float) / self.scale

    def forward_distance(self, d: float) -> float:
        return d * self.scale

    def inverse_distance(self, d: float) -> float:
        return d / self.scale

    def forward_box(self, box) -> "object":
        from .geometry import Box

        return Box(self.forward(box.lower), self.forward(box.upper))


def _estimate_gradient_bound(poly: Polynomial, lo: np.ndarray, hi: np.ndarray, per_axis: int) -> float:
    """Max of ||grad poly|| sampled on a regular grid over [lo, hi]."""
    n = poly.nvars
    axes = [np.linspace(lo[j], hi[j], per_axis) for j in range(n)]
    grid = np.array(list(product(*axes)))
    total = np.zeros(grid.shape[0])
    for j in range(n):
        total += poly.differentiate(j).eval_grid(grid) ** 2
    return float(np.sqrt(np.max(total))) if len(total) else 0.0


@dataclass(frozen=True)
class RescaleResult:
    system: CurveSystem
    map: AffineMap
    coeff_scales: tuple[float, ...]


def rescale_system_detailed(sys: CurveSystem, box) -> RescaleResult:
    """Shift and rescale so the box image lies in the unit ball and the sampled
    gradient bound of every Jacobian entry is at most 1.

    The point map is an exact-rational similarity, so singular loci and zero
    sets correspond exactly between frames.  Coefficients are only ever scaled
    down (estimated bounds below 1 are left alone).  The gradient bound is a
    sampling estimate, not a certificate.
    """
    from .geometry import GeometryError

    widths = box.upper - box.lower
    if np.any(widths <= 0):
        raise GeometryError("degenerate box")
    center_f = [Fraction(float(c)) for c in box.center]
    radius = box.corner_radius()
    scale_frac = Fraction((1.0 - 1e-9) / radius)
    ratio = 1 / scale_frac  # x = center + y / scale

    transformed = [p.shift_scale(center_f, [ratio] * sys.nvars) for p in sys.polys]

    img_lo = float(scale_frac) * (box.lower - np.asarray([float(c) for c in center_f]))
    img_hi = float(scale_frac) * (box.upper - np.asarray([float(c) for c in center_f]))
    per_axis = 10
    scaled = []
    coeff_scales = []
    for p in transformed:
        bound = 0.0
        for j in range(sys.nvars):
            entry = p.differentiate(j)
            bound = max(bound, _estimate_gradient_bound(entry, img_lo, img_hi, per_axis))
        factor = 1.0
        if bound > 1.0:
            factor = 1.0 / bound
            p = p * Fraction(factor)
        scaled.append(p)
        coeff_scales.append(factor)

    amap = AffineMap(
        center=np.asarray([float(c) for c in center_f]),
        scale=float(scale_frac),
        center_frac=tuple(center_f),
        scale_frac=scale_frac,
    )
    return RescaleResult(CurveSystem(scaled), amap, tuple(coeff_scales))


def rescale_system(sys: CurveSystem, box) -> tuple[CurveSystem, AffineMap]:
    """Spec-shaped wrapper around rescale_system_detailed."""
    out = rescale_system_detailed(sys, box)
    return out.system, out.map


# ----------------------------------------------------------------------
# parser / renderer
#
# expression := ['+'|'-'] term (('+'|'-') term)*
# term       := factor ('*' factor)*
# factor     := base ('^' uint)?
# base       := number | identifier | '(' expression ')'
# number     := integer | decimal | integer '/' integer
#
# Implicit multiplication is not supported; whitespace is ignored.

_TOKEN_RE = re.compile(
    r"""
    (?P<ws>\s+)
  | (?P<number>\d+\.\d*|\.\d+|\d+)
  | (?P<ident>[A-Za-z_][A-Za-z_0-9]*)
  | (?P<op>[-+*^()/])
    """,
    re.VERBOSE,
)


def _tokenize(text: str) -> list[tuple[str, str, int]]:
    tokens = []
    pos = 0
    while pos < len(text):
        m = _TOKEN_RE.match(text, pos)
        if m is None:
            raise ParseError(f"unexpected character {text[pos]!r}", pos)
        kind = m.lastgroup
        if kind != "ws":
            tokens.append((kind, m.group(), pos))
        pos = m.end()
    tokens.append(("end", "", len(text)))
    return tokens


class _Parser:
    def __init__(self, text: str, var_names: list[str]):
        if not var_names or len(set(var_names)) != len(var_names):
            raise PolyError("variable names must be nonempty and distinct")
        self.tokens = _tokenize(text)
        self.pos = 0
        self.vars = {name: i for i, name in enumerate(var_names)}
        self.nvars = len(var_names)

    def peek(self):
        return self.tokens[self.pos]

    def advance(self):
        tok = self.tokens[self.pos]
        self.pos += 1
        return tok

    def expect_op(self, op: str):
        kind, val, pos = self.peek()
        if kind != "op" or val != op:
            raise ParseError(f"expected {op!r}", pos)
        return self.advance()

    def parse(self) -> Polynomial:
        p = self.expression()
        kind, val, pos = self.peek()
        if kind != "end":
            raise ParseError(f"unexpected token {val!r}", pos)
        return p

    def expression(self) -> Polynomial:
        sign = 1
        kind, val, _ = self.peek()
        if kind == "op" and val in "+-":
            self.advance()
            sign = -1 if val == "-" else 1
        p = self.term()
        if sign < 0:
            p = -p
        while True:
            kind, val, _ = self.peek()
            if kind == "op" and val in "+-":
                self.advance()
                q = self.term()
                p = p + q if val == "+" else p - q
            else:
                return p

    def term(self) -> Polynomial:
        p = self.factor()
        while True:
            kind, val, _ = self.peek()
            if kind == "op" and val == "*":
                self.advance()
                p = p * self.factor()
            else:
                return p

    def factor(self) -> Polynomial:
        p = self.base()
        kind, val, _ = self.peek()
        if kind == "op" and val == "^":
            self.advance()
            kind, val, pos = self.peek()
            if kind != "number" or not val.isdigit():
                raise ParseError("exponent must be a non-negative integer", pos)
            self.advance()
            p = p ** int(val)
        return p

    def base(self) -> Polynomial:
        kind, val, pos = self.advance()
        if kind == "number":
            return Polynomial.constant(self._number(val, pos), self.nvars)
        if kind == "ident":
            if val not in self.vars:
                raise ParseError(f"unknown identifier {val!r}", pos)
            return Polynomial.variable(self.vars[val], self.nvars)
        if kind == "op" and val == "(":
            p = self.expression()
            self.expect_op(")")
            return p
        raise ParseError(f"unexpected token {val!r}", pos)

    def _number(self, text: str, pos: int) -> Fraction:
        # integer '/' integer makes an exact rational literal
        kind, val, _ = self.peek()
        if text.isdigit() and kind == "op" and val == "/":
            save = self.pos
            self.advance()
            kind2, val2, _ = self.peek()
            if kind2 == "number" and val2.isdigit():
                self.advance()
                return Fraction(int(text), int(val2))
            self.pos = save
        if "." in text:
            return Fraction(text)  # exact decimal
        return Fraction(int(text))


def parse_polynomial(text: str, var_names: list[str]) -> Polynomial:
    """Parse an expression in the grammar above into an expanded polynomial."""
    return _Parser(text, var_names).parse()


def render(p: Polynomial, var_names: list[str] | None = None) -> str:
    """Canonical text form; parses back to an identical term map."""
    if var_names is None:
        var_names = [f"x{i + 1}" for i in range(p.nvars)] if p.nvars > 3 else ["x", "y", "z"][: p.nvars]
    if not p.terms:
        return "0"
    keys = sorted(p.terms, key=lambda e: (-sum(e), tuple(-k for k in e)))
    pieces = []
    for e in keys:
        c = p.terms[e]
        factors = []
        for name, k in zip(var_names, e):
            if k == 1:
                factors.append(name)
            elif k > 1:
                factors.append(f"{name}^{k}")
        mag = abs(c)
        if not factors:
            body = _fraction_str(mag)
        elif mag == 1:
            body = "*".join(factors)
        else:
            body = _fraction_str(mag) + "*" + "*".join(factors)
        pieces.append(("- " if c < 0 else "+ ") + body)
    out = " ".join(pieces)
    return out[2:] if out.startswith("+ ") else "-" + out[2:]


def _fraction_str(c: Fraction) -> str:
    return str(c.numerator) if c.denominator == 1 else f"{c.numerator}/{c.denominator}"
