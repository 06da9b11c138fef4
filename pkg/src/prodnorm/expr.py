"""Symbolic products of random matrices and all-ones blocks.

An expression is an ordered chain of factors, each either ``one(m, n)`` (the
all-ones matrix) or a random matrix ``rand(law, m, n)`` / ``randc(law, m, n)``
with iid entries, together with a scalar coefficient.  Dimensions are either
positive integer literals or symbols bound later (``n0``, ``m``, ...).

The transformations in this module are exact identities on the represented
random object, not asymptotic statements:

* ``canonicalize`` collapses adjacent all-ones factors, multiplying the
  coefficient by each absorbed inner dimension.
* ``decompose_noncentered`` expands every non-centered factor into
  (standardized centered part) + (mean times all-ones), distributing the
  product into ``2**k`` coupled terms.
* ``split_at_ones`` factors the operator norm at every interior all-ones
  block: ``norm(A @ ones(n1,n2) @ B) = norm(A @ ones(n1,n2)) * norm(ones(n2,n2) @ B) / n2``,
  leaving base cases that each match one asymptotic regime.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass
from enum import Enum
from typing import Union

from .laws import (
    DEFAULT_HEAVY_TAIL_EPSILON,
    EntryLaw,
    format_law,
    gaussian,
    heavy_tail,
    rademacher,
    standardize,
    uniform_sym,
)

Dim = Union[str, int]

_CENTER_TOL = 1e-12


class ExprSyntaxError(ValueError):
    def __init__(self, message: str, position: int):
        super().__init__(f"{message} (at position {position})")
        self.position = position


class DimChainError(ValueError):
    def __init__(self, message: str, factor_index: int):
        super().__init__(message)
        self.factor_index = factor_index


def _dim_str(d: Dim) -> str:
    return d if isinstance(d, str) else str(d)


def _check_dim(d: Dim) -> Dim:
    if isinstance(d, bool):
        raise ValueError("dimension must be a symbol or a positive integer")
    if isinstance(d, int):
        if d < 1:
            raise ValueError(f"dimension must be positive, got {d}")
        return d
    if isinstance(d, str) and re.fullmatch(r"[A-Za-z_]\w*", d):
        return d
    raise ValueError(f"invalid dimension {d!r}")


# -- factors and expressions ---------------------------------------------------


@dataclass(frozen=True)
class Factor:
    """One chain factor: an all-ones block or a random matrix."""

    rows: Dim
    cols: Dim
    law: EntryLaw | None = None  # None marks the all-ones factor
    centered: bool = False

    def __post_init__(self):
        _check_dim(self.rows)
        _check_dim(self.cols)
        if self.law is not None and self.centered and abs(self.law.mean) > _CENTER_TOL:
            raise ValueError("centered factor requires a mean-zero law")

    @property
    def is_one(self) -> bool:
        return self.law is None

    @property
    def is_random(self) -> bool:
        return self.law is not None


def one_factor(rows: Dim, cols: Dim) -> Factor:
    return Factor(rows, cols)


def random_factor(law: EntryLaw, rows: Dim, cols: Dim, centered: bool | None = None) -> Factor:
    # a mean-zero law is centered whether or not the caller says so
    if centered is None:
        centered = abs(law.mean) <= _CENTER_TOL
    elif not centered and abs(law.mean) <= _CENTER_TOL:
        centered = True
    return Factor(rows, cols, law=law, centered=centered)


@dataclass(frozen=True)
class Coeff:
    """Scalar times a monomial in symbolic dimensions (integer powers)."""

    scalar: float = 1.0
    dim_powers: tuple[tuple[str, int], ...] = ()

    def times_scalar(self, c: float) -> "Coeff":
        return Coeff(self.scalar * c, self.dim_powers)

    def times_dim(self, d: Dim, power: int) -> "Coeff":
        if isinstance(d, int):
            return Coeff(self.scalar * float(d) ** power, self.dim_powers)
        powers = dict(self.dim_powers)
        powers[d] = powers.get(d, 0) + power
        items = tuple(sorted((k, v) for k, v in powers.items() if v != 0))
        return Coeff(self.scalar, items)

    def times(self, other: "Coeff") -> "Coeff":
        out = self.times_scalar(other.scalar)
        for d, p in other.dim_powers:
            out = out.times_dim(d, p)
        return out

    @property
    def is_unit(self) -> bool:
        return self.scalar == 1.0 and not self.dim_powers

    def evaluate(self, dims: dict[str, int]) -> float:
        value = self.scalar
        for d, p in self.dim_powers:
            if d not in dims:
                raise KeyError(f"dimension symbol {d!r} is unbound")
            value *= float(dims[d]) ** p
        return value

    def __str__(self):
        parts = []
        if self.scalar != 1.0 or not self.dim_powers:
            parts.append(repr(self.scalar))
        for d, p in self.dim_powers:
            parts.append(d if p == 1 else f"{d}^{p}")
        return "*".join(parts)


UNIT_COEFF = Coeff()


@dataclass(frozen=True)
class ProductExpr:
    """Coefficient times an ordered, dimension-chained factor list."""

    factors: tuple[Factor, ...]
    coeff: Coeff = UNIT_COEFF

    def __post_init__(self):
        if not self.factors:
            raise ValueError("expression must have at least one factor")
        for idx in range(1, len(self.factors)):
            left, right = self.factors[idx - 1], self.factors[idx]
            if left.cols != right.rows:
                raise DimChainError(
                    f"dimension chain mismatch at factor {idx + 1}: "
                    f"{_dim_str(left.cols)} columns followed by {_dim_str(right.rows)} rows",
                    factor_index=idx + 1,
                )

    @property
    def rows(self) -> Dim:
        return self.factors[0].rows

    @property
    def cols(self) -> Dim:
        return self.factors[-1].cols

    def symbols(self) -> set[str]:
        syms = {d for f in self.factors for d in (f.rows, f.cols) if isinstance(d, str)}
        syms.update(d for d, _ in self.coeff.dim_powers)
        return syms

    @property
    def all_centered(self) -> bool:
        return all(f.centered for f in self.factors if f.is_random)

    @property
    def is_canonical(self) -> bool:
        return not any(
            self.factors[i].is_one and self.factors[i + 1].is_one
            for i in range(len(self.factors) - 1)
        )

    def random_laws(self) -> list[EntryLaw]:
        return [f.law for f in self.factors if f.is_random]


def expression(factors, coeff: Coeff = UNIT_COEFF) -> ProductExpr:
    return ProductExpr(tuple(factors), coeff)


# -- canonical form -------------------------------------------------------------


def canonicalize(e: ProductExpr) -> ProductExpr:
    """Collapse adjacent all-ones factors; the represented object is unchanged.

    ones(a, b) @ ones(b, c) equals b * ones(a, c), so each absorbed inner
    dimension multiplies the coefficient.  Idempotent.
    """
    coeff = e.coeff
    out: list[Factor] = []
    for f in e.factors:
        if out and out[-1].is_one and f.is_one:
            inner = out[-1].cols
            coeff = coeff.times_dim(inner, 1)
            out[-1] = one_factor(out[-1].rows, f.cols)
        else:
            out.append(f)
    return expression(out, coeff)


# -- centered decomposition ------------------------------------------------------


def decompose_noncentered(e: ProductExpr) -> list[tuple[float, ProductExpr]]:
    """Expand non-centered factors into centered + mean*ones, distributing.

    Each factor with law mean mu != 0 and std sigma is replaced by either its
    standardized centered part (term coefficient gains sigma) or mu times the
    all-ones block (coefficient gains mu).  Terms are enumerated in binary
    order with the leftmost non-centered factor as the most significant bit
    and the centered choice as bit 0, then canonicalized.  Summing coefficient
    times term over all 2**k terms reproduces the original random matrix
    exactly when the centered parts are coupled to the same draws.
    """
    e = canonicalize(e)
    for f in e.factors:
        if f.is_random and not math.isfinite(f.law.variance):
            raise ValueError("decomposition requires finite-variance laws")
    base_scalar = 1.0
    prepared: list[Factor] = []
    switched: list[int] = []
    for f in e.factors:
        if f.is_random and not f.centered and f.law.variance == 0.0:
            # a zero-variance factor is exactly mean * ones; no branch needed
            base_scalar *= f.law.mean
            prepared.append(one_factor(f.rows, f.cols))
        else:
            if f.is_random and not f.centered:
                switched.append(len(prepared))
            prepared.append(f)
    k = len(switched)
    terms: list[tuple[float, ProductExpr]] = []
    for t in range(1 << k):
        scalar = base_scalar
        factors: list[Factor] = []
        for i, f in enumerate(prepared):
            if i not in switched:
                factors.append(f)
                continue
            bit = (t >> (k - 1 - switched.index(i))) & 1
            if bit:
                scalar *= f.law.mean
                factors.append(one_factor(f.rows, f.cols))
            else:
                scalar *= f.law.std
                factors.append(random_factor(standardize(f.law), f.rows, f.cols))
        terms.append((scalar, canonicalize(expression(factors, e.coeff))))
    return terms


# -- norm decomposition at interior ones ----------------------------------------


@dataclass(frozen=True)
class SplitResult:
    coeff: Coeff
    bases: tuple[ProductExpr, ...]


def split_at_ones(e: ProductExpr) -> SplitResult:
    """Factor the norm at every interior all-ones block.

    Requires a canonical expression whose random factors are all centered.
    Returns base cases (unit coefficient each) and the combined coefficient
    such that ``norm(e) = |coeff| * prod(norm(base))`` holds exactly for every
    instantiation, each interior block of shape (a, b) contributing ``1/b``.
    """
    e = canonicalize(e)
    if not e.all_centered:
        raise ValueError("split_at_ones requires all random factors centered")
    coeff = e.coeff
    bases: list[ProductExpr] = []
    pending = list(e.factors)
    while True:
        interior = next(
            (i for i in range(1, len(pending) - 1) if pending[i].is_one),
            None,
        )
        if interior is None:
            bases.append(expression(pending))
            break
        block = pending[interior]
        coeff = coeff.times_dim(block.cols, -1)
        bases.append(expression(pending[: interior + 1]))
        pending = [one_factor(block.cols, block.cols)] + pending[interior + 1 :]
    return SplitResult(coeff, tuple(bases))


# -- base-case classification ----------------------------------------------------


class BaseCase(Enum):
    PURE_ONE = "pure-ones"
    SINGLE_MATRIX = "single-matrix"
    CENTERED = "centered-product"
    STARTS_WITH_ONE = "starts-with-ones"
    ENDS_WITH_ONE = "ends-with-ones"
    ONE_BOTH_ENDS = "ones-both-ends"


def classify_base_case(e: ProductExpr) -> BaseCase:
    """Tag a base case emitted by split_at_ones; rejects non-base shapes."""
    fs = e.factors
    if any(f.is_one for f in fs[1:-1]):
        raise ValueError("expression has an interior all-ones factor; split it first")
    if len(fs) == 1:
        return BaseCase.PURE_ONE if fs[0].is_one else BaseCase.SINGLE_MATRIX
    first_one, last_one = fs[0].is_one, fs[-1].is_one
    if first_one and last_one:
        return BaseCase.ONE_BOTH_ENDS
    if first_one:
        return BaseCase.STARTS_WITH_ONE
    if last_one:
        return BaseCase.ENDS_WITH_ONE
    return BaseCase.CENTERED


# -- text grammar -----------------------------------------------------------------

_TOKEN_RE = re.compile(
    r"(?:(?P<name>[A-Za-z_]\w*)|(?P<number>[+-]?(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)"
    r"|(?P<punct>[(),*]))"
)


class _Tokens:
    def __init__(self, text: str):
        self.text = text
        self.items: list[tuple[str, str, int]] = []
        pos = 0
        while pos < len(text):
            if text[pos].isspace():
                pos += 1
                continue
            m = _TOKEN_RE.match(text, pos)
            if m is None:
                raise ExprSyntaxError(f"unexpected character {text[pos]!r}", pos)
            self.items.append((m.lastgroup, m.group(m.lastgroup), pos))
            pos = m.end()
        self.index = 0

    def peek(self):
        return self.items[self.index] if self.index < len(self.items) else None

    def next(self, expect_kind=None, expect_value=None):
        tok = self.peek()
        if tok is None:
            raise ExprSyntaxError("unexpected end of input", len(self.text))
        kind, value, pos = tok
        if expect_kind and kind != expect_kind:
            raise ExprSyntaxError(f"expected {expect_kind}, found {value!r}", pos)
        if expect_value and value != expect_value:
            raise ExprSyntaxError(f"expected {expect_value!r}, found {value!r}", pos)
        self.index += 1
        return tok

    def at_end(self):
        return self.index >= len(self.items)


def _parse_number(toks: _Tokens) -> float:
    kind, value, pos = toks.next()
    if kind != "number":
        raise ExprSyntaxError(f"expected a number, found {value!r}", pos)
    return float(value)


def _parse_dim(toks: _Tokens) -> Dim:
    kind, value, pos = toks.next()
    if kind == "name":
        return value
    if kind == "number":
        as_float = float(value)
        if as_float < 1 or not as_float.is_integer():
            raise ExprSyntaxError(f"dimension must be a positive integer, got {value}", pos)
        return int(as_float)
    raise ExprSyntaxError(f"expected a dimension, found {value!r}", pos)


def _parse_law_tokens(toks: _Tokens) -> EntryLaw:
    kind, name, pos = toks.next()
    if kind != "name":
        raise ExprSyntaxError(f"expected a law name, found {name!r}", pos)
    if name == "std":
        toks.next("punct", "(")
        inner = _parse_law_tokens(toks)
        toks.next("punct", ")")
        return standardize(inner)
    if name == "gaussian":
        toks.next("punct", "(")
        mean = _parse_number(toks)
        toks.next("punct", ",")
        std = _parse_number(toks)
        toks.next("punct", ")")
        return gaussian(mean, std)
    if name == "rademacher":
        return rademacher()
    if name == "uniform_sym":
        toks.next("punct", "(")
        halfwidth = _parse_number(toks)
        toks.next("punct", ")")
        return uniform_sym(halfwidth)
    if name == "heavy_tail":
        nxt = toks.peek()
        if nxt and nxt[0] == "punct" and nxt[1] == "(":
            toks.next()
            eps = _parse_number(toks)
            toks.next("punct", ")")
            return heavy_tail(eps)
        return heavy_tail(DEFAULT_HEAVY_TAIL_EPSILON)
    raise ExprSyntaxError(f"unknown law {name!r}", pos)


def parse_law(text: str) -> EntryLaw:
    toks = _Tokens(text)
    law = _parse_law_tokens(toks)
    if not toks.at_end():
        _, value, pos = toks.peek()
        raise ExprSyntaxError(f"trailing input {value!r}", pos)
    return law


def _parse_factor(toks: _Tokens) -> Factor:
    kind, name, pos = toks.next()
    if kind != "name" or name not in ("one", "rand", "randc"):
        raise ExprSyntaxError(f"expected one/rand/randc, found {name!r}", pos)
    toks.next("punct", "(")
    if name == "one":
        rows = _parse_dim(toks)
        toks.next("punct", ",")
        cols = _parse_dim(toks)
        toks.next("punct", ")")
        return one_factor(rows, cols)
    law = _parse_law_tokens(toks)
    toks.next("punct", ",")
    rows = _parse_dim(toks)
    toks.next("punct", ",")
    cols = _parse_dim(toks)
    toks.next("punct", ")")
    if name == "randc":
        if abs(law.mean) > _CENTER_TOL:
            raise ExprSyntaxError(
                f"randc requires a centered law, got mean {law.mean!r}", pos
            )
        return random_factor(law, rows, cols, centered=True)
    return random_factor(law, rows, cols)


def parse_expression(text: str) -> ProductExpr:
    """Parse ``[coeff *] factor [* factor ...]``; round-trips with format_expr."""
    if not text.strip():
        raise ExprSyntaxError("empty expression", 0)
    toks = _Tokens(text)
    coeff = UNIT_COEFF
    tok = toks.peek()
    if tok and tok[0] == "number":
        coeff = Coeff(scalar=float(tok[1]))
        toks.next()
        toks.next("punct", "*")
    factors = [_parse_factor(toks)]
    while not toks.at_end():
        toks.next("punct", "*")
        factors.append(_parse_factor(toks))
    return expression(factors, coeff)


def format_factor(f: Factor) -> str:
    if f.is_one:
        return f"one({_dim_str(f.rows)},{_dim_str(f.cols)})"
    tag = "randc" if f.centered else "rand"
    return f"{tag}({format_law(f.law)},{_dim_str(f.rows)},{_dim_str(f.cols)})"


def format_expr(e: ProductExpr) -> str:
    body = " * ".join(format_factor(f) for f in e.factors)
    if e.coeff.is_unit:
        return body
    return f"{e.coeff} * {body}"
