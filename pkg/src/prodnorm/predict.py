"""Asymptotic predictions for the max-row-sum norm of factor chains.

Every canonical centered expression splits into base cases, each with a known
limit once all dimensions grow together (within a bounded ratio):

==================  =========================================  ==============
base case           normalization for the norm                 limit
==================  =========================================  ==============
single matrix       cols                                       E|entry|
centered product    n_p * (n_1 ... n_{p-1})^(1/2)              sqrt(2/pi)
starts with ones    n_p * (n_0 ... n_{p-1})^(1/2)              sqrt(2/pi)
ends with ones      m * (n_1 ... n_p)^(1/2) * (2 log n_0)^(1/2)  1
ones both ends      d * (n_0 ... n_p)^(1/2)                    |N(0,1)| scale
pure ones           cols                                       1 (exact)
==================  =========================================  ==============

(dimensions indexed along the chain: factor q maps n_{q-1} -> n_q; m and d
are the outer dimensions of the all-ones blocks, which the norm does not
depend on when they sit first / penultimate).  The combined prediction
multiplies base normalizations and limits with the split coefficient; laws
with non-unit standard deviation contribute their sigma to the limit.  The
ones-both-ends case is the only one with a random limit, so a prediction is
Gaussian exactly when one such base appears; more than one is refused (the
joint law of dependent Gaussian blocks is not determined here).

The moment assumptions are checked with the fixed witness alpha = 1.25: a
centered-product base needs finite moments of order 4*alpha = 5 for all but
its last factor and 2*alpha = 2.5 for the last; the ones-flanked bases need
2.5 everywhere; an ends-with-ones base needs order 4 everywhere.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from enum import Enum
from fractions import Fraction
from typing import Mapping

from .expr import (
    BaseCase,
    Coeff,
    Dim,
    ProductExpr,
    canonicalize,
    classify_base_case,
    decompose_noncentered,
    format_expr,
    split_at_ones,
)

ALPHA_WITNESS = 1.25

SQRT_2_OVER_PI = math.sqrt(2.0 / math.pi)

HALF = Fraction(1, 2)


class PredictionRefused(ValueError):
    """The expression falls outside the predictable cases; the reason says why."""

    def __init__(self, message: str, reason: str = "other"):
        super().__init__(message)
        self.reason = reason


class FluctuationClass(Enum):
    DETERMINISTIC_LIMIT = "deterministic"
    GAUSSIAN_LIMIT = "gaussian"


@dataclass(frozen=True)
class MomentCheck:
    """One verified moment assumption: law at a factor position of a base."""

    base_index: int
    base_case: BaseCase
    factor_position: int
    law_text: str
    required_order: float
    available_sup: float

    @property
    def satisfied(self) -> bool:
        return self.required_order < self.available_sup


@dataclass(frozen=True)
class AsymptoticPrediction:
    """Normalization exponents, optional log factor, and the limit."""

    dim_exponents: tuple[tuple[Dim, Fraction], ...]
    log_exponent: Fraction
    log_dim: Dim | None
    fluctuation: FluctuationClass
    limit_constant: float | None
    gaussian_scale: float | None
    base_cases: tuple[tuple[ProductExpr, BaseCase], ...]
    moment_checks: tuple[MomentCheck, ...] = ()

    def exponent_of(self, dim: Dim) -> Fraction:
        for d, p in self.dim_exponents:
            if d == dim:
                return p
        return Fraction(0)

    def growth_exponent(self) -> Fraction:
        """Total growth when every symbolic dimension is of order n."""
        return sum(
            (p for d, p in self.dim_exponents if isinstance(d, str)), Fraction(0)
        )

    def normalization(self, dims: Mapping[str, int]) -> float:
        """Evaluate the normalization at concrete dimensions.

        Includes the (2 log n0)^(1/2) factor whenever the log exponent is
        one half, matching the ends-with-ones scaling.
        """
        value = 1.0
        for d, p in self.dim_exponents:
            value *= float(_resolve(d, dims)) ** float(p)
        if self.log_exponent:
            size = _resolve(self.log_dim, dims)
            if size < 2:
                raise ValueError(
                    f"log-factor dimension {_fmt_dim(self.log_dim)} must be at least 2"
                )
            value *= (2.0 * math.log(size)) ** float(self.log_exponent)
        return value

    def normalization_text(self) -> str:
        parts = []
        for d, p in self.dim_exponents:
            if p == 1:
                parts.append(_fmt_dim(d))
            else:
                parts.append(f"{_fmt_dim(d)}^({p})")
        if self.log_exponent:
            parts.append(f"(2*log({_fmt_dim(self.log_dim)}))^({self.log_exponent})")
        return " * ".join(parts) if parts else "1"

    def limit_text(self) -> str:
        if self.fluctuation is FluctuationClass.DETERMINISTIC_LIMIT:
            return f"constant {self.limit_constant:.6g}"
        if self.gaussian_scale == 1.0:
            return "Gaussian limit, unit variance"
        return f"Gaussian limit, scale {self.gaussian_scale:.6g}"


def _exponent_items(exponents: dict) -> tuple:
    # drop zero exponents and the literal dimension 1 (1^p is always 1)
    return tuple(
        (d, p)
        for d, p in sorted(exponents.items(), key=lambda kv: _fmt_dim(kv[0]))
        if p and d != 1
    )


def _resolve(d: Dim, dims: Mapping[str, int]) -> int:
    if isinstance(d, int):
        return d
    try:
        return int(dims[d])
    except KeyError:
        raise KeyError(f"dimension symbol {d!r} is unbound") from None


def _fmt_dim(d: Dim) -> str:
    return d if isinstance(d, str) else str(d)


# -- per-base analysis -----------------------------------------------------------


_REQ_TEXT = {
    BaseCase.SINGLE_MATRIX: "2*alpha",
    BaseCase.CENTERED: "4*alpha (2*alpha for the last factor)",
    BaseCase.STARTS_WITH_ONE: "2*alpha",
    BaseCase.ONE_BOTH_ENDS: "2*alpha",
    BaseCase.ENDS_WITH_ONE: "4",
}


def _required_orders(tag: BaseCase, count: int) -> list[float]:
    if tag is BaseCase.SINGLE_MATRIX:
        return [2.0 * ALPHA_WITNESS]
    if tag is BaseCase.CENTERED:
        return [4.0 * ALPHA_WITNESS] * (count - 1) + [2.0 * ALPHA_WITNESS]
    if tag in (BaseCase.STARTS_WITH_ONE, BaseCase.ONE_BOTH_ENDS):
        return [2.0 * ALPHA_WITNESS] * count
    if tag is BaseCase.ENDS_WITH_ONE:
        return [4.0] * count
    return []


@dataclass(frozen=True)
class _BasePrediction:
    exponents: list
    log_dim: Dim | None
    constant: float
    gaussian: bool


def _analyze_base(base: ProductExpr, tag: BaseCase) -> _BasePrediction:
    randoms = [f for f in base.factors if f.is_random]
    sigma_product = 1.0
    for f in randoms:
        var = f.law.variance
        if var <= 0 or not math.isfinite(var):
            raise PredictionRefused(
                f"law {format_expr(base)} has non-positive or infinite variance"
            )
        sigma_product *= math.sqrt(var)

    if tag is BaseCase.PURE_ONE:
        return _BasePrediction([(base.cols, Fraction(1))], None, 1.0, False)
    if tag is BaseCase.SINGLE_MATRIX:
        law = randoms[0].law
        return _BasePrediction([(base.cols, Fraction(1))], None, law.abs_moment(1.0), False)

    exps: list[tuple[Dim, Fraction]] = []
    if tag is BaseCase.CENTERED:
        exps.append((randoms[-1].cols, Fraction(1)))
        exps.extend((f.cols, HALF) for f in randoms[:-1])
        return _BasePrediction(exps, None, SQRT_2_OVER_PI * sigma_product, False)
    if tag is BaseCase.STARTS_WITH_ONE:
        exps.append((randoms[-1].cols, Fraction(1)))
        exps.append((randoms[0].rows, HALF))
        exps.extend((f.cols, HALF) for f in randoms[:-1])
        return _BasePrediction(exps, None, SQRT_2_OVER_PI * sigma_product, False)
    if tag is BaseCase.ENDS_WITH_ONE:
        exps.append((base.factors[-1].cols, Fraction(1)))
        exps.extend((f.cols, HALF) for f in randoms)
        return _BasePrediction(exps, randoms[0].rows, sigma_product, False)
    # ones both ends
    exps.append((base.factors[-1].cols, Fraction(1)))
    exps.append((randoms[0].rows, HALF))
    exps.extend((f.cols, HALF) for f in randoms)
    return _BasePrediction(exps, None, sigma_product, True)


def _check_moments(base_index: int, base: ProductExpr, tag: BaseCase) -> list[MomentCheck]:
    from .laws import format_law

    randoms = [f for f in base.factors if f.is_random]
    checks = []
    for position, (factor, order) in enumerate(
        zip(randoms, _required_orders(tag, len(randoms))), start=1
    ):
        checks.append(
            MomentCheck(
                base_index=base_index,
                base_case=tag,
                factor_position=position,
                law_text=format_law(factor.law),
                required_order=order,
                available_sup=factor.law.moment_sup(),
            )
        )
    return checks


def predict_asymptotics(e: ProductExpr) -> AsymptoticPrediction:
    """Prediction for a canonical expression with centered random factors.

    A single random factor is also accepted non-centered: the single-matrix
    limit cols * E|entry| holds without centering.
    """
    e = canonicalize(e)
    single_random = len(e.factors) == 1 and e.factors[0].is_random
    if not e.all_centered and not single_random:
        raise PredictionRefused(
            "prediction requires centered random factors; decompose first "
            "(predict() does this automatically)",
            reason="centering",
        )
    if single_random:
        coeff, bases = e.coeff, (ProductExpr(e.factors),)
    else:
        result = split_at_ones(e)
        coeff, bases = result.coeff, result.bases

    tags = [classify_base_case(b) for b in bases]

    moment_checks: list[MomentCheck] = []
    for idx, (base, tag) in enumerate(zip(bases, tags)):
        moment_checks.extend(_check_moments(idx, base, tag))
    failed = [c for c in moment_checks if not c.satisfied]
    if failed:
        worst = failed[0]
        raise PredictionRefused(
            f"moment assumption unmet in {worst.base_case.value} base "
            f"{worst.base_index + 1}: factor {worst.factor_position} with law "
            f"{worst.law_text} requires a finite absolute moment of order "
            f"{_REQ_TEXT[worst.base_case]} = {worst.required_order:g} "
            f"(alpha witness {ALPHA_WITNESS}), but its moments are finite only "
            f"for orders below {worst.available_sup:g}",
            reason="moments",
        )

    analyses = [_analyze_base(b, t) for b, t in zip(bases, tags)]
    gaussian_count = sum(1 for a in analyses if a.gaussian)
    if gaussian_count > 1:
        raise PredictionRefused(
            f"{gaussian_count} ones-both-ends bases found: the joint law of "
            "several Gaussian-limit blocks is not determined, refusing to guess",
            reason="multi-gaussian",
        )

    exponents: dict[Dim, Fraction] = {}
    for d, p in coeff.dim_powers:
        exponents[d] = exponents.get(d, Fraction(0)) + Fraction(p)
    constant = abs(coeff.scalar)
    log_dim = None
    for analysis in analyses:
        for d, p in analysis.exponents:
            exponents[d] = exponents.get(d, Fraction(0)) + p
        constant *= analysis.constant
        if analysis.log_dim is not None:
            log_dim = analysis.log_dim

    items = _exponent_items(exponents)
    gaussian = gaussian_count == 1
    return AsymptoticPrediction(
        dim_exponents=items,
        log_exponent=HALF if log_dim is not None else Fraction(0),
        log_dim=log_dim,
        fluctuation=(
            FluctuationClass.GAUSSIAN_LIMIT if gaussian else FluctuationClass.DETERMINISTIC_LIMIT
        ),
        limit_constant=None if gaussian else constant,
        gaussian_scale=constant if gaussian else None,
        base_cases=tuple(zip(bases, tags)),
        moment_checks=tuple(moment_checks),
    )


# -- full pipeline: decomposition and dominant-term selection ---------------------


@dataclass(frozen=True)
class TermPrediction:
    coefficient: float
    term: ProductExpr
    prediction: AsymptoticPrediction | None
    refusal: str | None

    def growth_key(self):
        p = self.prediction
        return (p.growth_exponent(), p.log_exponent)


@dataclass(frozen=True)
class PredictionResult:
    terms: tuple[TermPrediction, ...]
    dominant_index: int
    caveats: tuple[str, ...]

    @property
    def prediction(self) -> AsymptoticPrediction:
        return self.terms[self.dominant_index].prediction


def _scaled_prediction(pred: AsymptoticPrediction, c: float) -> AsymptoticPrediction:
    if c == 1.0:
        return pred
    if pred.fluctuation is FluctuationClass.GAUSSIAN_LIMIT:
        return replace(pred, gaussian_scale=pred.gaussian_scale * abs(c))
    return replace(pred, limit_constant=pred.limit_constant * abs(c))


def predict(e: ProductExpr) -> PredictionResult:
    """Predict any expression: decompose non-centered factors, pick the
    dominant term by growth exponent (log factors break ties), and surface
    near-ties as caveats instead of resolving them numerically."""
    e = canonicalize(e)
    if e.all_centered or (len(e.factors) == 1 and e.factors[0].is_random):
        pred = predict_asymptotics(e)
        term = TermPrediction(1.0, e, pred, None)
        return PredictionResult((term,), 0, ())

    terms: list[TermPrediction] = []
    for scalar, term_expr in decompose_noncentered(e):
        if scalar == 0.0:
            continue
        try:
            pred = _scaled_prediction(predict_asymptotics(term_expr), scalar)
            terms.append(TermPrediction(scalar, term_expr, pred, None))
        except PredictionRefused as refusal:
            if refusal.reason != "multi-gaussian":
                raise
            # growth still known for a multi-Gaussian term; keep it comparable
            stripped = _strip_gaussian_limit(term_expr)
            terms.append(TermPrediction(scalar, term_expr, stripped, str(refusal)))
    if not terms:
        raise PredictionRefused("all decomposition terms vanish")

    keys = [t.growth_key() for t in terms]
    best = max(keys)
    winners = [i for i, k in enumerate(keys) if k == best]
    dominant = winners[0]
    if terms[dominant].refusal is not None:
        raise PredictionRefused(terms[dominant].refusal)

    caveats = []
    if len(winners) > 1:
        tied = ", ".join(format_expr(terms[i].term) for i in winners)
        caveats.append(
            f"dominance with caveat: {len(winners)} terms share the leading growth "
            f"exponent {best[0]} (log exponent {best[1]}): {tied}"
        )
        signs = {math.copysign(1.0, terms[i].coefficient) for i in winners}
        if len(signs) > 1:
            caveats.append(
                "tied terms have opposite-sign coefficients; possible cancellation "
                "is not analyzed"
            )
    return PredictionResult(tuple(terms), dominant, tuple(caveats))


def _strip_gaussian_limit(term_expr: ProductExpr) -> AsymptoticPrediction:
    """Exponent-only prediction for a term whose limit law is refused."""
    result = split_at_ones(term_expr)
    exponents: dict[Dim, Fraction] = {}
    for d, p in result.coeff.dim_powers:
        exponents[d] = exponents.get(d, Fraction(0)) + Fraction(p)
    for base in result.bases:
        tag = classify_base_case(base)
        analysis = _analyze_base(base, tag)
        for d, p in analysis.exponents:
            exponents[d] = exponents.get(d, Fraction(0)) + p
    items = _exponent_items(exponents)
    return AsymptoticPrediction(
        dim_exponents=items,
        log_exponent=Fraction(0),
        log_dim=None,
        fluctuation=FluctuationClass.GAUSSIAN_LIMIT,
        limit_constant=None,
        gaussian_scale=math.nan,
        base_cases=(),
        moment_checks=(),
    )
