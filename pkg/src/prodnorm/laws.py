"""Entry distributions for the iid matrix entries.

Four families are built in:

* ``gaussian(mean, std)``
* ``rademacher`` (uniform on {-1, +1})
* ``uniform_sym(halfwidth)`` (uniform on [-a, a])
* ``heavy_tail(epsilon)`` -- symmetric, |X| >= 1 with tail
  P[|X| >= x] = x^-(4-9*eps); absolute moments of order beta are finite
  exactly for beta < 4 - 9*eps.  This is the law whose missing fourth moment
  breaks the product-norm scaling.

Every law knows its analytic mean, variance, and absolute moments (closed
form where one exists, adaptive quadrature otherwise), can be standardized to
mean 0 / variance 1 by an affine rescale, and samples deterministically from
an explicit uniform stream.  The text grammar used by the CLI and config
files is ``gaussian(m,s)``, ``rademacher``, ``uniform_sym(a)``,
``heavy_tail(eps)``, with ``std(<law>)`` denoting the standardized form.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np
from scipy.integrate import quad

from .rng import normal_draws, uniform_open_closed

GAUSSIAN = "gaussian"
RADEMACHER = "rademacher"
UNIFORM_SYM = "uniform_sym"
HEAVY_TAIL = "heavy_tail"

DEFAULT_HEAVY_TAIL_EPSILON = 0.05
_QUAD_ABS_TOL = 1e-10
_STANDARD_TOL = 1e-12


@dataclass(frozen=True)
class EntryLaw:
    """One iid entry distribution; ``scale`` multiplies every draw."""

    kind: str
    params: tuple[float, ...] = ()
    scale: float = 1.0

    def __post_init__(self):
        if self.kind == GAUSSIAN:
            if len(self.params) != 2:
                raise ValueError("gaussian takes (mean, std)")
            if self.params[1] < 0:
                raise ValueError("gaussian std must be nonnegative")
        elif self.kind == RADEMACHER:
            if self.params:
                raise ValueError("rademacher takes no parameters")
        elif self.kind == UNIFORM_SYM:
            if len(self.params) != 1 or self.params[0] <= 0:
                raise ValueError("uniform_sym takes a positive halfwidth")
        elif self.kind == HEAVY_TAIL:
            if len(self.params) != 1:
                raise ValueError("heavy_tail takes (epsilon,)")
            eps = self.params[0]
            if not 0.0 < eps < 2.0 / 9.0:
                raise ValueError("heavy_tail epsilon must lie in (0, 2/9)")
        else:
            raise ValueError(f"unknown law kind {self.kind!r}")
        if self.scale == 0.0 or not math.isfinite(self.scale):
            raise ValueError("law scale must be finite and nonzero")

    # -- analytic moments ---------------------------------------------------

    @property
    def mean(self) -> float:
        if self.kind == GAUSSIAN:
            return self.scale * self.params[0]
        return 0.0

    @property
    def variance(self) -> float:
        c2 = self.scale * self.scale
        if self.kind == GAUSSIAN:
            return c2 * self.params[1] ** 2
        if self.kind == RADEMACHER:
            return c2
        if self.kind == UNIFORM_SYM:
            return c2 * self.params[0] ** 2 / 3.0
        s = self._tail_exponent()
        return c2 * s / (s - 2.0)

    @property
    def std(self) -> float:
        return math.sqrt(self.variance)

    def _tail_exponent(self) -> float:
        return 4.0 - 9.0 * self.params[0]

    def moment_sup(self) -> float:
        """Supremum of orders with a finite absolute moment (inf if all finite)."""
        if self.kind == HEAVY_TAIL:
            return self._tail_exponent()
        return math.inf

    def has_abs_moment(self, order: float) -> bool:
        return order < self.moment_sup()

    def abs_moment(self, order: float) -> float:
        """Analytic E|X|^order; math.inf when the moment diverges."""
        if order <= 0:
            raise ValueError("moment order must be positive")
        c = abs(self.scale) ** order
        if self.kind == RADEMACHER:
            return c
        if self.kind == UNIFORM_SYM:
            return c * self.params[0] ** order / (order + 1.0)
        if self.kind == HEAVY_TAIL:
            s = self._tail_exponent()
            if order >= s:
                return math.inf
            return c * s / (s - order)
        mu, sigma = self.params
        if mu == 0.0:
            return c * _centered_gaussian_abs_moment(sigma, order)
        return c * _noncentral_gaussian_abs_moment(mu, sigma, order)

    # -- standardization ----------------------------------------------------

    @property
    def is_standardized(self) -> bool:
        return abs(self.mean) <= _STANDARD_TOL and abs(self.variance - 1.0) <= _STANDARD_TOL

    def standardized(self) -> "EntryLaw":
        return standardize(self)

    # -- sampling -----------------------------------------------------------

    def sample_array(self, gen: np.random.Generator, shape) -> np.ndarray:
        """Array of iid draws consuming the stream in a fixed, documented order."""
        n = int(np.prod(shape, dtype=np.int64)) if shape else 1
        if self.kind == GAUSSIAN:
            mu, sigma = self.params
            flat = mu + sigma * normal_draws(gen, n)
        elif self.kind == RADEMACHER:
            flat = np.where(gen.random(n) < 0.5, -1.0, 1.0)
        elif self.kind == UNIFORM_SYM:
            flat = self.params[0] * (2.0 * gen.random(n) - 1.0)
        else:
            s = self._tail_exponent()
            magnitude = uniform_open_closed(gen, n) ** (-1.0 / s)
            sign = np.where(gen.random(n) < 0.5, -1.0, 1.0)
            flat = sign * magnitude
        flat *= self.scale
        return flat.reshape(shape) if shape else flat

    def sample(self, gen: np.random.Generator) -> float:
        """One draw."""
        return float(self.sample_array(gen, (1,))[0])


def _centered_gaussian_abs_moment(sigma: float, order: float) -> float:
    # E|sigma Z|^b = sigma^b 2^(b/2) Gamma((b+1)/2) / sqrt(pi)
    return sigma**order * 2.0 ** (order / 2.0) * math.gamma((order + 1.0) / 2.0) / math.sqrt(math.pi)


def _noncentral_gaussian_abs_moment(mu: float, sigma: float, order: float) -> float:
    if sigma == 0.0:
        return abs(mu) ** order

    def integrand(z):
        return abs(mu + sigma * z) ** order * math.exp(-0.5 * z * z) / math.sqrt(2.0 * math.pi)

    kink = -mu / sigma
    left, _ = quad(integrand, -np.inf, kink, epsabs=_QUAD_ABS_TOL, limit=200)
    right, _ = quad(integrand, kink, np.inf, epsabs=_QUAD_ABS_TOL, limit=200)
    return left + right


def abs_moment(law: EntryLaw, order: float) -> float:
    """Module-level alias for EntryLaw.abs_moment."""
    return law.abs_moment(order)


def sample(law: EntryLaw, gen: np.random.Generator) -> float:
    """Module-level alias for EntryLaw.sample."""
    return law.sample(gen)


# -- factories ---------------------------------------------------------------


def gaussian(mean: float, std: float) -> EntryLaw:
    return EntryLaw(GAUSSIAN, (float(mean), float(std)))


def rademacher() -> EntryLaw:
    return EntryLaw(RADEMACHER)


def uniform_sym(halfwidth: float) -> EntryLaw:
    return EntryLaw(UNIFORM_SYM, (float(halfwidth),))


def heavy_tail(epsilon: float = DEFAULT_HEAVY_TAIL_EPSILON) -> EntryLaw:
    return EntryLaw(HEAVY_TAIL, (float(epsilon),))


def standard_gaussian() -> EntryLaw:
    return gaussian(0.0, 1.0)


def standardize(law: EntryLaw) -> EntryLaw:
    """Affinely rescaled law with mean 0 and variance 1.

    Gaussian laws map to gaussian(0, 1); the symmetric families keep their
    shape and absorb the rescale (uniform_sym into its halfwidth, heavy_tail
    into its scale factor).  Zero variance is rejected; every built-in law
    has finite variance.
    """
    var = law.variance
    if var == 0.0:
        raise ValueError("cannot standardize a zero-variance law")
    if law.is_standardized:
        return law
    if law.kind == GAUSSIAN:
        return gaussian(0.0, 1.0)
    sigma = math.sqrt(var)
    if law.kind == UNIFORM_SYM:
        # fold the rescale into the halfwidth: variance a^2/3 = 1 at a = sqrt(3)
        return uniform_sym(law.params[0] * abs(law.scale) / sigma)
    if law.kind == RADEMACHER:
        return rademacher()
    return replace(law, scale=law.scale / sigma)


# -- law grammar --------------------------------------------------------------


def parse_law(text: str) -> EntryLaw:
    """Parse the law grammar; see the module docstring for the forms."""
    from . import expr

    return expr.parse_law(text)


def format_law(law: EntryLaw) -> str:
    if law.kind == GAUSSIAN:
        base = f"gaussian({_fmt(law.params[0])},{_fmt(law.params[1])})"
    elif law.kind == RADEMACHER:
        base = "rademacher"
    elif law.kind == UNIFORM_SYM:
        base = f"uniform_sym({_fmt(law.params[0])})"
    else:
        base = f"heavy_tail({_fmt(law.params[0])})"
    if law.scale == 1.0:
        return base
    if law == standardize(replace(law, scale=1.0)):
        return f"std({base})"
    return f"scaled({_fmt(law.scale)},{base})"


def _fmt(x: float) -> str:
    return repr(int(x)) if float(x).is_integer() and abs(x) < 1e15 else repr(float(x))
