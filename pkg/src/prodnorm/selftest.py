"""Built-in cross-validation: every closed form checked against an
independent route (enumeration, quadrature, or an exactly-known law)."""

from __future__ import annotations

import math

import numpy as np
from scipy.integrate import quad
from scipy.special import ndtri

from .laws import gaussian, heavy_tail, rademacher, standard_gaussian, uniform_sym
from .matrix import Matrix, brute_force_inf_norm, inf_op_norm, l1_op_norm, matmul_chain, one_matrix
from .rng import stream
from .stein import w1_empirical


def _check_norm_oracle(seed):
    laws = [standard_gaussian(), rademacher(), uniform_sym(math.sqrt(3.0)), heavy_tail(0.05)]
    gen = stream(seed, 1)
    worst = 0.0
    for i in range(60):
        law = laws[i % len(laws)]
        rows = 1 + int(gen.random() * 8)
        cols = 1 + int(gen.random() * 8)
        mat = Matrix(law.sample_array(gen, (rows, cols)))
        closed = inf_op_norm(mat)
        oracle = brute_force_inf_norm(mat)
        worst = max(worst, abs(closed - oracle) / max(oracle, 1e-300))
    return worst <= 1e-12, f"max rel gap {worst:.2e}"


def _check_duality(seed):
    gen = stream(seed, 2)
    worst = 0.0
    for _ in range(40):
        mat = Matrix(standard_gaussian().sample_array(gen, (7, 5)))
        worst = max(worst, abs(l1_op_norm(mat) - inf_op_norm(mat.transpose())))
    return worst == 0.0, f"max gap {worst:.2e}"


def _check_decomposition(seed):
    gen = stream(seed, 3)
    worst = 0.0
    for _ in range(50):
        a = Matrix(standard_gaussian().sample_array(gen, (8, 9)))
        b = Matrix(standard_gaussian().sample_array(gen, (7, 11)))
        left = inf_op_norm(matmul_chain([a, one_matrix(9, 7), b]))
        right = (
            inf_op_norm(matmul_chain([a, one_matrix(9, 7)]))
            * inf_op_norm(matmul_chain([one_matrix(7, 7), b]))
            / 7.0
        )
        worst = max(worst, abs(left - right) / left)
    return worst <= 1e-9, f"max rel gap {worst:.2e}"


def _check_moments_quadrature(_seed):
    cases = [
        (standard_gaussian(), 1.0),
        (standard_gaussian(), 3.0),
        (gaussian(1.5, 2.0), 2.0),
        (uniform_sym(2.0), 2.5),
        (heavy_tail(0.05), 2.0),
    ]
    worst = 0.0
    for law, order in cases:
        closed = law.abs_moment(order)
        numeric = _quadrature_abs_moment(law, order)
        worst = max(worst, abs(closed - numeric) / max(abs(numeric), 1e-300))
    return worst <= 1e-8, f"max rel gap {worst:.2e}"


def _quadrature_abs_moment(law, order):
    if law.kind == "gaussian":
        mu, sigma = law.params

        def pdf(x):
            return math.exp(-0.5 * ((x - mu) / sigma) ** 2) / (sigma * math.sqrt(2 * math.pi))

        val, _ = quad(lambda x: abs(x) ** order * pdf(x), -np.inf, np.inf, limit=200)
        return val * abs(law.scale) ** order
    if law.kind == "uniform_sym":
        a = law.params[0]
        val, _ = quad(lambda x: abs(x) ** order / (2 * a), -a, a, limit=200)
        return val * abs(law.scale) ** order
    if law.kind == "heavy_tail":
        s = 4.0 - 9.0 * law.params[0]
        val, _ = quad(lambda x: x**order * s * x ** (-s - 1.0), 1.0, np.inf, limit=200)
        return val * abs(law.scale) ** order
    return law.abs_moment(order)


def _check_w1_estimator(_seed):
    n = 100_000
    exact_quantiles = ndtri((np.arange(1, n + 1) - 0.5) / n)
    at_quantiles = w1_empirical(exact_quantiles)
    at_zero = w1_empirical(np.zeros(n))
    expected = math.sqrt(2.0 / math.pi)
    ok = at_quantiles <= 1e-12 and abs(at_zero - expected) <= 1e-3
    return ok, f"quantiles -> {at_quantiles:.2e}, zeros -> {at_zero:.6f} vs {expected:.6f}"


def _check_exact_gaussian_sum(seed):
    gen = stream(seed, 4)
    weights = np.arange(1.0, 11.0)
    weights /= math.sqrt(float(weights @ weights))
    draws = standard_gaussian().sample_array(gen, (20000, 10)) @ weights
    w1 = w1_empirical(draws)
    return w1 <= 0.02, f"W1 {w1:.4f} for an exactly Gaussian sum"


def run_all(seed: int = 0):
    checks = [
        ("norm-oracle", _check_norm_oracle),
        ("norm-duality", _check_duality),
        ("norm-decomposition", _check_decomposition),
        ("moment-quadrature", _check_moments_quadrature),
        ("w1-estimator", _check_w1_estimator),
        ("gaussian-sum", _check_exact_gaussian_sum),
    ]
    results = []
    for name, fn in checks:
        try:
            passed, detail = fn(seed)
        except Exception as err:  # a crash is a failure, not an abort
            passed, detail = False, f"raised {type(err).__name__}: {err}"
        results.append((name, passed, detail))
    return results
