import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import prodnorm as pn
from prodnorm import (
    BaseCase,
    DimChainError,
    ExprSyntaxError,
    canonicalize,
    classify_base_case,
    decompose_noncentered,
    expression,
    format_expr,
    one_factor,
    parse_expression,
    random_factor,
    split_at_ones,
)
from prodnorm.harness import instantiate_factors
from prodnorm.laws import gaussian, rademacher, standard_gaussian, uniform_sym
from prodnorm.matrix import inf_op_norm, matmul_chain, one_matrix
from prodnorm.rng import stream

G = "gaussian(0,1)"


# -- parsing ------------------------------------------------------------------


def test_parse_two_ones():
    e = parse_expression("one(2,3) * one(3,4)")
    assert len(e.factors) == 2
    c = canonicalize(e)
    assert len(c.factors) == 1
    assert c.coeff.scalar == 3.0
    assert (c.factors[0].rows, c.factors[0].cols) == (2, 4)


def test_parse_single_random():
    e = parse_expression(f"randc({G},n,n)")
    assert len(e.factors) == 1
    assert e.factors[0].centered


def test_parse_dimension_chain_error_names_factor():
    with pytest.raises(DimChainError) as err:
        parse_expression("one(2,3) * one(4,5)")
    assert err.value.factor_index == 2


def test_parse_syntax_error_carries_position():
    with pytest.raises(ExprSyntaxError) as err:
        parse_expression("one(2,3) $ one(3,4)")
    assert err.value.position == 9


def test_parse_empty():
    with pytest.raises(ExprSyntaxError):
        parse_expression("   ")


def test_parse_randc_rejects_noncentered_law():
    with pytest.raises(ExprSyntaxError):
        parse_expression("randc(gaussian(1,1),n,n)")


def test_rand_with_centered_law_is_centered():
    e = parse_expression(f"rand({G},n,n)")
    assert e.factors[0].centered


def test_round_trip_examples():
    texts = [
        "one(2,3) * one(3,4)",
        f"randc({G},n,n)",
        f"one(m,n0) * randc({G},n0,n1) * randc(rademacher,n1,n2)",
        "rand(gaussian(1,2),a,b) * one(b,c)",
        "3.0 * one(2,4)",
        "randc(std(uniform_sym(1)),n,n)",
    ]
    for text in texts:
        e = parse_expression(text)
        assert parse_expression(format_expr(e)) == e


@st.composite
def expressions(draw):
    n_factors = draw(st.integers(1, 4))
    dims = ["n0", "n1", "n2", "n3", "n4"]
    factors = []
    for i in range(n_factors):
        rows, cols = dims[i], dims[i + 1]
        kind = draw(st.sampled_from(["one", "gauss", "rad", "uni", "noncentered"]))
        if kind == "one":
            factors.append(one_factor(rows, cols))
        elif kind == "gauss":
            factors.append(random_factor(standard_gaussian(), rows, cols))
        elif kind == "rad":
            factors.append(random_factor(rademacher(), rows, cols))
        elif kind == "uni":
            factors.append(random_factor(uniform_sym(1.5), rows, cols))
        else:
            factors.append(random_factor(gaussian(draw(st.sampled_from([-2.0, 1.0, 3.0])), 1.0), rows, cols))
    return expression(factors)


@settings(max_examples=60, deadline=None)
@given(expressions())
def test_print_parse_round_trip(e):
    assert parse_expression(format_expr(e)) == e


# -- canonicalize ---------------------------------------------------------------


def test_canonicalize_triple_ones():
    c = canonicalize(parse_expression("one(2,3) * one(3,4) * one(4,5)"))
    assert c.coeff.scalar == 12.0
    assert len(c.factors) == 1
    assert (c.factors[0].rows, c.factors[0].cols) == (2, 5)


def test_canonicalize_symbolic_inner_dim():
    c = canonicalize(parse_expression("one(m,n0) * one(n0,n1)"))
    assert c.coeff.dim_powers == (("n0", 1),)
    assert len(c.factors) == 1


def test_canonicalize_leaves_single_random():
    e = parse_expression(f"randc({G},n,n)")
    assert canonicalize(e) == e


@settings(max_examples=60, deadline=None)
@given(expressions())
def test_canonicalize_idempotent(e):
    once = canonicalize(e)
    assert canonicalize(once) == once
    assert once.is_canonical


@settings(max_examples=30, deadline=None)
@given(expressions(), st.integers(0, 2**32 - 1))
def test_canonicalize_preserves_instantiation(e, seed):
    dims = {s: 2 + (hash(s) % 3) for s in e.symbols()}
    mats_raw = instantiate_factors(e, dims, stream(seed, 0))
    mats_canon = instantiate_factors(canonicalize(e), dims, stream(seed, 0))
    lhs = e.coeff.evaluate(dims) * matmul_chain(mats_raw).a
    c = canonicalize(e)
    rhs = c.coeff.evaluate(dims) * matmul_chain(mats_canon).a
    assert np.allclose(lhs, rhs, rtol=1e-9)


# -- decompose -------------------------------------------------------------------


def test_decompose_all_centered_is_identity():
    e = parse_expression(f"randc({G},a,b) * randc(rademacher,b,c)")
    terms = decompose_noncentered(e)
    assert terms == [(1.0, e)]


def test_decompose_single_noncentered():
    e = parse_expression("rand(gaussian(2,1),a,b)")
    terms = decompose_noncentered(e)
    assert len(terms) == 2
    (c0, t0), (c1, t1) = terms
    assert (c0, c1) == (1.0, 2.0)
    assert t0.factors[0].is_random and t0.factors[0].centered
    assert t1.factors[0].is_one


def test_decompose_two_factor_coefficients_and_patterns():
    e = parse_expression("rand(gaussian(3,1),a,b) * rand(gaussian(-2,1),b,c)")
    terms = decompose_noncentered(e)
    coeffs = [c for c, _ in terms]
    assert coeffs == [1.0, -2.0, 3.0, -6.0]
    patterns = ["".join("1" if f.is_one else "C" for f in t.factors) for _, t in terms]
    assert patterns == ["CC", "C1", "1C", "1"]  # the 11 term canonicalizes to one block


def test_decompose_term_count_is_power_of_two():
    e = parse_expression(
        "rand(gaussian(1,1),a,b) * randc(rademacher,b,c) * rand(gaussian(2,1),c,d)"
    )
    assert len(decompose_noncentered(e)) == 4


def test_decompose_recombines_exactly():
    e = parse_expression("rand(gaussian(2,1),p,q) * rand(gaussian(-1,3),q,r)")
    dims = {"p": 5, "q": 7, "r": 4}
    base = canonicalize(e)
    for seed in range(25):
        # couple the terms to shared standardized draws, one per original factor
        draws = [
            pn.standardize(f.law).sample_array(stream(seed, i), (dims[f.rows], dims[f.cols]))
            for i, f in enumerate(base.factors)
        ]
        original = [f.law.mean + f.law.std * z for f, z in zip(base.factors, draws)]
        lhs = original[0] @ original[1]
        rhs = np.zeros_like(lhs)
        for coeff, term in decompose_noncentered(e):
            mats = []
            for i, f in enumerate(term.factors):
                shape = (dims[f.rows], dims[f.cols])
                mats.append(draws[i] if f.is_random else np.ones(shape))
            acc = mats[0]
            for m in mats[1:]:
                acc = acc @ m
            rhs += coeff * term.coeff.evaluate(dims) * acc
        assert np.allclose(lhs, rhs, rtol=1e-9)


def test_decompose_zero_variance_factor_collapses():
    e = parse_expression("rand(gaussian(2,0),a,b) * randc(rademacher,b,c)")
    terms = decompose_noncentered(e)
    assert len(terms) == 1
    coeff, term = terms[0]
    assert coeff == 2.0
    assert term.factors[0].is_one


# -- split at interior ones --------------------------------------------------------


def test_split_no_interior_ones_single_base():
    e = parse_expression(f"randc({G},a,b) * randc({G},b,c)")
    res = split_at_ones(e)
    assert res.coeff.is_unit
    assert res.bases == (e,)


def test_split_basic_shape():
    e = parse_expression(f"randc({G},n0,n1) * one(n1,n2) * randc({G},n2,n3)")
    res = split_at_ones(e)
    assert res.coeff.dim_powers == (("n2", -1),)
    assert [format_expr(b) for b in res.bases] == [
        f"randc({G},n0,n1) * one(n1,n2)",
        f"one(n2,n2) * randc({G},n2,n3)",
    ]


def test_split_one_flanked_pair():
    e = parse_expression(
        f"one(a,b) * randc({G},b,c) * one(c,d) * randc({G},d,f) * one(f,g)"
    )
    res = split_at_ones(e)
    tags = [classify_base_case(b) for b in res.bases]
    assert tags == [BaseCase.ONE_BOTH_ENDS, BaseCase.ONE_BOTH_ENDS]


def test_split_requires_centered():
    with pytest.raises(ValueError):
        split_at_ones(parse_expression("rand(gaussian(1,1),a,b) * one(b,c) * randc(rademacher,c,d)"))


def _norm_of_split(e, dims, seed):
    """Instantiate once, evaluate both sides of the norm factorization."""
    ce = canonicalize(e)
    mats = instantiate_factors(ce, dims, stream(seed, 0))
    by_id = {id(f): m for f, m in zip(ce.factors, mats)}
    res = split_at_ones(ce)
    lhs = abs(ce.coeff.evaluate(dims)) * inf_op_norm(matmul_chain(mats))
    rhs = abs(res.coeff.evaluate(dims))
    for b in res.bases:
        ms = []
        for f in b.factors:
            if id(f) in by_id:
                ms.append(by_id[id(f)])
            else:
                rows = f.rows if isinstance(f.rows, int) else dims[f.rows]
                cols = f.cols if isinstance(f.cols, int) else dims[f.cols]
                ms.append(one_matrix(rows, cols))
        rhs *= inf_op_norm(matmul_chain(ms))
    return lhs, rhs


@pytest.mark.parametrize(
    "text",
    [
        f"randc({G},a,b) * one(b,c) * randc({G},c,d)",
        f"one(a,b) * randc({G},b,c) * one(c,d) * randc(rademacher,d,f) * one(f,g)",
        f"randc(uniform_sym(1.7),a,b) * one(b,c) * randc({G},c,d) * one(d,f) * randc({G},f,g)",
        f"2.5 * randc({G},a,b) * one(b,c) * randc({G},c,d)",
    ],
)
def test_split_norm_identity_100_instantiations(text):
    e = parse_expression(text)
    dims = {s: 3 + (i * 5) % 11 for i, s in enumerate(sorted(e.symbols()))}
    for seed in range(100):
        lhs, rhs = _norm_of_split(e, dims, seed)
        assert lhs == pytest.approx(rhs, rel=1e-9)


# -- classification ----------------------------------------------------------------


@pytest.mark.parametrize(
    "text,tag",
    [
        (f"randc({G},a,b) * randc({G},b,c)", BaseCase.CENTERED),
        (f"one(m,a) * randc({G},a,b) * randc({G},b,c)", BaseCase.STARTS_WITH_ONE),
        (f"one(m,a) * randc({G},a,b) * one(b,c)", BaseCase.ONE_BOTH_ENDS),
        (f"randc({G},a,b) * one(b,c)", BaseCase.ENDS_WITH_ONE),
        ("one(m,n)", BaseCase.PURE_ONE),
        (f"randc({G},m,n)", BaseCase.SINGLE_MATRIX),
    ],
)
def test_classify(text, tag):
    assert classify_base_case(parse_expression(text)) == tag


def test_classify_rejects_interior_ones():
    with pytest.raises(ValueError):
        classify_base_case(parse_expression(f"randc({G},a,b) * one(b,c) * randc({G},c,d)"))
