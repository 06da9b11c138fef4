import numpy as np
import pytest

from prodnorm import backend
from prodnorm.rng import stream

pytestmark = pytest.mark.skipif(
    "cython" not in backend.available_backends(),
    reason="compiled kernels not built",
)


@pytest.fixture
def both_backends():
    yield backend.available_backends()


def _random(shape, seed=0):
    return np.ascontiguousarray(stream(seed, 0).random(shape) * 2.0 - 1.0)


def test_matmul_agreement():
    a = _random((65, 130), 1)
    b = _random((130, 67), 2)
    previous = backend.use_backend("cython")
    try:
        compiled = backend.matmul(a, b)
        backend.use_backend("numpy")
        reference = backend.matmul(a, b)
    finally:
        backend.use_backend(previous)
    assert np.allclose(compiled, reference, rtol=1e-12, atol=1e-12)


def test_matmul_non_multiple_of_block():
    # exercise ragged tail blocks around the compile-time block size 64
    for m, k, n in [(1, 1, 1), (63, 64, 65), (64, 64, 64), (129, 3, 70)]:
        a, b = _random((m, k), m), _random((k, n), n)
        previous = backend.use_backend("cython")
        try:
            compiled = backend.matmul(a, b)
        finally:
            backend.use_backend(previous)
        assert np.allclose(compiled, a @ b, rtol=1e-12, atol=1e-12)


def test_inf_norm_agreement():
    a = _random((201, 33), 5)
    previous = backend.use_backend("cython")
    try:
        compiled = backend.inf_norm(a)
        backend.use_backend("numpy")
        reference = backend.inf_norm(a)
    finally:
        backend.use_backend(previous)
    assert compiled == pytest.approx(reference, rel=1e-12)


def test_abs_row_sums_agreement():
    a = _random((77, 91), 6)
    previous = backend.use_backend("cython")
    try:
        compiled = backend.abs_row_sums(a)
        backend.use_backend("numpy")
        reference = backend.abs_row_sums(a)
    finally:
        backend.use_backend(previous)
    assert np.allclose(compiled, reference, rtol=1e-12)


def test_matmul_dimension_mismatch_both():
    a, b = _random((4, 5)), _random((6, 4))
    for name in backend.available_backends():
        previous = backend.use_backend(name)
        try:
            with pytest.raises(ValueError):
                backend.matmul(a, b)
        finally:
            backend.use_backend(previous)


def test_compiled_matmul_repeatable_bitwise():
    a = _random((100, 100), 7)
    b = _random((100, 100), 8)
    previous = backend.use_backend("cython")
    try:
        first = backend.matmul(a, b)
        second = backend.matmul(a, b)
    finally:
        backend.use_backend(previous)
    assert np.array_equal(first, second)


def test_use_backend_rejects_unknown():
    with pytest.raises(ValueError):
        backend.use_backend("fortran")
