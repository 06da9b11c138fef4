"""Dense matrices, chain products, and exact max-row-sum operator norms.

The norm computed throughout is the one induced by the sup norm on vectors:
``sup_{|x|_inf <= 1} |Ax|_inf``, which equals the maximum over rows of the
row's l1 norm.  Its dual (max column l1 sum) is the norm induced by the l1
vector norm.  ``brute_force_inf_norm`` evaluates the sup definition directly
by enumerating sign vectors and serves as the independent oracle for the
closed form.
"""

from __future__ import annotations

import numpy as np

from . import backend


class Matrix:
    """Immutable dense rectangular matrix of 64-bit floats.

    Entries are stored row-major (C order); the underlying array is marked
    read-only so instances are safe to share across threads.
    """

    __slots__ = ("a",)

    def __init__(self, entries):
        a = np.array(entries, dtype=np.float64, order="C", copy=True)
        if a.ndim != 2:
            raise ValueError(f"matrix must be 2-dimensional, got shape {a.shape}")
        if a.shape[0] < 1 or a.shape[1] < 1:
            raise ValueError(f"matrix dimensions must be positive, got {a.shape}")
        if not np.isfinite(a).all():
            raise ValueError("matrix entries must be finite")
        a.setflags(write=False)
        object.__setattr__(self, "a", a)

    def __setattr__(self, name, value):
        raise AttributeError("Matrix is immutable")

    @property
    def rows(self) -> int:
        return self.a.shape[0]

    @property
    def cols(self) -> int:
        return self.a.shape[1]

    def transpose(self) -> "Matrix":
        return Matrix(self.a.T)

    def scaled(self, c: float) -> "Matrix":
        return Matrix(c * self.a)

    def __eq__(self, other):
        return isinstance(other, Matrix) and np.array_equal(self.a, other.a)

    def __repr__(self):
        return f"Matrix({self.rows}x{self.cols})"


def one_matrix(m: int, n: int) -> Matrix:
    """The m-by-n matrix with every entry equal to 1."""
    if m < 1 or n < 1:
        raise ValueError(f"one_matrix dimensions must be positive, got ({m}, {n})")
    return Matrix(np.ones((m, n)))


def identity(n: int) -> Matrix:
    return Matrix(np.eye(n))


def inf_op_norm(mat: Matrix) -> float:
    """Operator norm for the sup vector norm: max over rows of the row l1 sum."""
    return backend.inf_norm(mat.a)


def l1_op_norm(mat: Matrix) -> float:
    """Operator norm for the l1 vector norm: max over columns of the column l1 sum."""
    return backend.inf_norm(np.ascontiguousarray(mat.a.T))


def matmul_chain(ms: list[Matrix]) -> Matrix:
    """Left-to-right product of a nonempty chain of matrices.

    Evaluation order is strictly left to right, so the result is a pure
    function of the operand list.  A dimension mismatch names the 1-based
    index of the offending factor.
    """
    if not ms:
        raise ValueError("matmul_chain requires at least one matrix")
    acc = ms[0].a
    for idx, mat in enumerate(ms[1:], start=2):
        if acc.shape[1] != mat.rows:
            raise ValueError(
                f"dimension mismatch at factor {idx}: "
                f"{acc.shape[1]} columns followed by {mat.rows} rows"
            )
        acc = backend.matmul(acc, mat.a)
    return Matrix(acc)


_BRUTE_FORCE_MAX_COLS = 20
_BRUTE_FORCE_CHUNK = 1 << 14


def brute_force_inf_norm(mat: Matrix) -> float:
    """Oracle norm: max of |Ax|_inf over all sign vectors x in {-1, +1}^cols.

    The sup over the unit sup-norm ball is attained at a sign vector, so this
    enumeration equals the closed-form norm exactly.  Exponential in cols;
    rejected above 20 columns.
    """
    n = mat.cols
    if n > _BRUTE_FORCE_MAX_COLS:
        raise ValueError(
            f"brute force enumeration limited to {_BRUTE_FORCE_MAX_COLS} columns, got {n}"
        )
    total = 1 << n
    best = 0.0
    bits = np.arange(n, dtype=np.uint64)[:, None]
    for start in range(0, total, _BRUTE_FORCE_CHUNK):
        stop = min(start + _BRUTE_FORCE_CHUNK, total)
        codes = np.arange(start, stop, dtype=np.uint64)[None, :]
        signs = (((codes >> bits) & 1).astype(np.float64)) * 2.0 - 1.0
        images = mat.a @ signs
        best = max(best, float(np.abs(images).max()))
    return best
