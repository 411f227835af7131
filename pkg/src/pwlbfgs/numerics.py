"""Precision-parameterized scalars and the small amount of dense linear algebra
the solver needs.

Scalars are ``gmpy2.mpfr`` values (MPFR, round-to-nearest-even). Vectors and
matrices are numpy ``object`` arrays of such scalars, so elementwise loops run
in C while every individual operation stays correctly rounded under the active
context.
"""

from __future__ import annotations

import math
import threading
from dataclasses import dataclass
from typing import Iterable, NamedTuple, Sequence

import gmpy2
import numpy as np
from gmpy2 import mpfr

DEFAULT_BITS = 1664
MIN_BITS = 53

_LOG10_2 = math.log10(2.0)
_saved = threading.local()


class PrecisionError(ValueError):
    """Raised for invalid precision requests or values from a foreign context."""


@dataclass(frozen=True)
class PrecisionContext:
    """Binary floating-point context with a fixed mantissa width.

    Use as a context manager; all arithmetic for a run happens inside one
    ``with ctx:`` block.
    """

    mantissa_bits: int = DEFAULT_BITS

    def __post_init__(self):
        if not isinstance(self.mantissa_bits, int) or self.mantissa_bits < MIN_BITS:
            raise PrecisionError(
                f"mantissa_bits must be an integer >= {MIN_BITS}, got {self.mantissa_bits!r}"
            )

    @property
    def decimal_digits(self) -> float:
        return self.mantissa_bits * _LOG10_2

    @property
    def tolerance(self) -> mpfr:
        """Relative tolerance used for identity and strictness checks.

        ``10**-floor(0.9 * digits)``: 1e-450 at the default 1664 bits.
        """
        with self:
            return current_tolerance()

    def gmpy2_context(self) -> gmpy2.context:
        if self.mantissa_bits == 53:
            # exponent range and subnormals of binary64
            return gmpy2.ieee(64)
        return gmpy2.context(precision=self.mantissa_bits, round=gmpy2.RoundToNearest)

    def __enter__(self):
        _saved.__dict__.setdefault("stack", []).append(gmpy2.get_context())
        gmpy2.set_context(self.gmpy2_context())
        return self

    def __exit__(self, *exc):
        gmpy2.set_context(_saved.stack.pop())
        return False

    # -- conversions ---------------------------------------------------------

    def scalar(self, value) -> mpfr:
        """Round ``value`` (int, float, str, Fraction, mpfr) into this context."""
        with self:
            if isinstance(value, str):
                return mpfr(value.strip())
            if hasattr(value, "numerator") and hasattr(value, "denominator") and not isinstance(value, (int, float)):
                return mpfr(value.numerator) / mpfr(value.denominator)
            return mpfr(value)

    def vector(self, values: Iterable) -> np.ndarray:
        return np.array([self.scalar(v) for v in values], dtype=object)

    def matrix(self, rows: Iterable[Iterable]) -> np.ndarray:
        M = np.array([[self.scalar(v) for v in row] for row in rows], dtype=object)
        if M.ndim != 2:
            raise ValueError("matrix rows must have equal length")
        return M

    def check(self, *arrays) -> None:
        """Reject values created under a different precision."""
        for arr in arrays:
            for v in np.asarray(arr, dtype=object).ravel():
                if not isinstance(v, mpfr) or v.precision != self.mantissa_bits:
                    raise PrecisionError(
                        f"value {v!r} does not belong to a {self.mantissa_bits}-bit context"
                    )


def current_tolerance() -> mpfr:
    """Check tolerance for the active gmpy2 context (see ``PrecisionContext.tolerance``)."""
    digits = gmpy2.get_context().precision * _LOG10_2
    return mpfr(10) ** -int(0.9 * digits)


def make_context(mantissa_bits: int = DEFAULT_BITS) -> PrecisionContext:
    return PrecisionContext(mantissa_bits)


# -- vectors and matrices ------------------------------------------------------


def ones(n: int) -> np.ndarray:
    return np.array([mpfr(1) for _ in range(n)], dtype=object)


def unit(n: int, i: int = 0) -> np.ndarray:
    e = np.array([mpfr(0) for _ in range(n)], dtype=object)
    e[i] = mpfr(1)
    return e


def identity(n: int) -> np.ndarray:
    M = np.empty((n, n), dtype=object)
    for i in range(n):
        for j in range(n):
            M[i, j] = mpfr(1 if i == j else 0)
    return M


def dot(u: np.ndarray, v: np.ndarray):
    if u.shape != v.shape:
        raise ValueError(f"dimension mismatch: {u.shape} vs {v.shape}")
    return u @ v


def symmetrize(M: np.ndarray) -> np.ndarray:
    """Copy the upper triangle onto the lower one, so ``M[i,j] is M[j,i]``."""
    n = M.shape[0]
    il = np.tril_indices(n, -1)
    out = M.copy()
    out[il] = M.T[il]
    return out


def is_exactly_symmetric(M: np.ndarray) -> bool:
    n = M.shape[0]
    return all(M[i, j] == M[j, i] for i in range(n) for j in range(i + 1, n))


def quadratic_form(H: np.ndarray, u: np.ndarray, v: np.ndarray):
    """Return ``u^T H v``."""
    n = H.shape[0]
    if H.shape != (n, n) or u.shape != (n,) or v.shape != (n,):
        raise ValueError(f"dimension mismatch: H{H.shape}, u{u.shape}, v{v.shape}")
    return u @ (H @ v)


class SpdVerdict(NamedTuple):
    positive_definite: bool
    failed_pivot: int | None = None  # 1-based

    def __bool__(self):
        return self.positive_definite


def spd_check(H: np.ndarray) -> SpdVerdict:
    """Strict positive-definiteness test by unpivoted LDL^T factorization.

    No tolerance: a pivot must be strictly positive at working precision.
    """
    n = H.shape[0]
    L = np.empty((n, n), dtype=object)
    d = [None] * n
    for j in range(n):
        s = H[j, j]
        for k in range(j):
            s = s - L[j, k] * L[j, k] * d[k]
        if not s > 0:
            return SpdVerdict(False, j + 1)
        d[j] = s
        for i in range(j + 1, n):
            t = H[i, j]
            for k in range(j):
                t = t - L[i, k] * L[j, k] * d[k]
            L[i, j] = t / s
    return SpdVerdict(True)


def rank(rows: Sequence[np.ndarray]) -> int:
    """Row rank by Gaussian elimination with partial pivoting; zero means exactly zero."""
    if len(rows) == 0:
        return 0
    M = [list(r) for r in rows]
    m, n = len(M), len(M[0])
    r = 0
    for c in range(n):
        piv = max(range(r, m), key=lambda i: abs(M[i][c]), default=None)
        if piv is None or M[piv][c] == 0:
            continue
        M[r], M[piv] = M[piv], M[r]
        for i in range(r + 1, m):
            f = M[i][c] / M[r][c]
            if f != 0:
                M[i] = [a - f * b for a, b in zip(M[i], M[r])]
        r += 1
        if r == m:
            break
    return r


# -- random initial data ---------------------------------------------------------

_CHUNK = 21  # chunk products stay below 2**42, sums fit int64


def _exact_gram_ints(X: np.ndarray) -> tuple[np.ndarray, int]:
    """Exact ``X^T X`` for a float64 matrix as ``(G, e)`` with value ``G * 2**e``.

    ``G`` is an object array of Python ints. Every entry is written as a
    53-bit integer mantissa shifted onto a common exponent, split into 21-bit
    int64 chunks, and the chunk products are accumulated with numpy's integer
    matmul (exact while ``rows * chunks * 2**42 < 2**62``).
    """
    if not np.all(np.isfinite(X)):
        raise ValueError("non-finite sample")
    m, e = np.frexp(X)
    mant = (m * 2.0**53).astype(np.int64)  # exact
    nz = mant != 0
    e0 = int((e[nz] - 53).min()) if nz.any() else 0
    shift = np.where(nz, e - 53 - e0, 0).astype(np.int64)
    sign = np.where(mant < 0, -1, 1).astype(np.int64)
    mag = np.abs(mant)
    width = int((shift + 53).max())
    L = max(1, -(-width // _CHUNK))
    rows, cols = X.shape
    if rows * L * (1 << (2 * _CHUNK)) >= (1 << 62):
        Xi = np.empty(X.shape, dtype=object)
        for idx in np.ndindex(X.shape):
            Xi[idx] = int(mant[idx]) << int(shift[idx])
        return Xi.T @ Xi, 2 * e0
    mask = np.int64((1 << _CHUNK) - 1)
    chunks = []
    for j in range(L):
        d = _CHUNK * j - shift  # bit offset of this chunk inside mag
        right = (mag >> np.clip(d, 0, 63)) & mask
        left = (mag << np.clip(-d, 0, _CHUNK)) & mask
        chunks.append(sign * np.where(d >= 0, right, left))
    G = np.zeros((cols, cols), dtype=object)
    for t in range(2 * L - 1):
        T = np.zeros((cols, cols), dtype=np.int64)
        for j in range(max(0, t - L + 1), min(t, L - 1) + 1):
            T += chunks[j].T @ chunks[t - j]
        G += T.astype(object) * (1 << (_CHUNK * t))
    return G, 2 * e0


def gaussian_matrix(n: int, rng: np.random.Generator) -> np.ndarray:
    """``X^T X`` with ``X`` an ``n x n`` matrix of i.i.d. standard normals.

    The normals are binary64 draws. The Gram matrix is formed exactly in
    integer arithmetic and rounded once into the active context, so the result
    is symmetric to the last bit.
    """
    if n < 2:
        raise ValueError("n must be >= 2")
    X = rng.standard_normal((n, n))
    G, e = _exact_gram_ints(X)
    H = np.empty((n, n), dtype=object)
    for i in range(n):
        for j in range(i, n):
            H[i, j] = gmpy2.mul_2exp(mpfr(int(G[i, j])), e)
            H[j, i] = H[i, j]
    return H


def gaussian_vector(n: int, rng: np.random.Generator) -> np.ndarray:
    if n < 2:
        raise ValueError("n must be >= 2")
    return np.array([mpfr(float(v)) for v in rng.standard_normal(n)], dtype=object)


# -- serialization helpers ---------------------------------------------------


def to_decimal(x, digits: int = 30) -> str:
    if x is None:
        return ""
    return "{:.{d}g}".format(x, d=digits)


def to_hex(x) -> str:
    """Lossless ``[-]0x<mantissa>p<exp>`` encoding of an mpfr value."""
    if x is None:
        return ""
    if gmpy2.is_nan(x) or gmpy2.is_infinite(x):
        return str(x)
    if not isinstance(x, mpfr):
        x = mpfr(x)
    m, e = x.as_mantissa_exp()  # no re-rounding of mpfr input
    m, e = int(m), int(e)
    if m:
        tz = (m & -m).bit_length() - 1  # drop trailing zero bits
        m, e = m >> tz, e + tz
    sign = "-" if m < 0 else ""
    return f"{sign}0x{abs(m):x}p{e}"


def from_hex(s: str) -> mpfr:
    """Inverse of :func:`to_hex` (rounded into the active context)."""
    s = s.strip()
    neg = s.startswith("-")
    body = s[1:] if neg else s
    mant, _, exp = body[2:].partition("p")
    v = gmpy2.mul_2exp(mpfr(int(mant, 16)), int(exp))
    return -v if neg else v
