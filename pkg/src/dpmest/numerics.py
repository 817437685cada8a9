"""Special functions, small symmetric linear algebra, and seeded Gaussian streams.

Everything here is deterministic given its inputs; the rest of the package
builds on these primitives so that whole pipelines are bit-reproducible.
"""

import math

import numpy as np
from scipy import special

from .errors import RegularityError, ValidationError

__all__ = [
    "normal_cdf",
    "normal_pdf",
    "chi2_cdf",
    "chi2_pdf",
    "chi2_quantile",
    "chi2_sup_bound",
    "sym_check",
    "sym_solve",
    "sym_inverse",
    "sym_eigen_extremes",
    "sym_sqrt_psd",
    "GaussianStream",
    "gaussian_stream",
    "rng_stream",
]

MAX_SYM_DIM = 512
SINGULARITY_RTOL = 1e-12


def normal_cdf(x):
    """Standard normal cdf Phi(x), accurate to ~1e-15."""
    return special.ndtr(x)


def normal_pdf(x):
    """Standard normal density phi(x)."""
    return np.exp(-0.5 * np.square(x)) / math.sqrt(2.0 * math.pi)


def _check_df(k):
    if int(k) != k or k < 1:
        raise ValidationError(f"degrees of freedom must be a positive integer, got {k}")
    return int(k)


def chi2_cdf(k, x):
    """Chi-square cdf H_k(x) via the regularized lower incomplete gamma."""
    k = _check_df(k)
    x = np.asarray(x, dtype=float)
    out = np.where(x > 0, special.gammainc(k / 2.0, np.maximum(x, 0.0) / 2.0), 0.0)
    return float(out) if out.ndim == 0 else out


def chi2_pdf(k, x):
    """Chi-square density H_k'(x).

    For k=1 the density diverges at x=0; this returns the sentinel
    ``math.inf`` there rather than a spurious finite value.
    """
    k = _check_df(k)
    xs = np.asarray(x, dtype=float)
    scalar = xs.ndim == 0
    xs = np.atleast_1d(xs)
    out = np.zeros_like(xs)
    pos = xs > 0
    if np.any(pos):
        xp = xs[pos]
        log_pdf = (
            (k / 2.0 - 1.0) * np.log(xp)
            - xp / 2.0
            - (k / 2.0) * math.log(2.0)
            - special.gammaln(k / 2.0)
        )
        out[pos] = np.exp(log_pdf)
    zero = xs == 0
    if np.any(zero):
        if k == 1:
            out[zero] = math.inf
        elif k == 2:
            out[zero] = 0.5
        else:
            out[zero] = 0.0
    return float(out[0]) if scalar else out


def chi2_quantile(k, u):
    """Chi-square quantile H_k^{-1}(u) for u in [0, 1)."""
    k = _check_df(k)
    u = float(u)
    if not 0.0 <= u < 1.0:
        raise ValidationError(f"quantile argument must lie in [0,1), got {u}")
    if u == 0.0:
        return 0.0
    return 2.0 * float(special.gammaincinv(k / 2.0, u))


def chi2_sup_bound(k, n):
    """sup over z>0 of H_k'(n z^2) * z.

    Closed form ((k-1)/e)^{(k-1)/2} / (sqrt(n) 2^{k/2} Gamma(k/2)) with the
    convention 0^0 = 1 at k=1.
    """
    k = _check_df(k)
    if int(n) != n or n < 1:
        raise ValidationError(f"sample size must be a positive integer, got {n}")
    if k == 1:
        log_num = 0.0
    else:
        log_num = ((k - 1) / 2.0) * (math.log(k - 1.0) - 1.0)
    log_val = log_num - 0.5 * math.log(n) - (k / 2.0) * math.log(2.0) - special.gammaln(k / 2.0)
    return math.exp(log_val)


def sym_check(a):
    """Validate and return a square symmetric matrix as a float ndarray."""
    a = np.asarray(a, dtype=float)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValidationError(f"expected a square matrix, got shape {a.shape}")
    if a.shape[0] > MAX_SYM_DIM:
        raise ValidationError(f"dimension {a.shape[0]} exceeds the limit {MAX_SYM_DIM}")
    if not np.array_equal(a, a.T):
        raise ValidationError("matrix is not exactly symmetric")
    if not np.all(np.isfinite(a)):
        raise ValidationError("matrix has non-finite entries")
    return a


def symmetrize(a):
    """Return (A + A^T)/2, which is exactly symmetric in floating point."""
    a = np.asarray(a, dtype=float)
    s = a + a.T
    return s / 2.0


def _eigh(a):
    vals, vecs = np.linalg.eigh(sym_check(a))
    return vals, vecs


def _require_pd(vals, what):
    emax = float(np.max(np.abs(vals))) if vals.size else 0.0
    tol = SINGULARITY_RTOL * max(emax, 1.0)
    if float(np.min(vals)) <= tol:
        raise RegularityError(
            f"regularity check failed: {what} requires eigen_min > {tol:.3e}, "
            f"got {float(np.min(vals)):.3e}"
        )


def sym_solve(a, b):
    """Solve A x = b for symmetric positive definite A."""
    vals, vecs = _eigh(a)
    _require_pd(vals, "solve")
    b = np.asarray(b, dtype=float)
    return vecs @ ((vecs.T @ b).T / vals).T


def sym_inverse(a):
    """Inverse of a symmetric positive definite matrix (symmetric output)."""
    vals, vecs = _eigh(a)
    _require_pd(vals, "inverse")
    return symmetrize((vecs / vals) @ vecs.T)


def sym_eigen_extremes(a):
    """(eigen_min, eigen_max) of a symmetric matrix."""
    vals, _ = _eigh(a)
    return float(vals[0]), float(vals[-1])


def sym_sqrt_psd(a):
    """Symmetric PSD square root; requires positive definite input."""
    vals, vecs = _eigh(a)
    _require_pd(vals, "sqrt_psd")
    return symmetrize((vecs * np.sqrt(vals)) @ vecs.T)


def sym_inv_sqrt(a):
    """Symmetric inverse square root A^{-1/2}."""
    vals, vecs = _eigh(a)
    _require_pd(vals, "inverse square root")
    return symmetrize((vecs / np.sqrt(vals)) @ vecs.T)


_KEY_MASK = (1 << 64) - 1


def rng_stream(seed, stream_id=0):
    """Counter-based numpy Generator keyed by (seed, stream_id).

    Distinct (seed, stream_id) pairs give statistically independent streams;
    identical pairs reproduce the same sequence regardless of what other
    streams were consumed.
    """
    key = (int(seed) & _KEY_MASK) | ((int(stream_id) & _KEY_MASK) << 64)
    return np.random.Generator(np.random.Philox(key=key))


class GaussianStream:
    """Deterministic stream of standard normal draws.

    Two instances with the same (seed, stream_id) produce identical
    sequences; substreams with different stream ids are disjoint.
    """

    def __init__(self, seed, stream_id=0):
        self.seed = int(seed)
        self.stream_id = int(stream_id)
        self.counter = 0
        self._gen = rng_stream(seed, stream_id)

    def normal(self, size=None):
        n = 1 if size is None else int(np.prod(size))
        self.counter += n
        draws = self._gen.standard_normal(size=size)
        return draws

    def substream(self, offset):
        """A disjoint stream derived from this one."""
        return GaussianStream(self.seed, self.stream_id * 1000003 + 1 + int(offset))


def gaussian_stream(seed, stream_id=0):
    return GaussianStream(seed, stream_id)
