"""Simplex-safe elementary numerics shared by the rest of the package.

Everything here runs in float64. The two tolerance constants below are
used package-wide: ``SIMPLEX_ATOL`` when validating that a vector lies on
the probability simplex, ``LOG_EPS`` as the floor for log arguments (so
one-hot vectors are legal entropy inputs, with the 0*log(0) = 0
convention).
"""

import numpy as np

SIMPLEX_ATOL = 1e-9     # |sum(p) - 1| tolerance for probability vectors
LOG_EPS = 1e-12         # floor for log / power arguments
FD_STEP = 1e-5          # default central-difference step
GRAD_RTOL = 1e-5        # relative tolerance for gradient checks


def _as_float_array(z, name="input"):
    z = np.asarray(z, dtype=np.float64)
    if not np.all(np.isfinite(z)):
        raise ValueError(f"{name} contains non-finite entries")
    return z


def check_prob_vector(p, ndim_ok=(1,)):
    """Validate that ``p`` is on the probability simplex (K >= 2).

    Returns the validated float64 array. Raises ValueError for negative
    entries, sums off by more than SIMPLEX_ATOL, or K < 2. For 2-D input
    each row is checked.
    """
    p = _as_float_array(p, "probability vector")
    if p.ndim not in ndim_ok:
        raise ValueError(f"expected array with ndim in {ndim_ok}, got {p.ndim}")
    if p.shape[-1] < 2:
        raise ValueError("probability vectors need at least 2 classes")
    if np.any(p < 0):
        raise ValueError("probability vector has negative entries")
    sums = p.sum(axis=-1)
    if np.any(np.abs(sums - 1.0) > SIMPLEX_ATOL):
        raise ValueError("probability vector does not sum to 1")
    return p


def softmax(z):
    """Numerically stable softmax along the last axis.

    Stable for |z| up to ~1e4 via max-subtraction; shift-invariant.
    Raises ValueError on non-finite input.
    """
    z = _as_float_array(z, "logits")
    shifted = z - z.max(axis=-1, keepdims=True)
    ez = np.exp(shifted)
    return ez / ez.sum(axis=-1, keepdims=True)


def log_softmax(z):
    """log(softmax(z)) computed without forming the softmax explicitly."""
    z = _as_float_array(z, "logits")
    shifted = z - z.max(axis=-1, keepdims=True)
    return shifted - np.log(np.exp(shifted).sum(axis=-1, keepdims=True))


def log_sum_exp(z):
    """log(sum(exp(z))) over the last axis, overflow-safe."""
    z = _as_float_array(z, "logits")
    m = z.max(axis=-1, keepdims=True)
    out = m.squeeze(-1) + np.log(np.exp(z - m).sum(axis=-1))
    return float(out) if np.ndim(out) == 0 else out


def argmax_lowest(p):
    """Argmax along the last axis, ties broken by the lowest index."""
    return np.argmax(np.asarray(p), axis=-1)


def finite_diff_gradient(f, x, h=FD_STEP):
    """Central-difference gradient estimate of a scalar function.

    Args:
        f: scalar-valued function of a 1-D float vector.
        x: point at which to estimate the gradient.
        h: step size (> 0).

    Returns:
        array of the same shape as ``x`` with
        (f(x + h e_k) - f(x - h e_k)) / (2 h) per coordinate.

    Raises ValueError if h <= 0 or if f returns a non-finite value.
    """
    if h <= 0:
        raise ValueError("step size must be positive")
    x = np.asarray(x, dtype=np.float64)
    grad = np.empty_like(x)
    for k in range(x.size):
        xp = x.copy()
        xm = x.copy()
        xp.flat[k] += h
        xm.flat[k] -= h
        fp = float(f(xp))
        fm = float(f(xm))
        if not (np.isfinite(fp) and np.isfinite(fm)):
            raise ValueError(f"function returned non-finite value near coordinate {k}")
        grad.flat[k] = (fp - fm) / (2.0 * h)
    return grad


def relative_error(estimate, reference, floor=LOG_EPS):
    """Norm-ratio relative error ||a - b|| / max(||b||, floor)."""
    a = np.asarray(estimate, dtype=np.float64).ravel()
    b = np.asarray(reference, dtype=np.float64).ravel()
    denom = max(float(np.linalg.norm(b)), floor)
    return float(np.linalg.norm(a - b)) / denom
