"""Input validation helpers used across the estimators.

All array-accepting entry points funnel through these so that shape and
finiteness errors surface as :class:`ValidationError` with a usable message
instead of a numpy broadcast failure three frames deeper.
"""

import numpy as np
from scipy.linalg import cho_factor

from .errors import NumericalError, ValidationError

# Relative asymmetry tolerated before a covariance is considered caller error.
SYMMETRY_RTOL = 1e-12


def as_float_array(x, name="array"):
    """Convert to a float64 ndarray, rejecting non-finite entries."""
    arr = np.asarray(x, dtype=float)
    if arr.size and not np.all(np.isfinite(arr)):
        raise ValidationError(f"{name} contains non-finite entries")
    return arr


def check_vector(x, dim=None, name="vector"):
    arr = as_float_array(x, name)
    if arr.ndim != 1:
        raise ValidationError(f"{name} must be 1-D, got shape {arr.shape}")
    if dim is not None and arr.shape[0] != dim:
        raise ValidationError(f"{name} must have dimension {dim}, got {arr.shape[0]}")
    return arr


def check_matrix(x, shape=None, name="matrix"):
    arr = as_float_array(x, name)
    if arr.ndim != 2:
        raise ValidationError(f"{name} must be 2-D, got shape {arr.shape}")
    if shape is not None and arr.shape != tuple(shape):
        raise ValidationError(f"{name} must have shape {tuple(shape)}, got {arr.shape}")
    return arr


def as_points(x, dim=None, name="X"):
    """Coerce a query/input set to shape (n_points, dim).

    Accepts a single point (1-D) or a stack of points (2-D). Scalars are
    treated as one 1-D point, which keeps time-driven call sites terse.
    """
    arr = as_float_array(x, name)
    if arr.ndim == 0:
        arr = arr.reshape(1, 1)
    elif arr.ndim == 1:
        # With a known 1-D input space, a flat array is a batch of queries;
        # otherwise it is a single point.
        arr = arr.reshape(-1, 1) if dim == 1 else arr.reshape(1, -1)
    if arr.ndim != 2:
        raise ValidationError(f"{name} must be at most 2-D, got shape {np.shape(x)}")
    if dim is not None and arr.shape[1] != dim:
        raise ValidationError(
            f"{name} must have {dim} column(s), got shape {arr.shape}"
        )
    return arr


def check_square(x, name="matrix"):
    arr = check_matrix(x, name=name)
    if arr.shape[0] != arr.shape[1]:
        raise ValidationError(f"{name} must be square, got shape {arr.shape}")
    return arr


def symmetrize(mat, name="covariance"):
    """Return 0.5 (M + M^T) after rejecting asymmetry beyond tolerance."""
    mat = check_square(mat, name=name)
    scale = np.abs(mat).max() if mat.size else 0.0
    asym = np.abs(mat - mat.T).max() if mat.size else 0.0
    if asym > SYMMETRY_RTOL * max(scale, 1e-300):
        raise ValidationError(
            f"{name} is not symmetric: max|M - M^T| = {asym:.3e} "
            f"exceeds {SYMMETRY_RTOL:.0e} * max|M| = {SYMMETRY_RTOL * scale:.3e}"
        )
    return 0.5 * (mat + mat.T)


def ensure_spd(mat, name="covariance"):
    """Symmetrize and repair a matrix so that Cholesky succeeds.

    Repair policy: one shot of jitter eps*I with eps = 1e-10 * trace/d when
    the first factorization fails; a second failure is a hard error.
    """
    sym = symmetrize(mat, name=name)
    try:
        cho_factor(sym, lower=True)
        return sym
    except np.linalg.LinAlgError:
        pass
    d = sym.shape[0]
    eps = 1e-10 * np.trace(sym) / d
    if not eps > 0:
        raise NumericalError(f"{name} is not positive definite and has no usable trace")
    repaired = sym + eps * np.eye(d)
    try:
        cho_factor(repaired, lower=True)
    except np.linalg.LinAlgError as exc:
        raise NumericalError(
            f"{name} is not positive definite even after jitter {eps:.3e}"
        ) from exc
    return repaired


def spd_cholesky(mat, name="covariance"):
    """Lower Cholesky factor of an (already validated) SPD matrix."""
    try:
        return np.linalg.cholesky(mat)
    except np.linalg.LinAlgError as exc:
        raise NumericalError(f"{name} lost positive definiteness") from exc
