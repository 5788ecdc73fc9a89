"""Gaussian distribution algebra: conditioning, scaled products, densities.

Every probabilistic quantity in the toolkit (reference points, regression
outputs, predictions, desired points) is a :class:`Gaussian`, so the
operations here are the shared currency of all other modules. Instances are
immutable and all operations are pure.
"""

from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import cho_solve, solve_triangular

from .errors import ConditioningError, ValidationError
from .validation import as_float_array, check_matrix, check_vector, ensure_spd, spd_cholesky

_LOG_2PI = np.log(2.0 * np.pi)

# Condition-number ceiling for the input block when conditioning.
CONDITION_NUMBER_MAX = 1e12


@dataclass(frozen=True)
class Gaussian:
    """Multivariate normal with mean vector and SPD covariance.

    The covariance is symmetrized at construction and repaired with a single
    trace-scaled jitter if its Cholesky factorization fails; a second failure
    raises. Arrays are copied and frozen so instances are safe to share.
    """

    mean: np.ndarray
    cov: np.ndarray
    _chol: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        mean = check_vector(self.mean, name="mean")
        cov = ensure_spd(check_matrix(self.cov, name="cov"), name="cov")
        if cov.shape[0] != mean.shape[0]:
            raise ValidationError(
                f"mean has dimension {mean.shape[0]} but cov is {cov.shape}"
            )
        chol = spd_cholesky(cov, name="cov")
        for name, arr in (("mean", mean), ("cov", cov), ("_chol", chol)):
            arr = np.array(arr)
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    @property
    def dim(self):
        return self.mean.shape[0]

    def marginal(self, idx):
        """Marginal over the given index list."""
        idx = np.atleast_1d(np.asarray(idx, dtype=int))
        return Gaussian(self.mean[idx], self.cov[np.ix_(idx, idx)])


def condition(joint, n_inputs, query):
    """Condition a joint Gaussian on its first ``n_inputs`` coordinates.

    Returns the Gaussian of the trailing block given that the leading block
    equals ``query``:

        N(mu_out + C_os C_ss^-1 (query - mu_in),
          C_oo - C_os C_ss^-1 C_so)
    """
    if not isinstance(joint, Gaussian):
        raise ValidationError("joint must be a Gaussian")
    d = joint.dim
    if not 1 <= n_inputs < d:
        raise ValidationError(
            f"n_inputs must be in [1, {d - 1}] for a {d}-dimensional joint"
        )
    query = check_vector(query, dim=n_inputs, name="query")

    s = slice(0, n_inputs)
    o = slice(n_inputs, d)
    c_ss = joint.cov[s, s]
    c_os = joint.cov[o, s]
    if np.linalg.cond(c_ss) > CONDITION_NUMBER_MAX:
        raise ConditioningError(
            "input block of the joint covariance is numerically singular "
            f"(condition number above {CONDITION_NUMBER_MAX:.0e})"
        )
    try:
        chol = np.linalg.cholesky(c_ss)
    except np.linalg.LinAlgError as exc:
        raise ConditioningError("input block of the joint covariance is not SPD") from exc

    # Gain = C_os C_ss^-1 via two triangular solves; no explicit inverse.
    half = solve_triangular(chol, c_os.T, lower=True)
    mean = joint.mean[o] + half.T @ solve_triangular(
        chol, query - joint.mean[s], lower=True
    )
    cov = joint.cov[o, o] - half.T @ half
    return Gaussian(mean, ensure_spd(cov, name="conditional covariance"))


def scaled_product(gaussians, priorities):
    """Product of Gaussians with priority-inflated covariances.

    Each factor contributes N(mean_l, cov_l / gamma_l); the result has
    precision sum_l (cov_l/gamma_l)^-1 and the matching precision-weighted
    mean. Priorities must lie strictly inside (0, 1) and sum to 1 within
    1e-9; they are never renormalized here, so a bad sum is the caller's bug
    to fix.
    """
    gaussians = list(gaussians)
    priorities = as_float_array(priorities, name="priorities")
    if priorities.ndim != 1 or len(gaussians) != priorities.shape[0]:
        raise ValidationError("need one priority per Gaussian")
    if not gaussians:
        raise ValidationError("need at least one Gaussian")
    for g in gaussians:
        if not isinstance(g, Gaussian):
            raise ValidationError("all factors must be Gaussian instances")
    dim = gaussians[0].dim
    if any(g.dim != dim for g in gaussians):
        raise ValidationError("all factors must share one dimension")
    if np.any(priorities <= 0.0) or np.any(priorities >= 1.0):
        raise ValidationError("priorities must lie strictly inside (0, 1)")
    total = priorities.sum()
    if abs(total - 1.0) > 1e-9:
        raise ValidationError(
            f"priorities must sum to 1 within 1e-9, got {total!r}"
        )

    eye = np.eye(dim)
    precision = np.zeros((dim, dim))
    weighted = np.zeros(dim)
    for g, gamma in zip(gaussians, priorities):
        chol = spd_cholesky(g.cov / gamma, name="scaled covariance")
        precision += cho_solve((chol, True), eye)
        weighted += cho_solve((chol, True), g.mean)
    chol_p = spd_cholesky(ensure_spd(precision, name="product precision"))
    cov = cho_solve((chol_p, True), eye)
    mean = cho_solve((chol_p, True), weighted)
    return Gaussian(mean, ensure_spd(cov, name="product covariance"))


def log_density(g, x):
    """log N(x | g.mean, g.cov)."""
    if not isinstance(g, Gaussian):
        raise ValidationError("g must be a Gaussian")
    x = check_vector(x, dim=g.dim, name="x")
    resid = solve_triangular(g._chol, x - g.mean, lower=True)
    log_det = 2.0 * np.sum(np.log(np.diag(g._chol)))
    return -0.5 * (g.dim * _LOG_2PI + log_det + resid @ resid)
