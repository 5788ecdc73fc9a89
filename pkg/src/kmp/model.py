"""The KMP predictor: kernelized prediction from a reference database.

Fitting factorizes the regularized block Gram system K + lam * Sigma once;
after that mean prediction is a cross-kernel product with cached weights and
covariance prediction is one triangular solve per query:

    mean(s*) = k*(s*) (K + lam Sigma)^-1 mu
    cov(s*)  = (N / lam) * (k(s*, s*) - k*(s*) (K + lam Sigma)^-1 k*(s*)^T)

Models are immutable once fitted; adaptation returns new fitted models.
"""

from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import block_diag, cho_factor, cho_solve
from scipy.spatial.distance import cdist
from sklearn.base import BaseEstimator

from .errors import FactorizationError, NumericalError, ValidationError
from .kernels import KernelSpec
from .reference import DesiredPoint, ReferenceDatabase, update_database
from .validation import as_points

# Covariance eigenvalues may dip this far below zero from roundoff before the
# prediction is considered broken; anything above is clipped to PSD.
_COV_EIG_FLOOR = -1e-9


@dataclass(frozen=True)
class TimeScale:
    """Monotonic reparameterization of query time.

    Maps the new duration [0, duration_dst] onto the trained duration
    [0, duration_src]; the default mapping is linear. Custom mappings must
    hit both endpoints within 1e-12 and be strictly increasing.
    """

    duration_src: float
    duration_dst: float
    mapping: object = None
    _scale: float = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if not (self.duration_src > 0 and self.duration_dst > 0):
            raise ValidationError("durations must be positive")
        object.__setattr__(self, "_scale", self.duration_src / self.duration_dst)
        if self.mapping is not None:
            if not callable(self.mapping):
                raise ValidationError("mapping must be callable")
            ends = np.array([self(0.0), self(self.duration_dst)])
            if abs(ends[0]) > 1e-12 or abs(ends[1] - self.duration_src) > 1e-12:
                raise ValidationError(
                    "mapping must send 0 to 0 and duration_dst to duration_src"
                )
            grid = self(np.linspace(0.0, self.duration_dst, 1000))
            if np.any(np.diff(grid) <= 0):
                raise ValidationError("mapping must be strictly increasing")

    def __call__(self, t):
        t = np.asarray(t, dtype=float)
        if self.mapping is None:
            return t * self._scale
        return np.asarray(self.mapping(t), dtype=float)


class KMP(BaseEstimator):
    """Kernelized movement primitive regressor.

    Parameters
    ----------
    kernel : KernelSpec, defaults to a unit-length-scale Gaussian kernel.
    lam : ridge factor lambda > 0 weighting the reference covariances in the
        regularizer.
    """

    def __init__(self, kernel=None, lam=1.0):
        self.kernel = kernel
        self.lam = lam

    # -- fitting ----------------------------------------------------------

    def fit(self, X, y=None, y_cov=None):
        """Fit from a ReferenceDatabase, or from arrays.

        Array form: X (N, I) inputs, y (N, O) target means, y_cov (N, O, O)
        covariances (identity per point when omitted, which reduces the mean
        to plain Gaussian process regression with noise ``lam``).
        """
        if isinstance(X, ReferenceDatabase):
            if y is not None or y_cov is not None:
                raise ValidationError("pass either a database or arrays, not both")
            db = X
        else:
            X = as_points(X, name="X")
            if y is None:
                raise ValidationError("y is required when X is an array")
            y = as_points(y, name="y")
            if y_cov is None:
                y_cov = np.broadcast_to(
                    np.eye(y.shape[1]), (y.shape[0], y.shape[1], y.shape[1])
                )
            db = ReferenceDatabase(X, y, y_cov)

        if not np.isscalar(self.lam) or not self.lam > 0:
            raise ValidationError("lam must be a positive scalar")
        kern = self.kernel if self.kernel is not None else KernelSpec()
        if not isinstance(kern, KernelSpec):
            raise ValidationError("kernel must be a KernelSpec")
        if kern.derivative_mode:
            if db.input_dim != 1:
                raise ValidationError("derivative_mode requires scalar time input")
            if db.output_dim % 2:
                raise ValidationError(
                    "derivative_mode expects stacked (position, velocity) outputs "
                    f"of even dimension, got {db.output_dim}"
                )
            base_dim = db.output_dim // 2
        else:
            base_dim = db.output_dim
        if kern.block_dim(base_dim) != db.output_dim:
            raise NumericalError("kernel block size disagrees with database outputs")

        gram = kern.gram(db.inputs, base_dim)
        sigma = block_diag(*db.covariances)
        system = gram + self.lam * sigma
        system = 0.5 * (system + system.T)
        self.database_ = db
        self.kernel_ = kern
        self._base_dim = base_dim
        self._factor = self._factorize(system, db)
        self._weights = cho_solve(self._factor, db.means.ravel())
        return self

    @staticmethod
    def _factorize(system, db):
        try:
            return cho_factor(system, lower=True)
        except np.linalg.LinAlgError:
            pass
        jitter = 1e-10 * np.trace(system) / system.shape[0]
        try:
            return cho_factor(system + jitter * np.eye(system.shape[0]), lower=True)
        except np.linalg.LinAlgError as exc:
            dists = cdist(db.inputs, db.inputs)
            np.fill_diagonal(dists, np.inf)
            i, j = np.unravel_index(np.argmin(dists), dists.shape)
            raise FactorizationError(
                "regularized Gram matrix is not positive definite even after "
                f"jitter {jitter:.3e}; closest input pair is ({i}, {j}) at "
                f"distance {dists[i, j]:.3e}"
            ) from exc

    def _check_fitted(self):
        if not hasattr(self, "database_"):
            raise ValidationError("model is not fitted")

    @property
    def input_dim_(self):
        self._check_fitted()
        return self.database_.input_dim

    @property
    def output_dim_(self):
        self._check_fitted()
        return self.database_.output_dim

    # -- prediction -------------------------------------------------------

    def predict(self, X):
        """Predicted output means at the query inputs, shape (Q, O)."""
        self._check_fitted()
        X = as_points(X, dim=self.database_.input_dim, name="X")
        cross = self.kernel_.cross(X, self.database_.inputs, self._base_dim)
        return (cross @ self._weights).reshape(X.shape[0], self.database_.output_dim)

    def predict_cov(self, X):
        """Predicted full output covariances at the queries, shape (Q, O, O)."""
        self._check_fitted()
        X = as_points(X, dim=self.database_.input_dim, name="X")
        o = self.database_.output_dim
        scale = len(self.database_) / self.lam
        cross = self.kernel_.cross(X, self.database_.inputs, self._base_dim)
        solved = cho_solve(self._factor, cross.T)
        covs = np.empty((X.shape[0], o, o))
        for q in range(X.shape[0]):
            rows = slice(q * o, (q + 1) * o)
            head = self.kernel_.self_block(X[q], self._base_dim)
            raw = scale * (head - cross[rows] @ solved[:, rows])
            covs[q] = self._repair_cov(0.5 * (raw + raw.T))
        return covs

    @staticmethod
    def _repair_cov(cov):
        eigvals = np.linalg.eigvalsh(cov)
        low = eigvals[0]
        if low < _COV_EIG_FLOOR * max(1.0, abs(eigvals[-1])):
            raise NumericalError(
                f"predicted covariance has eigenvalue {low:.3e} below the floor"
            )
        if low < 0.0:
            cov = cov + (-low) * np.eye(cov.shape[0])
        return cov

    def predict_dist(self, X):
        """(means, covariances) at the query inputs."""
        return self.predict(X), self.predict_cov(X)

    def predict_time_scaled(self, scale, t):
        """Predict at time-scale-modulated queries tau(t).

        Only valid for scalar time input; t must lie inside
        [0, scale.duration_dst].
        """
        self._check_fitted()
        if self.database_.input_dim != 1:
            raise ValidationError("time scaling requires scalar time input")
        if not isinstance(scale, TimeScale):
            raise ValidationError("scale must be a TimeScale")
        t = np.atleast_1d(np.asarray(t, dtype=float))
        if np.any(t < 0.0) or np.any(t > scale.duration_dst):
            raise ValidationError(
                f"queries must lie in [0, {scale.duration_dst}]"
            )
        mapped = scale(t).reshape(-1, 1)
        return self.predict(mapped), self.predict_cov(mapped)

    # -- adaptation -------------------------------------------------------

    def adapted(self, points, zeta=None, distance=None):
        """New model whose database absorbed the desired points in order."""
        self._check_fitted()
        db = self.database_
        pts = [points] if isinstance(points, DesiredPoint) else list(points)
        for point in pts:
            db = update_database(db, point, zeta=zeta, distance=distance)
        return KMP(kernel=self.kernel_, lam=self.lam).fit(db)

    # -- serialization ----------------------------------------------------

    def to_dict(self):
        self._check_fitted()
        doc = {
            "version": 1,
            "input_dim": int(self.database_.input_dim),
            "output_dim": int(self.database_.output_dim),
            "lambda": float(self.lam),
            "kernel": self.kernel_.to_dict(),
        }
        doc.update(self.database_.to_dict())
        return doc

    @classmethod
    def from_dict(cls, data):
        if data.get("version") != 1:
            raise ValidationError(f"unsupported model version {data.get('version')!r}")
        db = ReferenceDatabase.from_dict(
            data, int(data["input_dim"]), int(data["output_dim"])
        )
        return cls(kernel=KernelSpec.from_dict(data["kernel"]), lam=float(data["lambda"])).fit(db)


def position_desired_point(s, position, model=None, position_var=1e-6, velocity_var=1e4):
    """Desired point from a position constraint alone.

    For derivative-mode models the velocity half is completed with zero mean
    and a large variance so it stays effectively unconstrained; otherwise the
    point constrains the full output.
    """
    position = np.atleast_1d(np.asarray(position, dtype=float))
    o = position.shape[0]
    if model is not None and model.kernel_.derivative_mode:
        mean = np.concatenate([position, np.zeros(o)])
        cov = np.diag(np.concatenate([np.full(o, position_var), np.full(o, velocity_var)]))
    else:
        mean = position
        cov = position_var * np.eye(o)
    return DesiredPoint(np.atleast_1d(np.asarray(s, dtype=float)), mean, cov)
