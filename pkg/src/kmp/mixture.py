"""Joint Gaussian mixture fitting (EM) and mixture regression (GMR).

The estimator learns the joint density of (input, output) pairs pooled from
several demonstrations, then conditions it per query to produce the
probabilistic reference trajectory consumed by the KMP predictor.
"""

import warnings
from dataclasses import dataclass

import numpy as np
from scipy.linalg import solve_triangular
from scipy.spatial.distance import cdist
from scipy.special import logsumexp
from sklearn.base import BaseEstimator

from .errors import ComponentCollapseError, ExtrapolationWarning, NumericalError, ValidationError
from .gaussian import Gaussian
from .reference import ReferenceDatabase
from .validation import as_float_array, as_points, ensure_spd

_LOG_2PI = np.log(2.0 * np.pi)


@dataclass(frozen=True)
class DemoSet:
    """H aligned demonstrations of equal length N.

    inputs has shape (H, N, I) and outputs (H, N, O). At least two
    demonstrations are required; extracting variability from a single one is
    meaningless.
    """

    inputs: np.ndarray
    outputs: np.ndarray

    def __post_init__(self):
        inputs = as_float_array(self.inputs, name="inputs")
        outputs = as_float_array(self.outputs, name="outputs")
        if inputs.ndim != 3 or outputs.ndim != 3:
            raise ValidationError(
                "inputs and outputs must be (n_demos, length, dim) arrays"
            )
        if inputs.shape[:2] != outputs.shape[:2]:
            raise ValidationError(
                f"inputs {inputs.shape} and outputs {outputs.shape} disagree "
                "on demo count or length"
            )
        if inputs.shape[0] < 2:
            raise ValidationError("at least two demonstrations are required")
        for name, arr in (("inputs", inputs), ("outputs", outputs)):
            arr = np.array(arr)
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    @property
    def n_demos(self):
        return self.inputs.shape[0]

    @property
    def length(self):
        return self.inputs.shape[1]

    @property
    def input_dim(self):
        return self.inputs.shape[2]

    @property
    def output_dim(self):
        return self.outputs.shape[2]

    def stacked(self):
        """Pooled (H*N, I) inputs and (H*N, O) outputs."""
        h, n, i = self.inputs.shape
        return self.inputs.reshape(h * n, i), self.outputs.reshape(h * n, -1)


def resample_demo(times, values, new_times):
    """Linearly resample one demonstration onto a new time grid."""
    times = np.asarray(times, dtype=float).ravel()
    values = np.atleast_2d(np.asarray(values, dtype=float))
    if values.shape[0] != times.shape[0]:
        values = values.T
    if values.shape[0] != times.shape[0]:
        raise ValidationError("values must have one row per time stamp")
    new_times = np.asarray(new_times, dtype=float).ravel()
    return np.stack(
        [np.interp(new_times, times, values[:, d]) for d in range(values.shape[1])],
        axis=1,
    )


def with_derivative_outputs(demos):
    """Append per-demo time derivatives to the outputs.

    Requires scalar time input; outputs become (position, velocity) stacked
    along the last axis, matching the layout of derivative-mode kernels.
    """
    if demos.input_dim != 1:
        raise ValidationError("derivative outputs require scalar time input")
    vel = np.empty_like(demos.outputs)
    for h in range(demos.n_demos):
        t = demos.inputs[h, :, 0]
        vel[h] = np.gradient(demos.outputs[h], t, axis=0)
    return DemoSet(demos.inputs, np.concatenate([demos.outputs, vel], axis=2))


class GaussianMixtureRegressor(BaseEstimator):
    """EM-fitted joint Gaussian mixture with conditional (GMR) prediction.

    Parameters
    ----------
    n_components : number of mixture components.
    max_iter : EM iteration cap.
    tol : relative log-likelihood improvement below which EM stops.
    random_state : seed for k-means++ initialization; fits are bit-identical
        for identical seed and data.
    """

    def __init__(self, n_components=8, max_iter=200, tol=1e-8, random_state=0):
        self.n_components = n_components
        self.max_iter = max_iter
        self.tol = tol
        self.random_state = random_state

    # -- fitting ----------------------------------------------------------

    def fit(self, X, y):
        X = as_points(X, name="X")
        y = as_points(y, name="y")
        if X.shape[0] != y.shape[0]:
            raise ValidationError("X and y must have the same number of rows")
        c = int(self.n_components)
        if c < 1:
            raise ValidationError("n_components must be at least 1")
        m = X.shape[0]
        if m < 10 * c:
            raise ValidationError(
                f"need at least 10 points per component ({10 * c}), got {m}"
            )
        z = np.hstack([X, y])
        self.input_dim_ = X.shape[1]
        self.output_dim_ = y.shape[1]

        rng = np.random.default_rng(self.random_state)
        priors, means, covs = self._init_kmeanspp(z, c, rng)

        log_liks = []
        for it in range(int(self.max_iter)):
            log_resp, ll = self._e_step(z, priors, means, covs)
            log_liks.append(ll)
            if len(log_liks) > 1:
                prev = log_liks[-2]
                if ll - prev < self.tol * abs(prev):
                    break
            priors, means, covs = self._m_step(z, log_resp)
        self.priors_ = priors
        self.means_ = means
        self.covariances_ = covs
        self.log_likelihoods_ = np.array(log_liks)
        self.n_iter_ = len(log_liks)
        self._prepare_regression()
        return self

    def fit_demos(self, demos):
        """Fit on the pooled points of a DemoSet."""
        X, y = demos.stacked()
        return self.fit(X, y)

    @staticmethod
    def _init_kmeanspp(z, c, rng):
        m, d = z.shape
        centers = [z[rng.integers(m)]]
        for _ in range(1, c):
            d2 = np.min(cdist(z, np.array(centers), "sqeuclidean"), axis=1)
            total = d2.sum()
            if total > 0:
                centers.append(z[rng.choice(m, p=d2 / total)])
            else:
                centers.append(z[rng.integers(m)])
        centers = np.array(centers)
        labels = np.argmin(cdist(z, centers, "sqeuclidean"), axis=1)
        priors = np.empty(c)
        means = np.empty((c, d))
        covs = np.empty((c, d, d))
        for k in range(c):
            pts = z[labels == k]
            if len(pts) == 0:
                pts = centers[k : k + 1]
            priors[k] = max(len(pts), 1) / m
            means[k] = pts.mean(axis=0)
            cov = np.cov(pts.T, bias=True).reshape(d, d) if len(pts) > 1 else np.zeros((d, d))
            floor = 1e-6 * max(np.trace(cov), 1.0)
            covs[k] = cov + floor * np.eye(d)
        priors /= priors.sum()
        return priors, means, covs

    @staticmethod
    def _component_log_pdf(z, mean, cov, name):
        d = mean.shape[0]
        try:
            chol = np.linalg.cholesky(cov)
        except np.linalg.LinAlgError:
            cov = ensure_spd(cov, name=name)
            chol = np.linalg.cholesky(cov)
        sol = solve_triangular(chol, (z - mean).T, lower=True)
        log_det = 2.0 * np.sum(np.log(np.diag(chol)))
        return -0.5 * (d * _LOG_2PI + log_det + np.sum(sol * sol, axis=0))

    def _e_step(self, z, priors, means, covs):
        c = priors.shape[0]
        log_prob = np.empty((z.shape[0], c))
        for k in range(c):
            log_prob[:, k] = np.log(priors[k]) + self._component_log_pdf(
                z, means[k], covs[k], name=f"component {k} covariance"
            )
        norm = logsumexp(log_prob, axis=1)
        return log_prob - norm[:, None], float(norm.sum())

    def _m_step(self, z, log_resp):
        resp = np.exp(log_resp)
        mass = resp.sum(axis=0)
        for k, mk in enumerate(mass):
            if mk < 1e-8:
                raise ComponentCollapseError(
                    f"component {k} collapsed (responsibility mass {mk:.3e}); "
                    "refit with fewer components or another seed"
                )
        priors = mass / z.shape[0]
        means = (resp.T @ z) / mass[:, None]
        covs = np.empty((mass.shape[0], z.shape[1], z.shape[1]))
        for k in range(mass.shape[0]):
            diff = z - means[k]
            covs[k] = (resp[:, k] * diff.T) @ diff / mass[k]
        return priors, means, covs

    # -- regression -------------------------------------------------------

    def _prepare_regression(self):
        """Cache per-component conditioning terms (gain, conditional cov)."""
        i = self.input_dim_
        self._in_chols = []
        self._gains = []
        self._cond_covs = []
        self._in_log_dets = []
        for k in range(self.priors_.shape[0]):
            cov = self.covariances_[k]
            c_ss = ensure_spd(cov[:i, :i], name=f"component {k} input block")
            chol = np.linalg.cholesky(c_ss)
            half = solve_triangular(chol, cov[:i, i:], lower=True)
            gain = solve_triangular(chol.T, half, lower=False).T
            cond = ensure_spd(
                cov[i:, i:] - half.T @ half, name=f"component {k} conditional"
            )
            self._in_chols.append(chol)
            self._gains.append(gain)
            self._cond_covs.append(cond)
            self._in_log_dets.append(2.0 * np.sum(np.log(np.diag(chol))))

    def _check_fitted(self):
        if not hasattr(self, "priors_"):
            raise ValidationError("model is not fitted")

    def _log_responsibilities(self, X):
        i = self.input_dim_
        c = self.priors_.shape[0]
        log_w = np.empty((X.shape[0], c))
        for k in range(c):
            sol = solve_triangular(
                self._in_chols[k], (X - self.means_[k, :i]).T, lower=True
            )
            log_w[:, k] = np.log(self.priors_[k]) - 0.5 * (
                i * _LOG_2PI + self._in_log_dets[k] + np.sum(sol * sol, axis=0)
            )
        top = log_w.max(axis=1)
        if np.any(top < np.log(np.finfo(float).tiny)):
            warnings.warn(
                "query lies far outside the fitted input support; "
                "falling back to the dominant component",
                ExtrapolationWarning,
                stacklevel=3,
            )
        return log_w - logsumexp(log_w, axis=1)[:, None]

    def _gmr_raw(self, X):
        """Conditional means and covariances before SPD repair."""
        self._check_fitted()
        X = as_points(X, dim=self.input_dim_, name="X")
        i, o = self.input_dim_, self.output_dim_
        resp = np.exp(self._log_responsibilities(X))
        q = X.shape[0]
        means = np.zeros((q, o))
        second = np.zeros((q, o, o))
        for k in range(self.priors_.shape[0]):
            loc = self.means_[k, i:] + (X - self.means_[k, :i]) @ self._gains[k].T
            means += resp[:, k : k + 1] * loc
            second += resp[:, k, None, None] * (
                self._cond_covs[k][None] + loc[:, :, None] * loc[:, None, :]
            )
        covs = second - means[:, :, None] * means[:, None, :]
        return means, covs

    def predict(self, X):
        """Conditional mean outputs, shape (n_queries, output_dim)."""
        return self._gmr_raw(X)[0]

    def predict_dist(self, X):
        """Conditional means and repaired covariances."""
        means, covs = self._gmr_raw(X)
        covs = np.stack([ensure_spd(c, name="regression covariance") for c in covs])
        return means, covs

    def regress(self, x):
        """Conditional output Gaussian for a single query input."""
        means, covs = self.predict_dist(np.reshape(x, (1, -1)))
        return Gaussian(means[0], covs[0])

    def extract_reference(self, inputs):
        """Reference database from per-query conditionals at the given inputs."""
        inputs = as_points(inputs, dim=self.input_dim_, name="inputs")
        means, covs = self.predict_dist(inputs)
        return ReferenceDatabase(inputs, means, covs)

    def sample_inputs(self, n, random_state=0):
        """Seeded ancestral samples from the learned input marginal."""
        self._check_fitted()
        rng = np.random.default_rng(random_state)
        i = self.input_dim_
        comps = rng.choice(self.priors_.shape[0], size=n, p=self.priors_)
        out = np.empty((n, i))
        for idx, k in enumerate(comps):
            out[idx] = self.means_[k, :i] + self._in_chols[k] @ rng.standard_normal(i)
        return out

    # -- serialization ----------------------------------------------------

    def to_dict(self):
        self._check_fitted()
        return {
            "version": 1,
            "input_dim": int(self.input_dim_),
            "output_dim": int(self.output_dim_),
            "components": [
                {
                    "prior": float(self.priors_[k]),
                    "mean": self.means_[k].tolist(),
                    "cov": self.covariances_[k].ravel().tolist(),
                }
                for k in range(self.priors_.shape[0])
            ],
        }

    @classmethod
    def from_dict(cls, data):
        if data.get("version") != 1:
            raise ValidationError(f"unsupported model version {data.get('version')!r}")
        i = int(data["input_dim"])
        o = int(data["output_dim"])
        comps = data["components"]
        model = cls(n_components=len(comps))
        model.input_dim_ = i
        model.output_dim_ = o
        model.priors_ = np.array([c["prior"] for c in comps], dtype=float)
        model.means_ = np.array([c["mean"] for c in comps], dtype=float)
        model.covariances_ = np.array(
            [
                ensure_spd(np.reshape(c["cov"], (i + o, i + o)), name=f"component {k} covariance")
                for k, c in enumerate(comps)
            ]
        )
        total = model.priors_.sum()
        if abs(total - 1.0) > 1e-9 or np.any(model.priors_ <= 0):
            raise ValidationError("component priors must be positive and sum to 1")
        model.log_likelihoods_ = np.array([])
        model.n_iter_ = 0
        model._prepare_regression()
        return model
