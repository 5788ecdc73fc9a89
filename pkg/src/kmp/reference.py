"""Reference databases: the (input, Gaussian) lists that parameterize a KMP.

A database is the probabilistic trajectory extracted from demonstrations.
All mutating operations (via-point updates, superposition, resampling)
return new databases; instances themselves are immutable.
"""

from dataclasses import dataclass

import numpy as np
from scipy.spatial.distance import cdist

from .errors import ValidationError
from .gaussian import Gaussian, scaled_product
from .validation import as_float_array, as_points, check_vector, ensure_spd


@dataclass(frozen=True)
class ReferenceDatabase:
    """N reference points: inputs (N, I), means (N, O), covariances (N, O, O).

    Inputs must be pairwise distinct; duplicates make the regularized Gram
    system rank-deficient in the tight-covariance limit. Covariances are
    symmetrized/repaired entrywise at construction.
    """

    inputs: np.ndarray
    means: np.ndarray
    covariances: np.ndarray

    def __post_init__(self):
        inputs = as_points(self.inputs, name="inputs")
        means = as_float_array(self.means, name="means")
        if means.ndim == 1:
            means = means.reshape(-1, 1)
        n, o = means.shape
        covs = as_float_array(self.covariances, name="covariances")
        if o == 1 and covs.ndim in (1, 2) and covs.size == n:
            covs = covs.reshape(n, 1, 1)
        if inputs.shape[0] != n or covs.shape != (n, o, o):
            raise ValidationError(
                f"inconsistent database shapes: inputs {inputs.shape}, "
                f"means {means.shape}, covariances {covs.shape}"
            )
        if n == 0:
            raise ValidationError("database must contain at least one entry")
        if n > 1:
            dists = cdist(inputs, inputs)
            np.fill_diagonal(dists, np.inf)
            i, j = np.unravel_index(np.argmin(dists), dists.shape)
            if dists[i, j] == 0.0:
                raise ValidationError(f"duplicate inputs at indices {i} and {j}")
        covs = np.stack([ensure_spd(c, name=f"covariance[{k}]") for k, c in enumerate(covs)])
        for name, arr in (("inputs", inputs), ("means", means), ("covariances", covs)):
            arr = np.array(arr)
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    def __len__(self):
        return self.inputs.shape[0]

    @property
    def input_dim(self):
        return self.inputs.shape[1]

    @property
    def output_dim(self):
        return self.means.shape[1]

    def entry(self, i):
        """(input, Gaussian) pair at index i."""
        return self.inputs[i], Gaussian(self.means[i], self.covariances[i])

    def replaced(self, i, s, mean, cov):
        inputs = np.array(self.inputs)
        means = np.array(self.means)
        covs = np.array(self.covariances)
        inputs[i] = s
        means[i] = mean
        covs[i] = cov
        return ReferenceDatabase(inputs, means, covs)

    def appended(self, s, mean, cov):
        return ReferenceDatabase(
            np.vstack([self.inputs, np.reshape(s, (1, -1))]),
            np.vstack([self.means, np.reshape(mean, (1, -1))]),
            np.concatenate([self.covariances, np.reshape(cov, (1,) + self.covariances.shape[1:])]),
        )

    def to_dict(self):
        return {
            "entries": [
                {
                    "s": self.inputs[i].tolist(),
                    "mu": self.means[i].tolist(),
                    "sigma": self.covariances[i].ravel().tolist(),
                }
                for i in range(len(self))
            ]
        }

    @classmethod
    def from_dict(cls, data, input_dim, output_dim):
        entries = data["entries"]
        inputs = np.array([e["s"] for e in entries], dtype=float).reshape(-1, input_dim)
        means = np.array([e["mu"] for e in entries], dtype=float).reshape(-1, output_dim)
        covs = np.array([e["sigma"] for e in entries], dtype=float).reshape(
            -1, output_dim, output_dim
        )
        return cls(inputs, means, covs)


@dataclass(frozen=True)
class DesiredPoint:
    """A via-/end-point constraint: input location plus an output Gaussian."""

    input: np.ndarray
    mean: np.ndarray
    cov: np.ndarray

    def __post_init__(self):
        inp = check_vector(np.atleast_1d(np.asarray(self.input, dtype=float)), name="input")
        mean = check_vector(np.atleast_1d(np.asarray(self.mean, dtype=float)), name="mean")
        cov = ensure_spd(np.atleast_2d(np.asarray(self.cov, dtype=float)), name="cov")
        if cov.shape[0] != mean.shape[0]:
            raise ValidationError("desired point mean/cov dimensions disagree")
        for name, arr in (("input", inp), ("mean", mean), ("cov", cov)):
            arr = np.array(arr)
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)


def default_zeta(database):
    """Replacement threshold tied to input density.

    0.05 times the median nearest-neighbor spacing of the database inputs,
    so replace-vs-insert semantics are scale-free.
    """
    if len(database) < 2:
        return 0.05
    dists = cdist(database.inputs, database.inputs)
    np.fill_diagonal(dists, np.inf)
    return 0.05 * float(np.median(dists.min(axis=1)))


def update_database(database, point, zeta=None, distance=None):
    """Insert a desired point, replacing the nearest entry when closer than zeta.

    Ties pick the lowest index. ``distance`` may be any callable
    d(a, b) -> float over inputs; the default is the Euclidean norm.
    """
    if not isinstance(point, DesiredPoint):
        raise ValidationError("point must be a DesiredPoint")
    if point.input.shape[0] != database.input_dim:
        raise ValidationError("desired point input dimension mismatch")
    if point.mean.shape[0] != database.output_dim:
        raise ValidationError("desired point output dimension mismatch")
    if zeta is None:
        zeta = default_zeta(database)
    if not zeta > 0:
        raise ValidationError("zeta must be positive")
    if distance is None:
        dists = np.linalg.norm(database.inputs - point.input[None, :], axis=1)
    else:
        dists = np.array([distance(point.input, s) for s in database.inputs])
    r = int(np.argmin(dists))
    if dists[r] < zeta:
        return database.replaced(r, point.input, point.mean, point.cov)
    return database.appended(point.input, point.mean, point.cov)


def superpose(databases, priorities):
    """Mix databases sharing identical inputs via priority-scaled products.

    ``priorities`` is (L,) for constant weights or (N, L) per point; each row
    must sum to 1 and lie strictly inside (0, 1).
    """
    databases = list(databases)
    if not databases:
        raise ValidationError("need at least one database")
    base = databases[0]
    for k, db in enumerate(databases[1:], start=1):
        if db.output_dim != base.output_dim:
            raise ValidationError("databases must share the output dimension")
        if not np.array_equal(db.inputs, base.inputs):
            raise ValidationError(
                f"database {k} inputs differ from database 0; "
                "resample onto a common grid first"
            )
    n, ell = len(base), len(databases)
    priorities = as_float_array(priorities, name="priorities")
    if priorities.ndim == 1:
        priorities = np.tile(priorities, (n, 1))
    if priorities.shape != (n, ell):
        raise ValidationError(
            f"priorities must have shape ({n}, {ell}), got {priorities.shape}"
        )
    means = np.empty_like(base.means)
    covs = np.empty_like(base.covariances)
    for i in range(n):
        mixed = scaled_product(
            [Gaussian(db.means[i], db.covariances[i]) for db in databases],
            priorities[i],
        )
        means[i] = mixed.mean
        covs[i] = mixed.cov
    return ReferenceDatabase(base.inputs, means, covs)


def resample_database(database, new_inputs):
    """Linearly resample a 1-D-input database onto a new input grid.

    Means and covariance entries are interpolated independently; convex
    combinations of SPD matrices stay SPD so no extra repair is needed
    beyond construction.
    """
    if database.input_dim != 1:
        raise ValidationError("resampling requires scalar inputs")
    grid = np.sort(np.asarray(new_inputs, dtype=float).ravel())
    old = database.inputs.ravel()
    order = np.argsort(old)
    old_sorted = old[order]
    means = np.stack(
        [np.interp(grid, old_sorted, database.means[order, d]) for d in range(database.output_dim)],
        axis=1,
    )
    o = database.output_dim
    covs = np.empty((grid.shape[0], o, o))
    for a in range(o):
        for b in range(o):
            covs[:, a, b] = np.interp(grid, old_sorted, database.covariances[order, a, b])
    return ReferenceDatabase(grid.reshape(-1, 1), means, covs)
