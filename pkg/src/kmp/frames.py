"""Task-parameterized prediction with local coordinate frames.

Demonstrations are projected into per-frame coordinates, one KMP is trained
per frame on the local patterns, and base-frame predictions are fused as a
precision-weighted product of the lifted per-frame Gaussians. Moving the
frames between training and prediction transports the learned patterns to
new task instances.
"""

from dataclasses import dataclass

import numpy as np
from scipy.linalg import cho_solve

from .errors import NumericalError, ValidationError
from .gaussian import Gaussian
from .mixture import DemoSet, GaussianMixtureRegressor
from .model import KMP
from .reference import DesiredPoint, update_database
from .validation import as_points, check_matrix, check_vector, ensure_spd, spd_cholesky

_ORTHOGONALITY_TOL = 1e-10


@dataclass(frozen=True)
class LocalFrame:
    """Affine coordinate system: block rotations plus translations.

    rotation_in/translation_in act on inputs, rotation_out/translation_out on
    outputs. Rotations must be orthogonal within 1e-10. For time-driven
    models use :meth:`for_time_input`, which fixes the input block to the
    identity so time never changes across frames.
    """

    rotation_in: np.ndarray
    translation_in: np.ndarray
    rotation_out: np.ndarray
    translation_out: np.ndarray

    def __post_init__(self):
        a_in = check_matrix(self.rotation_in, name="rotation_in")
        a_out = check_matrix(self.rotation_out, name="rotation_out")
        b_in = check_vector(self.translation_in, dim=a_in.shape[0], name="translation_in")
        b_out = check_vector(self.translation_out, dim=a_out.shape[0], name="translation_out")
        for name, a in (("rotation_in", a_in), ("rotation_out", a_out)):
            if a.shape[0] != a.shape[1]:
                raise ValidationError(f"{name} must be square")
            err = np.abs(a.T @ a - np.eye(a.shape[0])).max()
            if err > _ORTHOGONALITY_TOL:
                raise ValidationError(
                    f"{name} is not orthogonal: max|A^T A - I| = {err:.3e}"
                )
        for name, arr in (
            ("rotation_in", a_in),
            ("translation_in", b_in),
            ("rotation_out", a_out),
            ("translation_out", b_out),
        ):
            arr = np.array(arr)
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    @classmethod
    def identity(cls, input_dim, output_dim):
        return cls(np.eye(input_dim), np.zeros(input_dim), np.eye(output_dim), np.zeros(output_dim))

    @classmethod
    def for_time_input(cls, rotation_out, translation_out):
        """Frame for time-driven models: time passes through unchanged."""
        return cls(np.eye(1), np.zeros(1), rotation_out, translation_out)

    @property
    def input_dim(self):
        return self.rotation_in.shape[0]

    @property
    def output_dim(self):
        return self.rotation_out.shape[0]

    def shifted(self, offset):
        """Same frame with the output origin translated by ``offset``."""
        return LocalFrame(
            self.rotation_in,
            self.translation_in,
            self.rotation_out,
            self.translation_out + np.asarray(offset, dtype=float),
        )

    # base -> local

    def project_inputs(self, s):
        s = as_points(s, dim=self.input_dim, name="s")
        return np.linalg.solve(self.rotation_in, (s - self.translation_in).T).T

    def project_outputs(self, xi):
        xi = as_points(xi, dim=self.output_dim, name="xi")
        return np.linalg.solve(self.rotation_out, (xi - self.translation_out).T).T

    def project(self, s, xi):
        """Project one (input, output) pair into this frame."""
        return (
            self.project_inputs(np.reshape(s, (1, -1)))[0],
            self.project_outputs(np.reshape(xi, (1, -1)))[0],
        )

    def project_gaussian(self, g):
        """Project an output-space Gaussian into this frame."""
        mean = np.linalg.solve(self.rotation_out, g.mean - self.translation_out)
        inv_rot = np.linalg.solve(self.rotation_out, np.eye(self.output_dim))
        return Gaussian(mean, inv_rot @ g.cov @ inv_rot.T)

    # local -> base

    def unproject_gaussian(self, g):
        """Lift an output-space Gaussian from this frame to the base frame."""
        if g.dim != self.output_dim:
            raise ValidationError(
                f"Gaussian dimension {g.dim} does not match frame output dim {self.output_dim}"
            )
        return Gaussian(
            self.rotation_out @ g.mean + self.translation_out,
            self.rotation_out @ g.cov @ self.rotation_out.T,
        )

    def to_dict(self):
        return {
            "A_in": self.rotation_in.tolist(),
            "b_in": self.translation_in.tolist(),
            "A_out": self.rotation_out.tolist(),
            "b_out": self.translation_out.tolist(),
        }

    @classmethod
    def from_dict(cls, data):
        return cls(
            np.array(data["A_in"], dtype=float),
            np.array(data["b_in"], dtype=float),
            np.array(data["A_out"], dtype=float),
            np.array(data["b_out"], dtype=float),
        )


class LocalKMPSet:
    """A bank of per-frame KMPs fused in the base frame.

    Frames are task parameters: :meth:`with_frames` repositions them between
    training and prediction without touching the learned local models.
    """

    def __init__(self, frames, models):
        frames = list(frames)
        models = list(models)
        if not frames or len(frames) != len(models):
            raise ValidationError("need one frame per model, at least one of each")
        ref = models[0]
        for p, (frame, model) in enumerate(zip(frames, models)):
            model._check_fitted()
            if frame.input_dim != model.input_dim_ or frame.output_dim != model.output_dim_:
                raise ValidationError(f"frame {p} dimensions do not match its model")
            if model.kernel_ != ref.kernel_ or model.lam != ref.lam:
                raise ValidationError("all models must share kernel and lam")
            if model.input_dim_ != ref.input_dim_ or model.output_dim_ != ref.output_dim_:
                raise ValidationError("all models must share input/output dims")
        self.frames = tuple(frames)
        self.models = tuple(models)

    @property
    def n_frames(self):
        return len(self.frames)

    def with_frames(self, frames):
        """Same local models attached to repositioned frames."""
        return LocalKMPSet(frames, self.models)

    def _lifted_predictions(self, X):
        X = as_points(X, dim=self.models[0].input_dim_, name="X")
        per_frame = []
        for p, (frame, model) in enumerate(zip(self.frames, self.models)):
            try:
                local = frame.project_inputs(X)
                means, covs = model.predict(local), model.predict_cov(local)
            except (ValidationError, NumericalError) as exc:
                raise type(exc)(f"frame {p}: {exc}") from exc
            lifted_means = means @ frame.rotation_out.T + frame.translation_out
            lifted_covs = np.einsum(
                "ab,qbc,dc->qad", frame.rotation_out, covs, frame.rotation_out
            )
            per_frame.append((lifted_means, lifted_covs))
        return X, per_frame

    def predict(self, X):
        """Fused base-frame means, shape (Q, O)."""
        return self.predict_dist(X)[0]

    def predict_dist(self, X):
        """Fused base-frame (means, covariances).

        The mean is the precision-weighted combination of the per-frame
        predictions; the covariance is the Gaussian-product covariance of the
        lifted per-frame Gaussians.
        """
        X, per_frame = self._lifted_predictions(X)
        o = self.models[0].output_dim_
        q = X.shape[0]
        means = np.empty((q, o))
        covs = np.empty((q, o, o))
        eye = np.eye(o)
        for i in range(q):
            precision = np.zeros((o, o))
            weighted = np.zeros(o)
            for lifted_means, lifted_covs in per_frame:
                cov = lifted_covs[i]
                cov = cov + (1e-10 * np.trace(cov) / o) * eye
                chol = spd_cholesky(cov, name="per-frame covariance")
                precision += cho_solve((chol, True), eye)
                weighted += cho_solve((chol, True), lifted_means[i])
            chol_p = spd_cholesky(ensure_spd(precision, name="fused precision"))
            covs[i] = ensure_spd(cho_solve((chol_p, True), eye), name="fused covariance")
            means[i] = cho_solve((chol_p, True), weighted)
        return means, covs

    def updated(self, points, zeta=None):
        """Absorb base-frame desired points into every frame's database.

        Each point is projected into each frame (input affinely, output
        Gaussian by congruence) before the usual replace-or-insert update;
        all models are rebuilt.
        """
        pts = [points] if isinstance(points, DesiredPoint) else list(points)
        new_models = []
        for frame, model in zip(self.frames, self.models):
            db = model.database_
            for point in pts:
                local_in = frame.project_inputs(np.reshape(point.input, (1, -1)))[0]
                local_g = frame.project_gaussian(Gaussian(point.mean, point.cov))
                db = update_database(
                    db, DesiredPoint(local_in, local_g.mean, local_g.cov), zeta=zeta
                )
            new_models.append(KMP(kernel=model.kernel_, lam=model.lam).fit(db))
        return LocalKMPSet(self.frames, new_models)


def fit_local_kmp_set(
    demos,
    demo_frames,
    frames,
    reference_inputs,
    kernel=None,
    lam=1.0,
    n_components=8,
    random_state=0,
):
    """Train one KMP per frame from base-frame demonstrations.

    demo_frames[h][p] is the frame describing task parameter p as it was
    during demonstration h; demonstration h is projected through its own
    frames so that the pooled local data exposes the frame-relative pattern.
    ``frames`` are the task parameters to attach for prediction (often
    repositioned later via :meth:`LocalKMPSet.with_frames`).
    """
    if len(demo_frames) != demos.n_demos:
        raise ValidationError("need one frame list per demonstration")
    n_frames = len(frames)
    if any(len(per_demo) != n_frames for per_demo in demo_frames):
        raise ValidationError("every demonstration needs one frame per task parameter")
    reference_inputs = as_points(reference_inputs, dim=demos.input_dim, name="reference_inputs")

    models = []
    for p in range(n_frames):
        local_inputs = np.empty_like(demos.inputs)
        local_outputs = np.empty_like(demos.outputs)
        for h in range(demos.n_demos):
            fr = demo_frames[h][p]
            local_inputs[h] = fr.project_inputs(demos.inputs[h])
            local_outputs[h] = fr.project_outputs(demos.outputs[h])
        local = DemoSet(local_inputs, local_outputs)
        regressor = GaussianMixtureRegressor(
            n_components=n_components, random_state=random_state
        ).fit_demos(local)
        # The prediction frame maps base-frame reference inputs into frame p;
        # for time-driven tasks this is the identity.
        local_ref = frames[p].project_inputs(reference_inputs)
        db = regressor.extract_reference(local_ref)
        models.append(KMP(kernel=kernel, lam=lam).fit(db))
    return LocalKMPSet(frames, models)
