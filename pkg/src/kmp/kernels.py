"""Kernel evaluation and block Gram assembly.

The scalar kernel k(a, b) is lifted to matrix blocks k(a, b) * I in the
output dimension. In derivative mode (scalar time input only) each block is
the 2x2 arrangement of k and its finite-difference derivatives, covering
position and velocity jointly.
"""

from dataclasses import dataclass

import numpy as np

from .errors import ValidationError
from .validation import as_points

_KNOWN_FAMILIES = ("gaussian",)


@dataclass(frozen=True)
class KernelSpec:
    """Kernel configuration.

    family may be the string "gaussian" (k(a, b) = exp(-length_scale *
    ||a - b||^2)) or any callable ``f(A, B) -> (len(A), len(B))`` pairwise
    matrix, which serves as an extension point; callable families cannot be
    serialized.

    derivative_mode switches Gram blocks to the 2x2 finite-difference form
    and restricts inputs to scalar time; delta is the difference step.
    """

    length_scale: float = 1.0
    derivative_mode: bool = False
    delta: float = 1e-5
    family: object = "gaussian"

    def __post_init__(self):
        if isinstance(self.family, str):
            if self.family not in _KNOWN_FAMILIES:
                raise ValidationError(f"unknown kernel family {self.family!r}")
            if not self.length_scale > 0:
                raise ValidationError("length_scale must be positive")
        elif not callable(self.family):
            raise ValidationError("family must be a known name or a callable")
        if self.derivative_mode:
            if not 0 < self.delta <= 1e-3:
                raise ValidationError(
                    "delta must lie in (0, 1e-3] in derivative mode"
                )
        elif not self.delta > 0:
            raise ValidationError("delta must be positive")

    # -- scalar level -----------------------------------------------------

    def pairwise(self, a, b):
        """Scalar kernel matrix between two point sets."""
        a = as_points(a, name="a")
        b = as_points(b, dim=a.shape[1], name="b")
        if callable(self.family):
            out = np.asarray(self.family(a, b), dtype=float)
            if out.shape != (a.shape[0], b.shape[0]):
                raise ValidationError(
                    f"custom kernel returned shape {out.shape}, "
                    f"expected {(a.shape[0], b.shape[0])}"
                )
            return out
        sq = np.sum(a * a, axis=1)[:, None] + np.sum(b * b, axis=1)[None, :]
        sq -= 2.0 * (a @ b.T)
        np.maximum(sq, 0.0, out=sq)
        return np.exp(-self.length_scale * sq)

    def eval(self, s_i, s_j):
        """Scalar kernel value for one pair."""
        s_i = as_points(s_i, name="s_i")
        if s_i.shape[0] != 1:
            raise ValidationError("eval takes a single point per argument")
        return float(self.pairwise(s_i, as_points(s_j, dim=s_i.shape[1], name="s_j"))[0, 0])

    # -- block level ------------------------------------------------------

    def block_dim(self, output_dim):
        """Rows of one Gram block for a model with ``output_dim`` outputs."""
        return 2 * output_dim if self.derivative_mode else output_dim

    def block(self, s_i, s_j, output_dim):
        if self.derivative_mode:
            raise ValidationError("block is only defined without derivative_mode")
        return self.eval(s_i, s_j) * np.eye(output_dim)

    def time_block(self, t_i, t_j, output_dim):
        """2O x 2O block of kernel and finite-difference derivative entries."""
        if not self.derivative_mode:
            raise ValidationError("time_block requires derivative_mode")
        parts = self._derivative_parts(np.array([[float(t_i)]]), np.array([[float(t_j)]]))
        return self._expand_derivative(parts, output_dim)

    def _derivative_parts(self, ta, tb):
        d = self.delta
        if callable(self.family):
            k = self.pairwise(ta, tb)
            k_ad = self.pairwise(ta, tb + d)
            k_da = self.pairwise(ta + d, tb)
            k_dd = self.pairwise(ta + d, tb + d)
            ktd = (k_ad - k) / d
            kdt = (k_da - k) / d
            kdd = (k_dd - k_da - k_ad + k) / (d * d)
            return k, ktd, kdt, kdd
        # Gaussian family: identical finite-difference values, but factored
        # through expm1 so the second difference carries no catastrophic
        # cancellation (the naive form loses ~eps/delta^2 and can make the
        # Gram indefinite when reference covariances are tight).
        ell = self.length_scale
        diff = ta[:, 0][:, None] - tb[:, 0][None, :]
        k = np.exp(-ell * diff * diff)
        a = 2.0 * ell * d * diff
        b = ell * d * d
        ktd = k * np.expm1(a - b) / d
        kdt = k * np.expm1(-a - b) / d
        cosh_m1 = 0.5 * (np.expm1(a) + np.expm1(-a))
        kdd = -2.0 * k * (np.expm1(-b) * (cosh_m1 + 1.0) + cosh_m1) / (d * d)
        return k, ktd, kdt, kdd

    @staticmethod
    def _expand_derivative(parts, output_dim):
        k, ktd, kdt, kdd = parts
        eye = np.eye(output_dim)
        cell = np.zeros((2, 2))
        out = np.zeros((k.shape[0] * 2 * output_dim, k.shape[1] * 2 * output_dim))
        for (r, c), grid in (((0, 0), k), ((0, 1), ktd), ((1, 0), kdt), ((1, 1), kdd)):
            cell[:] = 0.0
            cell[r, c] = 1.0
            out += np.kron(grid, np.kron(cell, eye))
        return out

    # -- Gram level -------------------------------------------------------

    def cross(self, queries, inputs, output_dim):
        """Block kernel matrix between query points and reference inputs."""
        inputs = as_points(inputs, name="inputs")
        queries = as_points(queries, dim=inputs.shape[1], name="queries")
        if self.derivative_mode:
            if inputs.shape[1] != 1:
                raise ValidationError(
                    "derivative_mode requires scalar time input"
                )
            return self._expand_derivative(
                self._derivative_parts(queries, inputs), output_dim
            )
        return np.kron(self.pairwise(queries, inputs), np.eye(output_dim))

    def gram(self, inputs, output_dim):
        """Full symmetric block Gram matrix over the reference inputs."""
        mat = self.cross(inputs, inputs, output_dim)
        return 0.5 * (mat + mat.T)

    def self_block(self, query, output_dim):
        """k(s*, s*) block used by the predictive covariance."""
        return self.cross(query, query, output_dim)

    # -- serialization ----------------------------------------------------

    def to_dict(self):
        if callable(self.family):
            raise ValidationError("callable kernel families cannot be serialized")
        return {
            "family": self.family,
            "length_scale": float(self.length_scale),
            "derivative_mode": bool(self.derivative_mode),
            "delta": float(self.delta),
        }

    @classmethod
    def from_dict(cls, data):
        return cls(
            family=data["family"],
            length_scale=float(data["length_scale"]),
            derivative_mode=bool(data["derivative_mode"]),
            delta=float(data["delta"]),
        )
