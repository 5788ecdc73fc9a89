"""Experiment configuration: parsing, validation, and named presets.

Configs are strict JSON documents; unknown keys anywhere in the schema are
rejected so typos fail loudly instead of silently using defaults.
"""

import copy
from dataclasses import dataclass, field

import numpy as np

from .errors import ValidationError
from .kernels import KernelSpec

MODES = ("fit", "predict", "adapt", "superpose", "local", "force_sim")

# Kernel/regularization bundles matching the bundled scenario families.
PRESETS = {
    "letter-g": {
        "kernel": {"family": "gaussian", "length_scale": 2.0, "derivative_mode": True, "delta": 1e-5},
        "lambda": 1.0,
    },
    "transportation": {
        "kernel": {"family": "gaussian", "length_scale": 0.5, "derivative_mode": False, "delta": 1e-5},
        "lambda": 10.0,
    },
    "force": {
        "kernel": {"family": "gaussian", "length_scale": 0.15, "derivative_mode": True, "delta": 1e-5},
        "lambda": 0.3,
        "force": {"gain": 0.006, "delta_t": 1.0, "threshold": 10.0},
    },
    "third-hand": {
        "kernel": {"family": "gaussian", "length_scale": 0.5, "derivative_mode": False, "delta": 1e-5},
        "lambda": 2.0,
    },
}

_TOP_KEYS = {
    "mode",
    "seed",
    "preset",
    "data",
    "kernel",
    "lambda",
    "zeta",
    "n_components",
    "n_reference",
    "queries",
    "desired_points",
    "superpose",
    "frames",
    "time_scale",
    "force",
    "model_in",
    "cov_output",
    "output",
}

_KERNEL_KEYS = {"family", "length_scale", "derivative_mode", "delta"}
_DATA_KEYS = {"path", "format", "synthetic", "n_demos", "n_points", "duration", "seed"}
_QUERY_KEYS = {"num", "values"}
_POINT_KEYS = {"input", "mean", "cov", "position"}
_SUPERPOSE_KEYS = {"branches", "priorities"}
_BRANCH_KEYS = {"desired_points"}
_PRIORITY_KEYS = {"kind", "values"}
_FRAME_KEYS = {"A_in", "b_in", "A_out", "b_out", "A", "b"}
_FRAMES_KEYS = {"training", "prediction"}
_TIME_SCALE_KEYS = {"duration"}
_FORCE_KEYS = {"gain", "delta_t", "threshold", "events"}
_EVENT_KEYS = {"t", "force", "position"}
_OUTPUT_KEYS = {"dir", "trajectory", "model", "report"}


def _check_keys(mapping, allowed, context):
    if not isinstance(mapping, dict):
        raise ValidationError(f"{context} must be a JSON object")
    unknown = set(mapping) - allowed
    if unknown:
        raise ValidationError(f"{context}: unknown key(s) {sorted(unknown)}")


def _require(mapping, key, context):
    if key not in mapping:
        raise ValidationError(f"{context}: missing required key {key!r}")
    return mapping[key]


@dataclass
class ExperimentConfig:
    """Validated experiment description.

    Most fields keep their JSON shape; ``kernel_spec()`` and mode handlers in
    :mod:`kmp.experiments` materialize typed objects from them.
    """

    mode: str
    seed: int = 0
    data: dict | None = None
    kernel: dict = field(default_factory=dict)
    lam: float = 1.0
    zeta: float | None = None
    n_components: int = 8
    n_reference: int | None = None
    queries: dict = field(default_factory=lambda: {"num": 200})
    desired_points: list = field(default_factory=list)
    superpose: dict | None = None
    frames: dict | None = None
    time_scale: dict | None = None
    force: dict | None = None
    model_in: str | None = None
    cov_output: str = "diag"
    output: dict = field(default_factory=dict)

    @classmethod
    def from_dict(cls, raw):
        raw = copy.deepcopy(raw)
        _check_keys(raw, _TOP_KEYS, "config")
        mode = _require(raw, "mode", "config")
        if mode not in MODES:
            raise ValidationError(f"config: mode must be one of {MODES}, got {mode!r}")

        preset = raw.pop("preset", None)
        merged = {}
        if preset is not None:
            if preset not in PRESETS:
                raise ValidationError(
                    f"config: unknown preset {preset!r}; available: {sorted(PRESETS)}"
                )
            merged = copy.deepcopy(PRESETS[preset])
        for key, value in raw.items():
            if key in ("kernel", "force") and key in merged and isinstance(value, dict):
                merged[key].update(value)
            else:
                merged[key] = value
        raw = merged

        kernel = raw.get("kernel", {})
        _check_keys(kernel, _KERNEL_KEYS, "config.kernel")
        data = raw.get("data")
        if data is not None:
            _check_keys(data, _DATA_KEYS, "config.data")
            if ("path" in data) == ("synthetic" in data):
                raise ValidationError(
                    "config.data: exactly one of 'path' or 'synthetic' is required"
                )
        queries = raw.get("queries", {"num": 200})
        _check_keys(queries, _QUERY_KEYS, "config.queries")
        points = raw.get("desired_points", [])
        if not isinstance(points, list):
            raise ValidationError("config.desired_points must be a list")
        for idx, point in enumerate(points):
            _check_keys(point, _POINT_KEYS, f"config.desired_points[{idx}]")
            _require(point, "input", f"config.desired_points[{idx}]")
            if ("mean" in point) == ("position" in point):
                raise ValidationError(
                    f"config.desired_points[{idx}]: exactly one of 'mean' or "
                    "'position' is required"
                )
        superpose = raw.get("superpose")
        if superpose is not None:
            _check_keys(superpose, _SUPERPOSE_KEYS, "config.superpose")
            branches = _require(superpose, "branches", "config.superpose")
            if not isinstance(branches, list) or len(branches) < 2:
                raise ValidationError("config.superpose.branches needs at least two entries")
            for b_idx, branch in enumerate(branches):
                _check_keys(branch, _BRANCH_KEYS, f"config.superpose.branches[{b_idx}]")
            priorities = _require(superpose, "priorities", "config.superpose")
            _check_keys(priorities, _PRIORITY_KEYS, "config.superpose.priorities")
        frames = raw.get("frames")
        if frames is not None:
            _check_keys(frames, _FRAMES_KEYS, "config.frames")
            for f_idx, fr in enumerate(frames.get("prediction", [])):
                _check_keys(fr, _FRAME_KEYS, f"config.frames.prediction[{f_idx}]")
            training = frames.get("training")
            if isinstance(training, list):
                for d_idx, per_demo in enumerate(training):
                    for f_idx, fr in enumerate(per_demo):
                        _check_keys(
                            fr, _FRAME_KEYS, f"config.frames.training[{d_idx}][{f_idx}]"
                        )
        time_scale = raw.get("time_scale")
        if time_scale is not None:
            _check_keys(time_scale, _TIME_SCALE_KEYS, "config.time_scale")
        force = raw.get("force")
        if force is not None:
            _check_keys(force, _FORCE_KEYS, "config.force")
            for e_idx, event in enumerate(force.get("events", [])):
                _check_keys(event, _EVENT_KEYS, f"config.force.events[{e_idx}]")
                _require(event, "t", f"config.force.events[{e_idx}]")
                _require(event, "force", f"config.force.events[{e_idx}]")
        output = raw.get("output", {})
        _check_keys(output, _OUTPUT_KEYS, "config.output")

        cfg = cls(
            mode=mode,
            seed=int(raw.get("seed", 0)),
            data=data,
            kernel=dict(kernel),
            lam=float(raw.get("lambda", 1.0)),
            zeta=None if raw.get("zeta") is None else float(raw["zeta"]),
            n_components=int(raw.get("n_components", 8)),
            n_reference=None if raw.get("n_reference") is None else int(raw["n_reference"]),
            queries=dict(queries),
            desired_points=list(points),
            superpose=superpose,
            frames=frames,
            time_scale=time_scale,
            force=force,
            model_in=raw.get("model_in"),
            cov_output=str(raw.get("cov_output", "diag")),
            output=dict(output),
        )
        cfg.validate()
        return cfg

    def validate(self):
        if self.cov_output not in ("diag", "full", "none"):
            raise ValidationError(f"config: invalid cov_output {self.cov_output!r}")
        if not self.lam > 0:
            raise ValidationError("config: lambda must be positive")
        if self.n_components < 1:
            raise ValidationError("config: n_components must be at least 1")
        needs_data = {
            "fit": True,
            "adapt": self.model_in is None,
            "superpose": self.model_in is None,
            "predict": self.model_in is None,
            "local": True,
            "force_sim": self.model_in is None,
        }
        if needs_data[self.mode] and self.data is None:
            raise ValidationError(f"config: mode {self.mode!r} requires data (or model_in)")
        if self.mode == "adapt" and not self.desired_points:
            raise ValidationError("config: mode 'adapt' requires desired_points")
        if self.mode == "superpose" and self.superpose is None:
            raise ValidationError("config: mode 'superpose' requires a superpose section")
        if self.mode == "local":
            if self.frames is None or "prediction" not in self.frames:
                raise ValidationError("config: mode 'local' requires frames.prediction")
        if self.mode == "force_sim":
            if self.force is None or not self.force.get("events"):
                raise ValidationError("config: mode 'force_sim' requires force.events")

    def kernel_spec(self):
        params = {
            "family": "gaussian",
            "length_scale": 1.0,
            "derivative_mode": False,
            "delta": 1e-5,
        }
        params.update(self.kernel)
        return KernelSpec(
            family=params["family"],
            length_scale=float(params["length_scale"]),
            derivative_mode=bool(params["derivative_mode"]),
            delta=float(params["delta"]),
        )

    def canonical(self):
        """JSON-ready echo of the effective configuration."""
        doc = {
            "mode": self.mode,
            "seed": self.seed,
            "kernel": self.kernel_spec().to_dict(),
            "lambda": self.lam,
            "n_components": self.n_components,
            "cov_output": self.cov_output,
        }
        for key, value in (
            ("data", self.data),
            ("zeta", self.zeta),
            ("n_reference", self.n_reference),
            ("queries", self.queries),
            ("desired_points", self.desired_points or None),
            ("superpose", self.superpose),
            ("frames", self.frames),
            ("time_scale", self.time_scale),
            ("force", self.force),
            ("model_in", self.model_in),
        ):
            if value is not None:
                doc[key] = value
        return doc


def exp_switch_priorities(times, n_branches=2):
    """Priorities exp(-t) vs 1 - exp(-t), clipped into (0, 1) and renormalized.

    The clipping keeps boundary times (t = 0) inside the open interval that
    priority-scaled Gaussian products require; the effect of a clipped weight
    1e-12 is a factor with essentially infinite covariance.
    """
    if n_branches != 2:
        raise ValidationError("the exp-switch profile is defined for two branches")
    t = np.asarray(times, dtype=float).ravel()
    first = np.exp(-t)
    gammas = np.stack([first, 1.0 - first], axis=1)
    gammas = np.clip(gammas, 1e-12, 1.0 - 1e-12)
    return gammas / gammas.sum(axis=1, keepdims=True)
