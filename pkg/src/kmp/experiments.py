"""Experiment runner: the pipelines behind the CLI modes.

Each mode consumes a validated :class:`ExperimentConfig`, runs the relevant
learning/adaptation pipeline, writes artifacts (trajectory CSV, model JSON,
report JSON) atomically, and returns the report. Given a fixed seed the
report is byte-reproducible; wall-clock timing goes to the log and a
separate run_meta.json so it never perturbs the report.
"""

import logging
import os
import time
from contextlib import contextmanager
from dataclasses import dataclass

import numpy as np

from . import datasets
from .config import ExperimentConfig, exp_switch_priorities
from .errors import NumericalError, ValidationError
from .frames import LocalFrame, fit_local_kmp_set
from .io import load_demos, load_json, save_json, save_trajectory
from .mixture import GaussianMixtureRegressor, with_derivative_outputs
from .model import KMP, TimeScale, position_desired_point
from .reference import DesiredPoint, ReferenceDatabase, superpose
from .validation import as_points

logger = logging.getLogger(__name__)


@contextmanager
def _stage(name):
    """Re-raise module errors with the failing stage prepended."""
    try:
        yield
    except (ValidationError, NumericalError) as exc:
        raise type(exc)(f"stage {name!r}: {exc}") from exc


@dataclass(frozen=True)
class ForceEvent:
    """A sensed interaction: time, force vector, and end-effector position."""

    time: float
    force: np.ndarray
    position: np.ndarray

    def __post_init__(self):
        force = np.atleast_1d(np.asarray(self.force, dtype=float))
        position = np.atleast_1d(np.asarray(self.position, dtype=float))
        if not (np.all(np.isfinite(force)) and np.all(np.isfinite(self.time))):
            raise ValidationError("force event rejected: non-finite entries")
        if not np.all(np.isfinite(position)):
            raise ValidationError("force event rejected: non-finite position")
        if force.shape != position.shape:
            raise ValidationError("force and position dimensions disagree")
        for name, arr in (("force", force), ("position", position)):
            arr = np.array(arr)
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        object.__setattr__(self, "time", float(self.time))


def force_sim_step(model, event, gain, delta_t, threshold, zeta=None):
    """One step of force-driven adaptation.

    Below the force threshold the model is returned untouched. Above it, two
    desired points enter the database: the displaced position p + K_f F at
    time t + delta_t, then the current position at time t (which keeps the
    adapted trajectory anchored where the interaction happened). Returns
    (model, applied).
    """
    if not isinstance(event, ForceEvent):
        raise ValidationError("event must be a ForceEvent")
    model._check_fitted()
    if model.input_dim_ != 1:
        raise ValidationError("force adaptation requires a time-driven model")
    base_dim = model.output_dim_ // 2 if model.kernel_.derivative_mode else model.output_dim_
    if event.force.shape[0] != base_dim:
        raise ValidationError(
            f"force dimension {event.force.shape[0]} does not match the "
            f"model position dimension {base_dim}"
        )
    gain = np.asarray(gain, dtype=float)
    if gain.ndim == 0:
        gain = float(gain) * np.eye(base_dim)
    elif gain.shape != (base_dim, base_dim):
        raise ValidationError(f"gain must be a scalar or a {base_dim}x{base_dim} matrix")
    if not delta_t > 0:
        raise ValidationError("delta_t must be positive")

    if np.linalg.norm(event.force) <= threshold:
        return model, False
    displaced = position_desired_point(
        [event.time + delta_t], event.position + gain @ event.force, model=model
    )
    anchor = position_desired_point([event.time], event.position, model=model)
    return model.adapted([displaced, anchor], zeta=zeta), True


# -- pipeline pieces -------------------------------------------------------


def _load_demoset(cfg):
    data = cfg.data
    if "path" in data:
        return load_demos(data["path"], data.get("format", "csv")), None
    name = data["synthetic"]
    if name not in datasets.GENERATORS:
        raise ValidationError(
            f"unknown synthetic dataset {name!r}; available: {sorted(datasets.GENERATORS)}"
        )
    kwargs = {"seed": data.get("seed", cfg.seed)}
    for key in ("n_demos", "n_points", "duration"):
        if key in data:
            kwargs[key] = data[key]
    result = datasets.GENERATORS[name](**kwargs)
    if name == "transportation":
        return result
    return result, None


@dataclass
class Pipeline:
    demos: object
    anchors: object
    regressor: object
    database: object
    model: object


def _fit_pipeline(cfg):
    with _stage("load-demos"):
        demos, anchors = _load_demoset(cfg)
    kern = cfg.kernel_spec()
    fit_demos = demos
    if kern.derivative_mode:
        with _stage("derivative-outputs"):
            fit_demos = with_derivative_outputs(demos)
    with _stage("fit-gmm"):
        regressor = GaussianMixtureRegressor(
            n_components=cfg.n_components, random_state=cfg.seed
        ).fit_demos(fit_demos)
    n_ref = cfg.n_reference or demos.length
    if demos.input_dim == 1:
        t = demos.inputs[..., 0]
        ref_inputs = np.linspace(t.min(), t.max(), n_ref).reshape(-1, 1)
    else:
        ref_inputs = regressor.sample_inputs(n_ref, random_state=cfg.seed + 1)
    with _stage("extract-reference"):
        database = regressor.extract_reference(ref_inputs)
    with _stage("build-kmp"):
        model = KMP(kernel=kern, lam=cfg.lam).fit(database)
    return Pipeline(demos, anchors, regressor, database, model)


def _obtain_model(cfg):
    if cfg.model_in is not None:
        with _stage("load-model"):
            return KMP.from_dict(load_json(cfg.model_in)), None
    pipe = _fit_pipeline(cfg)
    return pipe.model, pipe


def _query_inputs(cfg, model):
    q = cfg.queries
    if "values" in q:
        return as_points(np.array(q["values"], dtype=float), dim=model.input_dim_, name="queries")
    if model.input_dim_ == 1:
        t = model.database_.inputs[:, 0]
        return np.linspace(t.min(), t.max(), int(q.get("num", 200))).reshape(-1, 1)
    return np.array(model.database_.inputs)


def _materialize_points(entries, model):
    points = []
    for entry in entries:
        inp = np.asarray(entry["input"], dtype=float)
        if "position" in entry:
            points.append(position_desired_point(inp, entry["position"], model=model))
            continue
        mean = np.asarray(entry["mean"], dtype=float)
        cov = entry.get("cov")
        if cov is None:
            cov = 1e-6 * np.eye(mean.shape[0])
        elif np.isscalar(cov):
            cov = float(cov) * np.eye(mean.shape[0])
        else:
            cov = np.asarray(cov, dtype=float).reshape(mean.shape[0], mean.shape[0])
        points.append(DesiredPoint(inp, mean, cov))
    return points


def _position_block(model, values):
    if model is not None and model.kernel_.derivative_mode:
        return values[..., : model.output_dim_ // 2]
    return values


def _via_point_errors(predict_fn, points, position_dim=None):
    rows = []
    for pt in points:
        pred = np.asarray(predict_fn(np.reshape(pt.input, (1, -1))))[0]
        target = pt.mean
        if position_dim is not None:
            pred = pred[:position_dim]
            target = target[:position_dim]
        err = pred - target
        rows.append(
            {
                "input": pt.input.tolist(),
                "error_norm": float(np.linalg.norm(err)),
                "max_abs_error": float(np.abs(err).max()),
            }
        )
    return rows


def _parse_frame(raw, input_dim):
    if "A" in raw or "b" in raw:
        a = np.asarray(raw.get("A"), dtype=float)
        b = np.asarray(raw.get("b"), dtype=float)
        if input_dim == 1:
            return LocalFrame.for_time_input(a, b)
        return LocalFrame(a, b, a, b)
    return LocalFrame(
        np.asarray(raw["A_in"], dtype=float),
        np.asarray(raw["b_in"], dtype=float),
        np.asarray(raw["A_out"], dtype=float),
        np.asarray(raw["b_out"], dtype=float),
    )


# -- mode handlers ----------------------------------------------------------


def _run_fit(cfg, out):
    pipe = _fit_pipeline(cfg)
    save_json(os.path.join(out, cfg.output.get("model", "model.json")), pipe.model.to_dict())
    save_json(os.path.join(out, "gmm.json"), pipe.regressor.to_dict())
    metrics = {
        "database_size": len(pipe.database),
        "em_iterations": int(pipe.regressor.n_iter_),
        "final_log_likelihood": float(pipe.regressor.log_likelihoods_[-1]),
    }
    return metrics, {"model": cfg.output.get("model", "model.json"), "gmm": "gmm.json"}


def _predict_artifacts(cfg, out, model, queries):
    name = cfg.output.get("trajectory", "trajectory.csv")
    if cfg.time_scale is not None:
        src = float(model.database_.inputs[:, 0].max())
        scale = TimeScale(duration_src=src, duration_dst=float(cfg.time_scale["duration"]))
        grid = np.linspace(0.0, scale.duration_dst, queries.shape[0])
        means, covs = model.predict_time_scaled(scale, grid)
        queries = grid.reshape(-1, 1)
    else:
        means = model.predict(queries)
        covs = model.predict_cov(queries) if cfg.cov_output != "none" else None
    save_trajectory(os.path.join(out, name), queries, means, covs, cfg.cov_output)
    return name, queries, means


def _run_predict(cfg, out):
    model, _ = _obtain_model(cfg)
    queries = _query_inputs(cfg, model)
    name, queries, _ = _predict_artifacts(cfg, out, model, queries)
    return {"n_queries": int(queries.shape[0])}, {"trajectory": name}


def _run_adapt(cfg, out):
    model, _ = _obtain_model(cfg)
    points = _materialize_points(cfg.desired_points, model)
    with _stage("adapt"):
        adapted = model.adapted(points, zeta=cfg.zeta)
    queries = _query_inputs(cfg, adapted)
    name, _, _ = _predict_artifacts(cfg, out, adapted, queries)
    model_name = cfg.output.get("model", "model.json")
    save_json(os.path.join(out, model_name), adapted.to_dict())
    pos_dim = adapted.output_dim_ // 2 if adapted.kernel_.derivative_mode else None
    metrics = {
        "database_size_before": len(model.database_),
        "database_size_after": len(adapted.database_),
        "via_point_errors": _via_point_errors(adapted.predict, points, pos_dim),
    }
    return metrics, {"trajectory": name, "model": model_name}


def _run_superpose(cfg, out):
    model, _ = _obtain_model(cfg)
    grid = np.array(model.database_.inputs)
    branch_dbs = []
    for b_idx, branch in enumerate(cfg.superpose["branches"]):
        points = _materialize_points(branch.get("desired_points", []), model)
        with _stage(f"superpose-branch-{b_idx}"):
            adapted = model.adapted(points, zeta=cfg.zeta) if points else model
            means, covs = adapted.predict(grid), adapted.predict_cov(grid)
            branch_dbs.append(ReferenceDatabase(grid, means, covs))
    priorities = cfg.superpose["priorities"]
    if priorities.get("kind") == "exp-switch":
        gammas = exp_switch_priorities(grid[:, 0], len(branch_dbs))
    elif "values" in priorities:
        gammas = np.asarray(priorities["values"], dtype=float)
    else:
        raise ValidationError("superpose priorities need kind='exp-switch' or values")
    with _stage("superpose-mix"):
        mixed_db = superpose(branch_dbs, gammas)
        mixed = KMP(kernel=model.kernel_, lam=model.lam).fit(mixed_db)
    queries = _query_inputs(cfg, mixed)
    name, _, _ = _predict_artifacts(cfg, out, mixed, queries)
    pos = model.output_dim_ // 2 if model.kernel_.derivative_mode else model.output_dim_
    ends = {}
    for label, idx in (("first", 0), ("last", len(grid) - 1)):
        mixed_pt = mixed.predict(grid[idx : idx + 1])[0][:pos]
        ends[label] = [
            float(np.linalg.norm(mixed_pt - db.means[idx][:pos])) for db in branch_dbs
        ]
    metrics = {"branch_distances_at_ends": ends, "n_support_points": int(len(grid))}
    return metrics, {"trajectory": name}


def _run_local(cfg, out):
    with _stage("load-demos"):
        demos, anchors = _load_demoset(cfg)
    kern = cfg.kernel_spec()
    if kern.derivative_mode:
        raise ValidationError("local mode supports position outputs only")
    training = (cfg.frames or {}).get("training", "demo-endpoints")
    if training == "demo-endpoints":
        if anchors is None:
            anchors = [
                (demos.outputs[h, 0], demos.outputs[h, -1]) for h in range(demos.n_demos)
            ]
        demo_frames = datasets.endpoint_frames(anchors)
    else:
        demo_frames = [
            [_parse_frame(fr, demos.input_dim) for fr in per_demo] for per_demo in training
        ]
    prediction_frames = [
        _parse_frame(fr, demos.input_dim) for fr in cfg.frames["prediction"]
    ]
    n_ref = cfg.n_reference or demos.length
    t = demos.inputs[..., 0]
    ref_inputs = np.linspace(t.min(), t.max(), n_ref).reshape(-1, 1)
    with _stage("fit-local"):
        local_set = fit_local_kmp_set(
            demos,
            demo_frames,
            prediction_frames,
            ref_inputs,
            kernel=kern,
            lam=cfg.lam,
            n_components=cfg.n_components,
            random_state=cfg.seed,
        )
    points = _materialize_points(cfg.desired_points, None)
    if points:
        with _stage("update-local"):
            local_set = local_set.updated(points, zeta=cfg.zeta)
    queries = np.linspace(t.min(), t.max(), int(cfg.queries.get("num", 200))).reshape(-1, 1)
    means, covs = local_set.predict_dist(queries)
    name = cfg.output.get("trajectory", "trajectory.csv")
    save_trajectory(os.path.join(out, name), queries, means, covs, cfg.cov_output)
    metrics = {
        "n_frames": local_set.n_frames,
        "via_point_errors": _via_point_errors(local_set.predict, points),
    }
    return metrics, {"trajectory": name}


def _run_force_sim(cfg, out):
    model, _ = _obtain_model(cfg)
    force = cfg.force
    base_dim = model.output_dim_ // 2 if model.kernel_.derivative_mode else model.output_dim_
    gain = np.asarray(force.get("gain", 0.006), dtype=float)
    if gain.ndim == 0:
        gain = float(gain) * np.eye(base_dim)
    delta_t = float(force.get("delta_t", 1.0))
    threshold = float(force.get("threshold", 10.0))
    events = sorted(force["events"], key=lambda e: float(e["t"]))
    log_rows = []
    applied_points = []
    for entry in events:
        t = float(entry["t"])
        f = np.asarray(entry["force"], dtype=float)
        if "position" in entry:
            position = np.asarray(entry["position"], dtype=float)
        else:
            position = _position_block(model, model.predict([[t]]))[0]
        event = ForceEvent(t, f, position)
        with _stage("force-step"):
            model, applied = force_sim_step(model, event, gain, delta_t, threshold, cfg.zeta)
        if applied:
            applied_points.append((t + delta_t, position + gain @ f))
        log_rows.append(
            {
                "t": t,
                "force_norm": float(np.linalg.norm(f)),
                "applied": bool(applied),
                "database_size": len(model.database_),
            }
        )
    queries = _query_inputs(cfg, model)
    name, _, _ = _predict_artifacts(cfg, out, model, queries)
    model_name = cfg.output.get("model", "model.json")
    save_json(os.path.join(out, model_name), model.to_dict())
    via = []
    for t_target, target in applied_points:
        pred = _position_block(model, model.predict([[t_target]]))[0]
        via.append(
            {
                "t": float(t_target),
                "error_norm": float(np.linalg.norm(pred - target)),
            }
        )
    metrics = {"events": log_rows, "via_point_errors": via}
    return metrics, {"trajectory": name, "model": model_name}


_HANDLERS = {
    "fit": _run_fit,
    "predict": _run_predict,
    "adapt": _run_adapt,
    "superpose": _run_superpose,
    "local": _run_local,
    "force_sim": _run_force_sim,
}


def run_experiment(config, out_dir=None):
    """Run one experiment and write its artifacts.

    Returns the report document (also written to report.json in the output
    directory). Identical config and seed produce byte-identical reports.
    """
    if not isinstance(config, ExperimentConfig):
        config = ExperimentConfig.from_dict(config)
    out = out_dir or config.output.get("dir", "out")
    started = time.perf_counter()
    metrics, artifacts = _HANDLERS[config.mode](config, out)
    report_name = config.output.get("report", "report.json")
    report = {
        "version": 1,
        "mode": config.mode,
        "seed": config.seed,
        "parameters": config.canonical(),
        "metrics": metrics,
        "artifacts": artifacts,
    }
    save_json(os.path.join(out, report_name), report)
    elapsed = time.perf_counter() - started
    save_json(os.path.join(out, "run_meta.json"), {"runtime_seconds": elapsed})
    logger.info("mode=%s finished in %.3fs, report at %s", config.mode, elapsed, out)
    return report
