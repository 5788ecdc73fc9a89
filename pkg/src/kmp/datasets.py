"""Synthetic demonstration generators for the bundled experiment presets.

Each generator draws a family of smooth trajectories around a parametric
base shape with seeded per-demo variation, standing in for recorded
demonstrations. All randomness flows through the seed argument.
"""

import numpy as np
from scipy.ndimage import gaussian_filter1d

from .frames import LocalFrame
from .mixture import DemoSet


def _smooth_noise(rng, n, dim, sigma, smoothing=12.0):
    """Band-limited noise: white noise blurred along the trajectory."""
    raw = rng.standard_normal((n, dim))
    return sigma * gaussian_filter1d(raw, smoothing, axis=0, mode="nearest")


def _letter_g_stroke(n):
    """Unit-scale 'G' stroke: open arc, then the inward bar."""
    u = np.linspace(0.0, 1.0, n)
    arc_end = 0.72
    pts = np.empty((n, 2))
    arc = u < arc_end
    theta = 1.0 + (u[arc] / arc_end) * 4.6
    pts[arc, 0] = np.cos(theta)
    pts[arc, 1] = np.sin(theta)
    start = np.array([np.cos(5.6), np.sin(5.6)])
    mid = np.array([0.85, 0.05])
    end = np.array([0.25, 0.0])
    tail = u[~arc]
    v = (tail - arc_end) / (1.0 - arc_end)
    seg = np.where(v < 0.5, v / 0.5, (v - 0.5) / 0.5)[:, None]
    first = v < 0.5
    pts[~arc] = np.where(
        first[:, None], start + seg * (mid - start), mid + seg * (end - mid)
    )
    return gaussian_filter1d(pts, n / 60.0, axis=0, mode="nearest")


def letter_g_demos(n_demos=5, n_points=200, duration=2.0, seed=0):
    """2-D handwriting-style demonstrations of the letter G.

    Returns a DemoSet with time input on a uniform grid over [0, duration]
    and 2-D position output, scaled to roughly a 20-unit workspace.
    """
    rng = np.random.default_rng(seed)
    t = np.linspace(0.0, duration, n_points)
    base = 10.0 * _letter_g_stroke(n_points)
    inputs = np.tile(t.reshape(1, -1, 1), (n_demos, 1, 1))
    outputs = np.empty((n_demos, n_points, 2))
    for h in range(n_demos):
        angle = rng.normal(0.0, 0.05)
        rot = np.array(
            [[np.cos(angle), -np.sin(angle)], [np.sin(angle), np.cos(angle)]]
        )
        scale = rng.normal(1.0, 0.03)
        shift = rng.normal(0.0, 0.3, size=2)
        outputs[h] = scale * base @ rot.T + shift + _smooth_noise(rng, n_points, 2, 0.15)
    return DemoSet(inputs, outputs)


def _min_jerk(u):
    return 10.0 * u**3 - 15.0 * u**4 + 6.0 * u**5


def transportation_demos(
    n_demos=5, n_points=100, duration=2.0, seed=0, start=None, end=None
):
    """3-D transportation demonstrations from varying starts to varying ends.

    Returns (demos, anchors) where anchors[h] = (start_h, end_h) are the
    per-demo task-parameter locations; each trajectory hits its own anchors
    exactly at the first and last sample. Frame-relative deformations vanish
    at the endpoints so the local patterns stay tight there.
    """
    rng = np.random.default_rng(seed)
    start = np.array([0.0, 0.0, 0.0] if start is None else start, dtype=float)
    end = np.array([0.4, 0.6, 0.1] if end is None else end, dtype=float)
    t = np.linspace(0.0, duration, n_points)
    u = t / duration
    blend = _min_jerk(u)[:, None]
    lift = np.outer(np.sin(np.pi * u), np.array([0.0, 0.0, 0.15]))
    bow = np.outer(np.sin(np.pi * u) ** 2, np.array([0.1, -0.05, 0.0]))
    inputs = np.tile(t.reshape(1, -1, 1), (n_demos, 1, 1))
    outputs = np.empty((n_demos, n_points, 3))
    anchors = []
    envelope = np.sin(np.pi * u)[:, None]
    for h in range(n_demos):
        p_s = start + rng.uniform(-0.1, 0.1, size=3)
        p_e = end + rng.uniform(-0.1, 0.1, size=3)
        path = p_s + blend * (p_e - p_s) + lift + bow
        path += envelope * _smooth_noise(rng, n_points, 3, 0.02)
        outputs[h] = path
        anchors.append((p_s, p_e))
    return DemoSet(inputs, outputs), anchors


def endpoint_frames(anchors):
    """Per-demo start/end frames for transportation-style tasks."""
    return [
        [
            LocalFrame.for_time_input(np.eye(3), np.asarray(p_s, dtype=float)),
            LocalFrame.for_time_input(np.eye(3), np.asarray(p_e, dtype=float)),
        ]
        for p_s, p_e in anchors
    ]


def reaching_demos(n_demos=6, n_points=100, duration=10.0, seed=0):
    """3-D reaching demonstrations for the force-adaptation scenario.

    Demo-to-demo variation is structural (arch height, lateral bow, endpoint
    jitter at the few-centimeter scale), giving the mid-trajectory variance a
    kinesthetic-teaching feel rather than sensor noise alone.
    """
    rng = np.random.default_rng(seed)
    p0 = np.array([0.1, -0.4, 0.30])
    p1 = np.array([0.5, 0.4, 0.15])
    t = np.linspace(0.0, duration, n_points)
    u = t / duration
    inputs = np.tile(t.reshape(1, -1, 1), (n_demos, 1, 1))
    outputs = np.empty((n_demos, n_points, 3))
    envelope = np.sin(np.pi * u)[:, None]
    for h in range(n_demos):
        # Smooth per-demo time warp: kinesthetic demos never share exact
        # timing, and the resulting velocity spread is what keeps later
        # via-point corrections from fighting overly confident derivatives.
        warp = np.clip(u + rng.normal(0.0, 0.06) * np.sin(np.pi * u), 0.0, 1.0)
        blend = _min_jerk(warp)[:, None]
        jitter0 = rng.normal(0.0, 0.02, size=3)
        jitter1 = rng.normal(0.0, 0.02, size=3)
        arch = np.outer(np.sin(np.pi * warp), [0.0, 0.0, 0.12 * (1.0 + rng.normal(0.0, 0.3))])
        bow = np.outer(np.sin(np.pi * warp) ** 2, rng.normal(0.0, 0.04, size=2).tolist() + [0.0])
        path = (p0 + jitter0) + blend * ((p1 + jitter1) - (p0 + jitter0)) + arch + bow
        path += envelope * _smooth_noise(rng, n_points, 3, 0.12)
        outputs[h] = path
    return DemoSet(inputs, outputs)


def third_hand_demos(n_demos=5, n_points=100, seed=0):
    """Collaboration-style demos: 6-D hand-position input, 3-D tool output.

    The two simulated hands trace smooth phase-driven paths; the output
    follows a distinct multi-segment path as a function of the same phase,
    so the task is learnable purely from the 6-D input.
    """
    rng = np.random.default_rng(seed)
    u = np.linspace(0.0, 1.0, n_points)

    left = np.stack(
        [
            0.3 + 0.25 * np.sin(1.4 * np.pi * u),
            0.1 + 0.4 * u,
            0.2 + 0.1 * np.cos(np.pi * u),
        ],
        axis=1,
    )
    right = np.stack(
        [
            -0.2 + 0.3 * u**2,
            0.5 - 0.35 * u,
            0.15 + 0.12 * np.sin(np.pi * u + 0.4),
        ],
        axis=1,
    )
    tool = np.stack(
        [
            0.1 + 0.3 * _min_jerk(u) + 0.08 * np.sin(2 * np.pi * u),
            -0.1 + 0.5 * u,
            0.25 + 0.15 * np.sin(np.pi * u) - 0.1 * u**2,
        ],
        axis=1,
    )

    inputs = np.empty((n_demos, n_points, 6))
    outputs = np.empty((n_demos, n_points, 3))
    for h in range(n_demos):
        inputs[h] = np.hstack(
            [
                left + _smooth_noise(rng, n_points, 3, 0.01),
                right + _smooth_noise(rng, n_points, 3, 0.01),
            ]
        )
        outputs[h] = tool + _smooth_noise(rng, n_points, 3, 0.01)
    return DemoSet(inputs, outputs)


GENERATORS = {
    "letter-g": letter_g_demos,
    "transportation": transportation_demos,
    "reaching": reaching_demos,
    "third-hand": third_hand_demos,
}
