"""File formats: demonstration CSV, trajectory CSV, versioned model JSON.

All writes are atomic (temp file in the target directory, then rename) and
floats are written with 17 significant digits so values round-trip exactly.
"""

import csv
import json
import os
import tempfile

import numpy as np

from .errors import ValidationError
from .mixture import DemoSet

_FLOAT_FMT = "{:.17g}"


def _atomic_write(path, text):
    path = os.fspath(path)
    directory = os.path.dirname(path) or "."
    os.makedirs(directory, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-", suffix=".part")
    try:
        with os.fdopen(fd, "w") as handle:
            handle.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.remove(tmp)
        raise


def save_json(path, document):
    _atomic_write(path, json.dumps(document, indent=2, sort_keys=True) + "\n")


def load_json(path):
    with open(path) as handle:
        return json.load(handle)


def _demo_sort_key(demo_id):
    try:
        return (0, float(demo_id), demo_id)
    except ValueError:
        return (1, 0.0, demo_id)


def load_demos(path, fmt="csv"):
    """Load a DemoSet from a demo CSV.

    Expected header: demo_id, s_1..s_I, xi_1..xi_O. Rows are grouped by
    demo_id (file order within a demo is kept) and demos are ordered by
    demo_id, numerically when possible. All demos must have equal length.
    """
    if fmt != "csv":
        raise ValidationError(f"unsupported demo format {fmt!r}")
    with open(path, newline="") as handle:
        reader = csv.reader(handle)
        try:
            header = next(reader)
        except StopIteration:
            raise ValidationError(f"{path}: empty file") from None
        header = [h.strip() for h in header]
        if not header or header[0] != "demo_id":
            raise ValidationError(f"{path}: first column must be demo_id")
        n_in = sum(1 for h in header if h.startswith("s_"))
        n_out = sum(1 for h in header if h.startswith("xi_"))
        expected = (
            ["demo_id"]
            + [f"s_{i}" for i in range(1, n_in + 1)]
            + [f"xi_{i}" for i in range(1, n_out + 1)]
        )
        if header != expected or n_in == 0 or n_out == 0:
            raise ValidationError(
                f"{path}: header must be demo_id,s_1..s_I,xi_1..xi_O, got {header}"
            )
        groups = {}
        for row_idx, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(header):
                raise ValidationError(
                    f"{path}: row {row_idx} has {len(row)} cells, expected {len(header)}"
                )
            values = []
            for col, cell in zip(header[1:], row[1:]):
                try:
                    values.append(float(cell))
                except ValueError:
                    raise ValidationError(
                        f"{path}: non-numeric value {cell!r} at row {row_idx}, column {col}"
                    ) from None
            groups.setdefault(row[0], []).append(values)

    if len(groups) < 2:
        raise ValidationError(f"{path}: need at least two demonstrations")
    lengths = {demo: len(rows) for demo, rows in groups.items()}
    if len(set(lengths.values())) != 1:
        listing = ", ".join(f"{d}:{n}" for d, n in sorted(lengths.items()))
        raise ValidationError(f"{path}: demos have unequal lengths ({listing})")
    order = sorted(groups, key=_demo_sort_key)
    data = np.array([groups[d] for d in order], dtype=float)
    return DemoSet(data[:, :, :n_in], data[:, :, n_in:])


def save_demos(demos, path):
    """Write a DemoSet in the demo CSV format."""
    header = (
        ["demo_id"]
        + [f"s_{i}" for i in range(1, demos.input_dim + 1)]
        + [f"xi_{i}" for i in range(1, demos.output_dim + 1)]
    )
    lines = [",".join(header)]
    for h in range(demos.n_demos):
        for n in range(demos.length):
            cells = [str(h)] + [
                _FLOAT_FMT.format(v)
                for v in np.concatenate([demos.inputs[h, n], demos.outputs[h, n]])
            ]
            lines.append(",".join(cells))
    _atomic_write(path, "\n".join(lines) + "\n")


def save_trajectory(path, inputs, means, covariances=None, cov_output="diag"):
    """Write a predicted trajectory CSV.

    Columns: s_1..s_I, mean_1..mean_O, then covariance columns per
    ``cov_output``: "diag" (cov_d_d), "full" (cov_i_j row-major) or "none".
    """
    inputs = np.atleast_2d(np.asarray(inputs, dtype=float))
    means = np.atleast_2d(np.asarray(means, dtype=float))
    o = means.shape[1]
    header = [f"s_{i}" for i in range(1, inputs.shape[1] + 1)]
    header += [f"mean_{i}" for i in range(1, o + 1)]
    if cov_output not in ("diag", "full", "none"):
        raise ValidationError(f"unknown cov_output {cov_output!r}")
    if cov_output != "none":
        if covariances is None:
            raise ValidationError("covariances are required unless cov_output='none'")
        covariances = np.asarray(covariances, dtype=float)
        if cov_output == "diag":
            header += [f"cov_{i}_{i}" for i in range(1, o + 1)]
        else:
            header += [f"cov_{i}_{j}" for i in range(1, o + 1) for j in range(1, o + 1)]
    lines = [",".join(header)]
    for q in range(inputs.shape[0]):
        cells = list(inputs[q]) + list(means[q])
        if cov_output == "diag":
            cells += list(np.diag(covariances[q]))
        elif cov_output == "full":
            cells += list(covariances[q].ravel())
        lines.append(",".join(_FLOAT_FMT.format(v) for v in cells))
    _atomic_write(path, "\n".join(lines) + "\n")
