"""File formats: JSON problems and configs, CSV bundles and trajectories.

Problems are JSON objects ``{n, m, A, B, Q, S, R}`` with row-major nested
lists.  The optional key ``"cross_term"`` selects how ``S`` enters the
running cost: ``"2xSu"`` (default, ``x'Qx + 2x'Su + u'Ru``) or ``"xSu"``
(``x'Qx + x'Su + u'Ru``, stored internally as ``S / 2``).

Time-varying problems set ``"kind": "time_varying"`` and give ``"times"``
plus one matrix per time for each coefficient.  Coefficients are
interpolated by cubic splines, periodic when ``"period"`` is given.

Bundles are CSV files with header ``sample_time,trajectory_id,x_1..x_n``.
The prescribed boundary data, when known, go to a JSON sidecar named
``<bundle>.boundaries.json``.
"""

import csv
import json
from pathlib import Path

import numpy as np
from scipy.interpolate import CubicSpline

from .autonomous import AutonomousLqProblem, BoundaryData
from .errors import LqError
from .inverse import TrajectoryBundle

__all__ = [
    "FileFormatError",
    "load_problem",
    "problem_to_dict",
    "save_problem",
    "write_bundle",
    "read_bundle",
    "write_trajectory",
    "write_json",
    "fmt",
]


class FileFormatError(LqError):
    """Malformed or unreadable input file."""


def fmt(v):
    """Shortest round-tripping text for a float."""
    return repr(float(v))


def _matrix(d, key, shape):
    if key not in d:
        raise FileFormatError(f"missing key {key!r}")
    M = np.asarray(d[key], dtype=float)
    if M.shape != shape:
        raise FileFormatError(f"{key} has shape {M.shape}, expected {shape}")
    return M


def _read_json(path):
    try:
        with open(path, encoding="utf-8") as fh:
            return json.load(fh)
    except OSError as exc:
        raise FileFormatError(f"cannot read {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise FileFormatError(f"{path} is not valid JSON: {exc}") from exc


def _cross_factor(d):
    conv = d.get("cross_term", "2xSu")
    if conv not in ("2xSu", "xSu"):
        raise FileFormatError(f"cross_term must be '2xSu' or 'xSu', got {conv!r}")
    return 1.0 if conv == "2xSu" else 0.5


def load_problem(path):
    """Read a problem file; returns an autonomous or time-varying problem."""
    d = _read_json(path)
    try:
        n, m = int(d["n"]), int(d["m"])
    except (KeyError, TypeError, ValueError) as exc:
        raise FileFormatError(f"{path}: integer keys 'n' and 'm' are required") from exc
    if d.get("kind", "autonomous") == "time_varying":
        return _load_time_varying(d, n, m)
    shapes = {"A": (n, n), "B": (n, m), "Q": (n, n), "S": (n, m), "R": (m, m)}
    M = {k: _matrix(d, k, s) for k, s in shapes.items()}
    M["S"] = _cross_factor(d) * M["S"]
    return AutonomousLqProblem(**M)


def _load_time_varying(d, n, m):
    from .timevarying import TimeVaryingLqProblem

    times = np.asarray(d.get("times", []), dtype=float)
    if times.ndim != 1 or times.size < 4 or np.any(np.diff(times) <= 0):
        raise FileFormatError("'times' must be an increasing list of at least 4 values")
    if int(d.get("interpolation_order", 3)) != 3:
        raise FileFormatError("only interpolation_order 3 is supported")
    period = d.get("period")
    shapes = {"A": (n, n), "B": (n, m), "Q": (n, n), "S": (n, m), "R": (m, m)}
    fns = {}
    for key, shape in shapes.items():
        vals = np.asarray(d.get(key), dtype=float)
        if vals.shape != (times.size,) + shape:
            raise FileFormatError(
                f"{key} table has shape {vals.shape}, expected {(times.size,) + shape}"
            )
        if key == "S":
            vals = _cross_factor(d) * vals
        if period is not None:
            if not np.allclose(vals[0], vals[-1], atol=1e-12):
                raise FileFormatError(f"{key} table is not periodic (first and last rows differ)")
            vals = vals.copy()
            vals[-1] = vals[0]
            spline = CubicSpline(times, vals, axis=0, bc_type="periodic")
        else:
            spline = CubicSpline(times, vals, axis=0)
        fns[key] = _wrap(spline, times[0], period)
    settings = {k: float(d[k]) for k in ("step", "tolerance") if k in d}
    return TimeVaryingLqProblem(
        fns["A"], fns["B"], fns["Q"], fns["S"], fns["R"], n, m,
        period=None if period is None else float(period), **settings,
    )


def _wrap(spline, start, period):
    if period is None:
        return lambda t: spline(t)
    return lambda t: spline(start + np.mod(t - start, period))


def problem_to_dict(problem):
    """JSON-ready dict of an autonomous problem (``2x'Su`` convention)."""
    return {
        "n": problem.n,
        "m": problem.m,
        **{k: getattr(problem, k).tolist() for k in "ABQSR"},
    }


def write_json(path, obj):
    """Deterministic JSON: sorted keys, fixed indentation, trailing newline."""
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    except OSError as exc:
        raise FileFormatError(f"cannot write {path}: {exc}") from exc


def save_problem(path, problem):
    write_json(path, problem_to_dict(problem))


def _sidecar(path):
    path = Path(path)
    return path.with_name(path.name + ".boundaries.json")


def write_bundle(path, bundle):
    path = Path(path)
    n = bundle.n
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["sample_time", "trajectory_id"] + [f"x_{j + 1}" for j in range(n)])
            for k, x in enumerate(bundle.trajectories):
                for i, row in enumerate(x):
                    w.writerow([fmt(bundle.t0 + i * bundle.step), k] + [fmt(v) for v in row])
    except OSError as exc:
        raise FileFormatError(f"cannot write {path}: {exc}") from exc
    side = {"t0": bundle.t0, "step": bundle.step, "boundaries": None}
    if bundle.boundaries is not None:
        side["boundaries"] = [
            {"t0": b.t0, "t1": b.t1, "x0": b.x0.tolist(), "x1": b.x1.tolist()}
            for b in bundle.boundaries
        ]
    write_json(_sidecar(path), side)


def read_bundle(path):
    """Read a bundle CSV (and its sidecar when present)."""
    path = Path(path)
    try:
        with open(path, newline="", encoding="utf-8") as fh:
            rows = list(csv.reader(fh))
    except OSError as exc:
        raise FileFormatError(f"cannot read {path}: {exc}") from exc
    if not rows or rows[0][:2] != ["sample_time", "trajectory_id"] or len(rows[0]) < 3:
        raise FileFormatError(f"{path}: header must be sample_time,trajectory_id,x_1,...")
    try:
        data = np.array([[float(v) for v in r] for r in rows[1:] if r], dtype=float)
    except ValueError as exc:
        raise FileFormatError(f"{path}: non-numeric entry ({exc})") from exc
    if data.size == 0:
        raise FileFormatError(f"{path}: no samples")
    ids = data[:, 1].astype(int)
    trajs, times = [], []
    for k in sorted(set(ids.tolist())):
        sel = data[ids == k]
        sel = sel[np.argsort(sel[:, 0], kind="stable")]
        times.append(sel[:, 0])
        trajs.append(sel[:, 2:])
    steps = np.concatenate([np.diff(t) for t in times])
    if steps.size == 0:
        raise FileFormatError(f"{path}: trajectories need at least two samples")
    step = float(np.mean(steps))
    if np.max(np.abs(steps - step)) > 1e-9 * max(1.0, step):
        raise FileFormatError(f"{path}: sample times are not uniformly spaced")
    t0, boundaries = float(times[0][0]), None
    side = _sidecar(path)
    if side.exists():
        meta = _read_json(side)
        step = float(meta.get("step", step))
        t0 = float(meta.get("t0", t0))
        if meta.get("boundaries") is not None:
            boundaries = [
                BoundaryData(b["t0"], b["t1"], b["x0"], b["x1"]) for b in meta["boundaries"]
            ]
    return TrajectoryBundle(step, trajs, t0, boundaries)


def write_trajectory(path, traj):
    """Columns ``t, x_*, p_*, u_*`` (costates and controls when present)."""
    path = Path(path)
    cols = [("x", traj.states), ("p", traj.costates), ("u", traj.controls)]
    cols = [(name, np.atleast_2d(M)) for name, M in cols if M is not None]
    header = ["t"] + [f"{name}_{j + 1}" for name, M in cols for j in range(M.shape[1])]
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(header)
            for i, t in enumerate(traj.times):
                w.writerow([fmt(t)] + [fmt(v) for _, M in cols for v in M[i]])
    except OSError as exc:
        raise FileFormatError(f"cannot write {path}: {exc}") from exc
