"""Synthetic optimal trajectories, seeded noise and Monte-Carlo
reconstruction experiments.

Noise uses NumPy's Philox counter-based generator keyed by
``(seed, sample)``.  For each sample the standard normals are drawn in
(trajectory, time index, coordinate) order, so sample ``s`` sees the same
stream under every amplitude and regardless of scheduling.
"""

import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import io
from .autonomous import (
    AutonomousLqProblem,
    BoundaryData,
    canonical_cost_of,
    optimal_trajectory,
    synthesis_pair,
)
from .errors import LqError, ValidationError
from .inverse import bundle_from_boundaries, identify_and_reconstruct

__all__ = [
    "ExperimentConfig",
    "SampleOutcome",
    "AmplitudeSummary",
    "ExperimentReport",
    "noise_generator",
    "perturb",
    "relative_error",
    "synthesize_bundle",
    "run_experiment",
    "write_report",
    "load_config",
    "worker_count",
]


@dataclass(frozen=True)
class ExperimentConfig:
    """Monte-Carlo protocol.  ``boundaries`` is a list of ``(x0, x1)``."""

    T: float = 1.0
    N: int = 20
    boundaries: tuple = None
    amplitudes: tuple = (0.0, 0.05, 0.1, 0.15, 0.2)
    samples: int = 100
    seed: int = 0
    norm: str = "spectral"
    refine: bool = True
    problem_path: str = None
    out_dir: str = None

    def __post_init__(self):
        if not self.T > 0:
            raise ValidationError(f"T must be positive, got {self.T}")
        if int(self.N) < 3:
            raise ValidationError(f"N must be at least 3, got {self.N}")
        if any(a < 0 for a in self.amplitudes):
            raise ValidationError("noise amplitudes must be nonnegative")
        if int(self.samples) < 1:
            raise ValidationError("sample count must be at least 1")
        if not 0 <= int(self.seed) < 2**64:
            raise ValidationError("seed must be an unsigned 64-bit integer")
        if self.norm not in ("spectral", "frobenius"):
            raise ValidationError(f"norm must be 'spectral' or 'frobenius', got {self.norm!r}")
        object.__setattr__(self, "amplitudes", tuple(float(a) for a in self.amplitudes))
        if self.boundaries is not None:
            object.__setattr__(
                self, "boundaries",
                tuple((np.asarray(a, float).ravel(), np.asarray(b, float).ravel())
                      for a, b in self.boundaries),
            )

    def boundary_set(self, n):
        """Configured boundaries, or ``0 -> e_i`` for each coordinate."""
        if self.boundaries is not None:
            for x0, x1 in self.boundaries:
                if x0.size != n or x1.size != n:
                    raise ValidationError(
                        f"boundary vectors of size {x0.size}/{x1.size} for n = {n}"
                    )
            return self.boundaries
        I = np.eye(n)
        return tuple((np.zeros(n), I[i]) for i in range(n))


def load_config(path, **overrides):
    """Read an :class:`ExperimentConfig` from JSON; ``None`` overrides are ignored."""
    d = io._read_json(path)
    known = set(ExperimentConfig.__dataclass_fields__)
    unknown = set(d) - known
    if unknown:
        raise io.FileFormatError(f"unknown config keys: {', '.join(sorted(unknown))}")
    if d.get("problem_path") and not os.path.isabs(d["problem_path"]):
        d["problem_path"] = str(Path(path).parent / d["problem_path"])
    d.update({k: v for k, v in overrides.items() if v is not None})
    if "boundaries" in d and d["boundaries"] is not None:
        d["boundaries"] = [(b[0], b[1]) for b in d["boundaries"]]
    if "amplitudes" in d:
        d["amplitudes"] = tuple(d["amplitudes"])
    return ExperimentConfig(**d)


def noise_generator(seed, sample):
    return np.random.Generator(np.random.Philox(key=np.array([seed, sample], dtype=np.uint64)))


def perturb(bundle, amplitude, seed, sample=0):
    """Add ``amplitude * N(0, 1)`` to every sampled coordinate.

    ``amplitude == 0`` returns the bundle unchanged (no arithmetic).
    """
    if amplitude < 0:
        raise ValidationError(f"amplitude must be nonnegative, got {amplitude}")
    if amplitude == 0:
        return bundle
    rng = noise_generator(seed, sample)
    sizes = [x.size for x in bundle.trajectories]
    z = rng.standard_normal(sum(sizes))
    out, start = [], 0
    for x, size in zip(bundle.trajectories, sizes):
        out.append(x + amplitude * z[start:start + size].reshape(x.shape))
        start += size
    return bundle.with_trajectories(out)


def relative_error(estimate, truth, norm="spectral"):
    order = 2 if norm == "spectral" else "fro"
    return float(np.linalg.norm(estimate - truth, order) / np.linalg.norm(truth, order))


def synthesize_bundle(problem, config):
    """Exact optimal trajectories for the configured boundary set."""
    return bundle_from_boundaries(problem, config.boundary_set(problem.n), config.T, config.N)


@dataclass(frozen=True)
class SampleOutcome:
    amplitude: float
    sample: int
    ok: bool
    K: np.ndarray = None
    R: np.ndarray = None
    err_K: float = math.nan
    err_R: float = math.nan
    stage: str = ""
    message: str = ""


@dataclass(frozen=True)
class AmplitudeSummary:
    amplitude: float
    successes: int
    K_mean: np.ndarray
    R_mean: np.ndarray
    err_K: float
    err_R: float


@dataclass(frozen=True)
class ExperimentReport:
    config: ExperimentConfig
    K_true: np.ndarray
    R_true: np.ndarray
    summaries: list
    outcomes: list
    overlay: dict = field(default_factory=dict)
    complete: bool = True


def worker_count():
    """Parallelism cap from ``INVLQ_THREADS`` (default: CPU count)."""
    raw = os.environ.get("INVLQ_THREADS")
    if raw:
        try:
            return max(1, int(raw))
        except ValueError:
            raise ValidationError(f"INVLQ_THREADS must be an integer, got {raw!r}") from None
    return os.cpu_count() or 1


def _one_sample(args):
    problem, bundle, truth, amplitude, sample, seed, norm, refine = args
    noisy = perturb(bundle, amplitude, seed, sample)
    try:
        rec = identify_and_reconstruct(noisy, problem.A, problem.B, refine_fit=refine)
    except LqError as exc:
        return SampleOutcome(amplitude, sample, False, stage=getattr(exc, "stage", ""),
                             message=str(exc))
    K, R = rec.cost.K, rec.cost.R
    return SampleOutcome(
        amplitude, sample, True, K, R,
        relative_error(K, truth.K, norm), relative_error(R, truth.R, norm),
    )


def _summarize(amplitude, outcomes, truth, norm):
    good = [o for o in outcomes if o.ok]
    if not good:
        nan = np.full_like(truth.K, np.nan), np.full_like(truth.R, np.nan)
        return AmplitudeSummary(amplitude, 0, nan[0], nan[1], math.nan, math.nan)
    K_mean = np.mean([o.K for o in good], axis=0)
    R_mean = np.mean([o.R for o in good], axis=0)
    return AmplitudeSummary(
        amplitude, len(good), K_mean, R_mean,
        relative_error(K_mean, truth.K, norm), relative_error(R_mean, truth.R, norm),
    )


def _overlay(problem, bundle, config, summary, truth):
    """Noisy samples, exact trajectories and trajectories of the mean
    reconstructed cost, all on the sampling grid."""
    noisy = perturb(bundle, summary.amplitude, config.seed, 0)
    data = {"amplitude": summary.amplitude, "times": bundle.t0 + bundle.step * np.arange(config.N + 1),
            "noisy": noisy.trajectories, "exact": bundle.trajectories, "reconstructed": None,
            "max_deviation": math.nan}
    if summary.successes == 0:
        return data
    try:
        est = AutonomousLqProblem.from_canonical(problem.A, problem.B, summary.K_mean, summary.R_mean)
        pair = synthesis_pair(est)
    except LqError:
        return data
    recon = [
        optimal_trajectory(pair, est, bd, data["times"]).states for bd in bundle.boundaries
    ]
    data["reconstructed"] = tuple(recon)
    data["max_deviation"] = float(max(np.max(np.abs(r - x)) for r, x in zip(recon, bundle.trajectories)))
    return data


def run_experiment(problem, config, progress=None):
    """Perturb-and-reconstruct loop over amplitudes and samples.

    Outcomes are folded in (amplitude, sample) order, so the report does
    not depend on worker scheduling.  On ``KeyboardInterrupt`` the samples
    finished so far are returned with ``complete=False``.
    """
    truth = canonical_cost_of(problem)
    bundle = synthesize_bundle(problem, config)
    tasks = [
        (problem, bundle, truth, a, s, config.seed, config.norm, config.refine)
        for a in config.amplitudes
        for s in range(config.samples)
    ]
    outcomes, complete = [], True
    workers = min(worker_count(), len(tasks))
    try:
        if workers > 1:
            with ProcessPoolExecutor(max_workers=workers) as pool:
                for o in pool.map(_one_sample, tasks, chunksize=max(1, len(tasks) // (4 * workers))):
                    outcomes.append(o)
                    if progress:
                        progress(o)
        else:
            for t in tasks:
                o = _one_sample(t)
                outcomes.append(o)
                if progress:
                    progress(o)
    except KeyboardInterrupt:
        complete = False

    summaries = []
    for a in config.amplitudes:
        group = [o for o in outcomes if o.amplitude == a]
        if group:
            summaries.append(_summarize(a, group, truth, config.norm))
    overlay = {}
    if summaries:
        overlay = _overlay(problem, bundle, config, summaries[-1], truth)
    return ExperimentReport(config, truth.K, truth.R, summaries, outcomes, overlay, complete)


def _num(v):
    return None if v is None or (isinstance(v, float) and math.isnan(v)) else v


def _report_dict(report):
    c = report.config
    return {
        "complete": report.complete,
        "config": {
            "T": c.T, "N": c.N, "samples": c.samples, "seed": c.seed, "norm": c.norm,
            "refine": c.refine, "amplitudes": list(c.amplitudes),
            "boundaries": None if c.boundaries is None
            else [[a.tolist(), b.tolist()] for a, b in c.boundaries],
        },
        "K_true": report.K_true.tolist(),
        "R_true": report.R_true.tolist(),
        "amplitudes": [
            {
                "amplitude": s.amplitude,
                "successes": s.successes,
                "K_mean": [[_num(v) for v in row] for row in s.K_mean.tolist()],
                "R_mean": [[_num(v) for v in row] for row in s.R_mean.tolist()],
                "err_K": _num(s.err_K),
                "err_R": _num(s.err_R),
            }
            for s in report.summaries
        ],
        "overlay_max_deviation": _num(report.overlay.get("max_deviation")),
    }


def write_report(report, out_dir):
    """Write ``report.json``, ``errors.csv``, ``samples.csv`` and ``overlay.csv``."""
    out = Path(out_dir)
    io.write_json(out / "report.json", _report_dict(report))
    f = io.fmt
    lines = ["amplitude,successes,err_K,err_R"]
    lines += [f"{f(s.amplitude)},{s.successes},{f(s.err_K)},{f(s.err_R)}" for s in report.summaries]
    _write_lines(out / "errors.csv", lines)

    lines = ["amplitude,sample,ok,stage,err_K,err_R,message"]
    for o in report.outcomes:
        msg = o.message.replace('"', "'")
        lines.append(f'{f(o.amplitude)},{o.sample},{int(o.ok)},{o.stage},{f(o.err_K)},{f(o.err_R)},"{msg}"')
    _write_lines(out / "samples.csv", lines)

    ov = report.overlay
    if ov:
        n = ov["exact"][0].shape[1]
        series = [("noisy", ov["noisy"]), ("exact", ov["exact"])]
        if ov["reconstructed"] is not None:
            series.append(("reconstructed", ov["reconstructed"]))
        lines = ["series,trajectory_id,t," + ",".join(f"x_{j + 1}" for j in range(n))]
        for name, trajs in series:
            for k, x in enumerate(trajs):
                for t, row in zip(ov["times"], x):
                    lines.append(f"{name},{k},{f(t)}," + ",".join(f(v) for v in row))
        _write_lines(out / "overlay.csv", lines)


def _write_lines(path, lines):
    try:
        Path(path).parent.mkdir(parents=True, exist_ok=True)
        Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")
    except OSError as exc:
        raise io.FileFormatError(f"cannot write {path}: {exc}") from exc
