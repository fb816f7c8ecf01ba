"""Measure per-noise-level prediction error and interpolate it.

For a grid of ᾱ values, each dataset sample is diffused with fresh noise
(``n_draws`` times), the predictor is queried, and the per-pair statistic

    δ = (1/d)·‖ε̂ − ε‖²          (same ε diffused in and subtracted out)

is averaged into the knot value Δ(ᾱ).  The resulting (ᾱ, Δ) knots define the
piecewise-linear error map f_Δ used by the trajectory objective; outside the
knot span the map clamps to the nearest knot (Δ is asymptotically flat at
both ends for the analytic predictors and clamping never goes negative).

Accumulation uses Welford/Chan merging so knot means and standard errors are
stable regardless of chunking.
"""

import csv
import io
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .artifacts import read_json, write_json
from .denoisers import Denoiser
from .forward import NoiseSchedule
from .seeding import child_rng, child_seed_sequence
from .trajectory import half_log_snr

__all__ = [
    "ErrorProfile",
    "ErrorHistogram",
    "profile",
    "f_delta",
    "f_delta_slope",
    "error_histogram",
    "default_grid",
    "HISTOGRAM_BINS",
]

HISTOGRAM_BINS = 200


class _RunningMoments:
    """Streaming count/mean/M2 with batch updates (Chan merge)."""

    def __init__(self):
        self.n = 0
        self.mean = 0.0
        self.m2 = 0.0

    def update(self, values: np.ndarray) -> None:
        values = np.asarray(values, dtype=float)
        nb = values.size
        if nb == 0:
            return
        mb = float(values.mean())
        m2b = float(((values - mb) ** 2).sum())
        delta = mb - self.mean
        n = self.n + nb
        self.mean += delta * nb / n
        self.m2 += m2b + delta * delta * self.n * nb / n
        self.n = n

    @property
    def stderr(self) -> float:
        if self.n < 2:
            return float("inf")
        return float(np.sqrt(self.m2 / (self.n - 1) / self.n))


@dataclass(frozen=True)
class ErrorProfile:
    """(ᾱ, Δ) knots, strictly increasing in ᾱ, with per-knot standard errors."""

    alpha_bar: np.ndarray
    delta: np.ndarray
    stderr: np.ndarray | None = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        ab = np.atleast_1d(np.asarray(self.alpha_bar, dtype=float))
        de = np.atleast_1d(np.asarray(self.delta, dtype=float))
        if ab.size < 2 or de.size != ab.size:
            raise ValueError("an error profile needs >= 2 aligned knots")
        if np.any(ab <= 0.0) or np.any(ab >= 1.0):
            raise ValueError("knot alpha_bar values must lie inside (0, 1)")
        if np.any(np.diff(ab) <= 0.0):
            raise ValueError("knot alpha_bar values must be strictly increasing")
        if np.any(~np.isfinite(de)) or np.any(de < 0.0):
            raise ValueError("knot delta values must be finite and >= 0")
        object.__setattr__(self, "alpha_bar", ab)
        object.__setattr__(self, "delta", de)
        if self.stderr is not None:
            se = np.atleast_1d(np.asarray(self.stderr, dtype=float))
            if se.size != ab.size:
                raise ValueError("stderr must align with knots")
            object.__setattr__(self, "stderr", se)

    @property
    def n_knots(self) -> int:
        return self.alpha_bar.size

    @property
    def span(self) -> tuple[float, float]:
        return float(self.alpha_bar[0]), float(self.alpha_bar[-1])

    # -- files: CSV of knots plus a JSON sidecar (<name>.meta.json) -----

    @staticmethod
    def sidecar_path(path) -> Path:
        path = Path(path)
        return path.with_name(path.name + ".meta.json")

    def save(self, path) -> None:
        path = Path(path)
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["alpha_bar", "delta"])
        for a, d in zip(self.alpha_bar, self.delta):
            writer.writerow([repr(float(a)), repr(float(d))])
        path.write_text(buf.getvalue())
        sidecar = dict(self.meta)
        if self.stderr is not None:
            sidecar["stderr"] = [float(s) for s in self.stderr]
        write_json(self.sidecar_path(path), sidecar)

    @staticmethod
    def load(path) -> "ErrorProfile":
        path = Path(path)
        with open(path, newline="") as fh:
            rows = list(csv.reader(fh))
        if not rows or rows[0] != ["alpha_bar", "delta"]:
            raise ValueError(f"{path}: expected CSV header 'alpha_bar,delta'")
        data = np.array([[float(r[0]), float(r[1])] for r in rows[1:]])
        meta, stderr = {}, None
        sidecar = ErrorProfile.sidecar_path(path)
        if sidecar.exists():
            meta = read_json(sidecar)
            stderr = meta.pop("stderr", None)
            if stderr is not None:
                stderr = np.asarray(stderr, dtype=float)
        return ErrorProfile(alpha_bar=data[:, 0], delta=data[:, 1],
                            stderr=stderr, meta=meta)


def default_grid(schedule: NoiseSchedule, n: int = 64) -> np.ndarray:
    """n ᾱ values with evenly spaced half-log-SNR spanning [ᾱ_T, ᾱ_1], increasing."""
    if n < 2:
        raise ValueError("grid needs at least 2 knots")
    lam = np.linspace(half_log_snr(schedule.alpha_bar_t[-1]),
                      half_log_snr(schedule.alpha_bar_t[0]), n)
    return 1.0 / (1.0 + np.exp(-2.0 * lam))


def profile(denoiser: Denoiser, dataset: np.ndarray, grid, n_draws: int = 8,
            seed: int = 0, dataset_id: str = "", denoiser_id: str | None = None,
            chunk_size: int = 65536) -> ErrorProfile:
    """Measured prediction-error knots for a predictor over a dataset.

    For each grid ᾱ, every (sample, draw) pair contributes one δ value; the
    knot is the running mean.  Noise for a knot comes from a stream derived
    from (seed, knot index), and the predictor sees the whole knot batch with
    a per-knot derived seed, so results do not depend on chunking.
    """
    dataset = np.atleast_2d(np.asarray(dataset, dtype=float))
    n, d = dataset.shape
    if n < 1:
        raise ValueError("dataset must be nonempty")
    if n_draws < 1:
        raise ValueError("n_draws must be >= 1")
    grid = np.sort(np.atleast_1d(np.asarray(grid, dtype=float)))
    if grid.size < 2:
        raise ValueError("grid needs at least 2 alpha_bar values")
    if np.any(grid <= 0.0) or np.any(grid >= 1.0):
        raise ValueError("grid values must lie inside (0, 1)")
    if np.any(np.diff(grid) == 0.0):
        raise ValueError("grid values must be distinct")

    deltas = np.empty(grid.size)
    stderrs = np.empty(grid.size)
    total = n * n_draws
    for ki, ab in enumerate(grid):
        rng = child_rng(seed, "profile-noise", ki)
        eps = rng.standard_normal((total, d))
        x0 = np.tile(dataset, (n_draws, 1))
        x_t = np.sqrt(ab) * x0 + np.sqrt(1.0 - ab) * eps
        pred = denoiser.predict_noise(
            x_t, float(ab), seed=_knot_seed(seed, ki))
        if not np.all(np.isfinite(pred)):
            raise RuntimeError(f"denoiser returned non-finite values at alpha_bar={ab}")
        sq = np.mean((pred - eps) ** 2, axis=1)
        moments = _RunningMoments()
        for start in range(0, total, chunk_size):
            moments.update(sq[start:start + chunk_size])
        deltas[ki] = moments.mean
        stderrs[ki] = moments.stderr

    meta = {
        "dataset_id": dataset_id,
        "denoiser_id": denoiser_id if denoiser_id is not None
                       else getattr(denoiser, "label", ""),
        "n_samples": n,
        "n_draws": n_draws,
        "seed": seed,
    }
    return ErrorProfile(alpha_bar=grid, delta=deltas, stderr=stderrs, meta=meta)


def _knot_seed(seed: int, knot_index: int) -> int:
    return int(child_seed_sequence(seed, "profile-predict", knot_index)
               .generate_state(1)[0])


def f_delta(prof: ErrorProfile, alpha_bar):
    """Piecewise-linear Δ(ᾱ); constant beyond the first/last knot."""
    out = np.interp(np.asarray(alpha_bar, dtype=float),
                    prof.alpha_bar, prof.delta)
    return out if out.ndim else float(out)


def f_delta_slope(prof: ErrorProfile, alpha_bar):
    """Slope of the active segment of f_Δ.

    Interior knots take the right-segment slope; queries at or beyond the
    last knot, or below the first, are in the clamp region and return 0.
    """
    x = np.asarray(alpha_bar, dtype=float)
    ab, de = prof.alpha_bar, prof.delta
    slopes = np.diff(de) / np.diff(ab)
    idx = np.clip(np.searchsorted(ab, x, side="right") - 1, 0, slopes.size - 1)
    inside = (x >= ab[0]) & (x < ab[-1])
    out = np.where(inside, slopes[idx], 0.0)
    return out if out.ndim else float(out)


@dataclass(frozen=True)
class ErrorHistogram:
    """Scalar residual ε̂[i] − ε[i] binned over a symmetric ±4√Δ̂ range.

    Residuals beyond the range (≈6e-5 tail mass for a Gaussian) are clipped
    into the edge bins so the counts always total n_total; the summary
    moments are computed from the unclipped residuals.
    """

    counts: np.ndarray
    bin_edges: np.ndarray
    alpha_bar: float
    dimension_index: int
    n_total: int
    residual_mean: float
    residual_var: float
    residual_kurtosis: float

    def __post_init__(self):
        counts = np.asarray(self.counts, dtype=int)
        if counts.size != HISTOGRAM_BINS or np.any(counts < 0):
            raise ValueError(f"need {HISTOGRAM_BINS} nonnegative counts")
        if int(counts.sum()) != self.n_total:
            raise ValueError("histogram counts must total n_total")
        object.__setattr__(self, "counts", counts)
        object.__setattr__(self, "bin_edges",
                           np.asarray(self.bin_edges, dtype=float))


def error_histogram(denoiser: Denoiser, dataset: np.ndarray, alpha_bar: float,
                    dimension_index: int, n_total: int, seed: int = 0) -> ErrorHistogram:
    """Distribution of one coordinate of the prediction residual at a noise level."""
    dataset = np.atleast_2d(np.asarray(dataset, dtype=float))
    n, d = dataset.shape
    if not 0 <= dimension_index < d:
        raise ValueError(f"dimension_index {dimension_index} out of range for d={d}")
    if n_total < HISTOGRAM_BINS:
        raise ValueError(f"n_total must be >= {HISTOGRAM_BINS} (undersampled histogram)")
    if not (0.0 < alpha_bar < 1.0):
        raise ValueError("alpha_bar must lie inside (0, 1)")

    rng = child_rng(seed, "histogram-noise")
    x0 = dataset[np.arange(n_total) % n]
    eps = rng.standard_normal((n_total, d))
    x_t = np.sqrt(alpha_bar) * x0 + np.sqrt(1.0 - alpha_bar) * eps
    pred = denoiser.predict_noise(x_t, float(alpha_bar),
                                  seed=_knot_seed(seed, -1))
    resid = (pred - eps)[:, dimension_index]

    var = float(resid.var(ddof=1))
    mean = float(resid.mean())
    centered = resid - mean
    kurt = float(np.mean(centered**4) / np.mean(centered**2) ** 2)
    half = 4.0 * np.sqrt(var)
    edges = np.linspace(-half, half, HISTOGRAM_BINS + 1)
    counts, _ = np.histogram(np.clip(resid, -half, half), bins=edges)
    return ErrorHistogram(counts=counts, bin_edges=edges, alpha_bar=float(alpha_bar),
                          dimension_index=dimension_index, n_total=n_total,
                          residual_mean=mean, residual_var=var,
                          residual_kurtosis=kurt)
