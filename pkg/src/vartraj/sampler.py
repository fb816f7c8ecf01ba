"""Deterministic sampling along a trajectory and the error-propagation check.

One step from noise level ᾱ_t to the less-noisy ᾱ_s is

    x_s = (√ᾱ_s/√ᾱ_t)·x_t − ((√ᾱ_s/√ᾱ_t)·√(1−ᾱ_t) − √(1−ᾱ_s))·ε̂

which, with the exact noise, maps √ᾱ_t·x0 + √(1−ᾱ_t)·ε to √ᾱ_s·x0 + √(1−ᾱ_s)·ε
identically.  Generation starts from standard normal noise (the ᾱ_K ≈ 0
correction is below Monte Carlo noise for all default trajectories) and takes
the final step to ᾱ = 1, the clean-sample extraction.

``propagate_error_mc`` runs the same recursion on the error term alone, with
each step contributing an independent zero-mean Gaussian of per-dimension
variance Δ(ᾱ_k), and compares the simulated final variance against the
closed-form prediction Σ_k w(ᾱ_k, α_k)·Δ(ᾱ_k).
"""

from dataclasses import dataclass

import numpy as np

from .artifacts import read_array_container, write_array_container
from .denoisers import Denoiser
from .forward import error_weight
from .seeding import child_rng, child_seed_sequence
from .trajectory import Trajectory, alpha_from_alphabar

__all__ = ["SampleBatch", "PropagationReport", "ddim_step", "sample",
           "propagate_error_mc"]


@dataclass(frozen=True)
class SampleBatch:
    """Generated d-vectors plus the metadata needed to reproduce them."""

    samples: np.ndarray
    seed: int
    trajectory_label: str
    denoiser_id: str

    def __post_init__(self):
        s = np.atleast_2d(np.asarray(self.samples, dtype=float))
        if not self.trajectory_label and not self.denoiser_id:
            raise ValueError("batch metadata must be nonempty")
        object.__setattr__(self, "samples", s)

    @property
    def n(self) -> int:
        return self.samples.shape[0]

    @property
    def d(self) -> int:
        return self.samples.shape[1]

    def save(self, path) -> None:
        header = {
            "format": "sample-batch",
            "version": 1,
            "n": self.n,
            "d": self.d,
            "seed": self.seed,
            "trajectory_label": self.trajectory_label,
            "denoiser_id": self.denoiser_id,
        }
        write_array_container(path, header, {"samples": self.samples})

    @staticmethod
    def load(path) -> "SampleBatch":
        header, arrays = read_array_container(path)
        if header.get("format") != "sample-batch":
            raise ValueError(f"{path}: not a sample-batch container")
        return SampleBatch(samples=arrays["samples"], seed=int(header["seed"]),
                           trajectory_label=header["trajectory_label"],
                           denoiser_id=header["denoiser_id"])


def ddim_step(x_t: np.ndarray, eps_hat: np.ndarray, alpha_bar_t: float,
              alpha_bar_s: float) -> np.ndarray:
    """One deterministic update from level ᾱ_t to the cleaner level ᾱ_s."""
    x_t = np.asarray(x_t, dtype=float)
    eps_hat = np.asarray(eps_hat, dtype=float)
    if x_t.shape != eps_hat.shape:
        raise ValueError(f"shape mismatch: x_t {x_t.shape} vs eps_hat {eps_hat.shape}")
    if not (0.0 < alpha_bar_t < alpha_bar_s <= 1.0):
        raise ValueError(
            f"need 0 < alpha_bar_t < alpha_bar_s <= 1, got ({alpha_bar_t}, {alpha_bar_s})")
    ratio = np.sqrt(alpha_bar_s / alpha_bar_t)
    coef = ratio * np.sqrt(1.0 - alpha_bar_t) - np.sqrt(1.0 - alpha_bar_s)
    return ratio * x_t - coef * eps_hat


def _step_seed(seed: int, k: int) -> int:
    return int(child_seed_sequence(seed, "sample-step", k).generate_state(1)[0])


def sample(denoiser: Denoiser, traj: Trajectory, n: int, d: int, seed: int,
           start_index: int = 0, denoiser_id: str | None = None) -> SampleBatch:
    """Generate n samples by running the trajectory from noise to data.

    Initial noise for global sample index i comes from a stream derived from
    (seed, i), so splitting a batch across calls via start_index yields the
    same rows as one big call.
    """
    if n < 1 or d < 1:
        raise ValueError("n and d must be >= 1")
    x = np.empty((n, d))
    for i in range(n):
        x[i] = child_rng(seed, "sample-init", start_index + i).standard_normal(d)

    levels = traj.alpha_bar
    for k in range(traj.K, 0, -1):
        ab_t = float(levels[k - 1])
        ab_s = float(levels[k - 2]) if k >= 2 else 1.0
        try:
            eps_hat = denoiser.predict_noise(x, ab_t, seed=_step_seed(seed, k))
        except Exception as exc:
            raise RuntimeError(f"denoiser failed at step k={k} "
                               f"(alpha_bar={ab_t})") from exc
        x = ddim_step(x, eps_hat, ab_t, ab_s)

    return SampleBatch(samples=x, seed=seed, trajectory_label=traj.label,
                       denoiser_id=denoiser_id if denoiser_id is not None
                       else getattr(denoiser, "label", "denoiser"))


@dataclass(frozen=True)
class PropagationReport:
    """Predicted vs simulated final error variance for one trajectory."""

    predicted_variance: float
    empirical_variance: float
    n_runs: int
    d: int
    relative_error: float

    def to_json(self) -> dict:
        return {
            "predicted_variance": self.predicted_variance,
            "empirical_variance": self.empirical_variance,
            "n_runs": self.n_runs,
            "d": self.d,
            "relative_error": self.relative_error,
        }


def propagate_error_mc(traj: Trajectory, delta_fn, n_runs: int, d: int,
                       seed: int = 0) -> PropagationReport:
    """Simulate per-step prediction errors through the sampling recursion.

    Each step k = K…1 injects an independent N(0, Δ(ᾱ_k)·I) error with the
    step's ε̂ coefficient; earlier accumulations carry the step's scale factor
    forward.  The closed-form prediction for the final per-dimension variance
    is Σ_k w(ᾱ_k, α_k)·Δ(ᾱ_k).
    """
    if n_runs < 2 or d < 1:
        raise ValueError("need n_runs >= 2 and d >= 1")
    levels = traj.alpha_bar
    deltas = np.array([float(delta_fn(float(a))) for a in levels])
    if np.any(~np.isfinite(deltas)) or np.any(deltas < 0.0):
        raise ValueError("delta_fn must be finite and >= 0 on trajectory knots")

    alphas = alpha_from_alphabar(traj)
    predicted = float(np.sum(error_weight(levels, alphas) * deltas))

    rng = child_rng(seed, "propagate")
    err = np.zeros((n_runs, d))
    for k in range(traj.K, 0, -1):
        ab_t = float(levels[k - 1])
        ab_s = float(levels[k - 2]) if k >= 2 else 1.0
        ratio = np.sqrt(ab_s / ab_t)
        coef = ratio * np.sqrt(1.0 - ab_t) - np.sqrt(1.0 - ab_s)
        zeta = rng.standard_normal((n_runs, d))
        err = ratio * err - coef * np.sqrt(deltas[k - 1]) * zeta

    empirical = float(err.ravel().var(ddof=1))
    if predicted > 0.0:
        rel = abs(empirical - predicted) / predicted
    else:
        rel = 0.0 if empirical == 0.0 else float("inf")
    return PropagationReport(predicted_variance=predicted,
                             empirical_variance=empirical, n_runs=n_runs, d=d,
                             relative_error=rel)
