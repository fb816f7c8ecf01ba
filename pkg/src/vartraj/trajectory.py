"""Sampling trajectories: decreasing ᾱ sequences and their α-ratio form.

A K-step trajectory is the sequence of noise levels ᾱ_1 > ᾱ_2 > … > ᾱ_K the
sampler visits, indexed so k = 1 is the least noisy step (ᾱ closest to 1) and
k = K the most noisy; sampling iterates k = K…1.  The equivalent per-step form
is α_k = ᾱ_k / ᾱ_{k−1} with ᾱ_0 = 1.

Trajectories serialize to JSON objects {"label", "kind", "alpha_bar"}; this
file is the interchange format every other module consumes.
"""

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .forward import NoiseSchedule

__all__ = [
    "Trajectory",
    "TRAJECTORY_KINDS",
    "alpha_from_alphabar",
    "alphabar_from_alpha",
    "make_trajectory",
    "half_log_snr",
]

TRAJECTORY_KINDS = ("uniform", "quadratic", "logSNR", "custom")


def half_log_snr(alpha_bar):
    """λ = ½·log(ᾱ/(1−ᾱ)): the log signal-to-noise ratio, halved."""
    alpha_bar = np.asarray(alpha_bar, dtype=float)
    out = 0.5 * (np.log(alpha_bar) - np.log1p(-alpha_bar))
    return out if out.ndim else float(out)


def _sigmoid2(lam):
    """Inverse of half_log_snr: ᾱ = 1/(1 + exp(−2λ))."""
    return 1.0 / (1.0 + np.exp(-2.0 * np.asarray(lam, dtype=float)))


@dataclass(frozen=True)
class Trajectory:
    """K noise levels in strictly decreasing order, each inside (0, 1)."""

    alpha_bar: np.ndarray
    label: str = ""
    kind: str = "custom"

    def __post_init__(self):
        ab = np.atleast_1d(np.asarray(self.alpha_bar, dtype=float))
        if ab.ndim != 1 or ab.size < 1:
            raise ValueError("alpha_bar must be a nonempty 1-d sequence")
        if np.any(ab <= 0.0) or np.any(ab >= 1.0):
            raise ValueError("not a valid trajectory: alpha_bar must lie inside (0, 1)")
        if np.any(np.diff(ab) >= 0.0):
            raise ValueError("not a valid trajectory: alpha_bar must be strictly decreasing")
        if self.kind not in TRAJECTORY_KINDS:
            raise ValueError(f"kind must be one of {TRAJECTORY_KINDS}")
        object.__setattr__(self, "alpha_bar", ab)

    @property
    def K(self) -> int:
        return self.alpha_bar.size

    def to_json(self) -> dict:
        return {
            "label": self.label,
            "kind": self.kind,
            "alpha_bar": [float(a) for a in self.alpha_bar],
        }

    @staticmethod
    def from_json(obj: dict) -> "Trajectory":
        return Trajectory(
            alpha_bar=np.asarray(obj["alpha_bar"], dtype=float),
            label=str(obj.get("label", "")),
            kind=str(obj.get("kind", "custom")),
        )

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_json(), indent=2) + "\n")

    @staticmethod
    def load(path) -> "Trajectory":
        return Trajectory.from_json(json.loads(Path(path).read_text()))


def alpha_from_alphabar(traj: Trajectory) -> np.ndarray:
    """Per-step ratios α_k = ᾱ_k / ᾱ_{k−1}, with ᾱ_0 = 1."""
    ab = traj.alpha_bar
    alpha = np.empty_like(ab)
    alpha[0] = ab[0]
    alpha[1:] = ab[1:] / ab[:-1]
    return alpha


def alphabar_from_alpha(alpha: np.ndarray, label: str = "",
                        kind: str = "custom") -> Trajectory:
    """Trajectory with ᾱ_k = Π_{s≤k} α_s; exact inverse of alpha_from_alphabar."""
    alpha = np.atleast_1d(np.asarray(alpha, dtype=float))
    if np.any(alpha <= 0.0) or np.any(alpha >= 1.0):
        raise ValueError("alpha values must lie strictly inside (0, 1)")
    return Trajectory(alpha_bar=np.cumprod(alpha), label=label, kind=kind)


def make_trajectory(schedule: NoiseSchedule, kind: str, K: int,
                    label: str | None = None) -> Trajectory:
    """Select K noise levels from a dense schedule by one of three spacings.

    uniform    timesteps evenly spaced on [1, T]
    quadratic  timesteps at t = 1 + (T−1)·u², u evenly spaced on [0, 1]
    logSNR     ᾱ values whose half-log-SNR is evenly spaced between the
               schedule's endpoint λ values (no timestep rounding)

    K = 1 keeps the noisiest endpoint.  Timesteps are rounded to integers for
    uniform/quadratic; a rounding collision (duplicate ᾱ) is rejected rather
    than merged, so α stays well-defined.
    """
    if K < 1:
        raise ValueError("K must be >= 1")
    if K > schedule.T:
        raise ValueError(f"K = {K} exceeds schedule length T = {schedule.T}")
    T = schedule.T
    if kind == "uniform":
        u = np.ones(1) if K == 1 else np.linspace(0.0, 1.0, K)
        t = np.rint(1 + (T - 1) * u).astype(int)
        alpha_bar = schedule.alpha_bar_at(t)
    elif kind == "quadratic":
        u = np.ones(1) if K == 1 else np.linspace(0.0, 1.0, K)
        t = np.rint(1 + (T - 1) * u**2).astype(int)
        alpha_bar = schedule.alpha_bar_at(t)
    elif kind == "logSNR":
        lam_hi = half_log_snr(schedule.alpha_bar_t[0])
        lam_lo = half_log_snr(schedule.alpha_bar_t[-1])
        lam = np.array([lam_lo]) if K == 1 else np.linspace(lam_hi, lam_lo, K)
        alpha_bar = _sigmoid2(lam)
    else:
        raise ValueError(f"unknown trajectory kind {kind!r}")
    if np.any(np.diff(alpha_bar) >= 0.0):
        raise ValueError(
            f"discretization produced duplicate noise levels (kind={kind}, K={K}); "
            "reduce K or use logSNR spacing")
    return Trajectory(alpha_bar=alpha_bar, label=label if label is not None
                      else f"{kind}-{K}", kind=kind)
