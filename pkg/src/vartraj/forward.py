"""Forward diffusion: dense noise schedule, noising equation, error weight.

A noisy sample at retention level ᾱ ∈ [0, 1] is

    x = √ᾱ·x0 + √(1−ᾱ)·ε,       ε ~ N(0, I)

so ᾱ = 1 is the clean sample and ᾱ = 0 pure noise.  ``error_weight`` is the
factor by which a sampling step's noise-prediction variance inflates the
variance of the final generated sample:

    w(ᾱ, α) = (√(1−ᾱ) − √(α−ᾱ))² / ᾱ,      α = per-step retention ratio.
"""

from dataclasses import dataclass, field

import numpy as np

__all__ = ["NoiseSchedule", "linear_beta_schedule", "diffuse", "error_weight"]


@dataclass(frozen=True)
class NoiseSchedule:
    """Dense T-step training-time schedule: variance increments β_t and ᾱ_t.

    ``alpha_bar_t[t-1]`` is the cumulative product of (1 − β_s) for s ≤ t.
    Only linear schedules carry (beta_start, beta_end) and are serializable;
    ᾱ is always recomputed, never persisted.
    """

    beta: np.ndarray
    beta_start: float | None = None
    beta_end: float | None = None
    alpha_bar_t: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        beta = np.asarray(self.beta, dtype=float)
        if beta.ndim != 1 or beta.size < 1:
            raise ValueError("beta must be a nonempty 1-d sequence")
        if np.any(beta <= 0.0) or np.any(beta >= 1.0):
            raise ValueError("beta values must lie strictly inside (0, 1)")
        object.__setattr__(self, "beta", beta)
        alpha_bar = np.cumprod(1.0 - beta)
        if np.any(alpha_bar <= 0.0) or np.any(alpha_bar >= 1.0):
            raise ValueError("alpha_bar_t left (0, 1); schedule too long or too noisy")
        if np.any(np.diff(alpha_bar) >= 0.0):
            raise ValueError("alpha_bar_t must be strictly decreasing")
        object.__setattr__(self, "alpha_bar_t", alpha_bar)

    @property
    def T(self) -> int:
        return self.beta.size

    def alpha_bar_at(self, t) -> np.ndarray:
        """ᾱ at integer timestep(s) t ∈ [1, T]."""
        t = np.asarray(t)
        if np.any(t < 1) or np.any(t > self.T):
            raise ValueError(f"timestep out of range [1, {self.T}]")
        return self.alpha_bar_t[t - 1]

    def to_json(self) -> dict:
        if self.beta_start is None or self.beta_end is None:
            raise ValueError("only linear schedules serialize; endpoints unknown")
        return {"T": self.T, "beta_start": self.beta_start, "beta_end": self.beta_end}

    @staticmethod
    def from_json(obj: dict) -> "NoiseSchedule":
        return linear_beta_schedule(int(obj["T"]), float(obj["beta_start"]),
                                    float(obj["beta_end"]))


def linear_beta_schedule(T: int = 1000, beta_start: float = 1e-4,
                         beta_end: float = 0.02) -> NoiseSchedule:
    """Standard linear β schedule over t = 1..T (β_1 = beta_start, β_T = beta_end)."""
    if T < 1:
        raise ValueError("T must be >= 1")
    if not (0.0 < beta_start <= beta_end < 1.0):
        raise ValueError("need 0 < beta_start <= beta_end < 1")
    beta = np.linspace(beta_start, beta_end, T)
    return NoiseSchedule(beta=beta, beta_start=beta_start, beta_end=beta_end)


def diffuse(x0: np.ndarray, alpha_bar: float, noise: np.ndarray) -> np.ndarray:
    """Noisy sample √ᾱ·x0 + √(1−ᾱ)·noise, elementwise over matching shapes."""
    x0 = np.asarray(x0, dtype=float)
    noise = np.asarray(noise, dtype=float)
    if x0.shape != noise.shape:
        raise ValueError(f"shape mismatch: x0 {x0.shape} vs noise {noise.shape}")
    if not (0.0 <= alpha_bar <= 1.0):
        raise ValueError(f"alpha_bar {alpha_bar} outside [0, 1]")
    return np.sqrt(alpha_bar) * x0 + np.sqrt(1.0 - alpha_bar) * noise


def error_weight(alpha_bar, alpha):
    """Prediction-error weight (√(1−ᾱ) − √(α−ᾱ))² / ᾱ.

    Requires 0 < ᾱ ≤ α ≤ 1 (ᾱ_t = α_t·ᾱ_{t−1} ≤ α_t for any valid step).
    α = 1 is the degenerate no-op step and gives weight 0.  Vectorized;
    broadcasts ᾱ against α.
    """
    alpha_bar = np.asarray(alpha_bar, dtype=float)
    alpha = np.asarray(alpha, dtype=float)
    if np.any(alpha_bar <= 0.0):
        raise ValueError("alpha_bar must be > 0 (weight diverges at pure noise)")
    if np.any(alpha > 1.0) or np.any(alpha <= 0.0):
        raise ValueError("alpha must lie in (0, 1]")
    if np.any(alpha_bar > alpha):
        raise ValueError("alpha_bar > alpha: not a valid (alpha_bar, alpha) step pair")
    w = (np.sqrt(1.0 - alpha_bar) - np.sqrt(alpha - alpha_bar)) ** 2 / alpha_bar
    return w if w.ndim else float(w)
