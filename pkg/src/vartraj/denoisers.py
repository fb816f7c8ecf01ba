"""Noise predictors with analytically known error, plus data-distribution specs.

All predictors implement ``predict_noise(x_t, alpha_bar, seed=None)`` and are
parameterized by the retention level ᾱ rather than an integer timestep: the
sampling step depends on the step only through its ᾱ values, and optimized
trajectories move off the integer grid anyway.

For Gaussian data the posterior-mean predictor is exactly optimal and its
per-dimension squared prediction error is closed-form:

    Δ(ᾱ) = ᾱ·σ0² / (ᾱ·σ0² + 1 − ᾱ)

which every measured profile of any other predictor must dominate.  The
perturbed wrapper adds zero-mean Gaussian error with exactly controllable
per-dimension variance, giving a ground-truth error curve for oracle tests.
"""

from dataclasses import dataclass

import numpy as np

from .seeding import child_rng

__all__ = [
    "Denoiser",
    "GaussianDataSpec",
    "GmmDataSpec",
    "InjectedErrorCurve",
    "GaussianOptimalDenoiser",
    "GmmOptimalDenoiser",
    "PerturbedDenoiser",
    "gaussian_optimal_predict",
    "gaussian_analytic_delta",
    "gmm_optimal_predict",
    "perturbed_predict",
    "data_spec_from_json",
    "denoiser_from_spec",
]


class Denoiser:
    """Base ε-predictor. Subclasses define _predict(x2d, alpha_bar, seed)."""

    label = "denoiser"

    def predict_noise(self, x_t: np.ndarray, alpha_bar: float,
                      seed: int | None = None) -> np.ndarray:
        """Predicted noise for a batch (n, d) or single sample (d,)."""
        x_t = np.asarray(x_t, dtype=float)
        single = x_t.ndim == 1
        out = self._predict(np.atleast_2d(x_t), float(alpha_bar), seed)
        return out[0] if single else out

    def _predict(self, x2d, alpha_bar, seed):
        raise NotImplementedError


def _check_open_unit(alpha_bar: float) -> None:
    if not (0.0 < alpha_bar < 1.0):
        raise ValueError(f"alpha_bar {alpha_bar} outside (0, 1): posterior degenerate")


# ---------------------------------------------------------------------------
# data specs


@dataclass(frozen=True)
class GaussianDataSpec:
    """Isotropic Gaussian data N(mu0, sigma0² I)."""

    mu0: np.ndarray
    sigma0: float

    def __post_init__(self):
        mu0 = np.atleast_1d(np.asarray(self.mu0, dtype=float))
        if self.sigma0 <= 0.0:
            raise ValueError("sigma0 must be > 0")
        object.__setattr__(self, "mu0", mu0)

    @property
    def d(self) -> int:
        return self.mu0.size

    def sample(self, rng: np.random.Generator, n: int) -> np.ndarray:
        return self.mu0 + self.sigma0 * rng.standard_normal((n, self.d))

    def mean(self) -> np.ndarray:
        return self.mu0.copy()

    def cov(self) -> np.ndarray:
        return self.sigma0**2 * np.eye(self.d)

    def to_json(self) -> dict:
        return {"type": "gaussian", "mu0": [float(v) for v in self.mu0],
                "sigma0": float(self.sigma0)}


@dataclass(frozen=True)
class GmmDataSpec:
    """Mixture of isotropic Gaussians: weights (c,), mus (c, d), sigmas (c,)."""

    weights: np.ndarray
    mus: np.ndarray
    sigmas: np.ndarray

    def __post_init__(self):
        w = np.atleast_1d(np.asarray(self.weights, dtype=float))
        mus = np.atleast_2d(np.asarray(self.mus, dtype=float))
        sig = np.atleast_1d(np.asarray(self.sigmas, dtype=float))
        if w.size < 1 or mus.shape[0] != w.size or sig.size != w.size:
            raise ValueError("components must align: weights, mus, sigmas")
        if np.any(w <= 0.0):
            raise ValueError("weights must be positive")
        if abs(float(w.sum()) - 1.0) > 1e-12:
            raise ValueError("weights must sum to 1 within 1e-12")
        if np.any(sig <= 0.0):
            raise ValueError("sigmas must be > 0")
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "mus", mus)
        object.__setattr__(self, "sigmas", sig)

    @property
    def d(self) -> int:
        return self.mus.shape[1]

    @property
    def n_components(self) -> int:
        return self.weights.size

    def sample(self, rng: np.random.Generator, n: int) -> np.ndarray:
        comp = rng.choice(self.n_components, size=n, p=self.weights)
        return self.mus[comp] + self.sigmas[comp, None] * rng.standard_normal((n, self.d))

    def mean(self) -> np.ndarray:
        return self.weights @ self.mus

    def cov(self) -> np.ndarray:
        m = self.mean()
        second = sum(
            w * (s**2 * np.eye(self.d) + np.outer(mu, mu))
            for w, mu, s in zip(self.weights, self.mus, self.sigmas)
        )
        return second - np.outer(m, m)

    def to_json(self) -> dict:
        return {
            "type": "gmm",
            "components": [
                {"weight": float(w), "mu": [float(v) for v in mu], "sigma": float(s)}
                for w, mu, s in zip(self.weights, self.mus, self.sigmas)
            ],
        }


def data_spec_from_json(obj: dict):
    kind = obj.get("type")
    if kind == "gaussian":
        return GaussianDataSpec(mu0=np.asarray(obj["mu0"], dtype=float),
                                sigma0=float(obj["sigma0"]))
    if kind == "gmm":
        comps = obj["components"]
        return GmmDataSpec(
            weights=np.array([c["weight"] for c in comps], dtype=float),
            mus=np.array([c["mu"] for c in comps], dtype=float),
            sigmas=np.array([c["sigma"] for c in comps], dtype=float),
        )
    raise ValueError(f"unknown data spec type {kind!r}")


# ---------------------------------------------------------------------------
# closed-form optimal predictors


def gaussian_optimal_predict(spec: GaussianDataSpec, x_t: np.ndarray,
                             alpha_bar: float) -> np.ndarray:
    """Posterior-mean ε-prediction (x_t − √ᾱ·mu0)·√(1−ᾱ) / (ᾱσ0² + 1 − ᾱ)."""
    _check_open_unit(alpha_bar)
    x_t = np.asarray(x_t, dtype=float)
    s2 = alpha_bar * spec.sigma0**2 + (1.0 - alpha_bar)
    return (x_t - np.sqrt(alpha_bar) * spec.mu0) * (np.sqrt(1.0 - alpha_bar) / s2)


def gaussian_analytic_delta(spec: GaussianDataSpec, alpha_bar):
    """Exact per-dimension prediction error ᾱσ0²/(ᾱσ0² + 1 − ᾱ) of the optimal
    Gaussian predictor; Δ(0) = 0, Δ(1) = 1, strictly increasing in ᾱ."""
    alpha_bar = np.asarray(alpha_bar, dtype=float)
    if np.any(alpha_bar < 0.0) or np.any(alpha_bar > 1.0):
        raise ValueError("alpha_bar outside [0, 1]")
    v = alpha_bar * spec.sigma0**2
    out = v / (v + 1.0 - alpha_bar)
    return out if out.ndim else float(out)


def gmm_optimal_predict(spec: GmmDataSpec, x_t: np.ndarray,
                        alpha_bar: float) -> np.ndarray:
    """Posterior-mean ε-prediction for isotropic-GMM data.

    Responsibilities are computed in the log domain with max subtraction; the
    per-component posterior mean is the usual Gaussian-conditioning formula.
    """
    _check_open_unit(alpha_bar)
    x = np.atleast_2d(np.asarray(x_t, dtype=float))
    single = np.asarray(x_t).ndim == 1
    sqrt_ab = np.sqrt(alpha_bar)
    d = spec.d
    s2 = alpha_bar * spec.sigmas**2 + (1.0 - alpha_bar)          # (c,)
    diff = x[:, None, :] - sqrt_ab * spec.mus[None, :, :]        # (n, c, d)
    sqdist = np.einsum("ncd,ncd->nc", diff, diff)
    log_r = (np.log(spec.weights) - 0.5 * d * np.log(2.0 * np.pi * s2)
             - 0.5 * sqdist / s2)                                # (n, c)
    log_r -= log_r.max(axis=1, keepdims=True)
    r = np.exp(log_r)
    norm = r.sum(axis=1, keepdims=True)
    assert np.all(norm > 0.0), "responsibilities underflowed after stabilization"
    r /= norm
    gain = sqrt_ab * spec.sigmas**2 / s2                         # (c,)
    comp_mean = spec.mus[None, :, :] + gain[None, :, None] * diff
    x0_mean = np.einsum("nc,ncd->nd", r, comp_mean)
    eps = (x - sqrt_ab * x0_mean) / np.sqrt(1.0 - alpha_bar)
    return eps[0] if single else eps


class GaussianOptimalDenoiser(Denoiser):
    """Exactly optimal predictor for GaussianDataSpec data."""

    def __init__(self, spec: GaussianDataSpec):
        self.spec = spec
        self.label = f"gaussian-optimal-d{spec.d}"

    def _predict(self, x2d, alpha_bar, seed):
        return gaussian_optimal_predict(self.spec, x2d, alpha_bar)

    def analytic_delta(self, alpha_bar):
        return gaussian_analytic_delta(self.spec, alpha_bar)


class GmmOptimalDenoiser(Denoiser):
    """Exactly optimal predictor for GmmDataSpec data."""

    def __init__(self, spec: GmmDataSpec):
        self.spec = spec
        self.label = f"gmm-optimal-c{spec.n_components}d{spec.d}"

    def _predict(self, x2d, alpha_bar, seed):
        return gmm_optimal_predict(self.spec, x2d, alpha_bar)


# ---------------------------------------------------------------------------
# controllable injected error


@dataclass(frozen=True)
class InjectedErrorCurve:
    """Nonnegative per-dimension variance to inject, linear between knots."""

    alpha_bar: np.ndarray
    delta: np.ndarray

    def __post_init__(self):
        ab = np.atleast_1d(np.asarray(self.alpha_bar, dtype=float))
        de = np.atleast_1d(np.asarray(self.delta, dtype=float))
        if ab.size < 2 or de.size != ab.size:
            raise ValueError("need >= 2 aligned (alpha_bar, delta) knots")
        if np.any(np.diff(ab) <= 0.0):
            raise ValueError("alpha_bar knots must be strictly increasing")
        if np.any(~np.isfinite(de)) or np.any(de < 0.0):
            raise ValueError("delta values must be finite and >= 0")
        object.__setattr__(self, "alpha_bar", ab)
        object.__setattr__(self, "delta", de)

    @staticmethod
    def constant(value: float, lo: float = 1e-8, hi: float = 1.0 - 1e-12):
        return InjectedErrorCurve(np.array([lo, hi]), np.array([value, value]))

    def injected_variance(self, alpha_bar: float) -> float:
        if not (self.alpha_bar[0] <= alpha_bar <= self.alpha_bar[-1]):
            raise ValueError(
                f"alpha_bar {alpha_bar} outside injected-error knot span "
                f"[{self.alpha_bar[0]}, {self.alpha_bar[-1]}]")
        return float(np.interp(alpha_bar, self.alpha_bar, self.delta))

    def to_json(self) -> dict:
        return {"knots": [[float(a), float(d)]
                          for a, d in zip(self.alpha_bar, self.delta)]}

    @staticmethod
    def from_json(obj: dict) -> "InjectedErrorCurve":
        knots = np.asarray(obj["knots"], dtype=float)
        return InjectedErrorCurve(knots[:, 0], knots[:, 1])


def perturbed_predict(inner: Denoiser, curve: InjectedErrorCurve, x_t,
                      alpha_bar: float, seed: int) -> np.ndarray:
    """Inner prediction plus N(0, delta_inj(ᾱ)·I) noise; deterministic in seed."""
    base = inner.predict_noise(x_t, alpha_bar)
    var = curve.injected_variance(alpha_bar)
    if var == 0.0:
        return base
    rng = child_rng(seed, "inject")
    return base + np.sqrt(var) * rng.standard_normal(np.shape(base))


class PerturbedDenoiser(Denoiser):
    """Wraps a predictor with exactly controllable extra Gaussian error.

    Stochastic: every predict_noise call must pass an explicit seed.
    """

    def __init__(self, inner: Denoiser, curve: InjectedErrorCurve):
        self.inner = inner
        self.curve = curve
        self.label = f"perturbed({inner.label})"

    def _predict(self, x2d, alpha_bar, seed):
        if seed is None:
            raise ValueError("PerturbedDenoiser requires an explicit seed")
        return perturbed_predict(self.inner, self.curve, x2d, alpha_bar, seed)


def denoiser_from_spec(obj: dict, base_dir=None) -> Denoiser:
    """Build a predictor from its JSON spec (CLI interchange format).

    {"type": "gaussian-optimal", "data": {...gaussian spec...}}
    {"type": "gmm-optimal", "data": {...gmm spec...}}
    {"type": "perturbed", "inner": {...}, "curve": {"knots": [[a, d], ...]}}
    {"type": "mlp", "weights": "path/to/weights.bin"}
    """
    kind = obj.get("type")
    if kind == "gaussian-optimal":
        return GaussianOptimalDenoiser(data_spec_from_json(obj["data"]))
    if kind == "gmm-optimal":
        return GmmOptimalDenoiser(data_spec_from_json(obj["data"]))
    if kind == "perturbed":
        return PerturbedDenoiser(denoiser_from_spec(obj["inner"], base_dir),
                                 InjectedErrorCurve.from_json(obj["curve"]))
    if kind == "mlp":
        from .mlp import MlpDenoiser
        from pathlib import Path
        path = Path(obj["weights"])
        if base_dir is not None and not path.is_absolute():
            path = Path(base_dir) / path
        return MlpDenoiser.load(path)
    raise ValueError(f"unknown denoiser spec type {kind!r}")
