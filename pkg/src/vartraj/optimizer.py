"""Trajectory optimization: minimize cumulative prediction error under a box.

The objective over the per-step retention ratios α*_k (with ᾱ*_k = Π_{s≤k} α*_s)
is

    J(α*) = Σ_k w(ᾱ*_k, α*_k)·f_Δ(ᾱ*_k)  +  λ·(ᾱ*_K − ᾱ_K)²

subject to α*_k ∈ (0, 1) and |α*_k − α_k| ≤ γ around the base trajectory.
The first term is the variance of the generated sample's deviation from the
ground truth accumulated over the sampling recursion; the second keeps the
optimized trajectory starting from a similar noise level.

Minimization is projected gradient descent directly on the K-dimensional α
vector with the exact analytic gradient (chain rule through the cumulative
products; f_Δ contributes its active segment slope).  The step size is fixed
and the best iterate visited is returned, which makes the improvement over
the base trajectory unconditional whenever the base is feasible.
"""

from dataclasses import dataclass, field

import numpy as np

from .forward import error_weight
from .profiler import ErrorProfile, f_delta, f_delta_slope
from .trajectory import Trajectory, alpha_from_alphabar, alphabar_from_alpha

__all__ = [
    "OptimizeConfig",
    "ObjectiveBreakdown",
    "OptimizeResult",
    "objective",
    "objective_gradient",
    "project",
    "optimize",
    "default_gamma",
]


def default_gamma(K: int) -> float:
    """Box radius heuristic: 0.1 up to 10 steps, 0.01 beyond."""
    return 0.1 if K <= 10 else 0.01


@dataclass(frozen=True)
class OptimizeConfig:
    """Knobs for the projected-gradient search.

    gamma = None resolves to default_gamma(K) at optimize() time.
    eps_open bounds every α strictly inside (0, 1).
    """

    gamma: float | None = None
    lam: float = 1.0
    step_size: float = 1e-3
    max_iters: int = 2000
    grad_tolerance: float = 1e-9
    eps_open: float = 1e-6

    def __post_init__(self):
        if self.gamma is not None and self.gamma < 0.0:
            raise ValueError("gamma must be >= 0")
        if self.lam < 0.0:
            raise ValueError("lam must be >= 0")
        if self.step_size <= 0.0:
            raise ValueError("step_size must be > 0")
        if self.max_iters < 1:
            raise ValueError("max_iters must be >= 1")
        if self.grad_tolerance <= 0.0:
            raise ValueError("grad_tolerance must be > 0")
        if not (0.0 < self.eps_open <= 1e-3):
            raise ValueError("eps_open must lie in (0, 1e-3]")


@dataclass(frozen=True)
class ObjectiveBreakdown:
    """cpe + reg = total; per_step holds each step's w·f_Δ contribution."""

    cpe: float
    reg: float
    per_step: np.ndarray
    total: float = field(init=False)

    def __post_init__(self):
        object.__setattr__(self, "per_step",
                           np.asarray(self.per_step, dtype=float))
        object.__setattr__(self, "total", self.cpe + self.reg)


def _candidate_products(candidate: np.ndarray, K: int) -> np.ndarray:
    candidate = np.atleast_1d(np.asarray(candidate, dtype=float))
    if candidate.size != K:
        raise ValueError(f"candidate length {candidate.size} != base length {K}")
    if np.any(candidate <= 0.0) or np.any(candidate >= 1.0):
        raise ValueError("candidate alpha values must lie strictly inside (0, 1)")
    prods = np.cumprod(candidate)
    if prods[-1] == 0.0 or not np.all(np.isfinite(prods)):
        raise FloatingPointError(
            "cumulative product underflowed: trajectory left the representable region")
    return prods


def objective(candidate: np.ndarray, base: Trajectory, prof: ErrorProfile,
              lam: float) -> ObjectiveBreakdown:
    """Evaluate cumulative prediction error plus endpoint regularizer."""
    prods = _candidate_products(candidate, base.K)
    candidate = np.atleast_1d(np.asarray(candidate, dtype=float))
    w = error_weight(prods, candidate)
    per_step = w * f_delta(prof, prods)
    reg = lam * (prods[-1] - base.alpha_bar[-1]) ** 2
    return ObjectiveBreakdown(cpe=float(np.sum(per_step)), reg=float(reg),
                              per_step=per_step)


def objective_gradient(candidate: np.ndarray, base: Trajectory,
                       prof: ErrorProfile, lam: float) -> np.ndarray:
    """Exact gradient of objective() w.r.t. each candidate α.

    Chain rule through ᾱ_k = Π_{s≤k} α_s gives ∂ᾱ_k/∂α_j = ᾱ_k/α_j for j ≤ k.
    The k = 1 term is handled with its combined total derivative: ᾱ_1 = α_1
    makes the separate partials of w singular while their sum is smooth,
      d/da [w(a, a)·f_Δ(a)] = −f_Δ(a)/a² + ((1−a)/a)·f'_Δ(a).
    At f_Δ knots the right-segment slope is used (f_delta_slope convention).
    """
    prods = _candidate_products(candidate, base.K)
    alpha = np.atleast_1d(np.asarray(candidate, dtype=float))
    K = base.K

    u = np.sqrt(1.0 - prods)
    v = np.sqrt(alpha - prods)            # v[0] == 0 exactly (ᾱ_1 = α_1)
    w = (u - v) ** 2 / prods
    F = f_delta(prof, prods)
    S = f_delta_slope(prof, prods)

    # d(w·F)/dᾱ and d(w·F)/dα per step, valid for k >= 2 where v > 0
    with np.errstate(divide="ignore", invalid="ignore"):
        w_abar = w / (u * v) - w / prods
        w_alpha = -(u - v) / (v * prods)
    dA = w_abar * F + w * S               # ∂(wF)/∂ᾱ_k
    dB = w_alpha * F                      # ∂(wF)/∂α_k

    weighted = dA * prods
    weighted[0] = 0.0                     # k = 1 enters via its combined term
    suffix = np.cumsum(weighted[::-1])[::-1]

    grad = suffix / alpha
    grad[1:] += dB[1:]
    grad[0] += -F[0] / alpha[0] ** 2 + w[0] * S[0]

    if lam != 0.0:
        grad += 2.0 * lam * (prods[-1] - base.alpha_bar[-1]) * prods[-1] / alpha
    return grad


def project(candidate: np.ndarray, base_alpha: np.ndarray, gamma: float,
            eps_open: float) -> np.ndarray:
    """Clamp onto [max(eps, α−γ), min(1−eps, α+γ)] elementwise; idempotent."""
    candidate = np.atleast_1d(np.asarray(candidate, dtype=float))
    base_alpha = np.atleast_1d(np.asarray(base_alpha, dtype=float))
    if candidate.size != base_alpha.size:
        raise ValueError("candidate and base_alpha lengths differ")
    lo = np.maximum(eps_open, base_alpha - gamma)
    hi = np.minimum(1.0 - eps_open, base_alpha + gamma)
    bad = lo > hi
    if np.any(bad):
        k = int(np.argmax(bad))
        raise ValueError(
            f"empty feasible interval at step {k + 1}: base alpha {base_alpha[k]} "
            f"with gamma={gamma}, eps_open={eps_open}")
    return np.clip(candidate, lo, hi)


@dataclass(frozen=True)
class OptimizeResult:
    """Best iterate of the search plus the per-iteration objective trace."""

    trajectory: Trajectory
    alpha: np.ndarray
    breakdown: ObjectiveBreakdown
    trace: np.ndarray            # rows (cpe, reg, total); row 0 = start point
    n_iters: int
    converged: bool


def optimize(base: Trajectory, prof: ErrorProfile,
             config: OptimizeConfig = OptimizeConfig()) -> OptimizeResult:
    """Projected gradient descent from the base trajectory's α vector.

    Stops at max_iters or when the projected-gradient norm
    ‖project(x − η∇) − x‖/η drops below grad_tolerance.  Returns the best
    objective iterate visited; with a feasible base this never loses to the
    base trajectory.  The output keeps the base label/kind, and a search that
    never moves returns the base noise levels verbatim.
    """
    base_alpha = alpha_from_alphabar(base)
    gamma = config.gamma if config.gamma is not None else default_gamma(base.K)
    x = project(base_alpha, base_alpha, gamma, config.eps_open)
    start = x.copy()

    bd = objective(x, base, prof, config.lam)
    trace = [(bd.cpe, bd.reg, bd.total)]
    best_x, best_bd = x.copy(), bd
    converged = False
    iters = 0
    for iters in range(1, config.max_iters + 1):
        g = objective_gradient(x, base, prof, config.lam)
        x_new = project(x - config.step_size * g, base_alpha, gamma,
                        config.eps_open)
        pg_norm = float(np.linalg.norm(x_new - x)) / config.step_size
        x = x_new
        bd = objective(x, base, prof, config.lam)
        if not np.isfinite(bd.total):
            err = RuntimeError(
                f"objective became non-finite at iteration {iters}")
            err.trace = np.asarray(trace)
            raise err
        trace.append((bd.cpe, bd.reg, bd.total))
        if bd.total < best_bd.total:
            best_x, best_bd = x.copy(), bd
        if pg_norm < config.grad_tolerance:
            converged = True
            break

    if np.array_equal(best_x, start) and np.array_equal(start, base_alpha):
        traj = Trajectory(alpha_bar=base.alpha_bar, label=base.label,
                          kind=base.kind)
    else:
        traj = alphabar_from_alpha(best_x, label=base.label, kind=base.kind)
    return OptimizeResult(trajectory=traj, alpha=best_x, breakdown=best_bd,
                          trace=np.asarray(trace), n_iters=iters,
                          converged=converged)
