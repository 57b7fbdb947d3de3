"""Proximal gradient solver for masked Huber loss with a spectral penalty."""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .linalg import ShapeError, as_mask, as_matrix, spectral_norm, svd
from .loss import check_tau, huber, masked_residual, psi
from .penalty import PenaltySpec, penalty_of_singular_values, spectral_prox


class DivergenceError(RuntimeError):
    """Raised when the objective becomes non-finite during a fit."""


@dataclass(frozen=True)
class FitConfig:
    """Solver settings.

    ``step_size="auto"`` uses ``n / ||X||_2**2``. Iteration stops when the
    Frobenius change between iterates drops below ``tol`` or after
    ``max_iter`` updates.
    """

    tau: float = 1.0
    penalty: PenaltySpec = field(default_factory=lambda: PenaltySpec("scad", 0.1))
    step_size: float | str = "auto"
    tol: float = 1e-5
    max_iter: int = 500
    rank_tol_rel: float = 1e-6

    def __post_init__(self):
        object.__setattr__(self, "tau", check_tau(self.tau))
        if not isinstance(self.penalty, PenaltySpec):
            raise TypeError("penalty must be a PenaltySpec")
        if self.step_size != "auto":
            step = float(self.step_size)
            if not (math.isfinite(step) and step > 0):
                raise ValueError(f"step_size must be positive or 'auto', got {self.step_size}")
            object.__setattr__(self, "step_size", step)
        if not self.tol > 0:
            raise ValueError(f"tol must be positive, got {self.tol}")
        if int(self.max_iter) != self.max_iter or self.max_iter < 1:
            raise ValueError(f"max_iter must be a positive integer, got {self.max_iter}")
        object.__setattr__(self, "max_iter", int(self.max_iter))
        if not 0 < self.rank_tol_rel < 1:
            raise ValueError(f"rank_tol_rel must lie in (0, 1), got {self.rank_tol_rel}")

    def with_params(self, tau=None, lam=None) -> "FitConfig":
        cfg = self if tau is None else replace(self, tau=tau)
        return cfg if lam is None else replace(cfg, penalty=cfg.penalty.with_lambda(lam))


@dataclass
class FitResult:
    B_hat: np.ndarray
    singular_values: np.ndarray
    rank: int
    objective_trace: list[float]
    iterations: int
    converged: bool
    step_size: float
    config: FitConfig

    @property
    def objective(self) -> float:
        return self.objective_trace[-1] if self.objective_trace else math.nan


def lipschitz_step(X, n: int | None = None) -> float:
    """Step ``n / ||X||_2**2``, the inverse Lipschitz constant of the loss gradient."""
    X = as_matrix(X, "X")
    n = X.shape[0] if n is None else int(n)
    norm = spectral_norm(X)
    if norm == 0:
        raise ValueError("design matrix X is identically zero; the step size is undefined")
    return n / (norm * norm)


def estimated_rank(singular_values, rank_tol_rel: float = 1e-6) -> int:
    """Count singular values above ``rank_tol_rel`` times the largest one."""
    s = np.asarray(singular_values, dtype=float)
    if s.size == 0:
        return 0
    top = s.max()
    if top <= 0:
        return 0
    return int(np.count_nonzero(s > rank_tol_rel * top))


def predict(X_new, B_hat) -> np.ndarray:
    X_new = as_matrix(X_new, "X_new")
    B_hat = as_matrix(B_hat, "B_hat")
    if X_new.shape[1] != B_hat.shape[0]:
        raise ShapeError(f"X_new has {X_new.shape[1]} columns but B_hat has {B_hat.shape[0]} rows")
    return X_new @ B_hat


def objective(Y, X, B, mask, config: FitConfig, scale: float = 1.0) -> float:
    """Masked Huber loss plus spectral penalty, with the penalty taken at ``scale``
    (see :func:`robust_rrr.penalty.penalty_of_singular_values`)."""
    Y, X, B = as_matrix(Y, "Y"), as_matrix(X, "X"), as_matrix(B, "B")
    mask = as_mask(mask, Y.shape)
    R = masked_residual(Y, X @ B, mask)
    smooth = float(huber(R, config.tau).sum() / X.shape[0])
    return smooth + penalty_of_singular_values(svd(B).singular_values, config.penalty, scale)


def fit(Y, X, mask=None, config: FitConfig | None = None, init=None) -> FitResult:
    """Fit a low-rank coefficient matrix by proximal gradient descent.

    Each iteration takes a gradient step on the masked Huber loss and then
    thresholds the singular values of the result with the penalty's scalar
    proximal map at level ``step * lam``.

    Parameters
    ----------
    Y : ndarray (n, q)
        Responses; entries outside ``mask`` are ignored.
    X : ndarray (n, p)
    mask : ndarray of bool (n, q), optional
        Observed entries. Defaults to fully observed.
    config : FitConfig
    init : ndarray (p, q), optional
        Warm start. The default (and the documented algorithm) starts at zero.

    Returns
    -------
    FitResult
        ``objective_trace[t]`` is the objective after update ``t + 1``, with the
        penalty scaled as in :func:`objective` at ``scale=step``; this is the
        quantity the iteration is guaranteed not to increase.
    """
    config = FitConfig() if config is None else config
    X = as_matrix(X, "X")
    Y = as_matrix(Y, "Y")
    n, p = X.shape
    if Y.shape[0] != n:
        raise ShapeError(f"X has {n} rows but Y has {Y.shape[0]}")
    q = Y.shape[1]
    mask = as_mask(mask, Y.shape)
    Y = np.where(mask, Y, 0.0)
    step = lipschitz_step(X) if config.step_size == "auto" else float(config.step_size)
    tau, pen = config.tau, config.penalty

    if init is None:
        B = np.zeros((p, q))
    else:
        B = as_matrix(init, "init").copy()
        if B.shape != (p, q):
            raise ShapeError(f"init must have shape {(p, q)}, got {B.shape}")
    XB = X @ B
    s = np.zeros(min(p, q))
    trace: list[float] = []
    converged = False
    it = 0
    for it in range(1, config.max_iter + 1):
        G = -(X.T @ psi(masked_residual(Y, XB, mask), tau)) / n
        B_new, s = spectral_prox(B - step * G, pen, step)
        XB = X @ B_new
        obj = float(huber(masked_residual(Y, XB, mask), tau).sum() / n) + penalty_of_singular_values(
            s, pen, step
        )
        if not math.isfinite(obj):
            raise DivergenceError(
                f"objective became non-finite at iteration {it} (step size {step:g}); "
                "use a smaller step size or step_size='auto'"
            )
        trace.append(obj)
        delta = float(np.linalg.norm(B_new - B))
        B = B_new
        if delta < config.tol:
            converged = True
            break
    return FitResult(
        B_hat=B,
        singular_values=s,
        rank=estimated_rank(s, config.rank_tol_rel),
        objective_trace=trace,
        iterations=it,
        converged=converged,
        step_size=step,
        config=config,
    )
