"""Tuning-grid construction and K-fold cross-validation over (tau, lambda)."""

from __future__ import annotations

import math
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .linalg import ShapeError, as_mask, as_matrix, spectral_norm
from .solver import FitConfig, FitResult, fit

DEFAULT_TAUS = (0.1, 1.0, 10.0)
DEFAULT_N_LAMBDA = 20
DEFAULT_LAMBDA_MIN = 0.05


class GridError(ValueError):
    """Raised for a degenerate tuning grid."""


@dataclass(frozen=True)
class TuningGrid:
    taus: tuple[float, ...]
    lambdas: tuple[float, ...]

    def __post_init__(self):
        if not self.taus or not self.lambdas:
            raise GridError("tuning grid needs at least one tau and one lambda")
        lam = np.asarray(self.lambdas, dtype=float)
        if (lam <= 0).any() or (np.diff(lam) >= 0).any():
            raise GridError("lambdas must be positive and strictly descending")
        object.__setattr__(self, "taus", tuple(float(t) for t in self.taus))
        object.__setattr__(self, "lambdas", tuple(float(v) for v in self.lambdas))

    @property
    def n_lambda(self) -> int:
        return len(self.lambdas)


@dataclass
class CvReport:
    taus: tuple[float, ...]
    lambdas: tuple[float, ...]
    mean_mse: np.ndarray  # (n_tau, n_lambda)
    fold_mse: np.ndarray  # (K, n_tau, n_lambda); NaN for folds without observed entries
    selected_tau: float
    selected_lambda: float
    fold_assignment: np.ndarray
    final_fit: FitResult
    warnings: list[str] = field(default_factory=list)


def cross_covariance(X, Y, mask=None) -> np.ndarray:
    """``p x q`` matrix whose column ``j`` averages ``X_i * Y_ij`` over observed rows of column ``j``."""
    X = as_matrix(X, "X")
    Y = as_matrix(Y, "Y")
    if X.shape[0] != Y.shape[0]:
        raise ShapeError(f"X has {X.shape[0]} rows but Y has {Y.shape[0]}")
    mask = as_mask(mask, Y.shape)
    counts = mask.sum(axis=0)
    empty = np.flatnonzero(counts == 0)
    if empty.size:
        raise ValueError(f"response column(s) {empty.tolist()} have no observed entries")
    return (X.T @ np.where(mask, Y, 0.0)) / counts


def lambda_max(X, Y, mask=None) -> float:
    """Largest singular value of the masked cross-covariance between ``X`` and ``Y``."""
    value = spectral_norm(cross_covariance(X, Y, mask))
    if value <= 0:
        raise GridError("lambda_max is zero: the responses carry no signal along X")
    return value


def lambda_grid(lam_max: float, lambda_min: float = DEFAULT_LAMBDA_MIN, n_lambda: int = DEFAULT_N_LAMBDA):
    """Log-spaced values from ``lam_max`` down to ``lambda_min``, endpoints exact."""
    if n_lambda < 1:
        raise GridError("n_lambda must be at least 1")
    if n_lambda == 1:
        return (float(lam_max),)
    if not lambda_min > 0:
        raise GridError("lambda_min must be positive")
    if lam_max <= lambda_min:
        raise GridError(
            f"lambda_max = {lam_max:.6g} does not exceed lambda_min = {lambda_min:.6g}; "
            "lower lambda_min"
        )
    values = np.exp(np.linspace(math.log(lam_max), math.log(lambda_min), n_lambda))
    values[0], values[-1] = lam_max, lambda_min
    return tuple(float(v) for v in values)


def build_grid(
    X,
    Y,
    mask=None,
    n_lambda: int = DEFAULT_N_LAMBDA,
    lambda_min: float = DEFAULT_LAMBDA_MIN,
    taus=DEFAULT_TAUS,
) -> TuningGrid:
    return TuningGrid(tuple(taus), lambda_grid(lambda_max(X, Y, mask), lambda_min, n_lambda))


def fold_assignment(n: int, k: int, seed) -> np.ndarray:
    """Row-to-fold labels from a seeded shuffle; fold sizes differ by at most one."""
    if k < 2:
        raise ValueError(f"K must be at least 2, got {k}")
    if n < k:
        raise ValueError(f"cannot split {n} rows into {k} folds")
    perm = np.random.default_rng(np.random.SeedSequence(seed)).permutation(n)
    folds = np.empty(n, dtype=int)
    folds[perm] = np.arange(n) % k
    return folds


def _path_mse(args):
    """Validation MSE along the descending lambda path for one (tau, fold), with warm starts."""
    Y, X, mask, train, test, base, tau, lambdas = args
    Ytr, Xtr, Mtr = Y[train], X[train], mask[train]
    Yte, Xte, Mte = Y[test], X[test], mask[test]
    count = int(Mte.sum())
    out = np.full(len(lambdas), np.nan)
    if count == 0 or not Mtr.any():
        return out
    B = None
    for j, lam in enumerate(lambdas):
        res = fit(Ytr, Xtr, Mtr, base.with_params(tau=tau, lam=lam), init=B)
        B = res.B_hat
        R = np.where(Mte, Yte - Xte @ B, 0.0)
        out[j] = float(np.sum(R * R) / count)
    return out


def cross_validate(
    Y,
    X,
    mask=None,
    grid: TuningGrid | None = None,
    k: int = 5,
    seed=0,
    config: FitConfig | None = None,
    n_jobs: int = 1,
) -> CvReport:
    """Select ``(tau, lambda)`` by K-fold cross-validation over whole rows.

    Each (tau, fold) pair sweeps the lambda grid from largest to smallest with
    warm starts. The validation error is the squared error over observed
    held-out entries divided by their count. The pair with the smallest
    fold-averaged error wins; ties go to the larger lambda, then the larger
    tau. The winner is refitted from zero on all rows.

    ``config`` supplies the penalty family, eta and solver tolerances; its own
    tau and lambda are overridden by the grid. ``n_jobs > 1`` evaluates
    (tau, fold) pairs in worker processes; results are assembled in order.
    """
    Y = as_matrix(Y, "Y")
    X = as_matrix(X, "X")
    mask = as_mask(mask, Y.shape)
    if X.shape[0] != Y.shape[0]:
        raise ShapeError(f"X has {X.shape[0]} rows but Y has {Y.shape[0]}")
    Y = np.where(mask, Y, 0.0)
    base = FitConfig() if config is None else config
    grid = build_grid(X, Y, mask) if grid is None else grid
    n = X.shape[0]
    folds = fold_assignment(n, k, seed)

    jobs = []
    for tau in grid.taus:
        for f in range(k):
            test = folds == f
            jobs.append((Y, X, mask, ~test, test, base, tau, grid.lambdas))
    if n_jobs > 1:
        with ProcessPoolExecutor(max_workers=n_jobs) as ex:
            paths = list(ex.map(_path_mse, jobs))
    else:
        paths = [_path_mse(j) for j in jobs]

    fold_mse = np.array(paths).reshape(len(grid.taus), k, grid.n_lambda).transpose(1, 0, 2)
    notes = []
    empty = [f for f in range(k) if np.isnan(fold_mse[f]).all()]
    for f in empty:
        msg = f"fold {f} has no observed validation entries and was skipped"
        notes.append(msg)
        warnings.warn(msg, RuntimeWarning, stacklevel=2)
    if len(empty) == k:
        raise ValueError("no fold has observed validation entries")
    mean_mse = np.nanmean(np.delete(fold_mse, empty, axis=0), axis=0)

    best = np.nanmin(mean_mse)
    ti, lj = np.nonzero(mean_mse == best)
    # lambdas descend, so the smallest column index is the largest lambda
    order = np.lexsort((-np.asarray(grid.taus)[ti], lj))
    t_sel, l_sel = int(ti[order[0]]), int(lj[order[0]])
    tau_hat, lam_hat = grid.taus[t_sel], grid.lambdas[l_sel]
    final = fit(Y, X, mask, base.with_params(tau=tau_hat, lam=lam_hat))
    return CvReport(
        taus=grid.taus,
        lambdas=grid.lambdas,
        mean_mse=mean_mse,
        fold_mse=fold_mse,
        selected_tau=tau_hat,
        selected_lambda=lam_hat,
        fold_assignment=folds,
        final_fit=final,
        warnings=notes,
    )
