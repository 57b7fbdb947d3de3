"""Real-data workflow: CSV input, standardization, predictor screening, repeated splits."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np

from .linalg import as_mask, as_matrix
from .selection import cross_covariance

MISSING_TOKENS = ("", "NA", "na", "NaN", "nan")


class CsvFormatError(ValueError):
    pass


def read_matrix_csv(path, allow_missing: bool = False):
    """Read a headed numeric CSV (one row per observation).

    Returns ``(matrix, mask, header)``. Missing cells (empty or ``NA``) are only
    accepted with ``allow_missing``; they come back as ``0.0`` with ``False`` in
    the mask.
    """
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise CsvFormatError(f"{path}: file is empty")
    header = [h.strip() for h in rows[0]]
    body = [r for r in rows[1:] if any(cell.strip() for cell in r)]
    if not body:
        raise CsvFormatError(f"{path}: no data rows after the header")
    values = np.zeros((len(body), len(header)))
    mask = np.ones(values.shape, dtype=bool)
    for i, row in enumerate(body):
        if len(row) != len(header):
            raise CsvFormatError(f"{path}: line {i + 2} has {len(row)} fields, header has {len(header)}")
        for j, cell in enumerate(row):
            cell = cell.strip()
            if cell in MISSING_TOKENS:
                if not allow_missing:
                    raise CsvFormatError(f"{path}: line {i + 2}, column {header[j]!r} is missing")
                mask[i, j] = False
                continue
            try:
                v = float(cell)
            except ValueError:
                raise CsvFormatError(f"{path}: line {i + 2}, column {header[j]!r}: not a number: {cell!r}") from None
            if not math.isfinite(v):
                raise CsvFormatError(f"{path}: line {i + 2}, column {header[j]!r}: non-finite value")
            values[i, j] = v
    return values, mask, header


def format_float(x) -> str:
    """Shortest round-trip representation."""
    return repr(float(x))


def write_matrix_csv(path, M, header=None, mask=None) -> None:
    M = np.asarray(M, dtype=float)
    if M.ndim == 1:
        M = M.reshape(-1, 1)
    header = header or [f"c{j + 1}" for j in range(M.shape[1])]
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for i, row in enumerate(M):
            w.writerow(
                "NA" if mask is not None and not mask[i, j] else format_float(v) for j, v in enumerate(row)
            )


def standardize(M, mask=None, ddof: int = 1):
    """Center and scale each column over its observed entries.

    Returns ``(Z, means, sds)``; unobserved entries of ``Z`` are ``0.0``.
    ``sds`` use denominator ``count - ddof``.
    """
    M = as_matrix(M)
    mask = as_mask(mask, M.shape)
    counts = mask.sum(axis=0)
    low = np.flatnonzero(counts < 2)
    if low.size:
        raise ValueError(f"column {int(low[0])} has fewer than 2 observed entries")
    means = np.where(mask, M, 0.0).sum(axis=0) / counts
    dev = np.where(mask, M - means, 0.0)
    sds = np.sqrt((dev * dev).sum(axis=0) / (counts - ddof))
    flat = np.flatnonzero(~(sds > 1e-12 * np.maximum(1.0, np.abs(means))))
    if flat.size:
        raise ValueError(f"column {int(flat[0])} has zero variance and cannot be standardized")
    return np.where(mask, dev / sds, 0.0), means, sds


def apply_standardization(M, means, sds, mask=None):
    M = as_matrix(M)
    mask = as_mask(mask, M.shape)
    return np.where(mask, (M - means) / sds, 0.0)


@dataclass
class ScreeningResult:
    scores: np.ndarray
    selected_indices: np.ndarray
    n_selected: int


def screen_predictors(X, Y, mask=None, n_keep: int = 100) -> ScreeningResult:
    """Keep the ``n_keep`` predictors with the largest cross-covariance row norms.

    Ties are broken toward the lower column index.
    """
    if n_keep <= 0:
        raise ValueError(f"n_keep must be positive, got {n_keep}")
    C = cross_covariance(X, Y, mask)
    if n_keep > C.shape[0]:
        raise ValueError(f"n_keep = {n_keep} exceeds the number of predictors {C.shape[0]}")
    scores = np.sqrt(np.sum(C * C, axis=1))
    order = np.lexsort((np.arange(scores.size), -scores))
    return ScreeningResult(scores, order[:n_keep], int(n_keep))


def repeated_splits(n: int, n_test: int, n_reps: int, seed):
    """``n_reps`` random (train, test) row-index splits with ``n_test`` test rows each."""
    if not 0 < n_test < n:
        raise ValueError(f"n_test must satisfy 0 < n_test < n = {n}, got {n_test}")
    if n_reps < 1:
        raise ValueError("n_reps must be at least 1")
    rng = np.random.default_rng(np.random.SeedSequence(seed))
    splits = []
    for _ in range(n_reps):
        test = np.sort(rng.choice(n, size=n_test, replace=False))
        train = np.setdiff1d(np.arange(n), test, assume_unique=True)
        splits.append((train, test))
    return splits


def synthetic_standin(n: int = 59, p: int = 300, q: int = 20, r: int = 4, seed: int = 0):
    """Heavy-tailed low-rank stand-in for a small-n, wide real dataset (raw ``p`` before screening).

    Only the first ``3r`` predictors carry signal; noise is ``t_3``.
    Returns ``(X, Y)``.
    """
    rng = np.random.default_rng(np.random.SeedSequence(seed))
    X = rng.standard_normal((n, p))
    k = min(p, 3 * r)
    B = np.zeros((p, q))
    B[:k] = rng.standard_normal((k, r)) @ rng.standard_normal((r, q)) / math.sqrt(k)
    Y = X @ B + rng.standard_t(3, size=(n, q))
    return X, Y


def mask_training_rows(mask, rows, fraction: float, rng):
    """Delete ``round(fraction * size)`` observed entries uniformly among ``rows``."""
    out = mask.copy()
    sub = out[rows]
    idx = np.flatnonzero(sub)
    count = int(math.floor(fraction * sub.size + 0.5))
    if count >= idx.size:
        raise ValueError("missing fraction would delete every training entry")
    if count:
        flat = sub.reshape(-1)
        flat[rng.choice(idx, size=count, replace=False)] = False
        out[rows] = sub
    return out
