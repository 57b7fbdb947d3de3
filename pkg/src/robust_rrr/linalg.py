"""Dense matrix helpers: validated conversion, thin SVD, spectral norm and masking.

Matrices are plain 2-D float64 ``numpy`` arrays and observation masks are
boolean arrays of the same shape. Missing response markers (NaN) are split off
into a mask once, at the boundary, via :func:`split_missing`; nothing past that
point ever holds a NaN.
"""

from __future__ import annotations

from typing import NamedTuple

import numpy as np


class ShapeError(ValueError):
    """Raised when matrix shapes are not conformable."""


class SvdError(RuntimeError):
    """Raised when an SVD kernel fails to converge."""


class SvdResult(NamedTuple):
    U: np.ndarray
    singular_values: np.ndarray
    Vt: np.ndarray


JACOBI_MAX_SWEEPS = 60


def as_matrix(M, name: str = "matrix", allow_nan: bool = False) -> np.ndarray:
    """Return ``M`` as a finite 2-D float64 array, raising on anything else."""
    A = np.asarray(M, dtype=float)
    if A.ndim == 1:
        A = A.reshape(-1, 1)
    if A.ndim != 2 or A.shape[0] < 1 or A.shape[1] < 1:
        raise ShapeError(f"{name} must be a non-empty 2-D matrix, got shape {A.shape}")
    if allow_nan:
        if np.isinf(A).any():
            raise ValueError(f"{name} contains infinite entries")
    elif not np.isfinite(A).all():
        raise ValueError(f"{name} contains non-finite entries")
    return A


def as_mask(mask, shape: tuple[int, int]) -> np.ndarray:
    """Validate an observation mask; ``None`` means fully observed."""
    if mask is None:
        return np.ones(shape, dtype=bool)
    m = np.asarray(mask)
    if m.dtype != bool:
        if not np.isin(m, (0, 1)).all():
            raise ValueError("mask entries must be boolean or 0/1")
        m = m.astype(bool)
    if m.shape != tuple(shape):
        raise ShapeError(f"mask shape {m.shape} does not match response shape {tuple(shape)}")
    if not m.any():
        raise ValueError("mask has no observed entries; an all-missing response cannot be fitted")
    return m


def split_missing(raw) -> tuple[np.ndarray, np.ndarray]:
    """Split a raw response holding NaN markers into ``(Y, mask)`` with zeros at the gaps."""
    R = as_matrix(raw, name="response", allow_nan=True)
    observed = ~np.isnan(R)
    mask = as_mask(observed, R.shape)
    return np.where(mask, R, 0.0), mask


def _fix_signs(U: np.ndarray, Vt: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    # largest-magnitude entry of each left singular vector made non-negative
    if U.shape[1] == 0:
        return U, Vt
    idx = np.argmax(np.abs(U), axis=0)
    signs = np.sign(U[idx, np.arange(U.shape[1])])
    signs[signs == 0] = 1.0
    return U * signs, Vt * signs[:, None]


def _complete_basis(Q: np.ndarray, good: np.ndarray) -> np.ndarray:
    """Replace columns of ``Q`` not flagged ``good`` by an orthonormal completion."""
    m, k = Q.shape
    keep = Q[:, good]
    candidates = np.eye(m)
    out = Q.copy()
    basis = [keep[:, j] for j in range(keep.shape[1])]
    c = 0
    for j in np.flatnonzero(~good):
        while True:
            v = candidates[:, c].copy()
            c += 1
            for b in basis:
                v -= (b @ v) * b
            for b in basis:  # second pass for stability
                v -= (b @ v) * b
            nv = np.linalg.norm(v)
            if nv > 1e-8:
                break
        v /= nv
        basis.append(v)
        out[:, j] = v
    return out


def jacobi_svd(M, tol: float | None = None, max_sweeps: int = JACOBI_MAX_SWEEPS) -> SvdResult:
    """Thin SVD by one-sided (Hestenes) Jacobi rotations.

    Rotates column pairs of ``A`` until all pairs are numerically orthogonal;
    the column norms are then the singular values. Accumulated rotations give
    ``V``. Works on the transpose when ``M`` is wide.

    Raises
    ------
    SvdError
        If orthogonality is not reached within ``max_sweeps`` sweeps.
    """
    M = as_matrix(M)
    m, n = M.shape
    if n > m:
        U, s, Vt = jacobi_svd(M.T, tol=tol, max_sweeps=max_sweeps)
        return _finish(Vt.T.copy(), s, U.T.copy())
    if tol is None:
        tol = m * np.finfo(float).eps
    A = M.copy()
    V = np.eye(n)
    for _ in range(max_sweeps):
        rotated = False
        for i in range(n - 1):
            for j in range(i + 1, n):
                ai, aj = A[:, i], A[:, j]
                alpha = ai @ ai
                beta = aj @ aj
                gamma = ai @ aj
                if abs(gamma) <= tol * np.sqrt(alpha * beta):
                    continue
                rotated = True
                zeta = (beta - alpha) / (2.0 * gamma)
                t = np.copysign(1.0, zeta) / (abs(zeta) + np.sqrt(1.0 + zeta * zeta))
                c = 1.0 / np.sqrt(1.0 + t * t)
                s = c * t
                A[:, [i, j]] = np.column_stack((c * ai - s * aj, s * ai + c * aj))
                vi, vj = V[:, i].copy(), V[:, j].copy()
                V[:, i] = c * vi - s * vj
                V[:, j] = s * vi + c * vj
        if not rotated:
            break
    else:
        raise SvdError(f"Jacobi SVD did not converge in {max_sweeps} sweeps for a {m}x{n} matrix")
    s = np.linalg.norm(A, axis=0)
    order = np.argsort(-s, kind="stable")
    s, A, V = s[order], A[:, order], V[:, order]
    scale = s[0] if s[0] > 0 else 1.0
    good = s > max(m, n) * np.finfo(float).eps * scale
    U = np.zeros_like(A)
    U[:, good] = A[:, good] / s[good]
    if not good.all():
        U = _complete_basis(U, good)
    return _finish(U, s, V.T)


def _finish(U: np.ndarray, s: np.ndarray, Vt: np.ndarray) -> SvdResult:
    U, Vt = _fix_signs(U, Vt)
    return SvdResult(U, s, Vt)


def svd(M, method: str = "lapack") -> SvdResult:
    """Thin SVD with deterministic signs.

    Parameters
    ----------
    M : array_like, shape (m, n)
    method : {"lapack", "jacobi"}
        ``"lapack"`` calls the divide-and-conquer LAPACK driver through numpy;
        ``"jacobi"`` uses :func:`jacobi_svd`.

    Returns
    -------
    SvdResult
        ``U`` (m x k), descending ``singular_values`` (k,), ``Vt`` (k x n) with
        ``k = min(m, n)``. The largest-magnitude entry of every column of ``U``
        is non-negative.
    """
    M = as_matrix(M)
    if method == "jacobi":
        return jacobi_svd(M)
    if method != "lapack":
        raise ValueError(f"unknown SVD method {method!r}")
    try:
        U, s, Vt = np.linalg.svd(M, full_matrices=False)
    except np.linalg.LinAlgError as exc:
        raise SvdError(f"SVD did not converge for a {M.shape[0]}x{M.shape[1]} matrix") from exc
    return _finish(U, s, Vt)


def spectral_norm(M) -> float:
    """Largest singular value of ``M`` (computed from the full SVD)."""
    return float(svd(M).singular_values[0])


def masked_difference(Y, Yhat, mask) -> np.ndarray:
    """``Y - Yhat`` on observed entries and exactly ``0.0`` elsewhere."""
    Y = as_matrix(Y, "Y")
    Yhat = as_matrix(Yhat, "Yhat")
    if Y.shape != Yhat.shape:
        raise ShapeError(f"Y has shape {Y.shape} but Yhat has shape {Yhat.shape}")
    mask = as_mask(mask, Y.shape)
    return np.where(mask, Y - Yhat, 0.0)
