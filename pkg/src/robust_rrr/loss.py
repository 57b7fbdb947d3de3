"""Huber loss, its clipped score, and the masked smooth part of the objective.

``tau = math.inf`` turns every function here into its squared-loss counterpart,
which is how the non-robust baseline is obtained.
"""

from __future__ import annotations

import math

import numpy as np

from .linalg import ShapeError, as_mask, as_matrix


def check_tau(tau) -> float:
    """Validate a Huber threshold: positive, or ``inf`` for squared loss."""
    tau = float(tau)
    if math.isnan(tau) or tau <= 0:
        raise ValueError(f"Huber threshold tau must be positive (or inf), got {tau}")
    return tau


def parse_tau(text: str) -> float:
    """Parse ``"inf"``/``"infinity"``/``"lsq"`` or a positive number."""
    t = str(text).strip().lower()
    if t in ("inf", "+inf", "infinity", "lsq"):
        return math.inf
    return check_tau(float(t))


def huber(u, tau):
    """Elementwise Huber loss.

    ``0.5 * u**2`` where ``|u| <= tau`` and ``tau*|u| - 0.5*tau**2`` beyond.
    """
    u = np.asarray(u, dtype=float)
    a = np.abs(u)
    if math.isinf(tau):
        out = 0.5 * u * u
    else:
        out = np.where(a <= tau, 0.5 * u * u, tau * a - 0.5 * tau * tau)
    return out if out.ndim else float(out)


def psi(u, tau):
    """Derivative of :func:`huber`: ``sign(u) * min(|u|, tau)``."""
    u = np.asarray(u, dtype=float)
    out = u.copy() if math.isinf(tau) else np.clip(u, -tau, tau)
    return out if out.ndim else float(out)


def _check_problem(Y, X, B, mask):
    Y = as_matrix(Y, "Y")
    X = as_matrix(X, "X")
    B = as_matrix(B, "B")
    n, p = X.shape
    if Y.shape[0] != n:
        raise ShapeError(f"X has {n} rows but Y has {Y.shape[0]}")
    if B.shape != (p, Y.shape[1]):
        raise ShapeError(f"B must have shape {(p, Y.shape[1])}, got {B.shape}")
    return Y, X, B, as_mask(mask, Y.shape)


def masked_residual(Y, XB, mask):
    # unobserved entries are exactly 0.0 so their Y values never propagate
    return np.where(mask, Y - XB, 0.0)


def loss(Y, X, B, mask=None, tau=math.inf) -> float:
    """Masked Huber loss ``(1/n) * sum over observed (i, j) of huber((Y - XB)_ij)``.

    The normalizer is the number of rows ``n`` of ``X``, not the number of
    observed entries.
    """
    Y, X, B, mask = _check_problem(Y, X, B, mask)
    tau = check_tau(tau)
    R = masked_residual(Y, X @ B, mask)
    return float(huber(R, tau).sum() / X.shape[0])


def gradient(Y, X, B, mask=None, tau=math.inf) -> np.ndarray:
    """Gradient of :func:`loss` in ``B``: ``-(1/n) X^T psi(R)`` with ``R`` zeroed off the mask."""
    Y, X, B, mask = _check_problem(Y, X, B, mask)
    tau = check_tau(tau)
    R = masked_residual(Y, X @ B, mask)
    return -(X.T @ psi(R, tau)) / X.shape[0]
