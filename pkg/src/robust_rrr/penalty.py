"""MCP, SCAD and nuclear-norm penalties on singular values, with their proximal maps."""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .linalg import as_matrix, svd

FAMILIES = ("mcp", "scad", "nuclear")
DEFAULT_ETA = {"mcp": 3.0, "scad": 3.7, "nuclear": 3.0}
# concavity values this close to the admissibility bound are rejected
ETA_MARGIN = 1e-6


@dataclass(frozen=True)
class PenaltySpec:
    """A spectral penalty family with strength ``lam`` and concavity ``eta``.

    ``eta`` must exceed 1 for MCP and 2 for SCAD; it is ignored for the
    nuclear norm. ``eta=None`` picks the conventional default (3.0 for MCP,
    3.7 for SCAD).
    """

    family: str
    lam: float
    eta: float | None = None

    def __post_init__(self):
        family = str(self.family).lower()
        if family in ("nucl", "nuclear-norm", "soft"):
            family = "nuclear"
        if family not in FAMILIES:
            raise ValueError(f"unknown penalty family {self.family!r}; expected one of {FAMILIES}")
        object.__setattr__(self, "family", family)
        lam = float(self.lam)
        if not math.isfinite(lam) or lam < 0:
            raise ValueError(f"penalty lambda must be finite and >= 0, got {self.lam}")
        object.__setattr__(self, "lam", lam)
        eta = DEFAULT_ETA[family] if self.eta is None else float(self.eta)
        bound = {"mcp": 1.0, "scad": 2.0}.get(family)
        if bound is not None and not eta > bound + ETA_MARGIN:
            raise ValueError(
                f"{family.upper()} requires eta > {bound:g} (with margin {ETA_MARGIN:g}), got {eta}"
            )
        object.__setattr__(self, "eta", eta)

    def with_lambda(self, lam: float) -> "PenaltySpec":
        return replace(self, lam=lam)


def penalty_value(t, spec: PenaltySpec):
    """Penalty ``rho(t)`` for non-negative ``t`` (scalar or array)."""
    t = np.asarray(t, dtype=float)
    if (t < 0).any():
        raise ValueError("penalty_value is defined for t >= 0")
    lam, eta = spec.lam, spec.eta
    if spec.family == "nuclear":
        out = lam * t
    elif spec.family == "mcp":
        out = np.where(t <= eta * lam, lam * t - t * t / (2.0 * eta), 0.5 * eta * lam * lam)
    else:
        out = np.where(
            t <= lam,
            lam * t,
            np.where(
                t <= eta * lam,
                (-t * t + 2.0 * eta * lam * t - lam * lam) / (2.0 * (eta - 1.0)),
                0.5 * (eta + 1.0) * lam * lam,
            ),
        )
    return out if out.ndim else float(out)


def scalar_prox(z, spec: PenaltySpec, scale: float = 1.0):
    """Closed-form scalar proximal map at threshold ``lam' = scale * spec.lam``.

    Solves ``argmin_x 0.5*(x - z)**2 + rho'(|x|)`` where ``rho'`` is the
    penalty of ``spec`` with ``lam`` replaced by ``lam'`` and ``eta`` kept.
    Zone boundaries fall into the lower branch; the branches agree there.
    """
    z = np.asarray(z, dtype=float)
    lam = float(scale) * spec.lam
    eta = spec.eta
    a = np.abs(z)
    sgn = np.sign(z)
    if spec.family == "nuclear":
        out = sgn * np.maximum(a - lam, 0.0)
    elif spec.family == "mcp":
        out = np.where(
            a <= lam, 0.0, np.where(a <= eta * lam, sgn * eta * (a - lam) / (eta - 1.0), z)
        )
    else:
        out = np.where(
            a <= lam,
            0.0,
            np.where(
                a <= 2.0 * lam,
                sgn * (a - lam),
                np.where(a <= eta * lam, sgn * ((eta - 1.0) * a - eta * lam) / (eta - 2.0), z),
            ),
        )
    out = out + 0.0  # normalise -0.0
    return out if out.ndim else float(out)


def spectral_prox(M, spec: PenaltySpec, scale: float = 1.0) -> tuple[np.ndarray, np.ndarray]:
    """Apply :func:`scalar_prox` to the singular values of ``M`` and rebuild.

    Returns
    -------
    B : ndarray
        ``U diag(prox(s)) V^T``.
    s_new : ndarray
        Thresholded singular values, descending (the scalar maps are monotone).
    """
    M = as_matrix(M)
    U, s, Vt = svd(M)
    s_new = scalar_prox(s, spec, scale)
    keep = s_new > 0
    B = (U[:, keep] * s_new[keep]) @ Vt[keep]
    return B, s_new


def penalty_of_singular_values(s, spec: PenaltySpec, scale: float = 1.0) -> float:
    """``(1/scale) * sum rho_{scale*lam}(s_j)``; ``scale=1`` is the plain spectral penalty.

    With ``scale`` equal to the gradient step this is the penalty whose proximal
    map :func:`spectral_prox` evaluates at that step, so it is the term the
    proximal-gradient iteration actually descends. For the nuclear norm the
    scale cancels.
    """
    scaled = spec if scale == 1.0 else spec.with_lambda(scale * spec.lam)
    return float(np.sum(penalty_value(np.asarray(s, dtype=float), scaled)) / scale)


def penalty_of_matrix(M, spec: PenaltySpec, scale: float = 1.0) -> float:
    """Spectral penalty ``sum rho(sigma_j(M))`` (see :func:`penalty_of_singular_values`)."""
    return penalty_of_singular_values(svd(M).singular_values, spec, scale)
