"""1-D kriging extrapolation along the tunnel axis.

Two modes:

``paper_literal``
    ``A @ lam = b`` with ``A_ij = gamma(|x_i - x_j|)`` (diagonal C0) and no
    unbiasedness constraint; variance ``2 lam.b - lam.A.lam``.
``ordinary``
    textbook ordinary kriging, gamma(0) = 0, augmented with a Lagrange row
    so that ``sum(lam) == 1``; variance ``lam.b + mu``.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
import scipy.linalg as spl

from .variogram import VariogramModel, eval_model

MODES = ("ordinary", "paper_literal")
_REGULARIZATION = 1e-10


class KrigingError(ValueError):
    pass


@dataclass(frozen=True)
class KrigingEstimate:
    value: np.ndarray  # (k,) estimate per component
    variance: float  # shared by all components
    weights: np.ndarray
    mu: float | None = None
    clamped: bool = False  # a negative rounding-level variance was set to 0


def _check_mode(mode):
    if mode not in MODES:
        raise KrigingError(f"unknown kriging mode {mode!r}")


def build_system(prev_locations, x0, m: VariogramModel, mode: str = "ordinary"):
    """Left-hand matrix and right-hand side; augmented in ordinary mode."""
    _check_mode(mode)
    x = np.asarray(prev_locations, dtype=float)
    if x.ndim != 1 or x.size == 0:
        raise KrigingError("need at least one previous location")
    if not np.isfinite(x0):
        raise KrigingError("query location must be finite")
    zero0 = mode == "ordinary"
    A = eval_model(m, np.abs(x[:, None] - x[None, :]), zero_at_origin=zero0)
    b = eval_model(m, np.abs(x - x0), zero_at_origin=zero0)
    A = np.atleast_2d(A)
    b = np.atleast_1d(b)
    if mode == "paper_literal":
        return A, b
    n = x.size
    Aa = np.ones((n + 1, n + 1))
    Aa[:n, :n] = A
    Aa[n, n] = 0.0
    return Aa, np.append(b, 1.0)


def _solve_sym(A, rhs, n):
    with warnings.catch_warnings():
        warnings.simplefilter("error", spl.LinAlgWarning)
        try:
            return spl.solve(A, rhs, assume_a="sym")
        except (np.linalg.LinAlgError, spl.LinAlgWarning):
            pass
        Ar = A.copy()
        scale = max(float(np.max(np.abs(A[:n, :n]))), 1.0)
        Ar[np.arange(n), np.arange(n)] += _REGULARIZATION * scale
        try:
            return spl.solve(Ar, rhs, assume_a="sym")
        except (np.linalg.LinAlgError, spl.LinAlgWarning):
            pass
    with np.errstate(all="ignore"):
        cond = np.linalg.cond(A)
    raise KrigingError(f"degenerate kriging system (condition number {cond:.3g})")


def solve_weights(A, b, mode: str = "ordinary"):
    """Solve a system from :func:`build_system`; returns ``(lam, mu)``."""
    _check_mode(mode)
    sol = _solve_sym(np.asarray(A, dtype=float), np.asarray(b, dtype=float),
                     len(b) - (mode == "ordinary"))
    if mode == "paper_literal":
        return sol, None
    return sol[:-1], float(sol[-1])


def kriging_variance(lam, A, b, mode: str = "ordinary", mu=None) -> float:
    """Unclamped kriging variance for given weights."""
    lam = np.asarray(lam, dtype=float)
    n = lam.size
    A = np.asarray(A, dtype=float)[:n, :n]
    b = np.asarray(b, dtype=float)[:n]
    if mode == "paper_literal":
        return float(2.0 * lam @ b - lam @ A @ lam)
    return float(lam @ b + mu)


def kriging_weights(prev_locations, x0, m: VariogramModel, mode: str = "ordinary"):
    x = np.asarray(prev_locations, dtype=float)
    if np.unique(x).size != x.size:
        raise KrigingError("previous locations must be distinct")
    A, b = build_system(x, x0, m, mode)
    return solve_weights(A, b, mode)


def dedupe_latest(x, z):
    """Keep the last occurrence of each chainage (history order)."""
    x = np.asarray(x, dtype=float)
    _, first_rev = np.unique(x[::-1], return_index=True)
    keep = np.sort(len(x) - 1 - first_rev)
    return x[keep], np.asarray(z)[keep]


def extrapolate(prev_x, prev_z, x0, m: VariogramModel, mode: str = "ordinary") -> KrigingEstimate:
    """Kriged value of every component of ``prev_z`` at ``x0``."""
    x, z = dedupe_latest(prev_x, prev_z)
    z = np.asarray(z, dtype=float)
    if z.ndim == 1:
        z = z[:, None]
    if len(x) == 0:
        raise KrigingError("need at least one previous location")
    A, b = build_system(x, x0, m, mode)
    lam, mu = solve_weights(A, b, mode)
    var = kriging_variance(lam, A, b, mode, mu)
    clamped = var < 0
    return KrigingEstimate(lam @ z, max(var, 0.0), lam, mu, clamped)
