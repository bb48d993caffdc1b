"""Inverse-uncertainty fusion of the kriging and forest channels, and the
rolling prediction loop over a chainage-ordered stream."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import kriging
from .forest import normalize_fractions
from .kriging import MODES
from .variogram import VariogramModel


class FusionError(ValueError):
    pass


@dataclass(frozen=True)
class FusionConfig:
    variogram: VariogramModel
    window: int = 10
    mode: str = "ordinary"

    def __post_init__(self):
        if self.window < 1:
            raise FusionError("window must be >= 1")
        if self.mode not in MODES:
            raise FusionError(f"unknown kriging mode {self.mode!r}")


@dataclass
class KrfPrediction:
    chainage: float
    fused: np.ndarray
    w_kriging: np.ndarray
    w_rf: np.ndarray
    var_kriging: np.ndarray  # inf at cold start
    var_rf: np.ndarray
    kriging: np.ndarray | None  # raw kriged vector; None at cold start
    forest: np.ndarray
    fused_variance: np.ndarray = field(repr=False, default=None)

    @property
    def main(self) -> int:
        return int(np.argmax(self.fused))


def fusion_weights(var_z, var_f):
    """``(w_kriging, w_rf)``; elementwise, equal weights when both variances are 0."""
    vz = np.asarray(var_z, dtype=float)
    vf = np.asarray(var_f, dtype=float)
    if np.any(vz < 0) or np.any(vf < 0) or not (np.all(np.isfinite(vf))):
        raise FusionError("variances must be finite and non-negative")
    tot = vz + vf
    both0 = tot == 0
    with np.errstate(invalid="ignore", divide="ignore"):
        w_k = np.where(both0, 0.5, vf / np.where(both0, 1.0, tot))
    w_k = np.where(np.isinf(vz), 0.0, w_k)
    w_rf = 1.0 - w_k
    if w_k.ndim == 0:
        return float(w_k), float(w_rf)
    return w_k, w_rf


def fuse(z, var_z, f, var_f):
    """Convex combination with weights from :func:`fusion_weights`.

    Also returns the inverse-variance combined variance, for reporting.
    """
    w_k, w_rf = fusion_weights(var_z, var_f)
    z = np.asarray(z, dtype=float)
    f = np.asarray(f, dtype=float)
    vz = np.asarray(var_z, dtype=float)
    vf = np.asarray(var_f, dtype=float)
    fused = np.where(np.asarray(w_k) == 0, f, np.where(np.asarray(w_rf) == 0, z, w_k * z + w_rf * f))
    with np.errstate(invalid="ignore", divide="ignore"):
        tot = vz + vf
        prod = np.where(np.isinf(vz), vf, vz * vf / np.where(tot == 0, 1.0, tot))
    fvar = np.where((vz == 0) | (vf == 0), 0.0, prod)
    if fused.ndim == 0:
        return float(fused), float(fvar)
    return fused, fvar


def run_krf(chainage, X, forest, cfg: FusionConfig) -> list[KrfPrediction]:
    """Fused prediction for each record of one tunnel line, in chainage order.

    ``forest`` is anything with ``predict(X) -> (mean, variance)``. History
    holds the fused outputs; the window is the ``cfg.window`` most recent.
    """
    c = np.asarray(chainage, dtype=float)
    if c.ndim != 1:
        raise FusionError("chainage must be one-dimensional")
    if np.any(np.diff(c) <= 0):
        raise FusionError("stream out of order")
    if len(c) == 0:
        return []
    F, VF = forest.predict(np.asarray(X, dtype=float))
    F = np.atleast_2d(F)
    VF = np.atleast_2d(VF)
    k = F.shape[1]

    hist_x = []
    hist_z = []
    out = []
    for i in range(len(c)):
        f, vf = F[i], VF[i]
        if not hist_x:
            w_k = np.zeros(k)
            pred = KrfPrediction(c[i], f.copy(), w_k, 1.0 - w_k, np.full(k, np.inf), vf.copy(),
                                 None, f.copy(), vf.copy())
        else:
            est = kriging.extrapolate(hist_x[-cfg.window:], np.array(hist_z[-cfg.window:]),
                                      c[i], cfg.variogram, cfg.mode)
            vz = np.full(k, est.variance)
            w_k, w_rf = fusion_weights(vz, vf)
            fused, fvar = fuse(est.value, vz, f, vf)
            if forest_normalizes(forest):
                fused = normalize_fractions(fused)
            pred = KrfPrediction(c[i], fused, w_k, w_rf, vz, vf.copy(), est.value, f.copy(), fvar)
        out.append(pred)
        hist_x.append(c[i])
        hist_z.append(pred.fused)
    return out


def forest_normalizes(forest) -> bool:
    return bool(getattr(forest, "normalize_output", True))


def stack_predictions(preds):
    """Arrays ``(chainage, fused, w_kriging, var_kriging, var_rf, forest)``."""
    return (np.array([p.chainage for p in preds]),
            np.array([p.fused for p in preds]),
            np.array([p.w_kriging for p in preds]),
            np.array([p.var_kriging for p in preds]),
            np.array([p.var_rf for p in preds]),
            np.array([p.forest for p in preds]))
