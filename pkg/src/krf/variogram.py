"""Empirical semivariogram and parametric model fitting (1-D, chainage)."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy.optimize import least_squares

KINDS = ("spherical", "gaussian", "exponential")  # also the tie-break order


class VariogramError(ValueError):
    pass


@dataclass(frozen=True)
class VariogramBin:
    h: float
    gamma: float
    n_pairs: int


@dataclass(frozen=True)
class VariogramModel:
    kind: str
    nugget: float
    psill: float
    range: float
    sse: float = field(default=float("nan"), compare=False)

    def __post_init__(self):
        if self.kind not in KINDS:
            raise VariogramError(f"unknown variogram kind {self.kind!r}")
        if self.nugget < 0 or self.psill < 0 or self.nugget + self.psill <= 0:
            raise VariogramError("variogram needs C0, C >= 0 and C0 + C > 0")
        if not self.range > 0:
            raise VariogramError("variogram range must be positive")

    @property
    def sill(self) -> float:
        return self.nugget + self.psill

    def __call__(self, h, zero_at_origin: bool = False):
        return eval_model(self, h, zero_at_origin)

    def scaled(self, s: float) -> "VariogramModel":
        return VariogramModel(self.kind, self.nugget * s, self.psill * s, self.range, self.sse)

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, d):
        return cls(d["kind"], float(d["nugget"]), float(d["psill"]), float(d["range"]),
                   float(d.get("sse", float("nan"))))


def _structure(kind, h, a):
    """Normalised structured part in [0, 1] for h > 0."""
    r = h / a
    if kind == "spherical":
        return np.where(h <= a, 1.5 * r - 0.5 * r ** 3, 1.0)
    if kind == "gaussian":
        return 1.0 - np.exp(-3.0 * r * r)
    return 1.0 - np.exp(-3.0 * r)


def eval_model(m: VariogramModel, h, zero_at_origin: bool = False):
    """Semivariance at lag ``h``.

    At ``h == 0`` the value is the nugget C0 (the convention of the KRF
    pseudocode) unless ``zero_at_origin`` is set, which gives the textbook
    gamma(0) = 0 used by ordinary kriging.
    """
    h_arr = np.asarray(h, dtype=float)
    if np.any(h_arr < 0):
        raise VariogramError("lag must be non-negative")
    g = m.nugget + m.psill * _structure(m.kind, h_arr, m.range)
    g = np.where(h_arr == 0, 0.0 if zero_at_origin else m.nugget, g)
    return float(g) if np.ndim(g) == 0 else g


def empirical_semivariogram(x, z, lag_width: float = 1.5, max_lag: float | None = None):
    """Binned semivariance estimates.

    ``z`` may be ``(n,)`` or ``(n, k)``; with several columns the squared
    differences and pair counts are pooled over columns. Bins are
    ``[i*w, (i+1)*w)`` labelled by their midpoint; empty bins are omitted.
    """
    x = np.asarray(x, dtype=float)
    z = np.asarray(z, dtype=float)
    if z.ndim == 1:
        z = z[:, None]
    if len(x) < 2 or len(x) != len(z):
        raise VariogramError("need at least 2 samples with matching values")
    if not lag_width > 0:
        raise VariogramError("lag_width must be positive")
    if max_lag is None:
        max_lag = 0.5 * (x.max() - x.min())
    n_bins = int(np.ceil(max_lag / lag_width)) if max_lag > 0 else 0
    sums = np.zeros(n_bins)
    counts = np.zeros(n_bins, dtype=np.int64)
    order = np.argsort(x, kind="stable")
    x, z = x[order], z[order]
    for i in range(len(x) - 1):
        d = x[i + 1:] - x[i]
        keep = int(np.searchsorted(d, max_lag, side="right"))
        d = d[:keep]
        if keep == 0:
            continue
        b = np.floor(d / lag_width).astype(np.int64)
        ok = (d > 0) & (b < n_bins)
        if not ok.any():
            continue
        sq = ((z[i + 1:i + 1 + keep] - z[i]) ** 2).sum(axis=1)
        np.add.at(sums, b[ok], sq[ok])
        np.add.at(counts, b[ok], z.shape[1])
    bins = [VariogramBin((i + 0.5) * lag_width, float(sums[i] / (2 * counts[i])), int(counts[i]))
            for i in range(n_bins) if counts[i] > 0]
    if not bins:
        raise VariogramError("no variogram pairs")
    return bins


def _weighted_sse(kind, params, h, g, w):
    c0, c, a = params
    pred = c0 + c * _structure(kind, h, a)
    return float(np.sum(w * (pred - g) ** 2))


def fit_model(bins, kinds=KINDS, max_lag: float | None = None) -> VariogramModel:
    """Pair-count weighted least-squares fit; best kind by weighted SSE.

    Multi-start over 5 ranges x 3 nugget ratios per kind. A pure-nugget
    model is preferred whenever it fits as well as the structured one.
    """
    if len(bins) < 4:
        raise VariogramError("need at least 4 variogram bins")
    h = np.array([b.h for b in bins])
    g = np.array([b.gamma for b in bins])
    w = np.array([b.n_pairs for b in bins], dtype=float)
    w = w / w.sum()
    if max_lag is None:
        max_lag = float(h.max())
    a_max = 2.0 * max_lag
    gmax = max(float(g.max()), 1e-12)
    sw = np.sqrt(w)

    # pure nugget: C0 = weighted mean, C = 0
    c0_flat = float(np.sum(w * g))
    sse_flat = float(np.sum(w * (g - c0_flat) ** 2))
    tol = 1e-9 * max(float(np.sum(w * g * g)), 1e-300)

    results = []
    for kind in KINDS:
        if kind not in kinds:
            continue

        def resid(p, kind=kind):
            return sw * (p[0] + p[1] * _structure(kind, h, p[2]) - g)

        best = None
        for frac in (0.1, 0.25, 0.5, 0.75, 1.0):
            for ratio in (0.0, 0.25, 0.5):
                p0 = [ratio * gmax, (1 - ratio) * gmax, frac * max_lag]
                p0[0] = max(p0[0], 0.0)
                try:
                    r = least_squares(resid, p0, bounds=([0, 0, 1e-9 * a_max], [np.inf, np.inf, a_max]),
                                      method="trf", x_scale=[gmax, gmax, max_lag],
                                      xtol=1e-15, ftol=1e-15, gtol=1e-15, max_nfev=2000)
                except (ValueError, np.linalg.LinAlgError):
                    continue
                if not np.all(np.isfinite(r.x)):
                    continue
                sse = _weighted_sse(kind, r.x, h, g, w)
                if best is None or sse < best[0]:
                    best = (sse, r.x)
        if best is None:
            continue
        sse, (c0, c, a) = best
        if sse_flat <= sse + tol or c0 + c <= 0:
            c0, c, a, sse = c0_flat, 0.0, max_lag, sse_flat
        results.append(VariogramModel(kind, float(c0), float(c), float(a), float(sse)))

    if not results:
        raise VariogramError("variogram fit failed")
    best_sse = min(m.sse for m in results)
    for m in results:  # KINDS order = tie order
        if m.sse <= best_sse + tol:
            return m
    raise AssertionError("unreachable")


def model_to_text(m: VariogramModel, bins=None, transform=None, extra=None) -> str:
    """Serialise a model (plus optional bin table) as sorted-key JSON text."""
    doc = {"format": "krf-variogram", "version": 1, "model": m.to_dict()}
    if bins is not None:
        doc["bins"] = [[b.h, b.gamma, b.n_pairs] for b in bins]
    if transform is not None:
        doc["transform"] = transform.to_dict()
    if extra:
        doc.update(extra)
    return json.dumps(doc, sort_keys=True, indent=1) + "\n"


def model_from_text(text: str) -> VariogramModel:
    doc = json.loads(text)
    if doc.get("format") != "krf-variogram":
        raise VariogramError("not a variogram model file")
    return VariogramModel.from_dict(doc["model"])
