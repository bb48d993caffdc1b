"""Telemetry cleaning, kriging-side EDA and ground-truth encoding."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np
from scipy import stats

CLASS_NAMES = ("I", "II", "III", "IV", "V", "VI")
N_CLASSES = len(CLASS_NAMES)

#: operating parameters in table-column order
FEATURES = ("Th_MN", "v_mm_min", "To_MNm", "RPM", "Pe_mm_r", "Cp_bar", "Vf_L", "Vw_L")
#: a record with any of these equal to zero is a machine stop
GATE_FEATURES = ("Th_MN", "To_MNm", "v_mm_min", "RPM", "Pe_mm_r")

_FIELD_OF = {
    "Th_MN": "thrust",
    "v_mm_min": "advance_rate",
    "To_MNm": "torque",
    "RPM": "cutter_speed",
    "Pe_mm_r": "penetration",
    "Cp_bar": "chamber_pressure",
    "Vf_L": "foam_volume",
    "Vw_L": "water_volume",
}


class PreprocessError(ValueError):
    pass


def class_index(name: str | int) -> int:
    """Map ``"III"`` / ``3``-style labels (or a 0-based int) to a 0-based index."""
    if isinstance(name, (int, np.integer)):
        if not 0 <= int(name) < N_CLASSES:
            raise PreprocessError(f"unknown ground class {name!r}")
        return int(name)
    text = str(name).strip().upper()
    if text in CLASS_NAMES:
        return CLASS_NAMES.index(text)
    if text.isdigit() and 1 <= int(text) <= N_CLASSES:
        return int(text) - 1
    raise PreprocessError(f"unknown ground class {name!r}")


@dataclass(frozen=True)
class OperatingRecord:
    chainage: float
    timestamp: float
    thrust: float
    advance_rate: float
    torque: float
    cutter_speed: float
    penetration: float
    chamber_pressure: float
    foam_volume: float
    water_volume: float

    def features(self) -> np.ndarray:
        return np.array([getattr(self, _FIELD_OF[f]) for f in FEATURES], dtype=float)

    @classmethod
    def from_features(cls, chainage, timestamp, values) -> "OperatingRecord":
        kw = {_FIELD_OF[f]: float(v) for f, v in zip(FEATURES, values)}
        return cls(float(chainage), float(timestamp), **kw)


@dataclass(frozen=True)
class GroundVector:
    """Per-class face-thickness fractions, classes I..VI."""

    fractions: tuple

    def __post_init__(self):
        f = tuple(float(v) for v in self.fractions)
        if len(f) != N_CLASSES:
            raise PreprocessError("ground vector needs 6 components")
        if any(not (0.0 <= v <= 1.0) for v in f):
            raise PreprocessError("ground fractions must lie in [0, 1]")
        total = sum(f)
        if total != 0.0 and abs(total - 1.0) > 1e-9:
            raise PreprocessError("ground fractions must sum to 1")
        object.__setattr__(self, "fractions", f)

    @classmethod
    def unknown(cls) -> "GroundVector":
        return cls((0.0,) * N_CLASSES)

    @property
    def is_unknown(self) -> bool:
        return all(v == 0.0 for v in self.fractions)

    def as_array(self) -> np.ndarray:
        return np.array(self.fractions)


@dataclass(frozen=True)
class BqInput:
    Rc: float  # saturated uniaxial compressive strength, MPa
    Kv: float  # rock integrity coefficient


@dataclass
class Telemetry:
    """Column-oriented operating data; optional per-record ground labels."""

    chainage: np.ndarray
    timestamp: np.ndarray
    X: np.ndarray
    labels: np.ndarray | None = None

    def __post_init__(self):
        self.chainage = np.asarray(self.chainage, dtype=float)
        self.timestamp = np.asarray(self.timestamp, dtype=float)
        self.X = np.asarray(self.X, dtype=float).reshape(len(self.chainage), -1)
        if self.labels is not None:
            self.labels = np.asarray(self.labels, dtype=float).reshape(len(self.chainage), N_CLASSES)

    def __len__(self):
        return len(self.chainage)

    def select(self, mask_or_index) -> "Telemetry":
        lab = None if self.labels is None else self.labels[mask_or_index]
        return Telemetry(self.chainage[mask_or_index], self.timestamp[mask_or_index],
                         self.X[mask_or_index], lab)

    def records(self) -> list[OperatingRecord]:
        return [OperatingRecord.from_features(c, t, x)
                for c, t, x in zip(self.chainage, self.timestamp, self.X)]

    @classmethod
    def from_records(cls, records: Sequence[OperatingRecord]) -> "Telemetry":
        X = np.array([r.features() for r in records]).reshape(len(records), len(FEATURES))
        return cls([r.chainage for r in records], [r.timestamp for r in records], X)

    def check_order(self):
        c, t = self.chainage, self.timestamp
        bad = (c[1:] < c[:-1]) | ((c[1:] == c[:-1]) & (t[1:] <= t[:-1]))
        if bad.any():
            raise PreprocessError("records are not ordered by chainage")


# --------------------------------------------------------------------------
# operating-data cleaning

def working_mask(X: np.ndarray) -> np.ndarray:
    gate = [FEATURES.index(f) for f in GATE_FEATURES]
    return np.all(np.asarray(X)[:, gate] > 0, axis=1)


def filter_nonworking(records):
    """Drop machine-stop rows (any gate parameter not strictly positive).

    Accepts a sequence of :class:`OperatingRecord` or a :class:`Telemetry`
    table and returns the same kind, order preserved.
    """
    if isinstance(records, Telemetry):
        return records.select(working_mask(records.X))
    return [r for r in records
            if all(getattr(r, _FIELD_OF[f]) > 0 for f in GATE_FEATURES)]


def tukey_bounds(values: Iterable[float], k: float = 1.5) -> tuple[float, float]:
    """Box-plot fences ``(Q1 - k*IQR, Q3 + k*IQR)``, linear-interpolated quartiles."""
    v = np.asarray(list(values) if not isinstance(values, np.ndarray) else values, dtype=float)
    if v.size < 4:
        raise PreprocessError("insufficient data")
    if k < 0:
        raise PreprocessError("k must be non-negative")
    q1, q3 = np.quantile(v, [0.25, 0.75], method="linear")
    iqr = q3 - q1
    return float(q1 - k * iqr), float(q3 + k * iqr)


def tukey_filter(values, k: float = 1.5) -> np.ndarray:
    v = np.asarray(values, dtype=float)
    lo, hi = tukey_bounds(v, k)
    return v[(v >= lo) & (v <= hi)]


def tukey_mask(X: np.ndarray, columns: Sequence[int], k: float = 1.5) -> np.ndarray:
    """Keep a row only if every listed column lies within its own fences."""
    X = np.asarray(X, dtype=float)
    keep = np.ones(len(X), dtype=bool)
    for c in columns:
        lo, hi = tukey_bounds(X[:, c], k)
        keep &= (X[:, c] >= lo) & (X[:, c] <= hi)
    return keep


# --------------------------------------------------------------------------
# kriging-side exploratory analysis

def three_sigma_filter(values) -> np.ndarray:
    """One pass of mean +/- 3 population-sigma outlier removal."""
    v = np.asarray(values, dtype=float)
    if v.size < 2:
        raise PreprocessError("three-sigma filter needs at least 2 values")
    sd = v.std()
    if sd == 0:
        return v.copy()
    return v[np.abs(v - v.mean()) <= 3 * sd]


def ks_critical(alpha: float) -> float:
    """Asymptotic one-sample KS coefficient, c(0.05) = 1.358."""
    return math.sqrt(-0.5 * math.log(alpha / 2))


def ks_normality(values, alpha: float = 0.05) -> tuple[float, bool]:
    v = np.asarray(values, dtype=float)
    if v.size < 20:
        raise PreprocessError("sample too small for KS")
    if not 0 < alpha <= 0.2:
        raise PreprocessError("alpha must lie in (0, 0.2]")
    sd = v.std()
    if sd == 0:
        return 1.0, False
    d = float(stats.kstest(v, "norm", args=(v.mean(), sd)).statistic)
    return d, d < ks_critical(alpha) / math.sqrt(v.size)


@dataclass(frozen=True)
class Transform:
    """Record of what :func:`normalize_for_kriging` did, so it can be undone."""

    kind: str = "identity"  # "identity" or "log"
    shift: float = 0.0

    def apply(self, values):
        v = np.asarray(values, dtype=float)
        return v.copy() if self.kind == "identity" else np.log(v + self.shift)

    def inverse(self, values):
        v = np.asarray(values, dtype=float)
        return v.copy() if self.kind == "identity" else np.exp(v) - self.shift

    def to_dict(self):
        return {"kind": self.kind, "shift": self.shift}


def normalize_for_kriging(values, alpha: float = 0.05, eps: float = 1e-6):
    v = np.asarray(values, dtype=float)
    if ks_normality(v, alpha)[1]:
        t = Transform()
    else:
        t = Transform("log", max(0.0, eps - float(v.min())))
    return t.apply(v), t


# --------------------------------------------------------------------------
# ground encoding

# class I has no lower bound; VI has no quantitative row and is never emitted
_BQ_LOWER = ((550.0, 0), (450.0, 1), (350.0, 2), (250.0, 3))


def bq_classify(inp: BqInput) -> tuple[float, int]:
    """Basic quality index with the substitution caps; returns ``(BQ, class index)``."""
    rc, kv = float(inp.Rc), float(inp.Kv)
    if not (math.isfinite(rc) and math.isfinite(kv)) or rc <= 0 or not 0 < kv <= 1:
        raise PreprocessError("BQ input out of range")
    rc_eff = 90 * kv + 30 if rc > 90 * kv + 30 else rc
    kv_eff = 0.04 * rc + 0.4 if kv > 0.04 * rc + 0.4 else kv
    bq = 100 + 3 * rc_eff + 250 * kv_eff
    for lower, cls in _BQ_LOWER:
        if bq > lower:
            return bq, cls
    return bq, 4


def encode_ground(strata, face_diameter: float) -> GroundVector:
    """Strata ``(class, thickness_m)`` covering the face -> thickness fractions."""
    acc = np.zeros(N_CLASSES)
    total = 0.0
    for cls, thickness in strata:
        t = float(thickness)
        if t < 0:
            raise PreprocessError("negative stratum thickness")
        acc[class_index(cls)] += t
        total += t
    if abs(total - face_diameter) > 1e-6:
        raise PreprocessError("strata do not tile the face")
    return GroundVector(tuple(acc / face_diameter))


def main_class(g) -> int:
    """Index of the largest fraction (lowest index on ties)."""
    f = g.as_array() if isinstance(g, GroundVector) else np.asarray(g, dtype=float)
    if not np.any(f != 0):
        raise PreprocessError("unknown ground")
    return int(np.argmax(f))


def main_classes(F: np.ndarray) -> np.ndarray:
    return np.argmax(np.asarray(F), axis=1)


def label_records(chainage, strata_chainage, strata_vectors) -> np.ndarray:
    """Assign each record the ground vector of the ring it lies in.

    ``strata_chainage`` are sorted ring starts; a record belongs to the last
    ring starting at or before it. Records before the first ring get the
    all-zero sentinel.
    """
    starts = np.asarray(strata_chainage, dtype=float)
    vecs = np.asarray(strata_vectors, dtype=float)
    pos = np.searchsorted(starts, np.asarray(chainage, dtype=float), side="right") - 1
    out = np.zeros((len(pos), N_CLASSES))
    ok = pos >= 0
    out[ok] = vecs[pos[ok]]
    return out
