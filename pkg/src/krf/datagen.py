"""Seeded synthetic tunnels: spatially correlated ground and the operating
records an EPB shield would log while excavating it.

Ground: one latent Gaussian field per palette class, simulated sequentially
along the axis with a spherical variogram, squashed ring by ring with a
softmax into thickness fractions.

Operating data: a fixed linear forward model driven by the face strength
index ``H = sum_c f_c * STRENGTH[c]`` (class I strongest) plus a few class
signatures, perturbed by slowly varying operator behaviour (AR(1), log
scale) and white sensor noise, then clipped to the observed envelope.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as spl

from .preprocess import FEATURES, GATE_FEATURES, N_CLASSES, Telemetry
from .variogram import VariogramModel, eval_model

#: per-parameter envelope (min, max) of observed EPB telemetry, FEATURES order
ENVELOPE_MIN = np.array([0.28, 1.00, 0.50, 0.80, 1.00, 0.00, 0.00, 0.00])
ENVELOPE_MAX = np.array([29.79, 96.38, 4.73, 3.06, 75.82, 3.05, 10.35, 154.80])

#: strength of classes I..VI on [0, 1]
STRENGTH = np.array([1.0, 0.85, 0.65, 0.45, 0.25, 0.10])

# forward model, per region: parameter = base + slope * H + signature . f
# (penetration is derived as v / RPM)
_FORWARD = {
    "A": {
        "base": {"Th_MN": 3.0, "v_mm_min": 70.0, "To_MNm": 0.8, "RPM": 1.0, "Cp_bar": 0.3,
                 "Vf_L": 0.2, "Vw_L": 2.0},
        "slope": {"Th_MN": 20.0, "v_mm_min": -55.0, "To_MNm": 3.2, "RPM": 1.6, "Cp_bar": 2.0,
                  "Vf_L": 0.0, "Vw_L": 0.0},
        "signature": {"To_MNm": (0, 0, 0, 0.6, 0, 0), "Vf_L": (0, 0, 0, 3.0, 5.0, 6.0),
                      "Vw_L": (0, 0, 25.0, 0, 0, 60.0)},
    },
    "B": {
        "base": {"Th_MN": 3.3, "v_mm_min": 66.0, "To_MNm": 0.85, "RPM": 1.0, "Cp_bar": 0.35,
                 "Vf_L": 0.25, "Vw_L": 2.5},
        "slope": {"Th_MN": 21.0, "v_mm_min": -52.0, "To_MNm": 3.3, "RPM": 1.6, "Cp_bar": 2.0,
                  "Vf_L": 0.0, "Vw_L": 0.0},
        "signature": {"To_MNm": (0, 0, 0, 0.55, 0, 0), "Vf_L": (0, 0, 0, 3.3, 5.5, 6.0),
                      "Vw_L": (0, 0, 22.0, 0, 0, 55.0)},
    },
}

#: ``(class index, logit offset)`` pairs; classes not listed never occur
PALETTES = {
    "A": ((1, 0.0), (2, -0.2), (3, -0.2), (4, 0.0)),
    "B": ((1, -0.2), (2, 0.0), (3, 0.0), (4, -0.2)),
}

_OPERATED = ("Th_MN", "v_mm_min", "RPM")  # parameters the operator sets


@dataclass(frozen=True)
class TunnelSpec:
    length: float = 4500.0
    ring_width: float = 1.5
    face_diameter: float = 6.28
    nugget: float = 0.0
    psill: float = 1.0
    range: float = 30.0
    kind: str = "spherical"
    region: str = "A"
    palette: tuple | None = None  # default: PALETTES[region]
    sharpness: float = 6.0  # softmax gain on the latent fields
    records_per_ring: int = 4
    sensor_noise: float = 0.5  # log-scale sd, independent per record and parameter
    operator_noise: float = 0.02  # log-scale sd of the AR(1) operator drift
    operator_corr: float = 0.5
    nonworking_fraction: float = 0.0
    neighbours: int | None = None  # simulation neighbourhood, default range / ring
    seed: int = 0

    def __post_init__(self):
        if not (self.length > 0 and self.ring_width > 0 and self.face_diameter > 0):
            raise ValueError("length, ring width and face diameter must be positive")
        if self.region not in _FORWARD:
            raise ValueError(f"unknown region {self.region!r}")
        if self.records_per_ring < 1:
            raise ValueError("records_per_ring must be >= 1")
        if not 0 <= self.nonworking_fraction < 1:
            raise ValueError("nonworking_fraction must lie in [0, 1)")
        if not 0 <= self.operator_corr < 1:
            raise ValueError("operator_corr must lie in [0, 1)")

    @property
    def n_rings(self) -> int:
        return int(round(self.length / self.ring_width))

    @property
    def variogram(self) -> VariogramModel:
        return VariogramModel(self.kind, self.nugget, self.psill, self.range)

    def get_palette(self):
        return self.palette if self.palette is not None else PALETTES[self.region]


@dataclass
class SyntheticTunnel:
    spec: TunnelSpec
    ring_start: np.ndarray  # (n_rings,)
    latent: np.ndarray  # (n_rings, n_palette) latent strength fields
    ground: np.ndarray  # (n_rings, 6) true fractions
    telemetry: Telemetry  # labelled with the ring truth
    nonworking: np.ndarray = field(repr=False)  # bool per record

    @property
    def ring_center(self) -> np.ndarray:
        return self.ring_start + 0.5 * self.spec.ring_width

    def strata(self):
        """``(ring start, class index, thickness m)`` rows, one per present class."""
        rows = []
        d = self.spec.face_diameter
        for x, g in zip(self.ring_start, self.ground):
            for c in range(N_CLASSES):
                if g[c] > 0:
                    rows.append((float(x), c, float(g[c] * d)))
        return rows


def sequential_gaussian_1d(n: int, spacing: float, model: VariogramModel, rng,
                           neighbours: int | None = None) -> np.ndarray:
    """Zero-mean stationary field on a regular line, node by node.

    Each node is simple-kriged from the previous ``neighbours`` nodes and
    drawn from the conditional normal. On a regular grid the weights are
    the same once the neighbourhood is full, so they are solved once.
    """
    if neighbours is None:
        neighbours = max(1, int(np.ceil(model.range / spacing)))
    neighbours = min(neighbours, max(n - 1, 1))
    sill = model.sill

    def cov(h):
        return sill - eval_model(model, h, zero_at_origin=True)

    def weights(k):
        lags = spacing * np.arange(k, 0, -1)  # previous nodes, oldest first
        C = cov(np.abs(lags[:, None] - lags[None, :]))
        c0 = cov(lags)
        w = spl.solve(C, c0, assume_a="pos")
        return w, max(sill - float(w @ c0), 0.0)

    plans = [weights(k) for k in range(1, neighbours + 1)]
    z = np.empty(n)
    noise = rng.standard_normal(n)
    z[0] = np.sqrt(sill) * noise[0]
    for i in range(1, n):
        k = min(i, neighbours)
        w, v = plans[k - 1]
        z[i] = w @ z[i - k:i] + np.sqrt(v) * noise[i]
    return z


def ground_from_latent(latent, palette, sharpness) -> np.ndarray:
    classes = [c for c, _ in palette]
    offsets = np.array([o for _, o in palette])
    logits = sharpness * latent + offsets
    logits -= logits.max(axis=1, keepdims=True)
    e = np.exp(logits)
    p = e / e.sum(axis=1, keepdims=True)
    ground = np.zeros((len(latent), N_CLASSES))
    ground[:, classes] = p
    return ground


def strength_index(ground) -> np.ndarray:
    return np.asarray(ground) @ STRENGTH


def forward_model(ground, region: str = "A", log_operator=None) -> np.ndarray:
    """Noise-free (or operator-perturbed) operating parameters, FEATURES order.

    ``log_operator`` is an optional ``(n, 3)`` array of log-scale operator
    offsets for thrust, advance rate and cutter speed.
    """
    coef = _FORWARD[region]
    g = np.atleast_2d(np.asarray(ground, dtype=float))
    H = strength_index(g)
    out = {}
    for name in ("Th_MN", "v_mm_min", "To_MNm", "RPM", "Cp_bar", "Vf_L", "Vw_L"):
        val = coef["base"][name] + coef["slope"][name] * H
        if name in coef["signature"]:
            val = val + g @ np.array(coef["signature"][name])
        out[name] = val
    if log_operator is not None:
        op = np.asarray(log_operator, dtype=float)
        for j, name in enumerate(_OPERATED):
            out[name] = out[name] * np.exp(op[:, j])
        out["To_MNm"] = out["To_MNm"] * np.exp(0.5 * op[:, 0])
    out["Pe_mm_r"] = out["v_mm_min"] / out["RPM"]
    return np.column_stack([out[f] for f in FEATURES])


def _ar1(rng, n, sd, rho):
    e = rng.standard_normal(n) * sd * np.sqrt(1 - rho * rho)
    x = np.empty(n)
    x[0] = rng.standard_normal() * sd
    for i in range(1, n):
        x[i] = rho * x[i - 1] + e[i]
    return x


def generate_tunnel(spec: TunnelSpec) -> SyntheticTunnel:
    ss = np.random.SeedSequence(int(spec.seed))
    field_ss, op_ss, sensor_ss, stop_ss = ss.spawn(4)
    palette = spec.get_palette()
    n_rings = spec.n_rings
    w = spec.ring_width

    field_rngs = [np.random.default_rng(s) for s in field_ss.spawn(len(palette))]
    latent = np.column_stack([
        sequential_gaussian_1d(n_rings, w, spec.variogram, r, spec.neighbours) for r in field_rngs])
    ground = ground_from_latent(latent, palette, spec.sharpness)
    ring_start = w * np.arange(n_rings)

    r = spec.records_per_ring
    n = n_rings * r
    ring_of = np.repeat(np.arange(n_rings), r)
    chainage = ring_start[ring_of] + (np.tile(np.arange(r), n_rings) + 0.5) * (w / r)
    timestamp = 1.6e9 + 60.0 * np.arange(n)
    labels = ground[ring_of]

    op_rng = np.random.default_rng(op_ss)
    log_op = np.column_stack([_ar1(op_rng, n, spec.operator_noise, spec.operator_corr)
                              for _ in _OPERATED])
    X = forward_model(labels, spec.region, log_op)
    sensor_rng = np.random.default_rng(sensor_ss)
    X = X * np.exp(spec.sensor_noise * sensor_rng.standard_normal(X.shape))
    X = np.clip(X, ENVELOPE_MIN, ENVELOPE_MAX)

    stop = np.zeros(n, dtype=bool)
    n_stop = int(round(spec.nonworking_fraction * n))
    if n_stop:
        stop[np.random.default_rng(stop_ss).choice(n, n_stop, replace=False)] = True
        gate = [FEATURES.index(f) for f in GATE_FEATURES] + [FEATURES.index("Vf_L"),
                                                             FEATURES.index("Vw_L")]
        X[np.ix_(stop, gate)] = 0.0

    return SyntheticTunnel(spec, ring_start, latent, ground,
                           Telemetry(chainage, timestamp, X, labels), stop)


def section_split(chainage, n_sections: int, test_sections) -> np.ndarray:
    """Boolean test mask: contiguous equal-length chainage sections."""
    c = np.asarray(chainage, dtype=float)
    lo, hi = c.min(), c.max()
    sec = np.minimum(((c - lo) / max(hi - lo, 1e-300) * n_sections).astype(int), n_sections - 1)
    return np.isin(sec, list(test_sections))
