"""Packet-error-rate functions mapping accumulated linear SNR to error probability.

The ideal-threshold variant is an indicator; the exponential variant decays
as exp(-g (snr - th)) above the threshold. Measured curves use the table
variant, interpolated linearly in (snr, ln per). All SNR values are linear
power ratios.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from enum import Enum
from typing import Iterable, Sequence

import numpy as np

__all__ = [
    "PerVariant",
    "PerModel",
    "eval_per",
    "fit_exponential",
    "load_table_csv",
    "db_to_linear",
    "linear_to_db",
]

_LOG_FLOOR = 1e-300
_DECAY_CUTOFF = 1.0 - 1e-12


def db_to_linear(snr_db):
    out = 10.0 ** (np.asarray(snr_db, dtype=float) / 10.0)
    return float(out) if out.ndim == 0 else out


def linear_to_db(snr):
    with np.errstate(divide="ignore"):
        out = 10.0 * np.log10(np.asarray(snr, dtype=float))
    return float(out) if out.ndim == 0 else out


class PerVariant(str, Enum):
    IDEAL_THRESHOLD = "ideal"
    EXPONENTIAL_THRESHOLD = "exponential"
    TABLE = "table"


@dataclass(frozen=True)
class PerModel:
    """Immutable PER function. Build with the classmethod constructors."""

    variant: PerVariant
    snr_threshold: float | None = None
    slope_g: float | None = None
    table: tuple[tuple[float, float], ...] | None = None

    def __post_init__(self):
        if self.variant in (PerVariant.IDEAL_THRESHOLD, PerVariant.EXPONENTIAL_THRESHOLD):
            if self.snr_threshold is None or not self.snr_threshold >= 0:
                raise ValueError("snr_threshold must be >= 0")
        if self.variant is PerVariant.EXPONENTIAL_THRESHOLD:
            if self.slope_g is None or not self.slope_g > 0:
                raise ValueError("slope_g must be > 0")
        if self.variant is PerVariant.TABLE:
            pts = self.table
            if pts is None or len(pts) < 2:
                raise ValueError("table needs at least 2 points")
            snrs = [s for s, _ in pts]
            pers = [p for _, p in pts]
            if any(s < 0 for s in snrs):
                raise ValueError("table SNRs must be >= 0")
            if any(b <= a for a, b in zip(snrs, snrs[1:])):
                raise ValueError("table SNRs must be strictly increasing")
            if any(not 0.0 <= p <= 1.0 for p in pers):
                raise ValueError("table PER values must lie in [0, 1]")
            if any(b > a for a, b in zip(pers, pers[1:])):
                raise ValueError("table PER must be non-increasing in SNR")

    @classmethod
    def ideal(cls, snr_threshold: float) -> PerModel:
        return cls(PerVariant.IDEAL_THRESHOLD, snr_threshold=float(snr_threshold))

    @classmethod
    def exponential(cls, snr_threshold: float, slope_g: float) -> PerModel:
        return cls(PerVariant.EXPONENTIAL_THRESHOLD, snr_threshold=float(snr_threshold), slope_g=float(slope_g))

    @classmethod
    def from_table(cls, points: Iterable[tuple[float, float]]) -> PerModel:
        return cls(PerVariant.TABLE, table=tuple((float(s), float(p)) for s, p in points))

    def __call__(self, snr):
        return eval_per(self, snr)


def eval_per(model: PerModel, snr):
    """Evaluate PER at linear SNR ``snr`` (scalar or array)."""
    x = np.asarray(snr, dtype=float)
    if np.any(x < 0) or np.any(np.isnan(x)):
        raise ValueError(f"SNR must be non-negative, got {snr!r}")
    v = model.variant
    if v is PerVariant.IDEAL_THRESHOLD:
        out = np.where(x < model.snr_threshold, 1.0, 0.0)
    elif v is PerVariant.EXPONENTIAL_THRESHOLD:
        th, g = model.snr_threshold, model.slope_g
        out = np.where(x < th, 1.0, np.exp(-g * np.maximum(x - th, 0.0)))
    else:
        snrs = np.array([s for s, _ in model.table])
        logp = np.log(np.maximum([p for _, p in model.table], _LOG_FLOOR))
        # np.interp clamps outside the table range
        out = np.exp(np.interp(x, snrs, logp))
        out = np.where(out <= _LOG_FLOOR * 1.0000001, 0.0, out)
    out = np.clip(out, 0.0, 1.0)
    return float(out) if out.ndim == 0 else out


def fit_exponential(samples: Sequence[tuple[float, float]]) -> PerModel:
    """Least-squares fit of the exponential-threshold model to (snr, per) samples.

    Only samples in the decaying region (per < 1) enter the fit; ln(per) is
    regressed on snr, the slope gives -g and the intercept g * snr_threshold.
    """
    pts = [(float(s), float(p)) for s, p in samples]
    snrs = [s for s, _ in pts]
    if any(b <= a for a, b in zip(snrs, snrs[1:])):
        raise ValueError("sample SNRs must be strictly increasing")
    if any(not 0.0 < p <= 1.0 for _, p in pts):
        raise ValueError("sample PER values must lie in (0, 1]")
    usable = [(s, p) for s, p in pts if p < _DECAY_CUTOFF]
    if not usable:
        raise ValueError("no decaying region: every sample has per = 1")
    if len(usable) < 3:
        raise ValueError(f"need at least 3 samples with per < 1, got {len(usable)}")
    x = np.array([s for s, _ in usable])
    y = np.log([p for _, p in usable])
    slope, intercept = np.polyfit(x, y, 1)
    g = -slope
    if not g > 0:
        raise ValueError(f"fitted slope is not decaying (g = {g:.4g})")
    th = max(intercept / g, 0.0)
    return PerModel.exponential(th, g)


def load_table_csv(path) -> PerModel:
    """Read a ``snr_db,per`` CSV into a Table model (SNR converted to linear)."""
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or not {"snr_db", "per"} <= set(reader.fieldnames):
            raise ValueError(f"{path}: expected header 'snr_db,per'")
        rows = [(db_to_linear(float(r["snr_db"])), float(r["per"])) for r in reader]
    return PerModel.from_table(rows)
