"""Independent-error (IE) and deterministic-error (DE) models of HARQ failures.

Given a PER function and the per-round SNRs, the IE model multiplies the
per-round error probabilities PER(acc_1) ... PER(acc_k), while the DE model
keeps only the last one, PER(acc_k). The DE value upper-bounds the true
probability of the error sequence; IE can fall far below it.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from typing import Sequence

import numpy as np

from .per_models import PerModel, eval_per

__all__ = [
    "ModelKind",
    "SnrSchedule",
    "HarqOutcome",
    "failure_prob",
    "cond_error_prob",
    "sample_error_sequence",
]


class ModelKind(str, Enum):
    IE = "IE"
    DE = "DE"


@dataclass(frozen=True)
class SnrSchedule:
    """Per-round linear SNRs and their accumulated (prefix-sum) values."""

    per_round: tuple[float, ...]
    accumulated: tuple[float, ...] = field(init=False)

    def __init__(self, per_round: Sequence[float]):
        vals = tuple(float(g) for g in per_round)
        if not vals:
            raise ValueError("schedule needs at least one round")
        if any(not g >= 0 for g in vals):
            raise ValueError(f"per-round SNRs must be >= 0, got {vals}")
        object.__setattr__(self, "per_round", vals)
        object.__setattr__(self, "accumulated", tuple(np.cumsum(vals).tolist()))

    @classmethod
    def from_db(cls, snrs_db: Sequence[float]) -> SnrSchedule:
        return cls([10.0 ** (s / 10.0) for s in snrs_db])

    def __len__(self) -> int:
        return len(self.per_round)

    def prefix(self, k: int) -> SnrSchedule:
        return SnrSchedule(self.per_round[:k])


@dataclass(frozen=True)
class HarqOutcome:
    rounds_used: int
    delivered: bool
    error_flags: tuple[bool, ...]

    def __post_init__(self):
        if self.rounds_used != len(self.error_flags) or self.rounds_used < 1:
            raise ValueError("error_flags must have one entry per round used")
        if not all(self.error_flags[:-1]):
            raise ValueError("a new round can only follow a decoding error")
        if self.delivered == self.error_flags[-1]:
            raise ValueError("delivered must equal 'last round decoded correctly'")


def _per_prefix(per: PerModel, sched: SnrSchedule) -> np.ndarray:
    return np.atleast_1d(eval_per(per, np.array(sched.accumulated)))


def failure_prob(kind: ModelKind, per: PerModel, sched: SnrSchedule) -> float:
    """Model probability that rounds 1..k all fail, k = len(sched)."""
    p = _per_prefix(per, sched)
    if ModelKind(kind) is ModelKind.IE:
        val = float(np.prod(p))
    else:
        val = float(p[-1])
    return min(max(val, 0.0), 1.0)


def cond_error_prob(kind: ModelKind, per: PerModel, sched: SnrSchedule) -> float:
    """Model probability of an error in round k given failures in rounds 1..k-1."""
    p = _per_prefix(per, sched)
    if len(p) == 1 or ModelKind(kind) is ModelKind.IE:
        return float(p[-1])
    num, den = float(p[-1]), float(p[-2])
    if den == 0.0:
        # conditioning event has probability zero
        return 0.0
    return min(max(num / den, 0.0), 1.0)


def sample_error_sequence(
    kind: ModelKind,
    per: PerModel,
    sched: SnrSchedule,
    k_max: int,
    rng_seed: int,
) -> HarqOutcome:
    """Draw one HARQ outcome: errors are Bernoulli with the model's conditional probability."""
    if k_max < 1:
        raise ValueError("k_max must be >= 1")
    if len(sched) < k_max:
        raise ValueError(f"schedule has {len(sched)} rounds, k_max = {k_max}")
    rng = np.random.default_rng(rng_seed)
    flags = []
    for k in range(1, k_max + 1):
        q = cond_error_prob(kind, per, sched.prefix(k))
        err = bool(rng.random() < q)
        flags.append(err)
        if not err:
            break
    return HarqOutcome(rounds_used=len(flags), delivered=not flags[-1], error_flags=tuple(flags))


def sample_error_sequences(
    kind: ModelKind,
    per: PerModel,
    sched: SnrSchedule,
    k_max: int,
    n: int,
    rng_seed: int,
) -> np.ndarray:
    """Vectorised sampler: returns rounds used per packet, negated when undelivered.

    Uses one uniform per (packet, round), drawn up front, so the result for a
    given seed does not depend on how far each packet got.
    """
    if len(sched) < k_max:
        raise ValueError(f"schedule has {len(sched)} rounds, k_max = {k_max}")
    q = np.array([cond_error_prob(kind, per, sched.prefix(k)) for k in range(1, k_max + 1)])
    u = np.random.default_rng(rng_seed).random((n, k_max))
    err = u < q
    ok = ~err
    first_ok = np.where(ok.any(axis=1), ok.argmax(axis=1) + 1, -k_max)
    return first_ok
