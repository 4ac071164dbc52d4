"""Single and joint pairwise error probabilities under Chase combining.

For codewords at Euclidean distance d, a pairwise error after round l is the
event that the Gaussian walk s_l = sum_{j<=l} sqrt(snr_j) x_j exceeds
c_l = d * acc_l / 2, where acc_l is the accumulated SNR. The joint PEP
P_{1:k}(d) asks for all k exceedances at once; it lies between
P_k(d) / 2**(k-1) and P_k(d).

The joint probability is computed by propagating the sub-density of the walk
restricted to the exceedance region, stage by stage, on a uniform grid:
the density is held piecewise linear, convolved exactly with the Gaussian
increment (closed-form hat-function weights, applied by FFT since all stages
share one grid spacing), then truncated at the next threshold. The grid is
refined once and the two results are Richardson-extrapolated; their
difference serves as the error estimate.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.signal import fftconvolve
from scipy.special import ndtr

from ._mc import run_blocks
from .error_models import SnrSchedule

__all__ = [
    "PepProblem",
    "PepBoundReport",
    "JointPep",
    "pep_single",
    "pep_joint",
    "pep_joint_detail",
    "pep_suffix",
    "pep_joint_mc",
    "check_pep_bounds",
    "sweep_ratio",
    "union_bound_per",
    "union_bound_joint",
    "hamming_to_euclidean",
]

MAX_ROUNDS = 8
GRID_POINTS = 2048
SPAN_SIGMAS = 8.0
MAX_NODES = 1 << 22
_KERNEL_RESOLUTION = 4.0
_MERGE_RATIO = 1e-6
_SERIES_RATIO = 0.05
_INV_SQRT_2PI = 1.0 / math.sqrt(2.0 * math.pi)


@dataclass(frozen=True)
class PepProblem:
    d: float
    sched: SnrSchedule

    def __post_init__(self):
        if not self.d > 0:
            raise ValueError("distance d must be > 0")

    @property
    def k(self) -> int:
        return len(self.sched)


@dataclass(frozen=True)
class JointPep:
    value: float
    error: float
    stages: int


@dataclass(frozen=True)
class PepBoundReport:
    lower: float
    value: float
    upper: float
    holds: bool
    tol: float


def hamming_to_euclidean(w) -> float:
    """Euclidean distance between antipodal unit-energy BPSK words at Hamming distance w."""
    return 2.0 * math.sqrt(w)


def _q(x: float) -> float:
    return 0.5 * math.erfc(x / math.sqrt(2.0))


def pep_single(d: float, snr_acc: float) -> float:
    """P_k(d) = Q(d * sqrt(acc) / 2)."""
    if not d > 0:
        raise ValueError("d must be > 0")
    if not snr_acc >= 0:
        raise ValueError("snr_acc must be >= 0")
    return _q(0.5 * d * math.sqrt(snr_acc))


# --- grid machinery ------------------------------------------------------


def _phi(x):
    return _INV_SQRT_2PI * np.exp(-0.5 * x * x)


def _g(x):
    # second antiderivative of the standard normal density
    return x * ndtr(x) + _phi(x)


def _hermite_stack(x, order):
    out = [np.ones_like(x), x.copy()]
    for m in range(1, order):
        out.append(x * out[m] - m * out[m - 1])
    return out[: order + 1]


def _hat_weights(u, h, sigma):
    """Integrals of the normal(0, sigma) density at offset u against the hat basis.

    Returns (full, right_half, left_half): the interior hat on [-h, h] and the
    two boundary half-hats on [0, h] and [-h, 0].
    """
    x = u / sigma
    r = h / sigma
    if r < _SERIES_RATIO:
        # Taylor series in r; terms beyond r**8 are below double precision here
        he = _hermite_stack(x, 7)
        right = np.zeros_like(x)
        left = np.zeros_like(x)
        rp = r
        for m in range(8):
            term = he[m] * (rp / math.factorial(m + 2))
            right += term
            left += term if m % 2 == 0 else -term
            rp *= r
        ph = _phi(x)
        return (right + left) * ph, right * ph, left * ph
    g0, gp, gm = _g(x), _g(x + r), _g(x - r)
    cdf = ndtr(x)
    full = (gp - 2.0 * g0 + gm) / r
    right = cdf - (g0 - gm) / r
    left = (gp - g0) / r - cdf
    return full, right, left


def _stages(d, per_round, first):
    acc = np.cumsum(per_round)
    out = []  # (threshold, variance, increment variance since previous stage)
    pending = 0.0
    for l in range(first, len(per_round)):
        pending += per_round[l]
        if acc[l] <= 0:
            continue  # no signal yet: no constraint
        if out and pending <= _MERGE_RATIO**2 * out[-1][1]:
            # increment too small to move the walk: same constraint as before
            continue
        out.append((0.5 * d * acc[l], float(acc[l]), pending))
        pending = 0.0
    return out


def _spacing(stages, n):
    h = SPAN_SIGMAS * math.sqrt(stages[0][1]) / n
    for _, _, v_inc in stages[1:]:
        h = min(h, math.sqrt(v_inc) / _KERNEL_RESOLUTION)
    # keep the refined grid of the widest stage under the node cap
    return max(h, 2.0 * SPAN_SIGMAS * math.sqrt(stages[-1][1]) / MAX_NODES)


def _propagate(stages, h):
    c0, v0, _ = stages[0]
    sd0 = math.sqrt(v0)
    s = c0 + h * np.arange(int(math.ceil(SPAN_SIGMAS * sd0 / h)) + 1)
    p = _phi(s / sd0) / sd0
    for (c_prev, _, _), (c, v, v_inc) in zip(stages, stages[1:]):
        n_out = int(math.ceil(SPAN_SIGMAS * math.sqrt(v) / h)) + 1
        n_in = len(p)
        offsets = (c - c_prev) + h * np.arange(-(n_in - 1), n_out)
        full, right, left = _hat_weights(offsets, h, math.sqrt(v_inc))
        out = fftconvolve(p, full)[n_in - 1 : n_in - 1 + n_out]
        i = np.arange(n_out)
        # boundary half-hats at the first and last input node
        out += p[0] * (right[i + n_in - 1] - full[i + n_in - 1])
        out += p[-1] * (left[i] - full[i])
        p = np.maximum(out, 0.0)
    return h * (p.sum() - 0.5 * (p[0] + p[-1]))


def _walk_exceedance(d, per_round, first=0, n=GRID_POINTS) -> JointPep:
    stages = _stages(d, per_round, first)
    if not stages:
        return JointPep(0.5, 0.0, 0)
    if len(stages) == 1:
        _, v, _ = stages[0]
        return JointPep(_q(0.5 * d * math.sqrt(v)), 0.0, 1)
    h = _spacing(stages, n)
    coarse = _propagate(stages, h)
    fine = _propagate(stages, 0.5 * h)
    value = (4.0 * fine - coarse) / 3.0
    err = abs(fine - coarse) / 3.0
    return JointPep(min(max(value, 0.0), 1.0), err, len(stages))


def _check_k(k, limit):
    if k > limit:
        raise ValueError(f"k = {k} exceeds the supported limit of {limit} rounds")


def pep_joint_detail(prob: PepProblem, n: int = GRID_POINTS, max_rounds: int = MAX_ROUNDS) -> JointPep:
    _check_k(prob.k, max_rounds)
    return _walk_exceedance(prob.d, np.asarray(prob.sched.per_round), 0, n)


def pep_joint(prob: PepProblem, n: int = GRID_POINTS, max_rounds: int = MAX_ROUNDS) -> float:
    """P_{1:k}(d): probability that all k pairwise errors occur."""
    return pep_joint_detail(prob, n, max_rounds).value


def pep_suffix(prob: PepProblem, first_round: int, n: int = GRID_POINTS) -> JointPep:
    """P_{l:k}(d): joint PEP over rounds l..k (1-based ``first_round``)."""
    if not 1 <= first_round <= prob.k:
        raise ValueError("first_round out of range")
    _check_k(prob.k, MAX_ROUNDS)
    return _walk_exceedance(prob.d, np.asarray(prob.sched.per_round), first_round - 1, n)


def _mc_block(rng, n, d, per_round):
    acc = np.cumsum(per_round)
    s = np.zeros(n)
    ok = np.ones(n, dtype=bool)
    first = None
    for l, g in enumerate(per_round):
        x = rng.standard_normal(n)
        if first is None:
            first = x
        s += math.sqrt(g) * x
        if acc[l] > 0:
            ok &= s > 0.5 * d * acc[l]
    if acc[-1] <= 0:
        # no signal in any round: the normalised statistic is the first noise sample
        ok = first > 0
    return int(ok.sum())


def pep_joint_mc(
    prob: PepProblem,
    samples: int,
    rng_seed: int,
    workers: int = 1,
    block_size: int = 1 << 16,
) -> tuple[float, float]:
    """Monte Carlo estimate of P_{1:k}(d) with its binomial standard error."""
    if samples < 1:
        raise ValueError("samples must be >= 1")
    hits = sum(
        run_blocks(_mc_block, samples, rng_seed, args=(prob.d, prob.sched.per_round),
                   block_size=block_size, workers=workers)
    )
    p = hits / samples
    return p, math.sqrt(p * (1 - p) / samples)


def check_pep_bounds(prob: PepProblem, n: int = GRID_POINTS) -> PepBoundReport:
    upper = pep_single(prob.d, prob.sched.accumulated[-1])
    lower = upper / 2 ** (prob.k - 1)
    jp = pep_joint_detail(prob, n)
    tol = 1e-9 + 10.0 * jp.error
    holds = lower - tol <= jp.value <= upper + tol
    return PepBoundReport(lower, jp.value, upper, bool(holds), tol)


def sweep_ratio(k: int, d: float, snr_1: float, t_values: Sequence[float], n: int = GRID_POINTS) -> list[dict]:
    """Joint and single PEP for schedules snr_l = snr_1 * t**(l-1)."""
    if k < 2:
        raise ValueError("k must be >= 2")
    rows = []
    for t in t_values:
        if not t > 0:
            raise ValueError("t values must be > 0")
        sched = SnrSchedule([snr_1 * t**l for l in range(k)])
        rep = check_pep_bounds(PepProblem(d, sched), n)
        rows.append(
            dict(t=float(t), p_joint=rep.value, p_single=rep.upper, lower=rep.lower,
                 ratio=rep.value / rep.upper if rep.upper > 0 else float("nan"), tol=rep.tol)
        )
    return rows


def union_bound_per(spectrum: Sequence[tuple[int, int]], snr_acc: float) -> float:
    """sum_w B_w Q(sqrt(w * acc)), capped at 1."""
    if not spectrum:
        raise ValueError("empty spectrum")
    total = sum(b * pep_single(hamming_to_euclidean(w), snr_acc) for w, b in spectrum)
    return min(total, 1.0)


def union_bound_joint(spectrum: Sequence[tuple[int, int]], sched: SnrSchedule, clamp: bool = True) -> float:
    """sum_w B_w P_{1:k}(2 sqrt(w)), capped at 1 unless ``clamp`` is False."""
    if not spectrum:
        raise ValueError("empty spectrum")
    total = sum(b * pep_joint(PepProblem(hamming_to_euclidean(w), sched)) for w, b in spectrum)
    return min(total, 1.0) if clamp else total
