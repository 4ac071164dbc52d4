"""Rayleigh block-fading averages of HARQ failure probabilities.

Per-round SNRs are i.i.d. exponential with mean ``avg_snr``; the accumulated
SNR after k rounds is Gamma(k, avg_snr). Under the DE model the average
failure probability is a one-dimensional integral of PER against that Gamma
density, with a closed form for the exponential-threshold PER. The IE model
needs the full k-dimensional average (done by Monte Carlo), and the exact
value comes from the link simulator.
"""

from __future__ import annotations

import math
import numpy as np
from scipy import integrate, special

from ._mc import run_blocks
from .per_models import PerModel, PerVariant, eval_per
from .phy_sim import CodeSpec, exact_fading_block

__all__ = [
    "gamma_pdf",
    "upper_gamma",
    "avg_failure_de_numeric",
    "avg_failure_de_closed",
    "avg_failure_ie_mc",
    "avg_failure_exact_mc",
    "avg_rounds",
    "avg_rounds_series",
    "avg_rounds_mc",
    "sample_exponential_snr",
]

_TAIL = 1e-12


def _check(k, avg_snr):
    if int(k) != k or k < 1:
        raise ValueError("k must be a positive integer")
    if not avg_snr > 0:
        raise ValueError("avg_snr must be > 0")


def gamma_pdf(k: int, avg_snr: float, x):
    """Density of the sum of k i.i.d. exponential SNRs with mean avg_snr."""
    _check(k, avg_snr)
    x = np.asarray(x, dtype=float)
    if np.any(x < 0):
        raise ValueError("x must be >= 0")
    if k == 1:
        out = np.exp(-x / avg_snr) / avg_snr
    else:
        with np.errstate(divide="ignore"):
            logp = (k - 1) * np.log(x) - math.lgamma(k) - k * math.log(avg_snr) - x / avg_snr
        out = np.exp(logp)
    return float(out) if out.ndim == 0 else out


def _poisson_head(k, x):
    # e^-x sum_{j<k} x^j / j!  = Gamma(k, x) / (k-1)!
    term = math.exp(-x)
    total = term
    for j in range(1, k):
        term *= x / j
        total += term
    return total


def _poisson_tail(k, x):
    # e^-x sum_{j>=k} x^j / j!, used for small x where 1 - head cancels
    term = math.exp(-x + k * math.log(x) - math.lgamma(k + 1)) if x > 0 else 0.0
    total = term
    j = k
    while term > 1e-18 * total and j < k + 1000:
        j += 1
        term *= x / j
        total += term
    return total


def upper_gamma(k: int, x: float, regularized: bool = False) -> float:
    """Upper incomplete gamma Gamma(k, x) for integer k >= 1 (finite-sum identity)."""
    if int(k) != k or k < 1:
        raise ValueError("k must be a positive integer")
    if x < 0:
        raise ValueError("x must be >= 0")
    q = _poisson_head(int(k), x)
    return q if regularized else q * math.factorial(int(k) - 1)


def _lower_regularized(k, x):
    if x < k + 1:
        return _poisson_tail(k, x)
    return 1.0 - _poisson_head(k, x)


def avg_failure_de_closed(th: float, g: float, k: int, avg_snr: float) -> float:
    """Closed-form Gamma average of the exponential-threshold PER."""
    _check(k, avg_snr)
    if not th >= 0:
        raise ValueError("th must be >= 0")
    if not g > 0:
        raise ValueError("g must be > 0")
    k = int(k)
    outage = _lower_regularized(k, th / avg_snr)
    # exp(g th) * Gamma(k, (g + 1/avg) th) / (k-1)!, with the exponentials merged
    y = (g + 1.0 / avg_snr) * th
    head = 1.0
    term = 1.0
    for j in range(1, k):
        term *= y / j
        head += term
    decay = math.exp(-th / avg_snr - k * math.log1p(g * avg_snr)) * head
    return min(max(outage + decay, 0.0), 1.0)


def _breakpoints(per: PerModel, k, avg_snr, upper):
    pts = [(k - 1) * avg_snr, k * avg_snr]
    if per.variant is PerVariant.TABLE:
        pts += [s for s, _ in per.table]
    else:
        th = per.snr_threshold
        pts.append(th)
        if per.variant is PerVariant.EXPONENTIAL_THRESHOLD:
            scale = 1.0 / (per.slope_g + 1.0 / avg_snr)
            pts += [th + m * scale for m in (1, 4, 16, 64)]
    return sorted({p for p in pts if 0 < p < upper})


def avg_failure_de_numeric(per: PerModel, k: int, avg_snr: float) -> float:
    """DE average failure probability by adaptive quadrature over the Gamma density."""
    _check(k, avg_snr)
    upper = avg_snr * special.gammainccinv(k, _TAIL)

    def f(x):
        return eval_per(per, x) * gamma_pdf(k, avg_snr, x)

    edges = [0.0] + _breakpoints(per, k, avg_snr, upper) + [upper]
    total = 0.0
    for a, b in zip(edges[:-1], edges[1:]):
        val, _ = integrate.quad(f, a, b, epsabs=0.0, epsrel=1e-13, limit=400)
        total += val
    return min(max(total, 0.0), 1.0)


def sample_exponential_snr(rng: np.random.Generator, avg_snr: float, shape) -> np.ndarray:
    """Inverse-CDF draw, -avg * ln(U) with U uniform on (0, 1]."""
    return -avg_snr * np.log(1.0 - rng.random(shape))


def _ie_block(rng, n, per, k, avg_snr):
    snr = sample_exponential_snr(rng, avg_snr, (n, k))
    vals = np.prod(eval_per(per, np.cumsum(snr, axis=1)), axis=1)
    return float(vals.sum()), float((vals * vals).sum())


def avg_failure_ie_mc(
    per: PerModel,
    k: int,
    avg_snr: float,
    trials: int,
    rng_seed: int,
    workers: int = 1,
    block_size: int = 1 << 14,
) -> tuple[float, float]:
    """Monte Carlo average of the IE product over i.i.d. exponential SNRs."""
    _check(k, avg_snr)
    if trials < 1:
        raise ValueError("trials must be >= 1")
    parts = run_blocks(_ie_block, trials, rng_seed, args=(per, int(k), avg_snr), block_size=block_size, workers=workers)
    s = sum(p[0] for p in parts)
    ss = sum(p[1] for p in parts)
    mean = s / trials
    var = max(ss / trials - mean * mean, 0.0) * trials / max(trials - 1, 1)
    return mean, math.sqrt(var / trials)


def avg_failure_exact_mc(
    code: CodeSpec,
    k: int,
    avg_snr: float,
    channel_trials: int,
    link_trials: int,
    rng_seed: int,
    workers: int = 1,
    block_size: int = 128,
    all_rounds: bool = False,
):
    """Exact average failure probability: outer channel draws, inner link trials.

    Returns (probability, stderr) for round k, or arrays over rounds 1..k
    when ``all_rounds`` is set. The standard error is taken across channel
    draws, so it accounts for both the fading and the link noise.
    """
    _check(k, avg_snr)
    if channel_trials < 2 or link_trials < 1:
        raise ValueError("need channel_trials >= 2 and link_trials >= 1")
    parts = run_blocks(
        exact_fading_block, channel_trials, rng_seed,
        args=(code, int(k), avg_snr, int(link_trials)), block_size=block_size, workers=workers,
    )
    s = np.sum([p[0] for p in parts], axis=0).astype(float)
    ss = np.sum([p[1] for p in parts], axis=0).astype(float)
    n, L = channel_trials, link_trials
    mean_draw = s / n / L
    var_draw = np.maximum(ss / L**2 - n * mean_draw**2, 0.0) / (n - 1)
    se = np.sqrt(var_draw / n)
    if all_rounds:
        return mean_draw, se
    return float(mean_draw[-1]), float(se[-1])


def avg_rounds(th: float, g: float, avg_snr: float) -> float:
    """Mean number of rounds with unlimited retransmissions: 1 + (th + 1/g) / avg."""
    if not th >= 0 or not g > 0 or not avg_snr > 0:
        raise ValueError("need th >= 0, g > 0, avg_snr > 0")
    return 1.0 + (th + 1.0 / g) / avg_snr


def avg_rounds_series(th: float, g: float, avg_snr: float, tol: float = 1e-12, max_terms: int = 100_000) -> float:
    """1 + sum_k of the closed-form DE averages, stopped once a term drops below ``tol``."""
    total = 1.0
    for k in range(1, max_terms + 1):
        term = avg_failure_de_closed(th, g, k, avg_snr)
        total += term
        if term < tol:
            return total
    raise RuntimeError("series did not converge")



def _rounds_block(rng, n, per, avg_snr, max_rounds):
    # Under DE the failure events are nested: NACK_k holds iff u < PER(acc_k)
    # for a single uniform u per packet, so K = 1 + #{k : u < PER(acc_k)}.
    u = rng.random(n)
    acc = np.zeros(n)
    rounds = np.ones(n, dtype=np.int64)
    live = np.ones(n, dtype=bool)
    for _ in range(max_rounds):
        acc[live] += sample_exponential_snr(rng, avg_snr, int(live.sum()))
        live &= u < eval_per(per, acc)
        if not live.any():
            break
        rounds += live
    total = rounds.astype(float)
    return float(total.sum()), float((total * total).sum())


def avg_rounds_mc(
    per: PerModel,
    avg_snr: float,
    trials: int,
    rng_seed: int,
    workers: int = 1,
    max_rounds: int = 10_000,
    block_size: int = 1 << 14,
) -> tuple[float, float]:
    """Sampled mean round count of unlimited-round HARQ under the DE model."""
    _check(1, avg_snr)
    if trials < 2:
        raise ValueError("trials must be >= 2")
    parts = run_blocks(_rounds_block, trials, rng_seed, args=(per, avg_snr, max_rounds),
                       block_size=block_size, workers=workers)
    s = sum(p[0] for p in parts)
    ss = sum(p[1] for p in parts)
    mean = s / trials
    var = max(ss / trials - mean * mean, 0.0) * trials / (trials - 1)
    return mean, math.sqrt(var / trials)
