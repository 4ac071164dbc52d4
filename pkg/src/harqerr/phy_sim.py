"""Link-level Chase-combining simulator.

A recursive systematic rate-1/2 convolutional code, terminated in the zero
state, is BPSK-modulated and sent over independent AWGN rounds. After each
round the receiver combines all rounds so far with maximum-ratio weights and
runs a Viterbi decoder. Every trial simulates all rounds, so joint error
statistics ERR_1 & ... & ERR_k and marginals P(ERR_k) come from the same
trials.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property
from typing import Sequence

import numpy as np

from . import kernels
from ._mc import DEFAULT_BLOCK, run_blocks
from .error_models import SnrSchedule

__all__ = [
    "CodeSpec",
    "ReceivedBlock",
    "JointErrorEstimate",
    "conv_encode",
    "transmit_round",
    "mrc_combine",
    "viterbi_decode",
    "simulate_errors",
    "estimate_joint_errors",
    "measure_per",
    "distance_spectrum",
    "free_distance",
]


def _taps(poly: int, memory: int) -> list[int]:
    # octal polynomial, MSB is the D^0 coefficient
    return [(poly >> (memory - i)) & 1 for i in range(memory + 1)]


@dataclass(frozen=True)
class CodeSpec:
    """Systematic recursive rate-1/2 code, generators ``[1, feedforward/feedback]`` in octal."""

    feedforward: int = 0o15
    feedback: int = 0o13
    memory: int = 3
    n_bits: int = 128

    def __post_init__(self):
        if self.memory < 1:
            raise ValueError("memory must be >= 1")
        if self.n_bits < 1:
            raise ValueError("n_bits must be >= 1")
        top = 1 << (self.memory + 1)
        for name, poly in (("feedforward", self.feedforward), ("feedback", self.feedback)):
            if not 0 < poly < top:
                raise ValueError(f"{name} polynomial {poly:o} does not fit memory {self.memory}")
        if not _taps(self.feedback, self.memory)[0]:
            raise ValueError("feedback polynomial needs a D^0 term")

    @property
    def n_states(self) -> int:
        return 1 << self.memory

    @property
    def n_symbols(self) -> int:
        return 2 * (self.n_bits + self.memory)

    @property
    def rate(self) -> float:
        return self.n_bits / self.n_symbols

    @cached_property
    def trellis(self) -> dict[str, np.ndarray]:
        """Forward and predecessor tables.

        State bit i holds the register content a[t-1-i]; a[t] = u xor feedback taps.
        """
        m, S = self.memory, self.n_states
        fb = _taps(self.feedback, m)
        ff = _taps(self.feedforward, m)

        def reg(s, i):  # a[t-i] for i >= 1
            return (s >> (i - 1)) & 1

        next_state = np.zeros((S, 2), dtype=np.int32)
        parity = np.zeros((S, 2), dtype=np.uint8)
        tail_u = np.zeros(S, dtype=np.uint8)
        for s in range(S):
            fsum = 0
            for i in range(1, m + 1):
                fsum ^= fb[i] & reg(s, i)
            tail_u[s] = fsum
            for u in (0, 1):
                a = u ^ fsum
                p = ff[0] & a
                for i in range(1, m + 1):
                    p ^= ff[i] & reg(s, i)
                parity[s, u] = p
                next_state[s, u] = ((s << 1) & (S - 1)) | a

        pred = np.zeros((S, 2), dtype=np.int32)
        pred_u = np.zeros((S, 2), dtype=np.uint8)
        pred_par = np.zeros((S, 2), dtype=np.uint8)
        tail_ok = np.zeros((S, 2), dtype=np.uint8)
        for ns in range(S):
            entries = []
            for p in range(S):
                for u in (0, 1):
                    if next_state[p, u] == ns:
                        entries.append((u, p))
            entries.sort()  # input 0 first: it wins ties
            if len(entries) != 2:
                raise ValueError("trellis is not a 2-in/2-out shift-register trellis")
            for j, (u, p) in enumerate(entries):
                pred[ns, j] = p
                pred_u[ns, j] = u
                pred_par[ns, j] = parity[p, u]
                tail_ok[ns, j] = int(tail_u[p] == u)
        return dict(
            next_state=next_state,
            parity=parity,
            tail_u=tail_u,
            pred=pred,
            pred_u=pred_u,
            pred_par=pred_par,
            tail_ok=tail_ok,
        )


@dataclass(frozen=True)
class ReceivedBlock:
    samples: np.ndarray
    snr: float


@dataclass(frozen=True)
class JointErrorEstimate:
    trials: int
    joint_counts: np.ndarray
    marginal_counts: np.ndarray

    @property
    def f_hat(self) -> np.ndarray:
        return self.joint_counts / self.trials

    @property
    def marginal(self) -> np.ndarray:
        return self.marginal_counts / self.trials

    @property
    def stderr(self) -> np.ndarray:
        p = self.f_hat
        return np.sqrt(p * (1 - p) / self.trials)

    @property
    def stderr_marginal(self) -> np.ndarray:
        p = self.marginal
        return np.sqrt(p * (1 - p) / self.trials)


def _rng(seed) -> np.random.Generator:
    return seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)


def encode_many(msgs: np.ndarray, code: CodeSpec) -> np.ndarray:
    tr = code.trellis
    return kernels.encode_batch(msgs, tr["next_state"], tr["parity"], tr["tail_u"], code.memory)


def decode_many(y: np.ndarray, code: CodeSpec) -> np.ndarray:
    tr = code.trellis
    return kernels.viterbi_batch(
        y, tr["pred"], tr["pred_u"], tr["pred_par"], tr["tail_ok"], code.n_bits, code.memory
    )


def conv_encode(msg: Sequence[int], code: CodeSpec) -> np.ndarray:
    """Encode one message; output interleaves (systematic, parity) per step, tail included."""
    m = np.asarray(msg, dtype=np.uint8)
    if m.shape != (code.n_bits,):
        raise ValueError(f"message must have {code.n_bits} bits, got shape {m.shape}")
    return encode_many(m[None, :], code)[0]


def transmit_round(codeword: Sequence[int], snr: float, rng_seed) -> ReceivedBlock:
    """BPSK (0 -> +1, 1 -> -1) scaled by sqrt(snr) plus unit-variance Gaussian noise."""
    if not snr >= 0:
        raise ValueError("snr must be >= 0")
    x = 1.0 - 2.0 * np.asarray(codeword, dtype=np.float64)
    y = np.sqrt(snr) * x + _rng(rng_seed).standard_normal(x.shape)
    return ReceivedBlock(y, float(snr))


def mrc_combine(blocks: Sequence[ReceivedBlock]) -> ReceivedBlock:
    """Maximum-ratio combine: sum sqrt(snr_l) y_l / sqrt(sum snr_l).

    Zero-SNR rounds carry no signal and are left out of the sum, so a
    trailing zero-SNR round returns the previous result unchanged. With no
    signal at all the last block is returned as-is.
    """
    if not blocks:
        raise ValueError("need at least one block")
    n = len(blocks[0].samples)
    if any(len(b.samples) != n for b in blocks):
        raise ValueError("all blocks must have the same length")
    live = [b for b in blocks if b.snr > 0]
    if not live:
        return ReceivedBlock(np.asarray(blocks[-1].samples), 0.0)
    if len(live) == 1:
        return ReceivedBlock(np.asarray(live[0].samples), live[0].snr)
    total = sum(b.snr for b in live)
    acc = sum(np.sqrt(b.snr) * np.asarray(b.samples) for b in live)
    return ReceivedBlock(acc / np.sqrt(total), total)


def viterbi_decode(block: ReceivedBlock, code: CodeSpec) -> np.ndarray:
    """ML sequence estimate over the terminated trellis (Euclidean metric)."""
    y = np.asarray(block.samples, dtype=np.float64)
    if y.shape != (code.n_symbols,):
        raise ValueError(f"expected {code.n_symbols} samples, got shape {y.shape}")
    return decode_many(y[None, :], code)[0]


def simulate_errors(code: CodeSpec, snrs: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """Run one link trial per row of ``snrs`` (shape n x k); return ERR flags (n x k).

    Decoding after round l uses the running sum of sqrt(snr_j) y_j. Adding a
    zero-SNR round leaves that sum bit-identical, so ERR_l = ERR_{l-1} there.
    """
    snrs = np.atleast_2d(np.asarray(snrs, dtype=np.float64))
    n, k = snrs.shape
    msgs = rng.integers(0, 2, size=(n, code.n_bits), dtype=np.uint8)
    sym = 1.0 - 2.0 * encode_many(msgs, code)
    gains = np.sqrt(snrs)
    cum = np.cumsum(snrs, axis=1)
    acc = np.zeros_like(sym)
    err = np.empty((n, k), dtype=bool)
    for l in range(k):
        a = gains[:, l, None]
        y = a * sym + rng.standard_normal(sym.shape)
        acc = acc + a * y
        obs = np.where(cum[:, l, None] > 0, acc, y)
        err[:, l] = np.any(decode_many(obs, code) != msgs, axis=1)
    return err


def _joint_block(rng, n, code, per_round):
    snrs = np.broadcast_to(np.asarray(per_round, dtype=np.float64), (n, len(per_round)))
    err = simulate_errors(code, snrs, rng)
    joint = np.logical_and.accumulate(err, axis=1)
    return joint.sum(axis=0), err.sum(axis=0)


def estimate_joint_errors(
    code: CodeSpec,
    sched: SnrSchedule,
    trials: int,
    rng_seed: int,
    workers: int = 1,
    block_size: int = DEFAULT_BLOCK,
) -> JointErrorEstimate:
    """Monte Carlo estimate of f_k = P(ERR_1, ..., ERR_k) and of P(ERR_k) for every prefix."""
    if trials < 1:
        raise ValueError("trials must be >= 1")
    parts = run_blocks(
        _joint_block, trials, rng_seed, args=(code, sched.per_round), block_size=block_size, workers=workers
    )
    joint = np.sum([p[0] for p in parts], axis=0).astype(np.int64)
    marg = np.sum([p[1] for p in parts], axis=0).astype(np.int64)
    return JointErrorEstimate(int(trials), joint, marg)


def measure_per(
    code: CodeSpec,
    snrs: Sequence[float],
    trials: int,
    rng_seed: int,
    workers: int = 1,
) -> tuple[np.ndarray, np.ndarray]:
    """Single-round PER at each linear SNR; returns (per, stderr) arrays."""
    per, se = [], []
    for i, g in enumerate(snrs):
        seed = np.random.SeedSequence(rng_seed, spawn_key=(0x5E5, i)).generate_state(1, np.uint64)[0]
        est = estimate_joint_errors(code, SnrSchedule([g]), trials, int(seed), workers=workers)
        per.append(est.f_hat[0])
        se.append(est.stderr[0])
    return np.array(per), np.array(se)


def distance_spectrum(
    code: CodeSpec, max_hamming_weight: int, terminated: bool = True
) -> list[tuple[int, int]]:
    """Weight enumerator of error events (paths leaving and re-entering state 0).

    With ``terminated=True`` (default) events may start at any of the
    ``n_bits`` positions of the zero-terminated block and must re-merge by
    its end, tail included; the counts are the block multiplicities that
    enter the union bound on block error probability. With
    ``terminated=False`` the counts are per starting position on the
    infinite trellis. Only weights with a non-zero count are listed.
    """
    if max_hamming_weight < 1:
        raise ValueError("max_hamming_weight must be >= 1")
    W = int(max_hamming_weight)
    tr = code.trellis
    nxt, par, tail_u = tr["next_state"], tr["parity"], tr["tail_u"]
    S = code.n_states
    counts = np.zeros(W + 1, dtype=np.int64)
    open_ = np.zeros((S, W + 1), dtype=np.int64)

    def step(cur, free):
        new = np.zeros_like(cur)
        for s in range(1, S):
            row = cur[s]
            if not row.any():
                continue
            for u in ((0, 1) if free else (int(tail_u[s]),)):
                ns = int(nxt[s, u])
                dw = u + int(par[s, u])
                shifted = np.zeros(W + 1, dtype=np.int64)
                shifted[dw:] = row[: W + 1 - dw]
                if ns == 0:
                    counts[:] += shifted
                else:
                    new[ns] += shifted
        return new

    def diverge(cur):
        # leave state 0 with input 1
        ns, w = int(nxt[0, 1]), 1 + int(par[0, 1])
        if w <= W:
            if ns == 0:
                counts[w] += 1
            else:
                cur[ns, w] += 1

    if terminated:
        for t in range(code.n_bits + code.memory):
            free = t < code.n_bits
            open_ = step(open_, free)
            if free:
                diverge(open_)
        # the tail drives every path to state 0
        assert not open_[1:].any()
    else:
        diverge(open_)
        for _ in range(100_000):
            if not open_[1:].any():
                break
            open_ = step(open_, True)
        else:
            raise RuntimeError("event enumeration did not terminate (catastrophic code?)")
    return [(w, int(c)) for w, c in enumerate(counts) if c > 0]


def free_distance(spectrum: Sequence[tuple[int, int]]) -> int | None:
    return min((w for w, c in spectrum if c > 0), default=None)


def exact_fading_block(rng, n, code, k, avg_snr, link_trials):
    """n channel draws, each with ``link_trials`` link trials; per-draw failure counts per prefix."""
    draws = -avg_snr * np.log1p(-rng.random((n, k)))
    snrs = np.repeat(draws, link_trials, axis=0)
    err = simulate_errors(code, snrs, rng)
    joint = np.logical_and.accumulate(err, axis=1).reshape(n, link_trials, k).sum(axis=1)
    return joint.sum(axis=0), (joint.astype(np.int64) ** 2).sum(axis=0)

