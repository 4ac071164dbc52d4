"""Pure-numpy trellis kernels, vectorised over a batch of codewords.

Reference implementation and fallback for ``_ckernels``. Both must return
identical arrays: branch metrics are formed with the same floating-point
expressions and ties resolve the same way (predecessor 0 wins unless the
other candidate is strictly better).
"""

import numpy as np


def encode_batch(msgs, next_state, parity, tail_u, memory):
    msgs = np.ascontiguousarray(msgs, dtype=np.uint8)
    B, nb = msgs.shape
    T = nb + memory
    out = np.empty((B, 2 * T), dtype=np.uint8)
    state = np.zeros(B, dtype=np.intp)
    for t in range(T):
        u = msgs[:, t] if t < nb else tail_u[state]
        out[:, 2 * t] = u
        out[:, 2 * t + 1] = parity[state, u]
        state = next_state[state, u]
    return out


def viterbi_batch(y, pred, pred_u, pred_par, tail_ok, nb, memory):
    y = np.ascontiguousarray(y, dtype=np.float64)
    B = y.shape[0]
    S = pred.shape[0]
    T = nb + memory
    idx0 = 2 * pred_u[:, 0].astype(np.intp) + pred_par[:, 0]
    idx1 = 2 * pred_u[:, 1].astype(np.intp) + pred_par[:, 1]
    p0 = pred[:, 0].astype(np.intp)
    p1 = pred[:, 1].astype(np.intp)
    ok0 = tail_ok[:, 0].astype(bool)
    ok1 = tail_ok[:, 1].astype(bool)

    pm = np.full((B, S), -np.inf)
    pm[:, 0] = 0.0
    dec = np.empty((T, B, S), dtype=bool)
    bm = np.empty((B, 4))
    for t in range(T):
        y0 = y[:, 2 * t]
        y1 = y[:, 2 * t + 1]
        bm[:, 0] = y0 + y1
        bm[:, 1] = y0 - y1
        bm[:, 2] = -y0 + y1
        bm[:, 3] = -y0 - y1
        c0 = pm[:, p0] + bm[:, idx0]
        c1 = pm[:, p1] + bm[:, idx1]
        if t >= nb:
            c0[:, ~ok0] = -np.inf
            c1[:, ~ok1] = -np.inf
        pick = c1 > c0
        dec[t] = pick
        pm = np.where(pick, c1, c0)

    bits = np.empty((B, nb), dtype=np.uint8)
    state = np.zeros(B, dtype=np.intp)
    rows = np.arange(B)
    for t in range(T - 1, -1, -1):
        j = dec[t, rows, state].astype(np.intp)
        if t < nb:
            bits[:, t] = pred_u[state, j]
        state = pred[state, j]
    return bits
