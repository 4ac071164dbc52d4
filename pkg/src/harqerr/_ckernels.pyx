# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled trellis kernels. Same contract and results as ``_pykernels``."""

import numpy as np
cimport numpy as cnp
from libc.math cimport INFINITY
from libc.stdlib cimport free, malloc

cnp.import_array()


def encode_batch(msgs, next_state, parity, tail_u, int memory):
    cdef const unsigned char[:, ::1] m = np.ascontiguousarray(msgs, dtype=np.uint8)
    cdef const int[:, ::1] nxt = np.ascontiguousarray(next_state, dtype=np.int32)
    cdef const unsigned char[:, ::1] par = np.ascontiguousarray(parity, dtype=np.uint8)
    cdef const unsigned char[::1] tu = np.ascontiguousarray(tail_u, dtype=np.uint8)
    cdef Py_ssize_t B = m.shape[0], nb = m.shape[1]
    cdef Py_ssize_t T = nb + memory
    out_arr = np.empty((B, 2 * T), dtype=np.uint8)
    cdef unsigned char[:, ::1] out = out_arr
    cdef Py_ssize_t b, t
    cdef int state
    cdef unsigned char u
    with nogil:
        for b in range(B):
            state = 0
            for t in range(T):
                if t < nb:
                    u = m[b, t]
                else:
                    u = tu[state]
                out[b, 2 * t] = u
                out[b, 2 * t + 1] = par[state, u]
                state = nxt[state, u]
    return out_arr


def viterbi_batch(y, pred, pred_u, pred_par, tail_ok, int nb, int memory):
    cdef const double[:, ::1] yv = np.ascontiguousarray(y, dtype=np.float64)
    cdef Py_ssize_t B = yv.shape[0]
    cdef Py_ssize_t S = np.asarray(pred).shape[0]
    cdef Py_ssize_t T = nb + memory
    # flat per-state tables: predecessor and branch-metric index for j = 0, 1
    cdef int[::1] p0 = np.ascontiguousarray(np.asarray(pred)[:, 0], dtype=np.int32)
    cdef int[::1] p1 = np.ascontiguousarray(np.asarray(pred)[:, 1], dtype=np.int32)
    pu = np.asarray(pred_u, dtype=np.int32)
    pp = np.asarray(pred_par, dtype=np.int32)
    cdef int[::1] i0 = np.ascontiguousarray(2 * pu[:, 0] + pp[:, 0], dtype=np.int32)
    cdef int[::1] i1 = np.ascontiguousarray(2 * pu[:, 1] + pp[:, 1], dtype=np.int32)
    cdef unsigned char[::1] u0 = np.ascontiguousarray(pu[:, 0], dtype=np.uint8)
    cdef unsigned char[::1] u1 = np.ascontiguousarray(pu[:, 1], dtype=np.uint8)
    ok_arr = np.asarray(tail_ok, dtype=bool)
    cdef unsigned char[::1] ok0 = np.ascontiguousarray(ok_arr[:, 0], dtype=np.uint8)
    cdef unsigned char[::1] ok1 = np.ascontiguousarray(ok_arr[:, 1], dtype=np.uint8)
    bits_arr = np.empty((B, nb), dtype=np.uint8)
    cdef unsigned char[:, ::1] bits = bits_arr
    cdef double* pm = <double*> malloc(S * sizeof(double))
    cdef double* pn = <double*> malloc(S * sizeof(double))
    cdef double* tmp
    cdef unsigned char* dec = <unsigned char*> malloc(T * S)
    if pm == NULL or pn == NULL or dec == NULL:
        free(pm)
        free(pn)
        free(dec)
        raise MemoryError()
    cdef double[4] bm
    cdef Py_ssize_t b, t, s
    cdef double y0, y1, c0, c1
    cdef int state, j
    cdef bint tail
    cdef unsigned char pick
    cdef unsigned char* drow
    with nogil:
        for b in range(B):
            for s in range(S):
                pm[s] = -INFINITY
            pm[0] = 0.0
            for t in range(T):
                y0 = yv[b, 2 * t]
                y1 = yv[b, 2 * t + 1]
                bm[0] = y0 + y1
                bm[1] = y0 - y1
                bm[2] = -y0 + y1
                bm[3] = -y0 - y1
                tail = t >= nb
                drow = dec + t * S
                for s in range(S):
                    c0 = pm[p0[s]] + bm[i0[s]]
                    c1 = pm[p1[s]] + bm[i1[s]]
                    if tail:
                        c0 = c0 if ok0[s] else -INFINITY
                        c1 = c1 if ok1[s] else -INFINITY
                    pick = c1 > c0
                    drow[s] = pick
                    pn[s] = c1 if pick else c0
                tmp = pm
                pm = pn
                pn = tmp
            state = 0
            for t in range(T - 1, -1, -1):
                j = dec[t * S + state]
                if t < nb:
                    bits[b, t] = u1[state] if j else u0[state]
                state = p1[state] if j else p0[state]
    free(pm)
    free(pn)
    free(dec)
    return bits_arr
