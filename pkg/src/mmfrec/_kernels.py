"""Compiled SGD and prediction loops.

All epoch kernels share one update rule: within a mini-batch every gradient
is evaluated at the pre-batch parameters, and each parameter row touched by
the batch receives its L2 term once when the step is applied. With
``batch == 1`` that is plain per-record SGD.
"""

import numpy as np
from numba import njit


@njit(cache=True, nogil=True)
def mf_predict_batch(U, V, users, items):
    n = users.shape[0]
    out = np.empty(n)
    d = U.shape[1]
    for r in range(n):
        i = users[r]
        j = items[r]
        s = 0.0
        for c in range(d):
            s += U[i, c] * V[j, c]
        out[r] = s
    return out


@njit(cache=True, nogil=True)
def mf_epoch(U, V, users, items, ratings, order, lr, lam, batch, dU, dV, tu, tv):
    n = order.shape[0]
    d = U.shape[1]
    for start in range(0, n, batch):
        end = min(start + batch, n)
        for p in range(start, end):
            r = order[p]
            i = users[r]
            j = items[r]
            s = 0.0
            for c in range(d):
                s += U[i, c] * V[j, c]
            g = -2.0 * (ratings[r] - s)
            for c in range(d):
                dU[i, c] += g * V[j, c]
                dV[j, c] += g * U[i, c]
            tu[i] = True
            tv[j] = True
        for p in range(start, end):
            r = order[p]
            i = users[r]
            j = items[r]
            if tu[i]:
                for c in range(d):
                    U[i, c] -= lr * (dU[i, c] + 2.0 * lam * U[i, c])
                    dU[i, c] = 0.0
                tu[i] = False
            if tv[j]:
                for c in range(d):
                    V[j, c] -= lr * (dV[j, c] + 2.0 * lam * V[j, c])
                    dV[j, c] = 0.0
                tv[j] = False


@njit(cache=True, nogil=True)
def mmf_predict_batch(U, F, W, T, ptr, idx, users, items, fallback):
    n = users.shape[0]
    d = U.shape[1]
    out = np.empty(n)
    for r in range(n):
        i = users[r]
        j = items[r]
        m = ptr[j + 1] - ptr[j]
        if m == 0:
            out[r] = fallback
            continue
        acc = 0.0
        for q in range(ptr[j], ptr[j + 1]):
            k = idx[q]
            s = 0.0
            for c in range(d):
                s += U[i, c] * F[k, c]
            acc += W[i, k] * T[j, k] * s
        out[r] = acc / m
    return out


@njit(cache=True, nogil=True)
def mmf_epoch(
    U, F, W, T, ptr, idx, users, items, ratings, order, lr, lam, lam_w, batch,
    train_w, train_t, dU, dF, dW, dT, tu, tf, tw, tt, dots,
):
    n = order.shape[0]
    d = U.shape[1]
    for start in range(0, n, batch):
        end = min(start + batch, n)
        for p in range(start, end):
            r = order[p]
            i = users[r]
            j = items[r]
            lo = ptr[j]
            m = ptr[j + 1] - lo
            if m == 0:
                continue
            acc = 0.0
            for q in range(m):
                k = idx[lo + q]
                s = 0.0
                for c in range(d):
                    s += U[i, c] * F[k, c]
                dots[q] = s
                acc += W[i, k] * T[j, k] * s
            g = -2.0 * (ratings[r] - acc / m) / m
            tu[i] = True
            for q in range(m):
                k = idx[lo + q]
                wt = W[i, k] * T[j, k]
                for c in range(d):
                    dU[i, c] += g * wt * F[k, c]
                    dF[k, c] += g * wt * U[i, c]
                tf[k] = True
                if train_w:
                    dW[i, k] += g * T[j, k] * dots[q]
                    tw[i, k] = True
                if train_t:
                    dT[j, k] += g * W[i, k] * dots[q]
                    tt[j, k] = True
        for p in range(start, end):
            r = order[p]
            i = users[r]
            j = items[r]
            if tu[i]:
                for c in range(d):
                    U[i, c] -= lr * (dU[i, c] + 2.0 * lam * U[i, c])
                    dU[i, c] = 0.0
                tu[i] = False
            for q in range(ptr[j], ptr[j + 1]):
                k = idx[q]
                if tf[k]:
                    for c in range(d):
                        F[k, c] -= lr * (dF[k, c] + 2.0 * lam * F[k, c])
                        dF[k, c] = 0.0
                    tf[k] = False
                if tw[i, k]:
                    W[i, k] -= lr * (dW[i, k] + 2.0 * lam_w * (W[i, k] - 1.0))
                    dW[i, k] = 0.0
                    tw[i, k] = False
                if tt[j, k]:
                    T[j, k] -= lr * (dT[j, k] + 2.0 * lam_w * (T[j, k] - 1.0))
                    dT[j, k] = 0.0
                    tt[j, k] = False
