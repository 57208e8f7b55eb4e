"""First-order fast marching on a uniform 2D grid (numba kernel).

Solves ``|DT| = cost`` with ``T(source) = 0`` using the upwind quadratic
update over the four axis neighbours. The trial set is a binary heap keyed by
``(T, flat index)``, so ties are broken by node index and the result does not
depend on insertion order. Stale heap entries are skipped lazily.
"""

from __future__ import annotations

import math

import numpy as np
from numba import njit

_FAR, _TRIAL, _DONE = 0, 1, 2


@njit(cache=True, nogil=True)
def _before(ka, ia, kb, ib):
    return ka < kb or (ka == kb and ia < ib)


@njit(cache=True, nogil=True)
def _push(keys, ids, size, key, idx):
    pos = size
    keys[pos] = key
    ids[pos] = idx
    while pos > 0:
        parent = (pos - 1) // 2
        if _before(keys[pos], ids[pos], keys[parent], ids[parent]):
            keys[pos], keys[parent] = keys[parent], keys[pos]
            ids[pos], ids[parent] = ids[parent], ids[pos]
            pos = parent
        else:
            break
    return size + 1


@njit(cache=True, nogil=True)
def _pop(keys, ids, size):
    key, idx = keys[0], ids[0]
    size -= 1
    keys[0] = keys[size]
    ids[0] = ids[size]
    pos = 0
    while True:
        left = 2 * pos + 1
        if left >= size:
            break
        child = left
        right = left + 1
        if right < size and _before(keys[right], ids[right], keys[left], ids[left]):
            child = right
        if _before(keys[child], ids[child], keys[pos], ids[pos]):
            keys[pos], keys[child] = keys[child], keys[pos]
            ids[pos], ids[child] = ids[child], ids[pos]
            pos = child
        else:
            break
    return key, idx, size


@njit(cache=True, nogil=True)
def _axis_min(T, state, i, j, di, dj, n0, n1, periodic):
    best = np.inf
    for s in (-1, 1):
        a = i + s * di
        b = j + s * dj
        if periodic:
            a %= n0
            b %= n1
        elif a < 0 or a >= n0 or b < 0 or b >= n1:
            continue
        if state[a, b] == _DONE and T[a, b] < best:
            best = T[a, b]
    return best


@njit(cache=True, nogil=True)
def _update(T, state, cost, h, i, j, periodic):
    n0, n1 = T.shape
    a = _axis_min(T, state, i, j, 1, 0, n0, n1, periodic)
    b = _axis_min(T, state, i, j, 0, 1, n0, n1, periodic)
    if a > b:
        a, b = b, a
    f = cost[i, j] * h
    if b == np.inf or b - a >= f:
        return a + f
    return 0.5 * (a + b + math.sqrt(2.0 * f * f - (b - a) * (b - a)))


@njit(cache=True, nogil=True)
def fast_march(cost, h, si, sj, periodic):
    n0, n1 = cost.shape
    T = np.full((n0, n1), np.inf)
    state = np.zeros((n0, n1), dtype=np.int8)
    cap = 8 * n0 * n1 + 8
    keys = np.empty(cap)
    ids = np.empty(cap, dtype=np.int64)
    size = 0
    T[si, sj] = 0.0
    size = _push(keys, ids, size, 0.0, si * n1 + sj)
    while size > 0:
        t, k, size = _pop(keys, ids, size)
        i = k // n1
        j = k % n1
        if state[i, j] == _DONE or t > T[i, j]:
            continue
        state[i, j] = _DONE
        for di, dj in ((-1, 0), (1, 0), (0, -1), (0, 1)):
            a = i + di
            b = j + dj
            if periodic:
                a %= n0
                b %= n1
            elif a < 0 or a >= n0 or b < 0 or b >= n1:
                continue
            if state[a, b] == _DONE:
                continue
            tn = _update(T, state, cost, h, a, b, periodic)
            if tn < T[a, b]:
                T[a, b] = tn
                state[a, b] = _TRIAL
                if size >= cap:
                    raise RuntimeError("fast marching heap overflow")
                size = _push(keys, ids, size, tn, a * n1 + b)
    return T
