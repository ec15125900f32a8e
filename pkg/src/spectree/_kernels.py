"""Compiled inner loops: breadth-first tree growth and first-return sweeps.

Trees are grown from a caller-supplied buffer of uniforms, consumed in
breadth-first order (one per ordinary vertex, two per spine vertex).
Growing a larger ball from the same buffer reproduces the smaller one
as a prefix, which is what makes adaptive deepening consistent.
"""
from __future__ import annotations

import numpy as np
from numba import njit

OK = 0
NEED_UNIFORMS = 1
TOO_LARGE = 2


@njit(cache=True, nogil=True)
def _alias_draw(u, prob, alias):
    k = prob.shape[0]
    t = u * k
    i = int(t)
    if i >= k:
        i = k - 1
    if t - i < prob[i]:
        return i
    return alias[i]


@njit(cache=True, nogil=True)
def _grow_arrays(cap):
    return (np.empty(cap, np.int64), np.empty(cap, np.int64), np.empty(cap, np.int64),
            np.empty(cap, np.bool_), np.empty(cap, np.int64), np.empty(cap, np.int64))


@njit(cache=True, nogil=True)
def grow(u, off_prob, off_alias, sb_prob, sb_alias, spine_root,
         max_level, max_spine, branch_cap, size_cap):
    """Grow a tree breadth first.

    Vertices become frontier (``nchild = -1``, no uniform consumed) when
    they sit on ``max_level``, are spine vertices beyond ``max_spine``, or
    are branch vertices at relative depth ``branch_cap``.  Negative limits
    disable a rule.  Returns ``(status, n, used, nchild, parent, level,
    spine, anc, rel)``; ``anc`` is the index of the spine vertex a vertex
    hangs from.
    """
    cap = 1024
    nchild, parent, level, spine, anc, rel = _grow_arrays(cap)
    nchild[0] = 1
    parent[0] = -1
    level[0] = 0
    spine[0] = False
    anc[0] = 0
    rel[0] = 0
    parent[1] = 0
    level[1] = 1
    spine[1] = spine_root
    anc[1] = 1 if spine_root else 0
    rel[1] = 0 if spine_root else 1
    n = 2
    used = 0
    nu = u.shape[0]
    v = 1
    while v < n:
        lv = level[v]
        front = False
        if max_level >= 0 and lv >= max_level:
            front = True
        elif spine[v]:
            if max_spine >= 0 and lv > max_spine:
                front = True
        elif branch_cap >= 0 and rel[v] >= branch_cap:
            front = True
        if front:
            nchild[v] = -1
            v += 1
            continue
        if spine[v]:
            if used + 2 > nu:
                return NEED_UNIFORMS, n, used, nchild[:n], parent[:n], level[:n], spine[:n], anc[:n], rel[:n]
            c = _alias_draw(u[used], sb_prob, sb_alias)
            j = int(u[used + 1] * c)
            if j >= c:
                j = c - 1
            used += 2
        else:
            if used + 1 > nu:
                return NEED_UNIFORMS, n, used, nchild[:n], parent[:n], level[:n], spine[:n], anc[:n], rel[:n]
            c = _alias_draw(u[used], off_prob, off_alias)
            j = -1
            used += 1
        if n + c - 1 > size_cap:
            return TOO_LARGE, n, used, nchild[:n], parent[:n], level[:n], spine[:n], anc[:n], rel[:n]
        if n + c > cap:
            newcap = cap * 2
            while newcap < n + c:
                newcap *= 2
            a1, a2, a3, a4, a5, a6 = _grow_arrays(newcap)
            a1[:n] = nchild[:n]
            a2[:n] = parent[:n]
            a3[:n] = level[:n]
            a4[:n] = spine[:n]
            a5[:n] = anc[:n]
            a6[:n] = rel[:n]
            nchild, parent, level, spine, anc, rel = a1, a2, a3, a4, a5, a6
            cap = newcap
        for i in range(c):
            w = n + i
            parent[w] = v
            level[w] = lv + 1
            if spine[v] and i == j:
                spine[w] = True
                anc[w] = lv + 1
                rel[w] = 0
            else:
                spine[w] = False
                anc[w] = anc[v]
                rel[w] = rel[v] + 1
        nchild[v] = c
        n += c
        v += 1
    return OK, n, used, nchild[:n], parent[:n], level[:n], spine[:n], anc[:n], rel[:n]


@njit(cache=True, nogil=True)
def sweep(nchild, parent, level, spine, anc, n_end, max_level, max_spine, x,
          spine_hi, branch_hi):
    """Lower/upper first-return values of every vertex's subtree.

    The value at vertex v is P of the tree formed by the link to its
    parent and everything below v.  Frontier vertices get 0 (lower) and
    ``spine_hi`` / ``branch_hi`` (upper).  Vertices beyond ``max_level``
    or hanging from spine vertices past ``max_spine + 1`` are ignored;
    the spine vertex ``max_spine + 1`` and the vertices on ``max_level``
    are treated as frontier.
    """
    lo = np.zeros(n_end)
    hi = np.zeros(n_end)
    acc_lo = np.zeros(n_end)
    acc_hi = np.zeros(n_end)
    step = 1.0 - x
    for v in range(n_end - 1, 0, -1):
        if max_level >= 0 and level[v] > max_level:
            continue
        if max_spine >= 0:
            if spine[v]:
                if anc[v] > max_spine + 1:
                    continue
            elif anc[v] > max_spine:
                continue
        front = nchild[v] < 0
        if max_level >= 0 and level[v] == max_level:
            front = True
        if max_spine >= 0 and spine[v] and anc[v] == max_spine + 1:
            front = True
        if front:
            a = 0.0
            b = spine_hi if spine[v] else branch_hi
        else:
            a = step / (nchild[v] + 1 - acc_lo[v])
            b = step / (nchild[v] + 1 - acc_hi[v])
        lo[v] = a
        hi[v] = b
        p = parent[v]
        acc_lo[p] += a
        acc_hi[p] += b
    return lo, hi


@njit(cache=True, nogil=True)
def finite_p(nchild, parent, x):
    """Exact subtree first-return values for a finite breadth-first tree."""
    n = nchild.shape[0]
    val = np.zeros(n)
    acc = np.zeros(n)
    step = 1.0 - x
    for v in range(n - 1, 0, -1):
        a = step / (nchild[v] + 1 - acc[v])
        val[v] = a
        acc[parent[v]] += a
    return val


@njit(cache=True, nogil=True)
def nu_n_rejection(u, off_prob, off_alias, N, max_attempts):
    """Rejection sampler for trees with exactly N edges.

    Draws critical GW trees from consecutive uniforms until one has N
    edges.  Returns ``(status, attempts, used, nchild)``; status 1 means
    the buffer ran out, 2 means ``max_attempts`` was exhausted.
    """
    nu = u.shape[0]
    used = 0
    nchild = np.empty(N + 1, np.int64)
    attempts = 0
    while attempts < max_attempts:
        attempts += 1
        nchild[0] = 1
        n = 2
        v = 1
        ok = True
        while v < n:
            if used >= nu:
                return NEED_UNIFORMS, attempts, used, nchild
            c = _alias_draw(u[used], off_prob, off_alias)
            used += 1
            if n + c - 1 > N:
                ok = False
                break
            nchild[v] = c
            n += c
            v += 1
        if ok and n - 1 == N:
            return OK, attempts, used, nchild
    return TOO_LARGE, attempts, used, nchild
