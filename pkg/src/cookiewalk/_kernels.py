"""Compiled inner loops for the Monte Carlo engines.

All kernels release the GIL and take a ``numpy.random.Generator`` so that the
caller controls the stream.  One uniform is drawn per step variable.
"""

import numpy as np
from numba import njit

# walk modes
RUN_STEPS = 0
RUN_UNTIL_STUCK = 1
RUN_UNTIL_ROOT_LOOP = 2

# walk status codes
ST_DONE = 0
ST_STUCK = 1
ST_DRIFT = 2
ST_UNDECIDED = 3
ST_ARENA = 4

# L-process stop reasons
DIED = 0
GEN_CAP = 1
POP_CAP = 2
LAMBDA_CAP = 3


@njit(nogil=True, cache=True)
def draw_xi(u, p, b):
    """Step variable from a uniform: 0 with probability 1 - p, else a child in 1..b."""
    fail = 1.0 - p
    if u < fail:
        return 0
    k = int((u - fail) / (p / b))
    if k >= b:
        k = b - 1
    return k + 1


@njit(nogil=True, cache=True)
def _strength(strengths, q, i):
    if i <= strengths.shape[0]:
        return strengths[i - 1]
    return q


@njit(nogil=True, cache=True)
def _grow(arr, new_len, fill):
    out = np.full(new_len, fill, dtype=arr.dtype)
    out[: arr.shape[0]] = arr
    return out


@njit(nogil=True, cache=True)
def walk_kernel(strengths, q, b, max_steps, rng, arena_cap, absorb_height, mode, crossings):
    """Cookie walk on a lazily grown ``b``-ary tree.

    Returns ``(status, height, steps, root_returns, vertices)``.  ``crossings``
    (length ``b``) receives the number of root -> child ``k`` jumps.
    """
    M = strengths.shape[0]
    cap = min(1024, arena_cap)
    parent = np.zeros(cap, dtype=np.int64)
    children = np.full(cap * b, -1, dtype=np.int64)
    visits = np.zeros(cap, dtype=np.int64)
    depth = np.zeros(cap, dtype=np.int64)
    used = 1
    v = 0
    visits[0] = 1
    returns = 0
    n = 0
    while n < max_steps:
        j = visits[v]
        if mode == RUN_UNTIL_STUCK:
            if v == 0 and j > M:
                return ST_STUCK, depth[v], n, returns, used
            if depth[v] > absorb_height:
                return ST_DRIFT, depth[v], n, returns, used
        p = strengths[j - 1] if j <= M else q
        x = draw_xi(rng.random(), p, b)
        n += 1
        if x == 0:
            if v == 0:
                if mode == RUN_UNTIL_ROOT_LOOP:
                    return ST_DONE, 0, n, returns, used
                visits[0] += 1
                returns += 1
                continue
            v = parent[v]
            if v == 0:
                returns += 1
            visits[v] += 1
            continue
        slot = v * b + x - 1
        w = children[slot]
        if w < 0:
            if used >= cap:
                if cap >= arena_cap:
                    return ST_ARENA, depth[v], n, returns, used
                new_cap = min(2 * cap, arena_cap)
                parent = _grow(parent, new_cap, 0)
                children = _grow(children, new_cap * b, -1)
                visits = _grow(visits, new_cap, 0)
                depth = _grow(depth, new_cap, 0)
                cap = new_cap
            w = used
            used += 1
            parent[w] = v
            depth[w] = depth[v] + 1
            children[slot] = w
        if v == 0:
            crossings[x - 1] += 1
        v = w
        visits[v] += 1
    if mode == RUN_STEPS:
        return ST_DONE, depth[v], n, returns, used
    return ST_UNDECIDED, depth[v], n, returns, used


@njit(nogil=True, cache=True)
def child_counts(strengths, q, b, j, rng, out):
    """Counts of each value ``1..b`` among the step variables before the ``j``-th failure."""
    for k in range(b):
        out[k] = 0
    fails = 0
    i = 0
    while fails < j:
        i += 1
        x = draw_xi(rng.random(), _strength(strengths, q, i), b)
        if x == 0:
            fails += 1
        else:
            out[x - 1] += 1


@njit(nogil=True, cache=True)
def first_child_samples(strengths, q, b, j, n, rng):
    """``n`` independent draws of the number of 1-values before the ``j``-th failure."""
    out = np.empty(n, dtype=np.int64)
    counts = np.zeros(b, dtype=np.int64)
    for t in range(n):
        child_counts(strengths, q, b, j, rng, counts)
        out[t] = counts[0]
    return out


@njit(nogil=True, cache=True)
def l_process_kernel(strengths, q, b, start, gen_cap, pop_cap, lambda_cap, rng):
    """Branching chain of edge-crossing counts started from one particle at ``start``.

    Returns ``(reason, Lambda, H, max_population, generations)``; ``Lambda`` is
    the sum of positions over all particles seen, ``H`` their number.
    """
    if start <= 0:
        return DIED, 0, 0, 0, 0
    cur = np.empty(16, dtype=np.int64)
    cur[0] = start
    size = 1
    lam = start
    H = 1
    max_pop = 1
    counts = np.zeros(b, dtype=np.int64)
    gen = 0
    nxt = np.empty(16, dtype=np.int64)
    while True:
        if lambda_cap > 0 and lam >= lambda_cap:
            return LAMBDA_CAP, lam, H, max_pop, gen
        if gen >= gen_cap:
            return GEN_CAP, lam, H, max_pop, gen
        nsize = 0
        for t in range(size):
            child_counts(strengths, q, b, cur[t], rng, counts)
            for k in range(b):
                c = counts[k]
                if c == 0:
                    continue
                if nsize >= pop_cap:
                    return POP_CAP, lam, H, max_pop, gen
                if nsize >= nxt.shape[0]:
                    nxt = _grow(nxt, 2 * nxt.shape[0], 0)
                nxt[nsize] = c
                nsize += 1
                lam += c
                H += 1
        gen += 1
        if nsize == 0:
            return DIED, lam, H, max_pop, gen
        if nsize > max_pop:
            max_pop = nsize
        cur, nxt = nxt, cur
        size = nsize


@njit(nogil=True, cache=True)
def z_chain_kernel(strengths, q, b, start, steps, rng):
    """Path ``Z_0..Z_steps`` of the tagged-particle chain; 0 is absorbing."""
    path = np.zeros(steps + 1, dtype=np.int64)
    path[0] = start
    counts = np.zeros(b, dtype=np.int64)
    z = start
    for n in range(1, steps + 1):
        if z == 0:
            break
        child_counts(strengths, q, b, z, rng, counts)
        z = counts[0]
        path[n] = z
    return path
