"""Compiled inner loops shared by the public API.

Everything here works on plain arrays so it can run under numba's nopython
mode.  Three tuples are threaded through the calls:

``sess``  oracle session: ``(x, dist, pair_q, draws, resolved, total, cfg, sigma)``
    x        float64[n, m]  points
    dist     float64[n, n]  exact distances
    pair_q   int64[n, n]    charged queries per ordered pair (global indices)
    draws    int64[n, n]    stream position per ordered pair; the diagonal
                            entry (i, i) is the neighbour-choice stream of i
    resolved bool[n, n]     pair evaluated exactly by the capped fallback
    total    int64[1]       charged queries
    cfg      int64[4]       model, cap flag, seed bits, m
    sigma    float64[1]

``st``    estimation state: ``(mean, count, width, exact, found, cand, lk, uk,
          pq_find, pq_direct, q_found, stalled)``; pair arrays are
          ``[n, n-1]`` in local neighbour order.

``mon``   monitoring: ``(dloc, dk, flags, trace)``; ``flags[0]`` records a
          pair estimate leaving its confidence interval, ``flags[1]`` a k-NN
          interval missing the exact k-NN distance, ``flags[2]`` counts
          trace rows written.

``sched`` is ``(kind, a, b)``: kind 0 is the theoretical LIL width with
``a = log(1/d') + 3 log log(1/d')``; kind 1 is the empirical width with
``a = c_beta`` and ``b = n / delta``.
"""

import math

import numpy as np
from numba import njit

MODEL_DIMENSION = 0
MODEL_ADDITIVE = 1
MODEL_EXACT = 2

STOP_RULE = 0
STOP_BUDGET = 1
STOP_SAFETY = 2

NO_LIMIT = 2**62

_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)
_PAIR = np.uint64(0xD6E8FEB86659FD93)


@njit(cache=True, inline="always")
def mix64(z):
    z = (z ^ (z >> np.uint64(30))) * _M1
    z = (z ^ (z >> np.uint64(27))) * _M2
    return z ^ (z >> np.uint64(31))


@njit(cache=True, inline="always")
def stream_uniform(seed, i, j, t, lane):
    """Uniform in [0, 1) addressed by (seed, i, j, draw index, lane)."""
    h = mix64(np.uint64(seed) + _GOLDEN * np.uint64(i + 1))
    h = mix64(h ^ (_PAIR * np.uint64(j + 1)))
    h = mix64(h + _GOLDEN * np.uint64(2 * t + lane + 1))
    return float(h >> np.uint64(11)) * (1.0 / 9007199254740992.0)


@njit(cache=True, inline="always")
def stream_normal(seed, i, j, t):
    u1 = 1.0 - stream_uniform(seed, i, j, t, 0)
    u2 = stream_uniform(seed, i, j, t, 1)
    return math.sqrt(-2.0 * math.log(u1)) * math.cos(2.0 * math.pi * u2)


@njit(cache=True, inline="always")
def width(sched, t):
    kind, a, b = sched
    if kind == 0:
        return math.sqrt(2.0 * (a + 1.5 * math.log(1.0 + math.log(t))) / t)
    return math.sqrt(a * math.log(1.0 + (1.0 + math.log(t)) * b) / t)


# --------------------------------------------------------------------------
# oracle


@njit(cache=True, inline="always")
def query(sess, i, g):
    """One oracle call on ordered pair (i, g).

    Returns ``(value, exact, charged)``.
    """
    x, dist, pair_q, draws, resolved, total, cfg, sigma = sess
    model = cfg[0]
    if model == MODEL_EXACT:
        pair_q[i, g] += 1
        total[0] += 1
        return dist[i, g], True, 1
    if model == MODEL_ADDITIVE:
        t = draws[i, g]
        draws[i, g] = t + 1
        pair_q[i, g] += 1
        total[0] += 1
        return dist[i, g] + sigma[0] * stream_normal(cfg[2], i, g, t), False, 1
    m = cfg[3]
    if cfg[1] != 0:
        if resolved[i, g]:
            return dist[i, g], True, 0
        if pair_q[i, g] >= m - 1:
            # exact sweep over every dimension replaces this query
            resolved[i, g] = True
            pair_q[i, g] += m
            total[0] += m
            return dist[i, g], True, m
    t = draws[i, g]
    draws[i, g] = t + 1
    p = int(stream_uniform(cfg[2], i, g, t, 0) * m)
    if p >= m:
        p = m - 1
    diff = x[i, p] - x[g, p]
    pair_q[i, g] += 1
    total[0] += 1
    return diff * diff, False, 1


@njit(cache=True, inline="always")
def to_global(i, j):
    return j if j < i else j + 1


# --------------------------------------------------------------------------
# per-pair estimates


@njit(cache=True, inline="always")
def sample(st, sess, sched, mon, i, j):
    """Query local pair (i, j) and fold the response into the estimate."""
    mean, count, wid, exact = st[0], st[1], st[2], st[3]
    value, is_exact, charged = query(sess, i, to_global(i, j))
    c = count[i, j] + 1
    count[i, j] = c
    if is_exact:
        mean[i, j] = value
        wid[i, j] = 0.0
        exact[i, j] = True
    else:
        mean[i, j] = ((c - 1) / c) * mean[i, j] + value / c
        wid[i, j] = width(sched, c)
    dloc, dk, flags, trace = mon
    if dloc.shape[0] > 0 and abs(mean[i, j] - dloc[i, j]) > wid[i, j]:
        flags[0] = 1
    if trace.shape[0] > 0:
        r = flags[2]
        if r < trace.shape[0]:
            trace[r, 0] = i
            trace[r, 1] = j
            trace[r, 2] = charged
            flags[2] = r + 1
    return charged


@njit(cache=True, inline="always")
def kth_smallest(vals, k, buf):
    """k-th smallest (1-based) of ``vals`` using ``buf`` as scratch."""
    nn = vals.shape[0]
    for t in range(nn):
        buf[t] = vals[t]
    lo, hi = 0, nn - 1
    target = k - 1
    while lo < hi:
        pivot = buf[(lo + hi) // 2]
        a, b = lo, hi
        while a <= b:
            while buf[a] < pivot:
                a += 1
            while buf[b] > pivot:
                b -= 1
            if a <= b:
                tmp = buf[a]
                buf[a] = buf[b]
                buf[b] = tmp
                a += 1
                b -= 1
        if target <= b:
            hi = b
        elif target >= a:
            lo = a
        else:
            break
    return buf[target]


@njit(cache=True, inline="always")
def knn_interval(st, scratch, i, k):
    """(k-th smallest LCB, k-th smallest UCB) of point i."""
    mean, wid = st[0], st[2]
    nb = mean.shape[1]
    lo_vals, hi_vals, buf = scratch[0], scratch[1], scratch[2]
    for j in range(nb):
        lo_vals[j] = mean[i, j] - wid[i, j]
        hi_vals[j] = mean[i, j] + wid[i, j]
    return kth_smallest(lo_vals, k, buf), kth_smallest(hi_vals, k, buf)


@njit(cache=True, inline="always")
def refresh_interval(st, mon, scratch, i, k):
    lo, hi = knn_interval(st, scratch, i, k)
    st[6][i] = lo
    st[7][i] = hi
    dloc, dk, flags, trace = mon
    if dk.shape[0] > 0 and (lo > dk[i] or hi < dk[i]):
        flags[1] = 1


@njit(cache=True, inline="always")
def _before(mean, i, a, b):
    return mean[i, a] < mean[i, b] or (mean[i, a] == mean[i, b] and a < b)


@njit(cache=True)
def select_targets(st, scratch, i, k):
    """Return local indices (a1, a2, b); -1 marks an absent target."""
    mean, wid = st[0], st[2]
    nb = mean.shape[1]
    idx = scratch[3]
    for t in range(nb):
        idx[t] = t
    # quickselect on (mean, index) keys for the k-th position
    lo, hi = 0, nb - 1
    target = k - 1
    while lo < hi:
        p = idx[(lo + hi) // 2]
        a, b = lo, hi
        while a <= b:
            while _before(mean, i, idx[a], p):
                a += 1
            while _before(mean, i, p, idx[b]):
                b -= 1
            if a <= b:
                tmp = idx[a]
                idx[a] = idx[b]
                idx[b] = tmp
                a += 1
                b -= 1
        if target <= b:
            hi = b
        elif target >= a:
            lo = a
        else:
            break
    bsel = idx[target]
    a1 = -1
    a2 = -1
    best_u = -np.inf
    best_l = np.inf
    for j in range(nb):
        if j == bsel:
            continue
        if _before(mean, i, j, bsel):
            u = mean[i, j] + wid[i, j]
            if u > best_u:
                best_u = u
                a1 = j
        else:
            lcb = mean[i, j] - wid[i, j]
            if lcb < best_l:
                best_l = lcb
                a2 = j
    return a1, a2, bsel


@njit(cache=True)
def init_point(st, sess, sched, mon, scratch, i, k, limit):
    """Sample every unsampled pair of point i while ``total < limit``.

    Returns ``(charged, complete)``.
    """
    count = st[1]
    nb = count.shape[1]
    total = sess[5]
    charged = 0
    for j in range(nb):
        if count[i, j] == 0:
            if total[0] >= limit:
                return charged, False
            charged += sample(st, sess, sched, mon, i, j)
    refresh_interval(st, mon, scratch, i, k)
    return charged, True


@njit(cache=True)
def find_knn_step(st, sess, sched, mon, scratch, i, k):
    """One k-NN search step on an initialized point.

    Returns ``(charged, sampled_bits)`` where bit 0 is b, bit 1 is a1 and
    bit 2 is a2.
    """
    mean, wid, found, cand = st[0], st[2], st[4], st[5]
    a1, a2, b = select_targets(st, scratch, i, k)
    charged = sample(st, sess, sched, mon, i, b)
    bits = 1
    ok = True
    if a1 >= 0 and mean[i, a1] + wid[i, a1] >= mean[i, b] - wid[i, b]:
        charged += sample(st, sess, sched, mon, i, a1)
        bits |= 2
        ok = False
    if a2 >= 0 and mean[i, b] + wid[i, b] >= mean[i, a2] - wid[i, a2]:
        charged += sample(st, sess, sched, mon, i, a2)
        bits |= 4
        ok = False
    found[i] = ok
    cand[i] = b
    refresh_interval(st, mon, scratch, i, k)
    return charged, bits


@njit(cache=True)
def run_find_knn(st, sess, sched, mon, scratch, i, k, max_queries):
    """Repeat the k-NN search step on point i until knnfound or ``max_queries`` charged."""
    found = st[4]
    charged, complete = init_point(st, sess, sched, mon, scratch, i, k, sess[5][0] + max_queries)
    steps = 0
    while not found[i] and charged < max_queries:
        c, bits = find_knn_step(st, sess, sched, mon, scratch, i, k)
        charged += c
        steps += 1
        if c == 0 and not found[i]:
            break
    return charged, steps


# --------------------------------------------------------------------------
# mode estimation


@njit(cache=True)
def kth_mean(st, scratch, i, k):
    """k-th smallest running mean of point i; unsampled pairs count as +inf."""
    mean, count = st[0], st[1]
    vals = scratch[0]
    for j in range(mean.shape[1]):
        vals[j] = mean[i, j] if count[i, j] > 0 else np.inf
    return kth_smallest(vals, k, scratch[2])


@njit(cache=True)
def point_estimate_argmin(st, scratch, k):
    n = st[0].shape[0]
    best = np.inf
    arg = 0
    for i in range(n):
        v = kth_mean(st, scratch, i, k)
        if v < best:
            best = v
            arg = i
    return arg


@njit(cache=True)
def _record(st, scratch, k, total, budgets, out, filled):
    """Fill every budget snapshot whose threshold has been reached."""
    done = True
    arg = -1
    for g in range(budgets.shape[0]):
        if out[g] < 0:
            if total >= budgets[g]:
                if arg < 0:
                    arg = point_estimate_argmin(st, scratch, k)
                out[g] = arg
                filled[g] = total
            else:
                done = False
    return done


@njit(cache=True)
def _two_smallest(lk):
    n = lk.shape[0]
    l1 = 0
    for i in range(1, n):
        if lk[i] < lk[l1]:
            l1 = i
    l2 = 1 if l1 == 0 else 0
    for i in range(n):
        if i != l1 and lk[i] < lk[l2]:
            l2 = i
    return l1, l2


@njit(cache=True)
def _work(st, sess, sched, mon, scratch, i, k):
    """One unit of work on point i: a k-NN search step, or a direct sample of
    (i, b) once the k-NN is found."""
    found, cand, pq_find, pq_direct, q_found = st[4], st[5], st[8], st[9], st[10]
    if not found[i]:
        c, bits = find_knn_step(st, sess, sched, mon, scratch, i, k)
        pq_find[i] += c
        if found[i] and q_found[i] < 0:
            q_found[i] = pq_find[i]
    else:
        c = sample(st, sess, sched, mon, i, cand[i])
        pq_direct[i] += c
        refresh_interval(st, mon, scratch, i, k)
    return c


@njit(cache=True)
def adaptive_mode(st, sess, sched, mon, scratch, k, budgets, out, filled, safety):
    """Adaptive mode estimation.

    With an empty ``budgets`` array the run stops only on the stopping rule
    or the safety cap.  Otherwise it stops once every budget snapshot is
    filled; snapshot ``g`` holds the point-estimate argmin at the first
    work-unit boundary with ``total >= budgets[g]``.

    Returns ``(reason, l1)``.
    """
    n = st[0].shape[0]
    total = sess[5]
    found, pq_find, q_found, stalled, lk, uk = st[4], st[8], st[10], st[11], st[6], st[7]
    use_budget = budgets.shape[0] > 0
    for i in range(n):
        if use_budget:
            # a budget cut inside the initialization pass
            count = st[1]
            for j in range(count.shape[1]):
                if count[i, j] == 0:
                    if _record(st, scratch, k, total[0], budgets, out, filled):
                        return STOP_BUDGET, -1
                    pq_find[i] += sample(st, sess, sched, mon, i, j)
            refresh_interval(st, mon, scratch, i, k)
            if _record(st, scratch, k, total[0], budgets, out, filled):
                return STOP_BUDGET, -1
        else:
            c, complete = init_point(st, sess, sched, mon, scratch, i, k, NO_LIMIT)
            pq_find[i] += c
        c, bits = find_knn_step(st, sess, sched, mon, scratch, i, k)
        pq_find[i] += c
        if found[i] and q_found[i] < 0:
            q_found[i] = pq_find[i]
    while True:
        l1, l2 = _two_smallest(lk)
        if uk[l1] < lk[l2]:
            for g in range(budgets.shape[0]):
                if out[g] < 0:
                    out[g] = l1
                    filled[g] = total[0]
            return STOP_RULE, l1
        if use_budget and _record(st, scratch, k, total[0], budgets, out, filled):
            return STOP_BUDGET, l1
        if total[0] >= safety:
            break
        # work on the less certain of the two leaders
        target = l1
        other = l2
        if uk[l2] - lk[l2] > uk[l1] - lk[l1]:
            target = l2
            other = l1
        if stalled[target]:
            if stalled[other]:
                # both leaders are exactly resolved and tied
                break
            target = other
        c = _work(st, sess, sched, mon, scratch, target, k)
        if c == 0:
            stalled[target] = True
    arg = point_estimate_argmin(st, scratch, k)
    for g in range(budgets.shape[0]):
        if out[g] < 0:
            out[g] = arg
            filled[g] = total[0]
    return STOP_SAFETY, arg


@njit(cache=True)
def naive_plus(st, sess, sched, mon, scratch, k, per_point, kth_out):
    """Naive+ baseline.

    ``per_point`` holds increasing per-point budgets; ``kth_out[g, i]`` gets
    the k-th smallest mean of point i at the first boundary where its
    charged queries reach ``per_point[g]``, or when it stops early.
    """
    n = st[0].shape[0]
    count, found, pq_find, q_found = st[1], st[4], st[8], st[10]
    nb = count.shape[1]
    G = per_point.shape[0]
    for i in range(n):
        charged = 0
        g = 0
        while g < G and charged >= per_point[g]:
            kth_out[g, i] = kth_mean(st, scratch, i, k)
            g += 1
        stopped = False
        for j in range(nb):
            if g >= G:
                break
            if count[i, j] == 0:
                charged += sample(st, sess, sched, mon, i, j)
                while g < G and charged >= per_point[g]:
                    kth_out[g, i] = kth_mean(st, scratch, i, k)
                    g += 1
        if g < G:
            refresh_interval(st, mon, scratch, i, k)
        while g < G and not found[i]:
            c, bits = find_knn_step(st, sess, sched, mon, scratch, i, k)
            charged += c
            if found[i] and q_found[i] < 0:
                q_found[i] = charged
            if c == 0 and not found[i]:
                break
            while g < G and charged >= per_point[g]:
                kth_out[g, i] = kth_mean(st, scratch, i, k)
                g += 1
        pq_find[i] = charged
        while g < G:
            kth_out[g, i] = kth_mean(st, scratch, i, k)
            g += 1


@njit(cache=True)
def random_sampling(st, sess, sched, mon, scratch, k, per_point, kth_out):
    """Random Sampling baseline with the same snapshot layout as naive_plus."""
    n = st[0].shape[0]
    exact, pq_direct = st[3], st[9]
    nb = exact.shape[1]
    draws, cfg = sess[3], sess[6]
    G = per_point.shape[0]
    for i in range(n):
        charged = 0
        g = 0
        while g < G and charged >= per_point[g]:
            kth_out[g, i] = kth_mean(st, scratch, i, k)
            g += 1
        n_exact = 0
        for j in range(nb):
            if exact[i, j]:
                n_exact += 1
        while g < G and n_exact < nb:
            t = draws[i, i]
            draws[i, i] = t + 1
            j = int(stream_uniform(cfg[2], i, i, t, 0) * nb)
            if j >= nb:
                j = nb - 1
            was_exact = exact[i, j]
            charged += sample(st, sess, sched, mon, i, j)
            if exact[i, j] and not was_exact:
                n_exact += 1
            while g < G and charged >= per_point[g]:
                kth_out[g, i] = kth_mean(st, scratch, i, k)
                g += 1
        pq_direct[i] = charged
        while g < G:
            kth_out[g, i] = kth_mean(st, scratch, i, k)
            g += 1
