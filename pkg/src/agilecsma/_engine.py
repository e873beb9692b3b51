"""Compiled event loop for the frequency-agile CSMA simulator.

Timer ``(i, f)`` counts down only while link ``i`` is not on ``f``, no
neighbor of ``i`` is on ``f`` and ``i`` holds fewer than ``k`` channels.  A
running timer stores its absolute expiry; a frozen one stores what is left.
"""

import numpy as np
from numba import njit

EXPONENTIAL = 0
DETERMINISTIC = 1
UNIFORM = 2

NO_EVENT = np.inf


@njit(cache=True)
def _sample(kind, mean):
    if kind == EXPONENTIAL:
        return np.random.exponential(mean)
    if kind == DETERMINISTIC:
        return mean
    return np.random.uniform(0.0, 2.0 * mean)


@njit(cache=True)
def _sample_residual(kind, mean):
    # forward-recurrence law of the countdown, used for a stationary start
    if kind == EXPONENTIAL:
        return np.random.exponential(mean)
    if kind == DETERMINISTIC:
        return np.random.uniform(0.0, mean)
    u = np.random.random()
    return 2.0 * mean * (1.0 - np.sqrt(1.0 - u))


@njit(cache=True)
def _add_batched(acc, row, a, b, warmup, horizon, batch_len, n_batches):
    """Add the overlap of ``[a, b]`` with each batch window to ``acc[:, row]``."""
    if a < warmup:
        a = warmup
    if b > horizon:
        b = horizon
    if b <= a:
        return
    j = int((a - warmup) / batch_len)
    while j < n_batches and a < b:
        end = warmup + (j + 1) * batch_len
        if j == n_batches - 1:
            end = horizon
        seg = min(b, end) - a
        if seg > 0:
            acc[j, row] += seg
        a = end
        j += 1


@njit(cache=True)
def _is_running(i, f, active, busy_nbr, nactive, k):
    return (not active[i, f]) and busy_nbr[i, f] == 0 and nactive[i] < k


@njit(cache=True)
def _refresh(i, f, t, running, expiry, remaining, active, busy_nbr, nactive, k):
    now = _is_running(i, f, active, busy_nbr, nactive, k)
    if now and not running[i, f]:
        expiry[i, f] = t + remaining[i, f]
        running[i, f] = True
    elif running[i, f] and not now:
        r = expiry[i, f] - t
        remaining[i, f] = r if r > 0.0 else 0.0
        running[i, f] = False


@njit(cache=True)
def run(
    n, q, k, indptr, indices,
    cd_kind, cd_mean, tr_kind, tr_mean,
    horizon, warmup, n_batches, seed,
    mask_to_code, n_codes, track_states,
    record_trace, record_samples,
):
    np.random.seed(seed)
    batch_len = (horizon - warmup) / n_batches

    active = np.zeros((n, q), dtype=np.bool_)
    running = np.zeros((n, q), dtype=np.bool_)
    busy_nbr = np.zeros((n, q), dtype=np.int64)
    nactive = np.zeros(n, dtype=np.int64)
    link_mask = np.zeros(n, dtype=np.int64)
    expiry = np.full((n, q), NO_EVENT)
    remaining = np.zeros((n, q))
    tx_start = np.zeros((n, q))
    tx_end = np.full((n, q), NO_EVENT)
    on_since = np.zeros(n)
    last_start = np.full(n, -1.0)

    airtime = np.zeros((n_batches, n))
    chan_time = np.zeros(n)
    n_starts = np.zeros(n, dtype=np.int64)
    y_count = np.zeros(n, dtype=np.int64)
    y_sum = np.zeros(n)
    y_sumsq = np.zeros(n)

    occ = np.zeros((n_batches if track_states else 1, n_codes if track_states else 1))
    radix = np.ones(n, dtype=np.int64)
    if track_states:
        for i in range(1, n):
            radix[i] = radix[i - 1] * n_codes_per_link(mask_to_code)
    code = 0
    code_since = 0.0

    cap = 1024
    tr_link = np.empty(cap if record_trace else 0, dtype=np.int64)
    tr_chan = np.empty(cap if record_trace else 0, dtype=np.int64)
    tr_a = np.empty(cap if record_trace else 0)
    tr_b = np.empty(cap if record_trace else 0)
    n_tr = 0
    s_cap = 1024
    smp_link = np.empty(s_cap if record_samples else 0, dtype=np.int64)
    smp_val = np.empty(s_cap if record_samples else 0)
    n_smp = 0

    for i in range(n):
        for f in range(q):
            remaining[i, f] = _sample_residual(cd_kind, cd_mean)
            expiry[i, f] = remaining[i, f]
            running[i, f] = True

    t = 0.0
    n_events = 0
    while True:
        # earliest completion, then earliest expiry; scan order breaks ties
        best_end = NO_EVENT
        ei = -1
        ef = -1
        best_exp = NO_EVENT
        xi = -1
        xf = -1
        for i in range(n):
            for f in range(q):
                if active[i, f]:
                    if tx_end[i, f] < best_end:
                        best_end = tx_end[i, f]
                        ei = i
                        ef = f
                elif running[i, f]:
                    if expiry[i, f] < best_exp:
                        best_exp = expiry[i, f]
                        xi = i
                        xf = f
        t_next = best_end if best_end <= best_exp else best_exp
        if t_next > horizon:
            break
        if t_next < t:
            t_next = t
        t = t_next
        n_events += 1

        if best_end <= best_exp:
            i = ei
            f = ef
            active[i, f] = False
            tx_end[i, f] = NO_EVENT
            a = tx_start[i, f]
            lo = a if a > warmup else warmup
            if t > lo:
                chan_time[i] += t - lo
            if record_trace:
                if n_tr == len(tr_a):
                    tr_link = _grow_i(tr_link)
                    tr_chan = _grow_i(tr_chan)
                    tr_a = _grow_f(tr_a)
                    tr_b = _grow_f(tr_b)
                tr_link[n_tr] = i
                tr_chan[n_tr] = f
                tr_a[n_tr] = a
                tr_b[n_tr] = t
                n_tr += 1
            nactive[i] -= 1
            if nactive[i] == 0:
                _add_batched(airtime, i, on_since[i], t, warmup, horizon, batch_len, n_batches)
            remaining[i, f] = _sample(cd_kind, cd_mean)
            running[i, f] = False
            new_mask = link_mask[i] & ~(1 << f)
            for p in range(indptr[i], indptr[i + 1]):
                j = indices[p]
                busy_nbr[j, f] -= 1
                _refresh(j, f, t, running, expiry, remaining, active, busy_nbr, nactive, k)
            for g in range(q):
                _refresh(i, g, t, running, expiry, remaining, active, busy_nbr, nactive, k)
        else:
            i = xi
            f = xf
            running[i, f] = False
            remaining[i, f] = 0.0
            active[i, f] = True
            tx_start[i, f] = t
            tx_end[i, f] = t + _sample(tr_kind, tr_mean)
            if nactive[i] == 0:
                on_since[i] = t
            nactive[i] += 1
            n_starts[i] += 1
            if last_start[i] >= warmup:
                y = t - last_start[i]
                y_count[i] += 1
                y_sum[i] += y
                y_sumsq[i] += y * y
                if record_samples:
                    if n_smp == len(smp_val):
                        smp_link = _grow_i(smp_link)
                        smp_val = _grow_f(smp_val)
                    smp_link[n_smp] = i
                    smp_val[n_smp] = y
                    n_smp += 1
            last_start[i] = t
            new_mask = link_mask[i] | (1 << f)
            for p in range(indptr[i], indptr[i + 1]):
                j = indices[p]
                busy_nbr[j, f] += 1
                _refresh(j, f, t, running, expiry, remaining, active, busy_nbr, nactive, k)
            for g in range(q):
                _refresh(i, g, t, running, expiry, remaining, active, busy_nbr, nactive, k)

        if track_states:
            _add_batched(occ, code, code_since, t, warmup, horizon, batch_len, n_batches)
            code += (mask_to_code[new_mask] - mask_to_code[link_mask[i]]) * radix[i]
            code_since = t
        link_mask[i] = new_mask

    # flush intervals still open at the horizon
    for i in range(n):
        if nactive[i] > 0:
            _add_batched(airtime, i, on_since[i], horizon, warmup, horizon, batch_len, n_batches)
        for f in range(q):
            if active[i, f]:
                lo = tx_start[i, f] if tx_start[i, f] > warmup else warmup
                chan_time[i] += horizon - lo
                if record_trace:
                    if n_tr == len(tr_a):
                        tr_link = _grow_i(tr_link)
                        tr_chan = _grow_i(tr_chan)
                        tr_a = _grow_f(tr_a)
                        tr_b = _grow_f(tr_b)
                    tr_link[n_tr] = i
                    tr_chan[n_tr] = f
                    tr_a[n_tr] = tx_start[i, f]
                    tr_b[n_tr] = horizon
                    n_tr += 1
    if track_states:
        _add_batched(occ, code, code_since, horizon, warmup, horizon, batch_len, n_batches)

    return (
        airtime, chan_time, n_starts, y_count, y_sum, y_sumsq, occ,
        tr_link[:n_tr], tr_chan[:n_tr], tr_a[:n_tr], tr_b[:n_tr],
        smp_link[:n_smp], smp_val[:n_smp], n_events,
    )


@njit(cache=True)
def n_codes_per_link(mask_to_code):
    m = 0
    for c in mask_to_code:
        if c + 1 > m:
            m = c + 1
    return m


@njit(cache=True)
def _grow_i(a):
    b = np.empty(2 * len(a), dtype=a.dtype)
    b[: len(a)] = a
    return b


@njit(cache=True)
def _grow_f(a):
    b = np.empty(2 * len(a))
    b[: len(a)] = a
    return b
