"""Inner loops of the cache simulator.

Everything here works on flat numpy arrays so the same source runs under
``numba.njit`` or as plain Python (see ``_jit``). State layout:

``l1m``  int64  [cores, sets, ways, 4]   tag, valid, dirty, lru stamp
``l1t``  float64[cores, sets, ways, 2]   last write time (ns), last access time (ns)
``l2m``  int64  [sets2, ways2, 4]        tag, valid, dirty, lru stamp
``par``  float64[cores, NPAR]            per-core unit parameters
``clk``  float64[cores, NCLK]            per-core clocks
``st``   int64  [cores, NSTAT]           event counters
``fs``   float64[cores, NFS]             float accumulators
``hist`` int64  [cores, NBINS]           log-binned write reuse gaps
``tick`` int64  [1]                      shared LRU stamp source
"""

import math

from ._jit import njit

# l1m / l2m fields
TAG = 0
VALID = 1
DIRTY = 2
LRU = 3

# l1t fields
WTIME = 0
ATIME = 1

# par fields
P_THRESHOLD = 0  # expiry age in ns (inf = never)
P_QUANTUM = 1  # monitor sweep period in ns
P_WSTALL = 2  # extra cycles per store
P_CPI = 3
P_L2PEN = 4
P_MEMPEN = 5
P_FREQ_GHZ = 6
P_NOMINAL = 7  # 1.0 -> age by instruction clock
NPAR = 8

# clk fields
C_CYCLES = 0
C_NEXT_SWEEP = 1
C_PREV_HIT = 2
C_PREV_WRITE = 3
NCLK = 4

# st fields
S_INSTR = 0
S_READS = 1
S_WRITES = 2
S_READ_MISSES = 3
S_WRITE_MISSES = 4
S_WRITEBACKS = 5
S_EXPIRY_EVICT = 6
S_EXPIRY_WB = 7
S_L2_ACCESSES = 8
S_L2_MISSES = 9
S_L2_WRITEBACKS = 10
S_EVICTIONS = 11
S_WRITE_AFTER_WRITE = 12
S_HIT_RUNS = 13
S_WGAP_COUNT = 14
S_RGAP_COUNT = 15
S_STALL_CYCLES = 16
NSTAT = 17

# fs fields
F_WGAP_SUM = 0
F_RGAP_SUM = 1
F_MAX_HIT_AGE = 2
NFS = 3

# reuse-gap histogram: bin = floor(4 * log2(gap_ns + 1))
NBINS = 192
BIN_SCALE = 4.0

# outcome bits written per event
O_HIT = 1
O_EXPIRY = 2
O_WRITEBACK = 4


@njit(inline=True)
def gap_bin(gap_ns):
    b = int(BIN_SCALE * math.log2(gap_ns + 1.0))
    if b < 0:
        return 0
    if b >= NBINS:
        return NBINS - 1
    return b


@njit(inline=True)
def l2_read(line, l2m, st, c, tick):
    """Demand fill from L2. Returns 1 on an L2 miss."""
    nsets = l2m.shape[0]
    ways = l2m.shape[1]
    s = line % nsets
    st[c, S_L2_ACCESSES] += 1
    tick[0] += 1
    for w in range(ways):
        if l2m[s, w, VALID] == 1 and l2m[s, w, TAG] == line:
            l2m[s, w, LRU] = tick[0]
            return 0
    st[c, S_L2_MISSES] += 1
    v = _victim(l2m, s, ways)
    if l2m[s, v, VALID] == 1 and l2m[s, v, DIRTY] == 1:
        st[c, S_L2_WRITEBACKS] += 1
    l2m[s, v, TAG] = line
    l2m[s, v, VALID] = 1
    l2m[s, v, DIRTY] = 0
    l2m[s, v, LRU] = tick[0]
    return 1


@njit(inline=True)
def l2_write(line, l2m, st, c, tick):
    """Full-line writeback into L2; allocates on miss without a memory fetch."""
    nsets = l2m.shape[0]
    ways = l2m.shape[1]
    s = line % nsets
    st[c, S_L2_ACCESSES] += 1
    tick[0] += 1
    for w in range(ways):
        if l2m[s, w, VALID] == 1 and l2m[s, w, TAG] == line:
            l2m[s, w, DIRTY] = 1
            l2m[s, w, LRU] = tick[0]
            return
    v = _victim(l2m, s, ways)
    if l2m[s, v, VALID] == 1 and l2m[s, v, DIRTY] == 1:
        st[c, S_L2_WRITEBACKS] += 1
    l2m[s, v, TAG] = line
    l2m[s, v, VALID] = 1
    l2m[s, v, DIRTY] = 1
    l2m[s, v, LRU] = tick[0]


@njit(inline=True)
def _victim(meta, s, ways):
    # first invalid way, else least recently used
    best = -1
    for w in range(ways):
        if meta[s, w, VALID] == 0:
            return w
        if best < 0 or meta[s, w, LRU] < meta[s, best, LRU]:
            best = w
    return best


@njit(inline=True)
def expire_set(c, s, now, l1m, l1t, l2m, par, st, tick):
    """Invalidate every block in set ``s`` whose age reached the threshold."""
    thr = par[c, P_THRESHOLD]
    n = 0
    for w in range(l1m.shape[2]):
        if l1m[c, s, w, VALID] == 1 and now - l1t[c, s, w, WTIME] >= thr:
            l1m[c, s, w, VALID] = 0
            st[c, S_EXPIRY_EVICT] += 1
            n += 1
            if l1m[c, s, w, DIRTY] == 1:
                l1m[c, s, w, DIRTY] = 0
                st[c, S_EXPIRY_WB] += 1
                l2_write(l1m[c, s, w, TAG], l2m, st, c, tick)
    return n


@njit
def sweep_core(c, now, l1m, l1t, l2m, par, st, tick):
    n = 0
    for s in range(l1m.shape[1]):
        n += expire_set(c, s, now, l1m, l1t, l2m, par, st, tick)
    return n


@njit(inline=True)
def access(c, line, is_write, now, l1m, l1t, l2m, par, clk, st, fs, hist, tick):
    """One L1 reference at time ``now`` (ns).

    Returns (outcome bits, stall cycles beyond the base CPI).
    """
    nsets = l1m.shape[1]
    ways = l1m.shape[2]
    s = line % nsets
    outcome = 0
    wb_before = st[c, S_EXPIRY_WB]
    if expire_set(c, s, now, l1m, l1t, l2m, par, st, tick) > 0:
        outcome |= O_EXPIRY
        if st[c, S_EXPIRY_WB] > wb_before:
            outcome |= O_WRITEBACK

    tick[0] += 1
    stamp = tick[0]
    stall = 0.0
    if is_write:
        st[c, S_WRITES] += 1
        stall += par[c, P_WSTALL]
        if clk[c, C_PREV_WRITE] == 1.0:
            st[c, S_WRITE_AFTER_WRITE] += 1
        clk[c, C_PREV_WRITE] = 1.0
    else:
        st[c, S_READS] += 1
        clk[c, C_PREV_WRITE] = 0.0

    hit_way = -1
    for w in range(ways):
        if l1m[c, s, w, VALID] == 1 and l1m[c, s, w, TAG] == line:
            hit_way = w
            break

    if hit_way >= 0:
        w = hit_way
        age = now - l1t[c, s, w, WTIME]
        if age > fs[c, F_MAX_HIT_AGE]:
            fs[c, F_MAX_HIT_AGE] = age
        if is_write:
            fs[c, F_WGAP_SUM] += age
            st[c, S_WGAP_COUNT] += 1
            hist[c, gap_bin(age)] += 1
            l1t[c, s, w, WTIME] = now
            l1m[c, s, w, DIRTY] = 1
        else:
            fs[c, F_RGAP_SUM] += now - l1t[c, s, w, ATIME]
            st[c, S_RGAP_COUNT] += 1
        l1t[c, s, w, ATIME] = now
        l1m[c, s, w, LRU] = stamp
        if clk[c, C_PREV_HIT] == 0.0:
            st[c, S_HIT_RUNS] += 1
        clk[c, C_PREV_HIT] = 1.0
        outcome |= O_HIT
    else:
        clk[c, C_PREV_HIT] = 0.0
        if is_write:
            st[c, S_WRITE_MISSES] += 1
        else:
            st[c, S_READ_MISSES] += 1
        stall += par[c, P_L2PEN]
        v = -1
        for w in range(ways):
            if l1m[c, s, w, VALID] == 0:
                v = w
                break
        if v < 0:
            v = 0
            for w in range(1, ways):
                if l1m[c, s, w, LRU] < l1m[c, s, v, LRU]:
                    v = w
            st[c, S_EVICTIONS] += 1
            if l1m[c, s, v, DIRTY] == 1:
                st[c, S_WRITEBACKS] += 1
                outcome |= O_WRITEBACK
                l2_write(l1m[c, s, v, TAG], l2m, st, c, tick)
        if l2_read(line, l2m, st, c, tick) == 1:
            stall += par[c, P_MEMPEN]
        l1m[c, s, v, TAG] = line
        l1m[c, s, v, VALID] = 1
        l1m[c, s, v, DIRTY] = 1 if is_write else 0
        l1m[c, s, v, LRU] = stamp
        l1t[c, s, v, WTIME] = now
        l1t[c, s, v, ATIME] = now
    return outcome, stall


@njit(inline=True)
def current_time(c, clk, par, st):
    if par[c, P_NOMINAL] == 1.0:
        return st[c, S_INSTR] * par[c, P_CPI] / par[c, P_FREQ_GHZ]
    return clk[c, C_CYCLES] / par[c, P_FREQ_GHZ]


@njit
def run_events(lines, kinds, gaps, cores, start, stop, core_stop,
               l1m, l1t, l2m, par, clk, st, fs, hist, tick, outcomes):
    """Process events ``start..stop`` in order.

    Stops early right after the event that brings its core's instruction
    count to ``core_stop[core]``. Returns (next index, core that stopped or -1).
    ``outcomes`` may be empty; otherwise it receives per-event outcome bits.
    """
    record = outcomes.shape[0] > 0
    for i in range(start, stop):
        c = cores[i]
        k = gaps[i] + 1
        st[c, S_INSTR] += k
        clk[c, C_CYCLES] += k * par[c, P_CPI]
        now = current_time(c, clk, par, st)
        if now >= clk[c, C_NEXT_SWEEP]:
            sweep_core(c, now, l1m, l1t, l2m, par, st, tick)
            q = par[c, P_QUANTUM]
            clk[c, C_NEXT_SWEEP] = (math.floor(now / q) + 1.0) * q
        out, stall = access(c, lines[i], kinds[i] == 1, now,
                            l1m, l1t, l2m, par, clk, st, fs, hist, tick)
        clk[c, C_CYCLES] += stall
        st[c, S_STALL_CYCLES] += int(stall)
        if record:
            outcomes[i] = out
        if st[c, S_INSTR] >= core_stop[c]:
            return i + 1, c
    return stop, -1


@njit
def retarget(c, now, l1m, l1t):
    """Transfer a core's L1 contents to another retention unit at ``now``.

    The target array is written during the transfer, so every resident block
    restarts its retention clock.
    """
    for s in range(l1m.shape[1]):
        for w in range(l1m.shape[2]):
            if l1m[c, s, w, VALID] == 1:
                l1t[c, s, w, WTIME] = now


@njit
def squared_distances(train, query, out):
    n = train.shape[0]
    d = train.shape[1]
    for i in range(n):
        acc = 0.0
        for j in range(d):
            diff = train[i, j] - query[j]
            acc += diff * diff
        out[i] = acc
