"""Throughput of the cache-simulation kernel, compiled vs plain Python.

Each backend runs in its own interpreter because the choice is made at
import time. Usage::

    python3 benchmarks/bench_kernels.py [--events N] [--python-events N]
"""

import argparse
import json
import os
import subprocess
import sys

WORKER = r"""
import json, sys, time, warnings
from retention_lab import _jit
from retention_lab.cachesim import simulate
from retention_lab.profiles import STT_10US
from retention_lab.trace import SyntheticParams, generate_synthetic

n = int(sys.argv[1])
with warnings.catch_warnings():
    warnings.simplefilter("ignore")
    w = generate_synthetic(SyntheticParams(256, 0.3, 8000.0, 0.01, n, 4.0, seed=7))
small = generate_synthetic(SyntheticParams(64, 0.3, 8000.0, 0.01, 100, 4.0, seed=1))
t0 = time.perf_counter()
simulate(small, profile=STT_10US)  # compile or load from cache
warm = time.perf_counter() - t0
t0 = time.perf_counter()
s = simulate(w, profile=STT_10US)
dt = time.perf_counter() - t0
print(json.dumps({"backend": _jit.backend_name(), "events": n, "seconds": dt,
                  "events_per_s": n / dt, "warmup_s": warm,
                  "misses": s.l1_misses, "expiries": s.expiry_evictions}))
"""


def run(events, disable):
    env = dict(os.environ)
    if disable:
        env["RETENTION_LAB_DISABLE_NUMBA"] = "1"
    else:
        env.pop("RETENTION_LAB_DISABLE_NUMBA", None)
    out = subprocess.run([sys.executable, "-c", WORKER, str(events)], env=env,
                         capture_output=True, text=True, check=True)
    return json.loads(out.stdout.strip().splitlines()[-1])


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--events", type=int, default=2_000_000)
    ap.add_argument("--python-events", type=int, default=50_000)
    args = ap.parse_args()
    fast = run(args.events, disable=False)
    slow = run(args.python_events, disable=True)
    # identical counters on a shared prefix size confirm the backends agree
    check_fast = run(args.python_events, disable=False)
    for r in (fast, slow):
        print(f"{r['backend']:>7}: {r['events']:>9} events in {r['seconds']:.3f}s "
              f"({r['events_per_s'] / 1e6:.2f} M events/s, warm-up {r['warmup_s']:.2f}s)")
    print(f"speedup: {fast['events_per_s'] / slow['events_per_s']:.0f}x")
    same = (check_fast["misses"], check_fast["expiries"]) == (slow["misses"], slow["expiries"])
    print(f"backends agree on {args.python_events} events: {same}")
    return 0 if same else 1


if __name__ == "__main__":
    sys.exit(main())
