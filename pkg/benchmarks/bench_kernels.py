"""Compare the numba kernels with the pure-Python fallback.

Each mode runs in a fresh interpreter because ``ADMISSIM_DISABLE_JIT`` is
read at import time.  The JIT timings exclude compilation (one warm-up call
on a tiny input first).

    python benchmarks/bench_kernels.py --queries 20000
"""
import argparse
import json
import os
import subprocess
import sys
import textwrap

CHILD = textwrap.dedent("""
    import json, sys, time
    import numpy as np
    from admissim import _jit
    from admissim.core_types import Slo, SloTable, ms
    from admissim.engine import simulate, type_universe
    from admissim.histogram import BucketScheme, HistogramStore, hist_insert
    from admissim.policies import PolicySpec
    from admissim.sliding_window import SlidingWindowCounts, ring_add, ring_advance
    from admissim.workload import FromStats, QueryTypeSpec, WorkloadSpec, full_load_qps, generate

    n, repeat = int(sys.argv[1]), int(sys.argv[2])
    mix = [("fast", .4, 1.16, .38), ("medium fast", .2, 2.53, 2.22),
           ("medium slow", .3, 12.13, 7.40), ("slow", .1, 20.05, 12.51)]
    spec = WorkloadSpec(tuple(QueryTypeSpec(t, p, FromStats(m / 1e3, q / 1e3)) for t, p, m, q in mix), 1.0)
    slos = SloTable({"default": Slo(ms(18), ms(50))})

    def best(fn, *args):
        fn(*args)
        times = []
        for _ in range(repeat):
            t0 = time.perf_counter()
            fn(*args)
            times.append(time.perf_counter() - t0)
        return min(times)

    out = {"jit": _jit.JIT_ENABLED}
    for kind in ("bouncer", "bouncer_hu", "maxqwt", "accept_fraction"):
        pol = PolicySpec(kind, slos=slos)
        names = type_universe(pol, spec.type_names)
        w = generate(spec.with_rate(full_load_qps(spec, 100) * 1.5), n, 1, names)
        simulate(w, pol, 100, 1)  # compile / warm caches
        out[f"simulate[{kind}]"] = best(lambda: simulate(w, pol, 100, 1)) / n

    store = HistogramStore(1, BucketScheme())
    xs = np.random.default_rng(0).lognormal(15, 1, n).astype(np.int64)

    # drivers loop inside compiled code so the JIT timing excludes per-call dispatch
    # (no on-disk cache: this source has no file)
    driver = (lambda f: _jit.numba.njit(f)) if _jit.JIT_ENABLED else (lambda f: f)

    @driver
    def inserts_loop(counts, tally, xs, bounds):
        for x in xs:
            hist_insert(counts, tally, 0, 1, x, bounds)

    def inserts():
        inserts_loop(store.counts, store.tally, xs, store.bounds)
    out["hist_insert"] = best(inserts) / n

    sw = SlidingWindowCounts(["a", "b"])
    ts = np.cumsum(np.random.default_rng(1).integers(0, 200_000, n))

    @driver
    def window_loop(ring, totals, state, ts):
        for t in ts:
            ring_advance(ring, totals, state, t)
            ring_add(ring, totals, state, 1, 1)

    def window():
        window_loop(sw.ring, sw.totals, sw.state, ts)
    out["window_update"] = best(window) / n
    print(json.dumps(out))
""")


def run_mode(disable_jit: bool, queries: int, repeat: int) -> dict:
    env = dict(os.environ, ADMISSIM_DISABLE_JIT="1" if disable_jit else "0")
    res = subprocess.run([sys.executable, "-c", CHILD, str(queries), str(repeat)], env=env,
                         capture_output=True, text=True, check=True)
    return json.loads(res.stdout.strip().splitlines()[-1])


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--queries", type=int, default=20_000, help="events per benchmark")
    ap.add_argument("--repeat", type=int, default=3, help="timed repetitions (best is reported)")
    args = ap.parse_args(argv)

    jit = run_mode(False, args.queries, args.repeat)
    py = run_mode(True, args.queries, args.repeat)
    if not jit.pop("jit") or py.pop("jit"):
        sys.exit("could not switch JIT mode (is numba installed?)")
    print(f"{'benchmark':<28}{'numba us/event':>16}{'python us/event':>17}{'speedup':>10}")
    for key in jit:
        a, b = jit[key] * 1e6, py[key] * 1e6
        print(f"{key:<28}{a:>16.3f}{b:>17.3f}{b / a:>9.1f}x")


if __name__ == "__main__":
    main()
