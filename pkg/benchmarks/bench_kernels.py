"""Time the hot kernels compiled with numba against the interpreted fallback.

Each backend runs in its own interpreter because the flag is read at import:

    python benchmarks/bench_kernels.py            # both backends, table
    python benchmarks/bench_kernels.py --child    # one backend, JSON (internal)
"""

import argparse
import json
import os
import subprocess
import sys
import time

import numpy as np


def _best_of(fn, repeat):
    fn()  # warm-up (includes compilation for numba)
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)


def child(repeat):
    from leopard import NUMBA_ENABLED, _kernels
    from leopard.env import EnvSpec, ground_truth_reward_table

    spec = EnvSpec("cliff_walking", 48)
    nxt = np.ascontiguousarray(spec.tables[0])
    table = np.ascontiguousarray(np.broadcast_to(ground_truth_reward_table(spec), (48, 48, 4)))
    rng = np.random.default_rng(0)
    n_ep = 100
    uniforms = rng.random(n_ep * 48)
    actions = rng.integers(0, 4, size=(n_ep, 48))

    def q_learning():
        q = np.zeros((48, 4))
        s = np.zeros((n_ep, 49), dtype=np.int64)
        a = np.zeros((n_ep, 48), dtype=np.int64)
        _kernels.q_learning_episodes(q, table, nxt, spec.start, 48, n_ep, 0.1, 0.99, 1.0, 0.1, uniforms, s, a)

    def rollouts():
        s = np.zeros((n_ep, 49), dtype=np.int64)
        _kernels.random_episodes(nxt, spec.start, 48, actions, s)

    z = rng.standard_normal(40)
    pred = np.triu(rng.random((40, 40)) < 0.3, 1)
    w = np.ones(40)

    def choice():
        for _ in range(50):
            _kernels.choice_terms(z, pred, w)

    out = {"numba": NUMBA_ENABLED}
    for name, fn in (("q_learning_100_episodes", q_learning), ("random_rollouts_100", rollouts), ("choice_terms_50x40", choice)):
        out[name] = _best_of(fn, repeat)
    print(json.dumps(out))


def run_backend(disable, repeat):
    env = dict(os.environ, LEOPARD_DISABLE_NUMBA="1" if disable else "0")
    res = subprocess.run([sys.executable, __file__, "--child", "--repeat", str(repeat)],
                         env=env, capture_output=True, text=True, check=True)
    return json.loads(res.stdout.strip().splitlines()[-1])


def main():
    p = argparse.ArgumentParser()
    p.add_argument("--child", action="store_true")
    p.add_argument("--repeat", type=int, default=5)
    args = p.parse_args()
    if args.child:
        child(args.repeat)
        return
    jit = run_backend(False, args.repeat)
    py = run_backend(True, args.repeat)
    if not jit.pop("numba"):
        print("numba unavailable; both columns are the fallback")
    py.pop("numba")
    print(f"{'kernel':<26}{'numba (ms)':>12}{'fallback (ms)':>15}{'speedup':>10}")
    for k in jit:
        print(f"{k:<26}{1e3 * jit[k]:>12.3f}{1e3 * py[k]:>15.2f}{py[k] / jit[k]:>9.0f}x")


if __name__ == "__main__":
    main()
