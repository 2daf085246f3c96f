"""Time the compiled and pure-Python DP kernels on random score matrices.

    python3 benchmarks/bench_dp.py --states 8 32 128 --frames 500 --repeat 5
"""

import argparse
import json
import timeit

import numpy as np

from robusthmm import _core


def _problem(rng, s, n):
    init = np.log(rng.dirichlet(np.ones(s)))
    trans = np.log(rng.dirichlet(np.ones(s), size=s))
    emit = rng.normal(-5.0, 2.0, (n, s))
    return init, trans, emit


def bench(states, frames, repeat, seed=0):
    rng = np.random.default_rng(seed)
    rows = []
    for s in states:
        init, trans, emit = _problem(rng, s, frames)
        kernels = {
            "viterbi": lambda: _core.viterbi(init, trans, emit),
            "forward": lambda: _core.forward_matrix(init, trans, emit),
            "backward": lambda: _core.backward_matrix(trans, emit),
        }
        for name, fn in kernels.items():
            row = {"kernel": name, "states": s, "frames": frames}
            outputs = {}
            for backend in _core.available_backends():
                prev = _core.use_backend(backend)
                try:
                    outputs[backend] = fn()
                    row[backend] = min(timeit.repeat(fn, number=1, repeat=repeat))
                finally:
                    _core.use_backend(prev)
            if len(outputs) == 2:
                a, b = outputs["compiled"], outputs["python"]
                if name == "viterbi":
                    assert np.array_equal(a[0], b[0]) and a[1] == b[1]
                else:
                    assert np.allclose(a, b, rtol=1e-12, atol=1e-12)
                row["speedup"] = row["python"] / row["compiled"]
            rows.append(row)
    return rows


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--states", type=int, nargs="+", default=[4, 16, 64, 256])
    ap.add_argument("--frames", type=int, default=1000)
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--json", help="also write the table to this file")
    args = ap.parse_args()

    rows = bench(args.states, args.frames, args.repeat)
    print(f"backends: {', '.join(_core.available_backends())}")
    print(f"{'kernel':9s} {'S':>5s} {'N':>6s} {'compiled ms':>12s} {'python ms':>10s} {'speedup':>8s}")
    for r in rows:
        c = f"{1e3 * r['compiled']:12.3f}" if "compiled" in r else f"{'-':>12s}"
        sp = f"{r['speedup']:8.1f}" if "speedup" in r else f"{'-':>8s}"
        print(f"{r['kernel']:9s} {r['states']:5d} {r['frames']:6d} {c} {1e3 * r['python']:10.3f} {sp}")
    if args.json:
        with open(args.json, "w") as fh:
            json.dump(rows, fh, indent=2)


if __name__ == "__main__":
    main()
