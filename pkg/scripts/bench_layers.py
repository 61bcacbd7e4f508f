"""Naive vs integral-image wall clock for a sweep of sampling strides."""

import argparse

from wsnet.bench import bench_layer, format_bench
from wsnet.sampling import make_sampling_spec


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--T", type=int, default=100_000)
    ap.add_argument("--L", type=int, default=8)
    ap.add_argument("--N", type=int, default=256)
    ap.add_argument("--M", type=int, default=16)
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()

    rows = []
    S = 1
    while S <= args.L:
        spec = make_sampling_spec(args.L, args.N, S, 1, args.M)
        rows.append(bench_layer(spec, args.T, args.repeat, name=f"S={S}"))
        S *= 2
    print(format_bench(rows))


if __name__ == "__main__":
    main()
