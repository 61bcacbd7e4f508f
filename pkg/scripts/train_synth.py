"""Train the weight-sampled net and its conventional twin on synthetic tones
and print held-out accuracy over iterations."""

import argparse
import time
from importlib.resources import files

from wsnet.config import parse_config
from wsnet.data import split_holdout, synth_dataset
from wsnet.network import build_network
from wsnet.cost import network_report
from wsnet.train import train


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--per-class", type=int, default=200)
    ap.add_argument("--iters", type=int)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--fast", action="store_true")
    args = ap.parse_args()

    ds = synth_dataset(4, args.per_class, 4096, seed=args.seed)
    for name in ("synth_wsnet.cfg", "synth_baseline.cfg"):
        spec, hyper = parse_config(files("wsnet.configs").joinpath(name).read_text())
        if args.iters:
            hyper.iters = args.iters
        hyper.fast = args.fast
        train_set, held = split_holdout(ds, hyper.holdout, hyper.seed)
        net = build_network(spec, hyper)
        print(f"== {name}: {network_report(spec).params} params")
        start = time.perf_counter()
        result = train(net, train_set, hyper, held, print)
        print(f"final held-out acc {result.final_acc:.3f} in {time.perf_counter() - start:.1f}s\n")


if __name__ == "__main__":
    main()
