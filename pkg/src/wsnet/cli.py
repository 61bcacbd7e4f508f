"""``wsnet`` command-line entry point.

Exit codes: 0 success, 1 usage error, 2 validation error, 3 runtime failure.
"""

from __future__ import annotations

import argparse
import sys
from dataclasses import replace
from importlib.resources import files
from pathlib import Path

from . import bench, cost, verify
from .config import ConfigError, parse_config
from .data import DatasetError, load_dataset, save_dataset, split_holdout, synth_dataset
from .network import build_network
from .quant import QuantizationError
from .sampling import SamplingError
from .serialize import (ModelFormatError, encode_blocks, load_blocks,
                        network_from_blocks, quantize_blocks, save_model)
from .train import TrainingDiverged, accuracy, train

EXIT_OK, EXIT_USAGE, EXIT_INVALID, EXIT_RUNTIME = 0, 1, 2, 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def _existing(path: str) -> Path:
    p = Path(path)
    if not p.is_file():
        raise UsageError(f"no such file: {path}")
    return p


def _config_path(name: str) -> Path:
    """A path on disk, else a config shipped with the package."""
    p = Path(name)
    if p.is_file():
        return p
    shipped = files("wsnet.configs").joinpath(name if name.endswith(".cfg") else name + ".cfg")
    if shipped.is_file():
        return Path(str(shipped))
    raise UsageError(f"no such config: {name}")


def _load_config(name: str):
    return parse_config(_config_path(name).read_text(encoding="utf-8"))


def cmd_cost(args) -> int:
    spec, _ = _load_config(args.config)
    if args.setting:
        try:
            cmp = cost.compare_setting(spec, args.setting, args.input_len, args.quantized)
        except KeyError as exc:
            raise UsageError(exc.args[0]) from None
        report = cmp.model
        extra = cost.total_ratio_note(cmp)
    else:
        report = cost.network_report(spec, args.input_len)
        extra = []
    if args.csv:
        sys.stdout.write(cost.report_csv(report))
    else:
        print(cost.report_table(report))
    for line in extra:
        print(line)
    if report.notes:
        # keep CSV output machine-readable
        print(cost.format_notes(report.notes), file=sys.stderr if args.csv else sys.stdout)
    return EXIT_OK


def cmd_train(args) -> int:
    spec, hyper = _load_config(args.config)
    ds = load_dataset(_existing(args.dataset))
    overrides = {"seed": args.seed}
    if args.iters is not None:
        overrides["iters"] = args.iters
    if args.fast:
        overrides["fast"] = True
    hyper = replace(hyper, **overrides)
    hyper.validate()
    train_set, eval_set = split_holdout(ds, hyper.holdout, hyper.seed) if hyper.holdout else (ds, None)
    net = build_network(spec, hyper)
    log_path = Path(args.log) if args.log else Path(str(args.out) + ".log")
    with open(log_path, "w", encoding="utf-8") as log:
        def emit(line):
            print(line)
            log.write(line + "\n")
        result = train(net, train_set, hyper, eval_set, emit)
    save_model(net, args.out)
    print(f"wrote {args.out} ({result.seconds:.1f}s)")
    return EXIT_OK


def cmd_eval(args) -> int:
    net = network_from_blocks(load_blocks(_existing(args.model)))
    ds = load_dataset(_existing(args.dataset))
    acc = accuracy(net, ds)
    print(f"acc={acc:.6f} n={len(ds)}")
    return EXIT_OK


def cmd_verify(args) -> int:
    if args.trials < 1:
        raise UsageError("--trials must be >= 1")
    grad_trials = args.grad_trials if args.grad_trials is not None else min(args.trials, 20)
    ok = True
    suites = [("fast/naive", verify.fast_naive_suite(args.trials, args.seed), verify.FAST_TOL),
              ("counters", verify.counter_suite(args.trials, args.seed), 0),
              ("gradients", verify.gradient_suite(grad_trials, args.seed), verify.GRAD_TOL)]
    for name, results, tol in suites:
        for i, r in enumerate(results):
            # every fast/naive trial is listed; other suites only on failure
            if args.verbose or not r.passed or name == "fast/naive":
                status = "ok" if r.passed else "FAIL"
                print(f"{name} trial {i}: max_abs={r.max_abs:.3e} max_rel={r.max_rel:.3e} {status}  {r.desc}")
        worst = max(results, key=lambda r: r.max_rel)
        passed = all(r.passed for r in results)
        ok &= passed
        print(f"{name}: {len(results)} trials, worst max_abs={worst.max_abs:.3e} "
              f"max_rel={worst.max_rel:.3e} (tol {tol:g}) {'PASS' if passed else 'FAIL'}")
    return EXIT_OK if ok else EXIT_RUNTIME


def cmd_bench(args) -> int:
    spec, _ = _load_config(args.config)
    if args.repeat < 1:
        raise UsageError("--repeat must be >= 1")
    print(bench.format_bench(bench.bench_network(spec, args.input_len, args.repeat, args.seed)))
    return EXIT_OK


def cmd_quantize(args) -> int:
    blocks = load_blocks(_existing(args.model))
    quantized = quantize_blocks(blocks)
    raw_float = encode_blocks(blocks)
    raw_quant = encode_blocks(quantized)
    Path(args.out).write_bytes(raw_quant)
    print(f"size ratio {len(raw_float) / len(raw_quant):.3f}x "
          f"({len(raw_float)} -> {len(raw_quant)} bytes)")
    return EXIT_OK


def cmd_synth(args) -> int:
    ds = synth_dataset(args.classes, args.per_class, args.len, args.seed)
    save_dataset(ds, args.out)
    print(f"wrote {args.out}: {len(ds)} clips, T={ds.length}, {ds.num_classes} classes")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="wsnet", description="Weight-sampled 1D conv nets: cost, training, checks.")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    c = sub.add_parser("cost", help="parameter and multiply-add report")
    c.add_argument("config")
    c.add_argument("--input-len", type=int)
    c.add_argument("--csv", action="store_true")
    c.add_argument("--setting", help=f"compactness setting: {', '.join(cost.COMPACTNESS_SETTINGS)}")
    c.add_argument("--quantized", action="store_true", help="size ratio against 8-bit weights")
    c.set_defaults(func=cmd_cost)

    t = sub.add_parser("train", help="train a network on a WSDS0001 dataset")
    t.add_argument("config")
    t.add_argument("dataset")
    t.add_argument("--out", required=True)
    t.add_argument("--seed", type=int, default=0)
    t.add_argument("--iters", type=int)
    t.add_argument("--log")
    t.add_argument("--fast", action="store_true", help="integral-image forward pass")
    t.set_defaults(func=cmd_train)

    e = sub.add_parser("eval", help="accuracy of a model on a dataset")
    e.add_argument("model")
    e.add_argument("dataset")
    e.set_defaults(func=cmd_eval)

    v = sub.add_parser("verify", help="fast/naive, counter and gradient self-checks")
    v.add_argument("--trials", type=int, default=200)
    v.add_argument("--grad-trials", type=int)
    v.add_argument("--seed", type=int, default=0)
    v.add_argument("--verbose", action="store_true")
    v.set_defaults(func=cmd_verify)

    b = sub.add_parser("bench", help="wall-clock naive vs fast per conv layer")
    b.add_argument("config")
    b.add_argument("--input-len", type=int)
    b.add_argument("--repeat", type=int, default=5)
    b.add_argument("--seed", type=int, default=0)
    b.set_defaults(func=cmd_bench)

    q = sub.add_parser("quantize", help="8-bit quantize a model file")
    q.add_argument("model")
    q.add_argument("--out", required=True)
    q.set_defaults(func=cmd_quantize)

    s = sub.add_parser("synth", help="write a synthetic tone dataset")
    s.add_argument("--classes", type=int, default=4)
    s.add_argument("--per-class", type=int, default=200)
    s.add_argument("--len", type=int, default=4096)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_synth)
    return p


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
        return args.func(args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (ConfigError, DatasetError, ModelFormatError, SamplingError, QuantizationError,
            ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except (TrainingDiverged, RuntimeError, MemoryError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
