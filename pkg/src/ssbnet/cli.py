"""``ssb`` command line: train, eval, bench, flops, visualize.

Exit status: 0 success, 1 usage or configuration error, 2 data or I/O
error, 3 numeric failure.  Errors print one line on stderr.
"""

from __future__ import annotations

import argparse
import os
import sys
from pathlib import Path

import numpy as np
from threadpoolctl import threadpool_limits

from .errors import ConfigError, DataError, NumericError, SSBError

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 1, 2, 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def _grid_item(text: str) -> tuple[int, int, int]:
    try:
        h, r, d = (int(v) for v in text.split(":"))
    except ValueError:
        raise argparse.ArgumentTypeError(f"grid entries are H_in:H_r:D, got {text!r}") from None
    if not (1 <= r <= h and d >= 1):
        raise argparse.ArgumentTypeError(f"grid entry {text!r} needs 1 <= H_r <= H_in and D >= 1")
    return h, r, d


def _threads(value: str) -> int:
    try:
        n = int(value)
    except ValueError:
        raise argparse.ArgumentTypeError(f"thread count must be an integer, got {value!r}") from None
    if n < 1:
        raise argparse.ArgumentTypeError("thread count must be >= 1")
    return n


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="ssb", description="Saliency sampling bottleneck networks: training and tooling.")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(sp, config_required):
        sp.add_argument("--config", required=config_required, help="JSON run configuration")
        sp.add_argument("--seed", type=int, help="override the config seed")
        sp.add_argument("--threads", type=_threads, help="BLAS thread count (default: $SSB_THREADS or 1)")

    t = sub.add_parser("train", help="train a network and write checkpoint + metrics.csv")
    common(t, True)
    t.add_argument("--out", help="override the config output directory")

    e = sub.add_parser("eval", help="top-1 accuracy on the test batch")
    common(e, True)
    e.add_argument("--checkpoint", help="checkpoint to evaluate (default: a freshly initialized network)")

    b = sub.add_parser("bench", help="dense vs sparse sampler timing")
    b.add_argument("--grid", type=_grid_item, action="append", help="H_in:H_r:D, repeatable")
    b.add_argument("--reps", type=int, default=20)
    b.add_argument("--warmup", type=int, default=3)
    b.add_argument("--seed", type=int, default=0)
    b.add_argument("--threads", type=_threads)
    b.add_argument("--csv", help="write the CSV here instead of stdout")

    f = sub.add_parser("flops", help="per-layer MAC/FLOP/parameter report")
    f.add_argument("spec", help="micro, resnet-d-50, ssb-resnet-d-50, ...")
    f.add_argument("size", type=int, help="input resolution")
    f.add_argument("convention", choices=("1xmac", "2xmac"))
    f.add_argument("--sampler-mode", choices=("dense", "sparse"), default="dense")
    f.add_argument("--csv", help="also write the layer table as CSV")

    v = sub.add_parser("visualize", help="write saliency / resized / sampled images for one layer")
    common(v, False)
    v.add_argument("--checkpoint", help="trained weights (default: a freshly initialized network)")
    v.add_argument("--image", required=True, help="input image, binary PPM (P6)")
    v.add_argument("--layer", required=True, help="sampled layer selector, e.g. 3-2")
    v.add_argument("--out", required=True, help="output directory")
    return p


def _resolve_threads(arg: int | None) -> int:
    if arg is not None:
        return arg
    env = os.environ.get("SSB_THREADS")
    if env is None:
        return 1
    try:
        return _threads(env)
    except argparse.ArgumentTypeError as exc:
        raise UsageError(f"SSB_THREADS: {exc}") from None


def _load_config(args):
    from .harness.config import RunConfig

    cfg = RunConfig.load(args.config)
    if args.seed is not None:
        if args.seed < 0:
            raise ConfigError("--seed must be nonnegative")
        cfg.seed = args.seed
    if getattr(args, "out", None) and args.command == "train":
        cfg.out = args.out
    return cfg


def _cmd_train(args, threads):
    from .harness.train import train

    cfg = _load_config(args)
    result = train(cfg, threads=threads, log=print)
    print(f"checkpoint: {result.checkpoint}")
    print(f"metrics: {result.metrics_path}")


def _cmd_eval(args, threads):
    from .harness.train import evaluate_checkpoint

    cfg = _load_config(args)
    acc = evaluate_checkpoint(cfg, args.checkpoint)
    print(f"top1 {acc!r}")


def _cmd_bench(args, threads):
    from .harness.bench import DEFAULT_GRID, run_bench, to_csv

    if args.reps < 1 or args.warmup < 0:
        raise UsageError("bench: --reps must be >= 1 and --warmup >= 0")
    text = to_csv(run_bench(args.grid or DEFAULT_GRID, args.reps, args.warmup, args.seed))
    if args.csv:
        Path(args.csv).write_text(text)
    sys.stdout.write(text)


def _cmd_flops(args, threads):
    from .flops import count
    from .network import spec_by_name

    if args.size < 1:
        raise UsageError("flops: input size must be positive")
    report = count(spec_by_name(args.spec, args.size), args.size, args.convention, args.sampler_mode)
    print(report.format_table())
    if args.csv:
        Path(args.csv).write_text(report.to_csv())


def _cmd_visualize(args, threads):
    from .harness.netpbm import read_netpbm
    from .harness.train import restore_network
    from .harness.visualize import visualize, write_visualization
    from .network import build_network, micro_spec

    image = read_netpbm(args.image)
    if image.ndim != 3:
        raise DataError(f"{args.image}: expected a color PPM (P6)")
    if args.config:
        cfg = _load_config(args)
        net = restore_network(cfg, args.checkpoint) if args.checkpoint else build_network(cfg.network_spec(), cfg.seed)
    else:
        from .checkpoint import load_checkpoint

        net = build_network(micro_spec(), args.seed or 0)
        if args.checkpoint:
            net.load_state_dict(load_checkpoint(args.checkpoint).tensors)
    paths = write_visualization(visualize(net, image, args.layer), args.out)
    for key, path in paths.items():
        print(f"{key}: {path}")


COMMANDS = {
    "train": _cmd_train,
    "eval": _cmd_eval,
    "bench": _cmd_bench,
    "flops": _cmd_flops,
    "visualize": _cmd_visualize,
}


def _fail(code: int, message: str) -> int:
    print(f"ssb: error: {' '.join(str(message).split())}", file=sys.stderr)
    return code


def main(argv: list[str] | None = None) -> int:
    try:
        args = build_parser().parse_args(argv)
        threads = _resolve_threads(getattr(args, "threads", None))
        # every op checks its output for NaN/Inf, so numpy's own warnings are redundant
        with threadpool_limits(limits=threads), np.errstate(over="ignore", invalid="ignore"):
            COMMANDS[args.command](args, threads)
    except UsageError as exc:
        return _fail(EXIT_USAGE, exc)
    except SystemExit as exc:  # --help
        return int(exc.code or 0)
    except NumericError as exc:
        return _fail(EXIT_NUMERIC, exc)
    except DataError as exc:
        return _fail(EXIT_DATA, exc)
    except (SSBError, ValueError) as exc:
        return _fail(EXIT_USAGE, exc)
    except OSError as exc:
        return _fail(EXIT_DATA, f"{exc.filename or ''}: {exc.strerror or exc}")
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
