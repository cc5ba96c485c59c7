"""Command-line entry point: ``simlrp <subcommand> ...``."""

import argparse
import io
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np
from PIL import Image

from .benchmark import (BENCHMARK_TRAIN, DEFAULT_ALPHA, DEFAULT_GAMMAS, invariance_score,
                        run_benchmark, train_toy)
from .formats import FormatError, load_pairs, load_tensor
from .lrp import ZB, GammaSchedule
from .network import TrainingError, load_model, save_model, similarity
from .pairwise import explain, load_explanation, save_explanation
from .render import RenderParams, emit_svg, render


class CliError(Exception):
    pass


def _read(path):
    try:
        return Path(path).read_bytes()
    except OSError as exc:
        raise CliError(f"cannot read {path}: {exc.strerror or exc}") from None


def _write(path, data):
    try:
        Path(path).write_bytes(data if isinstance(data, bytes) else data.encode("utf-8"))
    except OSError as exc:
        raise CliError(f"cannot write {path}: {exc.strerror or exc}") from None


def _load(path, loader, what):
    try:
        return loader(_read(path))
    except FormatError as exc:
        raise CliError(f"{path}: invalid {what}: {exc}") from None


def _float_list(text):
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got '{text}'")


def _load_image(path):
    """PNG (or any format Pillow reads) or a tensor file holding a float grid."""
    data = _read(path)
    if data[:8] == b"\x89PNG\r\n\x1a\n":
        with Image.open(io.BytesIO(data)) as img:
            return np.asarray(img.convert("RGB"))
    try:
        return load_tensor(data)
    except FormatError as exc:
        raise CliError(f"{path}: not a PNG or tensor file: {exc}") from None


def cmd_toy_train(args):
    cfg = replace(BENCHMARK_TRAIN, seed=args.seed, iterations=args.iterations,
                  learning_rate=args.lr, batch_size=args.batch_size, momentum=args.momentum,
                  final_lr_fraction=args.final_lr_fraction)
    net, _, loss = train_toy(cfg, args.alpha)
    _write(args.out, save_model(net))
    print(f"final_mse\t{loss:.6g}")


def cmd_toy_eval(args):
    net = _load(args.model, load_model, "model file")
    report = run_benchmark(gammas=args.gammas, n_eval_pairs=args.pairs, net=net)
    out = Path(args.out)
    _write(out, report.to_bytes())
    sys.stdout.write(report.table())
    if not args.no_figures:
        # matplotlib is slow to import, so only load it when figures are wanted
        from .plotting import plot_acs, plot_example, plot_gamma_sweep
        stem = out.with_suffix("")
        plot_gamma_sweep(report, f"{stem}-gamma.png")
        plot_acs(report, f"{stem}-acs.png")
        plot_example(report, f"{stem}-example.png")
    order = report.orderings()
    print("# " + " ".join(f"{k}={'yes' if v else 'no'}" for k, v in order.items())
          + f" train_mse={report.train_loss:.6g}", file=sys.stderr)


def cmd_explain(args):
    net = _load(args.model, load_model, "model file")
    x = _load(args.x, load_tensor, "tensor file")
    xp = _load(args.xprime, load_tensor, "tensor file")
    zb = None
    if args.zb is not None:
        if len(args.zb) != 2:
            raise CliError("--zb takes lower,upper")
        zb = ZB(*args.zb)
    schedule = GammaSchedule.parse(args.gamma_schedule, zb)
    expl = explain(net, x, xp, args.method, schedule)
    y = similarity(net, x, xp)
    _write(args.out, save_explanation(expl, x.shape, xp.shape, y, dense=args.dense))


def cmd_render(args):
    expl = _load(args.explanation, load_explanation, "explanation file")
    params = RenderParams.parse(args.params)
    paths = args.images.split(",")
    if len(paths) != 2:
        raise CliError("--images takes two comma-separated paths")
    img_a, img_b = (_load_image(p) for p in paths)
    shape_a, shape_b = expl.meta["shape_x"], expl.meta["shape_xprime"]
    for img, shape, p in ((img_a, shape_a, paths[0]), (img_b, shape_b, paths[1])):
        hw = img.shape[:2] if img.ndim == 3 and img.shape[2] in (1, 3) else img.shape[-2:]
        if tuple(hw) != tuple(shape[-2:]):
            raise CliError(f"{p}: image is {tuple(hw)} but the explanation covers {tuple(shape[-2:])}")
    conns = render(expl, params, shape_a, shape_b)
    _write(args.out, emit_svg(conns, img_a, img_b, params.pool))
    print(f"connections\t{len(conns)}")


def cmd_invariance(args):
    net = _load(args.model, load_model, "model file")
    local = _load(args.local, load_pairs, "pairs file")
    overall = _load(args.global_pairs, load_pairs, "pairs file")
    print(f"{invariance_score(net, local, overall):.12g}")


def build_parser():
    parser = argparse.ArgumentParser(prog="simlrp",
                                     description="Explain dot-product similarity models.")
    sub = parser.add_subparsers(dest="command", metavar="command")
    sub.required = True

    p = sub.add_parser("toy-train", help="train the digit-matching network")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--iterations", type=int, default=BENCHMARK_TRAIN.iterations)
    p.add_argument("--lr", type=float, default=BENCHMARK_TRAIN.learning_rate)
    p.add_argument("--batch-size", type=int, default=BENCHMARK_TRAIN.batch_size)
    p.add_argument("--momentum", type=float, default=BENCHMARK_TRAIN.momentum)
    p.add_argument("--final-lr-fraction", type=float, default=BENCHMARK_TRAIN.final_lr_fraction)
    p.add_argument("--alpha", type=float, default=DEFAULT_ALPHA,
                   help="correlation of the digit embeddings")
    p.add_argument("--out", required=True, help="model file to write")
    p.set_defaults(func=cmd_toy_train)

    p = sub.add_parser("toy-eval", help="score explanation methods on held-out pairs")
    p.add_argument("--model", required=True)
    p.add_argument("--gammas", type=_float_list, default=list(DEFAULT_GAMMAS))
    p.add_argument("--pairs", type=int, default=200)
    p.add_argument("--out", required=True, help="report file; figures are written next to it")
    p.add_argument("--no-figures", action="store_true")
    p.set_defaults(func=cmd_toy_eval)

    p = sub.add_parser("explain", help="explain the similarity of one input pair")
    p.add_argument("--model", required=True)
    p.add_argument("--method", required=True, choices=["bilrp", "hp", "saliency", "curvature"])
    p.add_argument("--gamma-schedule", default="0",
                   help="default gamma and per-layer overrides, e.g. 0.1,0-3=0.5")
    p.add_argument("--zb", type=_float_list, default=None,
                   help="lower,upper input bounds for the z^B rule at the first layer")
    p.add_argument("--x", required=True)
    p.add_argument("--xprime", required=True)
    p.add_argument("--dense", action="store_true", help="also store the dense matrix")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_explain)

    p = sub.add_parser("render", help="draw an explanation as an SVG")
    p.add_argument("--explanation", required=True)
    p.add_argument("--params", required=True, help="pool,l,h,p")
    p.add_argument("--images", required=True, help="image_a,image_b (PNG or tensor files)")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_render)

    p = sub.add_parser("invariance", help="local over global mean similarity")
    p.add_argument("--model", required=True)
    p.add_argument("--local", required=True)
    p.add_argument("--global", dest="global_pairs", required=True)
    p.set_defaults(func=cmd_invariance)
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        args.func(args)
    except (CliError, ValueError, TrainingError, ZeroDivisionError, IndexError) as exc:
        msg = str(exc).splitlines()[0] if str(exc) else type(exc).__name__
        print(f"simlrp {args.command}: error: {msg}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
