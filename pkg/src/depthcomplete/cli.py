"""``depthcomplete`` command line.

Exit codes: 0 success, 1 runtime or data error, 2 usage error.
"""

from __future__ import annotations

import argparse
import io
import logging
import sys
import time
from pathlib import Path

import numpy as np

from . import codec
from .checkpoint import load_checkpoint, save_checkpoint
from .codec import AutoEncoder, compression_ratio
from .dataset import (build_procedural, build_subregion_store, read_store, split_holdout,
                      write_store)
from .errors import FormatError
from .metrics import evaluate
from .model import HIGH_RES, LOW_RES, CompletionModel, layer_plan, to_grid
from .shapes import BASIC_KINDS, KINDS, kind_id
from .training import (S_MIN, History, TrainConfig, finetune, train_autoencoder, train_completion,
                       train_low_res)

log = logging.getLogger("depthcomplete")

EXIT_OK, EXIT_RUNTIME, EXIT_USAGE = 0, 1, 2
MIN_REPETITIONS = 10
WARMUP_PASSES = 3


# ---------------------------------------------------------------------------
# argument parsing


def _positive_int(text):
    value = int(text)
    if value < 1:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {text}")
    return value


def _non_negative_int(text):
    value = int(text)
    if value < 0:
        raise argparse.ArgumentTypeError(f"expected a non-negative integer, got {text}")
    return value


def _kinds(text):
    kinds = [k.strip() for k in text.split(",") if k.strip()]
    if not kinds:
        raise argparse.ArgumentTypeError("need at least one class")
    for k in kinds:
        if k not in KINDS:
            raise argparse.ArgumentTypeError(f"unknown class {k!r}; choose from {', '.join(KINDS)}")
    return kinds


def _optim_flags(p, lr, batch, epochs):
    p.add_argument("--epochs", type=_non_negative_int, default=epochs)
    p.add_argument("--lr", type=float, default=lr, help="learning rate")
    p.add_argument("--momentum", type=float, default=0.9)
    p.add_argument("--batch-size", type=_positive_int, default=batch)
    p.add_argument("--ramp-epochs", type=_non_negative_int, default=200,
                   help="epochs over which the unoccupied-voxel weight ramps to 1")
    p.add_argument("--s-min", type=float, default=S_MIN)
    p.add_argument("--loss", choices=("bce", "mse"), default="bce")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--log-every", type=_positive_int, default=1)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="depthcomplete",
        description="Voxel shape completion from a single depth map.")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", metavar="COMMAND", required=True)

    p = sub.add_parser("gen-data", help="render a procedural sample store")
    p.add_argument("--classes", type=_kinds, default=list(BASIC_KINDS),
                   help=f"comma-separated kinds from: {','.join(KINDS)}")
    p.add_argument("--per-class", type=_positive_int, default=5, help="meshes per class")
    p.add_argument("--views", type=_positive_int, default=8, help="viewpoints on the ring")
    p.add_argument("--views-per-mesh", type=_positive_int, default=None,
                   help="render only this many seeded ring positions per mesh")
    p.add_argument("--res", type=int, choices=(10, 30), default=30)
    p.add_argument("--depth-size", type=_positive_int, default=64)
    p.add_argument("--elevation", type=float, default=20.0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--holdout", default=None,
                   help="class moved into a separate <out>.test.voxc store")
    p.add_argument("--out", required=True)

    p = sub.add_parser("train-ae", help="train the block auto-encoder")
    p.add_argument("--data", required=True)
    _optim_flags(p, lr=1.0, batch=20, epochs=300)
    p.add_argument("--out", required=True)

    p = sub.add_parser("train", help="train the stacked 30^3 model")
    p.add_argument("--data", required=True)
    p.add_argument("--ae", required=True, help="auto-encoder checkpoint")
    p.add_argument("--freeze-epochs", type=_non_negative_int, default=300)
    _optim_flags(p, lr=0.05, batch=32, epochs=500)
    p.add_argument("--out", required=True)

    p = sub.add_parser("train-lowres", help="train the direct 10^3 model")
    p.add_argument("--data", required=True)
    _optim_flags(p, lr=0.05, batch=32, epochs=500)
    p.add_argument("--out", required=True)

    p = sub.add_parser("finetune", help="continue training a model on another store")
    p.add_argument("--model", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--freeze-epochs", type=_non_negative_int, default=300)
    p.add_argument("--keep-ramp", action="store_true",
                   help="do not restart the unoccupied-voxel ramp")
    _optim_flags(p, lr=0.05, batch=32, epochs=100)
    p.add_argument("--out", required=True)

    p = sub.add_parser("eval", help="accuracy and IoU report on a store")
    p.add_argument("--model", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--threshold", type=float, default=0.5)

    p = sub.add_parser("predict", help="reconstruct one depth map")
    p.add_argument("--model", required=True)
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--depth", help=".npy depth map (H, W)")
    src.add_argument("--data", help="sample store; use with --index")
    p.add_argument("--index", type=_non_negative_int, default=0)
    p.add_argument("--out", required=True, help=".npy file for the probability grid")

    p = sub.add_parser("export", help="write an occupancy grid as OBJ cubes")
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--grid", help=".npy grid of probabilities or booleans")
    src.add_argument("--data", help="sample store; exports the target of --index")
    p.add_argument("--index", type=_non_negative_int, default=0)
    p.add_argument("--threshold", type=float, default=0.5)
    p.add_argument("--out", required=True)

    p = sub.add_parser("summary", help="layer table and parameter count")
    src = p.add_mutually_exclusive_group()
    src.add_argument("--model")
    src.add_argument("--variant", choices=(HIGH_RES, LOW_RES), default=HIGH_RES)
    p.add_argument("--depth-size", type=_positive_int, default=64)

    p = sub.add_parser("bench", help="single depth map latency")
    p.add_argument("--model", help="checkpoint; a freshly initialized stacked model if omitted")
    p.add_argument("--repetitions", type=int, default=MIN_REPETITIONS)
    p.add_argument("--seed", type=int, default=0)
    return parser


def parse_args(argv):
    """Parsed namespace; usage errors exit with status 2 through argparse."""
    args = build_parser().parse_args(argv)
    if args.command == "bench" and args.repetitions < MIN_REPETITIONS:
        build_parser().error(f"bench needs --repetitions >= {MIN_REPETITIONS}")
    if args.command == "gen-data" and args.holdout is not None and args.holdout not in args.classes:
        build_parser().error(f"--holdout {args.holdout!r} is not among --classes")
    return args


# ---------------------------------------------------------------------------
# commands


def _config(args, variant=HIGH_RES, freeze=0):
    return TrainConfig(learning_rate=args.lr, momentum=args.momentum, batch_size=args.batch_size,
                       epochs=args.epochs, seed=args.seed, freeze_epochs=freeze,
                       ramp_epochs=args.ramp_epochs, model_variant=variant, loss=args.loss,
                       s_min=args.s_min)


def _progress(args, out):
    """A History and an epoch callback printing its latest loss every --log-every epochs."""
    history = History()

    def on_epoch_end(epoch, owner):
        if (epoch + 1) % args.log_every == 0:
            print(f"epoch {epoch + 1} loss {history.epoch_loss[-1]:.6f} "
                  f"w_unocc {history.unocc_weight[-1]:.6f}", file=out, flush=True)

    return dict(history=history, on_epoch_end=on_epoch_end)


def cmd_gen_data(args, out):
    store = build_procedural(args.classes, args.per_class, n_views=args.views,
                             resolution=args.res, depth_size=args.depth_size, seed=args.seed,
                             elevation=args.elevation, views_per_mesh=args.views_per_mesh)
    dest = Path(args.out)
    if args.holdout is not None:
        store, test = split_holdout(store, kind_id(args.holdout))
        test_path = dest.with_name(dest.name.removesuffix(".voxc") + ".test.voxc")
        write_store(test, test_path)
        print(f"wrote {len(test)} holdout records to {test_path}", file=out)
    write_store(store, dest)
    print(f"wrote {len(store)} records to {dest} (skipped meshes: {store.skipped})", file=out)


def cmd_train_ae(args, out):
    store = read_store(args.data)
    blocks = build_subregion_store(store)
    ae, hist = train_autoencoder(blocks, _config(args), **_progress(args, out))
    save_checkpoint(ae, args.out, epoch=len(hist), seed=args.seed)
    pred = ae.reconstruct(blocks) > 0.5
    print(f"blocks {len(blocks)} reconstruction_accuracy {(pred == blocks).mean():.6f}", file=out)


def cmd_train(args, out):
    store = read_store(args.data)
    ae = load_checkpoint(args.ae, expect_variant="autoencoder")
    cfg = _config(args, HIGH_RES, args.freeze_epochs)
    model, _ = train_completion(store, ae, cfg, **_progress(args, out))
    save_checkpoint(model, args.out)


def cmd_train_lowres(args, out):
    store = read_store(args.data)
    model, _ = train_low_res(store, _config(args, LOW_RES), **_progress(args, out))
    save_checkpoint(model, args.out)


def cmd_finetune(args, out):
    model = load_checkpoint(args.model)
    if model.variant not in (HIGH_RES, LOW_RES):
        raise FormatError(f"{args.model} is not a completion model checkpoint")
    store = read_store(args.data)
    cfg = _config(args, model.variant, args.freeze_epochs)
    finetune(model, store, cfg, restart_ramp=not args.keep_ramp, **_progress(args, out))
    save_checkpoint(model, args.out)


def _load_model(path):
    model = load_checkpoint(path)
    if not isinstance(model, CompletionModel):
        raise FormatError(f"{path} holds an auto-encoder, not a completion model")
    return model


def cmd_eval(args, out):
    report = evaluate(_load_model(args.model), read_store(args.data), args.threshold)
    out.write(report.to_text())


def _record(store_path, index):
    store = read_store(store_path)
    if index >= len(store):
        raise IndexError(f"--index {index} out of range for a store of {len(store)} records")
    return store.records[index]


def cmd_predict(args, out):
    model = _load_model(args.model)
    depth = np.load(args.depth) if args.depth else _record(args.data, args.index).depth
    grid = model.predict(np.asarray(depth, dtype=np.float32))
    np.save(args.out, grid.astype(np.float32))
    print(f"occupied {(grid > 0.5).sum()} of {grid.size}", file=out)


def voxels_to_obj(grid, threshold: float = 0.5) -> str:
    """One axis-aligned cube (8 vertices, 12 triangles) per occupied voxel.

    Voxels are visited in (i, j, k) row-major order and cell (i, j, k) spans
    [-0.5 + i/R, -0.5 + (i+1)/R] on x, likewise y and z.
    """
    grid = np.asarray(grid)
    if grid.ndim != 3 or len(set(grid.shape)) != 1:
        raise ValueError(f"export needs a cubic (R, R, R) grid, got shape {grid.shape}")
    occ = grid > threshold if grid.dtype != bool else grid
    R = grid.shape[0]
    corners = np.array([[0, 0, 0], [1, 0, 0], [1, 1, 0], [0, 1, 0],
                        [0, 0, 1], [1, 0, 1], [1, 1, 1], [0, 1, 1]])
    faces = np.array([[0, 2, 1], [0, 3, 2], [4, 5, 6], [4, 6, 7], [0, 1, 5], [0, 5, 4],
                      [2, 3, 7], [2, 7, 6], [1, 2, 6], [1, 6, 5], [0, 4, 7], [0, 7, 3]])
    cells = np.argwhere(occ)
    buf = io.StringIO()
    buf.write(f"# {len(cells)} occupied voxels of {R}^3\n")
    verts = (cells[:, None, :] + corners[None]) / R - 0.5
    for v in verts.reshape(-1, 3):
        buf.write(f"v {v[0]:.6f} {v[1]:.6f} {v[2]:.6f}\n")
    tris = (faces[None] + 8 * np.arange(len(cells))[:, None, None] + 1).reshape(-1, 3)
    for f in tris:
        buf.write(f"f {f[0]} {f[1]} {f[2]}\n")
    return buf.getvalue()


def cmd_export(args, out):
    grid = np.load(args.grid) if args.grid else _record(args.data, args.index).target
    text = voxels_to_obj(grid, args.threshold)
    Path(args.out).write_text(text)
    print(f"wrote {text.count(chr(10) + 'f ')} faces to {args.out}", file=out)


def cmd_summary(args, out):
    if args.model:
        model = _load_model(args.model)
    else:
        model = CompletionModel.initialize(args.variant, depth_size=args.depth_size)
    print(f"variant {model.variant}", file=out)
    print(f"depth_size {model.depth_size}", file=out)
    for name, spec in layer_plan(model.variant, model.depth_size):
        if name is None:
            print(f"  {spec.kind}", file=out)
            continue
        g = model.network.group(name)
        print(f"  {name:8s} {spec.kind:16s} weight {tuple(g.weight.shape)} params {g.size}",
              file=out)
    print(f"param_count {model.param_count()}", file=out)
    if model.variant == HIGH_RES:
        print(f"compression_ratio {compression_ratio(codec.CODE_DIM):.6g}", file=out)


def _stage_name(layer, index):
    name = getattr(getattr(layer, "params", None), "name", None)
    return name or f"{type(layer).__name__.lower()}{index}"


def bench(model: CompletionModel, repetitions: int = MIN_REPETITIONS, seed: int = 0) -> dict:
    """Time single depth map -> occupancy grid passes after WARMUP_PASSES warm-up runs.

    Returns total ``median_ms`` and ``p95_ms`` plus per-stage medians.
    """
    if repetitions < MIN_REPETITIONS:
        raise ValueError(f"repetitions must be >= {MIN_REPETITIONS}")
    depth = np.random.default_rng(seed).random((model.depth_size, model.depth_size),
                                                dtype=np.float32)
    layers = model.network.layers
    totals, stages = [], np.zeros((repetitions, len(layers) + 1))
    for rep in range(WARMUP_PASSES + repetitions):
        t_start = time.perf_counter()
        x = model._prepare(depth)
        for i, layer in enumerate(layers):
            t0 = time.perf_counter()
            x = layer.forward(x)
            if rep >= WARMUP_PASSES:
                stages[rep - WARMUP_PASSES, i] = time.perf_counter() - t0
        t0 = time.perf_counter()
        to_grid(x, model.variant)
        t_end = time.perf_counter()
        if rep >= WARMUP_PASSES:
            stages[rep - WARMUP_PASSES, -1] = t_end - t0
            totals.append(t_end - t_start)
    model.network.clear()
    totals = np.array(totals) * 1e3
    names = [_stage_name(layer, i) for i, layer in enumerate(layers)] + ["assemble"]
    return {
        "median_ms": float(np.median(totals)),
        "p95_ms": float(np.percentile(totals, 95)),
        "passes": WARMUP_PASSES + repetitions,
        "stages_ms": {n: float(np.median(stages[:, i]) * 1e3) for i, n in enumerate(names)},
    }


def cmd_bench(args, out):
    if args.model:
        model = _load_model(args.model)
    else:
        model = CompletionModel.initialize(HIGH_RES, seed=args.seed,
                                           autoencoder=AutoEncoder.initialize(args.seed))
    report = bench(model, args.repetitions, args.seed)
    print(f"median_ms {report['median_ms']:.3f}", file=out)
    print(f"p95_ms {report['p95_ms']:.3f}", file=out)
    print(f"passes {report['passes']}", file=out)
    for name, ms in report["stages_ms"].items():
        print(f"stage_{name}_ms {ms:.3f}", file=out)


COMMANDS = {
    "gen-data": cmd_gen_data, "train-ae": cmd_train_ae, "train": cmd_train,
    "train-lowres": cmd_train_lowres, "finetune": cmd_finetune, "eval": cmd_eval,
    "predict": cmd_predict, "export": cmd_export, "summary": cmd_summary, "bench": cmd_bench,
}


def main(argv=None, out=None) -> int:
    out = out or sys.stdout
    try:
        args = parse_args(sys.argv[1:] if argv is None else argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code in (0, None) else EXIT_USAGE
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        COMMANDS[args.command](args, out)
    except (OSError, ValueError, IndexError, KeyError, RuntimeError) as exc:
        print(f"depthcomplete {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
