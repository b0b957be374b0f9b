"""``microgan`` command line: augment, train, sample, gradcheck, plot.

Exit codes: 0 success, 1 check failure, 2 bad input, 3 I/O error, 4 numeric abort.
"""
from __future__ import annotations

import argparse
import logging
import math
import os
import shutil
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from . import gradcheck
from .config import RunConfig
from .data.augment import AugmentSpec
from .data.dataset import Dataset, expand_dataset, write_manifest
from .data.io import from_model_range, list_pngs, load_image, save_image, write_atomic
from .errors import CheckpointError, ConfigError, NonFiniteError
from .gan.checkpoint import checkpoint_dtype, load_checkpoint, save_checkpoint
from .gan.trainer import LossTrace, Trainer, sample_latent
from .layers import build_discriminator, build_generator, init_weights
from .plot import render_svg
from .tensor import precision

log = logging.getLogger("microgan")

EXIT_OK, EXIT_CHECK, EXIT_INPUT, EXIT_IO, EXIT_NUMERIC = 0, 1, 2, 3, 4


def _fail(code, msg):
    print(f"error: {msg}", file=sys.stderr)
    return code


def worker_count() -> int:
    env = os.environ.get("MICROGAN_THREADS")
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            log.warning("ignoring non-integer MICROGAN_THREADS=%r", env)
    return os.cpu_count() or 1


def _mkdir(path) -> Path:
    path = Path(path)
    path.mkdir(parents=True, exist_ok=True)
    if not os.access(path, os.W_OK):
        raise PermissionError(f"{path}: not writable")
    return path


# augment

def cmd_augment(args) -> int:
    src_dir = Path(args.in_dir)
    if not src_dir.is_dir():
        return _fail(EXIT_INPUT, f"{src_dir}: not a directory")
    paths = list_pngs(src_dir)
    if not paths:
        return _fail(EXIT_INPUT, f"{src_dir}: no PNG images found")
    try:
        spec = AugmentSpec(width_shift_range=args.width_shift, height_shift_range=args.height_shift,
                           shear_range=args.shear, zoom_range=args.zoom,
                           horizontal_flip=not args.no_hflip, vertical_flip=not args.no_vflip,
                           fill_mode=args.fill_mode, fill_value=args.fill_value,
                           interpolation=args.interpolation, seed=args.seed)
    except ValueError as exc:
        return _fail(EXIT_INPUT, str(exc))
    if args.count < len(paths):
        return _fail(EXIT_INPUT, f"--count {args.count} is below the {len(paths)} source images")
    try:
        images, unchanged = [], []
        for p in paths:
            raw = load_image(p)
            images.append(load_image(p, size=args.size) if raw.shape[:2] != (args.size,) * 2 else raw)
            unchanged.append(raw.shape[:2] == (args.size,) * 2)
    except OSError as exc:
        return _fail(EXIT_INPUT, str(exc))
    try:
        out = _mkdir(args.out_dir)
    except OSError as exc:
        return _fail(EXIT_IO, str(exc))

    with ThreadPoolExecutor(max_workers=worker_count()) as pool:
        ds = expand_dataset(images, args.count, spec, np.random.default_rng(args.seed),
                            source_names=[p.name for p in paths], executor=pool)
    outputs = []
    try:
        for i, (img, rec) in enumerate(zip(ds.items, ds.provenance)):
            dest = out / f"{i:06d}.png"
            if rec["params"] is None and unchanged[i]:
                shutil.copyfile(paths[i], dest)
            else:
                save_image(img, dest)
            outputs.append(dest.name)
        write_manifest(out / "manifest.jsonl", ds, outputs)
    except OSError as exc:
        return _fail(EXIT_IO, str(exc))
    print(f"sources: {len(paths)}  outputs: {len(outputs)}  manifest: {out / 'manifest.jsonl'}")
    return EXIT_OK


# train

def _grid(images: np.ndarray) -> np.ndarray:
    """N x H x W x 3 uint8 -> one tiled image, row-major, black gutters."""
    n, h, w, _ = images.shape
    cols = math.ceil(math.sqrt(n))
    rows = math.ceil(n / cols)
    grid = np.zeros((rows * (h + 1) + 1, cols * (w + 1) + 1, 3), dtype=np.uint8)
    for i, img in enumerate(images):
        r, c = divmod(i, cols)
        grid[1 + r * (h + 1):1 + r * (h + 1) + h, 1 + c * (w + 1):1 + c * (w + 1) + w] = img
    return grid


def _generate(G, z) -> np.ndarray:
    x = G.forward(z, "eval").data
    if not (np.all(x >= -1) and np.all(x <= 1)):
        raise NonFiniteError("generator output left [-1, 1]")
    return np.stack([from_model_range(img) for img in x])


def _load_training_images(cfg: RunConfig) -> Dataset:
    paths = list_pngs(cfg.data_dir)
    if not paths:
        raise ConfigError(f"{cfg.data_dir}: no PNG images found", ["data_dir"])
    images = [load_image(p, size=cfg.model.image_size) for p in paths]
    if cfg.expand_to is not None and cfg.expand_to > len(images):
        return expand_dataset(images, cfg.expand_to, cfg.augment,
                              np.random.default_rng(cfg.augment.seed), [p.name for p in paths])
    return Dataset(images, [{"index": i, "source": p.name, "params": None} for i, p in enumerate(paths)])


def cmd_train(args) -> int:
    try:
        cfg = RunConfig.load(args.config)
    except ConfigError as exc:
        keys = f" (offending keys: {', '.join(exc.keys)})" if exc.keys else ""
        return _fail(EXIT_INPUT, f"{exc}{keys}")
    except OSError as exc:
        return _fail(EXIT_INPUT, str(exc))

    with precision(cfg.precision):
        try:
            if not Path(cfg.data_dir).is_dir():
                raise ConfigError(f"{cfg.data_dir}: data directory missing", ["data_dir"])
            dataset = _load_training_images(cfg)
            init_rng = np.random.default_rng(cfg.init.seed)
            G = init_weights(build_generator(cfg.model), cfg.init, init_rng)
            D = init_weights(build_discriminator(cfg.model), cfg.init, init_rng)
            trainer = Trainer(cfg.train, dataset, G, D)
        except ConfigError as exc:
            return _fail(EXIT_INPUT, f"{exc} (offending keys: {', '.join(exc.keys)})")
        except OSError as exc:
            return _fail(EXIT_INPUT, str(exc))

        if args.resume:
            try:
                ckpt = load_checkpoint(args.resume, expect=cfg.model)
                if ckpt.trainer is None:
                    raise CheckpointError(f"{args.resume}: no trainer state to resume from")
            except (CheckpointError, OSError) as exc:
                return _fail(EXIT_INPUT, str(exc))
            for model, saved in ((G, ckpt.generator), (D, ckpt.discriminator)):
                current = model.state_dict()
                for name, t in saved.state_dict().items():
                    current[name].data = t.data.copy()
            trainer.restore(ckpt.trainer, ckpt.adam_g, ckpt.adam_d)

        try:
            out = _mkdir(cfg.out_dir)
            _mkdir(out / "samples")
            cfg.dump(out / "config.json")
        except OSError as exc:
            return _fail(EXIT_IO, str(exc))
        ckpt_path = Path(cfg.checkpoint) if cfg.checkpoint else out / "checkpoint.mgan"
        probe = sample_latent(cfg.probe_count, cfg.model.latent_dim,
                              np.random.default_rng([cfg.train.seed, 2]))

        def save(tr):
            save_checkpoint(ckpt_path, G, D, tr.adam_g, tr.adam_d, cfg.model,
                            config=cfg.to_dict(), trainer=tr.state())

        def snapshot(tr):
            save_image(_grid(_generate(G, probe)), out / "samples" / f"iter_{tr.iteration:06d}.png")

        def progress(tr, rec):
            if tr.iteration % cfg.checkpoint_every == 0:
                save(tr)
            if tr.iteration % cfg.sample_every == 0:
                snapshot(tr)
            if tr.iteration % 50 == 0:
                log.info("iter %d  d_loss %.4f  g_loss %.4f  acc %.3f/%.3f", rec.iteration,
                         rec.d_loss, rec.g_loss, rec.d_acc_real, rec.d_acc_fake)

        trace_path = out / "trace.csv"
        try:
            trainer.run(callback=progress)
        except NonFiniteError as exc:
            trainer.trace.write_csv(trace_path)
            return _fail(EXIT_NUMERIC, f"{exc}; trace flushed to {trace_path}")
        except OSError as exc:
            return _fail(EXIT_IO, str(exc))
        try:
            trainer.trace.write_csv(trace_path)
            save(trainer)
            snapshot(trainer)
        except OSError as exc:
            return _fail(EXIT_IO, str(exc))
    print(f"iterations: {trainer.iteration}  trace: {trace_path}  checkpoint: {ckpt_path}")
    return EXIT_OK


# sample

def cmd_sample(args) -> int:
    if args.n < 1:
        return _fail(EXIT_INPUT, "--n must be >= 1")
    try:
        ckpt = load_checkpoint(args.checkpoint)
    except (CheckpointError, OSError) as exc:
        return _fail(EXIT_INPUT, str(exc))
    with precision(checkpoint_dtype(ckpt).name):
        z = sample_latent(args.n, ckpt.model_spec.latent_dim, np.random.default_rng(args.seed))
        try:
            images = _generate(ckpt.generator, z)
        except NonFiniteError as exc:
            return _fail(EXIT_NUMERIC, str(exc))
    try:
        out = _mkdir(args.out)
        for i, img in enumerate(images):
            save_image(img, out / f"sample_{i:04d}.png")
    except OSError as exc:
        return _fail(EXIT_IO, str(exc))
    print(f"wrote {len(images)} samples to {out}")
    return EXIT_OK


# gradcheck

def cmd_gradcheck(args) -> int:
    outcomes = gradcheck.run_all(scale=args.scale, h=args.h, seed=args.seed)
    print(f"{'check':<18} {'parameter':<20} {'coords':>6} {'skipped':>7} {'max rel err':>12}")
    worst = None
    for o in outcomes:
        for r in o.results.values():
            flag = "" if r.max_rel_error < args.tol else "  FAIL"
            print(f"{o.label:<18} {r.name:<20} {r.coords:>6} {r.skipped:>7} {r.max_rel_error:>12.3e}{flag}")
            if worst is None or r.max_rel_error > worst[1].max_rel_error:
                worst = (o.label, r)
    covered = gradcheck.covered_rules(outcomes)
    missing = sorted(set(gradcheck.ad.BACKWARD_RULES) - covered)
    print(f"rules covered: {', '.join(sorted(covered))}")
    if missing:
        return _fail(EXIT_CHECK, f"backward rules not exercised: {', '.join(missing)}")
    label, r = worst
    if r.max_rel_error >= args.tol:
        return _fail(EXIT_CHECK, f"worst offender {label}/{r.name}: {r.max_rel_error:.3e} >= tol {args.tol:g}")
    print(f"all {sum(len(o.results) for o in outcomes)} parameters below tol {args.tol:g}")
    return EXIT_OK


# plot

def cmd_plot(args) -> int:
    try:
        trace = LossTrace.read_csv(args.trace)
    except OSError as exc:
        return _fail(EXIT_INPUT, str(exc))
    except ValueError as exc:
        return _fail(EXIT_INPUT, f"{args.trace}: {exc}")
    if not len(trace):
        return _fail(EXIT_INPUT, f"{args.trace}: trace has no rows")
    try:
        write_atomic(args.out, render_svg(trace).encode("utf-8"))
    except OSError as exc:
        return _fail(EXIT_IO, str(exc))
    print(f"wrote {args.out} ({len(trace)} points)")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="microgan", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("augment", help="expand a folder of PNGs by random affine augmentation")
    p.add_argument("--in", dest="in_dir", required=True)
    p.add_argument("--out", dest="out_dir", required=True)
    p.add_argument("--count", type=int, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--size", type=int, default=64, help="square output size (default 64)")
    p.add_argument("--width-shift", type=float, default=0.1)
    p.add_argument("--height-shift", type=float, default=0.1)
    p.add_argument("--shear", type=float, default=0.2, help="radians")
    p.add_argument("--zoom", type=float, default=0.2)
    p.add_argument("--no-hflip", action="store_true")
    p.add_argument("--no-vflip", action="store_true")
    p.add_argument("--fill-mode", choices=("nearest", "constant"), default="nearest")
    p.add_argument("--fill-value", type=int, default=255)
    p.add_argument("--interpolation", choices=("nearest", "bilinear"), default="bilinear")
    p.set_defaults(func=cmd_augment)

    p = sub.add_parser("train", help="train from a JSON run config")
    p.add_argument("--config", required=True)
    p.add_argument("--resume", default=None, help="checkpoint to continue from")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("sample", help="write generator samples from a checkpoint")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--n", type=int, default=16)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_sample)

    p = sub.add_parser("gradcheck", help="finite-difference check of every backward rule")
    p.add_argument("--scale", type=int, default=16, help="channel shrink factor for the model checks")
    p.add_argument("--tol", type=float, default=1e-4)
    p.add_argument("--h", type=float, default=1e-5)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_gradcheck)

    p = sub.add_parser("plot", help="render a loss trace CSV as SVG")
    p.add_argument("--trace", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_plot)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
