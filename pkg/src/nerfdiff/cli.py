"""Command-line entry point.

Each subcommand reads an optional JSON run config (``--config``), takes its
seed and output directory from flags or the config, writes a copy of the
effective config into the output directory, and exits non-zero with a
stage-tagged message on failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
import warnings
from contextlib import nullcontext
from pathlib import Path

import numpy as np

from nerfdiff.config import ConfigError, RunConfig, load_config, load_json
from nerfdiff.diffusion import load_denoiser, save_denoiser, train_denoiser
from nerfdiff.errors import ContractError, NerfDiffError, StageError
from nerfdiff.field import (PosedImage, dataset_views, load_dataset, load_field, save_dataset, save_field,
                            train_field, write_png)
from nerfdiff.harness import (VoxelScene, camera_rig, comparison_strip, enhance_views, evaluate,
                              gen_voxel_scene, oracle_render, render_views, run_pipeline, split_indices,
                              voxel_scene_models, zoom_experiment, zoom_views)
from nerfdiff.rng import child_seed, stream
from nerfdiff.scene_calculus import run_theory_suite

log = logging.getLogger("nerfdiff")

EXIT_OK, EXIT_FAILURE, EXIT_CONFIG, EXIT_STAGE, EXIT_THEORY = 0, 1, 2, 3, 4


# -- view folders ----------------------------------------------------------
# Every image folder uses the dataset layout (PNGs plus cameras.json) and
# records global view indices, so per-view report rows line up across stages.

def save_views(directory, images: list[PosedImage], views: list[int], split: str | None = None) -> None:
    save_dataset(directory, images, None if split is None else [split] * len(images), views)


def load_views(directory, split: str | None = None) -> tuple[list[int], list[PosedImage]]:
    d = Path(directory)
    if not (d / "cameras.json").exists():
        raise ContractError(f"{d} is not an image folder (no cameras.json)")
    images = load_dataset(d, split)
    if not images:
        raise ContractError(f"{d} has no views" + (f" in split '{split}'" if split else ""))
    return dataset_views(d, split), images


def save_rng(path, rng: np.random.Generator) -> None:
    Path(path).write_text(json.dumps(rng.bit_generator.state) + "\n")


def load_rng(path) -> np.random.Generator:
    bg = np.random.PCG64()
    bg.state = load_json(path)
    return np.random.Generator(bg)


def _write_losses(path, losses: list[float], start: int = 0) -> None:
    mode = "a" if start and Path(path).exists() else "w"
    with open(path, mode) as fh:
        if mode == "w":
            fh.write("step,loss\n")
        for k, v in enumerate(losses, start=start):
            fh.write(f"{k},{v!r}\n")


def _stage(name, fn, *args, **kwargs):
    try:
        return fn(*args, **kwargs)
    except StageError:
        raise
    except NerfDiffError as exc:
        raise StageError(name, exc) from exc


# -- commands ----------------------------------------------------------------

def cmd_gen_scene(args, cfg: RunConfig, out: Path) -> int:
    spec = load_json(args.spec) if args.spec else cfg.scene
    scene = _stage("scene", gen_voxel_scene, spec, child_seed(cfg.seed, "scene"))
    scene.save(out / "scene.json")
    pc = cfg.pipeline
    cams = camera_rig(pc)
    train_idx, test_idx = split_indices(len(cams), pc.test_every)
    oracle = _stage("oracle", lambda: [oracle_render(scene, c, pc.field.background) for c in cams])
    order = train_idx + test_idx
    save_dataset(out / "dataset", [oracle[i] for i in order], ["train"] * len(train_idx) + ["test"] * len(test_idx),
                 order)
    preview = [oracle[i] for i in test_idx[:4]]
    write_png(out / "preview.png", np.concatenate([p.pixels for p in preview], axis=1))
    print(f"scene: {out / 'scene.json'} ({scene.resolution}^3), {len(train_idx)} train / {len(test_idx)} test views")
    return EXIT_OK


def _dataset_dir(args, out: Path) -> Path:
    return Path(args.dataset) if args.dataset else out / "dataset"


def cmd_train_field(args, cfg: RunConfig, out: Path) -> int:
    _, train = load_views(_dataset_dir(args, out), "train")
    init = state = None
    rng = stream(cfg.seed, "field")
    if args.resume:
        init, state = load_field(args.resume)
        rng = load_rng(Path(args.resume).with_suffix(".rng.json"))
    fc = cfg.pipeline.field
    res = _stage("field", train_field, train, fc, rng, init=init, state=state, until=args.until,
                 progress=lambda s, v: log.info("field step %d: loss %.5f", s, v))
    save_field(out / "field.sfld", res.field, res.state)
    save_rng(out / "field.rng.json", rng)
    _write_losses(out / "field_losses.csv", res.losses, start=0 if state is None else state.step - len(res.losses))
    print(f"field: {res.state.step} steps, final loss {res.losses[-1] if res.losses else float('nan'):.6f}")
    return EXIT_OK


def cmd_train_diffusion(args, cfg: RunConfig, out: Path) -> int:
    views, train = load_views(_dataset_dir(args, out), "train")
    field, _ = load_field(args.field or out / "field.sfld")
    pc = cfg.pipeline
    renders = _stage("render", render_views, field, [im.camera for im in train], pc)
    init = state = ema = None
    rng = stream(cfg.seed, "diffusion")
    if args.resume:
        ck = load_denoiser(args.resume)
        init, state, ema = ck.net, ck.state, ck.ema
        rng = load_rng(Path(args.resume).with_suffix(".rng.json"))
    res = _stage("diffusion", train_denoiser, list(zip(renders, train)), pc.diffusion, rng, init=init,
                 state=state, until=args.until, ema=ema,
                 progress=lambda s, v: log.info("diffusion step %d: loss %.5f", s, v))
    save_denoiser(out / "denoiser.sfld", res.net, res.schedule, res.state, res.ema)
    save_rng(out / "denoiser.rng.json", rng)
    _write_losses(out / "diffusion_losses.csv", res.losses,
                  start=0 if state is None else state.step - len(res.losses))
    print(f"denoiser: {res.state.step} steps, final loss {res.losses[-1] if res.losses else float('nan'):.6f}")
    return EXIT_OK


def cmd_render(args, cfg: RunConfig, out: Path) -> int:
    views, images = load_views(_dataset_dir(args, out), args.split)
    field, _ = load_field(args.field or out / "field.sfld")
    renders = _stage("render", render_views, field, [im.camera for im in images], cfg.pipeline)
    save_views(out / "render", renders, views, args.split)
    print(f"rendered {len(renders)} views to {out / 'render'}")
    return EXIT_OK


def cmd_enhance(args, cfg: RunConfig, out: Path) -> int:
    views, renders = load_views(args.renders or out / "render")
    ck = load_denoiser(args.denoiser or out / "denoiser.sfld")
    enhanced = _stage("enhance", enhance_views, renders, ck.sampler, ck.schedule, cfg.pipeline, cfg.seed)
    save_views(out / "enhanced", enhanced, views)
    print(f"enhanced {len(enhanced)} views to {out / 'enhanced'}")
    return EXIT_OK


def cmd_evaluate(args, cfg: RunConfig, out: Path) -> int:
    views, oracle = load_views(_dataset_dir(args, out), args.split)
    by_view = dict(zip(views, oracle))
    variants = {}
    for spec in args.variant or ["render", "enhanced"]:
        name, _, path = spec.partition("=")
        v_ids, images = load_views(path or out / name)
        missing = sorted(set(v_ids) - set(by_view))
        if missing:
            raise ContractError(f"variant '{name}' has views {missing} that the oracle folder lacks")
        variants[name] = dict(zip(v_ids, images))
    common = sorted(set.intersection(*(set(v) for v in variants.values())))
    report = _stage("evaluate", evaluate, [by_view[v] for v in common],
                    {n: [imgs[v] for v in common] for n, imgs in variants.items()}, cfg.pipeline, common)
    report.save(out)
    for name, agg in report.aggregate.items():
        print(name + ": " + ", ".join(f"{m}={x:.6g}" for m, x in agg.items()))
    return EXIT_OK


def cmd_zoom(args, cfg: RunConfig, out: Path) -> int:
    scene = VoxelScene.load(args.scene or out / "scene.json")
    views, test = load_views(_dataset_dir(args, out), "test")
    field, _ = load_field(args.field or out / "field.sfld")
    ck = load_denoiser(args.denoiser or out / "denoiser.sfld")
    z_out = out / f"zoom_{args.factor:g}"
    z = zoom_views(scene, [im.camera for im in test], views, field, ck.sampler, ck.schedule, cfg.pipeline,
                   cfg.seed, args.factor, out_dir=z_out)
    for name, agg in z.report.aggregate.items():
        print(f"zoom {args.factor:g} {name}: " + ", ".join(f"{m}={x:.6g}" for m, x in agg.items()))
    return EXIT_OK


def cmd_verify_theory(args, cfg: RunConfig, out: Path) -> int:
    models = voxel_scene_models(cfg.seed)
    ok = True

    def show(res):
        nonlocal ok
        ok &= res.passed
        print(res.line(), flush=True)

    results = run_theory_suite(seed=cfg.seed, real_scene_models=models, n_models=args.models,
                               n_trials=args.trials, progress=show)
    (out / "theory.txt").write_text("".join(r.line() + "\n" for r in results))
    return EXIT_OK if ok else EXIT_THEORY


def cmd_pipeline(args, cfg: RunConfig, out: Path) -> int:
    res = run_pipeline(cfg.scene, cfg.pipeline, cfg.seed, out_dir=out, progress=log.info)
    save_field(out / "field.sfld", res.field, res.field_result.state)
    d = res.denoiser_result
    save_denoiser(out / "denoiser.sfld", d.net, d.schedule, d.state, d.ema)
    res.scene.save(out / "scene.json")
    for name, agg in res.report.aggregate.items():
        print(name + ": " + ", ".join(f"{m}={x:.6g}" for m, x in agg.items()))
    for f in cfg.zoom_factors:
        if f == 1:
            continue
        with warnings.catch_warnings(record=True) as caught:
            warnings.simplefilter("always")
            z = zoom_experiment(res, f, out_dir=out / f"zoom_{f:g}")
        for w in caught:
            log.warning("%s", w.message)
        for name, agg in z.report.aggregate.items():
            print(f"zoom {f:g} {name}: " + ", ".join(f"{m}={x:.6g}" for m, x in agg.items()))
    return EXIT_OK


# -- parser ------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    def add_common(parser, default):
        parser.add_argument("--config", default=default, help="JSON run config (unknown keys are rejected)")
        parser.add_argument("--seed", type=int, default=default, help="64-bit seed; overrides the config")
        parser.add_argument("--out", default=default, help="output directory; overrides the config")
        parser.add_argument("--threads", type=int, default=default, help="cap BLAS worker threads")
        parser.add_argument("-v", "--verbose", action="store_true", default=default or False,
                            help="log progress to stderr")

    # the shared flags work before or after the subcommand
    common = argparse.ArgumentParser(add_help=False)
    add_common(common, argparse.SUPPRESS)
    p = argparse.ArgumentParser(prog="nerfdiff", description="Radiance fields with diffusion enhancement.")
    add_common(p, None)
    sub = p.add_subparsers(dest="command", required=True)

    def add(name, fn, help_):
        sp = sub.add_parser(name, parents=[common], help=help_)
        sp.set_defaults(fn=fn)
        return sp

    sp = add("gen-scene", cmd_gen_scene, "rasterize a voxel scene and render its oracle dataset")
    sp.add_argument("--spec", help="scene spec JSON (default: the config's scene)")

    for name, fn, what in (("train-field", cmd_train_field, "radiance field"),
                           ("train-diffusion", cmd_train_diffusion, "denoiser")):
        sp = add(name, fn, f"train the {what}")
        sp.add_argument("--dataset", help="view folder (default OUT/dataset)")
        sp.add_argument("--resume", help="checkpoint to continue from")
        sp.add_argument("--until", type=int, help="stop after this many total steps")
        if name == "train-diffusion":
            sp.add_argument("--field", help="field checkpoint (default OUT/field.sfld)")

    sp = add("render", cmd_render, "render dataset cameras with a trained field")
    sp.add_argument("--dataset")
    sp.add_argument("--field")
    sp.add_argument("--split", default="test")

    sp = add("enhance", cmd_enhance, "enhance rendered views with the denoiser")
    sp.add_argument("--renders", help="view folder of renders (default OUT/render)")
    sp.add_argument("--denoiser")

    sp = add("evaluate", cmd_evaluate, "compare view folders against the oracle")
    sp.add_argument("--dataset")
    sp.add_argument("--split", default="test")
    sp.add_argument("--variant", action="append", metavar="NAME[=DIR]",
                    help="variant folder (repeatable; default render and enhanced under OUT)")

    sp = add("zoom", cmd_zoom, "evaluate test views from cameras moved closer")
    sp.add_argument("--factor", type=float, default=4.0)
    sp.add_argument("--scene")
    sp.add_argument("--dataset")
    sp.add_argument("--field")
    sp.add_argument("--denoiser")

    sp = add("verify-theory", cmd_verify_theory, "run the scene-calculus verification suite")
    sp.add_argument("--models", type=int, default=200, help="random models in the sweep")
    sp.add_argument("--trials", type=int, default=10_000, help="trials per indistinguishability pair")

    add("pipeline", cmd_pipeline, "run every stage end to end, then the zoom factors")
    return p


def _resolve(args) -> tuple[RunConfig, Path]:
    cfg = load_config(args.config)
    if args.seed is not None:
        if not 0 <= args.seed < 2**64:
            raise ConfigError("seed must be an unsigned 64-bit integer")
        cfg.seed = args.seed
    if args.out is not None:
        cfg.out = args.out
    if args.threads is not None:
        if args.threads < 1:
            raise ConfigError("--threads must be positive")
        cfg.threads = args.threads
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    cfg.write(out)
    return cfg, out


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s", stream=sys.stderr)
    try:
        cfg, out = _resolve(args)
    except (ConfigError, OSError) as exc:
        print(f"nerfdiff: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    if cfg.threads is not None:
        from threadpoolctl import threadpool_limits
        limiter = threadpool_limits(cfg.threads)
    else:
        limiter = nullcontext()
    try:
        with limiter:
            return args.fn(args, cfg, out)
    except StageError as exc:
        print(f"nerfdiff: error [{exc.stage}] {type(exc.cause).__name__}: {exc.cause}", file=sys.stderr)
        return EXIT_STAGE
    except ConfigError as exc:
        print(f"nerfdiff: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (NerfDiffError, OSError) as exc:
        print(f"nerfdiff: error [{args.command}] {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_FAILURE


if __name__ == "__main__":
    sys.exit(main())
