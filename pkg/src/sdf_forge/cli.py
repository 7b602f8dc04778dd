"""Command-line pipeline: prepare -> train -> reconstruct/interpolate -> eval.

Every command resolves settings as config-file values overridden by flags,
seeds all randomness from one root seed split per stage, and records what
it produced in a JSON manifest (sha256 digests) written atomically.

Exit codes: 0 success, 1 internal or numeric failure, 2 bad input/config.
Logging level comes from SDF_FORGE_LOG (error|info|debug, default info).
"""

from __future__ import annotations

import argparse
import logging
import os
import sys
import time

from .autodecoder import infer_latent, interpolate_latents, train
from .config import (
    RunSettings,
    apply_overrides,
    build_model_parts,
    build_train_config,
    load_config,
)
from .errors import ForgeError, InputError
from .extract import marching_cubes, sample_grid
from .geometry import (
    load_mesh,
    normalize_to_unit,
    parse_primitive,
    sample_analytic,
    sample_sdf,
    save_mesh,
)
from .metrics import chamfer, sample_surface_points
from .seeding import stage_seed
from .storage import (
    Checkpoint,
    file_digest,
    load_checkpoint,
    load_samples,
    save_checkpoint,
    save_field,
    save_samples,
    write_eval_csv,
    write_history_csv,
    write_manifest,
)

log = logging.getLogger("sdf_forge.cli")

LOG_LEVELS = {"error": logging.ERROR, "info": logging.INFO,
              "debug": logging.DEBUG}


def _setup_logging():
    name = os.environ.get("SDF_FORGE_LOG", "info").lower()
    level = LOG_LEVELS.get(name)
    logging.basicConfig(level=level or logging.INFO,
                        format="%(levelname)s %(name)s: %(message)s")
    if level is None and name != "info":
        log.warning("unknown SDF_FORGE_LOG value %r, using info", name)


def _resolve_settings(args, **flag_map):
    """Config file under flags: every non-None flag value wins."""
    settings = load_config(args.config) if args.config else RunSettings()
    return apply_overrides(settings, **flag_map)


def _sample_id(text):
    """Filesystem-safe shape id for a primitive spec like 'sphere:0.5'."""
    return text.replace(":", "-").replace(",", "-")


# ------------------------------------------------------------------ prepare


def cmd_prepare(args):
    settings = _resolve_settings(args, seed=args.seed, normals=args.normals)
    inputs = [("primitive", text) for text in args.primitive]
    inputs += [("mesh", path) for path in args.meshes]
    if not inputs:
        raise InputError("nothing to prepare: give mesh paths and/or "
                         "--primitive specs")
    os.makedirs(args.out, exist_ok=True)

    produced, failures, timings = [], [], {}
    for index, (kind, source) in enumerate(inputs):
        t0 = time.perf_counter()
        try:
            seed = stage_seed(settings.seed, "prepare-shape", index)
            if kind == "primitive":
                shape_id = _sample_id(source)
                samples = sample_analytic(
                    parse_primitive(source), settings.samples_per_shape,
                    near_fraction=settings.near_fraction,
                    sigmas=(settings.sigma_coarse, settings.sigma_fine),
                    seed=seed, cube=settings.sample_cube, shape_id=shape_id)
            else:
                shape_id = os.path.splitext(os.path.basename(source))[0]
                mesh, _ = normalize_to_unit(load_mesh(source))
                samples = sample_sdf(
                    mesh, settings.samples_per_shape,
                    near_fraction=settings.near_fraction,
                    sigmas=(settings.sigma_coarse, settings.sigma_fine),
                    seed=seed, cube=settings.sample_cube, shape_id=shape_id)
            if settings.normals == "off":
                samples = samples.without_normals()
            path = os.path.join(args.out, f"{shape_id}.sdfs")
            save_samples(path, samples)
            produced.append(path)
            timings[shape_id] = time.perf_counter() - t0
            log.info("prepared %s (%d samples)", shape_id, len(samples))
        except ForgeError as exc:
            failures.append(source)
            log.error("failed to prepare %s: %s", source, exc)

    write_manifest(os.path.join(args.out, "prepare-manifest.json"), produced,
                   config_snapshot=settings.to_dict(),
                   seeds={"root": settings.seed}, timings=timings,
                   inputs={src: kind for kind, src in inputs})
    return 2 if failures else 0


# -------------------------------------------------------------------- train


def cmd_train(args):
    overrides = dict(seed=args.seed, epochs=args.epochs,
                     activation=args.activation, encoding=args.encoding)
    if args.normals is not None:
        overrides["tau_normal"] = 1 if args.normals == "on" else 0
    settings = _resolve_settings(args, **overrides)

    try:
        names = os.listdir(args.samples)
    except OSError as exc:
        raise InputError(
            f"cannot read sample directory {args.samples}: {exc.strerror}")
    sample_paths = sorted(os.path.join(args.samples, name)
                          for name in names if name.endswith(".sdfs"))
    if not sample_paths:
        raise InputError(f"no .sdfs sample files in {args.samples}")
    dataset = [load_samples(p) for p in sample_paths]

    warm_start = None
    init_sigma = settings.init_sigma
    if args.resume:
        previous = load_checkpoint(args.resume)
        ids = [s.shape_id for s in dataset]
        if ids != previous.shape_ids:
            raise InputError(
                f"sample dir shapes {ids} do not match checkpoint shapes "
                f"{previous.shape_ids}")
        spec, encoder = previous.spec, previous.encoder
        warm_start = (previous.store, previous.table)
        init_sigma = previous.table.init_sigma
        log.info("resuming from %s (architecture taken from checkpoint)",
                 args.resume)
    else:
        spec, encoder = build_model_parts(settings)

    config = build_train_config(settings)
    t0 = time.perf_counter()
    store, table, history = train(dataset, spec, encoder, config,
                                  init_sigma=init_sigma,
                                  threads=args.threads,
                                  warm_start=warm_start)
    train_seconds = time.perf_counter() - t0

    os.makedirs(args.out, exist_ok=True)
    ckpt_path = os.path.join(args.out, "checkpoint.sdfn")
    hist_path = os.path.join(args.out, "history.csv")
    save_checkpoint(ckpt_path, Checkpoint(
        store, spec, encoder, table, [s.shape_id for s in dataset]))
    write_history_csv(hist_path, history)
    write_manifest(os.path.join(args.out, "train-manifest.json"),
                   [ckpt_path, hist_path],
                   config_snapshot=settings.to_dict(),
                   seeds={"root": settings.seed},
                   timings={"train": train_seconds},
                   inputs={os.path.basename(p): file_digest(p)
                           for p in sample_paths})
    log.info("wrote %s (%d epochs, %d shapes)", ckpt_path, config.epochs,
             len(dataset))
    return 0


# -------------------------------------------------------------- reconstruct


def _extract_mesh(checkpoint, code, settings, threads, field_path=None):
    field = sample_grid(checkpoint.store, checkpoint.spec,
                        checkpoint.encoder, code,
                        resolution=settings.resolution, threads=threads)
    if field_path:
        save_field(field_path, field)
    return marching_cubes(field, threads=threads)


def cmd_reconstruct(args):
    settings = _resolve_settings(args, seed=args.seed,
                                 resolution=args.resolution)
    checkpoint = load_checkpoint(args.checkpoint)
    if (args.index is None) == (args.from_samples is None):
        raise InputError("pass exactly one of --index or --from-samples")

    t0 = time.perf_counter()
    if args.index is not None:
        if not 0 <= args.index < len(checkpoint.table):
            raise InputError(
                f"shape index {args.index} out of range "
                f"[0, {len(checkpoint.table)})")
        code = checkpoint.table.codes[args.index]
        source = {"checkpoint": file_digest(args.checkpoint),
                  "index": args.index}
    else:
        samples = load_samples(args.from_samples)
        config = build_train_config(settings)
        steps = settings.infer_steps or None
        code, trace = infer_latent(checkpoint.store, checkpoint.model(),
                                   samples, config, steps=steps)
        log.info("inferred code for %r in %d steps (final loss %.5f)",
                 samples.shape_id, len(trace), trace[-1] if trace else 0.0)
        source = {"checkpoint": file_digest(args.checkpoint),
                  "samples": file_digest(args.from_samples)}

    mesh = _extract_mesh(checkpoint, code, settings, args.threads,
                         field_path=args.field)
    save_mesh(args.out, mesh)
    produced = [args.out] + ([args.field] if args.field else [])
    write_manifest(f"{args.out}.manifest.json", produced,
                   config_snapshot=settings.to_dict(),
                   seeds={"root": settings.seed},
                   timings={"reconstruct": time.perf_counter() - t0},
                   inputs=source)
    log.info("wrote %s (%d vertices, %d faces)", args.out,
             mesh.num_vertices, mesh.num_faces)
    return 0


# --------------------------------------------------------------------- eval


def cmd_eval(args):
    mesh_a = load_mesh(args.mesh_a)
    mesh_b = load_mesh(args.mesh_b)
    seed = args.seed if args.seed is not None else 0
    points_a = sample_surface_points(mesh_a, n=args.n, seed=seed)
    points_b = sample_surface_points(mesh_b, n=args.n, seed=seed)
    cd_sum, cd_mean = chamfer(points_a, points_b)
    shape_id = os.path.splitext(os.path.basename(args.mesh_a))[0]
    print(f"shape_id={shape_id} cd_sum_x1e3={cd_sum * 1e3:.17g} "
          f"cd_mean_x1e3={cd_mean * 1e3:.17g} n={args.n} seed={seed}")
    if args.out:
        write_eval_csv(args.out, [(shape_id, cd_sum, cd_mean, args.n, seed)])
    return 0


# -------------------------------------------------------------- interpolate


def cmd_interpolate(args):
    settings = _resolve_settings(args, seed=args.seed,
                                 resolution=args.resolution)
    checkpoint = load_checkpoint(args.checkpoint)
    for name, value in (("--index-a", args.index_a),
                        ("--index-b", args.index_b)):
        if not 0 <= value < len(checkpoint.table):
            raise InputError(f"{name} {value} out of range "
                             f"[0, {len(checkpoint.table)})")
    if args.steps < 1:
        raise InputError(f"--steps must be >= 1, got {args.steps}")

    os.makedirs(args.out, exist_ok=True)
    z_a = checkpoint.table.codes[args.index_a]
    z_b = checkpoint.table.codes[args.index_b]
    produced, timings = [], {}
    for k in range(args.steps):
        t0 = time.perf_counter()
        t = k / (args.steps - 1) if args.steps > 1 else 0.0
        mesh = _extract_mesh(checkpoint, interpolate_latents(z_a, z_b, t),
                             settings, args.threads)
        path = os.path.join(args.out, f"interp-{k:03d}.obj")
        save_mesh(path, mesh)
        produced.append(path)
        timings[f"step-{k}"] = time.perf_counter() - t0
        log.info("wrote %s (t=%.3f, %d vertices)", path, t,
                 mesh.num_vertices)
    write_manifest(os.path.join(args.out, "interpolate-manifest.json"),
                   produced, config_snapshot=settings.to_dict(),
                   seeds={"root": settings.seed}, timings=timings,
                   inputs={"checkpoint": file_digest(args.checkpoint),
                           "index_a": args.index_a,
                           "index_b": args.index_b})
    return 0


# ------------------------------------------------------------------- parser


def build_parser():
    parser = argparse.ArgumentParser(
        prog="sdf-forge",
        description="Train and evaluate neural signed-distance-field "
                    "models of 3D shape collections.")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, threads=False, epochs=False, resolution=False):
        p.add_argument("--config", help="key = value settings file")
        p.add_argument("--seed", type=int, help="root random seed")
        if threads:
            p.add_argument("--threads", type=int, default=1,
                           help="worker threads (results are identical "
                                "for any count)")
        if epochs:
            p.add_argument("--epochs", type=int, help="training epochs")
        if resolution:
            p.add_argument("--resolution", type=int,
                           help="extraction grid resolution per axis")

    p = sub.add_parser("prepare",
                       help="sample signed distances from meshes or "
                            "analytic primitives")
    p.add_argument("meshes", nargs="*", help="OBJ mesh files")
    p.add_argument("--primitive", action="append", default=[],
                   metavar="KIND:PARAMS",
                   help="analytic shape, e.g. sphere:0.5 box:0.4,0.3,0.2 "
                        "torus:0.6,0.2 (repeatable)")
    p.add_argument("--out", default=".", help="output directory")
    p.add_argument("--normals", choices=("on", "off"),
                   help="store surface normals in sample files")
    common(p)
    p.set_defaults(func=cmd_prepare)

    p = sub.add_parser("train", help="fit the auto-decoder to sample files")
    p.add_argument("samples", help="directory of .sdfs files")
    p.add_argument("--out", default=".", help="output directory")
    p.add_argument("--resume", help="continue from an existing checkpoint")
    p.add_argument("--activation", choices=("relu", "siren", "hosc"))
    p.add_argument("--encoding", choices=("none", "fourier", "hash"))
    p.add_argument("--normals", choices=("on", "off"),
                   help="on/off = train with/without the normal loss term")
    common(p, threads=True, epochs=True)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("reconstruct",
                       help="extract a mesh for a trained or new shape")
    p.add_argument("checkpoint", help="SDFN checkpoint file")
    p.add_argument("--index", type=int, help="training shape index")
    p.add_argument("--from-samples", metavar="PATH",
                   help="infer a code for this .sdfs file instead")
    p.add_argument("--out", default="reconstruction.obj",
                   help="output OBJ path")
    p.add_argument("--field", help="also dump the sampled field (SFLD)")
    common(p, threads=True, resolution=True)
    p.set_defaults(func=cmd_reconstruct)

    p = sub.add_parser("eval",
                       help="Chamfer distance between two mesh surfaces")
    p.add_argument("mesh_a", help="first OBJ mesh")
    p.add_argument("mesh_b", help="second OBJ mesh")
    p.add_argument("--n", type=int, default=30000,
                   help="surface samples per mesh")
    p.add_argument("--out", help="also write a CSV report row")
    common(p)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("interpolate",
                       help="meshes along a line between two latent codes")
    p.add_argument("checkpoint", help="SDFN checkpoint file")
    p.add_argument("--index-a", type=int, required=True)
    p.add_argument("--index-b", type=int, required=True)
    p.add_argument("--steps", type=int, default=5)
    p.add_argument("--out", default="interp", help="output directory")
    common(p, threads=True, resolution=True)
    p.set_defaults(func=cmd_interpolate)

    return parser


def main(argv=None):
    _setup_logging()
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except InputError as exc:
        log.error("%s", exc)
        return 2
    except ForgeError as exc:
        log.error("%s", exc)
        return 1
    except Exception:  # pragma: no cover - last-resort diagnostics
        log.exception("unexpected failure")
        return 1


if __name__ == "__main__":
    sys.exit(main())
