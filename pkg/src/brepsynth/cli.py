"""Command-line surface: corpus generation/filtering, training, sampling,
evaluation, validation and mesh export.

Exit codes: 0 success, 1 usage error, 2 data error, 3 validity-gate
failure.
"""

import argparse
import glob
import json
import os
import sys

import numpy as np

from .brepfile import ParseError, read_brep, write_brep
from .config import (
    GAP_TOL_DEFAULT,
    JSD_GRID_DEFAULT,
    MAX_EDGES_PER_FACE_DEFAULT,
    MAX_FACES_DEFAULT,
    POINTS_PER_CLOUD_DEFAULT,
    get_preset,
)
from .corpus import CorpusManifest, filter_corpus, make_synthetic_corpus
from .brep import hash_brep
from .geometry import sample_surface_points
from .metrics import (
    MetricReport,
    boundary_loops_metric,
    cov_cd,
    cyclomatic_complexity,
    jsd_grid,
    mean_curvature_metric,
    mmd_cd,
    valid_unique_novel,
)
from .pipeline import SampleConfig, generate_batch
from .training import MODEL_NAMES, build_system, load_system, prepare_dataset, save_system, train_model
from .validity import check_validity

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_VALIDITY = 3

TRAIN_NAME_MAP = {
    "ef_vae": "ef_vae",
    "ev": "ev_decoder",
    "box": "p_box",
    "edge": "p_edge",
    "face": "p_face",
    "vertex": "p_vertex",
}


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"error: {message}", file=sys.stderr)
        sys.exit(EXIT_USAGE)


class DataError(RuntimeError):
    pass


def _cmd_gen_corpus(args):
    manifest = make_synthetic_corpus(args.n, args.family, args.seed, args.out)
    if args.manifest:
        manifest.save(args.manifest)
    print(f"wrote {manifest.kept} models to {args.out}")
    return EXIT_OK


def _cmd_filter(args):
    paths = sorted(glob.glob(os.path.join(args.in_dir, "*.brep")))
    if not paths:
        raise DataError(f"no .brep files under {args.in_dir}")
    manifest = filter_corpus(paths, args.max_faces, args.max_edges_per_face)
    manifest.save(args.manifest)
    reasons = {k: len(v) for k, v in manifest.drop_reasons.items()}
    print(f"kept {manifest.kept}, dropped {manifest.dropped} {reasons}")
    return EXIT_OK


def _cmd_train(args):
    manifest = CorpusManifest.load(args.manifest)
    train_paths = manifest.train_paths() or manifest.paths()
    if not train_paths:
        raise DataError("manifest lists no training files")
    name = TRAIN_NAME_MAP[args.model]
    system_path = os.path.join(args.out, "system.json")
    if os.path.exists(system_path):
        system = load_system(args.out)
        if args.ablate != system.ablation:
            raise DataError(
                f"checkpoint dir was initialized with ablation={system.ablation!r}"
            )
    else:
        system = build_system(get_preset(args.preset), args.seed, ablation=args.ablate)
    dataset = prepare_dataset(train_paths, system)
    log = train_model(system, dataset, name, args.steps, args.seed, batch_size=args.batch)
    save_system(system, args.out)
    print(
        f"{name}: {log.steps} steps in {log.seconds:.1f}s, "
        f"loss {log.losses[0]:.4f} -> {log.tail_mean():.4f}"
    )
    return EXIT_OK


def _cmd_sample(args):
    system = load_system(args.ckpts)
    if args.ablate != "none" and system.ablation == "none":
        # runtime masking of a model trained unmasked
        system.ev_decoder.conditioner.ablation = args.ablate
    cfg = SampleConfig(snap=not args.no_snap)
    results = generate_batch(system, args.n, args.seed, cfg, workers=args.workers)
    os.makedirs(args.out, exist_ok=True)
    n_ok = n_valid = 0
    for i, res in enumerate(results):
        stem = os.path.join(args.out, f"sample_{i:04d}")
        lines = res.trace.lines()
        if res.ok:
            write_brep(res.model, stem + ".brep")
            lines.append(f"validity={res.report.summary()}")
            n_ok += 1
            n_valid += int(res.valid)
        else:
            lines.append(f"failure={res.failure}")
        with open(stem + ".trace", "w", encoding="utf-8") as fh:
            fh.write("\n".join(lines) + "\n")
    print(f"{n_ok}/{args.n} assembled, {n_valid}/{args.n} valid -> {args.out}")
    return EXIT_OK


def _point_clouds(models, n_points, seed):
    return [
        sample_surface_points(m, n_points, np.random.SeedSequence([seed, i]))
        for i, m in enumerate(models)
    ]


def _cmd_eval(args):
    gen_paths = sorted(glob.glob(os.path.join(args.gen, "*.brep")))
    if not gen_paths:
        raise DataError(f"no generated .brep files under {args.gen}")
    manifest = CorpusManifest.load(args.ref)
    ref_paths = manifest.paths()
    if not ref_paths:
        raise DataError("reference manifest lists no files")
    gen_models = [read_brep(p) for p in gen_paths]
    ref_models = [read_brep(p) for p in ref_paths]
    train_digests = {
        hash_brep(read_brep(p)) for p in (manifest.train_paths() or ref_paths)
    }
    gen_clouds = _point_clouds(gen_models, args.points, args.seed)
    ref_clouds = _point_clouds(ref_models, args.points, args.seed + 1)
    valid, unique, novel = valid_unique_novel(gen_models, train_digests, tol=args.tol)
    report = MetricReport(
        mmd_cd=mmd_cd(gen_clouds, ref_clouds),
        cov_cd=cov_cd(gen_clouds, ref_clouds),
        jsd=jsd_grid(gen_clouds, ref_clouds, args.grid),
        valid=valid,
        unique=unique,
        novel=novel,
        cc=float(np.mean([cyclomatic_complexity(m) for m in gen_models])),
        mc=float(np.mean([mean_curvature_metric(m, 8) for m in gen_models])),
        loops=float(np.mean([boundary_loops_metric(m) for m in gen_models])),
    )
    text = report.text_block()
    with open(args.report, "w", encoding="utf-8") as fh:
        fh.write(text)
    with open(args.report + ".json", "w", encoding="utf-8") as fh:
        json.dump(report.as_dict(), fh, indent=1)
    print(text, end="")
    return EXIT_OK


def _cmd_validate(args):
    m = read_brep(args.in_file)
    report = check_validity(m, tol=args.tol)
    for code, idx, message in report.violations:
        print(f"{code} [{idx}]: {message}")
    for w in report.warnings:
        print(f"warning: {w}")
    print("valid" if report.is_valid else "invalid")
    return EXIT_OK if report.is_valid else EXIT_VALIDITY


def _cmd_export(args):
    from .objexport import export_obj

    m = read_brep(args.in_file)
    export_obj(m, args.obj, tess_n=args.tess)
    print(f"wrote {args.obj}")
    return EXIT_OK


def build_parser():
    p = _Parser(prog="brepsynth", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen-corpus", help="generate a synthetic training corpus")
    g.add_argument("--family", choices=("cuboids", "prisms", "lbrackets", "mixed"), required=True)
    g.add_argument("--n", type=int, required=True)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--out", required=True)
    g.add_argument("--manifest", default=None)
    g.set_defaults(fn=_cmd_gen_corpus)

    f = sub.add_parser("filter", help="filter a corpus directory into a manifest")
    f.add_argument("--in", dest="in_dir", required=True)
    f.add_argument("--max-faces", type=int, default=MAX_FACES_DEFAULT)
    f.add_argument("--max-edges-per-face", type=int, default=MAX_EDGES_PER_FACE_DEFAULT)
    f.add_argument("--manifest", required=True)
    f.set_defaults(fn=_cmd_filter)

    t = sub.add_parser("train", help="train one model into a checkpoint dir")
    t.add_argument("--model", choices=sorted(TRAIN_NAME_MAP), required=True)
    t.add_argument("--manifest", required=True)
    t.add_argument("--preset", choices=("desk", "paper"), default="desk")
    t.add_argument("--steps", type=int, required=True)
    t.add_argument("--seed", type=int, default=0)
    t.add_argument("--batch", type=int, default=16)
    t.add_argument("--ablate", choices=("none", "mask_B", "mask_E"), default="none")
    t.add_argument("--out", required=True)
    t.set_defaults(fn=_cmd_train)

    s = sub.add_parser("sample", help="generate solids from trained checkpoints")
    s.add_argument("--ckpts", required=True)
    s.add_argument("--n", type=int, required=True)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--out", required=True)
    s.add_argument("--no-snap", action="store_true")
    s.add_argument("--ablate", choices=("none", "mask_B", "mask_E"), default="none")
    s.add_argument("--workers", type=int, default=1)
    s.set_defaults(fn=_cmd_sample)

    e = sub.add_parser("eval", help="metric report for generated vs reference")
    e.add_argument("--gen", required=True)
    e.add_argument("--ref", required=True, help="reference corpus manifest")
    e.add_argument("--points", type=int, default=POINTS_PER_CLOUD_DEFAULT)
    e.add_argument("--grid", type=int, default=JSD_GRID_DEFAULT)
    e.add_argument("--tol", type=float, default=GAP_TOL_DEFAULT)
    e.add_argument("--seed", type=int, default=0)
    e.add_argument("--report", required=True)
    e.set_defaults(fn=_cmd_eval)

    v = sub.add_parser("validate", help="validity-check one model file")
    v.add_argument("--in", dest="in_file", required=True)
    v.add_argument("--tol", type=float, default=GAP_TOL_DEFAULT)
    v.set_defaults(fn=_cmd_validate)

    x = sub.add_parser("export", help="tessellate a model to OBJ")
    x.add_argument("--in", dest="in_file", required=True)
    x.add_argument("--obj", required=True)
    x.add_argument("--tess", type=int, default=16)
    x.set_defaults(fn=_cmd_export)
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        return args.fn(args)
    except (DataError, ParseError, FileNotFoundError, json.JSONDecodeError) as err:
        print(f"data error: {err}", file=sys.stderr)
        return EXIT_DATA
    except ValueError as err:
        print(f"data error: {err}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
