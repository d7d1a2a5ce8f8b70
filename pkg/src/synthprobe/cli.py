"""Command line entry point: ``synthprobe <command> [--config c.json] [--seed N] [--out DIR]``.

Exit status is 0 on success, 1 for invalid input and 2 for any other failure.
"""
from __future__ import annotations

import argparse
import csv
import sys
from pathlib import Path

from .classify import LinearClassifier
from .errors import ValidationError
from .evaluation import emit_report
from .experiments import (
    ExperimentConfig,
    build_world,
    make_context,
    real_pool,
    run_shape_ablation,
    run_texture_matrix,
    run_vcnn,
    run_view_ablation,
    test_set,
)
from .experiments.config import derive_seed
from .experiments.pipeline import (
    BACKGROUND,
    build_extractor,
    evaluate_detectors,
    fit_adapter,
    patch_features,
    proposal_features,
    proposals_for,
    sample_patches,
    train_detectors,
)
from .experiments.plot import plot_curve
from .features import Adapter, adapt_many, random_convnet, save_convnet
from .geometry import FIXTURE_KINDS, FixtureSpec, make_fixture, save_obj
from .images import write_image
from .scene import make_pool, read_manifest, write_manifest

COMMANDS = ("gen", "train", "eval", "matrix", "views", "shapes", "vcnn", "fixtures")


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise ValidationError(f"{self.prog}: {message}")


def build_parser():
    common = _Parser(add_help=False)
    common.add_argument("--config", help="JSON config file; every field optional")
    common.add_argument("--seed", type=int, help="master seed (overrides experiment.seed)")
    common.add_argument("--out", help="output directory")
    common.add_argument("--format", choices=("csv", "json"), default="json", help="report format")

    parser = _Parser(prog="synthprobe", description="Synthetic-render detector experiments.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    gen = sub.add_parser("gen", parents=[common], help="render a labeled dataset")
    gen.add_argument("--domain", choices=("virtual", "real", "test"), default="virtual")
    gen.add_argument("--n", type=int, help="image count (default: per-category setting x categories)")
    train = sub.add_parser("train", parents=[common], help="train per-category SVMs on a manifest")
    train.add_argument("--manifest", required=True)
    ev = sub.add_parser("eval", parents=[common], help="evaluate saved classifiers on a manifest")
    ev.add_argument("--classifiers", required=True, help="directory written by train")
    ev.add_argument("--manifest", required=True)
    sub.add_parser("matrix", parents=[common], help="texture/background preset matrix")
    sub.add_parser("views", parents=[common], help="view-removal ablation on the real pool")
    sub.add_parser("shapes", parents=[common], help="all meshes vs a fraction of them")
    sub.add_parser("vcnn", parents=[common], help="virtual plus k real images per category")
    sub.add_parser("fixtures", parents=[common], help="procedural meshes, pools and net weights")
    return parser


def resolve(args):
    cfg = ExperimentConfig.load(args.config) if args.config else ExperimentConfig()
    if args.seed is not None:
        if not 0 <= args.seed < 2 ** 64:
            raise ValidationError("--seed must be an unsigned 64-bit integer")
        cfg.experiment.seed = args.seed
    out = Path(args.out or cfg.out or "out")
    return cfg, cfg.experiment.seed, out


def _report_path(out, name, fmt):
    return out / f"{name}.{fmt}"


def cmd_gen(args, cfg, seed, out):
    world = build_world(cfg, seed)
    if args.domain == "virtual":
        n = args.n or cfg.experiment.virtual_per_category * len(world.categories)
        ds = world.render_virtual(cfg.scene.preset, n, derive_seed(seed, "gen", cfg.scene.preset))
    elif args.domain == "test":
        ds = test_set(world, cfg, seed)
    else:
        ds = real_pool(world, cfg, seed)
    if args.n and args.domain != "virtual":
        ds = ds.subset(it.id for it in ds.items[: args.n])
    write_manifest(ds, out / "manifest.jsonl")
    return {"domain": args.domain, "images": len(ds)}


def cmd_train(args, cfg, seed, out):
    ds = read_manifest(args.manifest)
    extractor = build_extractor(cfg.extractor)
    samples = sample_patches(ds, cfg.sampler.spec(), derive_seed(seed, "patches"))
    labels = [s[2] for s in samples]
    X = patch_features(ds, samples, extractor, base=True)
    if cfg.extractor.adapter:
        adapter = fit_adapter(X, labels, cfg.extractor, derive_seed(seed, "adapter"))
        adapter.save(out / "adapter.json")
        X = adapt_many(adapter, X)
    cats = ds.categories
    detectors = train_detectors(X, labels, cats, cfg.classifier, seed)
    for cat, clf in detectors.items():
        clf.save(out / f"{cat}.json")
    return {"manifest": str(args.manifest), "categories": cats, "windows": len(samples),
            "background_windows": labels.count(BACKGROUND)}


def cmd_eval(args, cfg, seed, out):
    cdir = Path(args.classifiers)
    files = sorted(p for p in cdir.glob("*.json") if p.name not in ("adapter.json", "fingerprint.json"))
    if not files:
        raise ValidationError(f"no classifier files in {cdir}")
    detectors = {}
    for p in files:
        clf = LinearClassifier.load(p)
        detectors[clf.category or p.stem] = clf
    extractor = build_extractor(cfg.extractor)
    if (cdir / "adapter.json").exists():
        extractor = extractor.with_adapter(Adapter.load(cdir / "adapter.json"))
    dims = {clf.dim for clf in detectors.values()}
    if dims != {extractor.dim}:
        raise ValidationError(f"classifier dims {sorted(dims)} do not match extractor dim {extractor.dim}")
    ds = read_manifest(args.manifest)
    props = proposals_for(cfg.classifier, ds.items[0].size)
    feats = proposal_features(ds, props, extractor)
    cats = sorted(set(detectors) | set(ds.categories))
    report = evaluate_detectors(detectors, feats, props, ds, cfg.classifier, cats,
                                {"fingerprint": cfg.fingerprint(), "seed": seed,
                                 "extractor": extractor.describe()})
    emit_report(report, args.format, _report_path(out, "report", args.format))
    return {"mAP": report.mAP}


def cmd_matrix(args, cfg, seed, out):
    result = run_texture_matrix(cfg, ctx=make_context(cfg, seed))
    for name, report in result.rows.items():
        emit_report(report, args.format, _report_path(out, name, args.format))
    return {"mAP": {k: r.mAP for k, r in result.rows.items()}}


def cmd_views(args, cfg, seed, out):
    ctx = make_context(cfg, seed)
    report = run_view_ablation(real_pool(ctx.world, cfg, seed), cfg.experiment.removal, cfg, ctx=ctx)
    emit_report(report, args.format, _report_path(out, f"views-{cfg.experiment.removal}", args.format))
    return {"mAP": report.mAP}


def cmd_shapes(args, cfg, seed, out):
    ctx = make_context(cfg, seed)
    full, reduced = run_shape_ablation(ctx.world.meshes_by_category(), cfg.experiment.shape_fraction,
                                       cfg, ctx=ctx)
    emit_report(full, args.format, _report_path(out, "shapes-all", args.format))
    emit_report(reduced, args.format, _report_path(out, "shapes-reduced", args.format))
    return {"mAP": {"all": full.mAP, "reduced": reduced.mAP}}


def cmd_vcnn(args, cfg, seed, out):
    adapter = cfg.extractor.adapter
    curve = run_vcnn(cfg.experiment.vcnn_virtual_n, cfg.experiment.real_ks, adapter, cfg,
                     ctx=make_context(cfg, seed))
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "curve.csv", "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["k", "mAP", "adapter", "backend"])
        for k, report in curve:
            writer.writerow([k, f"{report.mAP:.6f}", int(bool(adapter)), cfg.extractor.backend])
    for k, report in curve:
        emit_report(report, args.format, _report_path(out, f"vcnn-k{k}", args.format))
    name = f"{cfg.extractor.backend}, adapter {'on' if adapter else 'off'}"
    plot_curve({name: [(k, r.mAP) for k, r in curve]}, out / "curve.svg")
    return {"mAP": {str(k): r.mAP for k, r in curve}}


def cmd_fixtures(args, cfg, seed, out):
    for sub in ("meshes", "backgrounds"):
        (out / sub).mkdir(parents=True, exist_ok=True)
    for kind in FIXTURE_KINDS:
        save_obj(make_fixture(FixtureSpec(kind)), out / "meshes" / f"{kind}.obj")
    size = max(cfg.scene.width, cfg.scene.height)
    for i, img in enumerate(make_pool("background", cfg.scene.pool_size, derive_seed(seed, "bg"), size)):
        write_image(out / "backgrounds" / f"bg{i:02d}.ppm", img)
    net = random_convnet(cfg.extractor.net_seed, hidden=cfg.extractor.net_hidden)
    save_convnet(net, out / "convnet.bin")
    return {"meshes": list(FIXTURE_KINDS), "backgrounds": cfg.scene.pool_size}


HANDLERS = {
    "gen": cmd_gen, "train": cmd_train, "eval": cmd_eval, "matrix": cmd_matrix, "views": cmd_views,
    "shapes": cmd_shapes, "vcnn": cmd_vcnn, "fixtures": cmd_fixtures,
}


def main(argv=None):
    try:
        args = build_parser().parse_args(argv)
        cfg, seed, out = resolve(args)
        out.mkdir(parents=True, exist_ok=True)
        summary = HANDLERS[args.command](args, cfg, seed, out)
        cfg.write_fingerprint(out, {"command": args.command, "seed": seed, "result": summary})
    except ValidationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:  # noqa: BLE001 - reported, not swallowed
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
