"""Command line entry point: ``coalesce <verb> ...``."""
from __future__ import annotations

import argparse
import hashlib
import json
import logging
import sys
from pathlib import Path

from .config import PipelineConfig, desk_config, load_config
from .synthetic import CATEGORIES

log = logging.getLogger("coalesce")


def _config(args) -> PipelineConfig:
    cat = getattr(args, "category", None)
    path = getattr(args, "config", None)
    if cat and Path(cat).suffix == ".toml":
        path, cat = cat, None
    base = desk_config(cat or "chairlike") if getattr(args, "desk", False) else None
    return load_config(path, category=cat, base=base)


def prepared_dir(data, cfg: PipelineConfig) -> Path:
    key = json.dumps({"category": cfg.to_dict()["category"], "preprocess": cfg.to_dict()["preprocess"], "seed": cfg.seed},
                     sort_keys=True, default=list)
    return Path(data) / f"prepared-{hashlib.sha256(key.encode()).hexdigest()[:10]}"


def _prepared(args, cfg):
    from .train import prepare_dataset

    return prepare_dataset(args.data, cfg, prepared_dir(args.data, cfg))


def cmd_gen_data(args):
    from .synthetic import generate_synthetic

    out = generate_synthetic(args.category, args.count, args.seed, args.out)
    print(f"wrote {args.count} {args.category} shapes to {out}")


def cmd_preprocess(args):
    cfg = _config(args)
    preps = _prepared(args, cfg)
    print(f"prepared {len(preps)} shapes in {prepared_dir(args.data, cfg)}")


def cmd_train_align(args):
    from .train import run_train_align

    cfg = _config(args)
    for key in ("epochs", "lr", "batch"):
        if getattr(args, key) is not None:
            setattr(cfg.align, key, getattr(args, key))
    path, hist = run_train_align(cfg, _prepared(args, cfg), args.out)
    print(f"alignment checkpoint {path}; EMD {hist[0]:.5f} -> {hist[-1]:.5f}")


def cmd_pretrain(args):
    from .train import run_pretrain

    cfg = _config(args)
    if args.epochs is not None:
        cfg.pretrain.epochs = args.epochs
    path, hist = run_pretrain(cfg, _prepared(args, cfg), args.out)
    print(f"pretrained encoders {path}; chamfer {hist[0]:.5f} -> {hist[-1]:.5f}")


def cmd_train_joint(args):
    from .train import run_train_joint

    cfg = _config(args)
    if not Path(args.pretrain).is_file():
        raise FileNotFoundError(f"pretrained encoder checkpoint not found: {args.pretrain}")
    for key, attr in (("stage2_epochs", "stage2_epochs"), ("stage3_epochs", "stage3_epochs"), ("alpha", "alpha"),
                      ("lam", "lam")):
        if getattr(args, key) is not None:
            setattr(cfg.joint, attr, getattr(args, key))
    path, hist = run_train_joint(cfg, _prepared(args, cfg), args.pretrain, args.out)
    print(f"joint checkpoint {path}")


def _part_specs(items) -> list[tuple[str, str]]:
    specs = []
    for item in items:
        shape, sep, label = item.partition(":")
        if not sep:
            raise ValueError(f"part spec {item!r} must look like <shape>:<label>")
        specs.append((shape, label))
    return specs


def cmd_assemble(args):
    from .assemble import Checkpoints, rerun_manifest, run_assembly

    if args.manifest:
        m = rerun_manifest(args.manifest, args.out)
    else:
        cfg = _config(args)
        ck = Checkpoints(Path(args.align), Path(args.joint))
        ck.check()
        specs = _part_specs(args.part)
        m = run_assembly(cfg, args.data, specs, ck, args.out, not args.no_refine, args.refine_iters, args.seed)
    print(f"wrote {args.out} (matched loops {m['stitch']['matched_loops']}, flagged {m['stitch']['flagged']})")


def cmd_evaluate(args):
    from .assemble import Checkpoints, load_networks
    from .evaluate import evaluate_suite
    from .synthetic import load_dataset

    cfg = _config(args)
    ck = Checkpoints(Path(args.align), Path(args.joint))
    ck.check()
    model, enc, dec = load_networks(ck, cfg)
    _, shapes = load_dataset(args.data)
    if args.limit:
        shapes = shapes[: args.limit]
    report = evaluate_suite(cfg, shapes, model, enc, dec, args.perturbation, args.samples, not args.absolute, args.seed)
    report.write(args.out)
    print(report.table())


def cmd_perturb(args):
    from .evaluate import perturb_shape
    from .synthetic import load_shape, save_shape

    shape = load_shape(Path(args.data) / args.shape)
    out = perturb_shape(shape, args.mode, args.seed)
    save_shape(args.out, out)
    print(f"wrote {args.mode}-perturbed {args.shape} to {args.out}")


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="coalesce", description="Assemble mesh parts with synthesized joints.")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="verb", required=True)

    def common(sp, data=True):
        sp.add_argument("--category", help="category name or a TOML config file")
        sp.add_argument("--config", help="TOML config file")
        sp.add_argument("--desk", action="store_true", help="start from the small desk-scale preset")
        if data:
            sp.add_argument("--data", required=True, help="dataset directory")

    sp = sub.add_parser("gen-data", help="write a synthetic labeled-part dataset")
    sp.add_argument("--category", required=True, choices=sorted(CATEGORIES))
    sp.add_argument("--count", type=int, default=8)
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--out", required=True)
    sp.set_defaults(fn=cmd_gen_data)

    sp = sub.add_parser("preprocess", help="sample, erode and voxelize every shape")
    common(sp)
    sp.set_defaults(fn=cmd_preprocess)

    sp = sub.add_parser("train-align", help="train the part alignment network")
    common(sp)
    sp.add_argument("--out", required=True)
    sp.add_argument("--epochs", type=int)
    sp.add_argument("--lr", type=float)
    sp.add_argument("--batch", type=int)
    sp.set_defaults(fn=cmd_train_align)

    sp = sub.add_parser("pretrain-enc", help="pretrain the joint encoders as auto-encoders")
    common(sp)
    sp.add_argument("--out", required=True)
    sp.add_argument("--epochs", type=int)
    sp.set_defaults(fn=cmd_pretrain)

    sp = sub.add_parser("train-joint", help="train the joint decoder (and fine-tune the encoders)")
    common(sp)
    sp.add_argument("--pretrain", required=True)
    sp.add_argument("--out", required=True)
    sp.add_argument("--stage2-epochs", dest="stage2_epochs", type=int)
    sp.add_argument("--stage3-epochs", dest="stage3_epochs", type=int)
    sp.add_argument("--alpha", type=float)
    sp.add_argument("--lambda", dest="lam", type=float)
    sp.set_defaults(fn=cmd_train_joint)

    sp = sub.add_parser("assemble", help="assemble parts into one stitched mesh")
    sp.add_argument("--category", help="category name or a TOML config file")
    sp.add_argument("--config")
    sp.add_argument("--desk", action="store_true")
    sp.add_argument("--data")
    sp.add_argument("--align")
    sp.add_argument("--joint")
    sp.add_argument("--part", action="append", default=[], help="<shape>:<label>, repeatable")
    sp.add_argument("--manifest", help="repeat the run recorded in this manifest")
    sp.add_argument("--out", required=True)
    sp.add_argument("--no-refine", action="store_true")
    sp.add_argument("--refine-iters", type=int)
    sp.add_argument("--seed", type=int, default=0)
    sp.set_defaults(fn=cmd_assemble)

    sp = sub.add_parser("evaluate", help="stage-by-stage chamfer of self-assembly")
    common(sp)
    sp.add_argument("--align", required=True)
    sp.add_argument("--joint", required=True)
    sp.add_argument("--out", required=True)
    sp.add_argument("--perturbation", default="none", choices=("none", "sine", "similarity"))
    sp.add_argument("--samples", type=int, default=16384)
    sp.add_argument("--absolute", action="store_true", help="unsquared nearest-neighbour distances")
    sp.add_argument("--limit", type=int, default=0)
    sp.add_argument("--seed", type=int, default=0)
    sp.set_defaults(fn=cmd_evaluate)

    sp = sub.add_parser("perturb", help="write a perturbed copy of one shape")
    sp.add_argument("--data", required=True)
    sp.add_argument("--shape", required=True)
    sp.add_argument("--mode", required=True, choices=("sine", "similarity"))
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--out", required=True)
    sp.set_defaults(fn=cmd_perturb)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(name)s: %(message)s")
    try:
        args.fn(args)
    except (FileNotFoundError, ValueError, KeyError, RuntimeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
