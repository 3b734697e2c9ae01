"""Unified command-line entry point.

Subcommands: dataset build, train, infer, eval, serve, analyze-depth. Every
artifact-producing run writes a reproducibility manifest (config hash, seeds,
git revision) into its output directory.
"""

from __future__ import annotations

import argparse
import json
import subprocess
import sys
from pathlib import Path

from . import data, depth_edit, metrics, pipeline, training
from .conditions import load_segmentation_png
from .config import ModelConfig, RunConfig, config_hash


def _git_revision() -> str:
    try:
        out = subprocess.run(
            ["git", "rev-parse", "HEAD"], capture_output=True, text=True,
            cwd=Path(__file__).parent, timeout=5,
        )
        return out.stdout.strip() or "unknown"
    except OSError:
        return "unknown"


def write_run_manifest(out_dir: Path, subcommand: str, seeds: dict,
                       config: RunConfig | ModelConfig | None = None,
                       extra: dict | None = None) -> None:
    out_dir.mkdir(parents=True, exist_ok=True)
    manifest = {
        "subcommand": subcommand,
        "argv": sys.argv[1:],
        "config_hash": config_hash(config) if config is not None else None,
        "seeds": seeds,
        "git_revision": _git_revision(),
    }
    if extra:
        manifest.update(extra)
    with open(out_dir / "run_manifest.json", "w") as fh:
        fh.write(json.dumps(manifest, sort_keys=True, indent=2) + "\n")


def _parse_shift(spec: str) -> tuple[str, float]:
    label, _, delta = spec.partition(":")
    if not delta:
        raise argparse.ArgumentTypeError(
            f"shift must look like label:delta (e.g. sky:+0.05), got {spec!r}")
    return label, float(delta)


def cmd_dataset_build(args) -> int:
    out = Path(args.out)
    manifest = data.build_dataset(args.seed, args.count, args.resolution, out,
                                  start_index=args.start_index)
    write_run_manifest(out, "dataset-build", {"seed": args.seed},
                       extra={"count": manifest["count"],
                              "resolution": manifest["resolution"]})
    print(f"wrote {manifest['count']} triplets to {out}")
    return 0


def _load_run_config(args) -> RunConfig:
    run = RunConfig.from_json_file(args.config) if args.config else RunConfig()
    overrides = {}
    for field in ("mode", "steps", "seed", "out_dir", "dataset_path"):
        flag = {"out_dir": "out", "dataset_path": "dataset"}.get(field, field)
        value = getattr(args, flag, None)
        if value is not None:
            overrides[field] = value
    if overrides:
        run = RunConfig.from_dict({**run.to_dict(), **overrides})
    return run


def cmd_train(args) -> int:
    run = _load_run_config(args)
    if not run.dataset_path:
        raise ValueError("train needs a dataset (--dataset or dataset_path in config)")
    dataset = data.load_dataset(run.dataset_path)
    out = Path(run.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    write_run_manifest(out, "train", {"seed": run.seed}, config=run)
    state, reports = training.fit(
        run, dataset,
        log_path=out / "losses.csv",
        checkpoint_path=out / "checkpoint.pt",
    )
    final = reports[-1]
    print(f"trained {run.mode} for {state.step} steps; "
          f"final recon_l1={final.recon_l1:.4f} -> {out / 'checkpoint.pt'}")
    return 0


def cmd_infer(args) -> int:
    s2d = training.InferenceBundle.from_checkpoint(args.s2d)
    sd2i = training.InferenceBundle.from_checkpoint(args.sd2i)
    seg = load_segmentation_png(args.seg, tuple(s2d.cfg.label_set))
    artifacts = pipeline.run_inference(
        seg, s2d, sd2i, args.out,
        n_depths=args.n_depths, pick=args.pick,
        shifts=args.shift, n_images=args.n_images, seed=args.seed,
    )
    write_run_manifest(Path(args.out), "infer", {"seed": args.seed},
                       extra={"n_depths": args.n_depths, "pick": args.pick,
                              "n_images": args.n_images})
    total = len(artifacts.depth_paths) + 1 + len(artifacts.image_paths)
    print(f"wrote {total} PNGs and {artifacts.manifest_path.name} to {artifacts.out_dir}")
    return 0


def cmd_eval(args) -> int:
    bundle = training.InferenceBundle.from_checkpoint(args.checkpoint)
    dataset = data.load_dataset(args.dataset)
    extractor = metrics.default_extractor(bundle.mode)
    report = metrics.evaluate_model(
        bundle, dataset, extractor, seed=args.seed,
        diversity_k=args.diversity_k, model_name=Path(args.checkpoint).stem,
    )
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    metrics.write_eval_csv([report], out / "eval.csv")
    write_run_manifest(out, "eval", {"seed": args.seed}, config=bundle.cfg)
    print(",".join(metrics.EVAL_CSV_HEADER))
    print(",".join(str(v) for v in report.row()))
    return 0


def cmd_analyze_depth(args) -> int:
    dataset = data.load_dataset(args.dataset)
    pairs = [(t.seg, t.depth) for t in dataset]
    label_set = dataset.label_set
    reference = depth_edit.depth_distribution(pairs, label_set, bins=args.bins)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    histograms = reference
    if args.checkpoint:
        bundle = training.InferenceBundle.from_checkpoint(args.checkpoint)
        if bundle.mode != "s2d":
            raise ValueError("analyze-depth --checkpoint must be an s2d model")
        generated = []
        for idx, triplet in enumerate(dataset):
            depth = pipeline.phase1_sample_depths(triplet.seg, 1, args.seed + idx,
                                                  bundle)[0]
            generated.append((triplet.seg, depth))
        histograms = depth_edit.depth_distribution(generated, label_set, bins=args.bins)
        depth_edit.write_distribution_csv(reference, out / "depth_distribution_gt.csv")
    depth_edit.write_distribution_csv(histograms, out / "depth_distribution.csv")
    depth_edit.plot_distribution(histograms, out / "depth_distribution.png",
                                 reference=reference if args.checkpoint else None)
    write_run_manifest(out, "analyze-depth", {"seed": args.seed})
    print(f"wrote depth distribution report to {out}")
    return 0


def cmd_serve(args) -> int:
    import uvicorn

    from .service import create_app

    s2d = training.InferenceBundle.from_checkpoint(args.s2d)
    app = create_app(
        s2d,
        training.InferenceBundle.from_checkpoint(args.sd2i),
        persist_dir=args.persist_dir,
        workers=args.workers,
        static_dir=args.static_dir,
    )
    if args.persist_dir:
        write_run_manifest(Path(args.persist_dir), "serve", {},
                           config=s2d.cfg,
                           extra={"s2d": args.s2d, "sd2i": args.sd2i,
                                  "workers": args.workers})
    uvicorn.run(app, host=args.host, port=args.port, log_level="info")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="depthscape")
    sub = parser.add_subparsers(dest="command", required=True)

    p_dataset = sub.add_parser("dataset", help="dataset utilities")
    dataset_sub = p_dataset.add_subparsers(dest="dataset_command", required=True)
    p_build = dataset_sub.add_parser("build", help="render a procedural dataset")
    p_build.add_argument("--seed", type=int, default=0)
    p_build.add_argument("--count", type=int, default=48)
    p_build.add_argument("--resolution", type=int, default=64)
    p_build.add_argument("--start-index", type=int, default=0)
    p_build.add_argument("--out", required=True)
    p_build.set_defaults(func=cmd_dataset_build)

    p_train = sub.add_parser("train", help="train a model")
    p_train.add_argument("--mode", choices=("s2d", "sd2i", "s2i"))
    p_train.add_argument("--config", help="RunConfig JSON file")
    p_train.add_argument("--dataset")
    p_train.add_argument("--steps", type=int)
    p_train.add_argument("--seed", type=int)
    p_train.add_argument("--out")
    p_train.set_defaults(func=cmd_train)

    p_infer = sub.add_parser("infer", help="two-phase inference")
    p_infer.add_argument("--seg", required=True, help="segmentation PNG")
    p_infer.add_argument("--s2d", required=True, help="s2d checkpoint")
    p_infer.add_argument("--sd2i", required=True, help="sd2i checkpoint")
    p_infer.add_argument("--n-depths", type=int, default=4)
    p_infer.add_argument("--pick", type=int, default=0)
    p_infer.add_argument("--shift", type=_parse_shift, action="append", default=[],
                         help="label:delta, repeatable")
    p_infer.add_argument("--n-images", type=int, default=4)
    p_infer.add_argument("--seed", type=int, default=0)
    p_infer.add_argument("--out", required=True)
    p_infer.set_defaults(func=cmd_infer)

    p_eval = sub.add_parser("eval", help="evaluate a checkpoint")
    p_eval.add_argument("--checkpoint", required=True)
    p_eval.add_argument("--dataset", required=True)
    p_eval.add_argument("--seed", type=int, default=0)
    p_eval.add_argument("--diversity-k", type=int, default=10)
    p_eval.add_argument("--out", required=True)
    p_eval.set_defaults(func=cmd_eval)

    p_an = sub.add_parser("analyze-depth", help="per-label depth distribution report")
    p_an.add_argument("--dataset", required=True)
    p_an.add_argument("--checkpoint", help="optional s2d checkpoint to analyze")
    p_an.add_argument("--bins", type=int, default=20)
    p_an.add_argument("--seed", type=int, default=0)
    p_an.add_argument("--out", required=True)
    p_an.set_defaults(func=cmd_analyze_depth)

    p_serve = sub.add_parser("serve", help="run the studio HTTP service")
    p_serve.add_argument("--s2d", required=True)
    p_serve.add_argument("--sd2i", required=True)
    p_serve.add_argument("--host", default="127.0.0.1")
    p_serve.add_argument("--port", type=int, default=8000)
    p_serve.add_argument("--workers", type=int, default=2)
    p_serve.add_argument("--persist-dir")
    p_serve.add_argument("--static-dir", help="optional built studio UI to serve at /")
    p_serve.set_defaults(func=cmd_serve)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (SystemExit, KeyboardInterrupt):
        raise
    except Exception as err:  # one-line diagnostic, nonzero exit
        print(f"error: {err}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
