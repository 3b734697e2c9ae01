#!/usr/bin/env python3
"""End-to-end desk run: build data, train both models, run the two-phase
pipeline and the evaluation harness, and leave every artifact in one folder.

    python3 scripts/desk_demo.py --out runs/demo --steps 400
"""

import argparse
import subprocess
import sys
from pathlib import Path


def sh(*args: str) -> None:
    print("+", " ".join(args))
    subprocess.run(args, check=True)


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--out", default="runs/demo")
    parser.add_argument("--steps", type=int, default=400)
    parser.add_argument("--seed", type=int, default=0)
    args = parser.parse_args(argv)

    out = Path(args.out)
    data_dir = out / "data"
    cli = [sys.executable, "-m", "depthscape.cli"]

    sh(*cli, "dataset", "build", "--seed", str(args.seed), "--count", "48",
       "--resolution", "64", "--out", str(data_dir))
    for mode in ("s2d", "sd2i"):
        sh(*cli, "train", "--mode", mode, "--dataset", str(data_dir),
           "--steps", str(args.steps), "--seed", str(args.seed),
           "--out", str(out / f"train_{mode}"))
    seg = sorted((data_dir / "seg").glob("*.png"))[0]
    sh(*cli, "infer", "--seg", str(seg),
       "--s2d", str(out / "train_s2d" / "checkpoint.pt"),
       "--sd2i", str(out / "train_sd2i" / "checkpoint.pt"),
       "--n-depths", "4", "--pick", "0", "--shift", "sky:+0.02",
       "--n-images", "4", "--seed", str(args.seed), "--out", str(out / "infer"))
    sh(*cli, "eval", "--checkpoint", str(out / "train_sd2i" / "checkpoint.pt"),
       "--dataset", str(data_dir), "--out", str(out / "eval"))
    sh(*cli, "analyze-depth", "--dataset", str(data_dir),
       "--checkpoint", str(out / "train_s2d" / "checkpoint.pt"),
       "--out", str(out / "analyze"))
    print(f"\nDemo artifacts under {out}/")
    return 0


if __name__ == "__main__":
    sys.exit(main())
