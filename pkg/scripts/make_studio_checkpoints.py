#!/usr/bin/env python3
"""Train the pair of desk-scale models the studio service needs.

Renders a procedural dataset in memory, trains the depth-suggestion model
(s2d) and the image model (sd2i), and writes both checkpoints. Defaults give
a presentable demo in roughly twenty CPU-minutes; --s2d-steps/--sd2i-steps
can be lowered for smoke setups.
"""

import argparse
import sys
import time
from pathlib import Path

from depthscape.config import ModelConfig, RunConfig
from depthscape.data import DEFAULT_LABEL_SET, Dataset, SceneParams, generate_scene
from depthscape.training import fit, save_checkpoint


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--out", required=True)
    parser.add_argument("--resolution", type=int, default=64)
    parser.add_argument("--dataset-count", type=int, default=48)
    parser.add_argument("--s2d-steps", type=int, default=600)
    parser.add_argument("--sd2i-steps", type=int, default=900)
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--skip-existing", action="store_true")
    args = parser.parse_args(argv)

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    triplets = [
        generate_scene(SceneParams.sample(args.seed, i), args.resolution)
        for i in range(args.dataset_count)
    ]
    dataset = Dataset(root=None, label_set=DEFAULT_LABEL_SET, triplets=triplets)
    cfg = ModelConfig(output_resolution=args.resolution)

    for mode, steps in (("s2d", args.s2d_steps), ("sd2i", args.sd2i_steps)):
        target = out / f"{mode}.pt"
        if args.skip_existing and target.exists():
            print(f"{target} exists, skipping")
            continue
        run = RunConfig(mode=mode, model=cfg, steps=steps, seed=args.seed,
                        dataset_path="<in-memory>")
        started = time.time()
        state, reports = fit(run, dataset)
        save_checkpoint(state, target)
        print(f"{mode}: {state.step} steps in {time.time() - started:.0f}s, "
              f"final recon_l1={reports[-1].recon_l1:.4f} -> {target}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
