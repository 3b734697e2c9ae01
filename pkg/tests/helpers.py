import numpy as np
import torch


def cond_tensors(cfg, batch=1, seed=0, with_depth=True):
    """Random one-hot segmentation and depth tensors at cfg's resolution."""
    rng = np.random.default_rng(seed)
    res, n = cfg.output_resolution, cfg.num_labels
    labels = rng.integers(0, n, (batch, res, res))
    seg = torch.from_numpy(
        np.eye(n, dtype=np.float32)[labels].transpose(0, 3, 1, 2)
    ).contiguous()
    depth = None
    if with_depth:
        depth = torch.from_numpy(rng.uniform(0, 1, (batch, 1, res, res)).astype(np.float32))
    return seg, depth
