#!/usr/bin/env python3
"""Profile the per-sample optimization oracle: fit each shape of a small
2D set with T-step SGD and report IoU along the trajectory.

Useful for tuning (T, eta, batch) before any field training; the final
column is the ceiling any weight-predicting field can hope to reach.
"""

import argparse
import sys

import numpy as np

from hyperfield.evaluate import analytic_grid, iou, rasterize
from hyperfield.shapes import FAMILIES_2D, sample_shape
from hyperfield.tasknet import TaskNetSpec, init_theta, per_sample_optimize
from hyperfield.trainer import STREAM_INIT, STREAM_ORACLE, derive_rng


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--shapes", type=int, default=8)
    ap.add_argument("--T", type=int, default=8192)
    ap.add_argument("--eta", type=float, default=1.0)
    ap.add_argument("--batch", type=int, default=512)
    ap.add_argument("--task-dims", default="2,32,32,1")
    ap.add_argument("--resolution", type=int, default=128)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args(argv)

    spec = TaskNetSpec(tuple(int(d) for d in args.task_dims.split(",")))
    theta0 = init_theta(spec, derive_rng(args.seed, STREAM_INIT))
    checkpoints = sorted({0, args.T // 8, args.T // 4, args.T // 2,
                          3 * args.T // 4, args.T})

    print("shape_id,family," + ",".join(f"iou_t{t}" for t in checkpoints))
    finals = []
    for i in range(args.shapes):
        family = FAMILIES_2D[i % len(FAMILIES_2D)]
        sample = sample_shape(family, derive_rng(args.seed, STREAM_ORACLE, i),
                              shape_id=i)
        snaps = dict(per_sample_optimize(
            sample, spec, theta0, args.T, args.eta,
            record_every=max(args.T // 8, 1),
            rng=derive_rng(args.seed, STREAM_ORACLE, i, 1),
            batch_size=args.batch))
        truth = analytic_grid(sample, args.resolution)
        row = [iou(rasterize(snaps[t], args.resolution), truth)
               for t in checkpoints]
        finals.append(row[-1])
        print(f"{i},{family}," + ",".join(f"{v:.4f}" for v in row))
    print(f"# final IoU mean={np.mean(finals):.4f} min={np.min(finals):.4f}",
          file=sys.stderr)
    return 0


if __name__ == "__main__":
    sys.exit(main())
