#!/usr/bin/env python3
"""Shape reconstruction from a 3D point cloud: fit the signed distance field
to the cloud with the tabular hyperparameters, then extract the iso-surface
at the first percentile of the train scores and export an OBJ mesh.

The input CSV needs a header and three numeric columns (x, y, z).

Example:
    python scripts/pointcloud_mesh.py --data cloud.csv --resolution 200 \
        --out shape.obj
"""

import argparse
import os

for var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
    os.environ.setdefault(var, os.environ.get("OCSDF_THREADS", "1"))

import numpy as np

from ocsdf import geometry, lipnet, trainer
from ocsdf.data_io import domain_box, load_csv, standardize
from ocsdf.hkr import HKRParams
from ocsdf.sampler import DomainBox, SamplerConfig


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--data", required=True)
    ap.add_argument("--width", type=int, default=128)
    ap.add_argument("--epochs", type=int, default=40)
    ap.add_argument("--margin", type=float, default=0.05)
    ap.add_argument("--resolution", type=int, default=200)
    ap.add_argument("--percentile", type=float, default=1.0)
    ap.add_argument("--mesh-half-width", type=float, default=2.5,
                    help="half width of the voxelized cube, standardized units")
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--out", default="shape.obj")
    args = ap.parse_args()

    raw = load_csv(args.data)
    if raw.dim != 3:
        raise SystemExit(f"need 3 columns, got {raw.dim}")
    data, _ = standardize(raw)
    box = domain_box(data)
    cfg = trainer.TrainConfig(
        epochs=args.epochs, warm_start_epochs=5, batch_size=128,
        hkr=HKRParams(margin=args.margin, lam=100.0),
        sampler=SamplerConfig(steps_T=4, level_eps=args.margin),
        lr_start=1e-3, lr_end=1e-5, seed=args.seed)
    net = lipnet.LipNet.create(3, widths=(args.width,) * 4,
                               rng=np.random.default_rng(args.seed + 1))
    net, report = trainer.train(data, net, cfg, box=box)
    print(f"trained {len(report.risks)} steps, final risk "
          f"{report.risks[-1]:.4f}")

    level = geometry.choose_level(net.forward_batch(data.points),
                                  args.percentile)
    mesh_box = DomainBox.cube(args.mesh_half_width, 3)
    grid = geometry.voxelize(net.forward_batch, mesh_box, args.resolution)
    mesh = geometry.marching_cubes(grid, level)
    geometry.export_obj(mesh, args.out)
    print(f"level {level:.4f}: {len(mesh.vertices)} vertices, "
          f"{len(mesh.faces)} faces -> {args.out} (standardized coordinates)")


if __name__ == "__main__":
    main()
