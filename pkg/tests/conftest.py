# Pin the BLAS to one thread before numpy loads anywhere: the matrices here
# are small enough that thread fan-out is a net loss, and the acceptance
# budgets are stated for a single core.
import os

for _var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS",
             "NUMEXPR_NUM_THREADS"):
    os.environ.setdefault(_var, "1")

import sys
import time
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from ocsdf import data_io, hkr, lipnet, sampler, trainer


@dataclass
class TrainedModel:
    net: object
    data: data_io.Dataset          # training set (already standardized if stats)
    stats: object                  # StandardizationStats or None
    box: sampler.DomainBox
    report: trainer.TrainReport
    train_seconds: float


def _train(data, net, cfg, box):
    t0 = time.perf_counter()
    net, report = trainer.train(data, net, cfg, box=box)
    return net, report, time.perf_counter() - t0


@pytest.fixture(scope="session")
def disk_model():
    """Width-128 net on the unit disk (5000 pts), m=0.05, lam=100, 10k steps,
    B=[-5,5]^2: the Thm-recovery configuration at desk scale."""
    data = data_io.uniform_disk(5000, np.random.default_rng(0))
    net = lipnet.LipNet.create(2, widths=(128,) * 4,
                               rng=np.random.default_rng(1))
    box = sampler.DomainBox.cube(5.0, 2)
    cfg = trainer.TrainConfig(
        epochs=500, warm_start_epochs=5, batch_size=256,
        hkr=hkr.HKRParams(margin=0.05, lam=100.0),
        sampler=sampler.SamplerConfig(steps_T=4, level_eps=0.05),
        lr_start=1e-3, lr_end=1e-5, seed=0)
    net, report, seconds = _train(data, net, cfg, box)
    return TrainedModel(net=net, data=data, stats=None, box=box,
                        report=report, train_seconds=seconds)


@pytest.fixture(scope="session")
def moons_model():
    """Constrained two-moons model, 10k steps, standardized data."""
    raw = data_io.make_toy("two_moons", 1000, 0.1, np.random.default_rng(10))
    data, stats = data_io.standardize(raw)
    net = lipnet.LipNet.create(2, widths=(128,) * 4,
                               rng=np.random.default_rng(11))
    box = sampler.DomainBox.cube(5.0, 2)
    cfg = trainer.TrainConfig(
        epochs=2500, warm_start_epochs=5, batch_size=256,
        hkr=hkr.HKRParams(margin=0.05, lam=100.0),
        sampler=sampler.SamplerConfig(steps_T=4, level_eps=0.05),
        lr_start=1e-3, lr_end=1e-5, seed=0)
    net, report, seconds = _train(data, net, cfg, box)
    return TrainedModel(net=net, data=data, stats=stats, box=box,
                        report=report, train_seconds=seconds)


@pytest.fixture(scope="session")
def moons_baseline():
    """Unconstrained ReLU+BCE counterpart of moons_model (same data, same
    architecture shape, same number of steps)."""
    raw = data_io.make_toy("two_moons", 1000, 0.1, np.random.default_rng(10))
    data, stats = data_io.standardize(raw)
    net = data_io.baseline_unconstrained_net([2, 128, 128, 128, 128, 1],
                                             rng=np.random.default_rng(20))
    box = sampler.DomainBox.cube(5.0, 2)
    cfg = trainer.TrainConfig(
        epochs=2500, warm_start_epochs=5, batch_size=256,
        sampler=sampler.SamplerConfig(steps_T=4, level_eps=0.05),
        lr_start=1e-3, lr_end=1e-3, seed=0, constrained=False)
    net, report, seconds = _train(data, net, cfg, box)
    return TrainedModel(net=net, data=data, stats=stats, box=box,
                        report=report, train_seconds=seconds)


@pytest.fixture(scope="session")
def sphere_model(tmp_path_factory):
    """Small 3D model trained on a point cloud from the unit sphere surface,
    saved to disk with train scores in the metadata (mesh-command input)."""
    from ocsdf import model_io

    rng = np.random.default_rng(30)
    directions = rng.standard_normal((1500, 3))
    directions /= np.linalg.norm(directions, axis=1, keepdims=True)
    data = data_io.Dataset(points=directions, name="unit_sphere")
    net = lipnet.LipNet.create(3, widths=(64,) * 4,
                               rng=np.random.default_rng(31))
    box = sampler.DomainBox.cube(2.0, 3)
    cfg = trainer.TrainConfig(
        epochs=300, warm_start_epochs=5, batch_size=256,
        hkr=hkr.HKRParams(margin=0.05, lam=100.0),
        sampler=sampler.SamplerConfig(steps_T=4, level_eps=0.05),
        lr_start=1e-3, lr_end=1e-5, seed=0)
    net, report, seconds = _train(data, net, cfg, box)
    path = tmp_path_factory.mktemp("sphere") / "model.json"
    model_io.save_model(net, path, metadata={
        "train_scores": net.forward_batch(data.points).tolist(),
        "standardization": None,
    })
    return TrainedModel(net=net, data=data, stats=None, box=box,
                        report=report, train_seconds=seconds), path
