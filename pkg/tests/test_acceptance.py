"""Acceptance suite: one test per release criterion, each printing a
PASS/FAIL line with its measured numbers and runtime.

The expensive trained models (disk, two-moons constrained, two-moons ReLU
baseline, 3D sphere) are session fixtures shared with the rest of the suite;
their training time is charged to the criteria that require the training
itself (3 and 6), while evaluation-only criteria (2, 5) are timed on top of
the prebuilt models.
"""

import os
import time

import numpy as np
import pytest

from helpers import auroc_pairwise, central_diff_input_gradient
from ocsdf import cli, lipnet, metrics, trainer
from ocsdf import data_io, hkr, sampler
from ocsdf.attacks import AttackConfig, auroc_under_attack
from ocsdf.geometry import marching_cubes, mesh_edge_face_counts, voxelize
from ocsdf.metrics import ScorePair, auroc, certified_auroc, certified_auroc_curve
from ocsdf.sampler import DomainBox, uniform_in_box


def report(number, ok, detail):
    status = "PASS" if ok else "FAIL"
    print(f"[criterion {number}] {status}: {detail}")
    assert ok, f"criterion {number}: {detail}"


def test_criterion_1_orthogonality_suite():
    """100 random layers up to 512x512, 15 projection iterations, residual
    <= 1e-5 each, under 30 s."""
    rng = np.random.default_rng(2024)
    t0 = time.perf_counter()
    worst = 0.0
    for _ in range(100):
        rows = int(rng.integers(1, 513))
        cols = int(rng.integers(1, 513))
        scale = rng.uniform(0.3, 2.5)
        raw = scale * _orthogonal(rows, cols, rng)
        layer = lipnet.OrthoDense(raw)
        worst = max(worst, lipnet.orthogonality_residual(layer.theta()))
    elapsed = time.perf_counter() - t0
    report(1, worst <= 1e-5 and elapsed < 30.0,
           f"max residual {worst:.2e} over 100 layers in {elapsed:.1f}s")


def _orthogonal(rows, cols, rng):
    A = rng.standard_normal((max(rows, cols), min(rows, cols)))
    Q, _ = np.linalg.qr(A)
    return np.ascontiguousarray(Q if rows >= cols else Q.T)


def test_criterion_2_lipschitz_gradient_suite(disk_model):
    """1e4 probes on a trained and a random projected net: gradient norms and
    pairwise ratios <= 1 + 1e-3; analytic vs central-difference gradients
    within rel 1e-4 on >= 95% of probes; under 1 min."""
    t0 = time.perf_counter()
    rng = np.random.default_rng(7)
    rand_net = lipnet.LipNet.create(2, widths=(128,) * 4,
                                    rng=np.random.default_rng(77))
    box = disk_model.box
    checks = []
    for net in (disk_model.net, rand_net):
        P = uniform_in_box(box, rng, 10_000)
        Q = uniform_in_box(box, rng, 10_000)
        norms = np.linalg.norm(net.input_gradients(P), axis=1)
        checks.append(norms.max() <= 1 + 1e-3)
        ratio = np.abs(net.forward_batch(P) - net.forward_batch(Q))
        ratio /= np.linalg.norm(P - Q, axis=1)
        checks.append(ratio.max() <= 1 + 1e-3)

    probes = uniform_in_box(box, rng, 400)
    grads = disk_model.net.input_gradients(probes)
    good = 0
    for x, g in zip(probes, grads):
        fd = central_diff_input_gradient(
            lambda p: disk_model.net.forward_batch(p[None])[0], x)
        scale = max(np.abs(fd).max(), 1e-8)
        good += np.abs(g - fd).max() <= 1e-4 * scale
    frac = good / len(probes)
    elapsed = time.perf_counter() - t0
    report(2, all(checks) and frac >= 0.95 and elapsed < 60.0,
           f"bounds {checks}, finite-diff agreement {frac:.1%}, {elapsed:.1f}s")


def test_criterion_3_sdf_recovery_on_disk(disk_model):
    """Unit disk, width-128, m=0.05, lam=100, 10k steps: mean deviation of
    f - m from the true inside distance <= 0.15; training < 10 min."""
    net = disk_model.net
    g = np.linspace(-1.0, 1.0, 50)
    gx, gy = np.meshgrid(g, g)
    P = np.column_stack([gx.ravel(), gy.ravel()])
    P = P[np.linalg.norm(P, axis=1) <= 1.0]
    err = np.abs((net.forward_batch(P) - 0.05)
                 - (1.0 - np.linalg.norm(P, axis=1)))
    ok = err.mean() <= 0.15 and disk_model.train_seconds < 600.0
    report(3, ok, f"mean |f-m - sdf| = {err.mean():.4f} (max {err.max():.4f}) "
                  f"on {len(P)} probes; trained 10k steps in "
                  f"{disk_model.train_seconds:.0f}s")


def test_criterion_4_certified_auroc_exactness():
    """Rank-based AUROC equals pairwise enumeration exactly for sides up to
    200, certified(0) == auroc, curves non-increasing; under 5 s."""
    rng = np.random.default_rng(11)
    t0 = time.perf_counter()
    ok = True
    for trial in range(40):
        n_pos = int(rng.integers(1, 201))
        n_neg = int(rng.integers(1, 201))
        # quantized scores force plenty of exact ties
        pos = np.round(rng.normal(0.5, 1.0, n_pos), 1)
        neg = np.round(rng.normal(-0.5, 1.0, n_neg), 1)
        pair = ScorePair(pos, neg)
        ok &= auroc(pair) == auroc_pairwise(pos, neg)
        eps = float(rng.uniform(0, 1))
        ok &= certified_auroc(pair, eps) == auroc_pairwise(pos - 2 * eps, neg)
        ok &= certified_auroc(pair, 0.0) == auroc(pair)
        curve = certified_auroc_curve(pair, [0.0, 0.1, 0.25, 0.7])
        ok &= bool(np.all(np.diff(curve) <= 0))
    elapsed = time.perf_counter() - t0
    report(4, ok and elapsed < 5.0,
           f"40 randomized score sets exact vs brute force in {elapsed:.1f}s")


def test_criterion_5_certificate_soundness_end_to_end(moons_model):
    """Trained two-moons model: 40-step, 3-restart PGD at eps in
    {0.05, 0.1, 0.2} never beats the certificate; clean AUROC >= 0.95;
    evaluation under 5 min."""
    t0 = time.perf_counter()
    net = moons_model.net
    test_raw = data_io.make_toy("two_moons", 300, 0.1,
                                np.random.default_rng(12))
    pos = moons_model.stats.apply(test_raw.points)
    neg = uniform_in_box(moons_model.box, np.random.default_rng(13), 300)
    scores = ScorePair(net.forward_batch(pos), net.forward_batch(neg))
    clean = auroc(scores)
    lines = [f"clean={clean:.4f}"]
    ok = clean >= 0.95
    for eps in (0.05, 0.1, 0.2):
        certified = certified_auroc(scores, eps)
        cfg = AttackConfig(radius_eps=eps, steps=40, restarts=3)
        attacked = auroc_under_attack(net, pos, neg, cfg,
                                      np.random.default_rng(14))
        ok &= attacked >= certified
        ok &= attacked <= clean + 1e-12
        lines.append(f"eps={eps}: attacked {attacked:.4f} >= certified "
                     f"{certified:.4f}")
    elapsed = time.perf_counter() - t0
    report(5, ok and elapsed < 300.0,
           "; ".join(lines) + f"; eval {elapsed:.0f}s")


def test_criterion_6_llc_blowup_vs_constrained(moons_model, moons_baseline):
    """Unconstrained ReLU+BCE two-moons baseline after 10k steps has an LLC
    lower bound > 10; the constrained counterpart stays <= 1.001; total
    training under 10 min."""
    llc_baseline = metrics.llc_lower_bound(moons_baseline.net,
                                           moons_baseline.data.points)
    llc_constrained = metrics.llc_lower_bound(moons_model.net,
                                              moons_model.data.points)
    total = moons_model.train_seconds + moons_baseline.train_seconds
    ok = llc_baseline > 10.0 and llc_constrained <= 1.001 and total < 600.0
    report(6, ok, f"baseline LLC {llc_baseline:.1f} > 10, constrained "
                  f"{llc_constrained:.4f} <= 1.001; trainings {total:.0f}s")


def test_criterion_7_ionosphere_spot_check():
    """Tabular AD protocol on a user-supplied Ionosphere CSV: best-margin
    mean AUROC within 5 points of 80.2 over 5 seeds; under 20 min. Skipped
    when the data file is not provided."""
    path = os.environ.get("OCSDF_IONOSPHERE_CSV")
    if not path or not os.path.exists(path):
        pytest.skip("optional: set OCSDF_IONOSPHERE_CSV to an Ionosphere CSV "
                    "export (features + binary 'label' column, 1 = anomaly)")
    t0 = time.perf_counter()
    raw = data_io.load_csv(path, label_column="label")
    assert raw.n == 351 and raw.dim == 33, "expected the 351x33 ODDS export"
    assert int(raw.labels.sum()) == 126, "expected 126 anomalies"
    data, _ = data_io.standardize(raw)
    box = data_io.domain_box(data)
    margins = (0.01, 0.05, 0.2, 1.0)
    best = -1.0
    for margin in margins:
        aurocs = []
        for seed in range(5):
            cfg = trainer.TrainConfig(
                epochs=40, warm_start_epochs=5, batch_size=128,
                hkr=hkr.HKRParams(margin=margin, lam=100.0),
                sampler=sampler.SamplerConfig(steps_T=4, level_eps=margin),
                lr_start=1e-3, lr_end=1e-5, seed=seed)
            net = lipnet.LipNet.create(
                data.dim, widths=(128,) * 4,
                rng=np.random.default_rng(1000 + seed))
            net, _ = trainer.train(data, net, cfg, box=box)
            pair = ScorePair(net.forward_batch(data.normals()),
                             net.forward_batch(data.anomalies()))
            aurocs.append(auroc(pair))
        best = max(best, float(np.mean(aurocs)))
    elapsed = time.perf_counter() - t0
    ok = abs(100.0 * best - 80.2) <= 5.0 and elapsed < 1200.0
    report(7, ok, f"best-margin mean AUROC {100 * best:.1f} vs 80.2 +- 5 "
                  f"in {elapsed:.0f}s")


def test_criterion_8_geometry_suite():
    """Analytic sphere, 64^3 grid: all vertex radii within 1.5 spacings of R,
    closed mesh, doubling the resolution halves the max radius error; under
    1 min."""
    t0 = time.perf_counter()
    field = lambda P: 1.0 - np.linalg.norm(P, axis=1)
    box = DomainBox.cube(1.5, 3)
    errors = {}
    checks = []
    for res in (64, 128):
        grid = voxelize(field, box, res)
        mesh = marching_cubes(grid, 0.0)
        radii = np.linalg.norm(mesh.vertices, axis=1)
        errors[res] = np.abs(radii - 1.0).max()
        if res == 64:
            checks.append(errors[res] <= 1.5 * grid.spacing.max())
            counts = mesh_edge_face_counts(mesh)
            checks.append(set(counts.values()) == {2})
    checks.append(errors[128] <= errors[64] / 2.0)
    elapsed = time.perf_counter() - t0
    report(8, all(checks) and elapsed < 60.0,
           f"64^3 max radius err {errors[64]:.2e}, 128^3 {errors[128]:.2e}, "
           f"closed mesh; {elapsed:.1f}s")


def test_criterion_9_cli_determinism(tmp_path, sphere_model):
    """Every CLI command, run twice with the same seed and paths, produces
    byte-identical output bodies."""
    t0 = time.perf_counter()
    _, sphere_path = sphere_model
    root = tmp_path

    data_csv = root / "data.csv"
    eval_csv = root / "eval.csv"
    rng = np.random.default_rng(5)
    pos = data_io.make_toy("two_moons", 96, 0.08, rng).points
    neg = uniform_in_box(DomainBox.cube(3.0, 2), rng, 96)
    data_io.save_csv(data_io.Dataset(
        points=np.vstack([pos, neg]),
        labels=np.array([0] * 96 + [1] * 96)), eval_csv)

    config = {
        "data": str(data_csv),
        "standardize": True,
        "seed": 3,
        "out": str(root / "run"),
        "net": {"widths": [16, 16]},
        "train": {"epochs": 4, "warm_start_epochs": 1, "batch_size": 64,
                  "margin": 0.05, "lam": 100.0, "steps_t": 2},
    }
    cfg_path = root / "cfg.json"
    import json
    cfg_path.write_text(json.dumps(config))

    commands = {
        "toygen": (["toygen", "--name", "two_moons", "--n", "192",
                    "--noise", "0.08", "--seed", "0", "--out", data_csv],
                   [data_csv]),
        "train": (["train", "--config", cfg_path],
                  [root / "run" / "model.json", root / "run" / "report.csv"]),
        "score": (["score", "--model", root / "run" / "model.json",
                   "--data", data_csv, "--out", root / "scores.csv"],
                  [root / "scores.csv"]),
        "certify": (["certify", "--model", root / "run" / "model.json",
                     "--data", eval_csv, "--eps-list", "0,0.05,0.1",
                     "--out", root / "cert.csv"],
                    [root / "cert.csv"]),
        "attack": (["attack", "--model", root / "run" / "model.json",
                    "--data", eval_csv, "--eps", "0.05", "--steps", "5",
                    "--seed", "1", "--out", root / "atk.csv"],
                   [root / "atk.csv"]),
        "contour": (["contour", "--model", root / "run" / "model.json",
                     "--bounds", "-3", "3", "--resolution", "32",
                     "--out", root / "cont"],
                    [root / "cont" / "grid.csv", root / "cont" / "contour.pgm"]),
        "mesh": (["mesh", "--model", sphere_path, "--bounds", "-2", "2",
                  "--resolution", "24", "--out", root / "mesh.obj"],
                 [root / "mesh.obj"]),
    }
    mismatches = []
    for name, (argv, outputs) in commands.items():
        assert cli.main([str(a) for a in argv]) == 0, f"{name} failed"
        first = {p: p.read_bytes() for p in outputs}
        assert cli.main([str(a) for a in argv]) == 0, f"{name} rerun failed"
        for p, body in first.items():
            if p.read_bytes() != body:
                mismatches.append(f"{name}:{p.name}")
    elapsed = time.perf_counter() - t0
    report(9, not mismatches,
           f"7 commands byte-identical on rerun ({elapsed:.0f}s)"
           + (f"; mismatches: {mismatches}" if mismatches else ""))
