"""Command-line surface: train, score, certify, attack, contour, mesh,
toygen.

Exit codes are a stable contract: 0 success, 1 configuration error, 2 data
error, 3 numerical abort, 4 certificate-soundness violation (which signals an
implementation bug, not a user error).

Heavy imports live inside the command bodies so the OCSDF_THREADS cap can be
applied to the BLAS before numpy loads.
"""

import argparse
import copy
import json
import os
import sys
from pathlib import Path

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_DATA = 2
EXIT_NUMERICAL = 3
EXIT_SOUNDNESS = 4


class ConfigError(ValueError):
    pass


def _apply_thread_cap():
    cap = os.environ.get("OCSDF_THREADS")
    if cap:
        for var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS",
                    "MKL_NUM_THREADS", "NUMEXPR_NUM_THREADS"):
            os.environ.setdefault(var, cap)


# ---------------------------------------------------------------------------
# run configuration

_DEFAULT_CONFIG = {
    "data": None,
    "label_column": None,
    "standardize": True,
    "seed": 0,
    "out": "run",
    "net": {
        "widths": [512, 512, 512, 512],
        "activation": "fullsort",
        "group_size": None,
        "bjorck_iterations": 15,
        "power_iterations": 30,
    },
    "train": {
        "epochs": 40,
        "warm_start_epochs": 5,
        "updates_per_round": 1,
        "batch_size": 128,
        "margin": 0.05,
        "lam": 100.0,
        "steps_t": 4,
        "level_eps": None,
        "grad_norm_floor": 1e-6,
        "lr_start": 1e-3,
        "lr_end": 1e-3,
        "constrained": True,
        "full_alternation": False,
    },
    "box": {
        "half_width_sigmas": 5.0,
        "low": None,
        "high": None,
    },
}


def _merge_strict(defaults, user, prefix=""):
    merged = copy.deepcopy(defaults)
    for key, value in user.items():
        if key not in defaults:
            raise ConfigError(f"unknown config key {prefix + key!r}")
        if isinstance(defaults[key], dict) and isinstance(value, dict):
            merged[key] = _merge_strict(defaults[key], value, prefix + key + ".")
        else:
            merged[key] = value
    return merged


def _apply_override(config, dotted, raw_value):
    try:
        value = json.loads(raw_value)
    except json.JSONDecodeError:
        value = raw_value
    node = config
    keys = dotted.split(".")
    for key in keys[:-1]:
        if not isinstance(node.get(key), dict):
            raise ConfigError(f"unknown config key {dotted!r}")
        node = node[key]
    if keys[-1] not in node:
        raise ConfigError(f"unknown config key {dotted!r}")
    node[keys[-1]] = value


def load_run_config(path, overrides=(), seed=None, out=None):
    """Parse the JSON config, reject unknown keys, apply CLI overrides."""
    try:
        with open(path) as fh:
            user = json.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config {path} is not valid JSON: {exc}") from exc
    if not isinstance(user, dict):
        raise ConfigError("config root must be an object")
    config = _merge_strict(_DEFAULT_CONFIG, user)
    for item in overrides:
        if "=" not in item:
            raise ConfigError(f"override {item!r} is not of the form key=value")
        dotted, _, raw = item.partition("=")
        _apply_override(config, dotted, raw)
    if seed is not None:
        config["seed"] = seed
    if out is not None:
        config["out"] = out
    if config["data"] is None:
        raise ConfigError("config is missing the 'data' path")
    return config


def _build_net(config, input_dim):
    from . import data_io, lipnet
    net_cfg = config["net"]
    widths = list(net_cfg["widths"])
    if config["train"]["constrained"]:
        if net_cfg["activation"] == "groupsort":
            act = lipnet.Activation("groupsort", net_cfg["group_size"])
        else:
            act = lipnet.Activation(net_cfg["activation"])
        import numpy as np
        return lipnet.LipNet.create(
            input_dim, widths=widths, activation=act,
            bjorck_iterations=net_cfg["bjorck_iterations"],
            power_iterations=net_cfg["power_iterations"],
            rng=np.random.default_rng(config["seed"]))
    import numpy as np
    return data_io.baseline_unconstrained_net(
        [input_dim, *widths, 1], rng=np.random.default_rng(config["seed"]))


def _train_config(config):
    from .hkr import HKRParams
    from .sampler import SamplerConfig
    from .trainer import TrainConfig
    t = config["train"]
    level_eps = t["level_eps"] if t["level_eps"] is not None else t["margin"]
    return TrainConfig(
        epochs=t["epochs"], warm_start_epochs=t["warm_start_epochs"],
        updates_per_round=t["updates_per_round"], batch_size=t["batch_size"],
        hkr=HKRParams(margin=t["margin"], lam=t["lam"]),
        sampler=SamplerConfig(steps_T=t["steps_t"], level_eps=level_eps,
                              grad_norm_floor=t["grad_norm_floor"]),
        lr_start=t["lr_start"], lr_end=t["lr_end"], seed=config["seed"],
        constrained=t["constrained"])


def _resolve_box(config, data):
    import numpy as np
    from .data_io import domain_box
    from .sampler import DomainBox
    box_cfg = config["box"]
    if box_cfg["low"] is not None or box_cfg["high"] is not None:
        if box_cfg["low"] is None or box_cfg["high"] is None:
            raise ConfigError("box.low and box.high must be given together")
        low = np.asarray(box_cfg["low"], dtype=np.float64)
        high = np.asarray(box_cfg["high"], dtype=np.float64)
        if low.size == 1:
            low = np.full(data.dim, float(low))
            high = np.full(data.dim, float(high))
        return DomainBox(low=low, high=high)
    return domain_box(data, box_cfg["half_width_sigmas"])


def _load_scoring_inputs(model_path, data_path, label_column):
    """Shared loader for certify/attack: model + labeled, standardized data."""
    import numpy as np
    from . import model_io
    from .data_io import StandardizationStats, load_csv
    net, metadata = model_io.load_model(model_path)
    data = load_csv(data_path, label_column=label_column)
    if data.labels is None:
        raise _DataError("data has no label column; pass --label-column")
    points = data.points
    stats_doc = metadata.get("standardization")
    if stats_doc:
        stats = StandardizationStats(
            mean=np.asarray(stats_doc["mean"], dtype=np.float64),
            std=np.asarray(stats_doc["std"], dtype=np.float64))
        points = stats.apply(points)
    pos = points[data.labels == 0]
    neg = points[data.labels == 1]
    if len(pos) == 0 or len(neg) == 0:
        raise _DataError("need at least one normal and one anomalous row")
    return net, metadata, pos, neg


class _DataError(ValueError):
    pass


# ---------------------------------------------------------------------------
# commands


def cmd_train(args):
    config = load_run_config(args.config, args.set or (),
                             seed=args.seed, out=args.out)
    import numpy as np
    from . import data_io, model_io, trainer

    try:
        data = data_io.load_csv(config["data"], label_column=config["label_column"])
    except (OSError, data_io.CsvFormatError) as exc:
        print(f"error: cannot load data {config['data']}: {exc}", file=sys.stderr)
        return EXIT_DATA

    stats = None
    if config["standardize"]:
        data, stats = data_io.standardize(data)
    box = _resolve_box(config, data)
    net = _build_net(config, data.dim)
    cfg = _train_config(config)

    out_dir = Path(config["out"])
    out_dir.mkdir(parents=True, exist_ok=True)
    try:
        if config["train"]["full_alternation"]:
            net, report = trainer.train_full_alternation(
                data, net, cfg, box=box, checkpoint_dir=out_dir / "checkpoints")
        else:
            net, report = trainer.train(
                data, net, cfg, box=box, checkpoint_dir=out_dir / "checkpoints")
    except trainer.TrainingDiverged as exc:
        print(f"error: training aborted: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL

    train_scores = net.forward_batch(data.points)
    metadata = {
        "config": config,
        "standardization": None if stats is None else {
            "mean": stats.mean.tolist(), "std": stats.std.tolist()},
        "train_scores": train_scores.tolist(),
        "final_risk": report.risks[-1],
        "final_grad_norm_max": report.final_grad_norm_max,
    }
    model_io.save_model(net, out_dir / "model.json", metadata=metadata)
    trainer.write_run_report(out_dir / "report.csv", report)
    print(f"trained {len(report.risks)} steps; final risk {report.risks[-1]:.6g}; "
          f"max |grad f| {report.final_grad_norm_max:.4f}")
    print(f"model: {out_dir / 'model.json'}")
    return EXIT_OK


def cmd_score(args):
    import numpy as np
    from . import model_io
    from .data_io import StandardizationStats, load_csv
    try:
        net, metadata = model_io.load_model(args.model)
        data = load_csv(args.data, label_column=args.label_column)
    except (OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA
    points = data.points
    stats_doc = metadata.get("standardization")
    if stats_doc:
        stats = StandardizationStats(
            mean=np.asarray(stats_doc["mean"]), std=np.asarray(stats_doc["std"]))
        points = stats.apply(points)
    scores = net.forward_batch(points)
    with open(args.out, "w") as fh:
        fh.write("score\n")
        for s in scores:
            fh.write(repr(float(s)) + "\n")
    print(f"scored {len(scores)} rows -> {args.out}")
    return EXIT_OK


def cmd_certify(args):
    from . import model_io
    from .metrics import ScorePair, auroc, certified_auroc_curve, write_certified_curve
    try:
        eps_list = [float(tok) for tok in args.eps_list.split(",") if tok]
    except ValueError:
        print(f"error: bad --eps-list {args.eps_list!r}", file=sys.stderr)
        return EXIT_CONFIG
    if not eps_list or any(b < a for a, b in zip(eps_list, eps_list[1:])) \
            or eps_list[0] < 0:
        print("error: --eps-list must be non-empty, non-negative and "
              "non-decreasing", file=sys.stderr)
        return EXIT_CONFIG
    try:
        net, _, pos, neg = _load_scoring_inputs(args.model, args.data,
                                                args.label_column)
    except (OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA
    if not model_io.is_constrained(net):
        print("warning: model is not Lipschitz-constrained; "
              "certificates are vacuous", file=sys.stderr)
    scores = ScorePair(net.forward_batch(pos), net.forward_batch(neg))
    curve = certified_auroc_curve(scores, eps_list)
    write_certified_curve(args.out, eps_list, curve)
    clean = auroc(scores)
    print(f"auroc(eps=0) = {clean:.6f}")
    if args.self_check:
        import numpy as np
        if np.any(np.diff(curve) > 0):
            print("error: certified curve is not non-increasing",
                  file=sys.stderr)
            return EXIT_SOUNDNESS
        if abs(certified_auroc_curve(scores, [0.0])[0] - clean) > 0:
            print("error: certified(0) != auroc", file=sys.stderr)
            return EXIT_SOUNDNESS
        print("self-check: curve non-increasing, certified(0) == auroc")
    return EXIT_OK


def cmd_attack(args):
    import numpy as np
    from . import model_io
    from .attacks import AttackConfig, auroc_under_attack, write_attack_report
    from .metrics import ScorePair, auroc, certified_auroc
    try:
        net, _, pos, neg = _load_scoring_inputs(args.model, args.data,
                                                args.label_column)
    except (OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA
    constrained = model_io.is_constrained(net)
    if not constrained:
        print("warning: model is not Lipschitz-constrained; "
              "certificates are vacuous", file=sys.stderr)
    cfg = AttackConfig(radius_eps=args.eps, steps=args.steps,
                       restarts=args.restarts)
    rng = np.random.default_rng(args.seed)
    scores = ScorePair(net.forward_batch(pos), net.forward_batch(neg))
    clean = auroc(scores)
    certified = certified_auroc(scores, args.eps)
    attacked = auroc_under_attack(net, pos, neg, cfg, rng)
    write_attack_report(args.out, [(args.eps, clean, certified, attacked)])
    print(f"eps={args.eps:g}: clean={clean:.6f} certified={certified:.6f} "
          f"attacked={attacked:.6f}")
    if constrained and attacked < certified - 1e-12:
        print("error: attacked AUROC fell below the certificate; "
              "this indicates an implementation bug", file=sys.stderr)
        return EXIT_SOUNDNESS
    return EXIT_OK


def cmd_contour(args):
    import numpy as np
    from . import model_io
    try:
        net, _ = model_io.load_model(args.model)
    except (OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA
    if net.input_dim != 2:
        print(f"error: contour needs a 2D model, got input_dim={net.input_dim}",
              file=sys.stderr)
        return EXIT_DATA
    lo, hi = args.bounds
    res = args.resolution
    axis = np.linspace(lo, hi, res)
    gx, gy = np.meshgrid(axis, axis, indexing="xy")
    points = np.column_stack([gx.ravel(), gy.ravel()])
    values = np.empty(len(points))
    for start in range(0, len(points), 8192):
        values[start:start + 8192] = net.forward_batch(points[start:start + 8192])
    # grid[i, j] = f(x=axis[j], y=axis[i]), y ascending with the row index
    grid = values.reshape(res, res)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    with open(out_dir / "grid.csv", "w") as fh:
        for row in grid:
            fh.write(",".join(repr(float(v)) for v in row) + "\n")
    _write_pgm(out_dir / "contour.pgm", grid)
    print(f"wrote {out_dir / 'grid.csv'} and {out_dir / 'contour.pgm'} "
          f"({res}x{res})")
    return EXIT_OK


def _write_pgm(path, grid):
    """8-bit binary PGM; values affinely mapped from [min, max] to [0, 255],
    top image row is the highest y row of the grid."""
    import numpy as np
    lo, hi = float(grid.min()), float(grid.max())
    if hi > lo:
        pixels = np.round((grid - lo) / (hi - lo) * 255.0)
    else:
        pixels = np.full_like(grid, 127.0)
    pixels = pixels.astype(np.uint8)[::-1, :]
    with open(path, "wb") as fh:
        fh.write(f"P5\n{grid.shape[1]} {grid.shape[0]}\n255\n".encode("ascii"))
        fh.write(pixels.tobytes())


def cmd_mesh(args):
    import numpy as np
    from . import geometry, model_io
    from .sampler import DomainBox
    try:
        net, metadata = model_io.load_model(args.model)
    except (OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA
    if net.input_dim != 3:
        print(f"error: mesh needs a 3D model, got input_dim={net.input_dim}",
              file=sys.stderr)
        return EXIT_DATA
    train_scores = metadata.get("train_scores")
    if not train_scores:
        print("error: model metadata has no train_scores; cannot pick a level",
              file=sys.stderr)
        return EXIT_DATA
    level = geometry.choose_level(np.asarray(train_scores), args.percentile)
    lo, hi = args.bounds
    box = DomainBox(low=np.full(3, lo), high=np.full(3, hi))
    grid = geometry.voxelize(net.forward_batch, box, args.resolution)
    mesh = geometry.marching_cubes(grid, level)
    geometry.export_obj(mesh, args.out)
    if mesh.is_empty:
        print(f"warning: level set f={level:.6g} is empty in the given bounds",
              file=sys.stderr)
    print(f"level {level:.6g}: {len(mesh.vertices)} vertices, "
          f"{len(mesh.faces)} faces -> {args.out}")
    return EXIT_OK


def cmd_toygen(args):
    import numpy as np
    from .data_io import TOY_NAMES, make_toy, save_csv
    if args.name not in TOY_NAMES:
        print(f"error: unknown toy dataset {args.name!r}; choose from "
              f"{', '.join(TOY_NAMES)}", file=sys.stderr)
        return EXIT_CONFIG
    data = make_toy(args.name, args.n, args.noise,
                    np.random.default_rng(args.seed))
    save_csv(data, args.out)
    print(f"wrote {data.n} points -> {args.out}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# parser


def build_parser():
    parser = argparse.ArgumentParser(
        prog="ocsdf",
        description="One-class SDF learning with 1-Lipschitz networks")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="train a model from a config file")
    p.add_argument("--config", required=True)
    p.add_argument("--seed", type=int, default=None,
                   help="override the config seed")
    p.add_argument("--out", default=None, help="override the output directory")
    p.add_argument("--set", action="append", metavar="KEY=VALUE",
                   help="override any config key, e.g. train.margin=0.2")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("score", help="score CSV rows with a trained model")
    p.add_argument("--model", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--label-column", default=None)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_score)

    p = sub.add_parser("certify", help="certified AUROC over a radius list")
    p.add_argument("--model", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--label-column", default="label")
    p.add_argument("--eps-list", required=True,
                   help="comma-separated non-decreasing radii, e.g. 0,0.1,0.2")
    p.add_argument("--out", required=True)
    p.add_argument("--self-check", action="store_true")
    p.set_defaults(func=cmd_certify)

    p = sub.add_parser("attack", help="PGD attack vs certificate at one radius")
    p.add_argument("--model", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--label-column", default="label")
    p.add_argument("--eps", type=float, required=True)
    p.add_argument("--steps", type=int, default=40)
    p.add_argument("--restarts", type=int, default=3)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_attack)

    p = sub.add_parser("contour", help="export the decision function on a grid")
    p.add_argument("--model", required=True)
    p.add_argument("--bounds", type=float, nargs=2, default=(-5.0, 5.0))
    p.add_argument("--resolution", type=int, default=300)
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=cmd_contour)

    p = sub.add_parser("mesh", help="extract an iso-surface mesh (3D models)")
    p.add_argument("--model", required=True)
    p.add_argument("--bounds", type=float, nargs=2, default=(-5.0, 5.0))
    p.add_argument("--resolution", type=int, default=200)
    p.add_argument("--percentile", type=float, default=1.0)
    p.add_argument("--out", required=True, help="output .obj path")
    p.set_defaults(func=cmd_mesh)

    p = sub.add_parser("toygen", help="generate a toy 2D dataset CSV")
    p.add_argument("--name", required=True)
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--noise", type=float, default=0.1)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_toygen)

    return parser


def main(argv=None):
    _apply_thread_cap()
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
