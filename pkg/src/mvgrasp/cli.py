"""Command-line frontend.

Subcommands: dataset-prep, train, eval, infer, grasp, bench, viz.  Settings
resolve as built-in defaults < config file (TOML, top-level keys or a table
named after the subcommand) < command-line flags.  The resolved settings are
printed to stderr before the command runs.

Exit codes: 0 success, 2 usage, 3 I/O or file format, 4 numeric failure,
5 empty result, 1 any other package error.
"""

import argparse
import json
import logging
import os
import sys
from contextlib import nullcontext
from pathlib import Path

import numpy as np

from . import __version__
from .errors import (
    EmptyInputError,
    FormatError,
    MVGraspError,
    NoFeasibleViewError,
    NumericError,
    StageError,
    WeightFileError,
)

log = logging.getLogger("mvgrasp")

EXIT_OK, EXIT_ERROR, EXIT_USAGE, EXIT_IO, EXIT_NUMERIC, EXIT_EMPTY = 0, 1, 2, 3, 4, 5

COMMON = {"seed": 0, "deterministic": False, "threads": None, "log_level": "INFO", "config": None}

DEFAULTS = {
    "dataset-prep": {
        "data_root": None, "out": None, "eval_out": None, "ratio": None, "split": "image-level",
        "per_image": 1, "total": None, "size": 48, "scale": 0.3, "jitter": 0.0,
        "rotation_deg": 90.0, "zoom": [0.8, 1.2], "center": "grasps", "limit": None, "synthetic": None,
    },
    "train": {
        "data": None, "out": None, "loss_csv": None, "epochs": 100, "batch_size": 8, "lr": 0.001,
        "w_max_px": None, "region": "third",
    },
    "eval": {"weights": None, "data": None, "out": None, "csv": None, "tau": 0.0, "w_max_px": None, "plate_height_px": None},
    "infer": {"weights": None, "input": None, "out": None, "tau": 0.8, "k": 10, "w_max": None, "index": 0},
    "grasp": {
        "input": None, "weights": None, "out": None, "ranking_out": None, "views_dir": None, "tau": 0.8, "k": 10,
        "l": 120, "bin_size": 0.005, "delta": 0.005, "w_max": 0.14, "feasibility": "all", "gravity": [0.0, 0.0, -1.0],
    },
    "bench": {"weights": None, "out": None, "size": 120, "iters": 50, "warmup": 5, "no_decode": False},
    "viz": {"input": None, "out": None, "index": 0, "l": 120, "bin_size": 0.005},
}

REQUIRED = {
    "dataset-prep": ("data_root", "out"),
    "train": ("data", "out"),
    "eval": ("weights", "data", "out"),
    "infer": ("weights", "input", "out"),
    "grasp": ("input", "weights"),
    "bench": ("out",),
    "viz": ("input", "out"),
}


class UsageError(MVGraspError):
    pass


# ------------------------------------------------------------------ parsing


def _add_common(p):
    p.add_argument("--config", help="TOML config file")
    p.add_argument("--seed", type=int, help="random seed (default 0)")
    p.add_argument("--deterministic", action="store_true", help="single thread, no timing fields")
    p.add_argument("--threads", type=int, help="worker threads (default: all cores)")
    p.add_argument("--log-level", choices=["DEBUG", "INFO", "WARNING", "ERROR"])


def build_parser():
    parser = argparse.ArgumentParser(prog="mvgrasp", description="Multi-view grasp detection from point clouds.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", metavar="COMMAND", required=True)
    S = argparse.SUPPRESS

    p = sub.add_parser("dataset-prep", help="load Cornell-layout data, augment and cache", argument_default=S)
    p.add_argument("--data-root", help="Cornell root (default: $MVGRASP_DATA)")
    p.add_argument("--out", help="output MVGD cache (training part if --ratio is set)")
    p.add_argument("--eval-out", help="held-out MVGD cache when --ratio is set")
    p.add_argument("--ratio", type=float, help="train fraction for the split")
    p.add_argument("--split", choices=["image-level", "augmented-level"])
    p.add_argument("--per-image", type=int, help="augmentations per source image")
    p.add_argument("--total", type=int, help="cap on the number of augmented samples")
    p.add_argument("--size", type=int, help="output side length in pixels")
    p.add_argument("--scale", type=float, help="base source-to-output scale")
    p.add_argument("--jitter", type=float, help="crop center jitter in output pixels")
    p.add_argument("--rotation-deg", type=float, help="rotation uniform in [-r, r] degrees")
    p.add_argument("--zoom", type=float, nargs=2, metavar=("LO", "HI"))
    p.add_argument("--center", choices=["grasps", "image"])
    p.add_argument("--limit", type=int, help="load at most this many images")
    p.add_argument("--synthetic", type=int, metavar="N", help="first write N synthetic scenes into --data-root")
    _add_common(p)

    p = sub.add_parser("train", help="train the network on an MVGD cache", argument_default=S)
    p.add_argument("--data", help="MVGD training cache")
    p.add_argument("--out", help="output weight file")
    p.add_argument("--loss-csv", help="loss curve CSV (default: <out>.csv)")
    p.add_argument("--epochs", type=int)
    p.add_argument("--batch-size", type=int)
    p.add_argument("--lr", type=float)
    p.add_argument("--w-max-px", type=float, help="width normalizer in pixels (default: sample side)")
    p.add_argument("--region", choices=["third", "full"])
    _add_common(p)

    p = sub.add_parser("eval", help="IoU success rate on an MVGD cache", argument_default=S)
    p.add_argument("--weights")
    p.add_argument("--data")
    p.add_argument("--out", help="metrics JSON")
    p.add_argument("--csv", help="per-sample CSV")
    p.add_argument("--tau", type=float)
    p.add_argument("--w-max-px", type=float)
    p.add_argument("--plate-height-px", type=float)
    _add_common(p)

    p = sub.add_parser("infer", help="grasp maps and grasps for one depth image", argument_default=S)
    p.add_argument("--weights")
    p.add_argument("--input", help=".npy depth array, 16-bit .png or .mvgd cache")
    p.add_argument("--out", help="output directory")
    p.add_argument("--tau", type=float)
    p.add_argument("-k", "--k", type=int)
    p.add_argument("--w-max", type=float, help="width scale (default: stored w_max_px)")
    p.add_argument("--index", type=int, help="sample index for .mvgd input")
    _add_common(p)

    p = sub.add_parser("grasp", help="full pipeline on a point cloud", argument_default=S)
    p.add_argument("--input", help=".pcd or .xyz point cloud")
    p.add_argument("--weights")
    p.add_argument("--out", help="grasp JSON (default: stdout)")
    p.add_argument("--ranking-out", help="view ranking JSON")
    p.add_argument("--views-dir", help="also write views and grasp map PNGs here")
    p.add_argument("--tau", type=float)
    p.add_argument("-k", "--k", type=int)
    p.add_argument("--l", type=int, help="view side in pixels")
    p.add_argument("--bin-size", type=float, help="meters per pixel")
    p.add_argument("--delta", type=float, help="depth search radius in meters")
    p.add_argument("--w-max", type=float, help="maximum gripper opening in meters")
    p.add_argument("--feasibility", choices=["all", "none", "top-only", "no-top"])
    p.add_argument("--gravity", type=float, nargs=3, metavar=("GX", "GY", "GZ"))
    _add_common(p)

    p = sub.add_parser("bench", help="inference latency statistics", argument_default=S)
    p.add_argument("--weights", help="weight file (default: fresh calibrated network)")
    p.add_argument("--out", help="stats JSON")
    p.add_argument("--size", type=int)
    p.add_argument("--iters", type=int)
    p.add_argument("--warmup", type=int)
    p.add_argument("--no-decode", action="store_true")
    _add_common(p)

    p = sub.add_parser("viz", help="render a stored map, view, sample or cloud to PNG", argument_default=S)
    p.add_argument("--input", help=".npy, .npz grasp map, .mvgd cache, or .pcd/.xyz cloud")
    p.add_argument("--out", help="output PNG (2D arrays, samples) or directory")
    p.add_argument("--index", type=int)
    p.add_argument("--l", type=int)
    p.add_argument("--bin-size", type=float)
    _add_common(p)
    return parser


def _read_config(path, command):
    try:
        import tomllib
    except ImportError:
        import tomli as tomllib
    try:
        with open(path, "rb") as fh:
            data = tomllib.load(fh)
    except OSError as exc:
        raise UsageError(f"cannot read config {path}: {exc}") from exc
    except tomllib.TOMLDecodeError as exc:
        raise UsageError(f"config {path}: {exc}") from exc
    tables = {k for k, v in data.items() if isinstance(v, dict)}
    flat = {k: v for k, v in data.items() if k not in tables}
    unknown_tables = tables - set(DEFAULTS)
    if unknown_tables:
        raise UsageError(f"config {path}: unknown section(s) {sorted(unknown_tables)}")
    flat.update(data.get(command, {}))
    return {k.replace("-", "_"): v for k, v in flat.items()}


def resolve(command, flags):
    """Merge defaults, config file and flags into one settings dict."""
    allowed = {**COMMON, **DEFAULTS[command]}
    cfg = dict(allowed)
    path = flags.get("config")
    if path:
        file_cfg = _read_config(path, command)
        unknown = set(file_cfg) - set(allowed) - {"config"}
        if unknown:
            raise UsageError(f"config {path}: unknown key(s) {sorted(unknown)} for '{command}'")
        cfg.update(file_cfg)
    cfg.update(flags)
    if command == "dataset-prep" and not cfg["data_root"]:
        cfg["data_root"] = os.environ.get("MVGRASP_DATA")
    missing = [k for k in REQUIRED[command] if cfg.get(k) in (None, "")]
    if missing:
        raise UsageError(f"{command}: missing required setting(s): " + ", ".join("--" + k.replace("_", "-") for k in missing))
    if cfg["threads"] is not None and cfg["threads"] < 1:
        raise UsageError("--threads must be >= 1")
    return cfg


def parse_args(argv=None):
    """Return ``(command, settings)``; raises SystemExit(2) on usage errors."""
    parser = build_parser()
    ns = parser.parse_args(argv)
    flags = {k: v for k, v in vars(ns).items() if k != "command"}
    try:
        return ns.command, resolve(ns.command, flags)
    except UsageError as exc:
        parser.error(str(exc))


# ------------------------------------------------------------------ helpers


def _thread_context(cfg):
    n = 1 if cfg["deterministic"] else cfg["threads"]
    if n is None:
        return nullcontext()
    from threadpoolctl import threadpool_limits

    return threadpool_limits(n)


def _write_json(path, obj):
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    Path(path).write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")


def _load_cache(path):
    from .dataset import load_samples

    samples = load_samples(path)
    if not samples:
        raise EmptyInputError(f"{path}: no samples")
    return samples


def _w_max_px(cfg, meta, samples=None):
    if cfg.get("w_max_px") is not None:
        return float(cfg["w_max_px"])
    if "w_max_px" in meta:
        return float(meta["w_max_px"])
    if samples:
        return float(samples[0].depth.shape[1])
    raise UsageError("--w-max-px is required: not stored in the weight file")


def _read_depth_input(path, index=0):
    path = Path(path)
    suffix = path.suffix.lower()
    if suffix == ".npy":
        depth = np.load(path)
    elif suffix == ".png":
        from .viz import decode_depth_png

        if path.with_suffix(".json").exists():
            depth = decode_depth_png(path)
        else:
            from PIL import Image

            code = np.asarray(Image.open(path), dtype=np.float64)
            depth = np.where(code > 0, code / 1000.0, np.inf)
    elif suffix == ".mvgd":
        samples = _load_cache(path)
        if not 0 <= index < len(samples):
            raise UsageError(f"--index {index} out of range for {len(samples)} samples")
        depth = samples[index].depth
    else:
        raise FormatError(f"{path}: unsupported depth input (use .npy, .png or .mvgd)")
    depth = np.asarray(depth, dtype=np.float64)
    if depth.ndim != 2:
        raise FormatError(f"{path}: expected a 2D depth image, got shape {depth.shape}")
    return depth


# ------------------------------------------------------------------ commands


def cmd_dataset_prep(cfg):
    from .dataset import AugmentPolicy, augment_dataset, load_cornell, make_splits, save_samples
    from .synthetic import write_synthetic_cornell

    root = Path(cfg["data_root"])
    if cfg["synthetic"]:
        write_synthetic_cornell(root, cfg["synthetic"], seed=cfg["seed"])
    samples = load_cornell(root, limit=cfg["limit"])
    r = np.deg2rad(cfg["rotation_deg"])
    policy = AugmentPolicy(cfg["size"], (-r, r), tuple(cfg["zoom"]), cfg["scale"], cfg["jitter"], cfg["center"])
    aug = augment_dataset(samples, cfg["per_image"], policy, seed=cfg["seed"], total=cfg["total"])
    if cfg["ratio"] is None:
        save_samples(aug, cfg["out"])
        log.info("wrote %d samples from %d images to %s", len(aug), len(samples), cfg["out"])
        return EXIT_OK
    train, held = make_splits(aug, cfg["ratio"], seed=cfg["seed"], mode=cfg["split"])
    save_samples(train, cfg["out"])
    if cfg["eval_out"]:
        save_samples(held, cfg["eval_out"])
    log.info("wrote %d train / %d held-out samples", len(train), len(held))
    return EXIT_OK


def cmd_train(cfg):
    from .dataset import training_arrays
    from .network import build_network, save_network
    from .train import TrainConfig, train

    samples = _load_cache(cfg["data"])
    w_max_px = _w_max_px(cfg, {}, samples)
    x, y = training_arrays(samples, w_max_px, cfg["region"])
    net = build_network(seed=cfg["seed"], input_shape=x.shape[2:])
    csv_path = cfg["loss_csv"] or str(Path(cfg["out"]).with_suffix(".csv"))
    tc = TrainConfig(cfg["epochs"], cfg["batch_size"], cfg["lr"], cfg["seed"])
    history = train(net, x, y, tc, csv_path=csv_path)
    save_network(net, cfg["out"], meta={"w_max_px": w_max_px, "epochs": cfg["epochs"]})
    print(f"final loss {history[-1]:.6g}; weights -> {cfg['out']}, curve -> {csv_path}")
    return EXIT_OK


def cmd_eval(cfg):
    from .evaluate import evaluate
    from .network import load_network

    net, meta = load_network(cfg["weights"])
    samples = _load_cache(cfg["data"])
    m = evaluate(net, samples, cfg["tau"], _w_max_px(cfg, meta, samples), cfg["plate_height_px"],
                 timing=not cfg["deterministic"])
    _write_json(cfg["out"], m.to_dict())
    if cfg["csv"]:
        m.write_csv(cfg["csv"])
    print(m.table())
    return EXIT_OK


def cmd_infer(cfg):
    from .grasp import decode_best_grasps, predict_grasp_map
    from .network import load_network
    from .projection import standardize
    from .viz import save_grasp_map_npz, save_grasp_map_pngs

    net, meta = load_network(cfg["weights"])
    depth = _read_depth_input(cfg["input"], cfg["index"])
    finite = np.isfinite(depth)
    if not finite.any():
        raise EmptyInputError("depth image has no finite pixel")
    x, _, _ = standardize(np.where(finite, depth, depth[finite].max()))
    w_max = cfg["w_max"] if cfg["w_max"] is not None else meta.get("w_max_px", 0.14)
    gmap = predict_grasp_map(net, x, w_max)
    out = Path(cfg["out"])
    save_grasp_map_pngs(gmap, out)
    save_grasp_map_npz(gmap, out / "grasp_map.npz")
    grasps = decode_best_grasps(gmap, cfg["k"], cfg["tau"])
    records = [{"u": g.u, "v": g.v, "phi_rad": g.phi, "width": g.width, "quality": g.quality} for g in grasps]
    _write_json(out / "grasps.json", records)
    print(f"{len(records)} grasp(s) above tau={cfg['tau']}; outputs in {out}")
    return EXIT_OK if records else EXIT_EMPTY


def cmd_grasp(cfg):
    from .geometry import load_point_cloud
    from .network import load_network
    from .pipeline import PipelineConfig, run_pipeline
    from .projection import GridSpec

    cloud = load_point_cloud(cfg["input"])
    net, _ = load_network(cfg["weights"])
    pc = PipelineConfig(GridSpec(cfg["l"], cfg["bin_size"]), tuple(cfg["gravity"]), cfg["tau"], cfg["k"],
                        cfg["delta"], cfg["w_max"], feasibility=cfg["feasibility"], deterministic=cfg["deterministic"])
    result = run_pipeline(cloud, pc, net=net)
    records = [g.to_dict() for g in result.grasps]
    if cfg["out"]:
        _write_json(cfg["out"], records)
    else:
        print(json.dumps(records, indent=2, sort_keys=True))
    if cfg["ranking_out"]:
        _write_json(cfg["ranking_out"], result.ranking.to_dict())
    if cfg["views_dir"]:
        from .viz import save_depth_png, save_grasp_map_pngs

        d = Path(cfg["views_dir"])
        d.mkdir(parents=True, exist_ok=True)
        for v in result.views:
            save_depth_png(v, d / f"view_{v.axis}.png")
        save_grasp_map_pngs(result.grasp_map, d, prefix=f"{result.ranking.selected}_")
    log.info("selected view %s; %d grasp(s) above tau=%g", result.ranking.selected, len(records), cfg["tau"])
    return EXIT_OK if result.grasps else EXIT_EMPTY


def cmd_bench(cfg):
    from .evaluate import benchmark_inference
    from .network import build_network, load_network
    from .train import calibrate_batchnorm

    size = cfg["size"]
    if cfg["weights"]:
        net, _ = load_network(cfg["weights"])
    else:
        net = build_network(seed=cfg["seed"], input_shape=(size, size))
        rng = np.random.default_rng(cfg["seed"])
        calibrate_batchnorm(net, rng.standard_normal((4, 1, size, size)))
    stats = benchmark_inference(net, (size, size), cfg["iters"], cfg["warmup"], cfg["seed"], not cfg["no_decode"])
    _write_json(cfg["out"], stats)
    print(f"mean {stats['mean_ms']:.2f} ms, p95 {stats['p95_ms']:.2f} ms over {stats['iters']} iterations")
    return EXIT_OK


def cmd_viz(cfg):
    from .viz import load_grasp_map_npz, save_depth_png, save_grasp_map_pngs, save_heatmap_png

    src = Path(cfg["input"])
    out = Path(cfg["out"])
    suffix = src.suffix.lower()
    if suffix == ".npz":
        paths = save_grasp_map_pngs(load_grasp_map_npz(src), out)
        print("\n".join(str(p) for p in paths.values()))
    elif suffix in (".pcd", ".xyz", ".txt"):
        from .geometry import compute_reference_frame, load_point_cloud, transform_to_frame
        from .projection import GridSpec, generate_views

        cloud = load_point_cloud(src)
        local = transform_to_frame(cloud, compute_reference_frame(cloud))
        out.mkdir(parents=True, exist_ok=True)
        for v in generate_views(local, GridSpec(cfg["l"], cfg["bin_size"])):
            save_depth_png(v, out / f"view_{v.axis}.png")
            print(out / f"view_{v.axis}.png")
    elif suffix == ".mvgd":
        save_depth_png(_read_depth_input(src, cfg["index"]), out)
        print(out)
    elif suffix == ".npy":
        arr = np.load(src)
        if arr.ndim != 2:
            raise FormatError(f"{src}: expected a 2D array, got shape {arr.shape}")
        save_heatmap_png(arr, out)
        print(out)
    else:
        raise FormatError(f"{src}: cannot render this file type")
    return EXIT_OK


COMMANDS = {
    "dataset-prep": cmd_dataset_prep,
    "train": cmd_train,
    "eval": cmd_eval,
    "infer": cmd_infer,
    "grasp": cmd_grasp,
    "bench": cmd_bench,
    "viz": cmd_viz,
}


def exit_code_for(exc):
    if isinstance(exc, StageError):
        return exit_code_for(exc.cause)
    if isinstance(exc, UsageError):
        return EXIT_USAGE
    if isinstance(exc, NumericError):
        return EXIT_NUMERIC
    if isinstance(exc, NoFeasibleViewError):
        return EXIT_EMPTY
    if isinstance(exc, (FormatError, WeightFileError, OSError, EmptyInputError)):
        return EXIT_IO
    return EXIT_ERROR


def run_command(command, cfg):
    logging.basicConfig(level=cfg["log_level"], stream=sys.stderr, format="%(levelname)s %(name)s: %(message)s")
    shown = {k: v for k, v in sorted(cfg.items())}
    print(f"mvgrasp {command} seed={cfg['seed']} config={json.dumps(shown, sort_keys=True)}", file=sys.stderr)
    try:
        with _thread_context(cfg):
            return COMMANDS[command](cfg)
    except (MVGraspError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exit_code_for(exc)


def main(argv=None):
    command, cfg = parse_args(argv)
    return run_command(command, cfg)


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
