"""Command-line entry point.

Subcommands mirror the experiment workflow: gen-data, train, detect,
compare, gradcheck. Exit codes are a stable scripting contract:

    0  success
    1  check failure (gradcheck over tolerance)
    2  usage or configuration error
    3  I/O failure
    4  missing prerequisite (dataset or model file)
    5  numeric divergence during training
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import classical
from .config import Config
from .errors import (ConfigError, DivergenceError, LidarEdgeError,
                     ModelLoadError, ParameterError)
from .evaluation import (best_f1_threshold, comparison_csv, comparison_table,
                         compare_detectors)
from .formats import read_lri, read_manifest, read_pgm, write_manifest, write_pgm
from .lidar import generate_dataset, range_to_intensity
from .modelio import load_model, save_model
from .models import NestedNetParams, PatchNetParams, forward_nested
from .training import (grad_check, load_split, patch_prob_map, runlog_csv,
                       split_dataset, train_nested, train_patch)

ALGORITHMS = ("canny", "sobel", "roberts", "cnn", "patchcnn")

EXIT_OK = 0
EXIT_CHECK = 1
EXIT_USAGE = 2
EXIT_IO = 3
EXIT_MISSING = 4
EXIT_DIVERGED = 5


def _load_config(args) -> Config:
    cfg = Config.load(args.config)
    for dotted, attr, cast in (
        ("dataset.n", "n", int), ("dataset.seed", "seed", int),
        ("train.epochs", "epochs", int), ("train.optimizer", "optimizer", str),
        ("paths.out_dir", "out", str),
    ):
        value = getattr(args, attr, None)
        if value is not None:
            cfg.override(dotted, cast(value))
    return cfg


def _out_dir(cfg: Config) -> Path:
    return Path(cfg.raw["paths"]["out_dir"])


def _model_path(cfg: Config) -> Path:
    explicit = cfg.raw["paths"]["model"]
    return Path(explicit) if explicit else _out_dir(cfg) / "model.ledm"


def cmd_gen_data(args) -> int:
    cfg = _load_config(args)
    d = cfg.raw["dataset"]
    out = _out_dir(cfg) / "dataset"
    manifest = generate_dataset(int(d["n"]), cfg.lidar(), cfg.scene_policy(),
                                float(d["delta"]), int(d["seed"]), out)
    manifest = split_dataset(manifest, tuple(d["ratios"]), int(d["seed"]))
    write_manifest(out / "manifest.jsonl", manifest)
    summary = {"n": len(manifest.entries), "splits": manifest.counts(),
               "seed": int(d["seed"])}
    with open(out / "dataset_summary.json", "w", encoding="utf-8") as f:
        json.dump(summary, f, indent=2, sort_keys=True)
        f.write("\n")
    print(f"wrote {summary['n']} samples to {out} "
          f"(splits: {summary['splits']})")
    return EXIT_OK


def cmd_train(args) -> int:
    cfg = _load_config(args)
    out = _out_dir(cfg)
    dataset_dir = out / "dataset"
    manifest_path = dataset_dir / "manifest.jsonl"
    if not manifest_path.exists():
        print(f"error: dataset manifest not found: {manifest_path}", file=sys.stderr)
        return EXIT_MISSING
    manifest = read_manifest(manifest_path)
    train_samples = load_split(manifest, dataset_dir, "train")
    val_samples = load_split(manifest, dataset_dir, "val")
    train_cfg = cfg.train_config()
    variant = cfg.raw["model"]["variant"]

    def progress(rec):
        print(f"epoch {rec.epoch:3d}  train_loss {rec.train_loss:.6f}  "
              f"val_f1 {rec.val_f1:.4f}  ({rec.wall_seconds:.1f}s)")

    if variant == "nested":
        params, log = train_nested(train_samples, val_samples,
                                   cfg.nested_arch(), train_cfg, progress)
    elif variant == "patch":
        params, log = train_patch(train_samples, val_samples,
                                  cfg.patch_arch(), train_cfg, progress=progress)
    else:
        raise ConfigError(f"unknown model variant {variant!r}")
    out.mkdir(parents=True, exist_ok=True)
    save_model(params, _model_path(cfg))
    with open(out / "runlog.csv", "w", encoding="ascii") as f:
        f.write(runlog_csv(log))
    best = max(r.val_f1 for r in log.records)
    print(f"best validation F1: {best:.4f} (epoch {log.best_epoch}); "
          f"model saved to {_model_path(cfg)}")
    return EXIT_OK


def _read_input_image(path: Path) -> np.ndarray:
    with open(path, "rb") as f:
        magic = f.read(4)
    if magic == b"LRI1":
        ranges, max_range = read_lri(path)
        return range_to_intensity(ranges, max_range)
    return read_pgm(path)


def cmd_detect(args) -> int:
    cfg = _load_config(args)
    if args.algorithm not in ALGORITHMS:
        print(f"error: unknown algorithm {args.algorithm!r} "
              f"(choose from {', '.join(ALGORITHMS)})", file=sys.stderr)
        return EXIT_USAGE
    input_path = Path(args.input)
    if not input_path.exists():
        print(f"error: input image not found: {input_path}", file=sys.stderr)
        return EXIT_MISSING
    img = _read_input_image(input_path)
    out_path = Path(args.output)
    if args.algorithm in ("cnn", "patchcnn"):
        model_path = _model_path(cfg)
        if not model_path.exists():
            print(f"error: model file not found: {model_path}", file=sys.stderr)
            return EXIT_MISSING
        params = load_model(model_path)
        if args.algorithm == "cnn":
            if not isinstance(params, NestedNetParams):
                print(f"error: {model_path} is not a nested model", file=sys.stderr)
                return EXIT_USAGE
            trace = forward_nested(params, img)
            prob = trace.fused
            write_pgm(out_path.with_suffix(".prob.pgm"), prob)
            for i, side in enumerate(trace.side_probs):
                write_pgm(out_path.with_suffix(f".side{i}.pgm"), side)
        else:
            if not isinstance(params, PatchNetParams):
                print(f"error: {model_path} is not a patch model", file=sys.stderr)
                return EXIT_USAGE
            prob = patch_prob_map(params, img)
            write_pgm(out_path.with_suffix(".prob.pgm"), prob)
        edge = (prob >= args.threshold).astype(np.float64)
    elif args.algorithm == "canny":
        edge = classical.canny(img, sigma=args.sigma, low=args.low, high=args.high)
    else:
        field = classical.sobel(img) if args.algorithm == "sobel" else classical.roberts(img)
        edge = classical.threshold_magnitude(field, args.threshold)
    write_pgm(out_path, edge)
    print(f"wrote {out_path}")
    return EXIT_OK


def _tuned_detectors(cfg: Config, val_samples, params):
    """Baseline thresholds tuned on the validation split (best pooled
    F1 over a grid); the CNN threshold comes from best_f1_threshold."""
    n_thr = int(cfg.raw["eval"]["n_thresholds"])
    val_truths = [label for _, label in val_samples]

    def tune(prob_fn):
        probs = [prob_fn(img) for img, _ in val_samples]
        return best_f1_threshold(probs, val_truths, n_thr)

    detectors = []
    if params is not None:
        cnn_t, _ = tune(lambda im: forward_nested(params, im).fused)
        detectors.append(("cnn", lambda im, t=cnn_t:
                          (forward_nested(params, im).fused >= t).astype(np.float64), cnn_t))

    grid = np.linspace(0.0, 1.0, n_thr)

    def tune_classical(make_edge):
        best_t, best_f1 = 0.0, -1.0
        from .evaluation import ConfusionMatrix, confusion, metrics
        for t in grid:
            cm = ConfusionMatrix()
            for img, truth in val_samples:
                cm = cm + confusion(make_edge(img, float(t)), truth)
            f1 = metrics(cm).f1
            if f1 > best_f1:
                best_t, best_f1 = float(t), f1
        return best_t, best_f1

    # canny's smoothing width is tuned alongside its threshold
    canny_t, canny_sigma, canny_f1 = 0.0, 1.0, -1.0
    for sigma in (1.0, 1.5, 2.0, 2.5):
        t, f1 = tune_classical(
            lambda im, t, s=sigma: classical.canny(im, sigma=s, low=t / 2.0, high=t)
            if t > 0 else np.ones_like(im))
        if f1 > canny_f1:
            canny_t, canny_sigma, canny_f1 = t, sigma, f1
    detectors.append(("canny", lambda im, t=canny_t, s=canny_sigma:
                      classical.canny(im, sigma=s, low=t / 2.0, high=t), canny_t))
    sobel_t, _ = tune_classical(
        lambda im, t: classical.threshold_magnitude(classical.sobel(im), t))
    detectors.append(("sobel", lambda im, t=sobel_t:
                      classical.threshold_magnitude(classical.sobel(im), t), sobel_t))
    roberts_t, _ = tune_classical(
        lambda im, t: classical.threshold_magnitude(classical.roberts(im), t))
    detectors.append(("roberts", lambda im, t=roberts_t:
                      classical.threshold_magnitude(classical.roberts(im), t), roberts_t))
    return detectors


def cmd_compare(args) -> int:
    cfg = _load_config(args)
    out = _out_dir(cfg)
    dataset_dir = out / "dataset"
    manifest_path = dataset_dir / "manifest.jsonl"
    if not manifest_path.exists():
        print(f"error: dataset manifest not found: {manifest_path}", file=sys.stderr)
        return EXIT_MISSING
    requested = [a.strip() for a in args.detectors.split(",") if a.strip()]
    if not requested:
        print("error: empty detector list", file=sys.stderr)
        return EXIT_USAGE
    for name in requested:
        if name not in ("cnn", "canny", "sobel", "roberts"):
            print(f"error: unknown detector {name!r}", file=sys.stderr)
            return EXIT_USAGE
    manifest = read_manifest(manifest_path)
    val_samples = load_split(manifest, dataset_dir, "val")
    test_samples = load_split(manifest, dataset_dir, "test")
    params = None
    if "cnn" in requested:
        model_path = _model_path(cfg)
        if not model_path.exists():
            print(f"error: model file not found: {model_path}", file=sys.stderr)
            return EXIT_MISSING
        params = load_model(model_path)
    detectors = [d for d in _tuned_detectors(cfg, val_samples, params)
                 if d[0] in requested]
    reports = compare_detectors(test_samples, detectors,
                                tolerance=int(cfg.raw["eval"]["tolerance"]))
    with open(out / "comparison.csv", "w", encoding="ascii") as f:
        f.write(comparison_csv(reports))
    print(comparison_table(reports), end="")
    return EXIT_OK


def cmd_gradcheck(args) -> int:
    tolerance = args.tolerance
    ok = True
    for variant in ("nested", "patch"):
        passed, report = grad_check(variant, seed=args.seed, tolerance=tolerance)
        ok = ok and passed
        for entry in report:
            status = "ok" if entry.max_rel_error <= tolerance else "FAIL"
            print(f"{variant:7s} {entry.name:25s} {entry.max_rel_error:.3e}  {status}")
    print("gradcheck " + ("PASSED" if ok else "FAILED") + f" at tolerance {tolerance:g}")
    return EXIT_OK if ok else EXIT_CHECK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="lidar-edge",
        description="Synthetic LiDAR edge-detection pipeline: data "
                    "generation, training, detection, and comparison.")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", default=None, help="JSON config file (defaults used if omitted)")
        p.add_argument("--out", default=None, help="output directory (overrides paths.out_dir)")

    p = sub.add_parser("gen-data", help="generate the synthetic labeled dataset")
    common(p)
    p.add_argument("--n", type=int, default=None, help="number of samples")
    p.add_argument("--seed", type=int, default=None, help="dataset seed")
    p.set_defaults(func=cmd_gen_data)

    p = sub.add_parser("train", help="train the edge-detection model")
    common(p)
    p.add_argument("--epochs", type=int, default=None, help="training epochs")
    p.add_argument("--optimizer", default=None, help="sgd | adam | rmsprop")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("detect", help="run one detector on one image")
    common(p)
    p.add_argument("input", help="input image (PGM or LRI1)")
    p.add_argument("output", help="output edge map (PGM)")
    p.add_argument("--algorithm", default="canny",
                   help=f"one of {', '.join(ALGORITHMS)}")
    p.add_argument("--threshold", type=float, default=0.5,
                   help="binarization threshold (fraction of max for sobel/roberts)")
    p.add_argument("--sigma", type=float, default=1.0, help="canny smoothing sigma")
    p.add_argument("--low", type=float, default=0.1, help="canny low threshold fraction")
    p.add_argument("--high", type=float, default=0.2, help="canny high threshold fraction")
    p.set_defaults(func=cmd_detect)

    p = sub.add_parser("compare", help="evaluate detectors on the test split")
    common(p)
    p.add_argument("--detectors", default="cnn,canny,sobel,roberts",
                   help="comma-separated detector list")
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("gradcheck", help="finite-difference gradient check")
    common(p)
    p.add_argument("--tolerance", type=float, default=1e-4)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_gradcheck)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, ParameterError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except DivergenceError as exc:
        print(f"error: training diverged: {exc}", file=sys.stderr)
        return EXIT_DIVERGED
    except ModelLoadError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_MISSING
    except OSError as exc:
        print(f"error: I/O failure: {exc}", file=sys.stderr)
        return EXIT_IO
    except LidarEdgeError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
