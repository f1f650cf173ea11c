"""Command-line front end: gen-data, cv, eval, report.

Exit codes: 0 success, 2 usage problems (bad flags, bad config values),
3 data problems (unreadable files, bad manifests, classes too small),
4 numeric failures (non-finite loss). ``cv`` drops its artifacts into a
timestamped run directory and refreshes a ``latest`` symlink; the run
manifest (run.json) is written last, atomically, so an interrupted run
never looks complete.
"""

from __future__ import annotations

import argparse
import datetime as _dt
import json
import os
import sys
from dataclasses import asdict
from pathlib import Path

import numpy as np

from .checkpoint import load_model, save_model
from .cv import TrainConfig, cross_validate
from .data import (CLASS_CODES, DEFAULT_PROFILE, DatasetManifest,
                   generate_synthetic, load_preprocessed)
from .encoder import EncoderConfig
from .errors import (ContractError, DataError, DimensionError, NumericError,
                     ParameterError)
from .head import HeadConfig
from .metrics import (ConfusionMatrix, METRIC_NAMES, basic_metrics,
                      confusion_text, metrics_csv, micro_average, one_vs_rest)
from .model import PatchClassifier

RUN_MANIFEST = "run.json"

# flat key set shared by the JSON config file and the cv flags
CV_DEFAULTS = {
    "folds": 5, "epochs": 20, "warmup_epochs": 1, "batch_size": 32,
    "lr_max": 1e-5, "lr_min": 1e-6, "weight_decay": 0.01, "seed": 0,
    "freeze_encoder": False,
    "image_size": 224, "tile_size": 14, "dim": 32, "depth": 2, "heads": 4,
    "registers": 4, "mlp_ratio": 4,
    "bottleneck": 16, "dropout": 0.5,
}


def _say(msg: str):
    print(msg, flush=True)


def _fail(msg: str):
    print(f"error: {msg}", file=sys.stderr, flush=True)


def _write_atomic(path: Path, text: str):
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text(text)
    os.replace(tmp, path)


def _bundle_dict(bundle) -> dict:
    out = {name: float(getattr(bundle, name)) for name in METRIC_NAMES}
    out["undefined"] = sorted(bundle.undefined)
    return out


def format_report(per_class: list, micro: dict, class_names=CLASS_CODES) -> str:
    """Fixed-width table: metric rows, one column per class plus Average.

    Per-class MCC cells render as -- (the summary column carries the
    multi-class coefficient).
    """
    width = 9
    header = "metric".ljust(12) + "".join(f"{n:>{width}}" for n in class_names)
    header += f"{'Average':>{width + 2}}"
    lines = [header, "-" * len(header)]
    for name in METRIC_NAMES:
        cells = []
        for bundle in per_class:
            cells.append("--" if name == "mcc" else f"{bundle[name]:.4f}")
        row = name.ljust(12) + "".join(f"{c:>{width}}" for c in cells)
        row += f"{micro[name]:>{width + 2}.4f}"
        lines.append(row)
    return "\n".join(lines) + "\n"


def _evaluate_model(model: PatchClassifier, images, labels):
    preds = model.predict(images)
    cm = ConfusionMatrix(model.head_cfg.n_classes)
    cm.add(preds, labels)
    per_class = [basic_metrics(one_vs_rest(cm, k))
                 for k in range(model.head_cfg.n_classes)]
    return cm, per_class, micro_average(cm)


# ----------------------------------------------------------------------
# gen-data


def cmd_gen_data(args) -> int:
    out = Path(args.out)
    if out.exists() and any(out.iterdir()) and not args.force:
        raise ParameterError(
            f"{out} already has contents; pass --force to write anyway")
    counts = DEFAULT_PROFILE
    if args.counts:
        try:
            counts = [int(c) for c in args.counts.split(",")]
        except ValueError:
            raise ParameterError(f"--counts must be integers, got {args.counts!r}")
    manifest = generate_synthetic(out, counts, seed=args.seed, size=args.size)
    _say(f"wrote {len(manifest.entries)} patches under {out} "
         f"(seed {args.seed}, size {args.size})")
    for code, n in zip(CLASS_CODES, manifest.class_counts()):
        _say(f"  {code}: {n}")
    return 0


# ----------------------------------------------------------------------
# cv


def _resolve_settings(args) -> dict:
    settings = dict(CV_DEFAULTS)
    if args.config:
        path = Path(args.config)
        if not path.is_file():
            raise ParameterError(f"config file {path} does not exist")
        try:
            loaded = json.loads(path.read_text())
        except ValueError as exc:
            raise ParameterError(f"config file {path} is not valid JSON: {exc}")
        if not isinstance(loaded, dict):
            raise ParameterError(f"config file {path} must hold a flat object")
        unknown = sorted(set(loaded) - set(settings))
        if unknown:
            raise ParameterError(
                f"unknown config keys {unknown}; valid keys: "
                f"{sorted(settings)}")
        settings.update(loaded)
    for key in settings:
        value = getattr(args, key, None)
        if value is not None:
            settings[key] = value
    return settings


def _split_settings(settings: dict):
    enc = EncoderConfig(image_size=settings["image_size"],
                        tile_size=settings["tile_size"],
                        dim=settings["dim"], depth=settings["depth"],
                        heads=settings["heads"],
                        registers=settings["registers"],
                        mlp_ratio=settings["mlp_ratio"])
    head = HeadConfig(bottleneck=settings["bottleneck"],
                      dropout=settings["dropout"])
    train = TrainConfig(folds=settings["folds"], epochs=settings["epochs"],
                        warmup_epochs=settings["warmup_epochs"],
                        batch_size=settings["batch_size"],
                        lr_max=settings["lr_max"], lr_min=settings["lr_min"],
                        weight_decay=settings["weight_decay"],
                        seed=settings["seed"],
                        freeze_encoder=bool(settings["freeze_encoder"]))
    return enc, head, train


def _make_run_dir(base: Path) -> Path:
    base.mkdir(parents=True, exist_ok=True)
    stamp = _dt.datetime.now().strftime("run-%Y%m%d-%H%M%S")
    run = base / stamp
    bump = 0
    while run.exists():
        bump += 1
        run = base / f"{stamp}-{bump}"
    run.mkdir()
    return run


def _point_latest(base: Path, run: Path):
    link = base / "latest"
    try:
        if link.is_symlink() or link.exists():
            link.unlink()
        link.symlink_to(run.name)
    except OSError as exc:
        _say(f"note: could not refresh {link}: {exc}")


def cmd_cv(args) -> int:
    settings = _resolve_settings(args)
    enc_cfg, head_cfg, train_cfg = _split_settings(settings)

    manifest = DatasetManifest.load(args.data)
    _say(f"loaded {len(manifest.entries)} patches from {args.data}")
    images, labels = load_preprocessed(manifest, size=enc_cfg.image_size)

    run_dir = _make_run_dir(Path(args.out))
    _say(f"run directory: {run_dir}")

    best = {"f1": -1.0, "fold": -1, "model": None}

    def on_fold(result, model):
        _say(f"fold {result.fold}: micro f1 {result.micro.f1:.4f} "
             f"after {result.epochs_run} epochs "
             f"(loss {result.epoch_losses[-1]:.4f})")
        if result.micro.f1 > best["f1"]:
            best.update(f1=float(result.micro.f1), fold=result.fold,
                        model=model)

    progress = None
    if args.verbose:
        progress = lambda f, e, l: _say(f"  fold {f} epoch {e}: loss {l:.4f}")

    result = cross_validate(images, labels, enc_cfg, head_cfg, train_cfg,
                            progress=progress, on_fold=on_fold)

    artifacts = ["metrics.csv", "confusion.txt", "report.txt", "model.ckpt"]
    (run_dir / "metrics.csv").write_text(
        metrics_csv(result.per_class, result.micro, CLASS_CODES))
    (run_dir / "confusion.txt").write_text(
        confusion_text(result.confusion, CLASS_CODES)
        + "\n" + confusion_text(result.confusion, CLASS_CODES, normalized=True))
    report = format_report([_bundle_dict(b) for b in result.per_class],
                           _bundle_dict(result.micro))
    (run_dir / "report.txt").write_text(report)
    save_model(run_dir / "model.ckpt", best["model"],
               {"fold": best["fold"], "micro_f1": best["f1"],
                "data": str(args.data)})

    payload = {
        "created": _dt.datetime.now().isoformat(timespec="seconds"),
        "data": str(args.data),
        "settings": settings,
        "per_class": [_bundle_dict(b) for b in result.per_class],
        "micro": _bundle_dict(result.micro),
        "fold_average": result.fold_average,
        "confusion": result.confusion.counts.tolist(),
        "folds": [{"fold": r.fold, "epochs_run": r.epochs_run,
                   "final_loss": r.epoch_losses[-1],
                   "micro": _bundle_dict(r.micro)}
                  for r in result.fold_results],
        "best_fold": best["fold"],
        "artifacts": artifacts,
    }
    # run.json lands last: its presence marks the run as complete
    _write_atomic(run_dir / RUN_MANIFEST, json.dumps(payload, indent=1) + "\n")
    _point_latest(Path(args.out), run_dir)

    _say("")
    _say(report.rstrip("\n"))
    _say(f"\nsummed-matrix micro f1 {result.micro.f1:.4f}, "
         f"mcc {result.micro.mcc:.4f}; artifacts in {run_dir}")
    return 0


# ----------------------------------------------------------------------
# eval


def cmd_eval(args) -> int:
    model, meta = load_model(args.checkpoint)
    manifest = DatasetManifest.load(args.data)
    images, labels = load_preprocessed(manifest,
                                       size=model.enc_cfg.image_size)
    cm, per_class, micro = _evaluate_model(model, images, labels)
    report = format_report([_bundle_dict(b) for b in per_class],
                           _bundle_dict(micro))
    _say(f"checkpoint {args.checkpoint} "
         f"(trained fold {meta.get('fold', '?')}) on {args.data}:")
    _say("")
    _say(report.rstrip("\n"))
    if args.csv:
        _write_atomic(Path(args.csv), metrics_csv(per_class, micro, CLASS_CODES))
        _say(f"\nwrote {args.csv}")
    if args.confusion:
        _say("")
        _say(confusion_text(cm, CLASS_CODES).rstrip("\n"))
    return 0


# ----------------------------------------------------------------------
# report


def cmd_report(args) -> int:
    run_dir = Path(args.run)
    path = run_dir / RUN_MANIFEST
    if not path.is_file():
        raise DataError(f"{run_dir} has no {RUN_MANIFEST}; not a finished run")
    try:
        payload = json.loads(path.read_text())
    except ValueError as exc:
        raise DataError(f"{path} is unreadable: {exc}")
    try:
        report = format_report(payload["per_class"], payload["micro"])
        folds = payload["folds"]
        averages = payload["fold_average"]
    except (KeyError, TypeError) as exc:
        raise DataError(f"{path} is missing fields: {exc}")
    _say(f"run {run_dir} over {payload.get('data', '?')} "
         f"({payload.get('created', '?')})")
    _say("")
    _say(report.rstrip("\n"))
    _say("")
    for f in folds:
        _say(f"fold {f['fold']}: micro f1 {f['micro']['f1']:.4f} "
             f"({f['epochs_run']} epochs, final loss {f['final_loss']:.4f})")
    avg = ", ".join(f"{k} {v:.4f}" for k, v in averages.items())
    _say(f"fold-average micro metrics: {avg}")
    return 0


# ----------------------------------------------------------------------
# parser


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="gbmpatch",
        description="desk-scale 9-class tissue-patch classification pipeline")
    sub = parser.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen-data", help="write a synthetic labeled dataset")
    g.add_argument("--out", required=True, help="dataset directory")
    g.add_argument("--counts",
                   help="9 comma-separated per-class counts "
                        "(default long-tailed profile)")
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--size", type=int, default=224, help="patch side length")
    g.add_argument("--force", action="store_true",
                   help="write into a non-empty directory")
    g.set_defaults(func=cmd_gen_data)

    c = sub.add_parser("cv", help="stratified k-fold cross-validation")
    c.add_argument("--data", required=True, help="dataset directory")
    c.add_argument("--out", default="runs", help="where run directories go")
    c.add_argument("--config", help="JSON file of flat settings; flags win")
    c.add_argument("--verbose", action="store_true",
                   help="print every epoch")
    for key, default in CV_DEFAULTS.items():
        flag = "--" + key.replace("_", "-")
        if isinstance(default, bool):
            c.add_argument(flag, action="store_const", const=True,
                           default=None)
        else:
            c.add_argument(flag, type=type(default), default=None,
                           help=f"default {default}")
    c.set_defaults(func=cmd_cv)

    e = sub.add_parser("eval", help="evaluate a checkpoint on a dataset")
    e.add_argument("--checkpoint", required=True)
    e.add_argument("--data", required=True)
    e.add_argument("--csv", help="also write the per-class metrics CSV here")
    e.add_argument("--confusion", action="store_true",
                   help="also print the confusion matrix")
    e.set_defaults(func=cmd_eval)

    r = sub.add_parser("report", help="re-render the table for a finished run")
    r.add_argument("--run", required=True, help="run directory (or latest)")
    r.set_defaults(func=cmd_report)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ParameterError, DimensionError, ContractError) as exc:
        _fail(str(exc))
        return 2
    except DataError as exc:
        _fail(str(exc))
        return 3
    except NumericError as exc:
        _fail(str(exc))
        return 4


if __name__ == "__main__":
    sys.exit(main())
