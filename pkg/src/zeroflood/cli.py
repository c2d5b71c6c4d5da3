"""Command-line pipeline: select -> split -> train -> eval -> render.

Every command takes --config pointing at a key=value pipeline file (see
config.py) plus a few targeted overrides. Exit codes: 0 on success, 1 on
I/O or validation failures, 2 when a step legitimately produced an empty
result (for example, no sample survived selection). Outputs are
deterministic: rerunning a command with the same inputs and seeds writes
byte-identical files.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
from pathlib import Path

import numpy as np

from . import sampling
from .config import PipelineConfig, load_config
from .errors import ShapeError, ValidationError, ZeroFloodError
from .metrics import aggregate, confusion, mask_from_fsm, write_metrics_report
from .model.checkpoint import load_checkpoint, save_checkpoint
from .model.estimator import FloodSegmenter
from .model.network import canonical_modalities
from .raster import (
    CATEGORICAL,
    GeoTransform,
    RasterGrid,
    read_ascii_grid,
    read_window,
    sniff_raster,
    write_binary_raster,
)
from .render import composite_side_by_side, raster_to_mask, write_pgm
from .reporting import run_tim_ablation, write_ablation_report
from .synthetic import make_synthetic_task

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_EMPTY = 2


class _Parser(argparse.ArgumentParser):
    """argparse variant whose usage errors exit with code 1, not 2."""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_ERROR, f"{self.prog}: error: {message}\n")


# --- shared helpers ---------------------------------------------------------

def _out_dir(config: PipelineConfig) -> Path:
    config.paths.output_dir.mkdir(parents=True, exist_ok=True)
    return config.paths.output_dir


def _write_json(payload, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")


def load_fsm_raster(path) -> RasterGrid:
    """Read the flood-class raster from either supported format.

    ASCII grids arrive as continuous values; they are converted to 8-bit
    class codes (255 becomes the nodata code) so downstream zonal statistics
    see a categorical raster.
    """
    raster = sniff_raster(path)
    if raster.kind == CATEGORICAL:
        return raster
    data = raster.data
    nodata_mask = data == raster.nodata_cast
    values = data[~nodata_mask]
    if values.size and (
        np.any(values != np.floor(values)) or np.any(values < 0) or np.any(values > 254)
    ):
        raise ValidationError(f"{path}: class raster holds values outside integer 0..254")
    codes = np.where(nodata_mask, 255, data)
    return RasterGrid(
        width=raster.width,
        height=raster.height,
        transform=raster.transform,
        crs_id=raster.crs_id,
        nodata=255,
        kind=CATEGORICAL,
        data=codes.astype(np.uint8),
    )


def _cells_by_key(config: PipelineConfig):
    metas = sampling.read_metadata_csv(config.paths.metadata_csv, config.sampling.tile_side)
    return {cell.key: cell for cell in sampling.create_vector_grid(metas)}


def _load_eo_stack(eo_dir: Path, key: str, in_channels: int) -> np.ndarray:
    """Stack the per-band EO tiles for one sample into (C, H, W).

    Bands live in files named <key>.b<j>.zfr for j = 0 .. C-1; all bands of
    one sample must share dimensions and geotransform.
    """
    bands = []
    transform = None
    for j in range(in_channels):
        path = eo_dir / f"{key}.b{j}.zfr"
        if not path.exists():
            raise ValidationError(f"missing EO band file {path}")
        raster = sniff_raster(path)
        if transform is None:
            transform = raster.transform
        elif raster.transform != transform:
            raise ValidationError(f"{path}: band geotransform differs from band 0")
        bands.append(raster.data.astype(np.float32))
    stack = np.stack(bands, axis=0)
    if not np.all(np.isfinite(stack)):
        raise ValidationError(f"EO tiles for {key} contain non-finite values")
    return stack


def _sample_tensors(config: PipelineConfig, fsm, cells, keys):
    """(X, y, valid) arrays for the given sample keys."""
    xs, ys, valids = [], [], []
    shape = None
    for key in keys:
        if key not in cells:
            raise ValidationError(f"manifest key {key} missing from metadata")
        window = read_window(fsm, cells[key].bbox)
        ref = mask_from_fsm(window, config.fsm_label_policy)
        x = _load_eo_stack(config.paths.eo_raster_dir, key, config.model.in_channels)
        if x.shape[1:] != ref.pixels.shape:
            raise ShapeError(
                f"{key}: EO tile is {x.shape[1:]}, label window is {ref.pixels.shape}"
            )
        if shape is None:
            shape = x.shape
        elif x.shape != shape:
            raise ShapeError(f"{key}: tile shape {x.shape} differs from {shape}")
        xs.append(x)
        ys.append(ref.pixels)
        valids.append(ref.valid)
    return np.stack(xs), np.stack(ys), np.stack(valids)


def _mask_to_raster(mask_pixels, valid, window) -> RasterGrid:
    codes = np.where(valid, mask_pixels.astype(np.uint8), 255)
    return RasterGrid(
        width=window.width,
        height=window.height,
        transform=window.transform,
        crs_id=window.crs_id,
        nodata=255,
        kind=CATEGORICAL,
        data=codes,
    )


# --- commands ----------------------------------------------------------------

def cmd_select(args) -> int:
    config = load_config(args.config)
    out = _out_dir(config)
    fsm = load_fsm_raster(config.paths.fsm_raster)
    metas = sampling.read_metadata_csv(config.paths.metadata_csv, config.sampling.tile_side)
    cells = sampling.create_vector_grid(metas)
    stats = sampling.zone_statistics(cells, fsm)
    result = sampling.run_selection(
        stats, config.sampling.ratio_min, config.sampling.ratio_max
    )

    _write_json(
        {
            "selected": result.selected,
            "stats": [
                {
                    "key": s.key,
                    "rp100": s.rp100,
                    "pwb": s.pwb,
                    "ratio": s.ratio,
                    "disjoint": s.disjoint,
                }
                for s in stats
            ],
        },
        out / "selection.json",
    )
    _write_json(result.report.to_dict(), out / "stage_report.json")
    print(f"selected {result.report.selected} of {result.report.input} samples")
    return EXIT_EMPTY if not result.selected else EXIT_OK


def cmd_split(args) -> int:
    config = load_config(args.config)
    out = _out_dir(config)
    selection_path = Path(args.selection) if args.selection else out / "selection.json"
    with open(selection_path, "r", encoding="utf-8") as fh:
        selection = json.load(fh)
    stats_by_key = {
        s["key"]: sampling.ZonalStats(key=s["key"], rp100=s["rp100"], pwb=s["pwb"])
        for s in selection["stats"]
    }
    try:
        stats = [stats_by_key[k] for k in selection["selected"]]
    except KeyError as exc:
        raise ValidationError(f"selection file lacks stats for key {exc}")

    seed = args.seed if args.seed is not None else config.split.seed
    counts = args.counts if args.counts is not None else config.split.counts
    manifest = sampling.split_dataset(stats, seed=seed, explicit_counts=counts)
    sampling.write_manifest(manifest, out / "manifest.json")
    print(
        f"split {len(stats)} samples into train={manifest.counts[0]} "
        f"val={manifest.counts[1]} test={manifest.counts[2]}"
    )
    return EXIT_EMPTY if not stats else EXIT_OK


def cmd_train(args) -> int:
    config = load_config(args.config)
    out = _out_dir(config)
    manifest_path = Path(args.manifest) if args.manifest else out / "manifest.json"
    manifest = sampling.read_manifest(manifest_path)
    train_keys = manifest.keys_for("train")
    val_keys = manifest.keys_for("val")
    if not train_keys or not val_keys:
        print("nothing to train: empty train or val split", file=sys.stderr)
        return EXIT_EMPTY

    fsm = load_fsm_raster(config.paths.fsm_raster)
    cells = _cells_by_key(config)
    X_train, y_train, valid_train = _sample_tensors(config, fsm, cells, train_keys)
    X_val, y_val, valid_val = _sample_tensors(config, fsm, cells, val_keys)

    params = config.model_params()
    if args.tim is not None:
        params["tim_modalities"] = canonical_modalities(args.tim)
    if args.seed is not None:
        params["seed"] = args.seed

    est = FloodSegmenter(**params)
    est.fit(X_train, y_train, X_val, y_val, valid=valid_train, valid_val=valid_val)
    save_checkpoint(est, out / "checkpoint.zfm")

    state = est.train_state_
    with open(out / "training_log.csv", "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["epoch", "train_loss", "val_loss"])
        for i, (tl, vl) in enumerate(zip(state.train_loss, state.val_loss), start=1):
            writer.writerow([i, repr(tl), repr(vl)])
    print(
        f"trained {state.epoch} epochs (best epoch {state.best_epoch}, "
        f"val loss {min(state.val_loss):.6f})"
    )
    return EXIT_OK


def cmd_eval(args) -> int:
    config = load_config(args.config)
    out = _out_dir(config)
    checkpoint_path = Path(args.checkpoint) if args.checkpoint else out / "checkpoint.zfm"
    manifest_path = Path(args.manifest) if args.manifest else out / "manifest.json"
    est = load_checkpoint(checkpoint_path)
    manifest = sampling.read_manifest(manifest_path)
    test_keys = manifest.keys_for("test")
    if not test_keys:
        print("nothing to evaluate: empty test split", file=sys.stderr)
        return EXIT_EMPTY

    threshold = args.threshold if args.threshold is not None else config.inference.threshold
    fsm = load_fsm_raster(config.paths.fsm_raster)
    cells = _cells_by_key(config)
    mask_dir = out / "masks"
    if args.save_masks:
        mask_dir.mkdir(parents=True, exist_ok=True)

    samples = []
    for key in test_keys:
        window = read_window(fsm, cells[key].bbox)
        ref = mask_from_fsm(window, config.fsm_label_policy)
        x = _load_eo_stack(config.paths.eo_raster_dir, key, config.model.in_channels)
        pred = est.predict_tiled(
            x,
            tile=config.inference.tile,
            overlap=config.inference.overlap,
            threshold=threshold,
        )
        samples.append((key, confusion(pred, ref)))
        if args.save_masks:
            write_binary_raster(
                _mask_to_raster(pred.pixels, ref.valid, window), mask_dir / f"{key}.pred.zfr"
            )
            write_binary_raster(
                _mask_to_raster(ref.pixels, ref.valid, window), mask_dir / f"{key}.ref.zfr"
            )

    summary = aggregate(samples)
    write_metrics_report(summary, out / "metrics.json")
    micro = summary.micro

    def show(v):
        return "n/a" if v is None else f"{v:.2f}"

    print(
        f"evaluated {len(samples)} samples: micro F1={show(micro.f1)} "
        f"HR={show(micro.hr)} TAR={show(micro.tar)}"
    )
    return EXIT_OK


def cmd_render(args) -> int:
    threshold = args.threshold
    if threshold is None and args.config:
        threshold = load_config(args.config).inference.threshold
    if threshold is None:
        threshold = 0.5
    mask = raster_to_mask(sniff_raster(args.input), threshold=threshold)
    if args.ref:
        ref = raster_to_mask(sniff_raster(args.ref), threshold=threshold)
        mask = composite_side_by_side(mask, ref)
    write_pgm(mask, args.out)
    print(f"wrote {args.out}")
    return EXIT_OK


def cmd_ablation(args) -> int:
    task = make_synthetic_task(
        n_train=args.tiles, n_val=max(2, args.tiles // 4), n_test=max(2, args.tiles // 4),
        size=args.size, seed=args.seed,
    )
    rows = run_tim_ablation(
        task=task,
        estimator_params={"max_epochs": args.epochs, "patience": args.epochs, "seed": args.seed},
    )
    table_path = Path(args.out)
    write_ablation_report(rows, table_path, table_path.with_suffix(".json"))
    with open(table_path, "r", encoding="utf-8") as fh:
        print(fh.read(), end="")
    return EXIT_OK


# --- entry point --------------------------------------------------------------

def _counts_arg(value: str):
    parts = value.split(",")
    if len(parts) != 3:
        raise argparse.ArgumentTypeError("expected three comma-separated integers")
    try:
        return tuple(int(p) for p in parts)
    except ValueError:
        raise argparse.ArgumentTypeError("counts must be integers")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="zeroflood", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("select", parents=[], help="select samples against the flood raster")
    p.add_argument("--config", required=True)
    p.set_defaults(func=cmd_select)

    p = sub.add_parser("split", help="assign selected samples to train/val/test")
    p.add_argument("--config", required=True)
    p.add_argument("--selection", help="selection JSON (default: <output_dir>/selection.json)")
    p.add_argument("--seed", type=int, help="override split.seed")
    p.add_argument("--counts", type=_counts_arg, help="explicit train,val,test counts")
    p.set_defaults(func=cmd_split)

    p = sub.add_parser("train", help="train the segmentation model on the train split")
    p.add_argument("--config", required=True)
    p.add_argument("--manifest", help="manifest JSON (default: <output_dir>/manifest.json)")
    p.add_argument("--tim", help="override imaginary modalities, e.g. s2,dem")
    p.add_argument("--seed", type=int, help="override model.seed")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="score the test split against the flood raster")
    p.add_argument("--config", required=True)
    p.add_argument("--checkpoint", help="checkpoint file (default: <output_dir>/checkpoint.zfm)")
    p.add_argument("--manifest", help="manifest JSON (default: <output_dir>/manifest.json)")
    p.add_argument("--threshold", type=float, help="override inference.threshold")
    p.add_argument("--save-masks", action="store_true", help="write per-sample mask rasters")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("render", help="render a mask raster to a PGM image")
    p.add_argument("--config", help="accepted for uniformity; not required")
    p.add_argument("--input", required=True, help="mask raster (.zfr or ASCII grid)")
    p.add_argument("--out", required=True, help="output PGM path")
    p.add_argument("--ref", help="optional reference mask for a side-by-side composite")
    p.add_argument("--threshold", type=float, help="threshold for continuous inputs")
    p.set_defaults(func=cmd_render)

    p = sub.add_parser("ablation", help="run the imaginary-modality ablation grid")
    p.add_argument("--out", required=True, help="output table path (JSON written alongside)")
    p.add_argument("--epochs", type=int, default=30)
    p.add_argument("--tiles", type=int, default=12, help="training tiles in the synthetic task")
    p.add_argument("--size", type=int, default=32, help="tile size in pixels")
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_ablation)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ZeroFloodError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR
    except json.JSONDecodeError as exc:
        print(f"error: malformed JSON input: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
