"""Candidate-grid construction, zonal statistics, sample selection and splits.

The selection policy works on per-cell class-pixel counts taken against a
categorical flood raster: cells missing either class are dropped, cells at or
below the first quartile of both surviving populations are dropped, and the
remaining cells are kept only when their water/flood pixel ratio lies inside
a configured band.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field

import numpy as np

from .errors import EmptyPopulationError, EmptyWindowError, ValidationError
from .raster import CATEGORICAL, BoundingBox, RasterGrid, read_window


@dataclass(frozen=True)
class FsmClassMap:
    """Class codes used in the categorical flood raster."""

    background: int = 0
    flood_rp100: int = 1
    permanent_water: int = 2

    def __post_init__(self):
        codes = (self.background, self.flood_rp100, self.permanent_water)
        if len(set(codes)) != 3:
            raise ValidationError(f"class codes must be distinct, got {codes}")

    def codes(self):
        return (self.background, self.flood_rp100, self.permanent_water)


@dataclass(frozen=True)
class SampleMeta:
    """One candidate sample: a key and the world center of its square tile."""

    key: str
    center_x: float
    center_y: float
    tile_side: float

    def __post_init__(self):
        if not self.tile_side > 0:
            raise ValidationError(f"tile_side must be positive, got {self.tile_side}")


@dataclass(frozen=True)
class GridCell:
    key: str
    bbox: BoundingBox


@dataclass(frozen=True)
class ZonalStats:
    """Per-cell class pixel counts against the flood raster.

    ratio is permanent_water / flood_rp100 and is only defined when the cell
    contains at least one flood pixel. disjoint marks cells that did not
    intersect the raster at all (counted as empty, flagged for reporting).
    """

    key: str
    rp100: int
    pwb: int
    disjoint: bool = False

    @property
    def ratio(self):
        if self.rp100 > 0:
            return self.pwb / self.rp100
        return None


@dataclass(frozen=True)
class QuartileStats:
    rp100_q1: float
    pwb_q1: float


@dataclass(frozen=True)
class SelectionReport:
    """Stage-by-stage elimination counts for one selection run."""

    input: int
    stage1_removed: int
    stage3_removed: int
    ratio_removed: int
    selected: int

    def to_dict(self):
        return {
            "input": self.input,
            "stage1_removed": self.stage1_removed,
            "stage3_removed": self.stage3_removed,
            "ratio_removed": self.ratio_removed,
            "selected": self.selected,
        }


@dataclass(frozen=True)
class SelectionResult:
    selected: list[str]
    report: SelectionReport


@dataclass(frozen=True)
class ManifestEntry:
    key: str
    stats: ZonalStats
    split: str


@dataclass(frozen=True)
class SampleManifest:
    """Persisted outcome of selection + splitting."""

    entries: list[ManifestEntry]
    seed: int
    counts: tuple[int, int, int]  # (train, val, test)

    def keys_for(self, split: str) -> list[str]:
        return [e.key for e in self.entries if e.split == split]


# --- metadata --------------------------------------------------------------

def extract_coordinates(records, tile_side: float) -> list[SampleMeta]:
    """Turn raw metadata records into SampleMeta, enforcing unique keys.

    Each record must provide key, center_x and center_y; tile_side comes
    from configuration because the source metadata does not carry it.
    """
    metas = []
    seen = set()
    duplicates = []
    for i, rec in enumerate(records):
        missing = [f for f in ("key", "center_x", "center_y") if f not in rec or rec[f] in (None, "")]
        if missing:
            raise ValidationError(f"record {i}: missing field(s) {', '.join(missing)}")
        key = str(rec["key"])
        if key in seen:
            duplicates.append(key)
            continue
        seen.add(key)
        try:
            cx = float(rec["center_x"])
            cy = float(rec["center_y"])
        except (TypeError, ValueError):
            raise ValidationError(f"record {i} ({key}): non-numeric center coordinates")
        metas.append(SampleMeta(key=key, center_x=cx, center_y=cy, tile_side=tile_side))
    if duplicates:
        raise ValidationError(f"duplicate sample key(s): {', '.join(sorted(set(duplicates)))}")
    return metas


def read_metadata_csv(path, tile_side: float) -> list[SampleMeta]:
    """Read sample metadata from a CSV with header key,center_x,center_y."""
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None:
            raise ValidationError(f"{path}: empty metadata file")
        required = {"key", "center_x", "center_y"}
        if not required.issubset(set(reader.fieldnames)):
            raise ValidationError(
                f"{path}: header must contain key,center_x,center_y, "
                f"got {','.join(reader.fieldnames)}"
            )
        records = list(reader)
    return extract_coordinates(records, tile_side)


def create_vector_grid(metas: list[SampleMeta]) -> list[GridCell]:
    """Axis-aligned square cells of side tile_side centered on each sample."""
    cells = []
    for m in metas:
        half = m.tile_side / 2.0
        cells.append(
            GridCell(
                key=m.key,
                bbox=BoundingBox(
                    min_x=m.center_x - half,
                    min_y=m.center_y - half,
                    max_x=m.center_x + half,
                    max_y=m.center_y + half,
                ),
            )
        )
    return cells


# --- zonal statistics ------------------------------------------------------

def zone_statistics(
    cells: list[GridCell],
    fsm: RasterGrid,
    classes: FsmClassMap = FsmClassMap(),
) -> list[ZonalStats]:
    """Count flood and permanent-water pixels inside each cell.

    Pixels are attributed by the pixel-center rule; nodata and background
    pixels are ignored. Cells entirely outside the raster yield zero counts
    with the disjoint flag set instead of an error.
    """
    if fsm.kind != CATEGORICAL:
        raise ValidationError("zonal statistics require a categorical raster")
    nodata = int(fsm.nodata)
    if nodata in classes.codes():
        raise ValidationError(
            f"raster nodata {nodata} collides with a declared class code"
        )
    declared = set(classes.codes()) | {nodata}
    present = set(np.unique(fsm.data).tolist())
    unknown = present - declared
    if unknown:
        raise ValidationError(f"raster contains undeclared class codes {sorted(unknown)}")

    stats = []
    for cell in cells:
        try:
            window = read_window(fsm, cell.bbox)
        except EmptyWindowError:
            stats.append(ZonalStats(key=cell.key, rp100=0, pwb=0, disjoint=True))
            continue
        rp100 = int(np.count_nonzero(window.data == classes.flood_rp100))
        pwb = int(np.count_nonzero(window.data == classes.permanent_water))
        stats.append(ZonalStats(key=cell.key, rp100=rp100, pwb=pwb))
    return stats


# --- quartiles and selection -----------------------------------------------

def _q1(values) -> float:
    """First quartile by linear interpolation at position (n - 1) / 4."""
    ordered = sorted(float(v) for v in values)
    pos = (len(ordered) - 1) * 0.25
    lo = int(pos)
    frac = pos - lo
    if frac == 0.0 or lo + 1 >= len(ordered):
        return ordered[lo]
    return ordered[lo] + frac * (ordered[lo + 1] - ordered[lo])


def compute_quartiles(stats: list[ZonalStats]) -> QuartileStats:
    if not stats:
        raise EmptyPopulationError("cannot compute quartiles of an empty population")
    return QuartileStats(
        rp100_q1=_q1(s.rp100 for s in stats),
        pwb_q1=_q1(s.pwb for s in stats),
    )


def run_selection(
    stats: list[ZonalStats],
    ratio_min: float = 0.1,
    ratio_max: float = 1.0,
) -> SelectionResult:
    """Apply the three selection filters and report per-stage eliminations.

    Stage 1 drops cells with rp100 < 1 or pwb < 1. Quartiles are then taken
    over the survivors, and stage 3 drops cells at or below Q1 in both
    populations. Finally cells whose pwb/rp100 ratio falls outside
    [ratio_min, ratio_max] are dropped. Output preserves input order.
    """
    stage1 = [s for s in stats if not (s.rp100 < 1 or s.pwb < 1)]
    stage1_removed = len(stats) - len(stage1)

    survivors = []
    stage3_removed = 0
    ratio_removed = 0
    if stage1:
        q = compute_quartiles(stage1)
        for s in stage1:
            if s.rp100 <= q.rp100_q1 and s.pwb <= q.pwb_q1:
                stage3_removed += 1
                continue
            ratio = s.pwb / s.rp100
            if ratio < ratio_min or ratio > ratio_max:
                ratio_removed += 1
                continue
            survivors.append(s.key)

    report = SelectionReport(
        input=len(stats),
        stage1_removed=stage1_removed,
        stage3_removed=stage3_removed,
        ratio_removed=ratio_removed,
        selected=len(survivors),
    )
    return SelectionResult(selected=survivors, report=report)


def select_samples(
    stats: list[ZonalStats],
    ratio_min: float = 0.1,
    ratio_max: float = 1.0,
) -> list[str]:
    """Keys surviving all selection filters, in input order."""
    return run_selection(stats, ratio_min, ratio_max).selected


# --- splitting -------------------------------------------------------------

def split_counts(n: int, ratios=(0.6, 0.2, 0.2)) -> tuple[int, int, int]:
    """Default split sizes: floor the val/test fractions, train gets the rest."""
    n_val = int(ratios[1] * n)
    n_test = int(ratios[2] * n)
    return n - n_val - n_test, n_val, n_test


def split_dataset(
    stats: list[ZonalStats],
    ratios=(0.6, 0.2, 0.2),
    seed: int = 0,
    explicit_counts: tuple[int, int, int] | None = None,
) -> SampleManifest:
    """Assign every key to train/val/test by a seeded shuffle.

    explicit_counts overrides the default floor/floor/remainder rule and must
    sum to the number of keys. Entries keep input order; only the split
    labels depend on the shuffle.
    """
    n = len(stats)
    if explicit_counts is not None:
        counts = tuple(int(c) for c in explicit_counts)
        if len(counts) != 3 or any(c < 0 for c in counts):
            raise ValidationError(f"explicit counts must be 3 non-negative ints, got {explicit_counts}")
        if sum(counts) != n:
            raise ValidationError(
                f"explicit counts {counts} sum to {sum(counts)}, expected {n}"
            )
    else:
        if abs(sum(ratios) - 1.0) > 1e-9 or any(r < 0 for r in ratios):
            raise ValidationError(f"split ratios must be non-negative and sum to 1, got {ratios}")
        counts = split_counts(n, ratios)

    order = np.random.default_rng(seed).permutation(n)
    split_of = {}
    n_train, n_val, _ = counts
    for rank, idx in enumerate(order):
        if rank < n_train:
            label = "train"
        elif rank < n_train + n_val:
            label = "val"
        else:
            label = "test"
        split_of[int(idx)] = label

    entries = [
        ManifestEntry(key=s.key, stats=s, split=split_of[i]) for i, s in enumerate(stats)
    ]
    return SampleManifest(entries=entries, seed=int(seed), counts=counts)


# --- persistence -----------------------------------------------------------

def manifest_to_dict(manifest: SampleManifest) -> dict:
    return {
        "seed": manifest.seed,
        "counts": {
            "train": manifest.counts[0],
            "val": manifest.counts[1],
            "test": manifest.counts[2],
        },
        "entries": [
            {
                "key": e.key,
                "rp100": e.stats.rp100,
                "pwb": e.stats.pwb,
                "ratio": e.stats.ratio,
                "split": e.split,
            }
            for e in manifest.entries
        ],
    }


def manifest_from_dict(payload: dict) -> SampleManifest:
    entries = [
        ManifestEntry(
            key=item["key"],
            stats=ZonalStats(key=item["key"], rp100=item["rp100"], pwb=item["pwb"]),
            split=item["split"],
        )
        for item in payload["entries"]
    ]
    counts = (
        payload["counts"]["train"],
        payload["counts"]["val"],
        payload["counts"]["test"],
    )
    return SampleManifest(entries=entries, seed=payload["seed"], counts=counts)


def write_manifest(manifest: SampleManifest, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(manifest_to_dict(manifest), fh, indent=2, sort_keys=True)
        fh.write("\n")


def read_manifest(path) -> SampleManifest:
    with open(path, "r", encoding="utf-8") as fh:
        return manifest_from_dict(json.load(fh))
