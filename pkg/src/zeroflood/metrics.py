"""Pixel-level agreement metrics between predicted and reference flood masks.

Scores live on a 0-100 scale. A metric whose denominator is empty (no
reference flood pixels, or no predicted flood pixels) is reported as None
rather than silently coerced to 0 or 100; aggregation excludes those samples
from the macro averages and reports how many were excluded.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .errors import ShapeError, ValidationError
from .raster import CATEGORICAL, RasterGrid

RP100_ONLY = "rp100_only"
RP100_PLUS_PWB = "rp100_plus_pwb"
LABEL_POLICIES = (RP100_ONLY, RP100_PLUS_PWB)


class BinaryMask:
    """A flood/not-flood pixel grid with an optional validity mask."""

    def __init__(self, pixels, valid=None):
        pixels = np.asarray(pixels, dtype=bool)
        if pixels.ndim != 2:
            raise ShapeError(f"mask must be 2-D, got shape {pixels.shape}")
        if valid is None:
            valid = np.ones_like(pixels, dtype=bool)
        else:
            valid = np.asarray(valid, dtype=bool)
            if valid.shape != pixels.shape:
                raise ShapeError(
                    f"valid mask shape {valid.shape} != pixel shape {pixels.shape}"
                )
        self.pixels = pixels
        self.valid = valid

    @property
    def height(self):
        return self.pixels.shape[0]

    @property
    def width(self):
        return self.pixels.shape[1]

    def flood_count(self) -> int:
        return int(np.count_nonzero(self.pixels & self.valid))


def mask_from_fsm(
    raster: RasterGrid,
    policy: str = RP100_ONLY,
    flood_code: int = 1,
    water_code: int = 2,
) -> BinaryMask:
    """Reference mask from a categorical flood raster.

    rp100_only marks only the flood class as positive; rp100_plus_pwb merges
    permanent water into the positive class. nodata pixels become invalid.
    """
    if raster.kind != CATEGORICAL:
        raise ValidationError("reference masks require a categorical raster")
    if policy not in LABEL_POLICIES:
        raise ValidationError(f"unknown label policy {policy!r}")
    flood = raster.data == flood_code
    if policy == RP100_PLUS_PWB:
        flood = flood | (raster.data == water_code)
    return BinaryMask(flood, valid=raster.valid_mask())


@dataclass(frozen=True)
class ConfusionCounts:
    tp: int
    fp: int
    fn: int
    tn: int

    def total(self) -> int:
        return self.tp + self.fp + self.fn + self.tn

    def __add__(self, other: "ConfusionCounts") -> "ConfusionCounts":
        return ConfusionCounts(
            self.tp + other.tp,
            self.fp + other.fp,
            self.fn + other.fn,
            self.tn + other.tn,
        )


def confusion(pred: BinaryMask, ref: BinaryMask) -> ConfusionCounts:
    """Pixel confusion counts over the intersection of both validity masks."""
    if pred.pixels.shape != ref.pixels.shape:
        raise ShapeError(
            f"prediction shape {pred.pixels.shape} != reference shape {ref.pixels.shape}"
        )
    valid = pred.valid & ref.valid
    p = pred.pixels & valid
    r = ref.pixels & valid
    tp = int(np.count_nonzero(p & r))
    fp = int(np.count_nonzero(p & ~r))
    fn = int(np.count_nonzero(~p & r))
    tn = int(np.count_nonzero(valid)) - tp - fp - fn
    return ConfusionCounts(tp=tp, fp=fp, fn=fn, tn=tn)


def hit_rate(c: ConfusionCounts):
    """Recall on the 0-100 scale, or None when the reference is empty."""
    denom = c.tp + c.fn
    if denom == 0:
        return None
    return 100.0 * c.tp / denom


def true_alarm_rate(c: ConfusionCounts):
    """Precision on the 0-100 scale, or None when nothing was predicted."""
    denom = c.tp + c.fp
    if denom == 0:
        return None
    return 100.0 * c.tp / denom


def f1_from(hr, tar):
    """Harmonic mean of hit rate and true alarm rate on the 0-100 scale.

    Undefined (None) inputs propagate; the degenerate hr = tar = 0 case is
    defined as 0 so aggregation stays total.
    """
    if hr is None or tar is None:
        return None
    if hr == 0.0 and tar == 0.0:
        return 0.0
    return 2.0 * hr * tar / (hr + tar)


@dataclass(frozen=True)
class MetricReport:
    """One row of scores; aggregation names which rule produced it."""

    hr: float | None
    tar: float | None
    f1: float | None
    counts: ConfusionCounts | None
    aggregation: str


def report_from_counts(c: ConfusionCounts, aggregation: str = "per_sample") -> MetricReport:
    hr = hit_rate(c)
    tar = true_alarm_rate(c)
    return MetricReport(hr=hr, tar=tar, f1=f1_from(hr, tar), counts=c, aggregation=aggregation)


@dataclass(frozen=True)
class MetricSummary:
    per_sample: list[tuple[str, MetricReport]]
    micro: MetricReport
    macro: MetricReport
    excluded: dict[str, int]


def aggregate(samples: list[tuple[str, ConfusionCounts]]) -> MetricSummary:
    """Per-sample, micro (pooled counts) and macro (mean of defined scores).

    Samples whose metric is undefined are left out of that macro average;
    the excluded mapping records how many were dropped per metric.
    """
    if not samples:
        raise ValidationError("cannot aggregate an empty sample list")

    per_sample = [(key, report_from_counts(c)) for key, c in samples]

    pooled = ConfusionCounts(0, 0, 0, 0)
    for _, c in samples:
        pooled = pooled + c
    micro = report_from_counts(pooled, aggregation="micro")

    excluded = {}
    macro_values = {}
    for name in ("hr", "tar", "f1"):
        defined = [getattr(r, name) for _, r in per_sample if getattr(r, name) is not None]
        excluded[name] = len(per_sample) - len(defined)
        macro_values[name] = sum(defined) / len(defined) if defined else None
    macro = MetricReport(
        hr=macro_values["hr"],
        tar=macro_values["tar"],
        f1=macro_values["f1"],
        counts=None,
        aggregation="macro",
    )
    return MetricSummary(per_sample=per_sample, micro=micro, macro=macro, excluded=excluded)


# --- persistence -----------------------------------------------------------

def _report_dict(r: MetricReport) -> dict:
    out = {"hr": r.hr, "tar": r.tar, "f1": r.f1}
    if r.counts is not None:
        out.update(tp=r.counts.tp, fp=r.counts.fp, fn=r.counts.fn, tn=r.counts.tn)
    return out


def summary_to_dict(summary: MetricSummary) -> dict:
    return {
        "per_sample": [
            {"key": key, **_report_dict(r)} for key, r in summary.per_sample
        ],
        "micro": _report_dict(summary.micro),
        "macro": _report_dict(summary.macro),
        "excluded": summary.excluded,
    }


def write_metrics_report(summary: MetricSummary, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(summary_to_dict(summary), fh, indent=2, sort_keys=True)
        fh.write("\n")
