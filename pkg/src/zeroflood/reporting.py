"""Score tables: plain columnar reports and the imaginary-modality ablation.

The ablation trains one model per modality subset on a shared task, scores
the held-out tiles, and renders a table whose first row is the no-expansion
baseline and whose remaining rows carry deltas against it.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .metrics import ConfusionCounts, aggregate
from .model.estimator import FloodSegmenter
from .synthetic import SyntheticTask, make_synthetic_task

ABLATION_SETTINGS = (
    (),
    ("S2",),
    ("DEM",),
    ("LULC",),
    ("S2", "DEM"),
    ("S2", "LULC"),
    ("DEM", "LULC"),
    ("S2", "DEM", "LULC"),
)


@dataclass(frozen=True)
class AblationRow:
    setting: tuple[str, ...]
    f1: float | None
    hr: float | None
    tar: float | None

    @property
    def label(self) -> str:
        return "+".join(self.setting) if self.setting else "-"


def _micro_scores(est: FloodSegmenter, X, y):
    pred = est.predict(X)
    samples = []
    for i in range(len(X)):
        p, t = pred[i], y[i]
        tp = int(np.count_nonzero(p & t))
        fp = int(np.count_nonzero(p & ~t))
        fn = int(np.count_nonzero(~p & t))
        tn = t.size - tp - fp - fn
        samples.append((str(i), ConfusionCounts(tp, fp, fn, tn)))
    micro = aggregate(samples).micro
    return micro.f1, micro.hr, micro.tar


def run_tim_ablation(
    task: SyntheticTask | None = None,
    estimator_params: dict | None = None,
    settings=ABLATION_SETTINGS,
) -> list[AblationRow]:
    """Train and score one model per modality subset on the same data.

    Every run shares the task, the seed and every other hyperparameter, so
    the rows differ only in which imaginary modalities are generated.
    """
    if task is None:
        task = make_synthetic_task()
    params = dict(estimator_params or {})
    rows = []
    for setting in settings:
        params["tim_modalities"] = tuple(setting)
        est = FloodSegmenter(**params)
        est.fit(task.X_train, task.y_train, task.X_val, task.y_val)
        f1, hr, tar = _micro_scores(est, task.X_test, task.y_test)
        rows.append(AblationRow(setting=tuple(setting), f1=f1, hr=hr, tar=tar))
    return rows


def _cell(value, base) -> str:
    if value is None:
        return "  n/a         "
    delta = "(  -  )" if base is None else f"({value - base:+.2f})"
    return f"{value:6.2f} {delta}"


def format_ablation_table(rows: list[AblationRow]) -> str:
    """Columnar text table; the first row is the baseline for all deltas."""
    base = rows[0] if rows else None
    lines = [f"{'TiM Setting':<14} {'F1':<15} {'HR':<15} {'TAR':<15}"]
    for i, row in enumerate(rows):
        ref = None if i == 0 else base
        lines.append(
            f"{row.label:<14} "
            f"{_cell(row.f1, ref.f1 if ref else None):<15} "
            f"{_cell(row.hr, ref.hr if ref else None):<15} "
            f"{_cell(row.tar, ref.tar if ref else None):<15}".rstrip()
        )
    return "\n".join(lines) + "\n"


def format_metric_table(rows: list[tuple[str, float, float, float]]) -> str:
    """Simple label/F1/HR/TAR table used for model-comparison listings."""
    lines = [f"{'Model':<22} {'F1':>8} {'HR':>8} {'TAR':>8}"]
    for label, f1, hr, tar in rows:
        cells = [f"{v:8.2f}" if v is not None else f"{'n/a':>8}" for v in (f1, hr, tar)]
        lines.append(f"{label:<22} {cells[0]} {cells[1]} {cells[2]}")
    return "\n".join(lines) + "\n"


def ablation_to_dict(rows: list[AblationRow]) -> dict:
    base = rows[0] if rows else None
    payload = []
    for i, row in enumerate(rows):
        entry = {"setting": list(row.setting), "f1": row.f1, "hr": row.hr, "tar": row.tar}
        if i > 0 and base is not None:
            for name in ("f1", "hr", "tar"):
                v, b = getattr(row, name), getattr(base, name)
                entry[f"{name}_delta"] = None if v is None or b is None else v - b
        payload.append(entry)
    return {"rows": payload}


def write_ablation_report(rows: list[AblationRow], table_path, json_path=None) -> None:
    with open(table_path, "w", encoding="utf-8") as fh:
        fh.write(format_ablation_table(rows))
    if json_path is not None:
        with open(json_path, "w", encoding="utf-8") as fh:
            json.dump(ablation_to_dict(rows), fh, indent=2, sort_keys=True)
            fh.write("\n")
