"""Shared fixtures: a small synthetic pipeline world on disk.

build_world writes a coherent set of pipeline inputs into a directory: one
categorical flood raster whose classes are carved out of a smooth random
field, per-sample EO band tiles holding windows of that same field, the
sample metadata CSV, and a config file wiring them together. Labels are a
single threshold of EO channel 0, so trained models can approach perfect
scores.
"""

from pathlib import Path

import numpy as np
import pytest

from zeroflood.raster import CATEGORICAL, CONTINUOUS, GeoTransform, RasterGrid, write_binary_raster


def _blur3(field):
    padded = np.pad(field, 1, mode="edge")
    out = np.zeros_like(field)
    h, w = field.shape
    for di in range(3):
        for dj in range(3):
            out += padded[di : di + h, dj : dj + w]
    return out / 9.0


def build_world(
    root: Path,
    cols: int = 8,
    rows: int = 6,
    tile_px: int = 32,
    cellsize: float = 10.0,
    max_epochs: int = 6,
    seed: int = 7,
    all_background: bool = False,
    config_extra: str = "",
) -> Path:
    """Write pipeline inputs under root and return the config path."""
    rng = np.random.default_rng(seed)
    height, width = rows * tile_px, cols * tile_px
    block = max(8, tile_px // 4)
    field = np.kron(rng.normal(size=(height // block, width // block)), np.ones((block, block)))
    field = _blur3(_blur3(field))

    classes = np.zeros((height, width), np.uint8)
    if not all_background:
        t_low = np.quantile(field, 0.07)
        classes[field > 0] = 1
        classes[field < t_low] = 2
        classes[:2, :2] = 255  # a touch of nodata to exercise valid masks

    transform = GeoTransform(0.0, height * cellsize, cellsize, cellsize)
    fsm = RasterGrid(
        width=width,
        height=height,
        transform=transform,
        crs_id="EPSG:32633",
        nodata=255,
        kind=CATEGORICAL,
        data=classes,
    )
    write_binary_raster(fsm, root / "fsm.zfr")

    eo_dir = root / "eo"
    eo_dir.mkdir(exist_ok=True)
    lines = ["key,center_x,center_y"]
    for r in range(rows):
        for c in range(cols):
            key = f"s{r * cols + c:03d}"
            cx = (c * tile_px + tile_px / 2) * cellsize
            cy = height * cellsize - (r * tile_px + tile_px / 2) * cellsize
            lines.append(f"{key},{cx},{cy}")
            tile = field[r * tile_px : (r + 1) * tile_px, c * tile_px : (c + 1) * tile_px]
            band = RasterGrid(
                width=tile_px,
                height=tile_px,
                transform=GeoTransform(
                    c * tile_px * cellsize,
                    height * cellsize - r * tile_px * cellsize,
                    cellsize,
                    cellsize,
                ),
                crs_id="EPSG:32633",
                nodata=-9999.0,
                kind=CONTINUOUS,
                data=tile.astype(np.float32),
            )
            write_binary_raster(band, eo_dir / f"{key}.b0.zfr")
    (root / "samples.csv").write_text("\n".join(lines) + "\n", encoding="utf-8")

    config = "\n".join(
        [
            "paths.fsm_raster = fsm.zfr",
            "paths.metadata_csv = samples.csv",
            "paths.eo_raster_dir = eo",
            "paths.output_dir = out",
            f"sampling.tile_side = {tile_px * cellsize}",
            "split.seed = 11",
            f"model.max_epochs = {max_epochs}",
            "model.patience = 200",
            "model.seed = 5",
            f"inference.tile = {tile_px}",
            config_extra,
        ]
    )
    config_path = root / "pipeline.cfg"
    config_path.write_text(config + "\n", encoding="utf-8")
    return config_path


@pytest.fixture
def world(tmp_path):
    """Fast fixture world: 32px tiles, 6 training epochs."""
    return build_world(tmp_path)
