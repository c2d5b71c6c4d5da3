import json

import numpy as np
import pytest

from conftest import build_world
from zeroflood import sampling
from zeroflood.cli import load_fsm_raster, main
from zeroflood.config import load_config
from zeroflood.metrics import aggregate, confusion, mask_from_fsm, summary_to_dict
from zeroflood.model.checkpoint import load_checkpoint, save_checkpoint
from zeroflood.model.estimator import FloodSegmenter
from zeroflood.raster import (
    CATEGORICAL,
    GeoTransform,
    RasterGrid,
    read_binary_raster,
    read_window,
    write_binary_raster,
)
from zeroflood.render import read_pgm
from zeroflood.synthetic import make_synthetic_task


def run(*argv):
    return main([str(a) for a in argv])


def snapshot(directory):
    return {p.name: p.read_bytes() for p in sorted(directory.glob("*")) if p.is_file()}


class TestSelect:
    def test_selection_matches_library_oracle(self, world):
        assert run("select", "--config", world) == 0
        out = world.parent / "out"
        payload = json.loads((out / "selection.json").read_text())
        config = load_config(world)
        fsm = load_fsm_raster(config.paths.fsm_raster)
        metas = sampling.read_metadata_csv(config.paths.metadata_csv, config.sampling.tile_side)
        stats = sampling.zone_statistics(sampling.create_vector_grid(metas), fsm)
        expected = sampling.run_selection(stats, 0.1, 1.0)
        assert payload["selected"] == expected.selected
        report = json.loads((out / "stage_report.json").read_text())
        assert report == expected.report.to_dict()
        assert report["input"] == 48

    def test_rerun_is_byte_identical(self, world):
        run("select", "--config", world)
        first = snapshot(world.parent / "out")
        run("select", "--config", world)
        assert snapshot(world.parent / "out") == first

    def test_missing_fsm_exits_1(self, world):
        (world.parent / "fsm.zfr").unlink()
        assert run("select", "--config", world) == 1

    def test_unreadable_fsm_exits_1(self, world):
        (world.parent / "fsm.zfr").write_bytes(b"garbage")
        assert run("select", "--config", world) == 1

    def test_all_background_world_exits_2_with_empty_selection(self, tmp_path):
        config = build_world(tmp_path, all_background=True)
        assert run("select", "--config", config) == 2
        payload = json.loads((tmp_path / "out" / "selection.json").read_text())
        assert payload["selected"] == []


class TestSplit:
    def test_paper_counts_with_explicit_override(self, world):
        out = world.parent / "out"
        out.mkdir(exist_ok=True)
        keys = [f"k{i:03d}" for i in range(314)]
        selection = {
            "selected": keys,
            "stats": [
                {"key": k, "rp100": i + 1, "pwb": 1, "ratio": None, "disjoint": False}
                for i, k in enumerate(keys)
            ],
        }
        (out / "selection.json").write_text(json.dumps(selection))
        assert run("split", "--config", world, "--counts", "186,62,66") == 0
        manifest = sampling.read_manifest(out / "manifest.json")
        assert manifest.counts == (186, 62, 66)
        assert len(manifest.keys_for("train")) == 186
        assert len(manifest.keys_for("val")) == 62
        assert len(manifest.keys_for("test")) == 66

    def test_default_counts_follow_floor_rule(self, world):
        run("select", "--config", world)
        assert run("split", "--config", world) == 0
        manifest = sampling.read_manifest(world.parent / "out" / "manifest.json")
        n = len(manifest.entries)
        assert manifest.counts == sampling.split_counts(n)

    def test_same_seed_twice_identical_bytes(self, world):
        run("select", "--config", world)
        run("split", "--config", world, "--seed", "33")
        first = (world.parent / "out" / "manifest.json").read_bytes()
        run("split", "--config", world, "--seed", "33")
        assert (world.parent / "out" / "manifest.json").read_bytes() == first

    def test_counts_not_summing_exit_1(self, world):
        run("select", "--config", world)
        assert run("split", "--config", world, "--counts", "1,1,1") == 1

    def test_missing_selection_file_exits_1(self, world):
        assert run("split", "--config", world) == 1


class TestTrain:
    def test_train_writes_checkpoint_and_log(self, world):
        run("select", "--config", world)
        run("split", "--config", world)
        assert run("train", "--config", world) == 0
        out = world.parent / "out"
        assert (out / "checkpoint.zfm").exists()
        lines = (out / "training_log.csv").read_text().splitlines()
        assert lines[0] == "epoch,train_loss,val_loss"
        assert len(lines) == 7  # header + max_epochs(6)

    def test_rerun_same_seed_byte_identical(self, world):
        run("select", "--config", world)
        run("split", "--config", world)
        run("train", "--config", world)
        out = world.parent / "out"
        first = {n: out.joinpath(n).read_bytes() for n in ("checkpoint.zfm", "training_log.csv")}
        run("train", "--config", world)
        second = {n: out.joinpath(n).read_bytes() for n in ("checkpoint.zfm", "training_log.csv")}
        assert second == first

    def test_tim_override_changes_checkpoint(self, world):
        run("select", "--config", world)
        run("split", "--config", world)
        run("train", "--config", world)
        out = world.parent / "out"
        plain = (out / "checkpoint.zfm").read_bytes()
        run("train", "--config", world, "--tim", "s2,dem")
        assert (out / "checkpoint.zfm").read_bytes() != plain
        assert load_checkpoint(out / "checkpoint.zfm").tim_modalities == ("S2", "DEM")

    def test_output_dir_collision_exits_1(self, world):
        run("select", "--config", world)
        run("split", "--config", world)
        manifest = (world.parent / "out" / "manifest.json").read_bytes()
        import shutil

        shutil.rmtree(world.parent / "out")
        (world.parent / "out").write_bytes(manifest)  # a file where the dir should be
        assert run("train", "--config", world, "--manifest", world.parent / "out") == 1

    def test_empty_manifest_exits_2(self, world):
        out = world.parent / "out"
        out.mkdir(exist_ok=True)
        manifest = sampling.split_dataset([], seed=0)
        sampling.write_manifest(manifest, out / "manifest.json")
        assert run("train", "--config", world) == 2


def all_flood_world(tmp_path):
    """World whose reference is flood everywhere, plus a doctored manifest."""
    config = build_world(tmp_path)
    fsm = read_binary_raster(tmp_path / "fsm.zfr")
    write_binary_raster(
        RasterGrid(
            width=fsm.width, height=fsm.height, transform=fsm.transform,
            crs_id=fsm.crs_id, nodata=255, kind=CATEGORICAL,
            data=np.ones((fsm.height, fsm.width), np.uint8),
        ),
        tmp_path / "fsm.zfr",
    )
    out = tmp_path / "out"
    out.mkdir(exist_ok=True)
    keys = [f"s{i:03d}" for i in range(4)]
    stats = [sampling.ZonalStats(key=k, rp100=1, pwb=1) for k in keys]
    manifest = sampling.split_dataset(stats, seed=0, explicit_counts=(0, 0, 4))
    sampling.write_manifest(manifest, out / "manifest.json")
    return config


def biased_checkpoint(tmp_path, path, bias):
    task = make_synthetic_task(n_train=4, n_val=2, n_test=2, size=32, seed=0)
    est = FloodSegmenter(max_epochs=1, seed=5)
    est.fit(task.X_train, task.y_train, task.X_val, task.y_val)
    head = est.network_.decoder.head
    head.weight.value[...] = 0.0
    head.bias.value[...] = bias
    save_checkpoint(est, path)


class TestEval:
    def test_perfect_predictions_score_100(self, tmp_path):
        config = all_flood_world(tmp_path)
        checkpoint = tmp_path / "all_flood.zfm"
        biased_checkpoint(tmp_path, checkpoint, bias=10.0)
        assert run("eval", "--config", config, "--checkpoint", checkpoint) == 0
        metrics = json.loads((tmp_path / "out" / "metrics.json").read_text())
        assert metrics["micro"]["hr"] == 100.0
        assert metrics["micro"]["tar"] == 100.0
        assert metrics["micro"]["f1"] == 100.0
        assert all(row["f1"] == 100.0 for row in metrics["per_sample"])

    def test_inverted_predictions_have_zero_hit_rate(self, tmp_path):
        config = all_flood_world(tmp_path)
        checkpoint = tmp_path / "all_dry.zfm"
        biased_checkpoint(tmp_path, checkpoint, bias=-10.0)
        assert run("eval", "--config", config, "--checkpoint", checkpoint) == 0
        metrics = json.loads((tmp_path / "out" / "metrics.json").read_text())
        assert metrics["micro"]["hr"] == 0.0
        assert metrics["micro"]["tar"] is None

    def test_metrics_match_library_recomputation(self, world):
        run("select", "--config", world)
        run("split", "--config", world)
        run("train", "--config", world)
        assert run("eval", "--config", world) == 0
        out = world.parent / "out"
        written = json.loads((out / "metrics.json").read_text())

        config = load_config(world)
        est = load_checkpoint(out / "checkpoint.zfm")
        fsm = load_fsm_raster(config.paths.fsm_raster)
        metas = sampling.read_metadata_csv(config.paths.metadata_csv, config.sampling.tile_side)
        cells = {c.key: c for c in sampling.create_vector_grid(metas)}
        manifest = sampling.read_manifest(out / "manifest.json")
        samples = []
        for key in manifest.keys_for("test"):
            window = read_window(fsm, cells[key].bbox)
            ref = mask_from_fsm(window, config.fsm_label_policy)
            band = read_binary_raster(config.paths.eo_raster_dir / f"{key}.b0.zfr")
            pred = est.predict_tiled(
                band.data[None], tile=config.inference.tile,
                overlap=config.inference.overlap, threshold=config.inference.threshold,
            )
            samples.append((key, confusion(pred, ref)))
        expected = json.loads(json.dumps(summary_to_dict(aggregate(samples))))
        assert written == expected

    def test_save_masks_and_render_round_trip(self, world, tmp_path):
        run("select", "--config", world)
        run("split", "--config", world)
        run("train", "--config", world)
        assert run("eval", "--config", world, "--save-masks") == 0
        mask_dir = world.parent / "out" / "masks"
        pred_files = sorted(mask_dir.glob("*.pred.zfr"))
        assert pred_files
        pgm = tmp_path / "mask.pgm"
        assert run("render", "--input", pred_files[0], "--out", pgm) == 0
        raster = read_binary_raster(pred_files[0])
        payload = read_pgm(pgm)
        assert np.array_equal(payload == 255, (raster.data == 1))

        ref_file = pred_files[0].with_name(pred_files[0].name.replace(".pred.", ".ref."))
        combo = tmp_path / "combo.pgm"
        assert run("render", "--input", pred_files[0], "--ref", ref_file, "--out", combo) == 0
        assert read_pgm(combo).shape[1] == 2 * raster.width + 1

    def test_missing_checkpoint_exits_1(self, world):
        run("select", "--config", world)
        run("split", "--config", world)
        assert run("eval", "--config", world) == 1


class TestRender:
    def test_exact_bytes_for_tiny_mask(self, tmp_path):
        raster = RasterGrid(
            width=2, height=2, transform=GeoTransform(0, 20, 10, 10),
            nodata=255, kind=CATEGORICAL, data=np.array([[1, 0], [0, 1]], np.uint8),
        )
        src = tmp_path / "m.zfr"
        write_binary_raster(raster, src)
        out = tmp_path / "m.pgm"
        assert run("render", "--input", src, "--out", out) == 0
        assert out.read_bytes() == b"P5\n2 2\n255\n" + bytes([255, 0, 0, 255])

    def test_missing_input_exits_1(self, tmp_path):
        assert run("render", "--input", tmp_path / "nope.zfr", "--out", tmp_path / "x.pgm") == 1

    def test_unwritable_output_exits_1(self, tmp_path):
        raster = RasterGrid(
            width=1, height=1, transform=GeoTransform(0, 10, 10, 10),
            nodata=255, kind=CATEGORICAL, data=np.zeros((1, 1), np.uint8),
        )
        src = tmp_path / "m.zfr"
        write_binary_raster(raster, src)
        out = tmp_path / "no_such_dir" / "m.pgm"
        assert run("render", "--input", src, "--out", out) == 1


class TestAblationCommand:
    def test_emits_table_and_json(self, tmp_path):
        out = tmp_path / "ablation.txt"
        assert run("ablation", "--out", out, "--epochs", "2", "--tiles", "4", "--size", "16") == 0
        lines = out.read_text().splitlines()
        assert lines[0].startswith("TiM Setting")
        assert lines[1].startswith("-")
        assert len(lines) == 9  # header + 8 settings
        payload = json.loads(out.with_suffix(".json").read_text())
        assert len(payload["rows"]) == 8


class TestUsageErrors:
    def test_missing_required_flag_exits_1(self):
        with pytest.raises(SystemExit) as exc:
            run("split")
        assert exc.value.code == 1

    def test_unknown_command_exits_1(self):
        with pytest.raises(SystemExit) as exc:
            run("frobnicate")
        assert exc.value.code == 1


class TestEndToEndConvergence:
    def test_pipeline_trains_to_high_f1(self, tmp_path):
        """Full select/split/train/eval run on a 64px world reaches F1 >= 95."""
        config = build_world(tmp_path, tile_px=64, max_epochs=120)
        assert run("select", "--config", config) == 0
        assert run("split", "--config", config) == 0
        assert run("train", "--config", config) == 0
        assert run("eval", "--config", config) == 0
        metrics = json.loads((tmp_path / "out" / "metrics.json").read_text())
        assert metrics["micro"]["f1"] >= 95.0
