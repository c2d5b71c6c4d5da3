import numpy as np
import pytest

from zeroflood.errors import ShapeError, ValidationError
from zeroflood.metrics import (
    RP100_PLUS_PWB,
    BinaryMask,
    ConfusionCounts,
    aggregate,
    confusion,
    f1_from,
    hit_rate,
    mask_from_fsm,
    summary_to_dict,
    true_alarm_rate,
)
from zeroflood.raster import CATEGORICAL, GeoTransform, RasterGrid


def mask_from_flags(flags, valid=None):
    return BinaryMask(np.asarray(flags, dtype=bool), valid=valid)


def loop_confusion(pred, ref, valid):
    """Per-pixel loop oracle for confusion counts."""
    tp = fp = fn = tn = 0
    h, w = pred.shape
    for i in range(h):
        for j in range(w):
            if not valid[i, j]:
                continue
            p, r = pred[i, j], ref[i, j]
            if p and r:
                tp += 1
            elif p and not r:
                fp += 1
            elif not p and r:
                fn += 1
            else:
                tn += 1
    return ConfusionCounts(tp, fp, fn, tn)


class TestConfusion:
    def test_identical_masks(self):
        flags = np.zeros((4, 4), bool)
        flags[:2, :2] = True
        c = confusion(mask_from_flags(flags), mask_from_flags(flags))
        assert (c.tp, c.fp, c.fn, c.tn) == (4, 0, 0, 12)

    def test_partial_overlap_fixture(self):
        pred = np.zeros((4, 4), bool)
        ref = np.zeros((4, 4), bool)
        pred[0, 0] = pred[0, 1] = pred[1, 0] = pred[1, 1] = True
        ref[0, 1] = ref[1, 0] = ref[1, 1] = ref[2, 2] = True
        c = confusion(mask_from_flags(pred), mask_from_flags(ref))
        assert (c.tp, c.fp, c.fn, c.tn) == (3, 1, 1, 11)

    def test_all_nodata_gives_zero_counts(self):
        flags = np.ones((3, 3), bool)
        invalid = np.zeros((3, 3), bool)
        c = confusion(mask_from_flags(flags, invalid), mask_from_flags(flags, invalid))
        assert (c.tp, c.fp, c.fn, c.tn) == (0, 0, 0, 0)

    def test_dimension_mismatch_reports_both_shapes(self):
        with pytest.raises(ShapeError, match=r"\(2, 2\).*\(3, 3\)"):
            confusion(mask_from_flags(np.zeros((2, 2), bool)), mask_from_flags(np.zeros((3, 3), bool)))

    def test_valid_masks_intersect(self):
        pred = mask_from_flags(np.ones((2, 2), bool), valid=[[True, False], [True, True]])
        ref = mask_from_flags(np.ones((2, 2), bool), valid=[[True, True], [False, True]])
        c = confusion(pred, ref)
        assert c.total() == 2


class TestPointMetrics:
    def test_hit_rate_fixture(self):
        assert hit_rate(ConfusionCounts(3, 1, 1, 11)) == pytest.approx(75.0)

    def test_hit_rate_perfect(self):
        assert hit_rate(ConfusionCounts(4, 0, 0, 12)) == pytest.approx(100.0)

    def test_hit_rate_undefined_on_empty_reference(self):
        assert hit_rate(ConfusionCounts(0, 2, 0, 14)) is None

    def test_true_alarm_rate_fixture(self):
        assert true_alarm_rate(ConfusionCounts(3, 1, 1, 11)) == pytest.approx(75.0)

    def test_true_alarm_rate_undefined_on_empty_prediction(self):
        assert true_alarm_rate(ConfusionCounts(0, 0, 3, 13)) is None

    def test_f1_of_equal_inputs(self):
        assert f1_from(75.0, 75.0) == pytest.approx(75.0)

    def test_f1_hand_value(self):
        assert f1_from(100.0, 50.0) == pytest.approx(200.0 / 3.0)

    def test_f1_perfect(self):
        assert f1_from(100.0, 100.0) == pytest.approx(100.0)

    def test_f1_zero_convention(self):
        assert f1_from(0.0, 0.0) == 0.0

    def test_f1_propagates_undefined(self):
        assert f1_from(None, 50.0) is None
        assert f1_from(50.0, None) is None

    def test_f1_between_min_and_max(self):
        rng = np.random.default_rng(2)
        for _ in range(200):
            hr = float(rng.uniform(0.01, 100))
            tar = float(rng.uniform(0.01, 100))
            f1 = f1_from(hr, tar)
            assert min(hr, tar) - 1e-9 <= f1 <= max(hr, tar) + 1e-9
            if hr == tar:
                assert f1 == pytest.approx(hr)

    def test_hit_rate_monotone_in_fn_to_tp(self):
        base = ConfusionCounts(3, 2, 5, 6)
        better = ConfusionCounts(4, 2, 4, 6)
        assert hit_rate(better) > hit_rate(base)

    def test_tar_monotone_in_fp_to_tn(self):
        base = ConfusionCounts(3, 5, 2, 6)
        better = ConfusionCounts(3, 4, 2, 7)
        assert true_alarm_rate(better) > true_alarm_rate(base)

    def test_swapping_pred_and_ref_swaps_hr_tar(self):
        rng = np.random.default_rng(8)
        for _ in range(20):
            pred = rng.random((8, 8)) > 0.6
            ref = rng.random((8, 8)) > 0.4
            a = confusion(mask_from_flags(pred), mask_from_flags(ref))
            b = confusion(mask_from_flags(ref), mask_from_flags(pred))
            assert hit_rate(a) == true_alarm_rate(b)
            assert true_alarm_rate(a) == hit_rate(b)
            fa, fb = f1_from(hit_rate(a), true_alarm_rate(a)), f1_from(hit_rate(b), true_alarm_rate(b))
            if fa is not None and fb is not None:
                assert fa == pytest.approx(fb)


class TestAggregate:
    def test_identical_samples_micro_equals_macro(self):
        c = ConfusionCounts(3, 1, 1, 11)
        summary = aggregate([("a", c), ("b", c)])
        assert summary.micro.hr == pytest.approx(summary.macro.hr) == pytest.approx(75.0)
        assert summary.micro.f1 == pytest.approx(summary.macro.f1)

    def test_hand_computed_micro_and_macro(self):
        summary = aggregate([("a", ConfusionCounts(3, 1, 1, 11)), ("b", ConfusionCounts(1, 3, 3, 9))])
        assert summary.micro.hr == pytest.approx(50.0)
        assert summary.micro.tar == pytest.approx(50.0)
        assert summary.macro.hr == pytest.approx(50.0)
        assert summary.macro.tar == pytest.approx(50.0)

    def test_undefined_sample_excluded_from_macro(self):
        summary = aggregate(
            [("a", ConfusionCounts(3, 1, 1, 11)), ("empty", ConfusionCounts(0, 0, 0, 16))]
        )
        assert summary.excluded["hr"] == 1
        assert summary.excluded["tar"] == 1
        assert summary.macro.hr == pytest.approx(75.0)

    def test_empty_sample_list_rejected(self):
        with pytest.raises(ValidationError):
            aggregate([])

    def test_report_dict_shape(self):
        summary = aggregate([("a", ConfusionCounts(3, 1, 1, 11))])
        payload = summary_to_dict(summary)
        assert payload["per_sample"][0]["key"] == "a"
        assert set(payload["per_sample"][0]) == {"key", "hr", "tar", "f1", "tp", "fp", "fn", "tn"}
        assert set(payload["excluded"]) == {"hr", "tar", "f1"}

    def test_oracle_equivalence_on_random_masks(self):
        rng = np.random.default_rng(31)
        for _ in range(10):
            pred = rng.random((16, 16)) > 0.5
            ref = rng.random((16, 16)) > 0.5
            valid = rng.random((16, 16)) > 0.1
            c = confusion(mask_from_flags(pred, valid), mask_from_flags(ref, valid))
            assert c == loop_confusion(pred, ref, valid)


class TestMaskFromFsm:
    def fsm(self):
        classes = np.array([[0, 1], [2, 255]], np.uint8)
        return RasterGrid(
            width=2, height=2, transform=GeoTransform(0, 20, 10, 10),
            nodata=255, kind=CATEGORICAL, data=classes,
        )

    def test_rp100_only(self):
        mask = mask_from_fsm(self.fsm())
        assert mask.pixels.tolist() == [[False, True], [False, False]]
        assert mask.valid.tolist() == [[True, True], [True, False]]

    def test_rp100_plus_pwb(self):
        mask = mask_from_fsm(self.fsm(), policy=RP100_PLUS_PWB)
        assert mask.pixels.tolist() == [[False, True], [True, False]]

    def test_unknown_policy(self):
        with pytest.raises(ValidationError):
            mask_from_fsm(self.fsm(), policy="everything")
