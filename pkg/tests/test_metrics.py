import numpy as np
import pytest

from evsynth import metrics


def exact_moment_features(mu, sigma):
    """Two 1-D samples with exact mean mu and unit-ddof variance sigma^2."""
    return metrics.FeatureSet(np.array([[mu - sigma / np.sqrt(2)],
                                        [mu + sigma / np.sqrt(2)]]))


class TestFeatures:
    def test_identity_projection_returns_pooled_pixels(self):
        rng = np.random.default_rng(0)
        frame = rng.random((16, 16, 3))
        fs = metrics.extract_features([frame], projection=np.eye(256))
        assert np.allclose(fs.features[0], frame.mean(axis=2).ravel())

    def test_identical_frames_identical_rows(self):
        frame = np.random.default_rng(1).random((16, 16, 3))
        fs = metrics.extract_features([frame, frame], d=32, seed=0)
        assert np.array_equal(fs.features[0], fs.features[1])

    def test_larger_frames_are_downsampled(self):
        frame = np.random.default_rng(2).random((32, 48, 3))
        fs = metrics.extract_features([frame], d=16, seed=0)
        assert fs.features.shape == (1, 16)

    def test_projection_preserves_expected_norm(self):
        # Johnson-Lindenstrauss moment check: with the 1/sqrt(256) scaling the
        # expected squared norm is preserved at d = 256
        rng = np.random.default_rng(3)
        frames = [rng.standard_normal((16, 16)) for _ in range(1000)]
        fs = metrics.extract_features(frames, d=256, seed=0)
        input_sq = np.mean([np.sum(f.ravel() ** 2) for f in frames])
        output_sq = np.mean(np.sum(fs.features ** 2, axis=1))
        assert abs(output_sq - input_sq) / input_sq < 0.05

    def test_empty_list_rejected(self):
        with pytest.raises(ValueError):
            metrics.extract_features([])


class TestFid:
    def test_self_distance_zero(self):
        rng = np.random.default_rng(4)
        a = metrics.FeatureSet(rng.standard_normal((50, 8)))
        assert metrics.fid(a, a) <= 1e-8

    def test_mean_shift_closed_form(self):
        # 1-D exact moments mu 0 vs 1, sigma 1 vs 1: (1)^2 + 0 = 1
        a = exact_moment_features(0.0, 1.0)
        b = exact_moment_features(1.0, 1.0)
        assert metrics.fid(a, b) == pytest.approx(1.0, abs=1e-9)

    def test_variance_gap_closed_form(self):
        # 1-D exact moments N(0,4) vs N(0,1): (2 - 1)^2 = 1
        a = exact_moment_features(0.0, 2.0)
        b = exact_moment_features(0.0, 1.0)
        assert metrics.fid(a, b) == pytest.approx(1.0, abs=1e-9)

    def test_general_closed_form_1d(self):
        for mu_a, s_a, mu_b, s_b in [(0.5, 1.5, -1.0, 0.7), (2.0, 0.1, 2.0, 3.0)]:
            a = exact_moment_features(mu_a, s_a)
            b = exact_moment_features(mu_b, s_b)
            expected = (mu_a - mu_b) ** 2 + (s_a - s_b) ** 2
            assert metrics.fid(a, b) == pytest.approx(expected, abs=1e-9)

    def test_symmetry(self):
        rng = np.random.default_rng(5)
        a = metrics.FeatureSet(rng.standard_normal((40, 6)))
        b = metrics.FeatureSet(rng.standard_normal((40, 6)) + 0.3)
        assert metrics.fid(a, b) == pytest.approx(metrics.fid(b, a), abs=1e-6)

    def test_orthogonal_rotation_invariance(self):
        rng = np.random.default_rng(6)
        a = rng.standard_normal((60, 5))
        b = rng.standard_normal((60, 5)) * 1.5 + 0.2
        q, _ = np.linalg.qr(rng.standard_normal((5, 5)))
        plain = metrics.fid(metrics.FeatureSet(a), metrics.FeatureSet(b))
        rotated = metrics.fid(metrics.FeatureSet(a @ q), metrics.FeatureSet(b @ q))
        assert plain == pytest.approx(rotated, abs=1e-6)

    def test_non_negative(self):
        rng = np.random.default_rng(7)
        for _ in range(5):
            a = metrics.FeatureSet(rng.standard_normal((20, 4)))
            b = metrics.FeatureSet(rng.standard_normal((20, 4)))
            assert metrics.fid(a, b) >= 0.0

    def test_dimension_mismatch(self):
        a = metrics.FeatureSet(np.zeros((5, 3)))
        b = metrics.FeatureSet(np.zeros((5, 4)))
        with pytest.raises(ValueError):
            metrics.fid(a, b)


class TestMpjpe:
    def test_identical_zero(self):
        j = np.random.default_rng(8).random((4, 5, 2))
        assert metrics.mpjpe(metrics.PoseSet(j), metrics.PoseSet(j)) == 0.0

    def test_pythagorean_offset(self):
        truth = np.zeros((3, 4, 2))
        pred = truth + np.array([3.0, 4.0])
        assert metrics.mpjpe(metrics.PoseSet(pred), metrics.PoseSet(truth)) == 5.0

    def test_uniform_z_offset_3d(self):
        truth = np.random.default_rng(9).random((2, 6, 3))
        pred = truth + np.array([0.0, 0.0, 10.0])
        assert metrics.mpjpe(metrics.PoseSet(pred), metrics.PoseSet(truth)) == pytest.approx(10.0)

    def test_matches_double_loop_oracle(self):
        rng = np.random.default_rng(10)
        pred = rng.random((5, 7, 3)) * 100
        truth = rng.random((5, 7, 3)) * 100
        visible = rng.random((5, 7)) > 0.3
        total, count = 0.0, 0
        for f in range(5):
            for j in range(7):
                if visible[f, j]:
                    total += float(np.linalg.norm(pred[f, j] - truth[f, j]))
                    count += 1
        got = metrics.mpjpe(metrics.PoseSet(pred, visible), metrics.PoseSet(truth, visible))
        assert got == pytest.approx(total / count, abs=1e-9)

    def test_no_visible_joints_rejected(self):
        vis = np.zeros((1, 2), bool)
        p = metrics.PoseSet(np.zeros((1, 2, 2)), vis)
        with pytest.raises(ValueError):
            metrics.mpjpe(p, p)


class TestAp:
    def test_perfect(self):
        j = np.random.default_rng(11).random((2, 4, 2))
        assert metrics.ap_at(metrics.PoseSet(j), metrics.PoseSet(j), 0.25, 64) == 100.0

    def test_all_beyond_threshold(self):
        truth = np.zeros((1, 4, 2))
        pred = truth + np.array([100.0, 0.0])
        assert metrics.ap_at(metrics.PoseSet(pred), metrics.PoseSet(truth), 0.25, 64) == 0.0

    def test_half_within_threshold(self):
        # image height 16, fraction 0.25 -> threshold 4; errors {0, 0, 10, 10}
        truth = np.zeros((1, 4, 2))
        pred = truth.copy()
        pred[0, 2:, 0] = 10.0
        assert metrics.ap_at(metrics.PoseSet(pred), metrics.PoseSet(truth), 0.25, 16) == 50.0

    def test_invalid_fraction(self):
        p = metrics.PoseSet(np.zeros((1, 1, 2)))
        with pytest.raises(ValueError):
            metrics.ap_at(p, p, 0.0, 64)


class TestPve:
    def test_identical_zero(self):
        v = np.random.default_rng(12).random((10, 3))
        assert metrics.pve(v, v) == 0.0

    def test_uniform_offset(self):
        v = np.random.default_rng(13).random((10, 3))
        assert metrics.pve(v + np.array([0.0, 0.0, 10.0]), v) == pytest.approx(10.0)

    def test_shape_mismatch(self):
        with pytest.raises(ValueError):
            metrics.pve(np.zeros((3, 3)), np.zeros((4, 3)))


class TestPck:
    def fixture_30mm(self):
        truth = np.zeros((1, 4, 3))
        pred = truth + np.array([30.0, 0.0, 0.0])
        return metrics.PoseSet(pred), metrics.PoseSet(truth)

    def test_perfect_everywhere(self):
        j = np.random.default_rng(14).random((2, 3, 3))
        p = metrics.PoseSet(j)
        for mm in (1.0, 25.0, 50.0):
            assert metrics.pck_at(p, p, mm) == 100.0
        assert metrics.auc_pck(p, p) == 100.0

    def test_step_function_at_30mm(self):
        pred, truth = self.fixture_30mm()
        assert metrics.pck_at(pred, truth, 25.0) == 0.0
        assert metrics.pck_at(pred, truth, 50.0) == 100.0

    def test_auc_hand_summed(self):
        # thresholds 1..100; the 30 mm errors pass 70 of them (31..100)
        pred, truth = self.fixture_30mm()
        assert metrics.auc_pck(pred, truth, mm_max=100.0, step=1.0) == pytest.approx(70.0)

    def test_monotone_in_threshold(self):
        rng = np.random.default_rng(15)
        pred = metrics.PoseSet(rng.random((3, 5, 3)) * 60)
        truth = metrics.PoseSet(rng.random((3, 5, 3)) * 60)
        values = [metrics.pck_at(pred, truth, mm) for mm in np.arange(1.0, 101.0)]
        assert all(b >= a for a, b in zip(values, values[1:]))
        auc = metrics.auc_pck(pred, truth)
        assert min(values) <= auc <= max(values)

    def test_invalid_thresholds(self):
        p = metrics.PoseSet(np.zeros((1, 1, 3)))
        with pytest.raises(ValueError):
            metrics.pck_at(p, p, 0.0)
        with pytest.raises(ValueError):
            metrics.auc_pck(p, p, mm_max=1.0, step=2.0)


class TestClassification:
    def test_all_correct(self):
        assert metrics.classification_scores(["a", "b"], ["a", "b"]) == (100.0, 100.0)

    def test_hand_counted_binary_fixture(self):
        # preds {A,A,B,B} vs truth {A,B,B,B}: acc 3/4, precision (50+100)/2
        acc, prec = metrics.classification_scores(list("AABB"), list("ABBB"))
        assert acc == 75.0
        assert prec == 75.0

    def test_order_permutation_invariant(self):
        rng = np.random.default_rng(16)
        pred = list(rng.choice(["x", "y", "z"], 30))
        true = list(rng.choice(["x", "y", "z"], 30))
        perm = rng.permutation(30)
        a = metrics.classification_scores(pred, true)
        b = metrics.classification_scores([pred[i] for i in perm], [true[i] for i in perm])
        assert a == b

    def test_zero_prediction_class_contributes_zero(self):
        # class B never predicted: precision (A: 1/2, B: 0) -> 25
        acc, prec = metrics.classification_scores(["A", "A"], ["A", "B"])
        assert acc == 50.0
        assert prec == 25.0

    def test_length_mismatch(self):
        with pytest.raises(ValueError):
            metrics.classification_scores(["a"], ["a", "b"])


class TestOutput:
    def test_csv_round_trip(self, tmp_path):
        path = tmp_path / "metrics.csv"
        metrics.write_metrics_csv({"fid": 1.25, "acc": 90.0}, path)
        lines = path.read_text().splitlines()
        assert lines[0] == "metric,value"
        assert lines[1] == "fid,1.25"

    def test_table_formatting(self):
        table = metrics.format_metrics_table({"fid": 1.25, "accuracy": 90.0})
        assert "fid" in table and "1.25" in table and "90" in table
