import numpy as np
import pytest

from evsynth import events, simulate


def fine_step_oracle(timestamps, log_values, threshold, substeps=20000):
    """Brute-force threshold crossings on a densely interpolated log signal.

    Walks the piecewise-linear log trace in tiny steps, emitting an event each
    time the signal moves a full threshold away from the running reference.
    """
    out = []
    reference = log_values[0]
    for i in range(1, len(timestamps)):
        t0, t1 = timestamps[i - 1], timestamps[i]
        l0, l1 = log_values[i - 1], log_values[i]
        for j in range(1, substeps + 1):
            frac = j / substeps
            level = l0 + frac * (l1 - l0)
            while level - reference >= threshold:
                reference += threshold
                out.append((t0 + frac * (t1 - t0), 1))
            while reference - level >= threshold:
                reference -= threshold
                out.append((t0 + frac * (t1 - t0), -1))
    return out


def sequence_from_pixel(values, timestamps):
    frames = np.array(values)[:, None, None]
    return simulate.IntensitySequence(1, 1, np.array(timestamps), frames)


class TestSimulate:
    def test_constant_sequence_no_events(self):
        seq = simulate.IntensitySequence(4, 4, np.array([0, 1000, 2000]),
                                         np.full((3, 4, 4), 0.5))
        stream = simulate.simulate(seq, events.SensorModel())
        assert len(stream) == 0

    def test_step_of_two_and_a_half_thresholds(self):
        sensor = events.SensorModel(contrast_threshold=0.2, log_epsilon=1e-3)
        lo = 0.1
        hi = np.exp(np.log(lo + sensor.log_epsilon) + 2.5 * 0.2) - sensor.log_epsilon
        seq = sequence_from_pixel([lo, hi], [0, 1000])
        stream = simulate.simulate(seq, sensor)
        assert len(stream) == 2
        assert list(stream.p) == [1, 1]

    def test_negative_step_mirrors_positive(self):
        sensor = events.SensorModel(contrast_threshold=0.2)
        lo = 0.1
        hi = np.exp(np.log(lo + sensor.log_epsilon) + 2.5 * 0.2) - sensor.log_epsilon
        stream = simulate.simulate(sequence_from_pixel([hi, lo], [0, 1000]), sensor)
        assert len(stream) == 2
        assert list(stream.p) == [-1, -1]

    def test_ramp_timestamps_match_fine_step_oracle(self):
        # log-ramp spanning 5 thresholds; crossings fall strictly inside the
        # inter-frame intervals (1.05 C per step) so interpolation is exercised
        sensor = events.SensorModel(contrast_threshold=0.2)
        base = np.log(0.05 + sensor.log_epsilon)
        log_targets = base + np.arange(6) * 1.05 * sensor.contrast_threshold
        values = np.exp(log_targets) - sensor.log_epsilon
        assert values.max() <= 1.0
        timestamps = np.arange(6) * 1000
        stream = simulate.simulate(sequence_from_pixel(values, timestamps), sensor)
        oracle = fine_step_oracle(list(timestamps), list(np.log(values + sensor.log_epsilon)),
                                  sensor.contrast_threshold)
        assert len(stream) == 5
        assert len(oracle) == 5
        for got, (t_ref, p_ref) in zip(stream.t, oracle):
            assert abs(int(got) - t_ref) <= 1.0
        assert all(p == 1 for p in stream.p)

    def test_random_sequences_match_oracle_counts(self):
        rng = np.random.default_rng(0)
        sensor = events.SensorModel(contrast_threshold=0.15)
        for _ in range(5):
            values = rng.uniform(0.05, 1.0, 6)
            timestamps = np.cumsum(rng.integers(500, 2000, 6))
            stream = simulate.simulate(sequence_from_pixel(values, timestamps), sensor)
            oracle = fine_step_oracle(list(timestamps),
                                      list(np.log(values + sensor.log_epsilon)),
                                      sensor.contrast_threshold)
            assert len(stream) == len(oracle)
            for got, (t_ref, _) in zip(stream.t, sorted(oracle)):
                assert abs(int(got) - t_ref) <= 1.0

    def test_output_is_valid_and_sorted(self):
        rng = np.random.default_rng(1)
        seq = simulate.IntensitySequence(6, 5, np.array([0, 900, 1700, 3000]),
                                         rng.uniform(0, 1, (4, 5, 6)))
        stream = simulate.simulate(seq, events.SensorModel(contrast_threshold=0.1))
        assert events.validate_stream(stream).ok

    def test_deterministic_given_seed(self):
        rng = np.random.default_rng(2)
        seq = simulate.IntensitySequence(6, 5, np.array([0, 1000, 2000]),
                                         rng.uniform(0, 1, (3, 5, 6)))
        sensor = events.SensorModel(contrast_threshold=0.1, threshold_sigma=0.02)
        a = simulate.simulate(seq, sensor, seed=42)
        b = simulate.simulate(seq, sensor, seed=42)
        for arr in ("x", "y", "t", "p"):
            assert np.array_equal(getattr(a, arr), getattr(b, arr))

    def test_needs_two_frames(self):
        seq = simulate.IntensitySequence(2, 2, np.array([0]), np.zeros((1, 2, 2)))
        with pytest.raises(ValueError):
            simulate.simulate(seq, events.SensorModel())


class TestThresholds:
    def test_sigma_zero_uniform(self):
        state = simulate.sample_thresholds(events.SensorModel(contrast_threshold=0.2),
                                           64, 64, seed=0)
        assert np.all(state.thresholds == 0.2)

    def test_sample_mean_near_nominal(self):
        c, sigma = 0.2, 0.02
        sensor = events.SensorModel(contrast_threshold=c, threshold_sigma=sigma)
        state = simulate.sample_thresholds(sensor, 64, 64, seed=3)
        stderr = sigma / np.sqrt(64 * 64)
        assert abs(state.thresholds.mean() - c) < 3 * stderr

    def test_truncated_at_tenth(self):
        sensor = events.SensorModel(contrast_threshold=0.2, threshold_sigma=5.0)
        state = simulate.sample_thresholds(sensor, 32, 32, seed=4)
        assert np.all(state.thresholds >= 0.02)


class TestInjectNoise:
    def test_zero_rate_identity(self):
        s = events.stream_from_events(4, 4, [(0, 0, 0, 1)])
        out = simulate.inject_noise(s, events.SensorModel(), 0, 1000)
        assert out is s

    def test_poisson_mean_over_seeded_runs(self):
        sensor = events.SensorModel(background_rate=10.0)
        empty = events.EventStream(32, 32)
        expected = 10.0 * 32 * 32  # 1 second
        total = 0
        runs = 100
        for seed in range(runs):
            out = simulate.inject_noise(empty, sensor, 0, 1_000_000, seed)
            total += len(out)
        assert abs(total / runs - expected) / expected < 0.05

    def test_output_validates(self):
        rng = np.random.default_rng(5)
        from .test_events import random_stream
        s = random_stream(rng, n=100)
        sensor = events.SensorModel(background_rate=200.0)
        out = simulate.inject_noise(s, sensor, 0, 5000, seed=6)
        assert events.validate_stream(out).ok
        assert len(out) >= len(s)

    def test_invalid_interval(self):
        with pytest.raises(ValueError):
            simulate.inject_noise(events.EventStream(4, 4),
                                  events.SensorModel(background_rate=1.0), 5, 5)


class TestIntensityIO:
    def test_read_sequence_round_trip(self, tmp_path):
        from evsynth import ppm
        rng = np.random.default_rng(7)
        frames = rng.integers(0, 256, (3, 4, 6)) / 255.0
        lines = []
        for i, frame in enumerate(frames):
            name = f"frame_{i}.ppm"
            ppm.write_ppm(np.repeat(frame[..., None], 3, axis=2), tmp_path / name)
            lines.append(f"{name} {i * 1000}")
        (tmp_path / "timestamps.txt").write_text("\n".join(lines) + "\n")
        seq = simulate.read_intensity_sequence(tmp_path)
        assert (seq.width, seq.height) == (6, 4)
        assert list(seq.timestamps) == [0, 1000, 2000]
        assert np.allclose(seq.frames, frames)
