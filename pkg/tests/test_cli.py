import glob
import os

import numpy as np
import pytest

from evsynth import cli, events, ppm
from evsynth.cli import main
from .test_events import random_stream

BASE_CONFIG = """
seed = 7
sensor.contrast_threshold = 0.2
encoder.count_cap = 3
schedule.T = 6
schedule.beta_start = 0.05
schedule.beta_end = 0.3
denoiser.hidden1 = 4
denoiser.hidden2 = 4
denoiser.cond_dim = 8
denoiser.t_dim = 3
train.steps = 15
train.batch_size = 2
train.learning_rate = 1e-3
"""


def write_sequence(directory, name, frames, timestamps):
    seq_dir = directory / name
    seq_dir.mkdir(parents=True)
    lines = []
    for i, frame in enumerate(frames):
        fname = f"frame_{i}.ppm"
        ppm.write_ppm(np.repeat(frame[..., None], 3, axis=2), seq_dir / fname)
        lines.append(f"{fname} {timestamps[i]}")
    (seq_dir / "timestamps.txt").write_text("\n".join(lines) + "\n")
    return seq_dir


def moving_bar_frames(h=8, w=8, n=3):
    frames = []
    for i in range(n):
        img = np.full((h, w), 0.1)
        img[(2 + i) % h] = 0.9
        frames.append(img)
    return frames


def run_cli(args):
    return main([str(a) for a in args])


class TestSimulateEncode:
    def test_simulate_writes_streams(self, tmp_path, capsys):
        seqs = tmp_path / "seqs"
        write_sequence(seqs, "vertical__0", moving_bar_frames(), [0, 1000, 2000])
        cfg = tmp_path / "cfg.txt"
        cfg.write_text(BASE_CONFIG + f"simulate.input = {seqs}\n")
        assert run_cli(["simulate", "--config", cfg, "--out", tmp_path / "runs"]) == 0
        streams = glob.glob(str(tmp_path / "runs" / "simulate-*" / "*.evst"))
        assert len(streams) == 1
        assert len(events.read_stream(streams[0])) > 0
        assert "simulate: vertical__0" in capsys.readouterr().out

    def test_encode_fixed_count_fixture(self, tmp_path):
        # a 15,000-event stream encoded at 7,500 events per frame -> 2 frames
        streams = tmp_path / "streams"
        streams.mkdir()
        s = random_stream(np.random.default_rng(0), width=8, height=8, n=15000)
        events.write_stream(s, streams / "cls__big.evst")
        cfg = tmp_path / "cfg.txt"
        cfg.write_text(BASE_CONFIG + f"encode.input = {streams}\n"
                       "encode.mode = fixed_count\nencode.param = 7500\n")
        assert run_cli(["encode", "--config", cfg, "--out", tmp_path / "runs"]) == 0
        manifest = glob.glob(str(tmp_path / "runs" / "encode-*" / "manifest.txt"))[0]
        body = [line for line in open(manifest).read().splitlines()[1:] if line]
        assert len(body) == 2
        assert all("class=cls" in line for line in body)

    def test_encode_preview_writes_figure(self, tmp_path):
        streams = tmp_path / "streams"
        streams.mkdir()
        events.write_stream(random_stream(np.random.default_rng(1), 8, 8, 60),
                            streams / "a__x.evst")
        cfg = tmp_path / "cfg.txt"
        cfg.write_text(BASE_CONFIG + f"encode.input = {streams}\n")
        assert run_cli(["encode", "--config", cfg, "--out", tmp_path / "runs",
                        "--preview"]) == 0
        assert glob.glob(str(tmp_path / "runs" / "encode-*" / "preview.png"))

    def test_missing_input_key_fails(self, tmp_path, capsys):
        cfg = tmp_path / "cfg.txt"
        cfg.write_text(BASE_CONFIG)
        assert run_cli(["encode", "--config", cfg, "--out", tmp_path / "runs"]) == 1
        assert "encode" in capsys.readouterr().err

    def test_unparseable_config_fails(self, tmp_path, capsys):
        cfg = tmp_path / "cfg.txt"
        cfg.write_text("definitely not a config")
        assert run_cli(["encode", "--config", cfg, "--out", tmp_path / "runs"]) == 1


@pytest.fixture(scope="module")
def encoded_dataset(tmp_path_factory):
    """Simulate + encode a tiny labeled dataset once for the later stages."""
    root = tmp_path_factory.mktemp("dataset")
    seqs = root / "seqs"
    write_sequence(seqs, "vertical__0", moving_bar_frames(), [0, 1000, 2000])
    write_sequence(seqs, "horizontal__0",
                   [f.T.copy() for f in moving_bar_frames()], [0, 1000, 2000])
    cfg = root / "cfg.txt"
    cfg.write_text(BASE_CONFIG + f"simulate.input = {seqs}\n")
    assert run_cli(["simulate", "--config", cfg, "--out", root / "runs"]) == 0
    sim_dir = glob.glob(str(root / "runs" / "simulate-*"))[0]
    cfg.write_text(BASE_CONFIG + f"encode.input = {sim_dir}\n")
    assert run_cli(["encode", "--config", cfg, "--out", root / "runs"]) == 0
    enc_dir = glob.glob(str(root / "runs" / "encode-*"))[0]
    return root, os.path.join(enc_dir, "manifest.txt")


@pytest.fixture(scope="module")
def trained_params(encoded_dataset):
    root, manifest = encoded_dataset
    cfg = root / "train_cfg.txt"
    cfg.write_text(BASE_CONFIG + f"train.manifest = {manifest}\n")
    assert run_cli(["train", "--config", cfg, "--out", root / "runs"]) == 0
    train_dir = glob.glob(str(root / "runs" / "train-*"))[0]
    return root, os.path.join(train_dir, "params.dnsr")


class TestTrain:
    def test_artifacts_written(self, trained_params):
        _, params_path = trained_params
        train_dir = os.path.dirname(params_path)
        assert os.path.exists(params_path)
        assert os.path.exists(os.path.join(train_dir, "loss.csv"))
        assert os.path.exists(os.path.join(train_dir, "loss.png"))
        assert os.path.exists(os.path.join(train_dir, "schedule.txt"))

    def test_missing_manifest_fails(self, tmp_path, capsys):
        cfg = tmp_path / "cfg.txt"
        cfg.write_text(BASE_CONFIG + f"train.manifest = {tmp_path}/nope.txt\n")
        assert run_cli(["train", "--config", cfg, "--out", tmp_path / "runs"]) == 1


class TestSample:
    def sample_once(self, root, params_path, out_name):
        conditions = root / "conditions.txt"
        conditions.write_text("class vertical\nuncond\n")
        cfg = root / f"{out_name}_cfg.txt"
        cfg.write_text(BASE_CONFIG + f"sample.params = {params_path}\n"
                       f"sample.conditions = {conditions}\n"
                       "sample.width = 8\nsample.height = 8\nsample.count = 2\n")
        out = root / out_name
        assert run_cli(["sample", "--config", cfg, "--seed", 7, "--out", out]) == 0
        return sorted(glob.glob(str(out / "sample-*" / "*.ppm")))

    def test_seed_7_twice_byte_identical(self, trained_params):
        root, params_path = trained_params
        a = self.sample_once(root, params_path, "sample_a")
        b = self.sample_once(root, params_path, "sample_b")
        assert len(a) == 4
        for pa, pb in zip(a, b):
            assert open(pa, "rb").read() == open(pb, "rb").read()

    def test_parallel_matches_serial(self, trained_params):
        root, params_path = trained_params
        conditions = root / "conditions.txt"
        conditions.write_text("class vertical\nuncond\n")
        cfg = root / "par_cfg.txt"
        cfg.write_text(BASE_CONFIG + f"sample.params = {params_path}\n"
                       f"sample.conditions = {conditions}\n"
                       "sample.width = 8\nsample.height = 8\nsample.count = 2\n")
        outs = []
        for name, workers in (("serial", "1"), ("parallel", "3")):
            out = root / f"par_{name}"
            assert run_cli(["sample", "--config", cfg, "--seed", 7, "--out", out,
                            "--parallel", workers]) == 0
            outs.append(sorted(glob.glob(str(out / "sample-*" / "*.ppm"))))
        for pa, pb in zip(*outs):
            assert open(pa, "rb").read() == open(pb, "rb").read()

    def test_pseudo_label_manifest(self, trained_params):
        root, params_path = trained_params
        files = self.sample_once(root, params_path, "sample_m")
        manifest = os.path.join(os.path.dirname(files[0]), "manifest.txt")
        body = open(manifest).read()
        assert "class=vertical" in body
        assert "uncond" in body


class TestEvaluate:
    def test_self_comparison_fid_zero(self, encoded_dataset, capsys, tmp_path):
        root, manifest = encoded_dataset
        cfg = tmp_path / "cfg.txt"
        cfg.write_text(BASE_CONFIG + f"evaluate.a = {manifest}\n"
                       f"evaluate.b = {manifest}\n")
        assert run_cli(["evaluate", "--config", cfg, "--out", tmp_path / "runs"]) == 0
        eval_dir = glob.glob(str(tmp_path / "runs" / "evaluate-*"))[0]
        body = open(os.path.join(eval_dir, "metrics.csv")).read()
        fid_value = float(body.splitlines()[1].split(",")[1])
        assert fid_value <= 1e-8
        assert os.path.exists(os.path.join(eval_dir, "metrics.png"))
