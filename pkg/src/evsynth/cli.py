"""Command-line pipeline: simulate -> encode -> train -> sample -> evaluate.

Every stage reads one plain-text config (see config.py for the grammar) and
writes into ``<out>/<stage>-<confighash>/`` so distinct configs never share
an output directory. All stages are deterministic given config + seed.
"""

from __future__ import annotations

import argparse
import glob
import os
import sys
from concurrent.futures import ThreadPoolExecutor

import numpy as np

from . import config as cfgmod
from . import denoiser as dn
from . import diffusion, encode, events, manifest as mf, metrics, report, simulate
from .conditioning import Condition, load_control_image


class StageError(Exception):
    def __init__(self, stage: str, cause: str):
        super().__init__(f"{stage}: {cause}")
        self.stage = stage


def _stage_dir(cfg, out_root, stage):
    path = os.path.join(out_root, f"{stage}-{cfg.get('_hash', 'nohash')}")
    os.makedirs(path, exist_ok=True)
    return path


def _seq_dirs(input_path):
    if os.path.isfile(os.path.join(input_path, "timestamps.txt")):
        return [input_path]
    subdirs = sorted(
        d for d in glob.glob(os.path.join(input_path, "*"))
        if os.path.isfile(os.path.join(d, "timestamps.txt"))
    )
    if not subdirs:
        raise StageError("simulate", f"no intensity sequences under {input_path}")
    return subdirs


def cmd_simulate(cfg, out_root, seed, preview=False, parallel=1):
    section = cfg.get("simulate", {})
    input_path = section.get("input")
    if not input_path:
        raise StageError("simulate", "config key simulate.input is required")
    sensor = cfgmod.sensor_from_config(cfg)
    out_dir = _stage_dir(cfg, out_root, "simulate")
    for i, seq_dir in enumerate(_seq_dirs(input_path)):
        seq = simulate.read_intensity_sequence(seq_dir)
        stream = simulate.simulate(seq, sensor, seed + i)
        if sensor.background_rate > 0:
            stream = simulate.inject_noise(
                stream, sensor, int(seq.timestamps[0]), int(seq.timestamps[-1]),
                seed + i + 1_000_000)
        name = os.path.basename(seq_dir.rstrip("/"))
        events.write_stream(stream, os.path.join(out_dir, f"{name}.evst"))
        print(f"simulate: {name}: {len(stream)} events")
    return out_dir


def _stream_label(path):
    """Class label from a ``<label>__<rest>.evst`` filename, else None."""
    stem = os.path.splitext(os.path.basename(path))[0]
    return stem.split("__", 1)[0] if "__" in stem else None


def cmd_encode(cfg, out_root, seed, preview=False, parallel=1):
    section = cfg.get("encode", {})
    input_path = section.get("input")
    if not input_path:
        raise StageError("encode", "config key encode.input is required")
    mode = section.get("mode", "full")
    split = section.get("split", "train")
    enc_cfg = cfgmod.encoder_from_config(cfg)
    stream_files = ([input_path] if os.path.isfile(input_path)
                    else sorted(glob.glob(os.path.join(input_path, "*.evst"))))
    if not stream_files:
        raise StageError("encode", f"no .evst files under {input_path}")
    out_dir = _stage_dir(cfg, out_root, "encode")
    entries = []
    preview_frames = []
    for path in stream_files:
        stream = events.read_stream(path)
        rep = events.validate_stream(stream)
        if not rep.ok:
            raise StageError("encode", f"{path}: {rep.violations[0]}")
        stem = os.path.splitext(os.path.basename(path))[0]
        if mode == "full":
            frames = [encode.encode_full(stream, enc_cfg)]
        elif mode == "mono":
            frames = [encode.render_mono(stream, enc_cfg)]
        elif mode == "fixed_count":
            frames = encode.encode_fixed_count(stream, section.get("param", 7500), enc_cfg)
        elif mode == "fixed_interval":
            frames = encode.encode_fixed_interval(stream, section.get("param", 8333), enc_cfg)
        else:
            raise StageError("encode", f"unknown encoder mode {mode!r}")
        label = _stream_label(path)
        control_sidecar = os.path.join(os.path.dirname(path), stem + ".control.ppm")
        for k, frame in enumerate(frames):
            frame_name = f"{stem}_{k:04d}.ppm"
            encode.write_frame(frame, os.path.join(out_dir, frame_name))
            if label is not None:
                entries.append(mf.ManifestEntry(frame_name, split, "class", label))
            elif os.path.exists(control_sidecar):
                entries.append(mf.ManifestEntry(frame_name, split, "skeleton",
                                                os.path.relpath(control_sidecar, out_dir)))
            else:
                entries.append(mf.ManifestEntry(frame_name, split, "uncond"))
            if len(preview_frames) < 16:
                preview_frames.append(frame)
        print(f"encode: {stem}: {len(frames)} frame(s)")
    mf.write_manifest(mf.DatasetManifest(tuple(entries), out_dir),
                      os.path.join(out_dir, "manifest.txt"))
    if preview and preview_frames:
        report.render_frame_grid(preview_frames, os.path.join(out_dir, "preview.png"))
    return out_dir


def _condition_for_entry(entry, man, spec):
    if entry.condition_kind == "class":
        return Condition.class_text(entry.condition_value, spec.cond_dim)
    if entry.condition_kind in ("skeleton", "normal"):
        path = os.path.join(man.directory, entry.condition_value)
        image = load_control_image(path, *_control_dims(man, entry))
        if spec.control_channels == 1:
            image = image.mean(axis=2)
        factory = Condition.skeleton if entry.condition_kind == "skeleton" else Condition.normal_map
        return factory(image)
    return Condition.unconditional()


def _control_dims(man, entry):
    frame = encode.read_frame(man.resolve(entry))
    return frame.width, frame.height


def _load_dataset(man, spec, split=None):
    dataset = []
    for entry in man.entries:
        if split is not None and entry.split != split:
            continue
        frame = encode.read_frame(man.resolve(entry))
        cond = _condition_for_entry(entry, man, spec)
        dataset.append((encode.frame_to_tensor(frame), cond))
    return dataset


def cmd_train(cfg, out_root, seed, preview=False, parallel=1):
    section = cfg.get("train", {})
    manifest_path = section.get("manifest")
    if not manifest_path:
        raise StageError("train", "config key train.manifest is required")
    man = mf.read_manifest(manifest_path)
    missing = man.check_files()
    if missing:
        raise StageError("train", f"manifest references missing file {missing[0]}")
    spec = cfgmod.denoiser_spec_from_config(cfg)
    sched = cfgmod.schedule_from_config(cfg)
    train_cfg = cfgmod.train_config_from_config(cfg)
    if seed is not None:
        train_cfg = dn.TrainConfig(**{**train_cfg.__dict__, "seed": seed})
    dataset = _load_dataset(man, spec, split="train")
    if not dataset:
        raise StageError("train", "manifest has no train-split entries")
    resume = section.get("resume")
    params = dn.load_params(resume) if resume else None
    params, trace = dn.train(dataset, spec, train_cfg, sched=sched, params=params)
    out_dir = _stage_dir(cfg, out_root, "train")
    dn.save_params(params, os.path.join(out_dir, "params.dnsr"))
    dn.write_loss_csv(trace, os.path.join(out_dir, "loss.csv"))
    diffusion.write_schedule(sched, os.path.join(out_dir, "schedule.txt"))
    report.render_loss_curve(trace, os.path.join(out_dir, "loss.png"))
    print(f"train: {len(trace)} steps, final loss {trace[-1]:.6f}")
    return out_dir


def _read_condition_list(path, spec, width, height):
    conditions = []
    with open(path) as f:
        for lineno, raw in enumerate(f, 1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            kind, _, rest = line.partition(" ")
            if kind == "class":
                conditions.append(("class", rest, Condition.class_text(rest, spec.cond_dim)))
            elif kind in ("skeleton", "normal"):
                image = load_control_image(rest, width, height)
                if spec.control_channels == 1:
                    image = image.mean(axis=2)
                factory = Condition.skeleton if kind == "skeleton" else Condition.normal_map
                conditions.append((kind, rest, factory(image)))
            elif kind == "uncond":
                conditions.append(("uncond", None, Condition.unconditional()))
            else:
                raise StageError("sample", f"{path}:{lineno}: unknown condition {kind!r}")
    if not conditions:
        raise StageError("sample", f"{path}: no conditions listed")
    return conditions


def cmd_sample(cfg, out_root, seed, preview=False, parallel=1):
    section = cfg.get("sample", {})
    params_path = section.get("params")
    cond_path = section.get("conditions")
    if not params_path or not cond_path:
        raise StageError("sample", "config keys sample.params and sample.conditions are required")
    width = section.get("width", 16)
    height = section.get("height", 16)
    count = section.get("count", 8)
    params = dn.load_params(params_path)
    spec = params.spec
    sched = cfgmod.schedule_from_config(cfg)
    if sched.T != spec.T:
        raise StageError("sample", f"schedule T={sched.T} but parameters expect T={spec.T}")
    guidance = cfgmod.guidance_from_config(cfg)
    denoiser = dn.Denoiser(params)
    conditions = _read_condition_list(cond_path, spec, width, height)
    out_dir = _stage_dir(cfg, out_root, "sample")

    jobs = [(ci, k) for ci in range(len(conditions)) for k in range(count)]

    def run(job):
        ci, k = job
        _, _, cond = conditions[ci]
        item_seed = (seed or 0) * 1_000_003 + ci * 10_007 + k
        x = diffusion.sample(denoiser, cond, sched,
                             (spec.image_channels, height, width),
                             item_seed, guidance)
        return encode.tensor_to_frame(x)

    if parallel > 1:
        with ThreadPoolExecutor(max_workers=parallel) as pool:
            frames = list(pool.map(run, jobs))
    else:
        frames = [run(job) for job in jobs]

    entries = []
    for (ci, k), frame in zip(jobs, frames):
        kind, value, _ = conditions[ci]
        name = f"gen_{ci:03d}_{k:04d}.ppm"
        encode.write_frame(frame, os.path.join(out_dir, name))
        if kind == "uncond":
            entries.append(mf.ManifestEntry(name, "eval", "uncond"))
        else:
            cond_kind = "class" if kind == "class" else kind
            entries.append(mf.ManifestEntry(name, "eval", cond_kind, value))
    mf.write_manifest(mf.DatasetManifest(tuple(entries), out_dir),
                      os.path.join(out_dir, "manifest.txt"))
    if preview:
        report.render_frame_grid(frames[:16], os.path.join(out_dir, "preview.png"))
    print(f"sample: wrote {len(frames)} frame(s) for {len(conditions)} condition(s)")
    return out_dir


def cmd_evaluate(cfg, out_root, seed, preview=False, parallel=1):
    section = cfg.get("evaluate", {})
    path_a, path_b = section.get("a"), section.get("b")
    if not path_a or not path_b:
        raise StageError("evaluate", "config keys evaluate.a and evaluate.b are required")
    man_a, man_b = mf.read_manifest(path_a), mf.read_manifest(path_b)
    for man, path in ((man_a, path_a), (man_b, path_b)):
        missing = man.check_files()
        if missing:
            raise StageError("evaluate", f"{path} references missing file {missing[0]}")
    frames_a = [encode.read_frame(man_a.resolve(e)) for e in man_a.entries]
    frames_b = [encode.read_frame(man_b.resolve(e)) for e in man_b.entries]
    msection = cfg.get("metrics", {})
    d = msection.get("feature_dim", 64)
    feat_seed = msection.get("seed", seed or 0)
    feats_a = metrics.extract_features(frames_a, d, feat_seed)
    feats_b = metrics.extract_features(frames_b, d, feat_seed)
    results = {"fid": metrics.fid(feats_a, feats_b),
               "n_a": float(len(frames_a)), "n_b": float(len(frames_b))}
    out_dir = _stage_dir(cfg, out_root, "evaluate")
    metrics.write_metrics_csv(results, os.path.join(out_dir, "metrics.csv"))
    report.render_metric_bars(results, os.path.join(out_dir, "metrics.png"))
    print(metrics.format_metrics_table(results))
    return out_dir


def cmd_pipeline(cfg, out_root, seed, preview=False, parallel=1):
    """Run all configured stages in order, wiring each output to the next."""
    cfg = dict(cfg)
    if "simulate" in cfg:
        sim_dir = cmd_simulate(cfg, out_root, seed, preview, parallel)
        cfg.setdefault("encode", {})["input"] = sim_dir
    enc_dir = cmd_encode(cfg, out_root, seed, preview, parallel)
    cfg.setdefault("train", {})["manifest"] = os.path.join(enc_dir, "manifest.txt")
    train_dir = cmd_train(cfg, out_root, seed, preview, parallel)
    cfg.setdefault("sample", {})["params"] = os.path.join(train_dir, "params.dnsr")
    sample_dir = cmd_sample(cfg, out_root, seed, preview, parallel)
    cfg.setdefault("evaluate", {})
    cfg["evaluate"].setdefault("a", os.path.join(sample_dir, "manifest.txt"))
    cfg["evaluate"].setdefault("b", os.path.join(enc_dir, "manifest.txt"))
    return cmd_evaluate(cfg, out_root, seed, preview, parallel)


COMMANDS = {
    "simulate": cmd_simulate,
    "encode": cmd_encode,
    "train": cmd_train,
    "sample": cmd_sample,
    "evaluate": cmd_evaluate,
    "pipeline": cmd_pipeline,
}


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="evsynth",
                                     description="Event data synthesis pipeline")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", required=True, help="pipeline config file")
        p.add_argument("--seed", type=int, default=None, help="override config seed")
        p.add_argument("--out", default="runs", help="output root directory")
        p.add_argument("--preview", action="store_true",
                       help="also render white-background preview figures")
        p.add_argument("--parallel", type=int, default=1,
                       help="worker count for per-item parallel stages")
    args = parser.parse_args(argv)
    try:
        cfg = cfgmod.load_config(args.config)
    except (OSError, ValueError) as exc:
        print(f"error: config: {exc}", file=sys.stderr)
        return 1
    seed = args.seed if args.seed is not None else cfg.get("seed", 0)
    try:
        COMMANDS[args.command](cfg, args.out, seed, args.preview, args.parallel)
    except StageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (OSError, ValueError) as exc:
        print(f"error: {args.command}: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
