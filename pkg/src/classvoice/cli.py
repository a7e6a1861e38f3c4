"""Command-line entry point: simulate | train | eval | infer | inspect.

Configuration is a flat key-value space merged as defaults < config file
< command-line flags (flags are the kebab-case key names). Unknown
config-file keys are rejected by name, and the fully resolved
configuration is echoed into every output directory as
``run_config.json`` so a run can be reproduced from it exactly.

Final artifacts are written to ``<name>.partial`` and renamed on
success, so an interrupted run never leaves a complete-looking output.
Exit codes: 0 success, 1 usage error, 2 runtime error.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .model import (
    Checkpoint,
    ModelConfig,
    load_checkpoint,
    param_count,
    receptive_field,
    save_checkpoint,
)
from .simulate import Corpora, SceneGrid, generate_dataset
from .streaming import StreamingSession, decisions_to_segments, infer_offline, segments_to_lines
from .training import HISTORY_HEADER, TrainConfig, evaluate, train
from .wavio import read_wav


class UsageError(Exception):
    """Bad flags or config; exits with status 1."""


@dataclass(frozen=True)
class _Key:
    name: str  # kebab-case; also the flag name
    kind: str  # int | float | str | bool | ints | floats | counts
    default: object
    help: str
    commands: tuple  # subcommands that accept it


_MODEL_CMDS = ("simulate", "train")
_ALL_OUT = ("simulate", "train", "eval", "infer")

KEYS = [
    # model architecture (consumed by train; simulate shares sample-rate)
    _Key("frame-len", "int", 160, "encoder segment length in samples", ("train",)),
    _Key("frame-stride", "int", 80, "encoder hop in samples", ("train",)),
    _Key("enc-channels", "int", 512, "encoder filter count", ("train",)),
    _Key("bottleneck-channels", "int", 128, "bottleneck/residual channels", ("train",)),
    _Key("skip-channels", "int", 128, "skip-connection channels", ("train",)),
    _Key("block-channels", "int", 512, "conv-block internal channels", ("train",)),
    _Key("kernel-size", "int", 3, "depthwise kernel size", ("train",)),
    _Key("blocks-per-repeat", "int", 8, "dilated blocks per repeat", ("train",)),
    _Key("repeats", "int", 3, "repeat count", ("train",)),
    _Key("hidden1", "int", 2048, "first classifier hidden size", ("train",)),
    _Key("hidden2", "int", 2048, "second classifier hidden size", ("train",)),
    _Key("threshold", "float", 0.5, "per-class decision threshold", ("train",)),
    _Key("sample-rate", "int", 16000, "audio sample rate in Hz", ("simulate", "train")),
    _Key("norm-mode", "str", "cLN", "gLN | cLN | none", ("train",)),
    _Key("causal", "bool", True, "left-only padding (causal) vs symmetric", ("train",)),
    _Key("features-mode", "str", "multiscale", "multiscale | last_layer", ("train",)),
    _Key("class-activation", "str", "sigmoid", "sigmoid | softmax", ("train",)),
    # training
    _Key("epochs", "int", 150, "max training epochs", ("train",)),
    _Key("patience", "int", 10, "early-stopping patience in epochs", ("train",)),
    _Key("lr-start", "float", 1e-5, "initial learning rate", ("train",)),
    _Key("lr-end", "float", 1e-8, "final learning rate", ("train",)),
    _Key("batch-size", "int", 32, "windows per optimizer step", ("train",)),
    _Key("window-seconds", "float", 3.0, "analysis window length", ("train", "eval", "infer")),
    _Key("window-hop-seconds", "float", 0.5, "training window sampling stride", ("train",)),
    # scene grid
    _Key("counts", "counts", (8, 2, 2), "train,valid,test sample counts", ("simulate",)),
    _Key("expert-dir", "str", None, "directory of expert WAV clips", ("simulate",)),
    _Key("assistant-dir", "str", None, "directory of assistant WAV clips", ("simulate",)),
    _Key("noise-dir", "str", None, "directory of noise WAV clips", ("simulate",)),
    _Key("room-dims", "floats", (5.0, 6.0, 3.5), "room size x,y,z in meters", ("simulate",)),
    _Key("t60-values", "floats", (0.4, 0.5, 0.6, 0.7, 0.8, 0.9), "reverberation time grid", ("simulate",)),
    _Key("snr-values", "floats", tuple(float(v) for v in range(5, 16)), "expert/noise SNR grid in dB", ("simulate",)),
    _Key(
        "power-ratio-values",
        "floats",
        tuple(float(v) for v in range(3, 13)),
        "assistant/expert power-ratio grid in dB",
        ("simulate",),
    ),
    _Key(
        "assistant-x-values",
        "floats",
        (0.5, 1.0, 1.5, 2.0, 2.5, 3.0, 3.5, 4.0, 4.5),
        "assistant x positions in meters",
        ("simulate",),
    ),
    _Key("assistant-y", "float", 1.0, "assistant y position", ("simulate",)),
    _Key("assistant-z", "float", 1.6, "assistant z position", ("simulate",)),
    _Key("expert-pos", "floats", (2.5, 0.5, 2.0), "expert position x,y,z", ("simulate",)),
    _Key("mic-forward-offset", "float", 0.08, "mic offset in front of the assistant (y)", ("simulate",)),
    # inference / evaluation
    _Key("hop-seconds", "float", 0.1, "decision hop for eval/infer", ("eval", "infer")),
    _Key("streaming", "bool", False, "use the streaming engine (causal checkpoints)", ("infer",)),
    # common
    _Key("seed", "int", 0, "master 64-bit seed", ("simulate", "train")),
    _Key("out", "str", None, "output directory", _ALL_OUT),
    _Key("train-manifest", "str", None, "training manifest (JSONL)", ("train",)),
    _Key("valid-manifest", "str", None, "validation manifest (JSONL)", ("train",)),
    _Key("test-manifest", "str", None, "test manifest (JSONL)", ("eval",)),
    _Key("checkpoint", "str", None, "checkpoint file", ("eval", "infer", "inspect")),
    _Key("wav", "str", None, "input WAV file", ("infer",)),
]

_KEYS_BY_NAME = {k.name: k for k in KEYS}

REQUIRED = {
    "simulate": ("out", "expert-dir", "assistant-dir", "noise-dir"),
    "train": ("out", "train-manifest", "valid-manifest"),
    "eval": ("out", "checkpoint", "test-manifest"),
    "infer": ("out", "checkpoint", "wav"),
    "inspect": ("checkpoint",),
}


def _parse_value(key: _Key, raw):
    if not isinstance(raw, str):
        # from a JSON config file: validate loosely, normalize tuples
        if key.kind in ("ints", "floats", "counts") and isinstance(raw, (list, tuple)):
            conv = int if key.kind in ("ints", "counts") else float
            return tuple(conv(v) for v in raw)
        return raw
    try:
        if key.kind == "int":
            return int(raw)
        if key.kind == "float":
            return float(raw)
        if key.kind == "bool":
            low = raw.lower()
            if low in ("true", "1", "yes"):
                return True
            if low in ("false", "0", "no"):
                return False
            raise ValueError(f"expected true/false, got {raw!r}")
        if key.kind == "counts":
            parts = tuple(int(v) for v in raw.split(","))
            if len(parts) != 3 or any(v < 0 for v in parts):
                raise ValueError("expected three non-negative integers: train,valid,test")
            return parts
        if key.kind == "floats":
            return tuple(float(v) for v in raw.split(","))
        if key.kind == "ints":
            return tuple(int(v) for v in raw.split(","))
        return raw
    except ValueError as exc:
        raise UsageError(f"--{key.name}: {exc}") from exc


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _build_parser() -> _Parser:
    parser = _Parser(prog="classvoice", description=__doc__.split("\n\n")[0])
    sub = parser.add_subparsers(dest="command", metavar="{simulate,train,eval,infer,inspect}")
    for command in ("simulate", "train", "eval", "infer", "inspect"):
        p = sub.add_parser(command, add_help=True)
        p.add_argument("--config", default=None, help="JSON config file (defaults < file < flags)")
        for key in KEYS:
            if command in key.commands:
                p.add_argument(f"--{key.name}", default=None, help=key.help, metavar="")
    return parser


def resolve_config(command: str, args: argparse.Namespace) -> dict:
    """defaults < config file < flags, with unknown config keys rejected."""
    keys = [k for k in KEYS if command in k.commands]
    cfg = {k.name: k.default for k in keys}
    if args.config is not None:
        try:
            loaded = json.loads(Path(args.config).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise UsageError(f"--config {args.config}: {exc}") from exc
        if not isinstance(loaded, dict):
            raise UsageError(f"--config {args.config}: expected a JSON object")
        known = {k.name for k in keys}
        for name, value in loaded.items():
            if name not in known:
                raise UsageError(f"--config {args.config}: unknown key {name!r} for '{command}'")
            cfg[name] = _parse_value(_KEYS_BY_NAME[name], value)
    for key in keys:
        raw = getattr(args, key.name.replace("-", "_"), None)
        if raw is not None:
            cfg[key.name] = _parse_value(key, raw)
    missing = [f"--{name}" for name in REQUIRED[command] if cfg.get(name) is None]
    if missing:
        raise UsageError(f"{command}: missing required flags: {', '.join(missing)}")
    return cfg


def _atomic_write_text(path: Path, text: str):
    partial = path.with_name(path.name + ".partial")
    partial.write_text(text)
    os.replace(partial, path)


def _echo_config(cfg: dict, out_dir: Path):
    payload = {k: (list(v) if isinstance(v, tuple) else v) for k, v in cfg.items()}
    _atomic_write_text(out_dir / "run_config.json", json.dumps(payload, sort_keys=True, indent=2) + "\n")


def _model_config(cfg: dict) -> ModelConfig:
    return ModelConfig(
        frame_len=cfg["frame-len"],
        frame_stride=cfg["frame-stride"],
        enc_channels=cfg["enc-channels"],
        bottleneck_channels=cfg["bottleneck-channels"],
        skip_channels=cfg["skip-channels"],
        block_channels=cfg["block-channels"],
        kernel_size=cfg["kernel-size"],
        blocks_per_repeat=cfg["blocks-per-repeat"],
        repeats=cfg["repeats"],
        hidden1=cfg["hidden1"],
        hidden2=cfg["hidden2"],
        threshold=cfg["threshold"],
        sample_rate=cfg["sample-rate"],
        norm_mode=cfg["norm-mode"],
        causal=cfg["causal"],
        features_mode=cfg["features-mode"],
        class_activation=cfg["class-activation"],
    )


def _cmd_simulate(cfg: dict) -> int:
    out = Path(cfg["out"])
    out.mkdir(parents=True, exist_ok=True)
    _echo_config(cfg, out)
    corpora = Corpora.from_dirs(
        cfg["expert-dir"], cfg["assistant-dir"], cfg["noise-dir"], sample_rate=cfg["sample-rate"]
    )
    grid = SceneGrid(
        room_dims=tuple(cfg["room-dims"]),
        t60_values=tuple(cfg["t60-values"]),
        snr_values=tuple(cfg["snr-values"]),
        power_ratio_values=tuple(cfg["power-ratio-values"]),
        assistant_x_values=tuple(cfg["assistant-x-values"]),
        assistant_y=cfg["assistant-y"],
        assistant_z=cfg["assistant-z"],
        expert_pos=tuple(cfg["expert-pos"]),
        mic_forward_offset=cfg["mic-forward-offset"],
    )
    manifests = generate_dataset(
        corpora, grid, tuple(cfg["counts"]), out, seed=cfg["seed"], sample_rate=cfg["sample-rate"]
    )
    for split, path in manifests.items():
        print(f"{split}: {path}")
    return 0


def _cmd_train(cfg: dict) -> int:
    out = Path(cfg["out"])
    out.mkdir(parents=True, exist_ok=True)
    _echo_config(cfg, out)
    model_config = _model_config(cfg)
    train_config = TrainConfig(
        epochs=cfg["epochs"],
        patience=cfg["patience"],
        lr_start=cfg["lr-start"],
        lr_end=cfg["lr-end"],
        batch_size=cfg["batch-size"],
        window_seconds=cfg["window-seconds"],
        window_hop_seconds=cfg["window-hop-seconds"],
        seed=cfg["seed"],
    )
    def log(stats):
        print(
            f"epoch {stats.epoch}: train_loss={stats.train_loss:.6f} "
            f"valid_loss={stats.valid_loss:.6f} lr={stats.lr:.3e}"
        )

    checkpoint, history = train(
        model_config, train_config, cfg["train-manifest"], cfg["valid-manifest"], log=log
    )
    ckpt_path = out / "model.ckpt"
    partial = ckpt_path.with_name(ckpt_path.name + ".partial")
    save_checkpoint(partial, checkpoint)
    os.replace(partial, ckpt_path)
    _atomic_write_text(
        out / "history.csv", "\n".join([HISTORY_HEADER] + [h.line() for h in history]) + "\n"
    )
    print(f"checkpoint: {ckpt_path} (best epoch {checkpoint.metadata['best_epoch']}, "
          f"valid loss {checkpoint.metadata['best_valid_loss']:.6f})")
    return 0


def _cmd_eval(cfg: dict) -> int:
    out = Path(cfg["out"])
    out.mkdir(parents=True, exist_ok=True)
    _echo_config(cfg, out)
    checkpoint = load_checkpoint(cfg["checkpoint"])
    report = evaluate(
        checkpoint,
        cfg["test-manifest"],
        window_seconds=cfg["window-seconds"],
        hop_seconds=cfg["hop-seconds"],
    )
    text = report.render_text()
    _atomic_write_text(out / "report.txt", text + "\n")
    _atomic_write_text(out / "report.json", json.dumps(report.to_dict(), sort_keys=True, indent=2) + "\n")
    print(text)
    return 0


def _cmd_infer(cfg: dict) -> int:
    out = Path(cfg["out"])
    out.mkdir(parents=True, exist_ok=True)
    _echo_config(cfg, out)
    checkpoint = load_checkpoint(cfg["checkpoint"])
    wav = read_wav(cfg["wav"])
    fs = checkpoint.config.sample_rate
    if wav.sample_rate != fs:
        raise ValueError(f"{cfg['wav']}: sample rate {wav.sample_rate} does not match checkpoint ({fs})")
    if cfg["streaming"]:
        session = StreamingSession(
            checkpoint, window_seconds=cfg["window-seconds"], hop_seconds=cfg["hop-seconds"]
        )
        chunk = max(1, round(cfg["hop-seconds"] * fs))
        for start in range(0, len(wav.samples), chunk):
            session.feed(wav.samples[start : start + chunk])
        track = session.close()
    else:
        track = infer_offline(
            wav.samples,
            checkpoint,
            window_seconds=cfg["window-seconds"],
            hop_seconds=cfg["hop-seconds"],
        )
    header = "timestamp_s,category,prob_assistant,prob_expert"
    _atomic_write_text(out / "decisions.csv", "\n".join([header] + track.to_lines()) + "\n")
    segments = decisions_to_segments(track)
    _atomic_write_text(
        out / "segments.csv", "\n".join(["start_s,end_s,category"] + segments_to_lines(segments)) + "\n"
    )
    print(f"{len(track)} decisions, {len(segments)} segments -> {out}")
    return 0


def _cmd_inspect(cfg: dict) -> int:
    checkpoint = load_checkpoint(cfg["checkpoint"])
    config = checkpoint.config
    stored = sum(int(np.prod(arr.shape)) for arr in checkpoint.params.values())
    print("config:")
    for name, value in sorted(config.to_dict().items()):
        print(f"  {name}: {value}")
    print(f"param_count: {param_count(config)}")
    print(f"stored parameters: {stored}")
    print(f"receptive_field: {receptive_field(config)} frames")
    if checkpoint.metadata:
        print("metadata:")
        for name, value in sorted(checkpoint.metadata.items()):
            print(f"  {name}: {value}")
    return 0


_COMMANDS = {
    "simulate": _cmd_simulate,
    "train": _cmd_train,
    "eval": _cmd_eval,
    "infer": _cmd_infer,
    "inspect": _cmd_inspect,
}


def main(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
        if args.command is None:
            raise UsageError("a subcommand is required: simulate | train | eval | infer | inspect")
        cfg = resolve_config(args.command, args)
        return _COMMANDS[args.command](cfg)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except SystemExit:
        raise
    except Exception as exc:  # runtime failure -> exit 2 with a message
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
