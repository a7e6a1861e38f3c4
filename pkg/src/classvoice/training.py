"""Training loop (Adam + exponential LR decay + early stopping) and evaluation.

Training iterates 3 s windows cut from 12 s labeled samples; each
window's target is the category at its middle sample (half-open segment
boundaries, so a center exactly on a boundary belongs to the later
segment). The loss is the class-summed binary cross-entropy of the two
sigmoid outputs, averaged over the batch. Early stopping requires a
strict decrease of the validation loss to reset its patience counter,
and the returned checkpoint is the best-validation one.

Evaluation scores sliding-window decisions against the ground-truth
segment at each decision timestamp, one-vs-rest per category.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import autodiff as ad
from .autodiff import AdamState, adam_step, backward, binary_cross_entropy, exp_lr_schedule, zero_grads
from .model import CATEGORY_ORDER, Category, Checkpoint, ModelConfig, MultiScaleTCN, decode
from .simulate import LabeledSample
from .streaming import infer_offline
from .wavio import read_wav


class TrainingDivergedError(RuntimeError):
    """The loss went non-finite; carries the epoch/batch diagnostics."""


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 150
    patience: int = 10
    lr_start: float = 1e-5
    lr_end: float = 1e-8
    batch_size: int = 32
    window_seconds: float = 3.0
    window_hop_seconds: float = 0.5
    seed: int = 0

    def __post_init__(self):
        if self.epochs < 1:
            raise ValueError(f"epochs must be positive, got {self.epochs}")
        if not 0 < self.patience < self.epochs:
            raise ValueError(f"patience must lie in (0, epochs), got {self.patience}")
        if self.window_seconds <= 0:
            raise ValueError(f"window_seconds must be positive, got {self.window_seconds}")
        if self.window_hop_seconds <= 0:
            raise ValueError(f"window_hop_seconds must be positive, got {self.window_hop_seconds}")
        if self.batch_size < 1:
            raise ValueError(f"batch_size must be positive, got {self.batch_size}")


@dataclass(frozen=True)
class EpochStats:
    epoch: int
    train_loss: float
    valid_loss: float
    lr: float

    def line(self) -> str:
        return f"{self.epoch},{self.train_loss:.8g},{self.valid_loss:.8g},{self.lr:.8g}"


HISTORY_HEADER = "epoch,train_loss,valid_loss,lr"


# ---------------------------------------------------------------------------
# manifests and samples


@dataclass(frozen=True)
class SampleRecord:
    wav: Path
    labels: Path
    sample_rate: int
    peak_scale: float = 1.0
    scene: dict | None = None


def read_manifest(path) -> list[SampleRecord]:
    """Parse a JSONL manifest; file paths resolve relative to the manifest."""
    path = Path(path)
    base = path.parent
    records = []
    for ln, line in enumerate(path.read_text().splitlines(), start=1):
        if not line.strip():
            continue
        try:
            rec = json.loads(line)
        except json.JSONDecodeError as exc:
            raise ValueError(f"{path}:{ln}: invalid manifest record ({exc})") from exc
        records.append(
            SampleRecord(
                wav=base / rec["wav"],
                labels=base / rec["labels"],
                sample_rate=int(rec.get("sample_rate", 16000)),
                peak_scale=float(rec.get("peak_scale", 1.0)),
                scene=rec.get("scene"),
            )
        )
    if not records:
        raise ValueError(f"{path}: manifest is empty")
    return records


def parse_labels(path) -> list[tuple[Category, int, int]]:
    segments = []
    for line in Path(path).read_text().splitlines():
        if not line.strip():
            continue
        start, end, code = line.split(",")
        segments.append((Category(code), int(start), int(end)))
    return segments


def load_sample(record: SampleRecord) -> LabeledSample:
    wav = read_wav(record.wav)
    if wav.sample_rate != record.sample_rate:
        raise ValueError(
            f"{record.wav}: sample rate {wav.sample_rate} does not match manifest ({record.sample_rate})"
        )
    return LabeledSample(
        audio=wav.samples,
        segments=parse_labels(record.labels),
        sample_rate=wav.sample_rate,
        peak_scale=record.peak_scale,
    )


# ---------------------------------------------------------------------------
# window targets


def window_label(sample: LabeledSample, center_time: float) -> np.ndarray:
    """(assistant_bit, expert_bit) of the category at the window middle.

    Segment intervals are half-open, so a center exactly on a boundary
    takes the later segment's label.
    """
    center = int(round(center_time * sample.sample_rate))
    if not 0 <= center < len(sample.audio):
        raise ValueError(
            f"window center {center_time} s (sample {center}) lies outside the sample"
        )
    cat = sample.category_at(center)
    return np.array([cat.assistant_bit, cat.expert_bit], dtype=np.float32)


def _window_centers(n_samples: int, win: int, hop: int) -> list[int]:
    half = win // 2
    last = n_samples - win + half
    return list(range(half, last + 1, hop))


@dataclass
class _WindowSet:
    """Flattened (sample, center) index over a list of loaded samples."""

    samples: list[LabeledSample]
    windows: list[tuple[int, int]]  # (sample index, center sample)
    win: int

    @classmethod
    def build(cls, samples, win, hop):
        windows = [
            (i, c) for i, s in enumerate(samples) for c in _window_centers(len(s.audio), win, hop)
        ]
        return cls(samples=samples, windows=windows, win=win)

    def batch(self, indices) -> tuple[np.ndarray, np.ndarray]:
        half = self.win // 2
        xs = np.empty((len(indices), self.win), dtype=np.float32)
        ys = np.empty((len(indices), 2), dtype=np.float32)
        for row, wi in enumerate(indices):
            si, center = self.windows[wi]
            sample = self.samples[si]
            xs[row] = sample.audio[center - half : center - half + self.win]
            cat = sample.category_at(center)
            ys[row] = (cat.assistant_bit, cat.expert_bit)
        return xs, ys


def _mean_loss(model: MultiScaleTCN, window_set: _WindowSet, batch_size: int) -> float:
    total = 0.0
    with ad.no_grad():
        for start in range(0, len(window_set.windows), batch_size):
            idx = range(start, min(start + batch_size, len(window_set.windows)))
            xs, ys = window_set.batch(list(idx))
            loss = binary_cross_entropy(model.window_probs(xs), ys)
            total += loss.item() * len(xs)
    return total / len(window_set.windows)


# ---------------------------------------------------------------------------
# training


def train(
    model_config: ModelConfig,
    train_config: TrainConfig,
    train_manifest,
    valid_manifest,
    log=None,
) -> tuple[Checkpoint, list[EpochStats]]:
    """Train from scratch; returns (best-validation checkpoint, history).

    Stops early once the validation loss has not strictly decreased for
    ``patience`` consecutive epochs. ``log`` is an optional callable
    receiving one EpochStats per epoch.
    """
    train_samples = [load_sample(r) for r in read_manifest(train_manifest)]
    valid_samples = [load_sample(r) for r in read_manifest(valid_manifest)]
    fs = model_config.sample_rate
    for s in train_samples + valid_samples:
        if s.sample_rate != fs:
            raise ValueError(f"sample rate {s.sample_rate} does not match model ({fs})")
    win = round(train_config.window_seconds * fs)
    hop = max(1, round(train_config.window_hop_seconds * fs))
    train_set = _WindowSet.build(train_samples, win, hop)
    valid_set = _WindowSet.build(valid_samples, win, hop)
    if not train_set.windows or not valid_set.windows:
        raise ValueError("train and validation sets must both contain at least one window")

    model = MultiScaleTCN(model_config, seed=train_config.seed)
    params = model.parameters()
    state = AdamState.for_params(params)
    shuffle_rng = np.random.default_rng(np.random.SeedSequence([train_config.seed, 1]))

    history: list[EpochStats] = []
    best_loss = np.inf
    best_params = None
    best_epoch = -1
    bad_epochs = 0

    for epoch in range(train_config.epochs):
        lr = exp_lr_schedule(epoch, train_config.epochs, train_config.lr_start, train_config.lr_end)
        order = shuffle_rng.permutation(len(train_set.windows))
        total = 0.0
        for start in range(0, len(order), train_config.batch_size):
            batch_idx = order[start : start + train_config.batch_size]
            xs, ys = train_set.batch(batch_idx)
            zero_grads(params)
            loss = binary_cross_entropy(model.window_probs(xs), ys)
            value = loss.item()
            if not np.isfinite(value):
                raise TrainingDivergedError(
                    f"non-finite training loss at epoch {epoch}, window {start} (lr={lr:g})"
                )
            backward(loss)
            grads = [p.grad if p.grad is not None else np.zeros_like(p.data) for p in params]
            adam_step(params, grads, state, lr)
            total += value * len(xs)
        train_loss = total / len(train_set.windows)
        valid_loss = _mean_loss(model, valid_set, train_config.batch_size)
        if not np.isfinite(valid_loss):
            raise TrainingDivergedError(f"non-finite validation loss at epoch {epoch}")
        stats = EpochStats(epoch=epoch, train_loss=train_loss, valid_loss=valid_loss, lr=lr)
        history.append(stats)
        if log is not None:
            log(stats)
        if valid_loss < best_loss:
            best_loss = valid_loss
            best_epoch = epoch
            best_params = {n: p.data.copy() for n, p in model.params.items()}
            bad_epochs = 0
        else:
            bad_epochs += 1
            if bad_epochs >= train_config.patience:
                break

    checkpoint = Checkpoint(
        config=model_config,
        params={n: a.astype("<f4") for n, a in best_params.items()},
        metadata={
            "best_epoch": best_epoch,
            "best_valid_loss": float(best_loss),
            "epochs_run": len(history),
        },
    )
    return checkpoint, history


def window_accuracy(
    model_or_checkpoint,
    manifest,
    window_seconds: float = 3.0,
    window_hop_seconds: float = 0.5,
    batch_size: int = 32,
) -> float:
    """Fraction of windows whose decoded category matches the center label."""
    model = model_or_checkpoint
    if isinstance(model, Checkpoint):
        model = model.build_model()
    samples = [load_sample(r) for r in read_manifest(manifest)]
    fs = model.config.sample_rate
    win = round(window_seconds * fs)
    hop = max(1, round(window_hop_seconds * fs))
    window_set = _WindowSet.build(samples, win, hop)
    correct = 0
    with ad.no_grad():
        for start in range(0, len(window_set.windows), batch_size):
            idx = list(range(start, min(start + batch_size, len(window_set.windows))))
            xs, ys = window_set.batch(idx)
            probs = model.window_probs(xs).data
            for row in range(len(idx)):
                got = decode(probs[row], model.config.threshold)
                want = Category.from_bits(ys[row, 0] > 0.5, ys[row, 1] > 0.5)
                correct += got is want
    return correct / len(window_set.windows)


# ---------------------------------------------------------------------------
# metrics


def precision_recall(predictions, labels, category: Category) -> tuple[float | None, float | None]:
    """One-vs-rest precision and recall; None when the denominator is empty."""
    if len(predictions) != len(labels):
        raise ValueError(
            f"predictions and labels differ in length: {len(predictions)} vs {len(labels)}"
        )
    tp = fp = fn = 0
    for pred, truth in zip(predictions, labels):
        if pred is category and truth is category:
            tp += 1
        elif pred is category:
            fp += 1
        elif truth is category:
            fn += 1
    precision = tp / (tp + fp) if (tp + fp) else None
    recall = tp / (tp + fn) if (tp + fn) else None
    return precision, recall


@dataclass
class EvalReport:
    """Per-category recall/precision (percent) plus the 4x4 confusion matrix."""

    confusion: np.ndarray  # [true, pred] in CATEGORY_ORDER
    decisions: int = 0

    CATEGORY_NAMES = {
        Category.BACKGROUND: "Background",
        Category.EXPERT: "Expert",
        Category.ASSISTANT: "Assistant",
        Category.MIXTURE: "Mixture",
    }

    def recall(self, category: Category) -> float | None:
        i = CATEGORY_ORDER.index(category)
        denom = self.confusion[i, :].sum()
        return 100.0 * self.confusion[i, i] / denom if denom else None

    def precision(self, category: Category) -> float | None:
        i = CATEGORY_ORDER.index(category)
        denom = self.confusion[:, i].sum()
        return 100.0 * self.confusion[i, i] / denom if denom else None

    def render_text(self) -> str:
        def fmt(v):
            return "    —" if v is None else f"{v:5.2f}"

        lines = [f"{'Category':<12} {'Rec. (%)':>9} {'Pre. (%)':>9}"]
        for cat in CATEGORY_ORDER:
            name = f"{self.CATEGORY_NAMES[cat]} ({cat.value})"
            lines.append(f"{name:<12} {fmt(self.recall(cat)):>9} {fmt(self.precision(cat)):>9}")
        lines.append(f"decisions scored: {self.decisions}")
        return "\n".join(lines)

    def to_dict(self) -> dict:
        return {
            "decisions": int(self.decisions),
            "confusion": {
                t.value: {p.value: int(self.confusion[i, j]) for j, p in enumerate(CATEGORY_ORDER)}
                for i, t in enumerate(CATEGORY_ORDER)
            },
            "per_class": {
                c.value: {"recall": self.recall(c), "precision": self.precision(c)}
                for c in CATEGORY_ORDER
            },
        }


def evaluate(
    checkpoint: Checkpoint,
    test_manifest,
    window_seconds: float = 3.0,
    hop_seconds: float = 0.1,
    batch_size: int = 32,
) -> EvalReport:
    """Score sliding-window decisions against ground truth at each timestamp."""
    model = checkpoint.build_model() if isinstance(checkpoint, Checkpoint) else checkpoint
    fs = model.config.sample_rate
    confusion = np.zeros((4, 4), dtype=np.int64)
    total = 0
    for record in read_manifest(test_manifest):
        if record.sample_rate != fs:
            raise ValueError(
                f"{record.wav}: sample rate {record.sample_rate} does not match checkpoint ({fs})"
            )
        sample = load_sample(record)
        track = infer_offline(
            sample.audio, model, window_seconds=window_seconds, hop_seconds=hop_seconds, batch_size=batch_size
        )
        for d in track.decisions:
            truth = sample.category_at(int(round(d.timestamp * fs)))
            confusion[CATEGORY_ORDER.index(truth), CATEGORY_ORDER.index(d.category)] += 1
            total += 1
    return EvalReport(confusion=confusion, decisions=total)
