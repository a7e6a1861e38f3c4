"""Sliding-window inference: one four-category decision per hop.

Each decision classifies a 3 s window and is tagged to the window's
middle frame. Offline inference covers the whole file (slots whose
centered window would cross an audio boundary replicate the nearest
valid window's decision); streaming inference emits decisions
incrementally once the first full window has arrived, so per-decision
latency is half a window plus compute.

Decision slots live on the absolute grid i*hop samples, which makes
streaming and offline timestamps identical. One streaming session is
single-threaded and stateful; any number of sessions may share one
frozen checkpoint.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .model import Category, Checkpoint, MultiScaleTCN, decode


class AudioTooShortError(ValueError):
    """The audio is shorter than one analysis window."""


class SessionClosedError(RuntimeError):
    """feed() was called after close()."""


@dataclass(frozen=True)
class Decision:
    timestamp: float  # seconds; the tagged window-middle time of this slot
    category: Category
    probs: np.ndarray  # (assistant, expert)

    def line(self) -> str:
        return f"{self.timestamp:.6f},{self.category.value},{self.probs[0]:.6f},{self.probs[1]:.6f}"


@dataclass
class DecisionTrack:
    """An ordered sequence of per-hop decisions."""

    hop_seconds: float
    decisions: list[Decision] = field(default_factory=list)

    def __len__(self):
        return len(self.decisions)

    def categories(self) -> list[Category]:
        return [d.category for d in self.decisions]

    def to_lines(self) -> list[str]:
        return [d.line() for d in self.decisions]


def _resolve_model(checkpoint) -> MultiScaleTCN:
    if isinstance(checkpoint, MultiScaleTCN):
        return checkpoint
    if isinstance(checkpoint, Checkpoint):
        return checkpoint.build_model()
    raise TypeError(f"expected a Checkpoint or model, got {type(checkpoint).__name__}")


def _window_geometry(config, window_seconds: float, hop_seconds: float):
    fs = config.sample_rate
    win = round(window_seconds * fs)
    hop = max(1, round(hop_seconds * fs))
    if win < config.frame_len:
        raise ValueError(
            f"window of {window_seconds} s is shorter than one encoder frame ({config.frame_len} samples)"
        )
    return fs, win, hop, win // 2


def _classify_windows(model: MultiScaleTCN, audio: np.ndarray, centers, win: int, batch_size: int):
    """Probabilities for the windows centered at ``centers`` (absolute samples)."""
    half = win // 2
    probs = {}
    centers = list(centers)
    with ad.no_grad():
        for start in range(0, len(centers), batch_size):
            group = centers[start : start + batch_size]
            batch = np.stack([audio[c - half : c - half + win] for c in group])
            out = model.window_probs(batch).data
            for c, p in zip(group, out):
                probs[c] = p
    return probs


def infer_offline(
    audio,
    checkpoint,
    window_seconds: float = 3.0,
    hop_seconds: float = 0.1,
    batch_size: int = 32,
) -> DecisionTrack:
    """One decision per hop slot over the entire file.

    Produces ceil(duration/hop) decisions at timestamps i*hop. Slots
    whose centered window would cross an audio boundary take the nearest
    valid window's decision.
    """
    model = _resolve_model(checkpoint)
    fs, win, hop, half = _window_geometry(model.config, window_seconds, hop_seconds)
    audio = np.asarray(audio, dtype=np.float32)
    s = len(audio)
    if s < win:
        raise AudioTooShortError(f"audio is {s} samples, shorter than one {win}-sample window")

    n_slots = -(-s // hop)  # ceil
    lo, hi = half, s - win + half
    centers = [min(max(i * hop, lo), hi) for i in range(n_slots)]
    probs = _classify_windows(model, audio, sorted(set(centers)), win, batch_size)

    track = DecisionTrack(hop_seconds=hop / fs)
    for i, c in enumerate(centers):
        p = probs[c]
        track.decisions.append(
            Decision(timestamp=(i * hop) / fs, category=decode(p, model.config.threshold), probs=p)
        )
    return track


class StreamingSession:
    """Rolling-window causal inference over an incrementally fed signal.

    Decisions appear on the same i*hop grid as infer_offline; the first
    one is emitted once the first full window has arrived, tagged to
    that window's middle time.
    """

    def __init__(self, checkpoint, window_seconds: float = 3.0, hop_seconds: float = 0.1):
        self.model = _resolve_model(checkpoint)
        if not self.model.config.causal:
            raise ValueError("streaming inference requires a causal checkpoint (causal=True)")
        self.fs, self.win, self.hop, self.half = _window_geometry(
            self.model.config, window_seconds, hop_seconds
        )
        self.track = DecisionTrack(hop_seconds=self.hop / self.fs)
        # first slot on the i*hop grid whose centered window fits
        self._next_slot = -(-self.half // self.hop)
        self._buffer = np.zeros(0, dtype=np.float32)
        self._buffer_start = 0  # absolute index of buffer[0]
        self._received = 0
        self._closed = False

    def feed(self, samples) -> list[Decision]:
        """Append samples; return the decisions that became available."""
        if self._closed:
            raise SessionClosedError("cannot feed a closed streaming session")
        samples = np.asarray(samples, dtype=np.float32).reshape(-1)
        self._buffer = np.concatenate([self._buffer, samples])
        self._received += len(samples)
        emitted = []
        while True:
            center = self._next_slot * self.hop
            start = center - self.half
            if start + self.win > self._received:
                break
            rel = start - self._buffer_start
            window = self._buffer[rel : rel + self.win]
            with ad.no_grad():
                p = self.model.window_probs(window).data
            decision = Decision(
                timestamp=center / self.fs,
                category=decode(p, self.model.config.threshold),
                probs=p,
            )
            self.track.decisions.append(decision)
            emitted.append(decision)
            self._next_slot += 1
            keep_from = self._next_slot * self.hop - self.half
            if keep_from > self._buffer_start:
                self._buffer = self._buffer[keep_from - self._buffer_start :]
                self._buffer_start = keep_from
        return emitted

    def close(self) -> DecisionTrack:
        self._closed = True
        return self.track


def infer_streaming(
    frames,
    checkpoint,
    window_seconds: float = 3.0,
    hop_seconds: float = 0.1,
) -> DecisionTrack:
    """Run a streaming session over an iterable of sample chunks."""
    session = StreamingSession(checkpoint, window_seconds, hop_seconds)
    for chunk in frames:
        session.feed(chunk)
    return session.close()


def decisions_to_segments(track: DecisionTrack) -> list[tuple[float, float, Category]]:
    """Merge consecutive identical decisions into (start_s, end_s, category) runs.

    Slot i covers [t_i, t_i + hop); the output tiles the track's span
    with no gaps or overlaps.
    """
    if not track.decisions:
        raise ValueError("cannot segment an empty decision track")
    segments = []
    run_start = track.decisions[0].timestamp
    run_cat = track.decisions[0].category
    for d in track.decisions[1:]:
        if d.category is not run_cat:
            segments.append((run_start, d.timestamp, run_cat))
            run_start = d.timestamp
            run_cat = d.category
    segments.append((run_start, track.decisions[-1].timestamp + track.hop_seconds, run_cat))
    return segments


def segments_to_lines(segments) -> list[str]:
    return [f"{start:.6f},{end:.6f},{cat.value}" for start, end, cat in segments]
