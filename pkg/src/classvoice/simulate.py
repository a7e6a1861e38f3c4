"""Simulated classroom scenes: room impulse responses, mixing, labeled samples.

A shoebox room with uniform Sabine absorption is simulated with the
image-source method; fractional delays are rendered with an 81-tap
Hann-windowed sinc. Utterances of the four categories are rendered by
convolving dry clips with the source RIRs, imposing the assistant/expert
power ratio (mixture only) and the expert/noise SNR on the reverberant
signals, then concatenated in seeded random order into 12 s training
samples.

Everything is driven by 64-bit seeds: identical seeds give identical
bytes. Sample generation is embarrassingly parallel in principle (each
sample owns an RNG stream derived from (seed, index)); this
implementation generates sequentially and shares an RIR cache.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.signal import fftconvolve, lfilter

from .model import CATEGORY_ORDER, Category
from .wavio import WavFile, read_wav, write_wav

SPEED_OF_SOUND = 343.0
MIN_SOURCE_MIC_DISTANCE = 0.05
SINC_KERNEL_TAPS = 81
_IMAGE_CHUNK = 4096


class RoomError(ValueError):
    """Invalid geometry or an infeasible room/T60 combination."""


class CorpusError(ValueError):
    """A corpus directory or clip cannot be used."""


@dataclass(frozen=True)
class RoomSpec:
    """Shoebox room: dimensions in meters, target reverberation time."""

    dims: tuple[float, float, float]
    t60: float
    sound_speed: float = SPEED_OF_SOUND

    def __post_init__(self):
        if len(self.dims) != 3 or any(d <= 0 for d in self.dims):
            raise RoomError(f"room dimensions must be three positive lengths, got {self.dims}")
        if not 0.05 <= self.t60 <= 3.0:
            raise RoomError(f"t60 must lie in [0.05, 3.0] s, got {self.t60}")
        if self.sound_speed <= 0:
            raise RoomError(f"sound speed must be positive, got {self.sound_speed}")

    @property
    def volume(self) -> float:
        x, y, z = self.dims
        return x * y * z

    @property
    def surface_area(self) -> float:
        x, y, z = self.dims
        return 2.0 * (x * y + x * z + y * z)


@dataclass(frozen=True)
class SceneSpec:
    """Geometry and level targets for one simulated scene.

    power_ratio_db is assistant over expert (mixture utterances only);
    snr_db is expert over noise. The microphone hangs 0.01 m below the
    assistant position.
    """

    room: RoomSpec
    expert_pos: tuple[float, float, float]
    assistant_pos: tuple[float, float, float]
    mic_pos: tuple[float, float, float]
    power_ratio_db: float
    snr_db: float
    seed: int

    def __post_init__(self):
        for name, pos in (
            ("expert_pos", self.expert_pos),
            ("assistant_pos", self.assistant_pos),
            ("mic_pos", self.mic_pos),
        ):
            _check_inside(self.room, pos, name)
        drop = self.assistant_pos[2] - self.mic_pos[2]
        if abs(drop - 0.01) > 1e-9:
            raise RoomError(
                f"microphone must sit 0.01 m below the assistant, got drop {drop:.6f} m"
            )
        if self.seed < 0:
            raise ValueError(f"scene seed must be non-negative, got {self.seed}")

    def to_dict(self) -> dict:
        return {
            "room": {
                "dims": list(self.room.dims),
                "t60": self.room.t60,
                "sound_speed": self.room.sound_speed,
            },
            "expert_pos": list(self.expert_pos),
            "assistant_pos": list(self.assistant_pos),
            "mic_pos": list(self.mic_pos),
            "power_ratio_db": self.power_ratio_db,
            "snr_db": self.snr_db,
            "seed": int(self.seed),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "SceneSpec":
        room = RoomSpec(
            dims=tuple(d["room"]["dims"]),
            t60=d["room"]["t60"],
            sound_speed=d["room"].get("sound_speed", SPEED_OF_SOUND),
        )
        return cls(
            room=room,
            expert_pos=tuple(d["expert_pos"]),
            assistant_pos=tuple(d["assistant_pos"]),
            mic_pos=tuple(d["mic_pos"]),
            power_ratio_db=d["power_ratio_db"],
            snr_db=d["snr_db"],
            seed=int(d["seed"]),
        )


def _check_inside(room: RoomSpec, pos, name: str):
    if len(pos) != 3:
        raise RoomError(f"{name} must have three coordinates, got {pos}")
    for axis, (p, d) in enumerate(zip(pos, room.dims)):
        if not 0.0 < p < d:
            raise RoomError(f"{name} coordinate {axis} = {p} lies outside the room (0, {d})")


@dataclass
class LabeledSample:
    """12 s of audio tiled by four 3 s segments, one per category."""

    audio: np.ndarray
    segments: list  # (Category, start_sample, end_sample), half-open
    sample_rate: int
    peak_scale: float = 1.0

    def __post_init__(self):
        seg_len = 3 * self.sample_rate
        if len(self.segments) != 4:
            raise ValueError(f"expected four segments, got {len(self.segments)}")
        cats = [seg[0] for seg in self.segments]
        if sorted(c.value for c in cats) != [c.value for c in CATEGORY_ORDER]:
            raise ValueError(f"each category must appear exactly once, got {[str(c) for c in cats]}")
        pos = 0
        for cat, start, end in self.segments:
            if start != pos or end - start != seg_len:
                raise ValueError(
                    f"segments must tile the audio in 3 s pieces; segment {cat} spans [{start}, {end})"
                )
            pos = end
        if pos != len(self.audio) or pos != 12 * self.sample_rate:
            raise ValueError(f"audio must be exactly 12 s ({12 * self.sample_rate} samples), got {len(self.audio)}")

    def category_at(self, sample_index: int) -> Category:
        if not 0 <= sample_index < len(self.audio):
            raise ValueError(f"sample index {sample_index} outside [0, {len(self.audio)})")
        for cat, start, end in self.segments:
            if start <= sample_index < end:
                return cat
        raise AssertionError("segments no longer tile the audio")


# ---------------------------------------------------------------------------
# room acoustics


def sabine_absorption(room: RoomSpec) -> float:
    """Uniform wall absorption from the Sabine relation 0.161*V/(S*T60)."""
    alpha = 0.161 * room.volume / (room.surface_area * room.t60)
    if alpha > 1.0:
        raise RoomError(
            f"t60 {room.t60} s is infeasible for this room (Sabine absorption {alpha:.3f} > 1)"
        )
    return alpha


def image_source_rir(
    room: RoomSpec,
    source,
    mic,
    sample_rate: int,
    direct_only: bool = False,
) -> np.ndarray:
    """Image-source room impulse response, ceil(t60*fs) samples long.

    Walls share the uniform reflection coefficient -sqrt(1 - alpha) per
    bounce (alpha from Sabine; the negated coefficient avoids the
    coherent low-frequency pile-up of the all-positive image method,
    which would inflate the measured decay time). Each image deposits an
    81-tap Hann-windowed sinc at its fractional delay, scaled by
    beta**bounces/distance; the direct path is scaled 1/distance.
    ``direct_only`` keeps just the direct path (for geometry
    validation). The image lattice covers every path up to
    t60 * sound_speed meters; later arrivals sit below -60 dB by
    definition of T60.
    """
    src = np.asarray(source, dtype=np.float64)
    mc = np.asarray(mic, dtype=np.float64)
    _check_inside(room, src, "source")
    _check_inside(room, mc, "microphone")
    dist = float(np.linalg.norm(src - mc))
    if dist < MIN_SOURCE_MIC_DISTANCE:
        raise RoomError(
            f"source and microphone are {dist:.3f} m apart; minimum is {MIN_SOURCE_MIC_DISTANCE} m"
        )
    fs = int(sample_rate)
    c = room.sound_speed
    length = int(np.ceil(room.t60 * fs))
    alpha = sabine_absorption(room)
    beta = -np.sqrt(1.0 - alpha)
    half = (SINC_KERNEL_TAPS - 1) // 2
    h = np.zeros(length + 2 * SINC_KERNEL_TAPS, dtype=np.float64)

    if direct_only:
        _deposit(h, np.array([dist / c * fs]), np.array([1.0 / dist]))
        return h[SINC_KERNEL_TAPS : SINC_KERNEL_TAPS + length].copy()

    dims = np.asarray(room.dims, dtype=np.float64)
    orders = np.ceil(c * room.t60 / (2.0 * dims)).astype(int)
    axes_n = [np.arange(-o, o + 1) for o in orders]
    max_delay = (length - 1) + half

    for px in (0, 1):
        for py in (0, 1):
            for pz in (0, 1):
                par = (px, py, pz)
                coords = []
                gains_ax = []
                for ax in range(3):
                    n = axes_n[ax]
                    coord = (1 - 2 * par[ax]) * src[ax] + 2.0 * n * dims[ax]
                    bounces = np.abs(n + par[ax]) + np.abs(n)
                    coords.append(coord - mc[ax])
                    gains_ax.append(beta**bounces)
                d2 = (
                    coords[0][:, None, None] ** 2
                    + coords[1][None, :, None] ** 2
                    + coords[2][None, None, :] ** 2
                )
                g = (
                    gains_ax[0][:, None, None]
                    * gains_ax[1][None, :, None]
                    * gains_ax[2][None, None, :]
                )
                d = np.sqrt(d2).reshape(-1)
                g = g.reshape(-1)
                delays = d / c * fs
                keep = delays <= max_delay
                _deposit(h, delays[keep], g[keep] / d[keep])
    return h[SINC_KERNEL_TAPS : SINC_KERNEL_TAPS + length].copy()


_TAP_OFFSETS = np.arange(SINC_KERNEL_TAPS)
_TAP_COS = np.cos(2.0 * np.pi * _TAP_OFFSETS / SINC_KERNEL_TAPS)
_TAP_SIN = np.sin(2.0 * np.pi * _TAP_OFFSETS / SINC_KERNEL_TAPS)
_TAP_SIGN = np.where(_TAP_OFFSETS % 2 == 0, 1.0, -1.0)


def _deposit(h: np.ndarray, delays: np.ndarray, gains: np.ndarray):
    """Accumulate Hann-windowed sinc kernels at fractional sample delays.

    ``h`` must carry SINC_KERNEL_TAPS guard samples on each side so no
    index masking is needed. The window and sinc are expanded with angle
    addition so only three trig evaluations are needed per image instead
    of two per tap.
    """
    taps = SINC_KERNEL_TAPS
    half = (taps - 1) // 2
    for start in range(0, len(delays), _IMAGE_CHUNK):
        dl = delays[start : start + _IMAGE_CHUNK]
        gn = gains[start : start + _IMAGE_CHUNK]
        base = np.ceil(dl - half).astype(np.int64)
        u = base - dl  # fractional offset of the first tap, in [-half, -half+1)
        t = u[:, None] + _TAP_OFFSETS[None, :]
        cf = np.cos(2.0 * np.pi * u / taps)
        sf = np.sin(2.0 * np.pi * u / taps)
        window = 0.5 * (1.0 + cf[:, None] * _TAP_COS[None, :] - sf[:, None] * _TAP_SIN[None, :])
        sin_pi_u = np.sin(np.pi * u)  # sin(pi*t) = sin(pi*u) * (-1)^tap
        with np.errstate(divide="ignore", invalid="ignore"):
            sinc = (sin_pi_u[:, None] * _TAP_SIGN[None, :]) / (np.pi * t)
        exact = np.abs(t) < 1e-12
        if exact.any():
            sinc[exact] = 1.0
        kernel = window * sinc * gn[:, None]
        idx = base[:, None] + (_TAP_OFFSETS[None, :] + taps)
        h += np.bincount(idx.ravel(), weights=kernel.ravel(), minlength=len(h))


class RirCache:
    """Memoizes RIRs by exact scene geometry; safe because grids are discrete."""

    def __init__(self):
        self._store = {}

    def get(self, room: RoomSpec, source, mic, sample_rate: int) -> np.ndarray:
        key = (room.dims, room.t60, room.sound_speed, tuple(source), tuple(mic), int(sample_rate))
        if key not in self._store:
            self._store[key] = image_source_rir(room, source, mic, sample_rate)
        return self._store[key]


# ---------------------------------------------------------------------------
# level control


def scale_to_snr(reference: np.ndarray, interferer: np.ndarray, snr_db: float) -> np.ndarray:
    """Scale the interferer so 10*log10(P_ref/P_interferer) equals snr_db."""
    reference = np.asarray(reference, dtype=np.float64)
    interferer = np.asarray(interferer, dtype=np.float64)
    p_ref = float(np.mean(reference**2))
    p_int = float(np.mean(interferer**2))
    if p_ref <= 1e-12 or p_int <= 1e-12:
        raise ValueError("scale_to_snr needs non-silent signals (power > 1e-12)")
    gain = np.sqrt(p_ref / (p_int * 10.0 ** (snr_db / 10.0)))
    return gain * interferer


def _power(x: np.ndarray) -> float:
    return float(np.mean(np.asarray(x, dtype=np.float64) ** 2))


# ---------------------------------------------------------------------------
# utterance rendering


def render_components(
    category: Category,
    expert_dry: np.ndarray,
    assistant_dry: np.ndarray,
    noise: np.ndarray,
    scene: SceneSpec,
    sample_rate: int,
    duration_seconds: float = 3.0,
    rng: np.random.Generator | None = None,
    rir_cache: RirCache | None = None,
) -> dict[str, np.ndarray]:
    """Render the active sources of one utterance separately.

    Returns a dict with keys among {"expert", "assistant", "noise"}; the
    utterance is their sample-wise sum. The noise level is always set
    relative to the reverberant expert (a virtual one when the expert is
    inactive), keeping the noise floor consistent across categories.
    """
    if rng is None:
        rng = np.random.default_rng(np.random.SeedSequence([scene.seed, int(category.value, 2)]))
    cache = rir_cache or RirCache()
    fs = int(sample_rate)
    n = round(duration_seconds * fs)

    expert_crop = _crop(expert_dry, n, rng, "expert")
    assistant_crop = _crop(assistant_dry, n, rng, "assistant")
    noise_crop = _crop(noise, n, rng, "noise")

    rir_expert = cache.get(scene.room, scene.expert_pos, scene.mic_pos, fs)
    rir_assistant = cache.get(scene.room, scene.assistant_pos, scene.mic_pos, fs)
    rev_expert = fftconvolve(expert_crop, rir_expert)[:n]

    components: dict[str, np.ndarray] = {}
    if category.expert_bit:
        components["expert"] = rev_expert
    if category.assistant_bit:
        rev_assistant = fftconvolve(assistant_crop, rir_assistant)[:n]
        if category is Category.MIXTURE:
            gain = np.sqrt(
                _power(rev_expert) * 10.0 ** (scene.power_ratio_db / 10.0) / _power(rev_assistant)
            )
            rev_assistant = gain * rev_assistant
        components["assistant"] = rev_assistant
    components["noise"] = scale_to_snr(rev_expert, noise_crop, scene.snr_db)
    return components


def render_utterance(
    category: Category,
    expert_dry: np.ndarray,
    assistant_dry: np.ndarray,
    noise: np.ndarray,
    scene: SceneSpec,
    sample_rate: int,
    duration_seconds: float = 3.0,
    rng: np.random.Generator | None = None,
    rir_cache: RirCache | None = None,
) -> np.ndarray:
    """One 3 s utterance of the given category at the scene's level targets."""
    parts = render_components(
        category, expert_dry, assistant_dry, noise, scene, sample_rate, duration_seconds, rng, rir_cache
    )
    n = round(duration_seconds * int(sample_rate))
    out = np.zeros(n, dtype=np.float64)
    for piece in parts.values():
        out += piece
    return out


def _crop(clip: np.ndarray, n: int, rng: np.random.Generator, name: str) -> np.ndarray:
    clip = np.asarray(clip, dtype=np.float64)
    if len(clip) < n:
        raise CorpusError(f"{name} clip has {len(clip)} samples, shorter than the required {n}")
    start = int(rng.integers(0, len(clip) - n + 1))
    return clip[start : start + n]


# ---------------------------------------------------------------------------
# corpora


class Corpus:
    """A directory of mono WAV clips, loaded lazily and cached."""

    def __init__(self, path, sample_rate: int | None = None):
        self.path = Path(path)
        self.files = sorted(self.path.glob("*.wav"))
        if not self.files:
            raise CorpusError(f"corpus directory {self.path} contains no .wav files")
        self.sample_rate = sample_rate
        self._cache: dict[int, np.ndarray] = {}

    def __len__(self):
        return len(self.files)

    def load(self, index: int) -> np.ndarray:
        if index not in self._cache:
            wav = read_wav(self.files[index])
            if self.sample_rate is not None and wav.sample_rate != self.sample_rate:
                raise CorpusError(
                    f"{self.files[index]} has sample rate {wav.sample_rate}, expected {self.sample_rate}"
                )
            self._cache[index] = wav.samples.astype(np.float64)
        return self._cache[index]

    def pick(self, rng: np.random.Generator, min_samples: int) -> np.ndarray:
        index = int(rng.integers(0, len(self.files)))
        clip = self.load(index)
        if len(clip) < min_samples:
            raise CorpusError(
                f"{self.files[index]} is {len(clip)} samples long, shorter than the required {min_samples}"
            )
        return clip


@dataclass
class Corpora:
    """The three source pools a scene draws from."""

    expert: Corpus
    assistant: Corpus
    noise: Corpus

    @classmethod
    def from_dirs(cls, expert_dir, assistant_dir, noise_dir, sample_rate: int | None = None):
        return cls(
            expert=Corpus(expert_dir, sample_rate),
            assistant=Corpus(assistant_dir, sample_rate),
            noise=Corpus(noise_dir, sample_rate),
        )


# ---------------------------------------------------------------------------
# sample and dataset generation


def make_sample(
    corpora: Corpora,
    scene: SceneSpec,
    sample_rate: int = 16000,
    rir_cache: RirCache | None = None,
) -> LabeledSample:
    """Render the four categories and concatenate them in seeded random order."""
    cache = rir_cache or RirCache()
    fs = int(sample_rate)
    seg = 3 * fs
    ss = np.random.SeedSequence([int(scene.seed)])
    children = ss.spawn(5)
    order = np.random.default_rng(children[0]).permutation(4)
    cats = [CATEGORY_ORDER[i] for i in order]

    parts = []
    segments = []
    for slot, cat in enumerate(cats):
        rng = np.random.default_rng(children[1 + slot])
        expert = corpora.expert.pick(rng, seg)
        assistant = corpora.assistant.pick(rng, seg)
        noise = corpora.noise.pick(rng, seg)
        parts.append(
            render_utterance(cat, expert, assistant, noise, scene, fs, 3.0, rng, cache)
        )
        segments.append((cat, slot * seg, (slot + 1) * seg))

    audio = np.concatenate(parts)
    peak = float(np.max(np.abs(audio))) if len(audio) else 0.0
    scale = 0.9 / peak if peak > 1.0 else 1.0
    audio = (audio * scale).astype(np.float32)
    return LabeledSample(audio=audio, segments=segments, sample_rate=fs, peak_scale=scale)


@dataclass(frozen=True)
class SceneGrid:
    """The discrete parameter grid scenes are drawn from.

    The expert is fixed; the assistant moves along x at fixed y/z. The
    microphone hangs 0.01 m below the assistant and, because a
    source-on-top-of-mic geometry is degenerate for the image-source
    model, 0.08 m in front of it along y (a neckline-mic offset).
    """

    room_dims: tuple[float, float, float] = (5.0, 6.0, 3.5)
    sound_speed: float = SPEED_OF_SOUND
    t60_values: tuple = (0.4, 0.5, 0.6, 0.7, 0.8, 0.9)
    snr_values: tuple = tuple(float(v) for v in range(5, 16))
    power_ratio_values: tuple = tuple(float(v) for v in range(3, 13))
    assistant_x_values: tuple = (0.5, 1.0, 1.5, 2.0, 2.5, 3.0, 3.5, 4.0, 4.5)
    assistant_y: float = 1.0
    assistant_z: float = 1.6
    expert_pos: tuple[float, float, float] = (2.5, 0.5, 2.0)
    mic_forward_offset: float = 0.08
    mic_drop: float = 0.01

    def sample(self, rng: np.random.Generator) -> SceneSpec:
        t60 = self.t60_values[int(rng.integers(len(self.t60_values)))]
        snr = self.snr_values[int(rng.integers(len(self.snr_values)))]
        ratio = self.power_ratio_values[int(rng.integers(len(self.power_ratio_values)))]
        ax = self.assistant_x_values[int(rng.integers(len(self.assistant_x_values)))]
        assistant = (ax, self.assistant_y, self.assistant_z)
        mic = (ax, self.assistant_y + self.mic_forward_offset, self.assistant_z - self.mic_drop)
        seed = int(rng.integers(0, 2**63 - 1))
        return SceneSpec(
            room=RoomSpec(dims=self.room_dims, t60=t60, sound_speed=self.sound_speed),
            expert_pos=self.expert_pos,
            assistant_pos=assistant,
            mic_pos=mic,
            power_ratio_db=ratio,
            snr_db=snr,
            seed=seed,
        )


def generate_dataset(
    corpora: Corpora,
    grid: SceneGrid,
    counts: tuple[int, int, int],
    out_dir,
    seed: int,
    sample_rate: int = 16000,
) -> dict[str, Path]:
    """Write WAV + label sidecar pairs and one JSONL manifest per split.

    counts is (train, valid, test). Every record carries the relative
    file paths, the peak-normalization scale, and the full SceneSpec.
    Returns {split: manifest_path}.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    cache = RirCache()
    master = np.random.SeedSequence(int(seed))
    split_seeds = master.spawn(3)
    manifests: dict[str, Path] = {}
    for (split, count), split_ss in zip(
        zip(("train", "valid", "test"), counts), split_seeds
    ):
        split_dir = out / split
        split_dir.mkdir(exist_ok=True)
        records = []
        children = split_ss.spawn(count)
        for i in range(count):
            rng = np.random.default_rng(children[i])
            scene = grid.sample(rng)
            sample = make_sample(corpora, scene, sample_rate, cache)
            wav_rel = f"{split}/sample_{i:05d}.wav"
            labels_rel = f"{split}/sample_{i:05d}.labels"
            write_wav(out / wav_rel, WavFile(sample_rate=sample.sample_rate, samples=sample.audio))
            lines = [f"{start},{end},{cat.value}" for cat, start, end in sample.segments]
            (out / labels_rel).write_text("\n".join(lines) + "\n")
            records.append(
                {
                    "wav": wav_rel,
                    "labels": labels_rel,
                    "sample_rate": sample.sample_rate,
                    "peak_scale": sample.peak_scale,
                    "scene": scene.to_dict(),
                }
            )
        # written via .partial + rename so an interrupted run never leaves a
        # complete-looking manifest
        manifest_path = out / f"manifest_{split}.jsonl"
        partial = out / f"manifest_{split}.jsonl.partial"
        with open(partial, "w") as f:
            for rec in records:
                f.write(json.dumps(rec, sort_keys=True) + "\n")
        os.replace(partial, manifest_path)
        manifests[split] = manifest_path
    return manifests


# ---------------------------------------------------------------------------
# synthetic corpora (for demos and tests; any WAV directory works instead)


def synthesize_speech_clip(
    rng: np.random.Generator,
    seconds: float,
    sample_rate: int,
    f0_range: tuple[float, float] = (100.0, 220.0),
) -> np.ndarray:
    """A voice-like harmonic clip: vibrato f0, 1/h harmonic rolloff, syllabic AM."""
    fs = int(sample_rate)
    n = round(seconds * fs)
    t = np.arange(n) / fs
    f0 = rng.uniform(*f0_range)
    vib = 1.0 + 0.03 * np.sin(2 * np.pi * rng.uniform(2.0, 5.0) * t + rng.uniform(0, 2 * np.pi))
    phase = 2 * np.pi * np.cumsum(f0 * vib) / fs
    sig = np.zeros(n)
    for harm in range(1, 9):
        sig += np.sin(harm * phase + rng.uniform(0, 2 * np.pi)) / harm
    syllable = np.sin(2 * np.pi * rng.uniform(2.0, 4.0) * t + rng.uniform(0, 2 * np.pi)) ** 2
    sig *= 0.25 + 0.75 * syllable
    sig += 0.01 * rng.standard_normal(n)
    return (0.5 * sig / np.max(np.abs(sig))).astype(np.float64)


def synthesize_noise_clip(rng: np.random.Generator, seconds: float, sample_rate: int) -> np.ndarray:
    """Broadband background: low-passed white noise with a white floor."""
    n = round(seconds * int(sample_rate))
    white = rng.standard_normal(n)
    low = lfilter([1.0], [1.0, -0.97], white)
    low /= np.max(np.abs(low))
    mix = 0.8 * low + 0.2 * white / np.max(np.abs(white))
    return (0.5 * mix / np.max(np.abs(mix))).astype(np.float64)


def write_synthetic_corpus(
    directory,
    count: int,
    seconds: float,
    sample_rate: int,
    seed: int,
    kind: str = "speech",
    f0_range: tuple[float, float] = (100.0, 220.0),
) -> Path:
    """Write ``count`` deterministic synthetic clips into a corpus directory."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    for i in range(count):
        rng = np.random.default_rng(np.random.SeedSequence([int(seed), i]))
        if kind == "speech":
            clip = synthesize_speech_clip(rng, seconds, sample_rate, f0_range)
        elif kind == "noise":
            clip = synthesize_noise_clip(rng, seconds, sample_rate)
        else:
            raise ValueError(f"unknown corpus kind {kind!r}")
        write_wav(directory / f"clip_{i:03d}.wav", WavFile(sample_rate=int(sample_rate), samples=clip))
    return directory
