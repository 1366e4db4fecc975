"""Audio-to-feature pipeline: resampling, cycle framing, MFCC extraction.

Every operation here is a pure function of its inputs; identical samples and
config produce bit-identical features.
"""

from __future__ import annotations

import struct
import warnings
from dataclasses import dataclass
from math import gcd

import numpy as np
import scipy.fft
import scipy.signal

from .errors import DataError, UsageError

CACHE_MAGIC = b"RSPF"
CACHE_VERSION = 1


@dataclass(frozen=True)
class DspConfig:
    target_rate: int = 4000
    clip_seconds: float = 3.0
    window_ms: float = 40.0
    overlap: float = 0.5
    fft_size: int = 256
    n_mels: int = 40
    n_mfcc_kept: int = 12
    log_floor: float = 1e-10
    mel_fmin: float = 0.0
    mel_fmax: float = 2000.0

    @property
    def window_samples(self) -> int:
        return int(round(self.window_ms * self.target_rate / 1000.0))

    @property
    def hop(self) -> int:
        return int(round(self.window_samples * (1.0 - self.overlap)))

    @property
    def clip_samples(self) -> int:
        return int(round(self.clip_seconds * self.target_rate))

    @property
    def n_frames(self) -> int:
        return 1 + (self.clip_samples - self.window_samples) // self.hop

    @property
    def n_bins(self) -> int:
        return self.fft_size // 2 + 1

    def validate(self) -> "DspConfig":
        if self.target_rate <= 0:
            raise UsageError("target_rate must be positive")
        if self.fft_size < self.window_samples:
            raise UsageError(
                f"fft_size {self.fft_size} smaller than window of {self.window_samples} samples"
            )
        if not (0.0 < self.overlap < 1.0):
            raise UsageError("overlap must lie in (0, 1)")
        if self.n_mfcc_kept >= self.n_mels:
            raise UsageError("n_mfcc_kept must be smaller than n_mels")
        if not (0.0 <= self.mel_fmin < self.mel_fmax <= self.target_rate / 2):
            raise UsageError("mel band must satisfy 0 <= fmin < fmax <= target_rate/2")
        return self


# ---------------------------------------------------------------------------
# resampling

_FILTER_CACHE: dict[tuple[int, int], tuple[int, int, np.ndarray]] = {}


def _polyphase_filter(src_rate: int, target_rate: int) -> tuple[int, int, np.ndarray]:
    """Kaiser-windowed sinc low-pass for the up/down pair, cached per rate.

    The transition band is confined to [0.90, 1.00] of the narrower Nyquist
    so sines up to 0.9 * Nyquist keep their amplitude (60 dB stop-band).
    """
    key = (src_rate, target_rate)
    if key not in _FILTER_CACHE:
        g = gcd(src_rate, target_rate)
        up, down = target_rate // g, src_rate // g
        fs_up = src_rate * up
        f_nyq = min(src_rate, target_rate) / 2.0
        cutoff = 0.95 * f_nyq
        width = 0.10 * f_nyq
        numtaps, beta = scipy.signal.kaiserord(60.0, width / (0.5 * fs_up))
        numtaps |= 1
        taps = scipy.signal.firwin(numtaps, cutoff, window=("kaiser", beta), fs=fs_up)
        _FILTER_CACHE[key] = (up, down, taps)
    return _FILTER_CACHE[key]


def resample(signal: np.ndarray, src_rate: int, target_rate: int = 4000) -> np.ndarray:
    """Resample to target_rate; output length is round(n * target/src)."""
    if src_rate <= 0:
        raise UsageError(f"source sample rate must be positive, got {src_rate}")
    signal = np.asarray(signal, dtype=np.float64)
    if src_rate == target_rate:
        return signal.copy()
    if src_rate < target_rate:
        warnings.warn(
            f"upsampling from {src_rate} Hz to {target_rate} Hz adds no information",
            stacklevel=2,
        )
    up, down, taps = _polyphase_filter(int(src_rate), int(target_rate))
    out = scipy.signal.resample_poly(signal, up, down, window=taps)
    n_target = int(np.floor(len(signal) * target_rate / src_rate + 0.5))
    if len(out) >= n_target:
        return out[:n_target]
    return np.pad(out, (0, n_target - len(out)))


# ---------------------------------------------------------------------------
# cycle framing

def extract_cycle(recording: np.ndarray, start_s: float, end_s: float, rate: int = 4000) -> np.ndarray:
    """Slice samples[round(start*rate) : round(end*rate)) out of a recording."""
    i0 = int(np.floor(start_s * rate + 0.5))
    i1 = int(np.floor(end_s * rate + 0.5))
    if i1 > len(recording):
        raise DataError(
            f"annotation end {end_s} s (sample {i1}) exceeds recording length {len(recording)}"
        )
    if i0 < 0 or i0 >= i1:
        raise DataError(f"invalid annotation window [{start_s}, {end_s}] s")
    return recording[i0:i1]


def fix_length(samples: np.ndarray, n_target: int = 12000) -> np.ndarray:
    """Truncate to n_target, or wrap-pad by repeating from the start."""
    samples = np.asarray(samples)
    if samples.size == 0:
        raise DataError("cannot fix the length of an empty cycle")
    if len(samples) >= n_target:
        return samples[:n_target].copy()
    reps = int(np.ceil(n_target / len(samples)))
    return np.tile(samples, reps)[:n_target]


# ---------------------------------------------------------------------------
# spectrogram / MFCC

def _frames(samples: np.ndarray, config: DspConfig) -> np.ndarray:
    n, hop, win = config.n_frames, config.hop, config.window_samples
    idx = hop * np.arange(n)[:, None] + np.arange(win)[None, :]
    return samples[idx]


def _magnitude_spectrogram(samples: np.ndarray, config: DspConfig) -> np.ndarray:
    """Hamming-windowed, zero-padded magnitude spectrum per frame: (n_bins, T)."""
    samples = np.asarray(samples, dtype=np.float64)
    if len(samples) != config.clip_samples:
        raise DataError(
            f"expected a fixed-length input of {config.clip_samples} samples, got {len(samples)}"
        )
    frames = _frames(samples, config) * np.hamming(config.window_samples)
    return np.abs(np.fft.rfft(frames, n=config.fft_size, axis=1)).T


def log_spectrogram(samples: np.ndarray, config: DspConfig = DspConfig()) -> np.ndarray:
    """Log-amplitude spectrogram, shape (fft_size/2 + 1, n_frames)."""
    return np.log(_magnitude_spectrogram(samples, config) + config.log_floor)


def hz_to_mel(f):
    return 2595.0 * np.log10(1.0 + np.asarray(f, dtype=np.float64) / 700.0)


def mel_to_hz(m):
    return 700.0 * (10.0 ** (np.asarray(m, dtype=np.float64) / 2595.0) - 1.0)


def mel_matrix(config: DspConfig = DspConfig()) -> np.ndarray:
    """Triangular mel filterbank, shape (n_mels, n_bins).

    Filter centers are equally spaced on the mel scale between mel_fmin and
    mel_fmax; triangles are evaluated at the FFT bin frequencies.
    """
    if not (0.0 <= config.mel_fmin < config.mel_fmax <= config.target_rate / 2):
        raise UsageError("mel band must satisfy 0 <= fmin < fmax <= target_rate/2")
    bin_freqs = np.arange(config.n_bins) * config.target_rate / config.fft_size
    edges = mel_to_hz(np.linspace(hz_to_mel(config.mel_fmin), hz_to_mel(config.mel_fmax), config.n_mels + 2))
    bank = np.zeros((config.n_mels, config.n_bins))
    for m in range(config.n_mels):
        left, center, right = edges[m], edges[m + 1], edges[m + 2]
        rising = (bin_freqs - left) / (center - left)
        falling = (right - bin_freqs) / (right - center)
        bank[m] = np.maximum(0.0, np.minimum(rising, falling))
    return bank


def mfcc(samples: np.ndarray, config: DspConfig = DspConfig(), mel: np.ndarray | None = None) -> np.ndarray:
    """MFCC matrix, shape (n_mfcc_kept, n_frames).

    Per frame: mel-band energies of the magnitude spectrum, log with an
    additive floor, orthonormal DCT-II over the mel axis, then coefficient 0
    (the energy-correlated one) is dropped and 1..n_mfcc_kept are kept.
    """
    if mel is None:
        mel = mel_matrix(config)
    energies = mel @ _magnitude_spectrogram(samples, config)
    cepstra = scipy.fft.dct(np.log(energies + config.log_floor), type=2, axis=0, norm="ortho")
    return cepstra[1 : config.n_mfcc_kept + 1]


# ---------------------------------------------------------------------------
# per-coefficient standardization

STD_FLOOR = 1e-8


@dataclass(frozen=True)
class Standardizer:
    mean: np.ndarray  # (n_mfcc_kept,)
    std: np.ndarray  # (n_mfcc_kept,), floored at STD_FLOOR


def fit_standardizer(features: list[np.ndarray]) -> Standardizer:
    """Per-coefficient mean/std over every column of the train matrices."""
    if not features:
        raise DataError("cannot fit a standardizer on an empty train set")
    stacked = np.concatenate([np.asarray(f, dtype=np.float64) for f in features], axis=1)
    mean = stacked.mean(axis=1)
    std = np.maximum(stacked.std(axis=1), STD_FLOOR)
    return Standardizer(mean, std)


def apply_standardizer(fm: np.ndarray, stats: Standardizer) -> np.ndarray:
    return (np.asarray(fm, dtype=np.float64) - stats.mean[:, None]) / stats.std[:, None]


# ---------------------------------------------------------------------------
# feature cache file format

@dataclass
class CacheItem:
    recording_id: str
    cycle_index: int
    binary_label: int  # 0 normal, 1 anomalous
    features: np.ndarray  # (rows, cols) float32


def write_feature_cache(path: str, items: list[CacheItem], rows: int, cols: int) -> None:
    """Write the little-endian 'RSPF' cache: header then per-item records."""
    with open(path, "wb") as fh:
        fh.write(CACHE_MAGIC)
        fh.write(struct.pack("<IIII", CACHE_VERSION, len(items), rows, cols))
        for item in items:
            if item.features.shape != (rows, cols):
                raise DataError(
                    f"feature shape {item.features.shape} does not match cache shape {(rows, cols)}"
                )
            rid = item.recording_id.encode("utf-8")
            fh.write(struct.pack("<I", len(rid)))
            fh.write(rid)
            fh.write(struct.pack("<IB", item.cycle_index, item.binary_label))
            fh.write(np.ascontiguousarray(item.features, dtype="<f4").tobytes())


def read_feature_cache(path: str) -> tuple[list[CacheItem], int, int]:
    """Read a feature cache; returns (items, rows, cols)."""
    try:
        with open(path, "rb") as fh:
            magic = fh.read(4)
            if magic != CACHE_MAGIC:
                raise DataError(f"{path}: bad magic {magic!r}, not a feature cache")
            version, n_items, rows, cols = struct.unpack("<IIII", fh.read(16))
            if version != CACHE_VERSION:
                raise DataError(f"{path}: unsupported cache version {version}")
            items = []
            for _ in range(n_items):
                (rid_len,) = struct.unpack("<I", fh.read(4))
                rid = fh.read(rid_len).decode("utf-8")
                cycle_index, label = struct.unpack("<IB", fh.read(5))
                raw = fh.read(4 * rows * cols)
                if len(raw) != 4 * rows * cols:
                    raise DataError(f"{path}: truncated cache item")
                feats = np.frombuffer(raw, dtype="<f4").reshape(rows, cols).copy()
                items.append(CacheItem(rid, cycle_index, label, feats))
    except OSError as exc:
        raise DataError(f"cannot read feature cache {path!r}: {exc}") from exc
    return items, rows, cols
