"""Synthetic ICBHI-format corpus for dataset-free testing.

Normal cycles are low-pass filtered noise shaped by an inhale/exhale
envelope. Anomalous cycles add either impulsive crackle bursts (short,
explosive transients) or a sustained tonal wheeze between 100 and 1000 Hz,
or both. Generator parameters are module constants so the acceptance
thresholds that depend on them stay auditable.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass

import numpy as np
import scipy.io.wavfile
import scipy.signal

from .errors import UsageError

SAMPLE_RATE = 8000  # generated above the pipeline rate to exercise resampling
CYCLES_PER_RECORDING = 5
RECORDINGS_PER_PATIENT = 2
FIRST_PATIENT_ID = 101
TRAIN_PATIENT_FRACTION = 0.6
GAP_SECONDS = 0.15

CYCLE_SECONDS = (2.0, 4.0)
BREATH_BAND_HZ = 450.0  # low-pass corner of the breathing noise
BREATH_GAIN = (0.22, 0.38)
ENVELOPE_FLOOR = 0.08

CRACKLE_COUNT = (5, 9)
CRACKLE_SECONDS = 0.012  # well under the 20 ms transient budget
CRACKLE_DECAY_SECONDS = 0.003
CRACKLE_FREQ_HZ = (700.0, 1600.0)
CRACKLE_GAIN = (2.5, 4.0)  # relative to the breath gain

WHEEZE_FREQ_HZ = (150.0, 900.0)
WHEEZE_SPAN = (0.35, 0.7)  # fraction of the cycle, far above the 0.1 s minimum
WHEEZE_GAIN = (1.3, 1.9)  # relative to the breath gain
WHEEZE_RAMP_SECONDS = 0.03


@dataclass
class SynthCycle:
    kind: str  # normal | crackles | wheezes | both
    samples: np.ndarray
    crackles: bool
    wheezes: bool


def _breath_envelope(n: int) -> np.ndarray:
    t = np.linspace(0.0, 1.0, n, endpoint=False)
    env = np.full(n, ENVELOPE_FLOOR)
    inhale = (t >= 0.02) & (t < 0.45)
    env[inhale] += np.sin(np.pi * (t[inhale] - 0.02) / 0.43) ** 2
    exhale = (t >= 0.52) & (t < 0.95)
    env[exhale] += 0.65 * np.sin(np.pi * (t[exhale] - 0.52) / 0.43) ** 2
    return env


def make_normal_cycle(rng: np.random.Generator, duration_s: float, rate: int = SAMPLE_RATE) -> np.ndarray:
    n = int(round(duration_s * rate))
    noise = rng.standard_normal(n)
    b, a = scipy.signal.butter(4, BREATH_BAND_HZ / (rate / 2.0))
    breath = scipy.signal.lfilter(b, a, noise)
    breath /= max(np.sqrt(np.mean(breath**2)), 1e-12)
    gain = rng.uniform(*BREATH_GAIN)
    return gain * breath * _breath_envelope(n)


def add_crackles(cycle: np.ndarray, rng: np.random.Generator, rate: int = SAMPLE_RATE) -> np.ndarray:
    out = cycle.copy()
    n = len(cycle)
    burst_len = int(CRACKLE_SECONDS * rate)
    t = np.arange(burst_len) / rate
    for _ in range(int(rng.integers(*CRACKLE_COUNT))):
        pos = int(rng.uniform(0.05, 0.9) * (n - burst_len))
        freq = rng.uniform(*CRACKLE_FREQ_HZ)
        amp = rng.uniform(*CRACKLE_GAIN) * rng.uniform(*BREATH_GAIN)
        burst = amp * np.exp(-t / CRACKLE_DECAY_SECONDS) * np.sin(2 * np.pi * freq * t)
        out[pos : pos + burst_len] += burst
    return out


def add_wheeze(cycle: np.ndarray, rng: np.random.Generator, rate: int = SAMPLE_RATE) -> np.ndarray:
    out = cycle.copy()
    n = len(cycle)
    span = rng.uniform(*WHEEZE_SPAN)
    length = int(span * n)
    start = int(rng.uniform(0.05, 0.9 - span) * n)
    freq = rng.uniform(*WHEEZE_FREQ_HZ)
    amp = rng.uniform(*WHEEZE_GAIN) * rng.uniform(*BREATH_GAIN)
    t = np.arange(length) / rate
    tone = amp * np.sin(2 * np.pi * freq * t + rng.uniform(0, 2 * np.pi))
    ramp = np.ones(length)
    k = min(int(WHEEZE_RAMP_SECONDS * rate), length // 2)
    if k > 0:
        edge = 0.5 - 0.5 * np.cos(np.linspace(0, np.pi, k))
        ramp[:k] = edge
        ramp[-k:] = edge[::-1]
    out[start : start + length] += tone * ramp
    return out


def make_cycle(kind: str, rng: np.random.Generator, rate: int = SAMPLE_RATE) -> SynthCycle:
    duration = rng.uniform(*CYCLE_SECONDS)
    samples = make_normal_cycle(rng, duration, rate)
    if kind in ("crackles", "both"):
        samples = add_crackles(samples, rng, rate)
    if kind in ("wheezes", "both"):
        samples = add_wheeze(samples, rng, rate)
    return SynthCycle(kind, samples, kind in ("crackles", "both"), kind in ("wheezes", "both"))


def generate_corpus(n_normal: int, n_anomalous: int, seed: int, out_dir: str) -> dict:
    """Write wav + annotation files, the official split list, and a metadata
    JSON under out_dir. Deterministic per (n_normal, n_anomalous, seed)."""
    if n_normal < 1 or n_anomalous < 0:
        raise UsageError("need at least one normal cycle and a non-negative anomaly count")
    os.makedirs(out_dir, exist_ok=True)
    rng = np.random.default_rng(seed)

    kinds = ["normal"] * n_normal
    anomaly_cycle = ("crackles", "wheezes", "both")
    kinds += [anomaly_cycle[i % 3] for i in range(n_anomalous)]
    order = rng.permutation(len(kinds))
    kinds = [kinds[i] for i in order]

    n_recordings = int(np.ceil(len(kinds) / CYCLES_PER_RECORDING))
    n_patients = int(np.ceil(n_recordings / RECORDINGS_PER_PATIENT))
    recordings = []
    meta = {"recordings": {}, "counts": {"normal": n_normal, "anomalous": n_anomalous}, "seed": seed}
    gap = int(GAP_SECONDS * SAMPLE_RATE)

    cursor = 0
    for r in range(n_recordings):
        patient = FIRST_PATIENT_ID + r // RECORDINGS_PER_PATIENT
        rec_index = r % RECORDINGS_PER_PATIENT + 1
        recording_id = f"{patient}_{rec_index}b1_Al_sc_Synth"
        chunk = kinds[cursor : cursor + CYCLES_PER_RECORDING]
        cursor += len(chunk)

        pieces = [np.zeros(gap)]
        annotations = []
        pos = gap
        rec_kinds = []
        for kind in chunk:
            cycle = make_cycle(kind, rng)
            start = pos / SAMPLE_RATE
            end = (pos + len(cycle.samples)) / SAMPLE_RATE
            annotations.append((start, end, int(cycle.crackles), int(cycle.wheezes)))
            pieces.append(cycle.samples)
            pieces.append(np.zeros(gap))
            pos += len(cycle.samples) + gap
            rec_kinds.append(kind)
        audio = np.concatenate(pieces)
        pcm = np.round(np.clip(audio, -0.999, 0.999) * 32767.0).astype(np.int16)
        scipy.io.wavfile.write(os.path.join(out_dir, recording_id + ".wav"), SAMPLE_RATE, pcm)
        with open(os.path.join(out_dir, recording_id + ".txt"), "w", encoding="utf-8", newline="\n") as fh:
            for start, end, cr, wh in annotations:
                fh.write(f"{start:.4f}\t{end:.4f}\t{cr}\t{wh}\n")
        recordings.append((recording_id, patient))
        meta["recordings"][recording_id] = rec_kinds

    n_train_patients = max(1, int(round(TRAIN_PATIENT_FRACTION * n_patients)))
    if n_patients >= 2:
        n_train_patients = min(n_train_patients, n_patients - 1)
    train_patients = {FIRST_PATIENT_ID + i for i in range(n_train_patients)}
    with open(os.path.join(out_dir, "official_split.txt"), "w", encoding="utf-8", newline="\n") as fh:
        for recording_id, patient in recordings:
            side = "train" if patient in train_patients else "test"
            fh.write(f"{recording_id}\t{side}\n")

    meta["n_recordings"] = n_recordings
    meta["n_patients"] = n_patients
    meta["train_patients"] = sorted(train_patients)
    with open(os.path.join(out_dir, "synth_meta.json"), "w", encoding="utf-8", newline="\n") as fh:
        json.dump(meta, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return meta
