"""ICBHI-style corpus ingestion: annotations, labels, recordings, splits.

A corpus directory holds one ``<stem>.wav`` plus one ``<stem>.txt`` per
recording, where the annotation file has one breathing cycle per line::

    start_seconds  end_seconds  crackles{0,1}  wheezes{0,1}

An optional official split list assigns whole recordings to train or test
(one ``recording_id<TAB>{train|test}`` per line).
"""

from __future__ import annotations

import enum
import os
import re
import warnings
from dataclasses import dataclass, field

import numpy as np
import scipy.io.wavfile

from .errors import DataError, UsageError

MIN_CYCLE_SECONDS = 0.2
MAX_CYCLE_SECONDS = 16.0

_STEM_RE = re.compile(r"^(\d+)_")


class ClassLabel(enum.Enum):
    NORMAL = "normal"
    CRACKLES = "crackles"
    WHEEZES = "wheezes"
    BOTH = "both"


class BinaryLabel(enum.IntEnum):
    NORMAL = 0
    ANOMALOUS = 1


class SplitScheme(enum.Enum):
    RECORDING_60_40 = "60-40"
    CYCLE_80_20 = "80-20"


@dataclass(frozen=True)
class CycleAnnotation:
    start_s: float
    end_s: float
    crackles: bool
    wheezes: bool

    @property
    def duration_s(self) -> float:
        return self.end_s - self.start_s


def label_of(a: CycleAnnotation) -> tuple[ClassLabel, BinaryLabel]:
    """Map crackle/wheeze presence to the four-class and binary labels."""
    if a.crackles and a.wheezes:
        label = ClassLabel.BOTH
    elif a.crackles:
        label = ClassLabel.CRACKLES
    elif a.wheezes:
        label = ClassLabel.WHEEZES
    else:
        label = ClassLabel.NORMAL
    binary = BinaryLabel.NORMAL if label is ClassLabel.NORMAL else BinaryLabel.ANOMALOUS
    return label, binary


def parse_annotation_file(text: str, source: str = "<string>") -> list[CycleAnnotation]:
    """Parse one annotation file; blank lines are skipped.

    Raises DataError naming the offending 1-based line number on a
    non-numeric field, a flag outside {0, 1}, or start >= end.  Durations
    outside [0.2 s, 16 s] only warn so foreign corpora stay ingestible.
    """
    annotations = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line:
            continue
        parts = line.split()
        if len(parts) != 4:
            raise DataError(
                f"{source}:{lineno}: expected 'start end crackles wheezes', got {len(parts)} fields"
            )
        try:
            start, end = float(parts[0]), float(parts[1])
        except ValueError:
            raise DataError(f"{source}:{lineno}: non-numeric start/end time") from None
        if parts[2] not in ("0", "1") or parts[3] not in ("0", "1"):
            raise DataError(f"{source}:{lineno}: crackle/wheeze flags must be 0 or 1")
        if not (start < end):
            raise DataError(f"{source}:{lineno}: start {start} must be < end {end}")
        duration = end - start
        if not (MIN_CYCLE_SECONDS <= duration <= MAX_CYCLE_SECONDS):
            warnings.warn(
                f"{source}:{lineno}: cycle duration {duration:.4f} s outside "
                f"[{MIN_CYCLE_SECONDS}, {MAX_CYCLE_SECONDS}] s",
                stacklevel=2,
            )
        annotations.append(
            CycleAnnotation(start, end, crackles=parts[2] == "1", wheezes=parts[3] == "1")
        )
    return annotations


def parse_recording_id(stem: str) -> tuple[int, str]:
    """Split an ICBHI-style filename stem into (patient_id, recording_id).

    The stem must begin with an integer patient code followed by '_',
    e.g. '101_1b1_Al_sc_Meditron' -> (101, the full stem).
    """
    m = _STEM_RE.match(stem)
    if m is None:
        raise DataError(f"recording stem {stem!r} does not start with '<patient>_'")
    return int(m.group(1)), stem


@dataclass(frozen=True)
class CycleRef:
    """One annotated cycle's bookkeeping record (no audio attached)."""

    recording_id: str
    patient_id: int
    cycle_index: int
    label: ClassLabel
    binary: BinaryLabel
    duration_s: float

    def sort_key(self):
        return (self.recording_id, self.cycle_index)


@dataclass
class BreathingCycle:
    """One extracted cycle: mono samples at the pipeline rate plus labels."""

    samples: np.ndarray
    label: ClassLabel
    binary: BinaryLabel
    patient_id: int
    recording_id: str
    cycle_index: int
    duration_s: float


@dataclass
class RecordingMeta:
    """A recording discovered on disk; audio stays unloaded until needed."""

    recording_id: str
    patient_id: int
    wav_path: str
    annotations: list[CycleAnnotation]

    def cycle_refs(self) -> list[CycleRef]:
        refs = []
        for i, a in enumerate(self.annotations):
            label, binary = label_of(a)
            refs.append(
                CycleRef(self.recording_id, self.patient_id, i, label, binary, a.duration_s)
            )
        return refs


def scan_corpus(data_dir: str) -> list[RecordingMeta]:
    """Discover wav+txt recording pairs under data_dir (sorted by id)."""
    if not os.path.isdir(data_dir):
        raise UsageError(f"corpus directory {data_dir!r} does not exist")
    metas = []
    for name in sorted(os.listdir(data_dir)):
        if not name.endswith(".wav"):
            continue
        stem = name[: -len(".wav")]
        txt = os.path.join(data_dir, stem + ".txt")
        if not os.path.exists(txt):
            continue
        patient_id, recording_id = parse_recording_id(stem)
        with open(txt, encoding="utf-8") as fh:
            annotations = parse_annotation_file(fh.read(), source=txt)
        metas.append(RecordingMeta(recording_id, patient_id, os.path.join(data_dir, name), annotations))
    if not metas:
        raise DataError(f"no recording (wav + txt) pairs found in {data_dir!r}")
    return metas


_PCM_SCALE = {np.dtype(np.int16): 2.0**15, np.dtype(np.int32): 2.0**31, np.dtype(np.uint8): None}


def load_audio(wav_path: str) -> tuple[np.ndarray, int]:
    """Read a RIFF/WAVE file as mono float64 in [-1, 1] plus its sample rate.

    PCM 16/24/32-bit and IEEE float payloads are supported; multi-channel
    audio is mixed down by averaging.
    """
    try:
        rate, data = scipy.io.wavfile.read(wav_path)
    except Exception as exc:
        raise DataError(f"cannot read wav file {wav_path!r}: {exc}") from exc
    if data.size == 0:
        raise DataError(f"wav file {wav_path!r} contains no samples")
    if data.ndim == 2:
        data = data.mean(axis=1)
    if data.dtype == np.uint8:
        samples = (data.astype(np.float64) - 128.0) / 128.0
    elif data.dtype in (np.int16, np.int32):
        samples = data.astype(np.float64) / _PCM_SCALE[data.dtype]
    else:
        samples = data.astype(np.float64)
    return samples, int(rate)


def read_official_assignment(path: str) -> dict[str, str]:
    """Read the official recording -> {train,test} list."""
    assignment = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line:
                continue
            parts = line.split()
            if len(parts) != 2 or parts[1] not in ("train", "test"):
                raise DataError(f"{path}:{lineno}: expected 'recording_id train|test'")
            assignment[parts[0]] = parts[1]
    return assignment


@dataclass
class DatasetSplit:
    """Train/validation/test partitions plus the anomalous cycles dropped
    from the train side (kept so counts still sum to the corpus size)."""

    train: list
    validation: list
    test: list
    excluded_train: list
    scheme: SplitScheme
    seed: int
    val_fraction: float = 0.2

    def partitions(self):
        return (
            ("train", self.train),
            ("validation", self.validation),
            ("test", self.test),
            ("excluded", self.excluded_train),
        )


def _round_count(x: float) -> int:
    return int(np.floor(x + 0.5))


def make_split(
    cycles,
    scheme: SplitScheme,
    official_assignment: dict[str, str] | None = None,
    val_fraction: float = 0.2,
    seed: int = 0,
    patient_independent_val: bool = False,
) -> DatasetSplit:
    """Build the train/validation/test partitions.

    RECORDING_60_40 follows the official recording-level assignment: test
    takes the test-assigned recordings' cycles; validation is drawn from the
    train-assigned cycles (before anomaly exclusion, so it keeps anomalies);
    the remaining train-side cycles filtered to Normal form the train set.
    CYCLE_80_20 ignores the assignment: a seeded shuffle sends 20% of all
    cycles to test, then val_fraction of the remainder to validation.
    """
    if not (0.0 < val_fraction < 1.0):
        raise UsageError(f"val_fraction must lie in (0, 1), got {val_fraction}")
    cycles = sorted(cycles, key=lambda c: (c.recording_id, c.cycle_index))
    rng = np.random.default_rng(seed)

    if scheme is SplitScheme.RECORDING_60_40:
        if official_assignment is None:
            raise UsageError("RecordingLevel60_40 requires the official recording assignment")
        train_side, test = [], []
        for c in cycles:
            side = official_assignment.get(c.recording_id)
            if side is None:
                raise DataError(f"recording {c.recording_id!r} missing from the official assignment")
            (train_side if side == "train" else test).append(c)
        if patient_independent_val:
            patients = sorted({c.patient_id for c in train_side})
            order = rng.permutation(len(patients))
            target = _round_count(val_fraction * len(train_side))
            chosen: set[int] = set()
            n_val = 0
            for idx in order:
                if n_val >= target:
                    break
                chosen.add(patients[idx])
                n_val += sum(c.patient_id == patients[idx] for c in train_side)
            validation = [c for c in train_side if c.patient_id in chosen]
            remainder = [c for c in train_side if c.patient_id not in chosen]
        else:
            order = rng.permutation(len(train_side))
            n_val = _round_count(val_fraction * len(train_side))
            val_idx = set(order[:n_val].tolist())
            validation = [c for i, c in enumerate(train_side) if i in val_idx]
            remainder = [c for i, c in enumerate(train_side) if i not in val_idx]
    else:
        order = rng.permutation(len(cycles))
        n_test = _round_count(0.2 * len(cycles))
        test_idx = set(order[:n_test].tolist())
        test = [c for i, c in enumerate(cycles) if i in test_idx]
        pool = [c for i, c in enumerate(cycles) if i not in test_idx]
        pool_order = rng.permutation(len(pool))
        n_val = _round_count(val_fraction * len(pool))
        val_idx = set(pool_order[:n_val].tolist())
        validation = [c for i, c in enumerate(pool) if i in val_idx]
        remainder = [c for i, c in enumerate(pool) if i not in val_idx]

    train = [c for c in remainder if c.binary is BinaryLabel.NORMAL]
    excluded = [c for c in remainder if c.binary is not BinaryLabel.NORMAL]
    return DatasetSplit(train, validation, test, excluded, scheme, seed, val_fraction)


def write_manifest(split: DatasetSplit, path: str) -> None:
    """Persist the split as 'recording_id cycle_index partition' lines."""
    lines = []
    for name, part in split.partitions():
        for c in sorted(part, key=lambda c: (c.recording_id, c.cycle_index)):
            lines.append(f"{c.recording_id} {c.cycle_index} {name}\n")
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(f"# scheme={split.scheme.value} seed={split.seed} val_fraction={split.val_fraction!r}\n")
        fh.writelines(lines)


def read_manifest(path: str) -> dict[tuple[str, int], str]:
    """Read a split manifest back as {(recording_id, cycle_index): partition}."""
    out: dict[tuple[str, int], str] = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            parts = line.split()
            if len(parts) != 3 or parts[2] not in ("train", "validation", "test", "excluded"):
                raise DataError(f"{path}:{lineno}: malformed manifest line {line!r}")
            out[(parts[0], int(parts[1]))] = parts[2]
    return out


def split_statistics(split: DatasetSplit) -> dict[str, dict[str, int]]:
    """Per-class counts per partition, echoing the challenge split tables.

    The 'train' row counts the train side before anomaly exclusion so that
    the totals row sums to the whole corpus.
    """

    def count(part) -> dict[str, int]:
        row = {lab.value: 0 for lab in ClassLabel}
        for c in part:
            row[c.label.value] += 1
        row["total"] = len(part)
        return row

    train_side = list(split.train) + list(split.excluded_train)
    stats = {
        "train": count(train_side),
        "validation": count(split.validation),
        "test": count(split.test),
    }
    total = {k: sum(stats[p][k] for p in stats) for k in stats["train"]}
    stats["total"] = total
    stats["train_after_exclusion"] = count(split.train)
    return stats
