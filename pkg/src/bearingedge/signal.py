"""Signal pipeline: recordings, min-max normalization, 2-D framing, synthetic data.

Raw vibration recordings are 1-D sample sequences. Training input is a 20x20
frame cut straight out of the sequence: sample ``start + r*cols + c`` lands at
``frame[r][c]``, so the oldest sample sits at ``[0][0]``.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import (
    DegenerateSignal,
    InsufficientData,
    InvalidClass,
    OutOfRange,
)

DEFAULT_SAMPLE_RATE_HZ = 12_000
DEFAULT_RPM = 1_797
FRAME_ROWS = 20
FRAME_COLS = 20

# Normalization rejects recordings whose range is below this.
MIN_RANGE = 1e-12

_CSV_HEADER_RE = re.compile(
    r"^#\s*label=(?P<label>\S+)\s+rate=(?P<rate>\d+)\s+rpm=(?P<rpm>\d+)\s*$"
)


@dataclass(frozen=True)
class FaultLabel:
    """One of the ten bearing condition classes."""

    id: int
    name: str
    annotation: str


FAULT_CLASSES: tuple[FaultLabel, ...] = (
    FaultLabel(0, "00-Normal", "Normal without fault"),
    FaultLabel(1, "07-Ball", "0.007 inch ball fault"),
    FaultLabel(2, "07-InnerRace", "0.007 inch inner race fault"),
    FaultLabel(3, "07-OuterRace6", "0.007 inch 6 o'clock race fault"),
    FaultLabel(4, "14-Ball", "0.014 inch ball fault"),
    FaultLabel(5, "14-InnerRace", "0.014 inch inner race fault"),
    FaultLabel(6, "14-OuterRace6", "0.014 inch 6 o'clock race fault"),
    FaultLabel(7, "21-Ball", "0.021 inch ball fault"),
    FaultLabel(8, "21-InnerRace", "0.021 inch inner race fault"),
    FaultLabel(9, "21-OuterRace6", "0.021 inch 6 o'clock race fault"),
)

NUM_CLASSES = len(FAULT_CLASSES)


def label_by_id(class_id: int) -> FaultLabel:
    if not 0 <= class_id < NUM_CLASSES:
        raise InvalidClass(f"class id {class_id} not in 0..{NUM_CLASSES - 1}")
    return FAULT_CLASSES[class_id]


def label_by_name(name: str) -> FaultLabel:
    for label in FAULT_CLASSES:
        if label.name == name:
            return label
    raise InvalidClass(f"unknown class name {name!r}")


@dataclass(frozen=True)
class NormalizationParams:
    """Min and max of the recording a normalization was computed from."""

    min: float
    max: float

    def __post_init__(self):
        if not self.max - self.min >= MIN_RANGE:
            raise DegenerateSignal(
                f"range {self.max - self.min!r} too small to normalize"
            )


@dataclass(frozen=True)
class Recording:
    """A raw 1-D vibration recording with acquisition metadata."""

    samples: np.ndarray
    sample_rate_hz: int = DEFAULT_SAMPLE_RATE_HZ
    rpm: int = DEFAULT_RPM
    label: FaultLabel | None = None
    source_name: str = ""

    def __post_init__(self):
        samples = np.ascontiguousarray(self.samples, dtype=np.float64)
        if samples.ndim != 1:
            raise ValueError("recording samples must be one-dimensional")
        if len(samples) < FRAME_ROWS * FRAME_COLS:
            raise InsufficientData(
                f"recording holds {len(samples)} samples, "
                f"need at least {FRAME_ROWS * FRAME_COLS}"
            )
        if self.sample_rate_hz <= 0 or self.rpm <= 0:
            raise ValueError("sample_rate_hz and rpm must be positive")
        samples.flags.writeable = False
        object.__setattr__(self, "samples", samples)

    def __len__(self) -> int:
        return len(self.samples)


@dataclass(frozen=True)
class Frame:
    """A rows x cols window of samples; oldest sample at [0][0]."""

    values: np.ndarray
    label: FaultLabel | None = None

    def __post_init__(self):
        values = np.ascontiguousarray(self.values, dtype=np.float64)
        if values.ndim != 2:
            raise ValueError("frame values must be two-dimensional")
        values.flags.writeable = False
        object.__setattr__(self, "values", values)

    @property
    def rows(self) -> int:
        return self.values.shape[0]

    @property
    def cols(self) -> int:
        return self.values.shape[1]


@dataclass(frozen=True)
class Split:
    """Index sets partitioning a frame list into train/validation/test."""

    train: tuple[int, ...]
    validation: tuple[int, ...]
    test: tuple[int, ...]


@dataclass(frozen=True)
class Dataset:
    frames: tuple[Frame, ...]
    split: Split
    seed: int

    def subset(self, indices: tuple[int, ...]) -> list[Frame]:
        return [self.frames[i] for i in indices]


def normalize(recording) -> tuple[np.ndarray, NormalizationParams]:
    """Min-max normalize a sample sequence into [0, 1].

    Accepts a :class:`Recording` or any 1-D sequence of samples. The scale is
    computed over the whole input, so the same params can later be applied to
    values streamed out of it. Raises :class:`DegenerateSignal` when the
    signal range is below ``MIN_RANGE``.
    """
    samples = recording.samples if isinstance(recording, Recording) else recording
    x = np.asarray(samples, dtype=np.float64)
    if x.ndim != 1 or len(x) < 2:
        raise ValueError("need a 1-D sequence of at least two samples")
    lo = float(x.min())
    hi = float(x.max())
    params = NormalizationParams(lo, hi)  # raises DegenerateSignal if flat
    return (x - lo) / (hi - lo), params


def frame_direct(samples, rows: int = FRAME_ROWS, cols: int = FRAME_COLS,
                 start: int = 0, label: FaultLabel | None = None) -> Frame:
    """Cut one row-major frame out of a sample sequence.

    ``frame[r][c] = samples[start + r*cols + c]``.
    """
    x = np.asarray(samples, dtype=np.float64)
    if rows < 1 or cols < 1:
        raise ValueError("rows and cols must be positive")
    if start < 0 or start + rows * cols > len(x):
        raise OutOfRange(
            f"window [{start}, {start + rows * cols}) exceeds "
            f"sequence of length {len(x)}"
        )
    return Frame(x[start:start + rows * cols].reshape(rows, cols), label=label)


def sample_windows(recording: Recording, count: int, rows: int = FRAME_ROWS,
                   cols: int = FRAME_COLS, seed: int = 0) -> list[Frame]:
    """Draw ``count`` labeled frames at random offsets, without replacement.

    The recording is normalized first (per-recording min/max), then window
    start offsets are drawn uniformly from [0, len - rows*cols]. Deterministic
    for a given seed.
    """
    if count < 1:
        raise ValueError("count must be >= 1")
    area = rows * cols
    n_offsets = len(recording) - area + 1
    if n_offsets < 1:
        raise InsufficientData(
            f"recording of length {len(recording)} cannot hold a "
            f"{rows}x{cols} frame"
        )
    if count > n_offsets:
        raise InsufficientData(
            f"requested {count} windows but only {n_offsets} distinct "
            f"offsets exist"
        )
    normalized, _ = normalize(recording)
    rng = np.random.default_rng(seed)
    starts = rng.choice(n_offsets, size=count, replace=False)
    return [
        frame_direct(normalized, rows, cols, int(s), label=recording.label)
        for s in starts
    ]


# Per-class synthetic signal parameters, fixed so tests stay stable.
# (impulse period in samples, impulse amplitude, ring-down Hz, decay samples);
# period/ring follow the characteristic defect frequencies of the drive-end
# bearing geometry at 1797 rpm, amplitude scales with defect severity.
SYNTHETIC_CLASS_PARAMS: dict[int, tuple[float, float, float, float] | None] = {
    0: None,
    1: (85.0, 0.55, 2500.0, 20.0),   # 07-Ball
    2: (74.0, 0.55, 3400.0, 16.0),   # 07-InnerRace
    3: (112.0, 0.55, 4600.0, 12.0),  # 07-OuterRace6
    4: (85.0, 0.80, 2600.0, 20.0),   # 14-Ball
    5: (74.0, 0.80, 3500.0, 16.0),   # 14-InnerRace
    6: (112.0, 0.80, 4700.0, 12.0),  # 14-OuterRace6
    7: (85.0, 1.15, 2700.0, 20.0),   # 21-Ball
    8: (74.0, 1.15, 3600.0, 16.0),   # 21-InnerRace
    9: (112.0, 1.15, 4800.0, 12.0),  # 21-OuterRace6
}

SYNTHETIC_NOISE_SIGMA = 0.05  # of base sinusoid amplitude
ROTATION_HZ = DEFAULT_RPM / 60.0  # 29.95 Hz shaft frequency


def generate_synthetic(class_id: int, length: int, seed: int = 0) -> Recording:
    """Generate a synthetic vibration recording for one fault class.

    The signal is a unit-amplitude shaft sinusoid plus, for faulted classes,
    a periodic train of exponentially decaying resonance rings whose period,
    amplitude, and ring frequency come from ``SYNTHETIC_CLASS_PARAMS``, plus
    Gaussian noise. Identical (class_id, length, seed) always produces the
    identical sample sequence.
    """
    if class_id not in SYNTHETIC_CLASS_PARAMS:
        raise InvalidClass(f"class id {class_id} not in 0..{NUM_CLASSES - 1}")
    if length < FRAME_ROWS * FRAME_COLS:
        raise InsufficientData(
            f"length {length} below one frame ({FRAME_ROWS * FRAME_COLS})"
        )
    rng = np.random.default_rng([seed, class_id])
    fs = float(DEFAULT_SAMPLE_RATE_HZ)
    t = np.arange(length) / fs
    phase = rng.uniform(0.0, 2.0 * np.pi)
    signal = np.sin(2.0 * np.pi * ROTATION_HZ * t + phase)

    params = SYNTHETIC_CLASS_PARAMS[class_id]
    if params is not None:
        period, amp, ring_hz, decay = params
        # Impulse train convolved with a decaying resonance ring.
        kernel_len = int(6 * decay)
        i = np.arange(kernel_len)
        kernel = amp * np.exp(-i / decay) * np.sin(2.0 * np.pi * ring_hz * i / fs)
        impulses = np.zeros(length)
        first = rng.uniform(0.0, period)
        hits = np.arange(first, length, period).astype(int)
        impulses[hits[hits < length]] = 1.0
        signal = signal + np.convolve(impulses, kernel)[:length]

    signal = signal + rng.normal(0.0, SYNTHETIC_NOISE_SIGMA, length)
    return Recording(
        samples=signal,
        label=FAULT_CLASSES[class_id],
        source_name=f"synthetic-{FAULT_CLASSES[class_id].name}-seed{seed}",
    )


def build_dataset(frames, train_frac: float = 0.7, val_frac: float = 0.15,
                  test_frac: float = 0.15, seed: int = 0) -> Dataset:
    """Stratified, seeded split of labeled frames into train/val/test.

    Splits are disjoint, cover every frame, and every class present in the
    input appears in every split.
    """
    if abs(train_frac + val_frac + test_frac - 1.0) > 1e-9:
        raise ValueError("split fractions must sum to 1")
    frames = tuple(frames)
    if any(f.label is None for f in frames):
        raise ValueError("all frames must be labeled to build a dataset")
    by_class: dict[int, list[int]] = {}
    for i, f in enumerate(frames):
        by_class.setdefault(f.label.id, []).append(i)

    rng = np.random.default_rng(seed)
    train: list[int] = []
    val: list[int] = []
    test: list[int] = []
    for class_id in sorted(by_class):
        idx = np.array(by_class[class_id])
        if len(idx) < 3:
            raise InsufficientData(
                f"class {class_id} has {len(idx)} frames; need >= 3 so every "
                f"split sees it"
            )
        rng.shuffle(idx)
        n_train = max(1, int(round(train_frac * len(idx))))
        n_val = max(1, int(round(val_frac * len(idx))))
        n_train = min(n_train, len(idx) - 2)
        n_val = min(n_val, len(idx) - n_train - 1)
        train.extend(int(i) for i in idx[:n_train])
        val.extend(int(i) for i in idx[n_train:n_train + n_val])
        test.extend(int(i) for i in idx[n_train + n_val:])
    return Dataset(
        frames=frames,
        split=Split(tuple(train), tuple(val), tuple(test)),
        seed=seed,
    )


def write_recording_csv(recording: Recording, path) -> None:
    """One float per line, with a metadata header line."""
    path = Path(path)
    lines = []
    if recording.label is not None:
        lines.append(
            f"# label={recording.label.name} rate={recording.sample_rate_hz} "
            f"rpm={recording.rpm}"
        )
    lines.extend(repr(float(v)) for v in recording.samples)
    path.write_text("\n".join(lines) + "\n")


def read_recording_csv(path, label: FaultLabel | None = None) -> Recording:
    """Read a one-float-per-line recording; header overrides defaults."""
    path = Path(path)
    rate = DEFAULT_SAMPLE_RATE_HZ
    rpm = DEFAULT_RPM
    values: list[float] = []
    for raw in path.read_text().splitlines():
        line = raw.strip()
        if not line:
            continue
        if line.startswith("#"):
            m = _CSV_HEADER_RE.match(line)
            if m:
                label = label or label_by_name(m.group("label"))
                rate = int(m.group("rate"))
                rpm = int(m.group("rpm"))
            continue
        values.append(float(line))
    return Recording(
        samples=np.array(values),
        sample_rate_hz=rate,
        rpm=rpm,
        label=label,
        source_name=path.name,
    )


def read_manifest(path) -> list[tuple[Path, FaultLabel]]:
    """Parse a ``<path>,<class-id>`` per line dataset manifest.

    Relative paths are resolved against the manifest's directory.
    """
    path = Path(path)
    entries: list[tuple[Path, FaultLabel]] = []
    for raw in path.read_text().splitlines():
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        file_part, _, id_part = line.rpartition(",")
        if not file_part:
            raise ValueError(f"manifest line {line!r} is not <path>,<class-id>")
        entry = Path(file_part.strip())
        if not entry.is_absolute():
            entry = path.parent / entry
        entries.append((entry, label_by_id(int(id_part.strip()))))
    return entries


def write_manifest(entries, path) -> None:
    path = Path(path)
    lines = [f"{p},{label.id}" for p, label in entries]
    path.write_text("\n".join(lines) + "\n")
