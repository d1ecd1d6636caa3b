"""Ingestion of accelerometer datasets into a uniform in-memory bundle.

Two sources are supported: the published Motion Sense directory layout
(continuous recordings, windowed here) and a canonical pair of CSV files
(used for UniMiB-SHAR after offline conversion, and for round trips).
"""

from __future__ import annotations

import csv
import math
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

STANDARD_GRAVITY = 9.80665

WINDOWS_HEADER = ["subject_id", "label", "window_id", "sample_index", "ax", "ay", "az"]
SUBJECTS_HEADER = ["subject_id", "sex", "age", "weight_kg", "height_cm"]

MOTIONSENSE_ACTIVITIES = ("dws", "ups", "wlk", "jog", "sit", "std")
MOTIONSENSE_RATE = 50.0


class DatasetError(ValueError):
    """Raised when a dataset on disk is missing pieces or malformed."""


@dataclass(frozen=True)
class SubjectMeta:
    subject_id: str
    sex: int
    age: int
    weight: float
    height: float

    def __post_init__(self):
        if self.sex not in (0, 1):
            raise DatasetError(f"subject {self.subject_id}: sex must be 0 or 1, got {self.sex}")
        if not (self.age > 0 and self.weight > 0 and self.height > 0):
            raise DatasetError(f"subject {self.subject_id}: age, weight and height must be positive")

    def physical_vector(self) -> np.ndarray:
        return np.array([self.sex, self.age, self.weight, self.height], dtype=float)


@dataclass(frozen=True, eq=False)
class LabeledWindow:
    """Fixed-length tri-axial window, shape ``(n_samples, 3)`` in g."""

    subject_id: str
    label: str
    window_id: int
    samples: np.ndarray
    rate: float

    def __post_init__(self):
        arr = np.array(self.samples, dtype=float)
        if arr.ndim != 2 or arr.shape[1] != 3 or arr.shape[0] == 0:
            raise DatasetError(f"window {self.subject_id}/{self.window_id}: expected (n, 3) samples, got {arr.shape}")
        if not np.all(np.isfinite(arr)):
            raise DatasetError(f"window {self.subject_id}/{self.window_id}: non-finite sample values")
        arr.flags.writeable = False
        object.__setattr__(self, "samples", arr)

    @property
    def key(self) -> tuple[str, int]:
        return (self.subject_id, self.window_id)

    def __len__(self):
        return self.samples.shape[0]

    def __eq__(self, other):
        if not isinstance(other, LabeledWindow):
            return NotImplemented
        return (
            self.key == other.key
            and self.label == other.label
            and self.rate == other.rate
            and np.array_equal(self.samples, other.samples)
        )

    def __hash__(self):
        return hash((self.subject_id, self.window_id, self.label))


@dataclass(frozen=True)
class DatasetBundle:
    name: str
    subjects: tuple[SubjectMeta, ...]
    windows: tuple[LabeledWindow, ...]
    label_set: tuple[str, ...]
    _by_id: dict = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "subjects", tuple(self.subjects))
        object.__setattr__(self, "windows", tuple(self.windows))
        object.__setattr__(self, "label_set", tuple(self.label_set))
        by_id = {}
        for s in self.subjects:
            if s.subject_id in by_id:
                raise DatasetError(f"duplicate subject_id {s.subject_id!r}")
            by_id[s.subject_id] = s
        object.__setattr__(self, "_by_id", by_id)
        labels = set(self.label_set)
        if len(labels) != len(self.label_set):
            raise DatasetError("label_set contains duplicates")
        shape = None
        seen = set()
        for w in self.windows:
            if w.subject_id not in by_id:
                raise DatasetError(f"window references unknown subject {w.subject_id!r}")
            if w.label not in labels:
                raise DatasetError(f"window label {w.label!r} not in label_set")
            if w.key in seen:
                raise DatasetError(f"duplicate window {w.key}")
            seen.add(w.key)
            if shape is None:
                shape = (len(w), w.rate)
            elif (len(w), w.rate) != shape:
                raise DatasetError(
                    f"window {w.key} has length/rate {(len(w), w.rate)}, bundle uses {shape}"
                )

    @property
    def subject_ids(self) -> list[str]:
        return [s.subject_id for s in self.subjects]

    def subject(self, subject_id: str) -> SubjectMeta:
        return self._by_id[subject_id]

    def windows_of(self, subject_id: str) -> list[LabeledWindow]:
        return [w for w in self.windows if w.subject_id == subject_id]

    @property
    def window_length(self) -> int | None:
        return len(self.windows[0]) if self.windows else None

    @property
    def rate(self) -> float | None:
        return self.windows[0].rate if self.windows else None


def make_bundle(name, subjects, windows, label_set=None) -> DatasetBundle:
    """Build a bundle in canonical order (subjects by id, windows by (id, window_id))."""
    subjects = sorted(subjects, key=lambda s: s.subject_id)
    windows = sorted(windows, key=lambda w: w.key)
    if label_set is None:
        label_set = sorted({w.label for w in windows})
    return DatasetBundle(name, tuple(subjects), tuple(windows), tuple(label_set))


# --------------------------------------------------------------------------
# signal utilities


def window_stream(recording, rate: float, length_s: float, overlap: float) -> list[np.ndarray]:
    """Cut a continuous recording into fixed-length windows.

    Windows hold ``round(length_s * rate)`` samples and start every
    ``round(length_s * rate * (1 - overlap))`` samples. The trailing
    remainder is dropped, so a recording shorter than one window yields
    an empty list.
    """
    if not 0 <= overlap < 1:
        raise ValueError(f"overlap must be in [0, 1), got {overlap}")
    if rate <= 0 or length_s <= 0:
        raise ValueError("rate and length_s must be positive")
    rec = np.asarray(recording, dtype=float)
    width = int(round(length_s * rate))
    stride = int(round(length_s * rate * (1 - overlap)))
    if width < 1 or stride < 1:
        raise ValueError("window and stride must each span at least one sample")
    n = rec.shape[0]
    return [rec[start:start + width].copy() for start in range(0, n - width + 1, stride)]


def resample(signal, src_rate: float, dst_rate: float) -> np.ndarray:
    """Linearly interpolate a ``(n, 3)`` signal from ``src_rate`` to ``dst_rate``."""
    if src_rate <= 0 or dst_rate <= 0:
        raise ValueError("sampling rates must be positive")
    sig = np.asarray(signal, dtype=float)
    if sig.shape[0] == 0:
        raise ValueError("cannot resample an empty signal")
    if src_rate == dst_rate:
        return sig.copy()
    t_src = np.arange(sig.shape[0]) / src_rate
    duration = t_src[-1]
    n_out = int(math.floor(duration * dst_rate + 1e-9)) + 1
    t_dst = np.arange(n_out) / dst_rate
    if sig.ndim == 1:
        return np.interp(t_dst, t_src, sig)
    return np.column_stack([np.interp(t_dst, t_src, sig[:, j]) for j in range(sig.shape[1])])


# --------------------------------------------------------------------------
# Motion Sense

_TRIAL_DIR = re.compile(r"^(%s)_(\d+)$" % "|".join(MOTIONSENSE_ACTIVITIES))
_SUBJECT_FILE = re.compile(r"^sub_(\d+)\.csv$")
_USER_ACC = ("userAcceleration.x", "userAcceleration.y", "userAcceleration.z")
_RAW_ACC = ("x", "y", "z")


def _motionsense_id(code) -> str:
    return f"{int(code):02d}"


def _read_motionsense_subjects(path: Path) -> list[SubjectMeta]:
    subjects = []
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        required = {"code", "weight", "height", "age", "gender"}
        missing = required - set(reader.fieldnames or [])
        if missing:
            raise DatasetError(f"{path}: missing columns {sorted(missing)}")
        for lineno, row in enumerate(reader, start=2):
            try:
                subjects.append(SubjectMeta(
                    subject_id=_motionsense_id(float(row["code"])),
                    sex=int(float(row["gender"])),
                    age=int(float(row["age"])),
                    weight=float(row["weight"]),
                    height=float(row["height"]),
                ))
            except (TypeError, ValueError) as exc:
                raise DatasetError(f"{path}:{lineno}: malformed subject row: {exc}") from exc
    return subjects


def _read_motionsense_trial(path: Path) -> np.ndarray:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise DatasetError(f"{path}: empty file") from None
        cols = None
        for names in (_USER_ACC, _RAW_ACC):
            if all(n in header for n in names):
                cols = [header.index(n) for n in names]
                break
        if cols is None:
            raise DatasetError(f"{path}: no acceleration columns in header")
        rows = []
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            try:
                rows.append([float(row[c]) for c in cols])
            except (IndexError, ValueError) as exc:
                raise DatasetError(f"{path}:{lineno}: malformed row") from exc
    arr = np.array(rows, dtype=float).reshape(-1, 3)
    if not np.all(np.isfinite(arr)):
        raise DatasetError(f"{path}: non-finite acceleration values")
    return arr


def load_motionsense(root, length_s: float = 3.0, overlap: float = 0.5,
                     rate: float = MOTIONSENSE_RATE) -> DatasetBundle:
    """Load a Motion Sense tree (``<act>_<trial>/sub_<n>.csv`` + ``data_subjects_info.csv``).

    Device-motion trials contribute their ``userAcceleration`` columns;
    plain accelerometer trials (columns ``x,y,z``) are accepted too.
    """
    root = Path(root)
    if not root.is_dir():
        raise DatasetError(f"{root}: not a directory")
    trials = []
    for trial_dir in sorted(p for p in root.rglob("*") if p.is_dir()):
        m = _TRIAL_DIR.match(trial_dir.name)
        if not m:
            continue
        for f in sorted(trial_dir.iterdir()):
            fm = _SUBJECT_FILE.match(f.name)
            if fm:
                trials.append((m.group(1), int(m.group(2)), int(fm.group(1)), f))
    if not trials:
        raise DatasetError(f"{root}: no trials found")

    info = sorted(root.rglob("data_subjects_info.csv"))
    if not info:
        raise DatasetError(f"{root}: missing subject-info file data_subjects_info.csv")
    subjects = _read_motionsense_subjects(info[0])
    known = {s.subject_id for s in subjects}

    windows = []
    next_id: dict[str, int] = {}
    trials.sort(key=lambda t: (t[2], MOTIONSENSE_ACTIVITIES.index(t[0]), t[1]))
    for activity, _trial, sub, path in trials:
        sid = _motionsense_id(sub)
        if sid not in known:
            raise DatasetError(f"{path}: subject {sid} absent from subject-info file")
        for chunk in window_stream(_read_motionsense_trial(path), rate, length_s, overlap):
            wid = next_id.get(sid, 0)
            next_id[sid] = wid + 1
            windows.append(LabeledWindow(sid, activity, wid, chunk, rate))
    present = {w.label for w in windows}
    labels = [a for a in MOTIONSENSE_ACTIVITIES if a in present]
    return make_bundle("motionsense", subjects, windows, sorted(labels))


# --------------------------------------------------------------------------
# canonical CSV


def _check_header(path, header, expected):
    if header != expected:
        raise DatasetError(f"{path}: header mismatch, expected {','.join(expected)!r}, got {','.join(header or [])!r}")


def read_subjects_csv(path) -> list[SubjectMeta]:
    subjects = []
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        _check_header(path, next(reader, None), SUBJECTS_HEADER)
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            try:
                sid, sex, age, weight, height = row
                subjects.append(SubjectMeta(sid, int(sex), int(age), float(weight), float(height)))
            except ValueError as exc:
                raise DatasetError(f"{path}:{lineno}: malformed subject row: {exc}") from exc
    return subjects


def load_canonical(windows_csv, subjects_csv, rate: float = 50.0, name: str = "canonical") -> DatasetBundle:
    """Load pre-segmented windows from the canonical CSV pair, without re-windowing."""
    subjects = read_subjects_csv(subjects_csv)
    known = {s.subject_id for s in subjects}
    groups: dict[tuple[str, int], tuple[str, list]] = {}
    with open(windows_csv, newline="") as fh:
        reader = csv.reader(fh)
        _check_header(windows_csv, next(reader, None), WINDOWS_HEADER)
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            try:
                sid, label, wid, idx, ax, ay, az = row
                key = (sid, int(wid))
                sample = (int(idx), float(ax), float(ay), float(az))
            except ValueError as exc:
                raise DatasetError(f"{windows_csv}:{lineno}: malformed row") from exc
            if sid not in known:
                raise DatasetError(f"{windows_csv}:{lineno}: subject {sid!r} absent from subjects file")
            entry = groups.setdefault(key, (label, []))
            if entry[0] != label:
                raise DatasetError(f"{windows_csv}:{lineno}: window {key} changes label")
            entry[1].append(sample)

    windows = []
    length = None
    for (sid, wid), (label, rows) in groups.items():
        rows.sort(key=lambda r: r[0])
        if [r[0] for r in rows] != list(range(len(rows))):
            raise DatasetError(f"{windows_csv}: window {(sid, wid)} has gaps in sample_index")
        if length is None:
            length = len(rows)
        elif len(rows) != length:
            raise DatasetError(
                f"{windows_csv}: window {(sid, wid)} has {len(rows)} samples, expected {length}"
            )
        windows.append(LabeledWindow(sid, label, wid, np.array([r[1:] for r in rows]), rate))
    return make_bundle(name, subjects, windows)


def write_canonical(bundle: DatasetBundle, windows_csv, subjects_csv) -> None:
    """Write ``bundle`` as the canonical CSV pair; floats use shortest round-trip text."""
    with open(subjects_csv, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(SUBJECTS_HEADER)
        for s in sorted(bundle.subjects, key=lambda s: s.subject_id):
            w.writerow([s.subject_id, s.sex, s.age, repr(float(s.weight)), repr(float(s.height))])
    with open(windows_csv, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(WINDOWS_HEADER)
        for win in sorted(bundle.windows, key=lambda x: x.key):
            for i, (ax, ay, az) in enumerate(win.samples):
                w.writerow([win.subject_id, win.label, win.window_id, i,
                            repr(float(ax)), repr(float(ay)), repr(float(az))])


def windows_from_arrays(subject_ids: Sequence[str], labels: Sequence[str], data: np.ndarray,
                        rate: float, scale: float = 1.0) -> list[LabeledWindow]:
    """Wrap an ``(n, length, 3)`` array as windows, numbering windows per subject.

    ``scale`` converts units, e.g. ``1 / STANDARD_GRAVITY`` for data in m/s^2.
    """
    counters: dict[str, int] = {}
    out = []
    for sid, label, arr in zip(subject_ids, labels, np.asarray(data, dtype=float)):
        wid = counters.get(sid, 0)
        counters[sid] = wid + 1
        out.append(LabeledWindow(str(sid), str(label), wid, arr * scale, rate))
    return out


def iter_subject_windows(windows: Iterable[LabeledWindow]) -> dict[str, list[LabeledWindow]]:
    out: dict[str, list[LabeledWindow]] = {}
    for w in windows:
        out.setdefault(w.subject_id, []).append(w)
    return out
