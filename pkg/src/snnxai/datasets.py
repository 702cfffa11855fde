"""Synthetic OR-task generation, UCI ADL ingestion, splits and evaluation sampling."""
from __future__ import annotations

import csv
import logging
import re
import warnings
from dataclasses import dataclass, field
from datetime import datetime
from pathlib import Path
from typing import List, Optional, Sequence

import numpy as np

log = logging.getLogger(__name__)

SYNTHETIC_CLASSES = ["A", "B", "C", "D"]
ADL_ACTIVITIES = [
    "Breakfast", "Dinner", "Grooming", "Leaving", "Lunch", "Showering",
    "Sleeping", "Snack", "Spare_Time/TV", "Toileting",
]
OTHER = "Other"
BIAS = "bias"
DATASET_VERSION = 1


class ParseError(ValueError):
    """Malformed input row; carries the file and line number."""

    def __init__(self, path, lineno: int, message: str):
        super().__init__(f"{path}:{lineno}: {message}")
        self.path = path
        self.lineno = lineno


class OverlapError(ValueError):
    """Two activity intervals overlap."""


@dataclass
class LabeledSeries:
    data: np.ndarray
    labels: np.ndarray
    class_names: List[str]
    channel_names: List[str]
    dt_seconds: float = 1.0
    has_bias: bool = True

    def __post_init__(self):
        self.data = np.asarray(self.data, dtype=np.int8)
        self.labels = np.asarray(self.labels, dtype=np.int64)
        if self.data.ndim != 2 or self.labels.shape != (self.data.shape[1],):
            raise ValueError(f"data {self.data.shape} and labels {self.labels.shape} disagree")
        if len(self.channel_names) != self.data.shape[0]:
            raise ValueError("one channel name per data row is required")
        if not np.all((self.data == 0) | (self.data == 1)):
            raise ValueError("data must be binary")
        if self.labels.size and (self.labels.min() < 0 or self.labels.max() >= len(self.class_names)):
            raise ValueError("label out of range")
        if self.has_bias and not np.all(self.data[-1] == 1):
            raise ValueError("bias channel must be the last row and identically 1")

    @property
    def n_steps(self) -> int:
        return self.data.shape[1]

    @property
    def n_channels(self) -> int:
        return self.data.shape[0]

    @property
    def n_classes(self) -> int:
        return len(self.class_names)

    @property
    def bias_index(self) -> Optional[int]:
        return self.n_channels - 1 if self.has_bias else None

    def slice(self, start: int, stop: int) -> "LabeledSeries":
        return LabeledSeries(self.data[:, start:stop], self.labels[start:stop],
                             list(self.class_names), list(self.channel_names),
                             self.dt_seconds, self.has_bias)


@dataclass
class EvalSample:
    series: LabeledSeries = field(repr=False, compare=False)
    t: int
    true_label: int


# ---------------------------------------------------------------------------
# synthetic task
# ---------------------------------------------------------------------------

_SYNTHETIC_TABLE = {(0, 0): 0, (1, 1): 1, (0, 1): 2, (1, 0): 3}


def label_synthetic(x1: int, x2: int) -> int:
    """(0,0)->A, (1,1)->B, (0,1)->C, (1,0)->D as class indices 0..3."""
    return _SYNTHETIC_TABLE[(int(x1), int(x2))]


def _random_segments(rng: np.random.Generator, total: int, max_duration: int) -> np.ndarray:
    out = np.empty(total, dtype=np.int8)
    pos = 0
    while pos < total:
        duration = int(rng.integers(1, max_duration + 1))
        out[pos:pos + duration] = rng.integers(0, 2)
        pos += duration
    return out


def generate_synthetic(total_steps: int = 900_000, max_duration: int = 600,
                       seed: int = 0) -> LabeledSeries:
    """Two binary channels of random constant segments plus a bias row."""
    if total_steps <= 0 or max_duration < 1:
        raise ValueError("total_steps must be positive and max_duration >= 1")
    rng = np.random.default_rng(seed)
    x1 = _random_segments(rng, total_steps, max_duration)
    x2 = _random_segments(rng, total_steps, max_duration)
    labels = np.array([[0, 2], [3, 1]], dtype=np.int64)[x1, x2]
    data = np.vstack([x1, x2, np.ones(total_steps, dtype=np.int8)])
    return LabeledSeries(data, labels, list(SYNTHETIC_CLASSES), ["x1", "x2", BIAS], 1.0)


# ---------------------------------------------------------------------------
# UCI ADL ingestion
# ---------------------------------------------------------------------------

_TIME = r"(\d{4}-\d{2}-\d{2}\s+\d{2}:\d{2}:\d{2})"
_ROW = re.compile(_TIME + r"\s+" + _TIME + r"\s+(\S+)")


def _read_intervals(path):
    """Rows of ``start end name ...``; the two header lines are skipped."""
    rows = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if lineno <= 2 or not line.strip():
                continue
            m = _ROW.match(line.strip())
            if m is None:
                raise ParseError(path, lineno, f"cannot parse {line.strip()!r}")
            try:
                start = datetime.strptime(re.sub(r"\s+", " ", m.group(1)), "%Y-%m-%d %H:%M:%S")
                end = datetime.strptime(re.sub(r"\s+", " ", m.group(2)), "%Y-%m-%d %H:%M:%S")
            except ValueError as exc:
                raise ParseError(path, lineno, str(exc)) from None
            rows.append((lineno, start, end, m.group(3)))
    return rows


def _description_sensors(path) -> List[str]:
    """Sensor locations listed in a subject description file, if any."""
    names = []
    with open(path, encoding="utf-8") as fh:
        in_table = False
        for line in fh:
            cols = [c for c in re.split(r"\t+|\s{2,}", line.strip()) if c]
            if cols and cols[0].lower() == "location":
                in_table = True
                continue
            if in_table:
                if not cols or set(cols[0]) <= set("-"):
                    if names:
                        break
                    continue
                names.append(cols[0])
    return names


def ingest_adl(description_file, sensor_events, activity_labels,
               subject: str = "A") -> LabeledSeries:
    """Expand UCI ADL interval files into a per-second binary series.

    Sensor and activity intervals are inclusive of both endpoints. Activity
    rows whose end precedes their start are dropped (their span becomes
    ``Other``); in subject A these are rows 78 and 80 of the label file.
    """
    if subject not in ("A", "B"):
        raise ValueError("subject must be 'A' or 'B'")
    sensors = _read_intervals(sensor_events)
    activities = _read_intervals(activity_labels)
    listed = _description_sensors(description_file)

    kept = []
    for idx, (lineno, start, end, name) in enumerate(activities):
        if end < start:
            log.warning("dropping activity %d (%s) at line %d: end precedes start",
                        idx, name, lineno)
            continue
        kept.append((lineno, start, end, name))
    for lineno, start, end, name in sensors:
        if end < start:
            raise ParseError(sensor_events, lineno, "sensor interval ends before it starts")

    times = [r[1] for r in sensors + kept] + [r[2] for r in sensors + kept]
    if not times:
        raise ValueError("no intervals found")
    origin = min(times)
    n_steps = int((max(times) - origin).total_seconds()) + 1

    def sec(ts):
        return int((ts - origin).total_seconds())

    channels = list(dict.fromkeys(listed))
    for name in sorted({r[3] for r in sensors}):
        if name not in channels:
            channels.append(name)
    channels.sort()
    data = np.zeros((len(channels) + 1, n_steps), dtype=np.int8)
    for _, start, end, name in sensors:
        data[channels.index(name), sec(start):sec(end) + 1] = 1
    data[-1] = 1

    names = sorted(set(ADL_ACTIVITIES) | {r[3] for r in kept})
    class_names = names + [OTHER]
    other = len(names)
    labels = np.full(n_steps, other, dtype=np.int64)
    kept.sort(key=lambda r: (r[1], r[2]))
    prev = None
    for row in kept:
        lineno, start, end, name = row
        s, e = sec(start), sec(end)
        if prev is not None and start < prev[2]:
            raise OverlapError(
                f"activity {name!r} (line {lineno}) overlaps {prev[3]!r} (line {prev[0]})")
        labels[s:e + 1] = class_names.index(name)
        prev = row
    return LabeledSeries(data, labels, class_names, channels + [BIAS], 1.0)


def series_intervals(series: LabeledSeries, channel: int):
    """Inclusive ``(start, end)`` runs of ones in one channel."""
    row = np.concatenate([[0], series.data[channel].astype(np.int8), [0]])
    diff = np.diff(row)
    starts = np.flatnonzero(diff == 1)
    ends = np.flatnonzero(diff == -1) - 1
    return list(zip(starts.tolist(), ends.tolist()))


# ---------------------------------------------------------------------------
# splits and sampling
# ---------------------------------------------------------------------------

def split_sequential(series: LabeledSeries, fractions: Sequence[float]) -> List[LabeledSeries]:
    """Contiguous prefix splits; the last split absorbs rounding."""
    fractions = list(fractions)
    if not fractions or any(f <= 0 for f in fractions) or abs(sum(fractions) - 1) > 1e-9:
        raise ValueError(f"invalid split fractions {fractions}")
    bounds = np.round(np.cumsum([0.0] + fractions) * series.n_steps).astype(int)
    bounds[-1] = series.n_steps
    return [series.slice(a, b) for a, b in zip(bounds[:-1], bounds[1:])]


def _runs(labels: np.ndarray):
    """``(label, start, end)`` for maximal constant runs, end inclusive."""
    change = np.flatnonzero(np.diff(labels)) + 1
    starts = np.concatenate([[0], change])
    ends = np.concatenate([change - 1, [labels.size - 1]])
    return [(int(labels[s]), int(s), int(e)) for s, e in zip(starts, ends)]


def sample_eval_set(split: LabeledSeries, mode: str = "synthetic", seed: int = 0,
                    window: int = 1000, per_class: int = 25,
                    edge_steps: Optional[int] = None) -> List[EvalSample]:
    """Pick explanation times with a full ``window`` of history.

    ``synthetic``: ``per_class`` uniformly random steps per class.
    ``adl``: per class 3 steps in the first minute of an activity run, 3 in the
    last minute and 3 in between. Classes that cannot be filled raise a warning.
    """
    if split.n_steps <= window:
        raise ValueError(f"split of {split.n_steps} steps cannot host a {window}-step window")
    rng = np.random.default_rng(seed)
    labels = split.labels
    samples: List[EvalSample] = []
    if mode == "synthetic":
        for c in range(split.n_classes):
            candidates = np.flatnonzero(labels[window:] == c) + window
            if candidates.size == 0:
                warnings.warn(f"class {split.class_names[c]!r} absent from split")
                continue
            if candidates.size < per_class:
                warnings.warn(f"class {split.class_names[c]!r}: only {candidates.size} "
                              f"of {per_class} samples available")
            picks = rng.choice(candidates, size=min(per_class, candidates.size), replace=False)
            samples += [EvalSample(split, int(t), c) for t in np.sort(picks)]
        return samples
    if mode != "adl":
        raise ValueError(f"unknown sampling mode {mode!r}")

    edge = edge_steps if edge_steps is not None else int(round(60 / split.dt_seconds))
    runs = [r for r in _runs(labels) if r[2] >= window]
    for c in range(split.n_classes):
        mine = [(max(s, window), e, s) for lab, s, e in runs if lab == c]
        if not mine:
            warnings.warn(f"class {split.class_names[c]!r} absent from split")
            continue
        pools = {"start": [], "end": [], "middle": []}
        for lo, e, s in mine:
            first = np.arange(max(lo, s), min(e, s + edge - 1) + 1)
            last = np.arange(max(lo, e - edge + 1, s + edge), e + 1)
            middle = np.arange(max(lo, s + edge), e - edge + 1)
            pools["start"].append(first)
            pools["end"].append(last)
            pools["middle"].append(middle)
        for part in ("start", "middle", "end"):
            pool = np.unique(np.concatenate(pools[part])) if pools[part] else np.array([], int)
            k = min(3, pool.size)
            if k < 3:
                warnings.warn(f"class {split.class_names[c]!r}: only {k} of 3 {part} samples")
            for t in np.sort(rng.choice(pool, size=k, replace=False)) if k else []:
                samples.append(EvalSample(split, int(t), c))
    return samples


# ---------------------------------------------------------------------------
# canonical CSV
# ---------------------------------------------------------------------------

def write_dataset_csv(series: LabeledSeries, path) -> None:
    """``t,<channels...>,label`` with a leading ``#`` metadata line."""
    path = Path(path)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        fh.write(f"# snnxai-dataset v{DATASET_VERSION} dt_seconds={series.dt_seconds!r} "
                 f"bias={int(series.has_bias)} classes={'|'.join(series.class_names)}\n")
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["t"] + list(series.channel_names) + ["label"])
        names = series.class_names
        for t in range(series.n_steps):
            writer.writerow([t] + series.data[:, t].tolist() + [names[series.labels[t]]])


def read_dataset_csv(path) -> LabeledSeries:
    path = Path(path)
    with open(path, encoding="utf-8") as fh:
        meta_line = fh.readline()
        m = re.match(r"# snnxai-dataset v(\d+) dt_seconds=(\S+) bias=(\d) classes=(.*)$",
                     meta_line.strip())
        if m is None:
            raise ParseError(path, 1, "missing dataset header")
        if int(m.group(1)) != DATASET_VERSION:
            raise ParseError(path, 1, f"unsupported dataset version {m.group(1)}")
        class_names = m.group(4).split("|")
        header = fh.readline().strip().split(",")
        if header[0] != "t" or header[-1] != "label":
            raise ParseError(path, 2, "header must be t,<channels...>,label")
        body = np.loadtxt(fh, delimiter=",", dtype=str, ndmin=2)
    lookup = {name: i for i, name in enumerate(class_names)}
    data = body[:, 1:-1].astype(np.int8).T
    labels = np.array([lookup[v] for v in body[:, -1]], dtype=np.int64)
    return LabeledSeries(data, labels, class_names, header[1:-1],
                         float(m.group(2)), bool(int(m.group(3))))
