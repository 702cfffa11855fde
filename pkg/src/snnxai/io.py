"""Versioned persistence: model/report JSON, attribution and results CSV."""
from __future__ import annotations

import csv
import hashlib
import json
import math
import re
from dataclasses import asdict
from pathlib import Path
from typing import Iterable, Optional

import numpy as np

from .attribution import AttributionMap, Variant
from .lif import LifConfig, Network

MODEL_FORMAT = "snnxai-model"
MODEL_VERSION = 1
ATTRIBUTION_VERSION = 1
RESULTS_VERSION = 1
REPORT_VERSION = 1
RESULTS_COLUMNS = ["metric", "explainer", "model", "dataset", "value", "ci", "n"]


class ArtifactError(ValueError):
    """Unreadable, tampered or unsupported artifact."""


def _dump(obj) -> str:
    return json.dumps(obj, indent=1, sort_keys=True) + "\n"


def _checksum(payload: dict) -> str:
    return hashlib.sha256(json.dumps(payload, sort_keys=True).encode()).hexdigest()


def model_to_dict(network: Network, provenance: Optional[dict] = None) -> dict:
    payload = {
        "layer_sizes": list(network.layer_sizes),
        # row-major; json writes floats with shortest round-trip repr
        "weights": [[float(v) for v in w.ravel()] for w in network.weights],
        "config": asdict(network.config),
    }
    return {
        "format": MODEL_FORMAT,
        "version": MODEL_VERSION,
        **payload,
        "provenance": provenance or {},
        "checksum": _checksum(payload),
    }


def save_model(network: Network, path, provenance: Optional[dict] = None) -> None:
    Path(path).write_text(_dump(model_to_dict(network, provenance)), encoding="utf-8")


def load_model(path) -> Network:
    return load_model_artifact(path)[0]


def load_model_artifact(path):
    """Returns ``(network, provenance)``."""
    try:
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise ArtifactError(f"cannot read model {path}: {exc}") from None
    if doc.get("format") != MODEL_FORMAT:
        raise ArtifactError(f"{path} is not a model artifact")
    if doc.get("version") != MODEL_VERSION:
        raise ArtifactError(f"unsupported model version {doc.get('version')!r}")
    try:
        payload = {k: doc[k] for k in ("layer_sizes", "weights", "config")}
    except KeyError as exc:
        raise ArtifactError(f"model artifact lacks {exc}") from None
    if _checksum(payload) != doc.get("checksum"):
        raise ArtifactError("model checksum mismatch")
    sizes = payload["layer_sizes"]
    if len(payload["weights"]) != len(sizes) - 1:
        raise ArtifactError("weight count does not match layer sizes")
    weights = []
    for l, flat in enumerate(payload["weights"]):
        if len(flat) != sizes[l] * sizes[l + 1]:
            raise ArtifactError(f"weights[{l}] has {len(flat)} entries, "
                                f"expected {sizes[l] * sizes[l + 1]}")
        weights.append(np.array(flat, dtype=np.float64).reshape(sizes[l], sizes[l + 1]))
    network = Network(sizes, weights, LifConfig(**payload["config"]))
    return network, doc.get("provenance", {})


def save_report(report: dict, path) -> None:
    Path(path).write_text(_dump({"version": REPORT_VERSION, **report}), encoding="utf-8")


def load_report(path) -> dict:
    doc = json.loads(Path(path).read_text(encoding="utf-8"))
    if doc.get("version") != REPORT_VERSION:
        raise ArtifactError(f"unsupported report version {doc.get('version')!r}")
    return doc


# ---------------------------------------------------------------------------
# attribution CSV
# ---------------------------------------------------------------------------

def write_attribution_csv(amap: AttributionMap, path, window_start: int = 0) -> None:
    """Rows ``class,dim,t,value`` with ``t`` in absolute series steps."""
    O, D, T = amap.values.shape
    with open(path, "w", newline="", encoding="utf-8") as fh:
        fh.write(f"# snnxai-attribution v{ATTRIBUTION_VERSION} variant={amap.variant.value} "
                 f"t_explained={window_start + amap.t_explained} window_start={window_start}\n")
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["class", "dim", "t", "value"])
        for c in range(O):
            for d in range(D):
                for k in range(T):
                    writer.writerow([c, d, window_start + k, repr(float(amap.values[c, d, k]))])


def read_attribution_csv(path):
    """Returns ``(map, window_start)``; ``map.t_explained`` is window-relative."""
    with open(path, encoding="utf-8") as fh:
        meta = fh.readline().strip()
        m = re.match(r"# snnxai-attribution v(\d+) variant=(\S+) t_explained=(\d+) "
                     r"window_start=(\d+)$", meta)
        if m is None:
            raise ArtifactError(f"{path}: missing attribution header")
        if int(m.group(1)) != ATTRIBUTION_VERSION:
            raise ArtifactError(f"unsupported attribution version {m.group(1)}")
        reader = csv.reader(fh)
        if next(reader) != ["class", "dim", "t", "value"]:
            raise ArtifactError(f"{path}: bad column header")
        rows = [(int(c), int(d), int(t), float(v)) for c, d, t, v in reader]
    start = int(m.group(4))
    O = 1 + max(r[0] for r in rows)
    D = 1 + max(r[1] for r in rows)
    T = 1 + max(r[2] for r in rows) - start
    values = np.zeros((O, D, T))
    for c, d, t, v in rows:
        values[c, d, t - start] = v
    return AttributionMap(values, int(m.group(3)) - start, Variant(m.group(2))), start


# ---------------------------------------------------------------------------
# results CSV
# ---------------------------------------------------------------------------

def write_results_csv(rows: Iterable[dict], path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        fh.write(f"# snnxai-results v{RESULTS_VERSION}\n")
        writer = csv.DictWriter(fh, RESULTS_COLUMNS, lineterminator="\n")
        writer.writeheader()
        for row in rows:
            row = dict(row)
            for key in ("value", "ci"):
                v = row.get(key)
                row[key] = "" if v is None or (isinstance(v, float) and math.isnan(v)) \
                    else f"{float(v):.6f}"
            writer.writerow(row)


def read_results_csv(path):
    with open(path, encoding="utf-8") as fh:
        meta = fh.readline().strip()
        if meta != f"# snnxai-results v{RESULTS_VERSION}":
            raise ArtifactError(f"{path}: unsupported results header {meta!r}")
        rows = list(csv.DictReader(fh))
    for row in rows:
        row["value"] = float(row["value"])
        row["ci"] = float(row["ci"]) if row["ci"] else None
        row["n"] = int(row["n"])
    return rows
