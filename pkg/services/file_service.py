import csv
import hashlib
import json
import logging
import math
import numbers
import os
from typing import Dict, Iterable, List, Mapping, Optional, Sequence

import numpy as np

from models.paths import EventRecord

logger = logging.getLogger(__name__)

FLOAT_FORMAT = "%.17g"
EVENT_FIELDS = ["time", "kind", "job_seq", "residual_after", "q", "w"]


def format_value(v) -> str:
    """17 significant digits for floats so every double round-trips."""
    if v is None:
        return ""
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, numbers.Integral):
        return str(int(v))
    if isinstance(v, numbers.Real):
        f = float(v)
        return "nan" if math.isnan(f) else FLOAT_FORMAT % f
    return str(v)


def _ensure_parent(path: str) -> None:
    parent = os.path.dirname(path)
    if parent:
        os.makedirs(parent, exist_ok=True)


def write_columns_csv(path: str, columns: Mapping[str, Sequence]) -> str:
    """Wide CSV: one column per key, one row per index."""
    _ensure_parent(path)
    names = list(columns)
    n = len(next(iter(columns.values()))) if columns else 0
    with open(path, "w", newline="", encoding="utf-8") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(names)
        for i in range(n):
            writer.writerow([format_value(columns[k][i]) for k in names])
    logger.debug(f"[Files] wrote {path} ({n} rows)")
    return path


def write_rows_csv(path: str, header: Sequence[str], rows: Iterable[Sequence]) -> str:
    _ensure_parent(path)
    with open(path, "w", newline="", encoding="utf-8") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([format_value(v) for v in row])
    return path


def write_json(path: str, payload) -> str:
    # json emits repr(float), the shortest string that round-trips the double
    _ensure_parent(path)
    with open(path, "w", encoding="utf-8") as f:
        json.dump(payload, f, indent=2, allow_nan=True)
        f.write("\n")
    return path


def read_json(path: str):
    with open(path, "r", encoding="utf-8") as f:
        return json.load(f)


def write_event_log(path: str, events: Iterable[EventRecord]) -> str:
    return write_rows_csv(path, EVENT_FIELDS, (tuple(e) for e in events))


def read_event_log(path: str) -> List[EventRecord]:
    events = []
    with open(path, "r", newline="", encoding="utf-8") as f:
        reader = csv.DictReader(f)
        missing = set(EVENT_FIELDS) - set(reader.fieldnames or [])
        if missing:
            raise ValueError(f"event log {path} lacks columns {sorted(missing)}")
        for row in reader:
            events.append(EventRecord(
                time=float(row["time"]),
                kind=row["kind"],
                job_seq=int(row["job_seq"]),
                residual_after=float(row["residual_after"]),
                q=int(row["q"]),
                w=float(row["w"]),
            ))
    return events


def sha256_file(path: str) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as f:
        for chunk in iter(lambda: f.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


def write_manifest(out_dir: str, config_hash: str, seed_rule: str, files: Sequence[str],
                   extra: Optional[Dict] = None) -> str:
    """manifest.json: config hash, seed rule and a checksum per output file. No timestamps."""
    entries = []
    for path in sorted(set(files)):
        entries.append({"file": os.path.relpath(path, out_dir), "sha256": sha256_file(path)})
    payload = {"config_sha256": config_hash, "seed_rule": seed_rule, "files": entries}
    if extra:
        payload.update(extra)
    return write_json(os.path.join(out_dir, "manifest.json"), payload)
