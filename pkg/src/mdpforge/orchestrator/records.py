"""Run-directory persistence: hash-chained candidate log and archive snapshot."""

from __future__ import annotations

import hashlib
import json
import logging
import os
from pathlib import Path
from typing import Any, Dict, List

log = logging.getLogger(__name__)

SCHEMA_VERSION = 1
GENESIS_HASH = "0" * 64
VOLATILE_FIELDS = ("timestamp", "wall_time")

CONFIG_FILE = "config.json"
RECORDS_FILE = "candidates.jsonl"
SNAPSHOT_FILE = "archive_snapshot.json"
BEST_FILE = "best.iel"
REPORTS_DIR = "reports"

RECORD_FIELDS = frozenset(
    {
        "schema_version",
        "id",
        "iteration",
        "parent_id",
        "island",
        "branch",
        "mode",
        "operators",
        "source",
        "validation",
        "descriptor",
        "cascade",
        "seeds",
        "per_seed",
        "fitness",
        "diagnostics",
        "status",
        "fault",
        "archive",
        "migration",
        "tokens",
        "llm",
        "prompt",
        "wall_time",
        "timestamp",
        "prev_hash",
        "hash",
    }
)


class CorruptRunDirectory(RuntimeError):
    pass


def canonical_json(obj: Any) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), ensure_ascii=False, allow_nan=False)


def record_hash(record: Dict[str, Any]) -> str:
    body = {k: v for k, v in record.items() if k not in VOLATILE_FIELDS and k != "hash"}
    return hashlib.sha256(canonical_json(body).encode("utf-8")).hexdigest()


def stable_view(record: Dict[str, Any]) -> Dict[str, Any]:
    """The record without timestamps and wall-times, for determinism comparisons."""
    return {k: v for k, v in record.items() if k not in VOLATILE_FIELDS}


def seal(record: Dict[str, Any], prev_hash: str) -> Dict[str, Any]:
    out = dict(record)
    out["prev_hash"] = prev_hash
    out["hash"] = record_hash(out)
    return out


def append_record(run_dir: Path, record: Dict[str, Any]) -> None:
    path = Path(run_dir) / RECORDS_FILE
    with open(path, "a", encoding="utf-8") as fh:
        fh.write(canonical_json(record) + "\n")
        fh.flush()
        os.fsync(fh.fileno())


def write_atomic(path: Path, text: str) -> None:
    path = Path(path)
    tmp = path.with_suffix(path.suffix + ".tmp")
    tmp.write_text(text, encoding="utf-8")
    os.replace(tmp, path)


def load_records(run_dir: Path, repair: bool = False) -> List[Dict[str, Any]]:
    """Read and verify the candidate log.

    A final line without a newline terminator is a torn write from an
    interrupted run and is dropped (and, with ``repair``, removed from the
    file); any other inconsistency raises
    :class:`CorruptRunDirectory` naming the first bad record.
    """
    path = Path(run_dir) / RECORDS_FILE
    if not path.exists():
        return []
    text = path.read_text(encoding="utf-8")
    lines = text.split("\n")
    if lines and lines[-1] == "":
        lines.pop()
    elif lines:
        log.warning("dropping incomplete final record in %s", path)
        lines.pop()
    records = []
    prev = GENESIS_HASH
    for n, line in enumerate(lines, start=1):
        try:
            rec = json.loads(line)
        except json.JSONDecodeError as exc:
            raise CorruptRunDirectory(f"{path}: record {n} is not valid JSON ({exc})") from exc
        if not isinstance(rec, dict):
            raise CorruptRunDirectory(f"{path}: record {n} is not an object")
        unknown = sorted(set(rec) - RECORD_FIELDS)
        if unknown:
            raise CorruptRunDirectory(f"{path}: record {n} has unknown fields {unknown}")
        if rec.get("schema_version") != SCHEMA_VERSION:
            raise CorruptRunDirectory(f"{path}: record {n} has schema_version {rec.get('schema_version')!r}")
        if rec.get("prev_hash") != prev or rec.get("hash") != record_hash(rec):
            raise CorruptRunDirectory(f"{path}: record {n} (candidate {rec.get('id')}) fails the hash chain")
        if rec.get("id") != len(records):
            raise CorruptRunDirectory(f"{path}: record {n} has id {rec.get('id')}, expected {len(records)}")
        parent = rec.get("parent_id")
        if parent is not None and not (isinstance(parent, int) and 0 <= parent < rec["id"]):
            raise CorruptRunDirectory(f"{path}: record {n} references unknown parent {parent}")
        prev = rec["hash"]
        records.append(rec)
    if repair and text and not text.endswith("\n"):
        # rewrite without the torn tail so later appends stay line-aligned
        write_atomic(path, "".join(canonical_json(r) + "\n" for r in records))
    return records
