"""Result records, their JSON/CSV serialization, and the on-disk cache."""

from __future__ import annotations

import csv
import hashlib
import io
import json
import logging
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

from . import __version__

log = logging.getLogger(__name__)

CSV_HEADER = ["kind", "word", "tau_re", "tau_im", "value_re", "value_im", "est_error"]
KINDS = ("I", "J", "check", "asymptotic")


def _num(x: float) -> str:
    """17 significant digits: enough to round-trip a double bit-exactly."""
    return format(float(x), ".17g")


@dataclass
class ResultRecord:
    kind: str
    word: Tuple[int, ...]
    tau: complex
    value: complex
    est_error: float = 0.0
    meta: Dict[str, object] = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown record kind {self.kind!r}")
        self.word = tuple(int(v) for v in self.word)
        self.tau = complex(self.tau)
        self.value = complex(self.value)
        self.est_error = float(self.est_error)

    def sort_key(self):
        return (self.kind, sum(d + 2 for d in self.word), len(self.word), self.word)

    def to_json(self) -> dict:
        return {
            "kind": self.kind,
            "word": list(self.word),
            "tau": {"re": self.tau.real, "im": self.tau.imag},
            "value": {"re": self.value.real, "im": self.value.imag},
            "est_error": self.est_error,
            "meta": self.meta,
        }

    @classmethod
    def from_json(cls, obj: dict) -> "ResultRecord":
        return cls(
            obj["kind"],
            tuple(obj["word"]),
            complex(obj["tau"]["re"], obj["tau"]["im"]),
            complex(obj["value"]["re"], obj["value"]["im"]),
            obj["est_error"],
            obj.get("meta", {}),
        )

    def csv_row(self) -> List[str]:
        return [self.kind, ",".join(map(str, self.word)), _num(self.tau.real), _num(self.tau.imag),
                _num(self.value.real), _num(self.value.imag), _num(self.est_error)]


def sort_records(records: Iterable[ResultRecord]) -> List[ResultRecord]:
    """Stable order: kind, then weight, depth and lexicographic word."""
    return sorted(records, key=lambda r: r.sort_key())


def dumps_json(records: Sequence[ResultRecord]) -> str:
    # floats are written with repr, the shortest string that round-trips exactly
    return json.dumps([r.to_json() for r in records], indent=1, sort_keys=True) + "\n"


def loads_json(text: str) -> List[ResultRecord]:
    return [ResultRecord.from_json(o) for o in json.loads(text)]


def dumps_csv(records: Sequence[ResultRecord]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_HEADER)
    for r in records:
        w.writerow(r.csv_row())
    return buf.getvalue()


def loads_csv(text: str) -> List[ResultRecord]:
    rows = list(csv.reader(io.StringIO(text)))
    if not rows or rows[0] != CSV_HEADER:
        raise ValueError("not a record CSV file")
    out = []
    for row in rows[1:]:
        word = tuple(int(v) for v in row[1].split(",")) if row[1] else ()
        out.append(ResultRecord(row[0], word, complex(float(row[2]), float(row[3])),
                                complex(float(row[4]), float(row[5])), float(row[6])))
    return out


def dumps(records: Sequence[ResultRecord], fmt: str) -> str:
    return dumps_json(records) if fmt == "json" else dumps_csv(records)


def read_records(path: os.PathLike) -> List[ResultRecord]:
    text = Path(path).read_text()
    return loads_csv(text) if text.startswith(",".join(CSV_HEADER)) else loads_json(text)


# ---------------------------------------------------------------------------
# cache


def default_cache_dir() -> Path:
    env = os.environ.get("EMZV_CACHE_DIR")
    if env:
        return Path(env)
    return Path(os.environ.get("XDG_CACHE_HOME", Path.home() / ".cache")) / "ellzeta"


def _digest(obj) -> str:
    return hashlib.sha256(json.dumps(obj, sort_keys=True).encode()).hexdigest()


class ResultCache:
    """One JSON file per (kind, word, tau, settings) key, guarded by a checksum."""

    def __init__(self, directory: Optional[os.PathLike] = None):
        self.dir = Path(directory) if directory is not None else default_cache_dir()

    @staticmethod
    def key(kind: str, word: Sequence[int], tau: complex, settings: dict) -> str:
        return _digest([kind, list(word), [tau.real, tau.imag], settings, __version__])

    def _path(self, key: str) -> Path:
        return self.dir / f"{key}.json"

    def get(self, key: str) -> Optional[ResultRecord]:
        path = self._path(key)
        if not path.exists():
            return None
        try:
            blob = json.loads(path.read_text())
            if blob["checksum"] != _digest(blob["record"]):
                raise ValueError("checksum mismatch")
            return ResultRecord.from_json(blob["record"])
        except (ValueError, KeyError, TypeError) as exc:
            log.warning("discarding corrupt cache entry %s (%s); recomputing", path.name, exc)
            return None

    def put(self, key: str, record: ResultRecord):
        self.dir.mkdir(parents=True, exist_ok=True)
        obj = record.to_json()
        tmp = self._path(key).with_suffix(".tmp")
        tmp.write_text(json.dumps({"record": obj, "checksum": _digest(obj)}, sort_keys=True))
        tmp.replace(self._path(key))
