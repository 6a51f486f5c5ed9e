"""Column-typed observation tables and CSV ingestion."""

from __future__ import annotations

import csv
import hashlib
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping

import numpy as np

log = logging.getLogger(__name__)

CONTINUOUS = "continuous"
CATEGORICAL = "categorical"
MISSING_TOKENS = frozenset({"", "NA", "na", "NaN", "nan", "null", "NULL", "None"})


class DataError(ValueError):
    pass


@dataclass
class Dataset:
    """Observation table with continuous (float) and categorical (str) columns."""

    columns: dict[str, np.ndarray]
    types: dict[str, str]
    n_dropped: int = 0
    _levels: dict[str, tuple[str, ...]] = field(default_factory=dict, repr=False)

    def __post_init__(self):
        lengths = {len(v) for v in self.columns.values()}
        if len(lengths) > 1:
            raise DataError(f"columns differ in length: {sorted(lengths)}")
        for name, col in list(self.columns.items()):
            kind = self.types.get(name)
            if kind == CONTINUOUS:
                self.columns[name] = np.asarray(col, dtype=float)
            elif kind == CATEGORICAL:
                self.columns[name] = np.asarray([str(v) for v in col], dtype=object)
            else:
                raise DataError(f"column {name!r} has unknown type {kind!r}")

    @classmethod
    def from_dict(cls, data: Mapping[str, Iterable], types: Mapping[str, str] | None = None):
        """Build from arrays; untyped columns are continuous if numeric."""
        types = dict(types or {})
        cols = {}
        for name, values in data.items():
            arr = np.asarray(values)
            if name not in types:
                types[name] = CONTINUOUS if arr.dtype.kind in "biuf" else CATEGORICAL
            cols[name] = arr
        return cls(cols, types)

    @property
    def n(self) -> int:
        return len(next(iter(self.columns.values()))) if self.columns else 0

    @property
    def names(self) -> list[str]:
        return list(self.columns)

    def __len__(self):
        return self.n

    def __contains__(self, name):
        return name in self.columns

    def __getitem__(self, name: str) -> np.ndarray:
        try:
            return self.columns[name]
        except KeyError:
            raise KeyError(f"column {name!r} not in data (have {self.names})") from None

    def levels(self, name: str) -> tuple[str, ...]:
        if self.types[name] != CATEGORICAL:
            raise DataError(f"column {name!r} is not categorical")
        if name not in self._levels:
            self._levels[name] = tuple(sorted(set(self.columns[name])))
        return self._levels[name]

    def take(self, idx) -> "Dataset":
        idx = np.asarray(idx)
        return Dataset({k: v[idx] for k, v in self.columns.items()}, dict(self.types))

    def select(self, names: Iterable[str]) -> "Dataset":
        names = list(names)
        return Dataset({k: self[k] for k in names}, {k: self.types[k] for k in names})

    def fingerprint(self) -> str:
        """64-bit hex digest of column names, types, row count and contents."""
        h = hashlib.blake2b(digest_size=8)
        h.update(f"n={self.n};".encode())
        for name in sorted(self.columns):
            h.update(f"{name}:{self.types[name]};".encode())
            col = self.columns[name]
            if self.types[name] == CONTINUOUS:
                h.update(np.ascontiguousarray(col, dtype="<f8").tobytes())
            else:
                h.update("\x1f".join(col).encode())
            h.update(b"\x1e")
        return h.hexdigest()

    def to_csv(self, path: str | Path) -> None:
        path = Path(path)
        names = self.names
        with path.open("w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(names)
            for i in range(self.n):
                w.writerow([format_value(self.columns[c][i]) for c in names])


def format_value(v) -> str:
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def _is_number(s: str) -> bool:
    try:
        float(s)
    except ValueError:
        return False
    return True


def ingest(path: str | Path, type_hints: Mapping[str, str] | None = None,
           used_columns: Iterable[str] | None = None) -> Dataset:
    """Read a CSV with a header row.

    Columns whose values all parse as numbers are continuous unless hinted
    otherwise.  Rows with a missing value in any used column (default: all
    columns) are dropped and counted in ``Dataset.n_dropped``.
    """
    path = Path(path)
    type_hints = dict(type_hints or {})
    try:
        with path.open(newline="", encoding="utf-8") as fh:
            rows = list(csv.reader(fh))
    except OSError as exc:
        raise DataError(f"cannot read {path}: {exc}") from exc
    if not rows:
        raise DataError(f"{path} is empty")
    header, body = rows[0], [r for r in rows[1:] if r]
    if len(set(header)) != len(header):
        raise DataError(f"{path}: duplicate column names in header")
    for i, r in enumerate(body):
        if len(r) != len(header):
            raise DataError(f"{path}: row {i + 2} has {len(r)} fields, expected {len(header)}")
    for name, kind in type_hints.items():
        if name not in header:
            raise DataError(f"type hint for unknown column {name!r}")
        if kind not in (CONTINUOUS, CATEGORICAL):
            raise DataError(f"type hint {kind!r} for {name!r} is not continuous/categorical")

    used = list(header) if used_columns is None else list(used_columns)
    for name in used:
        if name not in header:
            raise DataError(f"column {name!r} not found in {path}")
    used_idx = [header.index(c) for c in used]
    keep = [r for r in body if not any(r[j].strip() in MISSING_TOKENS for j in used_idx)]
    dropped = len(body) - len(keep)
    if dropped:
        log.info("dropped %d of %d rows with missing values", dropped, len(body))
    if not keep:
        raise DataError(f"{path}: no rows left after dropping missing values")

    cols, types = {}, {}
    for j, name in enumerate(header):
        raw = [r[j].strip() for r in keep]
        hint = type_hints.get(name)
        numeric = all(_is_number(v) for v in raw)
        if hint == CONTINUOUS and not numeric:
            raise DataError(f"column {name!r} hinted continuous but has non-numeric values")
        kind = hint or (CONTINUOUS if numeric else CATEGORICAL)
        cols[name] = np.array([float(v) for v in raw]) if kind == CONTINUOUS else raw
        types[name] = kind
    return Dataset(cols, types, n_dropped=dropped)
