"""File exchange formats: feature tables, label files, atomic writes.

A feature table is UTF-8 comma-separated text with a header row; column 1
is the patient id, the remaining columns are real-valued features. Floats
are written with ``repr`` (shortest exact round-trip), so rewriting an
unchanged table is byte-identical.
"""

import csv
import json
import os
import tempfile
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import IngestError


@dataclass(frozen=True)
class FeatureTable:
    """Patient-keyed dense matrix for one modality."""

    ids: tuple[str, ...]
    names: tuple[str, ...]
    data: np.ndarray  # float64, shape (len(ids), len(names))

    def __post_init__(self):
        if self.data.shape != (len(self.ids), len(self.names)):
            raise IngestError(
                f"table shape {self.data.shape} does not match "
                f"{len(self.ids)} ids x {len(self.names)} names"
            )

    @property
    def width(self) -> int:
        return self.data.shape[1]

    def row(self, patient_id: str) -> np.ndarray:
        return self.data[self.ids.index(patient_id)]

    def index(self) -> dict[str, int]:
        return {pid: i for i, pid in enumerate(self.ids)}

    def restrict(self, ids) -> "FeatureTable":
        """Sub-table with the given ids, in the given order."""
        idx = self.index()
        rows = [idx[p] for p in ids]
        return FeatureTable(tuple(ids), self.names, self.data[rows])


def default_feature_names(width: int) -> tuple[str, ...]:
    return tuple(f"f{i}" for i in range(width))


def atomic_write_text(path, text: str) -> None:
    """Write text via temp-file-then-rename so readers never see partials."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=path.name + ".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def atomic_write_bytes(path, blob: bytes) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=path.name + ".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(blob)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def read_feature_table(path, expected_width: int | None = None, id_column: str = "patient_id") -> FeatureTable:
    """Load and validate a feature table.

    Enforces: header present, consistent width (== expected_width when
    given), unique patient ids, finite numeric cells. Errors cite
    1-based data row numbers.
    """
    path = Path(path)
    with open(path, encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise IngestError(f"{path}: empty file, expected a header row")
        if len(header) < 2:
            raise IngestError(f"{path}: header must have an id column plus features")
        names = tuple(header[1:])
        width = len(names)
        if expected_width is not None and width != expected_width:
            raise IngestError(
                f"{path}: expected {expected_width} feature columns, found {width}"
            )
        ids: list[str] = []
        seen: dict[str, int] = {}
        rows: list[list[float]] = []
        for rownum, rec in enumerate(reader, start=1):
            if len(rec) != width + 1:
                raise IngestError(
                    f"{path}: row {rownum} has {len(rec)} cells, expected {width + 1}"
                )
            pid = rec[0]
            if not pid:
                raise IngestError(f"{path}: row {rownum} has an empty patient id")
            if pid in seen:
                raise IngestError(
                    f"{path}: duplicate patient id {pid!r} (rows {seen[pid]} and {rownum})"
                )
            seen[pid] = rownum
            try:
                vals = [float(c) for c in rec[1:]]
            except ValueError:
                bad = next(c for c in rec[1:] if not _is_float(c))
                raise IngestError(
                    f"{path}: row {rownum} has a non-numeric cell {bad!r}"
                ) from None
            if not all(np.isfinite(vals)):
                raise IngestError(f"{path}: row {rownum} has a non-finite value")
            ids.append(pid)
            rows.append(vals)
    data = np.asarray(rows, dtype=np.float64).reshape(len(ids), width)
    return FeatureTable(tuple(ids), names, data)


def _is_float(cell: str) -> bool:
    try:
        float(cell)
        return True
    except ValueError:
        return False


def write_feature_table(table: FeatureTable, path, id_column: str = "patient_id") -> None:
    lines = [",".join((id_column,) + table.names)]
    for pid, row in zip(table.ids, table.data):
        lines.append(pid + "," + ",".join(repr(float(v)) for v in row))
    atomic_write_text(path, "\n".join(lines) + "\n")


def read_labels(path) -> dict[str, int]:
    """Load a binary label file (patient_id,label header; labels 0/1)."""
    path = Path(path)
    labels: dict[str, int] = {}
    with open(path, encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or len(header) < 2:
            raise IngestError(f"{path}: expected header 'patient_id,label'")
        for rownum, rec in enumerate(reader, start=1):
            if len(rec) < 2 or not rec[0]:
                raise IngestError(f"{path}: row {rownum} malformed")
            if rec[0] in labels:
                raise IngestError(f"{path}: duplicate patient id {rec[0]!r} at row {rownum}")
            try:
                val = int(float(rec[1]))
            except ValueError:
                raise IngestError(
                    f"{path}: row {rownum} has non-numeric label {rec[1]!r}"
                ) from None
            if val not in (0, 1):
                raise IngestError(f"{path}: row {rownum} label must be 0 or 1, got {rec[1]!r}")
            labels[rec[0]] = val
    return labels


def write_labels(labels: dict[str, int], path) -> None:
    lines = ["patient_id,label"]
    lines.extend(f"{pid},{int(v)}" for pid, v in labels.items())
    atomic_write_text(path, "\n".join(lines) + "\n")


def write_json(obj, path) -> None:
    atomic_write_text(path, json.dumps(obj, indent=2, sort_keys=True) + "\n")


def read_json(path):
    with open(path, encoding="utf-8") as fh:
        return json.load(fh)
