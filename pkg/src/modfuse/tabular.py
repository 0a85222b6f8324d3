"""Clinical/genomic record preprocessing into a numeric feature matrix.

Pipeline per column kind:

* numeric   - impute fitted median, then min-max scale to [0, 1]
* ordinal   - impute fitted mode, map to the declared level's rank, then
              min-max scale the rank by the rank range observed at fit
* binary    - impute fitted mode, expand to one indicator column with the
              first category dropped
* identifier / label - excluded from the matrix (the label is returned
              separately)

A sentinel value of -1 counts as missing only in columns declared with
``sentinel_missing`` (staging/mutation fields), so legitimate numeric -1
values elsewhere survive. Categories unseen at fit time map to the mode
and are counted in ``FeatureMatrix.warnings`` instead of aborting.
"""

import csv
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from .errors import SchemaError, StratifyError, ValidationError
from .io import FeatureTable

MISSING_TOKENS = {"", "na", "n/a", "nan", "null"}

KINDS = ("numeric", "ordinal", "binary", "identifier", "label")


@dataclass(frozen=True)
class ColumnDecl:
    name: str
    kind: str
    levels: tuple[str, ...] = ()  # ordinal order; for binary, first = dropped
    sentinel_missing: bool = False  # treat -1 as missing

    def __post_init__(self):
        if self.kind not in KINDS:
            raise SchemaError(f"column {self.name!r}: unknown kind {self.kind!r}")
        if self.kind == "ordinal":
            if len(self.levels) < 2:
                raise SchemaError(f"ordinal column {self.name!r} needs ordered levels")
            if len(set(self.levels)) != len(self.levels):
                raise SchemaError(f"ordinal column {self.name!r} has duplicate levels")


@dataclass(frozen=True)
class ClinicalRecord:
    case_id: str
    values: Mapping[str, float | str | None]  # None == missing

    def __post_init__(self):
        if not self.case_id:
            raise ValidationError("record has an empty case_id")


@dataclass(frozen=True)
class ColumnSchema:
    decl: ColumnDecl
    median: float | None = None
    minv: float | None = None
    maxv: float | None = None
    mode: str | None = None
    rank_min: int | None = None
    rank_max: int | None = None

    @property
    def name(self) -> str:
        return self.decl.name

    def as_dict(self) -> dict:
        return {
            "name": self.decl.name,
            "kind": self.decl.kind,
            "levels": list(self.decl.levels),
            "sentinel_missing": self.decl.sentinel_missing,
            "median": self.median,
            "min": self.minv,
            "max": self.maxv,
            "mode": self.mode,
            "rank_min": self.rank_min,
            "rank_max": self.rank_max,
        }


@dataclass
class FeatureMatrix:
    ids: list[str]
    feature_names: list[str]
    data: np.ndarray
    labels: np.ndarray | None = None
    warnings: dict[str, int] = field(default_factory=dict)

    @property
    def n(self) -> int:
        return self.data.shape[0]

    def to_table(self) -> FeatureTable:
        return FeatureTable(tuple(self.ids), tuple(self.feature_names), self.data.copy())


def _is_missing(cell, sentinel: bool) -> bool:
    if cell is None:
        return True
    if isinstance(cell, str):
        return cell.strip().lower() in MISSING_TOKENS
    if sentinel and float(cell) == -1.0:
        return True
    return False


def _mode(values: Sequence[str]) -> str:
    counts: dict[str, int] = {}
    for v in values:
        counts[v] = counts.get(v, 0) + 1
    best = max(counts.values())
    # deterministic: first-seen among the most frequent
    for v in values:
        if counts[v] == best:
            return v
    raise AssertionError("unreachable")


def fit_schema(
    records: Sequence[ClinicalRecord], decls: Sequence[ColumnDecl]
) -> dict[str, ColumnSchema]:
    """Fit per-column statistics (median/min/max, mode, rank range)."""
    if not records:
        raise SchemaError("cannot fit a schema on zero records")
    seen = set()
    for rec in records:
        if rec.case_id in seen:
            raise SchemaError(f"duplicate case_id {rec.case_id!r}")
        seen.add(rec.case_id)

    schemas: dict[str, ColumnSchema] = {}
    for decl in decls:
        if decl.kind in ("identifier", "label"):
            schemas[decl.name] = ColumnSchema(decl=decl)
            continue
        observed = [
            rec.values.get(decl.name)
            for rec in records
            if not _is_missing(rec.values.get(decl.name), decl.sentinel_missing)
        ]
        if not observed:
            raise SchemaError(f"column {decl.name!r} has no non-missing values")
        if decl.kind == "numeric":
            vals = np.asarray([float(v) for v in observed], dtype=np.float64)
            schemas[decl.name] = ColumnSchema(
                decl=decl,
                median=float(np.median(vals)),
                minv=float(vals.min()),
                maxv=float(vals.max()),
            )
        elif decl.kind == "binary":
            cats = [str(v) for v in observed]
            uniq = sorted(set(cats))
            if len(uniq) > 2:
                raise SchemaError(
                    f"binary column {decl.name!r} has {len(uniq)} categories: {uniq}"
                )
            levels = decl.levels or tuple(uniq)
            for c in uniq:
                if c not in levels:
                    raise SchemaError(
                        f"binary column {decl.name!r}: category {c!r} not in declared levels"
                    )
            schemas[decl.name] = ColumnSchema(
                decl=ColumnDecl(decl.name, "binary", tuple(levels), decl.sentinel_missing),
                mode=_mode(cats),
            )
        elif decl.kind == "ordinal":
            cats = [str(v) for v in observed]
            rank = {lev: i for i, lev in enumerate(decl.levels)}
            for c in cats:
                if c not in rank:
                    raise SchemaError(
                        f"ordinal column {decl.name!r}: level {c!r} not in declared order"
                    )
            ranks = [rank[c] for c in cats]
            schemas[decl.name] = ColumnSchema(
                decl=decl,
                mode=_mode(cats),
                rank_min=min(ranks),
                rank_max=max(ranks),
            )
    return schemas


def transform(
    records: Sequence[ClinicalRecord],
    schemas: Mapping[str, ColumnSchema],
    label_column: str | None = None,
) -> FeatureMatrix:
    """Impute, encode and scale records against fitted schemas."""
    ids = []
    for rec in records:
        if not rec.case_id:
            raise ValidationError("record has an empty case_id")
        ids.append(rec.case_id)

    ordered = [s for s in schemas.values() if s.decl.kind not in ("identifier", "label")]
    names: list[str] = []
    warnings: dict[str, int] = {}
    cols = []
    for schema in ordered:
        decl = schema.decl
        raw = [rec.values.get(decl.name) for rec in records]
        missing = [_is_missing(v, decl.sentinel_missing) for v in raw]
        if decl.kind == "numeric":
            vals = np.asarray(
                [schema.median if m else float(v) for v, m in zip(raw, missing)],
                dtype=np.float64,
            )
            span = schema.maxv - schema.minv
            col = (vals - schema.minv) / span if span > 0 else np.zeros_like(vals)
        elif decl.kind == "ordinal":
            rank = {lev: i for i, lev in enumerate(decl.levels)}
            filled = []
            for v, m in zip(raw, missing):
                cat = schema.mode if m else str(v)
                if cat not in rank:
                    raise SchemaError(
                        f"ordinal column {decl.name!r}: level {cat!r} absent from schema"
                    )
                filled.append(rank[cat])
            vals = np.asarray(filled, dtype=np.float64)
            span = schema.rank_max - schema.rank_min
            col = (vals - schema.rank_min) / span if span > 0 else np.zeros_like(vals)
        elif decl.kind == "binary":
            if len(decl.levels) < 2:
                # drop-first on a single-category column leaves no columns
                continue
            kept = decl.levels[1]
            known = set(decl.levels)
            filled = []
            for v, m in zip(raw, missing):
                cat = schema.mode if m else str(v)
                if cat not in known:
                    warnings[decl.name] = warnings.get(decl.name, 0) + 1
                    cat = schema.mode
                filled.append(1.0 if cat == kept else 0.0)
            col = np.asarray(filled, dtype=np.float64)
        else:  # pragma: no cover - filtered out above
            continue
        if not np.isfinite(col).all():
            raise ValidationError(f"column {decl.name!r}: non-finite value after scaling")
        names.append(f"{decl.name}={kept}" if decl.kind == "binary" else decl.name)
        cols.append(col)

    data = np.column_stack(cols) if cols else np.zeros((len(ids), 0))

    labels = None
    if label_column is not None:
        labels = np.empty(len(records), dtype=np.int64)
        for i, rec in enumerate(records):
            v = rec.values.get(label_column)
            if _is_missing(v, False):
                raise ValidationError(
                    f"record {rec.case_id!r}: missing label {label_column!r}"
                )
            try:
                lab = int(float(v))
            except (TypeError, ValueError):
                raise ValidationError(
                    f"record {rec.case_id!r}: label {v!r} is not binary"
                ) from None
            if lab not in (0, 1):
                raise ValidationError(
                    f"record {rec.case_id!r}: label {v!r} is not binary"
                )
            labels[i] = lab

    return FeatureMatrix(
        ids=ids, feature_names=names, data=data, labels=labels, warnings=warnings
    )


def load_records(path, decls: Sequence[ColumnDecl], id_column: str = "case_id"):
    """Parse a clinical CSV into typed records (numeric cells to float)."""
    path = Path(path)
    by_name = {d.name: d for d in decls}
    records: list[ClinicalRecord] = []
    with open(path, encoding="utf-8", newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or id_column not in reader.fieldnames:
            raise ValidationError(f"{path}: missing id column {id_column!r}")
        for rownum, row in enumerate(reader, start=1):
            values: dict[str, float | str | None] = {}
            for name, cell in row.items():
                if name == id_column or name not in by_name:
                    continue
                decl = by_name[name]
                if cell is None or cell.strip().lower() in MISSING_TOKENS:
                    values[name] = None
                elif decl.kind == "numeric" or decl.kind == "label":
                    try:
                        num = float(cell)
                    except ValueError:
                        raise ValidationError(
                            f"{path}: row {rownum} column {name!r}: non-numeric {cell!r}"
                        ) from None
                    values[name] = None if (decl.sentinel_missing and num == -1.0) else num
                else:
                    cell = cell.strip()
                    if decl.sentinel_missing and cell == "-1":
                        values[name] = None
                    else:
                        values[name] = cell
            records.append(ClinicalRecord(case_id=row[id_column], values=values))
    return records


# ---------------------------------------------------------------------------
# stratified splitting
# ---------------------------------------------------------------------------

def _allocate(count: int, fractions: Sequence[float]) -> list[int]:
    """Largest-remainder apportionment of `count` items across fractions."""
    exact = [count * f for f in fractions]
    base = [int(np.floor(e)) for e in exact]
    short = count - sum(base)
    remainders = sorted(
        range(len(fractions)), key=lambda j: (-(exact[j] - base[j]), j)
    )
    for j in remainders[:short]:
        base[j] += 1
    return base


def stratified_split_indices(labels, fractions, seed: int):
    """Per-class largest-remainder split; returns one index array per fraction.

    Each class's share of every split differs from its exact proportion by
    less than one sample. Deterministic under seed.
    """
    y = np.asarray(labels)
    fractions = tuple(float(f) for f in fractions)
    if any(f <= 0 for f in fractions):
        raise StratifyError(f"fractions must be positive, got {fractions}")
    if abs(sum(fractions) - 1.0) > 1e-9:
        raise StratifyError(f"fractions must sum to 1, got {sum(fractions)}")
    classes, counts = np.unique(y, return_counts=True)
    alloc = {c: _allocate(int(n), fractions) for c, n in zip(classes, counts)}
    for c, parts in alloc.items():
        if any(p == 0 for p in parts):
            detail = ", ".join(f"class {cc}: {nn}" for cc, nn in zip(classes, counts))
            raise StratifyError(
                f"class {c} too small to stratify into {len(fractions)} splits ({detail})"
            )
    rng = np.random.default_rng(seed)
    splits: list[list[int]] = [[] for _ in fractions]
    for c in classes:
        members = np.nonzero(y == c)[0]
        rng.shuffle(members)
        start = 0
        for j, take in enumerate(alloc[c]):
            splits[j].extend(members[start : start + take].tolist())
            start += take
    return tuple(np.asarray(sorted(s), dtype=np.int64) for s in splits)


def split_stratified(matrix: FeatureMatrix, fractions, seed: int):
    """Split a FeatureMatrix into per-fraction FeatureMatrix parts."""
    if matrix.labels is None:
        raise StratifyError("matrix has no labels to stratify on")
    parts = stratified_split_indices(matrix.labels, fractions, seed)
    out = []
    for idx in parts:
        out.append(
            FeatureMatrix(
                ids=[matrix.ids[i] for i in idx],
                feature_names=list(matrix.feature_names),
                data=matrix.data[idx],
                labels=matrix.labels[idx],
                warnings=dict(matrix.warnings),
            )
        )
    return tuple(out)
