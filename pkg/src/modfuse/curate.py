"""Keyword/regex curation of scan manifests by series description.

Rules are case-insensitive regexes grouped into per-modality include
lists and a global exclude list; exclusion wins over inclusion, and the
first matching exclude pattern is reported as the drop reason. Default
patterns are word-boundary-aware so e.g. "cortical" does not trip the
"cor" (coronal) exclusion.
"""

import csv
import json
import re
from dataclasses import dataclass, field
from pathlib import Path

from .errors import ValidationError
from .io import atomic_write_text

MODALITIES = ("CT", "MR")

DEFAULT_RULES = {
    "version": "default-1",
    "include": {
        "CT": [
            r"\barterial\b",
            r"\bvenous\b",
            r"\bnephrographic\b",
            r"\bportal\b",
            r"\bdelay(ed)?\b",
            r"\baxial\b",
        ],
        "MR": [
            r"\bt1\b",
            r"\bt2\b",
            r"\bflair\b",
            r"\bdwi\b",
            r"\baxial\b",
            r"\bpost\b",
        ],
    },
    "exclude": [
        r"\bscout\b",
        r"\blocalizer\b",
        r"\bpre-?contrast\b",
        r"\bsagittal\b",
        r"\bsag\b",
        r"\bcoronal\b",
        r"\bcor\b",
        r"\bsurvey\b",
    ],
}


@dataclass(frozen=True)
class SeriesRecord:
    patient_id: str
    series_uid: str
    modality: str  # CT | MR
    series_description: str

    def __post_init__(self):
        if self.modality not in MODALITIES:
            raise ValidationError(
                f"series {self.series_uid!r}: modality must be one of {MODALITIES}, "
                f"got {self.modality!r}"
            )


@dataclass(frozen=True)
class Decision:
    action: str  # keep | drop
    reason: str | None = None  # drop reason: "empty-description" | "exclude:<pat>" | "no-include-match"

    @property
    def kept(self) -> bool:
        return self.action == "keep"


@dataclass
class FilterRuleSet:
    include: dict[str, list[str]]
    exclude: list[str]
    version: str = "unversioned"
    _compiled_include: dict = field(default_factory=dict, repr=False)
    _compiled_exclude: list = field(default_factory=list, repr=False)

    def __post_init__(self):
        try:
            self._compiled_exclude = [re.compile(p, re.IGNORECASE) for p in self.exclude]
            self._compiled_include = {
                mod: [re.compile(p, re.IGNORECASE) for p in pats]
                for mod, pats in self.include.items()
            }
        except re.error as exc:
            raise ValidationError(f"rule pattern does not compile: {exc}") from exc


def default_rules() -> FilterRuleSet:
    return FilterRuleSet(
        include={m: list(p) for m, p in DEFAULT_RULES["include"].items()},
        exclude=list(DEFAULT_RULES["exclude"]),
        version=DEFAULT_RULES["version"],
    )


def load_rules(path) -> FilterRuleSet:
    with open(path, encoding="utf-8") as fh:
        raw = json.load(fh)
    return FilterRuleSet(
        include={m: list(p) for m, p in raw.get("include", {}).items()},
        exclude=list(raw.get("exclude", [])),
        version=str(raw.get("version", "unversioned")),
    )


def save_rules(rules: FilterRuleSet, path) -> None:
    payload = {"version": rules.version, "include": rules.include, "exclude": rules.exclude}
    atomic_write_text(path, json.dumps(payload, indent=2, sort_keys=True) + "\n")


def classify(record: SeriesRecord, rules: FilterRuleSet) -> Decision:
    """Keep/drop one series; exclusion beats inclusion, first match reported."""
    desc = record.series_description
    if not desc.strip():
        return Decision("drop", "empty-description")
    for pat, compiled in zip(rules.exclude, rules._compiled_exclude):
        if compiled.search(desc):
            return Decision("drop", f"exclude:{pat}")
    for compiled in rules._compiled_include.get(record.modality, []):
        if compiled.search(desc):
            return Decision("keep")
    return Decision("drop", "no-include-match")


def classify_manifest(records, rules: FilterRuleSet) -> list[Decision]:
    return [classify(rec, rules) for rec in records]


@dataclass(frozen=True)
class CohortSummary:
    """The seven per-cohort filtering statistics."""

    total_scans: int
    kept_scans: int
    pct_kept: float  # one decimal
    unique_patients: int
    avg_scans_per_patient: float  # one decimal, over kept scans
    ct_scans: int  # kept
    mr_scans: int  # kept

    def as_dict(self) -> dict:
        return {
            "total_scans": self.total_scans,
            "kept_scans": self.kept_scans,
            "pct_kept": self.pct_kept,
            "unique_patients": self.unique_patients,
            "avg_scans_per_patient": self.avg_scans_per_patient,
            "ct_scans": self.ct_scans,
            "mr_scans": self.mr_scans,
        }


def summarize(records, decisions) -> CohortSummary:
    """Cohort statistics over a manifest and its keep/drop decisions."""
    records = list(records)
    decisions = list(decisions)
    if len(records) != len(decisions):
        raise ValidationError(
            f"{len(decisions)} decisions do not cover {len(records)} records"
        )
    kept = [r for r, d in zip(records, decisions) if d.kept]
    total = len(records)
    n_kept = len(kept)
    patients = {r.patient_id for r in kept}
    pct = round(100.0 * n_kept / total, 1) if total else 0.0
    avg = round(n_kept / len(patients), 1) if patients else 0.0
    return CohortSummary(
        total_scans=total,
        kept_scans=n_kept,
        pct_kept=pct,
        unique_patients=len(patients),
        avg_scans_per_patient=avg,
        ct_scans=sum(1 for r in kept if r.modality == "CT"),
        mr_scans=sum(1 for r in kept if r.modality == "MR"),
    )


_SUMMARY_ROWS = (
    ("Total original scans", "total_scans", "{:d}"),
    ("Total filtered scans", "kept_scans", "{:d}"),
    ("Percentage kept", "pct_kept", "{:.1f}%"),
    ("Unique patients", "unique_patients", "{:d}"),
    ("Avg scans per patient", "avg_scans_per_patient", "{:.1f}"),
    ("CT scans", "ct_scans", "{:d}"),
    ("MRI scans", "mr_scans", "{:d}"),
)


def render_summary_table(summaries: dict[str, CohortSummary]) -> str:
    """Metric rows x cohort columns text table."""
    cohorts = list(summaries)
    name_w = max(len(r[0]) for r in _SUMMARY_ROWS)
    col_w = [max(len(c), 8) for c in cohorts]
    header = f"{'Metric':<{name_w}}  " + "  ".join(
        f"{c:>{w}}" for c, w in zip(cohorts, col_w)
    )
    lines = [header, "-" * len(header)]
    for label, attr, fmt in _SUMMARY_ROWS:
        cells = [
            f"{fmt.format(getattr(summaries[c], attr)):>{w}}"
            for c, w in zip(cohorts, col_w)
        ]
        lines.append(f"{label:<{name_w}}  " + "  ".join(cells))
    return "\n".join(lines) + "\n"


def load_manifest(path) -> list[SeriesRecord]:
    """Read a manifest CSV (patient_id, series_uid, modality, series_description)."""
    path = Path(path)
    records = []
    seen_uids = set()
    with open(path, encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or [h.strip() for h in header[:4]] != [
            "patient_id",
            "series_uid",
            "modality",
            "series_description",
        ]:
            raise ValidationError(
                f"{path}: expected header patient_id,series_uid,modality,series_description"
            )
        for rownum, rec in enumerate(reader, start=1):
            if len(rec) < 4:
                raise ValidationError(f"{path}: row {rownum} has {len(rec)} cells, expected 4")
            if rec[1] in seen_uids:
                raise ValidationError(f"{path}: duplicate series_uid {rec[1]!r} at row {rownum}")
            seen_uids.add(rec[1])
            records.append(
                SeriesRecord(
                    patient_id=rec[0],
                    series_uid=rec[1],
                    modality=rec[2],
                    series_description=rec[3],
                )
            )
    return records


def decisions_csv(records, decisions) -> str:
    lines = ["series_uid,action,reason"]
    for rec, dec in zip(records, decisions):
        lines.append(f"{rec.series_uid},{dec.action},{dec.reason or ''}")
    return "\n".join(lines) + "\n"


def write_decisions(records, decisions, path) -> None:
    atomic_write_text(path, decisions_csv(records, decisions))
