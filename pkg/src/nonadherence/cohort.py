"""Visit pairing, cohort filters, independence dedup and outcome labels.

Also owns the columnar (CSV) encounter and cohort file formats. Note texts
live in a separate JSON object keyed by ``note_id``.
"""

from __future__ import annotations

import csv
import datetime as dt
import json
import math
from collections import OrderedDict
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Iterable, Sequence

from .labels import AdherenceLabel

HYPERTENSION_MEDICATIONS = (
    "amlodipine",
    "losartan",
    "lisinopril",
    "benazepril",
    "carvedilol",
    "hydralazine",
    "hydrochlorothiazide",
    "clonidine",
    "spironolactone",
    "metoprolol",
)
TOP_FIVE_MEDICATIONS = ("amlodipine", "lisinopril", "losartan", "hydrochlorothiazide", "metoprolol")

SEXES = ("female", "male")
RACES = ("asian", "black", "white", "other")
MARITAL_STATUSES = ("divorced", "married", "single", "widowed", "other")

MIN_INTERVAL_DAYS = 30
MAX_INTERVAL_DAYS = 365
OUTCOME_MAX_INTERVAL_DAYS = 182

NORMAL_SYSTOLIC = 120.0
NORMAL_DIASTOLIC = 80.0


class CohortError(ValueError):
    pass


class DuplicateEncounterError(CohortError):
    pass


class MissingPressureError(CohortError):
    pass


class MissingLabelError(CohortError):
    pass


def _check_pressure(value: float | None, name: str) -> None:
    if value is not None and not (30.0 < value < 350.0):
        raise CohortError(f"{name} pressure {value} outside (30, 350) mmHg")


@dataclass(frozen=True)
class Encounter:
    patient_id: str
    date: dt.date
    prescriptions: tuple[str, ...] = ()
    note_text: str | None = None
    systolic: float | None = None
    diastolic: float | None = None
    note_id: str | None = None

    def __post_init__(self):
        if not isinstance(self.date, dt.date):
            raise CohortError(f"invalid encounter date {self.date!r}")
        object.__setattr__(self, "prescriptions", tuple(self.prescriptions))
        _check_pressure(self.systolic, "systolic")
        _check_pressure(self.diastolic, "diastolic")

    def medications(self, allowed: Sequence[str] = HYPERTENSION_MEDICATIONS) -> list[str]:
        """Canonical medications on this encounter, matched on exact lowercased token."""
        tokens = {p.strip().lower() for p in self.prescriptions}
        return [m for m in allowed if m in tokens]


@dataclass(frozen=True)
class VisitPair:
    patient_id: str
    first: Encounter
    second: Encounter

    def __post_init__(self):
        if not self.first.date < self.second.date:
            raise CohortError("visit pair must be strictly date ordered")
        if not self.first.patient_id == self.second.patient_id == self.patient_id:
            raise CohortError("visit pair mixes patients")

    @property
    def interval_days(self) -> int:
        return (self.second.date - self.first.date).days

    @property
    def pair_id(self) -> str:
        return f"{self.patient_id}:{self.first.date.isoformat()}:{self.second.date.isoformat()}"


@dataclass(frozen=True)
class CohortRecord:
    pair: VisitPair
    sex: str
    age: float
    race: str
    marital: str
    eci_count: int
    cci_count: int
    htn_duration_years: float
    primary_visits_prior_year: int
    adherence: AdherenceLabel | None = None

    def __post_init__(self):
        if self.sex not in SEXES:
            raise CohortError(f"unknown sex {self.sex!r}")
        if self.race not in RACES:
            raise CohortError(f"unknown race {self.race!r}")
        if self.marital not in MARITAL_STATUSES:
            raise CohortError(f"unknown marital status {self.marital!r}")
        if not 0 <= self.eci_count <= 31:
            raise CohortError(f"eci_count {self.eci_count} outside [0, 31]")
        if not 0 <= self.cci_count <= 17:
            raise CohortError(f"cci_count {self.cci_count} outside [0, 17]")

    @property
    def patient_id(self) -> str:
        return self.pair.patient_id

    @property
    def pair_id(self) -> str:
        return self.pair.pair_id

    @property
    def medication(self) -> str | None:
        """First top-five medication on the prescribing visit, if any."""
        meds = self.pair.first.medications(TOP_FIVE_MEDICATIONS)
        if not meds:
            meds = self.pair.first.medications()
        return meds[0] if meds else None

    @property
    def systolic_reduction(self) -> float | None:
        a, b = self.pair.first.systolic, self.pair.second.systolic
        return None if a is None or b is None else a - b

    @property
    def diastolic_reduction(self) -> float | None:
        a, b = self.pair.first.diastolic, self.pair.second.diastolic
        return None if a is None or b is None else a - b

    @property
    def outcome_normal_bp(self) -> int | None:
        if self.pair.second.systolic is None or self.pair.second.diastolic is None:
            return None
        return label_outcome(self)

    def with_adherence(self, label: AdherenceLabel | None) -> "CohortRecord":
        return replace(self, adherence=label)


@dataclass(frozen=True)
class PatientAttributes:
    patient_id: str
    sex: str | None = None
    age: float | None = None
    race: str | None = None
    marital: str | None = None
    eci_count: int | None = None
    cci_count: int | None = None
    htn_duration_years: float | None = None
    primary_visits_prior_year: int | None = None

    def complete(self) -> bool:
        return all(
            getattr(self, f) is not None
            for f in ("sex", "age", "race", "marital", "eci_count", "cci_count",
                      "htn_duration_years", "primary_visits_prior_year")
        )


def build_pairs(encounters: Iterable[Encounter]) -> list[VisitPair]:
    """Sliding-window pairs of consecutive visits within each patient."""
    by_patient: OrderedDict[str, list[Encounter]] = OrderedDict()
    for enc in encounters:
        by_patient.setdefault(enc.patient_id, []).append(enc)
    pairs = []
    for pid, visits in by_patient.items():
        visits = sorted(visits, key=lambda e: e.date)
        for a, b in zip(visits, visits[1:]):
            if a.date == b.date:
                raise DuplicateEncounterError(f"patient {pid} has two encounters on {a.date}")
            pairs.append(VisitPair(pid, a, b))
    return pairs


def filter_pairs(
    pairs: Iterable[VisitPair],
    min_days: int = MIN_INTERVAL_DAYS,
    max_days: int = MAX_INTERVAL_DAYS,
    medications: Sequence[str] = HYPERTENSION_MEDICATIONS,
    require_pressures: bool = False,
) -> list[VisitPair]:
    """Keep pairs with a listed medication at visit one, a note at visit two,
    and ``min_days <= interval <= max_days``."""
    if min_days >= max_days:
        raise ValueError("min_days must be below max_days")
    kept = []
    for pair in pairs:
        if not pair.first.medications(medications):
            continue
        if not (pair.second.note_text or "").strip():
            continue
        if not min_days <= pair.interval_days <= max_days:
            continue
        if require_pressures and None in (
            pair.first.systolic, pair.first.diastolic, pair.second.systolic, pair.second.diastolic
        ):
            continue
        kept.append(pair)
    return kept


def outcome_cohort_filter(pairs: Iterable[VisitPair]) -> list[VisitPair]:
    """Blood-pressure outcome subset: top-five drug, both pressures, <= 182 days."""
    return filter_pairs(
        pairs,
        max_days=OUTCOME_MAX_INTERVAL_DAYS,
        medications=TOP_FIVE_MEDICATIONS,
        require_pressures=True,
    )


def outcome_cohort_records(records: Iterable[CohortRecord]) -> list[CohortRecord]:
    keep = {id(p) for p in outcome_cohort_filter(r.pair for r in records)}
    return [r for r in records if id(r.pair) in keep]


def assemble_records(
    pairs: Iterable[VisitPair], patients: dict[str, PatientAttributes]
) -> list[CohortRecord]:
    """Attach patient attributes; pairs of patients with unknown demographics are dropped."""
    out = []
    for pair in pairs:
        attrs = patients.get(pair.patient_id)
        if attrs is None or not attrs.complete():
            continue
        out.append(
            CohortRecord(
                pair=pair,
                sex=attrs.sex,
                age=float(attrs.age),
                race=attrs.race,
                marital=attrs.marital,
                eci_count=int(attrs.eci_count),
                cci_count=int(attrs.cci_count),
                htn_duration_years=float(attrs.htn_duration_years),
                primary_visits_prior_year=int(attrs.primary_visits_prior_year),
            )
        )
    return out


def dedup_for_independence(records: Sequence[CohortRecord]) -> list[CohortRecord]:
    """One record per patient: the latest non-adherent pair if any, else the latest pair."""
    chosen: dict[str, CohortRecord] = {}

    def recency(r: CohortRecord):
        return (r.adherence.non_adherent, r.pair.first.date, r.pair.second.date)

    for r in records:
        if r.adherence is None:
            raise MissingLabelError(f"record {r.pair_id} has no adherence label")
        cur = chosen.get(r.patient_id)
        if cur is None or recency(r) > recency(cur):
            chosen[r.patient_id] = r
    keep = {id(r) for r in chosen.values()}
    return [r for r in records if id(r) in keep]


def label_outcome(record: CohortRecord) -> int:
    """1 when the second-visit pressure is normal (systolic < 120 and diastolic < 80)."""
    s, d = record.pair.second.systolic, record.pair.second.diastolic
    if s is None or d is None:
        raise MissingPressureError(f"record {record.pair_id} lacks second-visit pressures")
    return int(s < NORMAL_SYSTOLIC and d < NORMAL_DIASTOLIC)


# ---------------------------------------------------------------------------
# file formats

ENCOUNTER_COLUMNS = ("patient_id", "date", "prescriptions", "systolic", "diastolic", "note_id")
PATIENT_COLUMNS = (
    "patient_id", "sex", "age", "race", "marital", "eci_count", "cci_count",
    "htn_duration_years", "primary_visits_prior_year",
)
COHORT_COLUMNS = (
    "pair_id", "patient_id", "first_date", "second_date", "interval_days", "prescriptions",
    "first_systolic", "first_diastolic", "second_systolic", "second_diastolic",
    "first_note_id", "second_note_id",
    "sex", "age", "race", "marital", "eci_count", "cci_count", "htn_duration_years",
    "primary_visits_prior_year",
    "non_adherent", "adherence_types", "adherence_evidence", "adherence_source",
    "systolic_reduction", "diastolic_reduction", "outcome_normal_bp",
)


def _opt_float(s: str) -> float | None:
    s = s.strip()
    return None if s == "" else float(s)


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, bool):
        return "1" if v else "0"
    if isinstance(v, float):
        return repr(v) if not math.isnan(v) else ""
    return str(v)


def load_notes(path: str | Path) -> dict[str, str]:
    with open(path) as fh:
        notes = json.load(fh)
    if not isinstance(notes, dict):
        raise CohortError("notes file must hold a JSON object mapping note_id to text")
    return {str(k): str(v) for k, v in notes.items()}


def read_encounters(path: str | Path, notes: dict[str, str] | None = None) -> list[Encounter]:
    notes = notes or {}
    out = []
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        missing = set(ENCOUNTER_COLUMNS) - set(reader.fieldnames or ())
        if missing:
            raise CohortError(f"encounter file lacks columns {sorted(missing)}")
        for row in reader:
            note_id = row["note_id"].strip() or None
            out.append(
                Encounter(
                    patient_id=row["patient_id"].strip(),
                    date=dt.date.fromisoformat(row["date"].strip()),
                    prescriptions=tuple(p for p in row["prescriptions"].split(";") if p.strip()),
                    note_text=notes.get(note_id) if note_id else None,
                    systolic=_opt_float(row["systolic"]),
                    diastolic=_opt_float(row["diastolic"]),
                    note_id=note_id,
                )
            )
    return out


def read_patients(path: str | Path) -> dict[str, PatientAttributes]:
    def opt(conv, s):
        s = s.strip()
        return None if s in ("", "unknown") else conv(s)

    out = {}
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            out[row["patient_id"].strip()] = PatientAttributes(
                patient_id=row["patient_id"].strip(),
                sex=opt(str.lower, row["sex"]),
                age=opt(float, row["age"]),
                race=opt(str.lower, row["race"]),
                marital=opt(str.lower, row["marital"]),
                eci_count=opt(int, row["eci_count"]),
                cci_count=opt(int, row["cci_count"]),
                htn_duration_years=opt(float, row["htn_duration_years"]),
                primary_visits_prior_year=opt(int, row["primary_visits_prior_year"]),
            )
    return out


def _record_row(r: CohortRecord) -> dict[str, str]:
    p = r.pair
    lab = r.adherence
    row = {
        "pair_id": p.pair_id,
        "patient_id": p.patient_id,
        "first_date": p.first.date.isoformat(),
        "second_date": p.second.date.isoformat(),
        "interval_days": p.interval_days,
        "prescriptions": ";".join(p.first.prescriptions),
        "first_systolic": p.first.systolic,
        "first_diastolic": p.first.diastolic,
        "second_systolic": p.second.systolic,
        "second_diastolic": p.second.diastolic,
        "first_note_id": p.first.note_id,
        "second_note_id": p.second.note_id,
        "sex": r.sex,
        "age": r.age,
        "race": r.race,
        "marital": r.marital,
        "eci_count": r.eci_count,
        "cci_count": r.cci_count,
        "htn_duration_years": r.htn_duration_years,
        "primary_visits_prior_year": r.primary_visits_prior_year,
        "non_adherent": None if lab is None else lab.non_adherent,
        "adherence_types": None if lab is None else ";".join(lab.types),
        "adherence_evidence": None if lab is None else json.dumps(list(lab.evidence)),
        "adherence_source": None if lab is None else lab.source,
        "systolic_reduction": r.systolic_reduction,
        "diastolic_reduction": r.diastolic_reduction,
        "outcome_normal_bp": r.outcome_normal_bp,
    }
    return {k: _fmt(v) for k, v in row.items()}


def write_cohort(
    records: Sequence[CohortRecord], path: str | Path, notes_path: str | Path | None = None
) -> None:
    """Write one record per row; note texts (if any) go to ``notes_path`` as JSON."""
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=COHORT_COLUMNS, lineterminator="\n")
        w.writeheader()
        for r in records:
            w.writerow(_record_row(r))
    if notes_path is not None:
        notes = {}
        for r in records:
            for enc in (r.pair.first, r.pair.second):
                if enc.note_id and enc.note_text is not None:
                    notes[enc.note_id] = enc.note_text
        with open(notes_path, "w") as fh:
            json.dump(notes, fh, indent=1, sort_keys=True)
            fh.write("\n")


def read_cohort(path: str | Path, notes: dict[str, str] | None = None) -> list[CohortRecord]:
    notes = notes or {}
    out = []
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        missing = set(COHORT_COLUMNS) - set(reader.fieldnames or ())
        if missing:
            raise CohortError(f"cohort file lacks columns {sorted(missing)}")
        for row in reader:
            pid = row["patient_id"]
            n1 = row["first_note_id"] or None
            n2 = row["second_note_id"] or None
            first = Encounter(
                patient_id=pid,
                date=dt.date.fromisoformat(row["first_date"]),
                prescriptions=tuple(p for p in row["prescriptions"].split(";") if p),
                note_text=notes.get(n1) if n1 else None,
                systolic=_opt_float(row["first_systolic"]),
                diastolic=_opt_float(row["first_diastolic"]),
                note_id=n1,
            )
            second = Encounter(
                patient_id=pid,
                date=dt.date.fromisoformat(row["second_date"]),
                note_text=notes.get(n2) if n2 else None,
                systolic=_opt_float(row["second_systolic"]),
                diastolic=_opt_float(row["second_diastolic"]),
                note_id=n2,
            )
            label = None
            if row["non_adherent"] != "":
                label = AdherenceLabel(
                    non_adherent=row["non_adherent"] == "1",
                    types=tuple(t for t in row["adherence_types"].split(";") if t),
                    evidence=tuple(json.loads(row["adherence_evidence"] or "[]")),
                    source=row["adherence_source"] or "annotation",
                )
            out.append(
                CohortRecord(
                    pair=VisitPair(pid, first, second),
                    sex=row["sex"],
                    age=float(row["age"]),
                    race=row["race"],
                    marital=row["marital"],
                    eci_count=int(row["eci_count"]),
                    cci_count=int(row["cci_count"]),
                    htn_duration_years=float(row["htn_duration_years"]),
                    primary_visits_prior_year=int(row["primary_visits_prior_year"]),
                    adherence=label,
                )
            )
    return out


def attach_labels(
    records: Sequence[CohortRecord], labels: dict[str, AdherenceLabel]
) -> list[CohortRecord]:
    """Attach labels keyed by pair_id; records without a label keep ``None``."""
    return [r.with_adherence(labels.get(r.pair_id, r.adherence)) for r in records]
