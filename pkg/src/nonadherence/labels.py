"""Adherence label type shared by extraction, cohort files and analyses."""

from __future__ import annotations

from dataclasses import dataclass

NONADHERENCE_TYPES = ("missed", "different_dose", "different_medication", "different_timing")
LABEL_SOURCES = ("llm", "mock", "annotation", "synthetic")


class LabelInvariantError(ValueError):
    pass


@dataclass(frozen=True)
class AdherenceLabel:
    non_adherent: bool
    types: tuple[str, ...] = ()
    evidence: tuple[str, ...] = ()
    source: str = "annotation"

    def __post_init__(self):
        types = tuple(t for t in NONADHERENCE_TYPES if t in set(self.types))
        unknown = set(self.types) - set(NONADHERENCE_TYPES)
        if unknown:
            raise LabelInvariantError(f"unknown non-adherence types: {sorted(unknown)}")
        object.__setattr__(self, "types", types)
        object.__setattr__(self, "evidence", tuple(self.evidence))
        if not self.non_adherent and (self.types or self.evidence):
            raise LabelInvariantError("an adherent label carries no types and no evidence")
        if self.source not in LABEL_SOURCES:
            raise LabelInvariantError(f"unknown label source {self.source!r}")

    def check_evidence(self, note: str) -> None:
        missing = [e for e in self.evidence if e not in note]
        if missing:
            raise LabelInvariantError(f"evidence not found verbatim in note: {missing!r}")

    @property
    def primary_type(self) -> str | None:
        return self.types[0] if self.types else None


ADHERENT = AdherenceLabel(False)


def label_to_dict(label: AdherenceLabel) -> dict:
    return {
        "non_adherent": label.non_adherent,
        "types": list(label.types),
        "evidence": list(label.evidence),
        "source": label.source,
    }


def label_from_dict(d: dict) -> AdherenceLabel:
    return AdherenceLabel(
        non_adherent=bool(d["non_adherent"]),
        types=tuple(d.get("types", ())),
        evidence=tuple(d.get("evidence", ())),
        source=d.get("source", "annotation"),
    )

