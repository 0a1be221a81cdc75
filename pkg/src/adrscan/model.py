"""Patient/event/prescription data model and the per-patient interval algebra.

Ages are integer days since birth. A patient's record maps each age to the
set of event codes (``events``) and drugcodes (``prescriptions``) recorded on
that day. The cohort keeps the same rows in columnar numpy form so the
cohort-wide counting in :mod:`adrscan.index` can stay vectorised.
"""
from __future__ import annotations

import re
from dataclasses import dataclass, field
from functools import cached_property
from typing import Iterable, Iterator, Mapping

import numpy as np

ERA_GAP_DAYS = 386
FIRST_YEAR_DAYS = 365
FINAL_RX_DAYS = 30

_CODE_RE = re.compile(r"^([^.]{1,5})(\.*)$")
_DRUG_RE = re.compile(r"^\d{9}$")


def code_level(code: str) -> int:
    """Level of a 5-character code: the count of leading non-'.' characters."""
    m = _CODE_RE.match(code)
    if len(code) != 5 or m is None:
        raise ValueError(f"invalid event code {code!r}")
    return len(m.group(1))


def is_code(code: str) -> bool:
    try:
        code_level(code)
    except ValueError:
        return False
    return True


def parent_code(code: str) -> str | None:
    """Code one level up, '.'-padded; ``None`` for level-1 codes."""
    level = code_level(code)
    if level == 1:
        return None
    return code[: level - 1] + "." * (6 - level)


def is_drug(drug: str) -> bool:
    return bool(_DRUG_RE.match(drug))


@dataclass(frozen=True)
class AgeInterval:
    """Inclusive integer interval ``[lo .. hi]``. ``EMPTY`` is the only interval with lo > hi."""

    lo: int
    hi: int

    def __post_init__(self):
        if self.lo > self.hi and (self.lo, self.hi) != (0, -1):
            raise ValueError(f"interval lo={self.lo} > hi={self.hi}; use EMPTY")

    @property
    def is_empty(self) -> bool:
        return self.lo > self.hi

    def __bool__(self) -> bool:
        return not self.is_empty

    def __contains__(self, age: int) -> bool:
        return self.lo <= age <= self.hi

    def __len__(self) -> int:
        return max(0, self.hi - self.lo + 1)

    def __repr__(self) -> str:
        return "EMPTY" if self.is_empty else f"[{self.lo}..{self.hi}]"

    @classmethod
    def clamped(cls, lo: int, hi: int) -> "AgeInterval":
        """Interval with the lower bound clamped at age 0; EMPTY if nothing remains."""
        lo = max(0, lo)
        if hi < lo:
            return EMPTY
        return cls(lo, hi)


EMPTY = AgeInterval(0, -1)


@dataclass(frozen=True)
class PatientRecord:
    patient_id: str
    registration_age: int
    events: Mapping[int, frozenset[str]] = field(default_factory=dict)
    prescriptions: Mapping[int, frozenset[str]] = field(default_factory=dict)

    def events_at(self, age: int) -> frozenset[str]:
        return self.events.get(age, frozenset())

    def prescriptions_at(self, age: int) -> frozenset[str]:
        return self.prescriptions.get(age, frozenset())

    @property
    def max_age(self) -> int | None:
        ages = [a for a, s in self.events.items() if s] + [a for a, s in self.prescriptions.items() if s]
        return max(ages) if ages else None


def recorded_ages(patient: PatientRecord, kind: str) -> set[int]:
    if kind == "events":
        table = patient.events
    elif kind == "prescriptions":
        table = patient.prescriptions
    else:
        raise ValueError(f"kind must be 'events' or 'prescriptions', got {kind!r}")
    return {age for age, items in table.items() if items}


def prescription_ages(patient: PatientRecord, drug: str) -> set[int]:
    return {age for age, drugs in patient.prescriptions.items() if drug in drugs}


def first_prescription(patient: PatientRecord, drug: str) -> int | None:
    ages = prescription_ages(patient, drug)
    return min(ages) if ages else None


def era_starts(patient: PatientRecord, drug: str) -> list[int]:
    """Ages at which ``drug`` is prescribed after at least 386 drug-free days.

    The first prescription always starts an era. Each later prescription is
    compared with the nearest strictly earlier prescription of the same drug.
    """
    ages = sorted(prescription_ages(patient, drug))
    if not ages:
        return []
    starts = [ages[0]]
    for prev, cur in zip(ages, ages[1:]):
        if cur - prev >= ERA_GAP_DAYS:
            starts.append(cur)
    return starts


def era_interval(patient: PatientRecord, drug: str, t1: int, t2: int, k: int = 1) -> AgeInterval:
    """Window ``[start_k + t1 .. start_k + t2]`` around the k-th exposure era (1-based)."""
    if t1 > t2:
        raise ValueError(f"t1={t1} > t2={t2}")
    if k < 1:
        raise ValueError("k is 1-based")
    starts = era_starts(patient, drug)
    if len(starts) < k:
        return EMPTY
    s = starts[k - 1]
    return AgeInterval.clamped(s + t1, s + t2)


def events_in_interval(patient: PatientRecord, interval: AgeInterval) -> set[str]:
    if interval.is_empty:
        return set()
    out: set[str] = set()
    for age, codes in patient.events.items():
        if age in interval:
            out |= codes
    return out


def occurs_first_era(code: str, drug: str, patient: PatientRecord, t1: int, t2: int) -> int:
    return int(code in events_in_interval(patient, era_interval(patient, drug, t1, t2, 1)))


def occurs_per_era(code: str, drug: str, patient: PatientRecord, t1: int, t2: int) -> int:
    if t1 > t2:
        raise ValueError(f"t1={t1} > t2={t2}")
    total = 0
    for s in era_starts(patient, drug):
        if code in events_in_interval(patient, AgeInterval.clamped(s + t1, s + t2)):
            total += 1
    return total


class Cohort:
    """Set of patients in columnar form.

    Event rows are ``(ev_patient, ev_age, ev_code)`` and prescription rows
    ``(rx_patient, rx_age, rx_drug)``, where patient/code/drug columns index
    into ``patient_ids``, ``codes`` and ``drugs``. Rows are deduplicated and
    sorted by (patient, age, item). ``end_age`` is each patient's maximum
    recorded age on the raw rows; it is carried through preprocessing so the
    final-30-days exclusion keeps referring to the same clock.
    """

    def __init__(
        self,
        patient_ids: list[str],
        registration_age: np.ndarray,
        events: tuple[np.ndarray, np.ndarray, np.ndarray],
        prescriptions: tuple[np.ndarray, np.ndarray, np.ndarray],
        codes: list[str],
        drugs: list[str],
        code_tree=None,
        preprocessed: bool = False,
        end_age: np.ndarray | None = None,
    ):
        if len(set(patient_ids)) != len(patient_ids):
            raise ValueError("patient ids must be unique")
        self.patient_ids = list(patient_ids)
        self.registration_age = _frozen(np.asarray(registration_age, dtype=np.int64))
        self.codes = list(codes)
        self.drugs = list(drugs)
        self.code_tree = code_tree
        self.preprocessed = preprocessed

        self.ev_patient, self.ev_age, self.ev_code = _sorted_rows(*events)
        self.rx_patient, self.rx_age, self.rx_drug = _sorted_rows(*prescriptions)
        if end_age is None:
            end_age = np.full(len(self.patient_ids), -1, dtype=np.int64)
            np.maximum.at(end_age, self.ev_patient, self.ev_age)
            np.maximum.at(end_age, self.rx_patient, self.rx_age)
        self.end_age = _frozen(np.asarray(end_age, dtype=np.int64))

    @classmethod
    def from_rows(
        cls,
        patients: Iterable[tuple[str, int]],
        event_rows: Iterable[tuple[str, int, str]],
        prescription_rows: Iterable[tuple[str, int, str]],
        code_tree=None,
    ) -> "Cohort":
        patients = list(patients)
        pids = [p for p, _ in patients]
        pos = {p: i for i, p in enumerate(pids)}
        ev = list(event_rows)
        rx = list(prescription_rows)
        codes = sorted({c for _, _, c in ev})
        drugs = sorted({d for _, _, d in rx})
        cpos = {c: i for i, c in enumerate(codes)}
        dpos = {d: i for i, d in enumerate(drugs)}
        return cls(
            pids,
            np.array([a for _, a in patients], dtype=np.int64),
            (
                np.array([pos[p] for p, _, _ in ev], dtype=np.int64),
                np.array([a for _, a, _ in ev], dtype=np.int64),
                np.array([cpos[c] for _, _, c in ev], dtype=np.int64),
            ),
            (
                np.array([pos[p] for p, _, _ in rx], dtype=np.int64),
                np.array([a for _, a, _ in rx], dtype=np.int64),
                np.array([dpos[d] for _, _, d in rx], dtype=np.int64),
            ),
            codes,
            drugs,
            code_tree=code_tree,
        )

    @classmethod
    def from_records(cls, records: Iterable[PatientRecord], code_tree=None) -> "Cohort":
        records = list(records)
        ev = [(r.patient_id, a, c) for r in records for a, cs in r.events.items() for c in cs]
        rx = [(r.patient_id, a, d) for r in records for a, ds in r.prescriptions.items() for d in ds]
        return cls.from_rows([(r.patient_id, r.registration_age) for r in records], ev, rx, code_tree)

    def __len__(self) -> int:
        return len(self.patient_ids)

    @cached_property
    def patient_index(self) -> dict[str, int]:
        return {p: i for i, p in enumerate(self.patient_ids)}

    @cached_property
    def code_index(self) -> dict[str, int]:
        return {c: i for i, c in enumerate(self.codes)}

    @cached_property
    def drug_index(self) -> dict[str, int]:
        return {d: i for i, d in enumerate(self.drugs)}

    @cached_property
    def index(self):
        from .index import CohortIndex

        return CohortIndex(self)

    def event_rows(self) -> Iterator[tuple[str, int, str]]:
        for p, a, c in zip(self.ev_patient.tolist(), self.ev_age.tolist(), self.ev_code.tolist()):
            yield self.patient_ids[p], a, self.codes[c]

    def prescription_rows(self) -> Iterator[tuple[str, int, str]]:
        for p, a, d in zip(self.rx_patient.tolist(), self.rx_age.tolist(), self.rx_drug.tolist()):
            yield self.patient_ids[p], a, self.drugs[d]

    @cached_property
    def _records(self) -> dict[str, PatientRecord]:
        events: dict[int, dict[int, set[str]]] = {}
        for p, a, c in zip(self.ev_patient.tolist(), self.ev_age.tolist(), self.ev_code.tolist()):
            events.setdefault(p, {}).setdefault(a, set()).add(self.codes[c])
        rx: dict[int, dict[int, set[str]]] = {}
        for p, a, d in zip(self.rx_patient.tolist(), self.rx_age.tolist(), self.rx_drug.tolist()):
            rx.setdefault(p, {}).setdefault(a, set()).add(self.drugs[d])
        out = {}
        for i, pid in enumerate(self.patient_ids):
            out[pid] = PatientRecord(
                pid,
                int(self.registration_age[i]),
                {a: frozenset(s) for a, s in events.get(i, {}).items()},
                {a: frozenset(s) for a, s in rx.get(i, {}).items()},
            )
        return out

    def patient(self, patient_id: str) -> PatientRecord:
        return self._records[patient_id]

    def records(self) -> Iterator[PatientRecord]:
        return iter(self._records.values())

    def description(self, code: str) -> str:
        if self.code_tree is None:
            return ""
        return self.code_tree.description(code)

    def _replace(self, ev_keep: np.ndarray, rx_keep: np.ndarray, preprocessed: bool) -> "Cohort":
        return Cohort(
            self.patient_ids,
            self.registration_age,
            (self.ev_patient[ev_keep], self.ev_age[ev_keep], self.ev_code[ev_keep]),
            (self.rx_patient[rx_keep], self.rx_age[rx_keep], self.rx_drug[rx_keep]),
            self.codes,
            self.drugs,
            code_tree=self.code_tree,
            preprocessed=preprocessed,
            end_age=self.end_age,
        )


def _frozen(a: np.ndarray) -> np.ndarray:
    a.setflags(write=False)
    return a


def _sorted_rows(patient, age, item):
    patient = np.asarray(patient, dtype=np.int64)
    age = np.asarray(age, dtype=np.int64)
    item = np.asarray(item, dtype=np.int64)
    if not (len(patient) == len(age) == len(item)):
        raise ValueError("row columns differ in length")
    if len(age) and age.min() < 0:
        raise ValueError("ages must be non-negative")
    if len(age):
        rows = np.unique(np.stack([patient, age, item], axis=1), axis=0)
        patient, age, item = rows[:, 0].copy(), rows[:, 1].copy(), rows[:, 2].copy()
    return _frozen(patient), _frozen(age), _frozen(item)


def apply_exclusions(cohort: Cohort) -> Cohort:
    """Drop first-year events and final-30-day prescriptions without the double-use guard.

    Idempotent: both cutoffs depend only on registration age and the raw
    ``end_age``, which never change.
    """
    ev_keep = cohort.ev_age >= cohort.registration_age[cohort.ev_patient] + FIRST_YEAR_DAYS
    rx_keep = cohort.rx_age <= cohort.end_age[cohort.rx_patient] - FINAL_RX_DAYS
    return cohort._replace(ev_keep, rx_keep, preprocessed=True)


def preprocess(cohort: Cohort) -> Cohort:
    if cohort.preprocessed:
        raise ValueError("cohort is already preprocessed")
    return apply_exclusions(cohort)
