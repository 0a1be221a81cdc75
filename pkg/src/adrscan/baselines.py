"""Observed-to-expected ratio, MUTARA unexpected leverage and HUNT rank ratio.

Each statistic has a per-code function matching its definition and a
vectorised ``*_values`` form over every code in the cohort, which is what
the rankers and the feature builder use.
"""
from __future__ import annotations

import hashlib
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .model import EMPTY, AgeInterval, Cohort, PatientRecord, events_in_interval, first_prescription, prescription_ages

OE_WINDOW = (0, 30)
CONTROL_WINDOW = (-810, -630)
PRE_WINDOW = (-30, -1)
DAY_ZERO = (0, 0)


class _Excluded:
    def __repr__(self):
        return "EXCLUDED"

    def __bool__(self):
        return False


EXCLUDED = _Excluded()


@dataclass(frozen=True)
class ContingencyCounts:
    n_de: int
    n_dot_e: int
    n_d_dot: int
    n_dot_dot: int
    window: tuple[int, int]


@dataclass(frozen=True)
class MutaraConfig:
    t1: int = 1
    t2: int = 30
    t3: int = 180
    rng_seed: int = 0

    def __post_init__(self):
        if self.t1 > self.t2:
            raise ValueError("t1 must be <= t2")
        if self.t3 <= 0:
            raise ValueError("t3 must be positive")

    @property
    def min_span(self) -> int:
        return abs(self.t2 - self.t1)


def descending_order(values: np.ndarray, codes: Sequence[str]) -> np.ndarray:
    """Indices sorting ``values`` descending, ties broken by ascending code text."""
    values = np.asarray(values, dtype=float)
    if len(values) == 0:
        return np.zeros(0, dtype=np.int64)
    return np.lexsort((np.asarray(codes, dtype=str), -values))


def _code_id(cohort: Cohort, code: str) -> int | None:
    return cohort.code_index.get(code)


# -- observed to expected ------------------------------------------------------


def contingency_table(cohort: Cohort, drug: str, t1: int, t2: int):
    """``(n_de, n_dot_e)`` arrays over cohort codes plus scalars ``n_d_dot, n_dot_dot``."""
    if t1 > t2:
        raise ValueError("t1 must be <= t2")
    idx = cohort.index
    hits = idx.era_hits(t1, t2)
    mask = idx.era_mask(drug)
    n_de = hits.windows_per_code(idx.n_codes, mask)
    n_dot_e = hits.windows_per_code(idx.n_codes)
    nonempty = hits.codes_per_window() > 0
    return n_de, n_dot_e, int((nonempty & mask).sum()), int(nonempty.sum())


def contingency(cohort: Cohort, code: str, drug: str, t1: int, t2: int) -> ContingencyCounts:
    n_de, n_dot_e, n_d_dot, n_dot_dot = contingency_table(cohort, drug, t1, t2)
    c = _code_id(cohort, code)
    if c is None:
        return ContingencyCounts(0, 0, n_d_dot, n_dot_dot, (t1, t2))
    return ContingencyCounts(int(n_de[c]), int(n_dot_e[c]), n_d_dot, n_dot_dot, (t1, t2))


def expected(counts: ContingencyCounts) -> float:
    if counts.n_dot_dot == 0:
        return 0.0
    return counts.n_d_dot * counts.n_dot_e / counts.n_dot_dot


def _expected_values(n_dot_e, n_d_dot, n_dot_dot):
    if n_dot_dot == 0:
        return np.zeros(len(n_dot_e))
    return n_d_dot * n_dot_e / n_dot_dot


def ic_from_counts(n_de, e):
    return np.log2((np.asarray(n_de, dtype=float) + 0.5) / (np.asarray(e, dtype=float) + 0.5))


def ic_values(cohort: Cohort, drug: str, t1: int, t2: int) -> np.ndarray:
    n_de, n_dot_e, n_d_dot, n_dot_dot = contingency_table(cohort, drug, t1, t2)
    return ic_from_counts(n_de, _expected_values(n_dot_e, n_d_dot, n_dot_dot))


def ic(cohort: Cohort, code: str, drug: str, t1: int, t2: int) -> float:
    counts = contingency(cohort, code, drug, t1, t2)
    return float(ic_from_counts(counts.n_de, expected(counts)))


def ic_delta_from_counts(n_de, e, n_de_ctrl, e_ctrl):
    n_de, e, n_de_ctrl, e_ctrl = (np.asarray(x, dtype=float) for x in (n_de, e, n_de_ctrl, e_ctrl))
    with np.errstate(divide="ignore", invalid="ignore"):
        e_star = np.where(e_ctrl > 0, n_de_ctrl * e / np.where(e_ctrl > 0, e_ctrl, 1.0), e)
    return np.log2((n_de + 0.5) / (e_star + 0.5))


def ic_delta_values(cohort: Cohort, drug: str) -> np.ndarray:
    n_de, n_dot_e, n_d_dot, n_dot_dot = contingency_table(cohort, drug, *OE_WINDOW)
    c_de, c_dot_e, c_d_dot, c_dot_dot = contingency_table(cohort, drug, *CONTROL_WINDOW)
    return ic_delta_from_counts(
        n_de,
        _expected_values(n_dot_e, n_d_dot, n_dot_dot),
        c_de,
        _expected_values(c_dot_e, c_d_dot, c_dot_dot),
    )


def ic_delta(cohort: Cohort, code: str, drug: str) -> float:
    c = _code_id(cohort, code)
    if c is None:
        return 0.0
    return float(ic_delta_values(cohort, drug)[c])


def zeta_values(cohort: Cohort, drug: str) -> tuple[np.ndarray, np.ndarray]:
    after = ic_values(cohort, drug, *OE_WINDOW)
    before = ic_values(cohort, drug, *PRE_WINDOW)
    same_day = ic_values(cohort, drug, *DAY_ZERO)
    return (before - after > 0).astype(int), (same_day - after > 0).astype(int)


def zeta_filters(cohort: Cohort, code: str, drug: str) -> tuple[int, int]:
    c = _code_id(cohort, code)
    if c is None:
        return 0, 0
    z1, z2 = zeta_values(cohort, drug)
    return int(z1[c]), int(z2[c])


# -- MUTARA / HUNT -------------------------------------------------------------


def keyed_uniform(seed: int, patient_id: str) -> float:
    """Uniform [0, 1) draw keyed by ``(seed, patient_id)``, independent of iteration order."""
    digest = hashlib.blake2b(f"{seed}\x1f{patient_id}".encode(), digest_size=8).digest()
    return int.from_bytes(digest, "big") / 2.0**64


def random_offset(seed: int, patient_id: str, n_choices: int) -> int:
    return min(int(keyed_uniform(seed, patient_id) * n_choices), n_choices - 1)


def _second_prescription(ages: list[int], first: int) -> int:
    later = [a for a in ages if a != first]
    if later and min(later) - first < 30:
        return min(later)
    return first


def mutara_window(patient: PatientRecord, drug: str, config: MutaraConfig):
    """Window of interest: post-exposure for exposed patients, random for unexposed.

    Returns ``EXCLUDED`` for an unexposed patient whose event history is
    empty or spans fewer than ``|t2 - t1|`` days.
    """
    first = first_prescription(patient, drug)
    if first is not None:
        second = _second_prescription(sorted(prescription_ages(patient, drug)), first)
        return AgeInterval.clamped(first + config.t1, second + config.t2)
    ages = [a for a, s in patient.events.items() if s]
    if not ages:
        return EXCLUDED
    lo, hi = min(ages), max(ages)
    w = config.min_span
    if hi - lo < w:
        return EXCLUDED
    r = random_offset(config.rng_seed, patient.patient_id, hi - lo - w + 1)
    return AgeInterval(lo + r, lo + r + w)


def filter_window(patient: PatientRecord, drug: str, config: MutaraConfig) -> AgeInterval:
    first = first_prescription(patient, drug)
    if first is None:
        return EMPTY
    return AgeInterval.clamped(first - config.t3, first - 1)


def unexpected_occurrence(code: str, drug: str, patient: PatientRecord, config: MutaraConfig) -> int:
    window = mutara_window(patient, drug, config)
    if window is EXCLUDED:
        raise ValueError(f"patient {patient.patient_id} is excluded (inactive)")
    if code not in events_in_interval(patient, window):
        return 0
    return int(code not in events_in_interval(patient, filter_window(patient, drug, config)))


@dataclass(frozen=True)
class MutaraWindows:
    included: np.ndarray  # bool per patient
    exposed: np.ndarray  # bool per patient
    lo: np.ndarray
    hi: np.ndarray
    filt_lo: np.ndarray  # meaningful where exposed
    filt_hi: np.ndarray


def mutara_windows(cohort: Cohort, drug: str, config: MutaraConfig) -> MutaraWindows:
    """Vectorised :func:`mutara_window` and :func:`filter_window` over all patients."""
    key = ("mutara", drug, config)
    cache = cohort.index._cache
    if key in cache:
        return cache[key]
    n = len(cohort)
    big = np.iinfo(np.int64).max
    d = cohort.drug_index.get(drug, -1)
    rx = cohort.rx_drug == d
    rp, ra = cohort.rx_patient[rx], cohort.rx_age[rx]
    first = np.full(n, big, dtype=np.int64)
    np.minimum.at(first, rp, ra)
    exposed = first < big
    second = np.full(n, big, dtype=np.int64)
    later = ra > first[rp]
    np.minimum.at(second, rp[later], ra[later])
    second = np.where(exposed & (second < big) & (second - first < 30), second, first)

    ev_min = np.full(n, big, dtype=np.int64)
    ev_max = np.full(n, -1, dtype=np.int64)
    np.minimum.at(ev_min, cohort.ev_patient, cohort.ev_age)
    np.maximum.at(ev_max, cohort.ev_patient, cohort.ev_age)
    w = config.min_span
    active = (ev_max >= 0) & (ev_max - ev_min >= w)

    lo = np.zeros(n, dtype=np.int64)
    hi = np.full(n, -1, dtype=np.int64)
    lo[exposed] = first[exposed] + config.t1
    hi[exposed] = second[exposed] + config.t2
    for i in np.flatnonzero(~exposed & active).tolist():
        span = int(ev_max[i] - ev_min[i])
        r = random_offset(config.rng_seed, cohort.patient_ids[i], span - w + 1)
        lo[i] = ev_min[i] + r
        hi[i] = ev_min[i] + r + w
    filt_lo = np.where(exposed, first - config.t3, 0)
    filt_hi = np.where(exposed, first - 1, -1)
    out = MutaraWindows(exposed | active, exposed, lo, hi, filt_lo, filt_hi)
    cache[key] = out
    return out


def _leverage_terms(cohort: Cohort, drug: str, config: MutaraConfig, unexpected: bool):
    win = mutara_windows(cohort, drug, config)
    idx = cohort.index
    included = np.flatnonzero(win.included)
    if len(included) == 0:
        raise ValueError("no included patients for leverage")
    hits = idx.window_hits(included, win.lo[included], win.hi[included])
    keep = np.ones(len(hits.window), dtype=bool)
    if unexpected:
        filt = idx.window_hits(included, win.filt_lo[included], win.filt_hi[included])
        keep = ~np.isin(hits.keys(idx.n_codes), filt.keys(idx.n_codes))
    exposed = win.exposed[included]
    n_codes = idx.n_codes
    both = np.bincount(hits.code[keep & exposed[hits.window]], minlength=n_codes)
    any_ = np.bincount(hits.code[keep], minlength=n_codes)
    return both, any_, int(exposed.sum()), len(included)


def _leverage(both, any_, n_exposed, n_included):
    n = float(n_included)
    return both / n - (n_exposed / n) * (any_ / n)


def unexpected_leverage_values(cohort: Cohort, drug: str, config: MutaraConfig) -> np.ndarray:
    return _leverage(*_leverage_terms(cohort, drug, config, unexpected=True))


def leverage_values(cohort: Cohort, drug: str, config: MutaraConfig) -> np.ndarray:
    return _leverage(*_leverage_terms(cohort, drug, config, unexpected=False))


def unexpected_leverage(cohort: Cohort, code: str, drug: str, config: MutaraConfig) -> float:
    values = unexpected_leverage_values(cohort, drug, config)
    c = _code_id(cohort, code)
    return 0.0 if c is None else float(values[c])


def leverage(cohort: Cohort, code: str, drug: str, config: MutaraConfig) -> float:
    values = leverage_values(cohort, drug, config)
    c = _code_id(cohort, code)
    return 0.0 if c is None else float(values[c])


def _ranks(values: np.ndarray, codes: Sequence[str]) -> np.ndarray:
    order = descending_order(values, codes)
    ranks = np.empty(len(order), dtype=np.int64)
    ranks[order] = np.arange(1, len(order) + 1)
    return ranks


def hunt_rank(cohort: Cohort, candidates: Sequence[str], drug: str, config: MutaraConfig) -> dict[str, float]:
    """Rank ratio (leverage rank / unexpected-leverage rank) per candidate, sorted descending."""
    candidates = sorted(candidates)
    if not candidates:
        raise ValueError("candidate set is empty")
    lev = leverage_values(cohort, drug, config)
    ulev = unexpected_leverage_values(cohort, drug, config)
    ids = [_code_id(cohort, c) for c in candidates]
    l = np.array([0.0 if i is None else lev[i] for i in ids])
    u = np.array([0.0 if i is None else ulev[i] for i in ids])
    ratio = _ranks(l, candidates) / _ranks(u, candidates)
    order = descending_order(ratio, candidates)
    return {candidates[i]: float(ratio[i]) for i in order}
