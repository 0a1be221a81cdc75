"""Per-(code, drug) attributes used for labelling, clustering and scoring.

Patient-count ratios use the first exposure era only. Every ratio's
denominator is clamped to at least 1, so a code seen ``k`` times after and
never before scores ``k`` and no attribute is ever NaN or infinite.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import baselines
from .model import Cohort

FEATURE_NAMES = ("abratio30", "abratio365", "dop", "expect", "lev3", "lev2", "ic_delta", "zeta1", "zeta2")


class FeatureError(ValueError):
    pass


@dataclass(frozen=True)
class FeatureVector:
    code: str
    drug: str
    abratio30: float
    abratio365: float
    dop: float
    expect: float
    abratio_lev3: float
    abratio_lev2: float
    ic_delta: float
    zeta1: int
    zeta2: int

    def as_array(self) -> np.ndarray:
        return np.array(
            [
                self.abratio30,
                self.abratio365,
                self.dop,
                self.expect,
                self.abratio_lev3,
                self.abratio_lev2,
                self.ic_delta,
                self.zeta1,
                self.zeta2,
            ],
            dtype=float,
        )


@dataclass(frozen=True)
class CandidateSet:
    codes: tuple[str, ...]
    drug: str

    def __len__(self):
        return len(self.codes)

    def __iter__(self):
        return iter(self.codes)

    def __contains__(self, code):
        return code in self.codes


@dataclass(frozen=True)
class FeatureTable:
    """Raw attribute matrix, one row per candidate code, columns as ``FEATURE_NAMES``."""

    codes: tuple[str, ...]
    drug: str
    values: np.ndarray

    def column(self, name: str) -> np.ndarray:
        return self.values[:, FEATURE_NAMES.index(name)]

    def row(self, code: str) -> FeatureVector:
        v = self.values[self.codes.index(code)]
        return FeatureVector(code, self.drug, *v[:7].tolist(), int(v[7]), int(v[8]))

    def standardized(self) -> np.ndarray:
        """Column z-scores over the candidate set; constant columns are only centred."""
        if len(self.codes) == 0:
            return self.values.copy()
        mean = self.values.mean(axis=0)
        std = self.values.std(axis=0)
        return (self.values - mean) / np.where(std > 0, std, 1.0)


def _require_drug(cohort: Cohort, drug: str) -> None:
    if not cohort.index.era_mask(drug).any():
        raise FeatureError(f"drug {drug} is never prescribed in the cohort")


def candidate_set(cohort: Cohort, drug: str) -> CandidateSet:
    _require_drug(cohort, drug)
    counts = cohort.index.first_era_patients(drug, 1, 30)
    return CandidateSet(tuple(cohort.codes[i] for i in np.flatnonzero(counts > 0)), drug)


def _ratio(after: np.ndarray, before: np.ndarray) -> np.ndarray:
    return after / np.maximum(before, 1)


def _prefix_classes(cohort: Cohort, level: int) -> np.ndarray:
    prefixes = np.array([c[:level] for c in cohort.codes], dtype=str)
    if len(prefixes) == 0:
        return np.zeros(0, dtype=np.int64)
    return np.unique(prefixes, return_inverse=True)[1].astype(np.int64)


def abratio_values(cohort: Cohort, drug: str, window: int) -> np.ndarray:
    idx = cohort.index
    return _ratio(idx.first_era_patients(drug, 1, window), idx.first_era_patients(drug, -window, -1))


def dop_values(cohort: Cohort, drug: str) -> np.ndarray:
    idx = cohort.index
    return _ratio(idx.first_era_patients(drug, 0, 0), idx.first_era_patients(drug, -365, -1))


def expect_counts(cohort: Cohort, drug: str) -> tuple[np.ndarray, np.ndarray]:
    """``(both, after)`` per code: patients with the code in both month windows, and after only."""
    idx = cohort.index
    n = idx.n_codes
    both_keys = np.intersect1d(idx.first_era_keys(drug, 1, 30), idx.first_era_keys(drug, -30, -1), assume_unique=True)
    return np.bincount(both_keys % n, minlength=n), idx.first_era_patients(drug, 1, 30)


def abratio_level_values(cohort: Cohort, drug: str, level: int) -> np.ndarray:
    if level not in (2, 3):
        raise ValueError("level must be 2 or 3")
    idx = cohort.index
    cls = _prefix_classes(cohort, level)
    n_cls = int(cls.max(initial=0)) + 1
    after = np.bincount(idx.first_era_keys(drug, 1, 30, code_map=cls) % n_cls, minlength=n_cls)
    before = np.bincount(idx.first_era_keys(drug, -30, -1, code_map=cls) % n_cls, minlength=n_cls)
    return _ratio(after, before)[cls]


def _lookup(cohort: Cohort, values: np.ndarray, code: str) -> float:
    c = cohort.code_index.get(code)
    return 0.0 if c is None else float(values[c])


def abratio(cohort: Cohort, code: str, drug: str, window: int = 30) -> float:
    if window not in (30, 365):
        raise ValueError("window must be 30 or 365")
    return _lookup(cohort, abratio_values(cohort, drug, window), code)


def dop(cohort: Cohort, code: str, drug: str) -> float:
    return _lookup(cohort, dop_values(cohort, drug), code)


def expectedness(cohort: Cohort, code: str, drug: str) -> float:
    both, after = expect_counts(cohort, drug)
    c = cohort.code_index.get(code)
    if c is None or after[c] == 0:
        raise FeatureError(f"{code} never occurs in the month after {drug}")
    return float(both[c] / after[c])


def abratio_level(cohort: Cohort, code: str, drug: str, level: int) -> float:
    return _lookup(cohort, abratio_level_values(cohort, drug, level), code)


def feature_table(cohort: Cohort, drug: str, candidates: CandidateSet | None = None) -> FeatureTable:
    if candidates is None:
        candidates = candidate_set(cohort, drug)
    both, after = expect_counts(cohort, drug)
    z1, z2 = baselines.zeta_values(cohort, drug)
    cols = np.stack(
        [
            abratio_values(cohort, drug, 30),
            abratio_values(cohort, drug, 365),
            dop_values(cohort, drug),
            np.where(after > 0, both / np.maximum(after, 1), 0.0),
            abratio_level_values(cohort, drug, 3),
            abratio_level_values(cohort, drug, 2),
            baselines.ic_delta_values(cohort, drug),
            z1,
            z2,
        ],
        axis=1,
    ).astype(float)
    rows = [cohort.code_index[c] for c in candidates.codes]
    return FeatureTable(tuple(candidates.codes), drug, cols[rows] if rows else np.zeros((0, len(FEATURE_NAMES))))


def feature_vector(cohort: Cohort, code: str, drug: str) -> FeatureVector:
    candidates = candidate_set(cohort, drug)
    if code not in candidates:
        raise FeatureError(f"{code} is not a candidate for {drug}")
    return feature_table(cohort, drug, CandidateSet((code,), drug)).row(code)
