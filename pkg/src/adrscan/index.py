"""Vectorised cohort-wide window queries.

Everything downstream reduces to one primitive: given a batch of per-patient
age windows, which distinct codes fall inside each window. Events are kept
sorted by ``(patient, age)`` so a window becomes a contiguous slice found by
binary search on a combined key.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .model import ERA_GAP_DAYS, Cohort


@dataclass(frozen=True)
class EraTable:
    """One row per exposure era, over all drugs."""

    patient: np.ndarray
    drug: np.ndarray
    start: np.ndarray
    k: np.ndarray  # 1-based era number within (patient, drug)


@dataclass(frozen=True)
class Hits:
    """Distinct ``(window, code)`` pairs: ``window[i]`` indexes the queried windows."""

    window: np.ndarray
    code: np.ndarray
    n_windows: int

    def codes_per_window(self) -> np.ndarray:
        return np.bincount(self.window, minlength=self.n_windows)

    def windows_per_code(self, n_codes: int, mask: np.ndarray | None = None) -> np.ndarray:
        code = self.code if mask is None else self.code[mask[self.window]]
        return np.bincount(code, minlength=n_codes)

    def keys(self, n_codes: int) -> np.ndarray:
        return self.window.astype(np.int64) * n_codes + self.code


class CohortIndex:
    def __init__(self, cohort: Cohort):
        self.cohort = cohort
        self.n_codes = len(cohort.codes)
        self._stride = int(max(cohort.ev_age.max(initial=0), cohort.rx_age.max(initial=0))) + 2
        self._ev_key = cohort.ev_patient * self._stride + cohort.ev_age
        self._cache: dict = {}
        self.eras = self._build_eras()

    def _build_eras(self) -> EraTable:
        c = self.cohort
        rows = np.unique(np.stack([c.rx_drug, c.rx_patient, c.rx_age], axis=1), axis=0)
        if len(rows) == 0:
            e = np.zeros(0, dtype=np.int64)
            return EraTable(e, e, e, e)
        drug, patient, age = rows[:, 0], rows[:, 1], rows[:, 2]
        new_group = np.ones(len(rows), dtype=bool)
        new_group[1:] = (drug[1:] != drug[:-1]) | (patient[1:] != patient[:-1])
        gap = np.empty(len(rows), dtype=np.int64)
        gap[0] = 0
        gap[1:] = age[1:] - age[:-1]
        is_start = new_group | (gap >= ERA_GAP_DAYS)
        d, p, s = drug[is_start], patient[is_start], age[is_start]
        grp = np.cumsum(new_group)[is_start]
        first = np.ones(len(grp), dtype=bool)
        first[1:] = grp[1:] != grp[:-1]
        pos = np.arange(len(grp))
        k = pos - np.maximum.accumulate(np.where(first, pos, 0)) + 1
        return EraTable(p.copy(), d.copy(), s.copy(), k)

    def window_hits(self, patient: np.ndarray, lo: np.ndarray, hi: np.ndarray) -> Hits:
        """Distinct codes recorded for ``patient[i]`` within ``[lo[i] .. hi[i]]``.

        ``lo`` is clamped at 0; windows with ``hi < lo`` are empty.
        """
        patient = np.asarray(patient, dtype=np.int64)
        lo = np.maximum(np.asarray(lo, dtype=np.int64), 0)
        hi = np.minimum(np.asarray(hi, dtype=np.int64), self._stride - 1)
        n = len(patient)
        valid = hi >= lo
        a = np.searchsorted(self._ev_key, patient * self._stride + lo, side="left")
        b = np.searchsorted(self._ev_key, patient * self._stride + hi, side="right")
        counts = np.where(valid, b - a, 0)
        total = int(counts.sum())
        if total == 0:
            e = np.zeros(0, dtype=np.int64)
            return Hits(e, e, n)
        win = np.repeat(np.arange(n, dtype=np.int64), counts)
        offsets = np.cumsum(counts) - counts
        idx = np.arange(total, dtype=np.int64) - np.repeat(offsets, counts) + np.repeat(a, counts)
        key = np.unique(win * self.n_codes + self.cohort.ev_code[idx])
        return Hits(key // self.n_codes, key % self.n_codes, n)

    def era_hits(self, t1: int, t2: int) -> Hits:
        """Hits for every era (all drugs), window ``[start + t1 .. start + t2]``."""
        key = ("era", t1, t2)
        if key not in self._cache:
            e = self.eras
            self._cache[key] = self.window_hits(e.patient, e.start + t1, e.start + t2)
        return self._cache[key]

    def drug_id(self, drug: str) -> int | None:
        return self.cohort.drug_index.get(drug)

    def era_mask(self, drug: str | None = None, first_only: bool = False) -> np.ndarray:
        mask = np.ones(len(self.eras.start), dtype=bool)
        if drug is not None:
            d = self.drug_id(drug)
            mask &= self.eras.drug == (-1 if d is None else d)
        if first_only:
            mask &= self.eras.k == 1
        return mask

    def first_era_patients(self, drug: str, t1: int, t2: int) -> np.ndarray:
        """Per code, number of patients with the code in their first-era window (sum of h)."""
        return self.era_hits(t1, t2).windows_per_code(self.n_codes, self.era_mask(drug, first_only=True))

    def first_era_keys(self, drug: str, t1: int, t2: int, code_map: np.ndarray | None = None) -> np.ndarray:
        """Sorted unique ``era * n + code`` keys for first eras of ``drug``.

        With ``code_map`` the code column is first mapped to a class index,
        so keys identify (era, class) pairs.
        """
        hits = self.era_hits(t1, t2)
        m = self.era_mask(drug, first_only=True)[hits.window]
        code = hits.code[m]
        n = self.n_codes
        if code_map is not None:
            code = code_map[code]
            n = int(code_map.max(initial=0)) + 1
        return np.unique(hits.window[m].astype(np.int64) * n + code)
