"""Seed labels for the semi-supervised steps: known ADR, indicator, noise."""
from __future__ import annotations

import enum
import logging
from dataclasses import dataclass, field
from typing import Iterable, Sequence

from .features import FeatureTable
from .ingestion import CodeTree, TermList

log = logging.getLogger(__name__)

ADR_VALIDATION = 1.5
INDICATOR_VALIDATION = 1.0
MIN_SEEDS = 2


class Label(enum.Enum):
    ADR = "ADR"
    INDICATOR = "INDICATOR"
    NOISE = "NOISE"
    UNLABELLED = "UNLABELLED"


# Higher wins when two labelers claim the same code.
PRECEDENCE = {Label.NOISE: 3, Label.INDICATOR: 2, Label.ADR: 1}
SEED_ORDER = (Label.ADR, Label.INDICATOR, Label.NOISE)


@dataclass(frozen=True)
class LabelAssignment:
    """Labels for some codes; any code not listed is UNLABELLED."""

    labels: dict[str, Label] = field(default_factory=dict)
    provenance: dict[str, str] = field(default_factory=dict)
    held_out: frozenset[str] = frozenset()

    def label(self, code: str) -> Label:
        return self.labels.get(code, Label.UNLABELLED)

    def codes_with(self, label: Label) -> list[str]:
        return sorted(c for c, l in self.labels.items() if l is label)

    def counts(self) -> dict[str, int]:
        return {l.value: len(self.codes_with(l)) for l in SEED_ORDER}


def label_noise(candidates: Iterable[str], tree: CodeTree | None, noise_prefixes: Sequence[str]) -> LabelAssignment:
    if not noise_prefixes:
        raise ValueError("noise prefix list is empty")
    labels, prov = {}, {}
    for code in candidates:
        for prefix in noise_prefixes:
            if code.startswith(prefix):
                labels[code] = Label.NOISE
                prov[code] = f"prefix:{prefix}"
                break
    return LabelAssignment(labels, prov)


def _description(tree: CodeTree | None, code: str) -> str:
    return tree.description(code) if tree is not None else ""


def label_indicators(candidates: Iterable[str], tree: CodeTree | None, terms: TermList, features: FeatureTable) -> LabelAssignment:
    ab30 = dict(zip(features.codes, features.column("abratio30").tolist()))
    labels, prov = {}, {}
    for code in candidates:
        term = terms.matches(_description(tree, code))
        if term is not None and ab30[code] < INDICATOR_VALIDATION:
            labels[code] = Label.INDICATOR
            prov[code] = f"indicator:{term}"
    return LabelAssignment(labels, prov)


def label_adrs(
    candidates: Iterable[str],
    tree: CodeTree | None,
    terms: TermList,
    drug_name: str | None,
    features: FeatureTable,
) -> LabelAssignment:
    ab30 = dict(zip(features.codes, features.column("abratio30").tolist()))
    name = (drug_name or "").strip().lower()
    labels, prov = {}, {}
    for code in candidates:
        desc = _description(tree, code).lower()
        if name and name in desc and "adverse" in desc:
            labels[code] = Label.ADR
            prov[code] = f"adverse:{name}"
            continue
        term = terms.matches(desc)
        if term is not None and ab30[code] >= ADR_VALIDATION:
            labels[code] = Label.ADR
            prov[code] = f"adr:{term}"
    return LabelAssignment(labels, prov)


def merge_labels(*parts: LabelAssignment) -> LabelAssignment:
    labels: dict[str, Label] = {}
    prov: dict[str, str] = {}
    held: set[str] = set()
    for part in parts:
        held |= part.held_out
        for code, label in part.labels.items():
            if label is Label.UNLABELLED:
                continue
            current = labels.get(code)
            if current is None or PRECEDENCE[label] > PRECEDENCE[current]:
                labels[code] = label
                prov[code] = part.provenance[code]
    return LabelAssignment(dict(sorted(labels.items())), dict(sorted(prov.items())), frozenset(held))


def holdout(assignment: LabelAssignment, codes_to_hide: Iterable[str]) -> LabelAssignment:
    labels = dict(assignment.labels)
    prov = dict(assignment.provenance)
    hidden = set(assignment.held_out)
    for code in codes_to_hide:
        if code not in labels:
            log.warning("holdout: %s has no label to remove", code)
            continue
        del labels[code]
        del prov[code]
        hidden.add(code)
    return LabelAssignment(labels, prov, frozenset(hidden))


def check_seeds(assignment: LabelAssignment, minimum: int = MIN_SEEDS) -> None:
    short = {k: v for k, v in assignment.counts().items() if v < minimum}
    if short:
        raise ValueError(
            "too few seed labels for clustering ("
            + ", ".join(f"{k}={v}" for k, v in short.items())
            + f"; need >= {minimum} each)"
        )
