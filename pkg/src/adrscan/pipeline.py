"""End-to-end signal detection: DRESS steps 1-5 and the baseline rankers."""
from __future__ import annotations

import csv
import json
import logging
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from . import baselines, features, labeling, learning
from .baselines import MutaraConfig, descending_order
from .features import FEATURE_NAMES, FeatureTable
from .ingestion import TermList
from .labeling import SEED_ORDER, Label
from .learning import LearnConfig
from .model import Cohort

log = logging.getLogger(__name__)

DEFAULT_K = 100
NOISE_WEIGHT = 3.0
METHODS = ("dress", "oe", "mutara", "hunt")
REPORT_COLUMNS = ["rank", "code", "description", "score", "cluster", "filtered_by", "method"]
RANKER_COLUMNS = ["rank", "code", "description", "score", "method"]


class PipelineError(RuntimeError):
    def __init__(self, step: str, message: str):
        super().__init__(f"[{step}] {message}")
        self.step = step


@dataclass
class ScoredCandidate:
    code: str
    raw_score: float
    cluster: str | None = None
    filtered_by: str | None = None
    rank: int | None = None
    description: str = ""


@dataclass
class SignalReport:
    drug: str
    method: str
    entries: list[ScoredCandidate]
    k: int = DEFAULT_K
    config: dict = field(default_factory=dict)
    rng_seed: int = 0
    diagnostics: dict = field(default_factory=dict)

    def ranked(self) -> list[ScoredCandidate]:
        return [e for e in self.entries if e.rank is not None]

    def rank_of(self, code: str) -> int | None:
        for e in self.entries:
            if e.code == code:
                return e.rank
        return None

    def entry(self, code: str) -> ScoredCandidate | None:
        return next((e for e in self.entries if e.code == code), None)


@dataclass(frozen=True)
class DressConfig:
    learn: LearnConfig = LearnConfig()
    kmeans_max_iter: int = 100
    transform_mode: str = "sqrt"
    k: int = DEFAULT_K


def matches_prefix(code: str, prefixes: Sequence[str]) -> bool:
    return any(code.startswith(p) for p in prefixes)


def _finish(entries: list[ScoredCandidate]) -> list[ScoredCandidate]:
    """Rank surviving entries 1..m by descending score (ties by code); filtered entries follow by code."""
    alive = [e for e in entries if e.filtered_by is None]
    dead = sorted((e for e in entries if e.filtered_by is not None), key=lambda e: e.code)
    order = descending_order(np.array([e.raw_score for e in alive]), [e.code for e in alive])
    ranked = [alive[i] for i in order]
    for r, e in enumerate(ranked, start=1):
        e.rank = r
    for e in dead:
        e.rank = None
    return ranked + dead


def score_and_rank(
    table: FeatureTable,
    clusters: dict[str, str],
    irrelevant_prefixes: Sequence[str] = (),
    descriptions: dict[str, str] | None = None,
) -> list[ScoredCandidate]:
    """Filter and order candidates by ``(1 - expect) * abratio30 / beta``.

    Removed: indicator-cluster codes, codes with ``(1 - expect) * abratio30 < 1``
    and codes under an irrelevant prefix. ``beta`` is 1 in the ADR cluster
    and 3 in the noise cluster.
    """
    descriptions = descriptions or {}
    ab30 = table.column("abratio30")
    expect = table.column("expect")
    entries = []
    for i, code in enumerate(table.codes):
        cluster = clusters[code]
        base = float((1.0 - expect[i]) * ab30[i])
        beta = NOISE_WEIGHT if cluster == Label.NOISE.value else 1.0
        if cluster == Label.INDICATOR.value:
            why = "indicator-cluster"
        elif base < 1.0:
            why = "score<1"
        elif matches_prefix(code, irrelevant_prefixes):
            why = "irrelevant-code"
        else:
            why = None
        entries.append(ScoredCandidate(code, base / beta, cluster, why, None, descriptions.get(code, "")))
    return _finish(entries)


def _descriptions(cohort: Cohort, codes) -> dict[str, str]:
    return {c: cohort.description(c) for c in codes}


def run_dress(
    cohort: Cohort,
    drug: str,
    drug_name: str | None,
    indicator_terms: TermList,
    adr_terms: TermList,
    noise_prefixes: Sequence[str],
    irrelevant_prefixes: Sequence[str] = (),
    config: DressConfig = DressConfig(),
    holdout: Sequence[str] = (),
) -> SignalReport:
    if not cohort.preprocessed:
        raise PipelineError("input", "cohort must be preprocessed first")
    tree = cohort.code_tree
    try:
        candidates = features.candidate_set(cohort, drug)
        table = features.feature_table(cohort, drug, candidates)
    except ValueError as e:
        raise PipelineError("step1-features", str(e)) from e
    if len(candidates) == 0:
        raise PipelineError("step1-features", f"no codes recorded within 30 days of {drug}")

    try:
        labels = labeling.merge_labels(
            labeling.label_noise(candidates, tree, noise_prefixes),
            labeling.label_indicators(candidates, tree, indicator_terms, table),
            labeling.label_adrs(candidates, tree, adr_terms, drug_name, table),
        )
        labels_before = labels.counts()
        labels = labeling.holdout(labels, holdout)
        labeling.check_seeds(labels)
    except ValueError as e:
        raise PipelineError("step2-labels", str(e)) from e

    z = table.standardized()
    point_labels = [labels.label(c) if labels.label(c) is not Label.UNLABELLED else None for c in table.codes]
    try:
        metric = learning.learn_metric(z, point_labels, config.learn)
    except ValueError as e:
        raise PipelineError("step3-metric", str(e)) from e
    y = learning.transform(z, metric.metric, metric.whitening, config.transform_mode)

    seeds = [[i for i, l in enumerate(point_labels) if l is lab] for lab in SEED_ORDER]
    try:
        clusters = learning.constrained_kmeans(y, seeds, config.kmeans_max_iter)
    except ValueError as e:
        raise PipelineError("step4-cluster", str(e)) from e
    cluster_of = {c: SEED_ORDER[h].value for c, h in zip(table.codes, clusters.assignment.tolist())}

    irrelevant = list(noise_prefixes) + [p for p in irrelevant_prefixes if p not in noise_prefixes]
    entries = score_and_rank(table, cluster_of, irrelevant, _descriptions(cohort, table.codes))

    snapshot = {
        "drug": drug,
        "drug_name": drug_name,
        "holdout": sorted(holdout),
        "indicator_terms": list(indicator_terms),
        "adr_terms": list(adr_terms),
        "noise_prefixes": list(noise_prefixes),
        "irrelevant_prefixes": list(irrelevant_prefixes),
        "dress": asdict(config),
    }
    diagnostics = {
        "n_candidates": len(candidates),
        "labels_before_holdout": labels_before,
        "labels": labels.counts(),
        "held_out": sorted(labels.held_out),
        "label_provenance": labels.provenance,
        "metric_iterations": metric.iterations,
        "metric_converged": metric.converged,
        "metric_objective": metric.objective,
        "metric_matrix": metric.metric.tolist(),
        "kmeans_iterations": clusters.iterations,
        "kmeans_objective": clusters.objective,
        "clusters": cluster_of,
        "n_ranked": sum(e.rank is not None for e in entries),
    }
    return SignalReport(drug, "dress", entries, config.k, snapshot, config.learn.seed, diagnostics)


def run_baseline(
    cohort: Cohort,
    drug: str,
    method: str,
    config: MutaraConfig = MutaraConfig(),
    irrelevant_prefixes: Sequence[str] = (),
    k: int = DEFAULT_K,
) -> SignalReport:
    """Rank the candidate set with one of the existing methods (``oe``, ``mutara``, ``hunt``)."""
    if not cohort.preprocessed:
        raise PipelineError("input", "cohort must be preprocessed first")
    try:
        candidates = features.candidate_set(cohort, drug)
    except ValueError as e:
        raise PipelineError("candidates", str(e)) from e
    codes = list(candidates.codes)
    ids = [cohort.code_index[c] for c in codes]
    excluded: dict[str, str] = {}
    try:
        if method == "oe":
            values = baselines.ic_delta_values(cohort, drug)
            z1, z2 = baselines.zeta_values(cohort, drug)
            score = {c: float(values[i]) for c, i in zip(codes, ids)}
            excluded = {c: "zeta-filter" for c, i in zip(codes, ids) if z1[i] or z2[i]}
        elif method == "mutara":
            values = baselines.unexpected_leverage_values(cohort, drug, config)
            score = {c: float(values[i]) for c, i in zip(codes, ids)}
        elif method == "hunt":
            score = baselines.hunt_rank(cohort, codes, drug, config) if codes else {}
        else:
            raise ValueError(f"unknown method {method!r}")
    except ValueError as e:
        raise PipelineError(method, str(e)) from e

    desc = _descriptions(cohort, codes)
    entries = []
    for c in codes:
        why = excluded.get(c)
        if why is None and matches_prefix(c, irrelevant_prefixes):
            why = "irrelevant-code"
        entries.append(ScoredCandidate(c, score[c], None, why, None, desc[c]))
    entries = _finish(entries)
    snapshot = {"drug": drug, "method": method, "mutara": asdict(config), "irrelevant_prefixes": list(irrelevant_prefixes)}
    diagnostics = {"n_candidates": len(codes), "n_ranked": sum(e.rank is not None for e in entries)}
    return SignalReport(drug, method, entries, k, snapshot, config.rng_seed, diagnostics)


def signal_topk(report: SignalReport, k: int | None = None) -> list[str]:
    k = report.k if k is None else k
    if k < 1:
        raise ValueError("k must be >= 1")
    return [e.code for e in report.ranked()[:k]]


def write_report_csv(report: SignalReport, path, columns: Sequence[str] = REPORT_COLUMNS) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        for e in report.entries:
            row = {
                "rank": "" if e.rank is None else e.rank,
                "code": e.code,
                "description": e.description,
                "score": repr(e.raw_score),
                "cluster": e.cluster or "",
                "filtered_by": e.filtered_by or "",
                "method": report.method,
            }
            w.writerow([row[c] for c in columns])


def report_to_json(report: SignalReport) -> dict:
    return {
        "drug": report.drug,
        "method": report.method,
        "k": report.k,
        "rng_seed": report.rng_seed,
        "config": report.config,
        "signalled": signal_topk(report) if report.ranked() else [],
        "diagnostics": report.diagnostics,
        "entries": [asdict(e) for e in report.entries],
    }


def write_report_json(report: SignalReport, path) -> None:
    Path(path).write_text(json.dumps(report_to_json(report), indent=2, sort_keys=True) + "\n", encoding="utf-8")


def write_features_csv(table: FeatureTable, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["code", *FEATURE_NAMES])
        for code, row in zip(table.codes, table.values.tolist()):
            w.writerow([code, *(repr(v) for v in row[:7]), int(row[7]), int(row[8])])


def write_labels_csv(assignment: labeling.LabelAssignment, codes: Sequence[str], path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["code", "label", "provenance"])
        for c in codes:
            w.writerow([c, assignment.label(c).value, assignment.provenance.get(c, "")])


def write_diagnostics(report: SignalReport, out_dir) -> None:
    """Per-iteration objectives, final metric matrix (row-major CSV), cluster assignment CSV."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    d = report.diagnostics
    with open(out / "objective.csv", "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["iteration", "objective"])
        w.writerows((i + 1, repr(v)) for i, v in enumerate(d.get("metric_objective", [])))
    with open(out / "metric.csv", "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerows([repr(v) for v in row] for row in d.get("metric_matrix", []))
    with open(out / "clusters.csv", "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["code", "cluster"])
        w.writerows(sorted(d.get("clusters", {}).items()))
