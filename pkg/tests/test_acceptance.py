"""Acceptance gate: one PASS/FAIL line per primary criterion.

Each test records its verdict (with the measured numbers) before asserting,
so the summary table at the end of the run lists every criterion even when
some fail.
"""
import math
import statistics
import time

import numpy as np
import pytest

from adrscan import pipeline, scenarios
from adrscan.baselines import MutaraConfig, contingency, leverage_values, unexpected_leverage_values
from adrscan.features import abratio, abratio_level, candidate_set, dop, expectedness
from adrscan.learning import (
    LearnConfig,
    constrained_kmeans,
    frank_wolfe,
    learn_metric,
    smoothed_gradient,
    smoothed_objective,
)
from adrscan.model import (
    AgeInterval,
    EMPTY,
    Cohort,
    era_interval,
    era_starts,
    events_in_interval,
    first_prescription,
    occurs_first_era,
    occurs_per_era,
    prescription_ages,
    recorded_ages,
)

import conftest
from conftest import RANDOM_CODES, RANDOM_DRUGS, random_rows
from oracle import Oracle
from test_learning import _exhaustive, _labelled_points, _random_mats, _random_psd

N_SEEDS = 20
N_PATIENTS = 20_000


def verdict(name, ok, detail):
    line = f"{'PASS' if ok else 'FAIL'} {name}: {detail}"
    print(line)
    conftest.ACCEPTANCE_LINES.append(line)
    assert ok, line


def close(a, b):
    return math.isclose(a, b, rel_tol=1e-12, abs_tol=1e-15)


# -- worked example ------------------------------------------------------------


def test_worked_example(worked):
    t0 = time.perf_counter()
    aa2, jj3 = worked.patient("aa2"), worked.patient("jj3")
    checks = {
        "A_D(jj3)": recorded_ages(jj3, "prescriptions") == {10000, 20000, 20001},
        "alpha(jj3,969686881)": prescription_ages(jj3, "969686881") == {20000, 20001},
        "alpha(aa2,912314611)": prescription_ages(aa2, "912314611") == {15001, 15031, 15061, 25304},
        "alpha1(jj3,969686881)": first_prescription(jj3, "969686881") == 20000,
        "alpha1(aa2,969686881)": first_prescription(aa2, "969686881") is None,
        "alpha_hat(aa2,912314611)": era_starts(aa2, "912314611") == [15001, 25304],
        "T(aa2,...)_1,2 and empty": era_interval(aa2, "912314611", 1, 30, 1) == AgeInterval(15002, 15031)
        and era_interval(aa2, "912314611", 1, 30, 2) == AgeInterval(25305, 25334)
        and era_interval(aa2, "979596759", 1, 30, 1) is EMPTY,
        "f_M(10000,jj3)": events_in_interval(jj3, AgeInterval(10000, 10000)) == {"F1...", "C1..."},
    }
    dt = time.perf_counter() - t0
    bad = [k for k, v in checks.items() if not v]
    verdict("worked example", not bad and len(checks) == 8 and dt < 1.0, f"{8 - len(bad)}/8 assertions in {dt:.3f}s {bad or ''}")


# -- oracle equivalence ----------------------------------------------------------


def test_oracle_equivalence():
    t0 = time.perf_counter()
    rng = np.random.default_rng(2024)
    tally = {"counts": 0, "h/hhat": 0, "features": 0, "uL/L": 0}
    mismatches = []
    seed = 0
    while min(tally.values()) < 500:
        rows = random_rows(1000 + seed, n_patients=30)
        c, oracle = Cohort.from_rows(*rows), Oracle(*rows)
        for _ in range(60):
            e = RANDOM_CODES[int(rng.integers(len(RANDOM_CODES)))]
            d = RANDOM_DRUGS[int(rng.integers(len(RANDOM_DRUGS)))]
            t1 = int(rng.integers(-900, 100))
            t2 = t1 + int(rng.integers(0, 200))
            got = contingency(c, e, d, t1, t2)
            if (got.n_de, got.n_dot_e, got.n_d_dot, got.n_dot_dot) != oracle.counts(e, d, t1, t2):
                mismatches.append(("counts", seed, e, d, t1, t2))
            tally["counts"] += 1
            pid = c.patient_ids[int(rng.integers(len(c)))]
            p = c.patient(pid)
            if (occurs_first_era(e, d, p, t1, t2), occurs_per_era(e, d, p, t1, t2)) != (
                oracle.h(e, d, pid, t1, t2),
                oracle.hhat(e, d, pid, t1, t2),
            ):
                mismatches.append(("h", seed, pid, e, d, t1, t2))
            tally["h/hhat"] += 1
        for d in RANDOM_DRUGS:
            if not c.index.era_mask(d).any():
                continue
            if list(candidate_set(c, d).codes) != oracle.candidates(d):
                mismatches.append(("candidates", seed, d))
            for e in RANDOM_CODES:
                pairs = [
                    (abratio(c, e, d, 30), oracle.abratio(e, d, 30)),
                    (abratio(c, e, d, 365), oracle.abratio(e, d, 365)),
                    (dop(c, e, d), oracle.dop(e, d)),
                    (abratio_level(c, e, d, 3), oracle.lev(e, d, 3)),
                    (abratio_level(c, e, d, 2), oracle.lev(e, d, 2)),
                ]
                if oracle.n_patients(e, d, 1, 30):
                    pairs.append((expectedness(c, e, d), oracle.expect(e, d)))
                if not all(close(a, b) for a, b in pairs):
                    mismatches.append(("features", seed, e, d))
                tally["features"] += 1
            for t1, t2, t3 in [(1, 30, 180), (0, 10, 30)]:
                cfg = MutaraConfig(t1=t1, t2=t2, t3=t3, rng_seed=seed)
                u, l = unexpected_leverage_values(c, d, cfg), leverage_values(c, d, cfg)
                for e in RANDOM_CODES:
                    k = c.code_index[e]
                    if not (close(u[k], oracle.leverage(e, d, t1, t2, t3, seed, True))
                            and close(l[k], oracle.leverage(e, d, t1, t2, t3, seed, False))):  # fmt: skip
                        mismatches.append(("leverage", seed, e, d, t1, t2, t3))
                    tally["uL/L"] += 1
        seed += 1
    dt = time.perf_counter() - t0
    detail = ", ".join(f"{k} {v}" for k, v in tally.items()) + f" tuples over {seed} cohorts in {dt:.1f}s"
    verdict("oracle equivalence", not mismatches and dt < 60, detail + (f"; mismatches {mismatches[:3]}" if mismatches else ""))


# -- optimizer -----------------------------------------------------------------


def test_optimizer_suite():
    t0 = time.perf_counter()
    worst_trace = worst_fd = 0.0
    worst_eig = math.inf
    for seed in range(10):
        rng = np.random.default_rng(seed)
        pts, labels = _labelled_points(rng)
        res = learn_metric(pts, labels, LearnConfig(max_iter=100), keep_iterates=True)
        for s in res.iterates:
            worst_trace = max(worst_trace, abs(np.trace(s) - 1))
            worst_eig = min(worst_eig, np.linalg.eigvalsh((s + s.T) / 2).min())
    for seed in range(30):
        rng = np.random.default_rng(100 + seed)
        mats = _random_mats(rng, 5, 3)
        s = _random_psd(rng, 3)
        s /= np.trace(s)
        mu = [0.05, 0.3, 1.0][seed % 3]
        g = smoothed_gradient(s, mats, mu)
        fd = np.zeros((3, 3))
        for i in range(3):
            for j in range(3):
                e = np.zeros((3, 3))
                e[i, j] = 1e-6
                fd[i, j] = (smoothed_objective(s + e, mats, mu) - smoothed_objective(s - e, mats, mu)) / 2e-6
        worst_fd = max(worst_fd, np.linalg.norm(g - fd) / max(np.linalg.norm(g), 1e-12))
    x = np.diag([2.0, 1.0] + [0.0] * 7)
    single = frank_wolfe(x[None], LearnConfig(max_iter=500))
    inner = float(np.sum(x * single.metric))
    dt = time.perf_counter() - t0
    ok = worst_trace <= 1e-9 and worst_eig >= -1e-9 and worst_fd <= 1e-4 and inner >= 0.99 * 2.0 and single.iterations <= 500
    verdict(
        "optimizer suite",
        ok and dt < 10,
        f"max |tr-1| {worst_trace:.1e}, min eig {worst_eig:.1e}, grad rel err {worst_fd:.1e}, "
        f"single pair <X,S> {inner:.4f}/2 after {single.iterations} it, {dt:.2f}s",
    )


# -- clustering ------------------------------------------------------------------


def test_clustering_suite():
    t0 = time.perf_counter()
    moved = nonmonotone = 0
    for seed in range(50):
        rng = np.random.default_rng(seed)
        x = rng.standard_normal((30, 4))
        seeds = [[0, 1], [2, 3, 4], [5]]
        res = constrained_kmeans(x, seeds)
        moved += sum(int((res.assignment[idx] != h).any()) for h, idx in enumerate(seeds))
        nonmonotone += sum(b > a + 1e-12 for a, b in zip(res.objective, res.objective[1:]))
    instances = [
        ([0, 10, 100, 1, 2, 97], [[0], [1], [2]]),
        ([0, 10, 100, 3, 12, 90, 95], [[0], [1], [2]]),
        ([0, 1, 20, 21, 40, 41, 2, 19, 43], [[0, 1], [2, 3], [4, 5]]),
        ([0, 50, 51, 100, 24, 26, 76], [[0], [1, 2], [3]]),
        ([-5, 5, 30, -4, 6, 7, 28], [[0], [1], [2]]),
    ]
    matched = 0
    for values, seeds in instances:
        x = np.array(values, dtype=float)[:, None]
        res = constrained_kmeans(x, seeds)
        best_obj, _ = _exhaustive(x, seeds)
        matched += bool(np.isclose(res.objective[-1], best_obj))
    dt = time.perf_counter() - t0
    verdict(
        "clustering suite",
        moved == 0 and nonmonotone == 0 and matched == len(instances) and dt < 5,
        f"seed moves {moved}, objective increases {nonmonotone}, exhaustive optima {matched}/{len(instances)}, {dt:.2f}s",
    )


# -- end-to-end injection ------------------------------------------------------------


def _rank_or_worst(report, code):
    r = report.rank_of(code)
    return len(report.entries) + 1 if r is None else r


def test_end_to_end_injection():
    t0 = time.perf_counter()
    ranks = {m: [] for m in pipeline.METHODS}
    indicator_ok = 0
    for seed in range(N_SEEDS):
        out = scenarios.run_seed(seed, N_PATIENTS)
        for m in pipeline.METHODS:
            ranks[m].append(_rank_or_worst(out.reports[m], scenarios.TARGET_ADR))
        dress = out.reports["dress"]
        ind = dress.entry(scenarios.INDICATION)
        target = dress.rank_of(scenarios.TARGET_ADR)
        if ind is None or ind.rank is None or (target is not None and ind.rank > target):
            indicator_ok += 1
    dt = time.perf_counter() - t0
    top10 = sum(r <= 10 for r in ranks["dress"])
    med = {m: statistics.median(v) for m, v in ranks.items()}
    beats = all(med["dress"] <= med[m] for m in ("oe", "mutara", "hunt"))
    verdict(
        "end-to-end injection",
        top10 >= 18 and indicator_ok >= 18 and beats and dt < 300,
        f"top-10 {top10}/{N_SEEDS}, indicator handled {indicator_ok}/{N_SEEDS}, median rank "
        + ", ".join(f"{m} {v:g}" for m, v in med.items())
        + f", {dt:.0f}s",
    )


# -- determinism ------------------------------------------------------------------


def test_determinism(tmp_path):
    blobs = []
    for run in range(2):
        out = scenarios.run_seed(7, N_PATIENTS)
        files = []
        for m, report in sorted(out.reports.items()):
            pipeline.write_report_csv(report, tmp_path / f"{run}-{m}.csv")
            pipeline.write_report_json(report, tmp_path / f"{run}-{m}.json")
            files += [(tmp_path / f"{run}-{m}.csv").read_bytes(), (tmp_path / f"{run}-{m}.json").read_bytes()]
        blobs.append(files)
    same = sum(a == b for a, b in zip(*blobs))
    verdict("determinism", same == len(blobs[0]), f"{same}/{len(blobs[0])} report files byte-identical across two runs")


# -- null cohort ----------------------------------------------------------------------


NULL_THRESHOLD = 3.0


def test_null_cohort():
    maxima = [scenarios.run_seed(s, N_PATIENTS, inject=False, methods=("dress",)).max_dress_score() for s in range(N_SEEDS)]
    below = sum(m < NULL_THRESHOLD for m in maxima)
    verdict(
        "null cohort",
        below >= 15,
        f"max score < {NULL_THRESHOLD:g} in {below}/{N_SEEDS} seeds (largest {max(maxima):.3f})",
    )
