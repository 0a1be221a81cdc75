"""The synthetic injection benchmark: one drug, its indication, known and held-out ADRs.

The held-out target ADR is injected at 0.5% of exposed patients on top of
a low background rate. Known ADRs (listed in the ADR term list) are
injected more often so the ADR seed label validates; two "<drug> adverse"
codes give ADR seeds even when nothing is injected.
"""
from __future__ import annotations

from dataclasses import dataclass, field

from . import pipeline
from .baselines import MutaraConfig
from .ingestion import SynthSpec, TermList, generate_synthetic
from .model import preprocess

DRUG = "912314611"
DRUG_NAME = "zelopril"
INDICATION = "G20.."
TARGET_ADR = "J61.."
TARGET_INCIDENCE = 0.005

# code, background daily rate, description
BACKGROUND = [
    ("B10..", 3e-4, "Malignant neoplasm of oesophagus"),
    ("B22..", 3e-4, "Malignant neoplasm of bronchus"),
    ("B33..", 4e-4, "Basal cell carcinoma of skin"),
    ("P21..", 2e-4, "Congenital heart anomaly"),
    ("0A1..", 3e-4, "Occupation: teacher"),
    ("9N1..", 1e-3, "Seen in clinic"),
    ("9134.", 8e-4, "Letter sent to patient"),
    ("H05..", 1e-3, "Upper respiratory infection"),
    ("H33..", 5e-4, "Asthma"),
    ("K19..", 6e-4, "Urinary tract infection"),
    ("M03..", 3e-4, "Cellulitis"),
    ("N24..", 8e-4, "Back pain"),
    ("N13..", 4e-4, "Neck pain"),
    ("E20..", 5e-4, "Anxiety state"),
    ("F45..", 3e-4, "Otitis media"),
    ("J10..", 4e-4, "Gastro-oesophageal reflux"),
    ("S62..", 2e-4, "Fracture of wrist"),
    ("S83..", 4e-4, "Ankle sprain"),
    ("16C..", 6e-4, "Tiredness symptom"),
    ("C10..", 3e-4, "Type 2 diabetes mellitus"),
    ("R09..", 7e-4, "Abdominal pain"),
    ("G20..", 3e-4, "Essential hypertension"),
    ("G24..", 1e-4, "Secondary hypertension"),
    ("R07..", 5e-4, "Nausea"),
    ("M22..", 4e-4, "Skin rash"),
    ("1B1G.", 5e-4, "Headache"),
    ("TJ1..", 2e-4, f"Adverse reaction to {DRUG_NAME}"),
    ("U60..", 2e-4, f"{DRUG_NAME.capitalize()} adverse effect NOS"),
    ("J61..", 5e-5, "Acute pancreatitis"),
    ("A53..", 2e-4, "Herpes zoster"),
]

KNOWN_ADRS = [("R07..", 0.04), ("M22..", 0.03), ("1B1G.", 0.03), ("TJ1..", 0.01), ("U60..", 0.01)]
COMORBID = [("G24..", 0.5)]
BACKGROUND_DRUGS = [("900000001", 5e-4), ("900000002", 5e-4), ("900000003", 3e-4), ("900000004", 3e-4)]

INDICATOR_TERMS = ["hypertension"]
ADR_TERMS = ["nausea", "rash", "headache", "pancreatitis"]
NOISE_PREFIXES = ["B", "P", "0"]
IRRELEVANT_PREFIXES = ["9"]


def injection_spec(seed: int, n_patients: int = 20_000, inject: bool = True) -> SynthSpec:
    adrs = KNOWN_ADRS + [(TARGET_ADR, TARGET_INCIDENCE)]
    if not inject:
        adrs = [(c, 0.0) for c, _ in adrs]
    return SynthSpec(
        n_patients=n_patients,
        drug=DRUG,
        indication_code=INDICATION,
        adr_codes=adrs,
        background_codes=[(c, r) for c, r, _ in BACKGROUND],
        observation_days=3650,
        rng_seed=seed,
        exposure_fraction=0.25,
        comorbid_codes=COMORBID,
        background_drugs=BACKGROUND_DRUGS,
        descriptions={c: d for c, _, d in BACKGROUND},
    )


def term_lists() -> tuple[TermList, TermList]:
    return TermList.of(INDICATOR_TERMS, "indicator"), TermList.of(ADR_TERMS, "adr")


@dataclass
class SeedOutcome:
    seed: int
    reports: dict[str, pipeline.SignalReport] = field(default_factory=dict)
    manifest: dict = field(default_factory=dict)

    def rank(self, method: str, code: str = TARGET_ADR) -> int | None:
        return self.reports[method].rank_of(code)

    def max_dress_score(self) -> float:
        ranked = self.reports["dress"].ranked()
        return max((e.raw_score for e in ranked), default=0.0)


def run_seed(seed: int, n_patients: int = 20_000, inject: bool = True, methods=pipeline.METHODS) -> SeedOutcome:
    cohort, manifest = generate_synthetic(injection_spec(seed, n_patients, inject))
    cohort = preprocess(cohort)
    indicators, adrs = term_lists()
    out = SeedOutcome(seed, manifest=manifest)
    irrelevant = NOISE_PREFIXES + IRRELEVANT_PREFIXES
    for method in methods:
        if method == "dress":
            out.reports[method] = pipeline.run_dress(
                cohort,
                DRUG,
                DRUG_NAME,
                indicators,
                adrs,
                NOISE_PREFIXES,
                IRRELEVANT_PREFIXES,
                holdout=[TARGET_ADR],
            )
        else:
            out.reports[method] = pipeline.run_baseline(cohort, DRUG, method, MutaraConfig(rng_seed=seed), irrelevant)
    return out
