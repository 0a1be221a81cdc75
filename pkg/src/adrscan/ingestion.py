"""File formats, the code dictionary, term lists and the synthetic cohort generator.

File layout of a data directory::

    patients.csv   patid,registration_age
    medical.csv    patid,age,code
    therapy.csv    patid,age,drugcode
    codes.csv      code,description
"""
from __future__ import annotations

import csv
import json
import logging
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .model import Cohort, code_level, is_code, is_drug, parent_code

log = logging.getLogger(__name__)

PATIENTS_FILE = "patients.csv"
MEDICAL_FILE = "medical.csv"
THERAPY_FILE = "therapy.csv"
CODES_FILE = "codes.csv"
MANIFEST_FILE = "manifest.json"


class IngestError(ValueError):
    pass


@dataclass(frozen=True)
class CodeNode:
    code: str
    description: str
    parent: str | None
    level: int


class CodeTree:
    def __init__(self, nodes: dict[str, CodeNode]):
        self.nodes = dict(nodes)
        for node in self.nodes.values():
            if node.parent is None:
                if node.level != 1:
                    raise IngestError(f"code {node.code} has no parent but is level {node.level}")
                continue
            parent = self.nodes.get(node.parent)
            if parent is None:
                raise IngestError(f"orphan code {node.code}: parent {node.parent} not listed")
            if parent.level != node.level - 1 or not node.code.startswith(parent.code[: parent.level]):
                raise IngestError(f"bad parent link {node.code} -> {node.parent}")

    @classmethod
    def from_descriptions(cls, descriptions: dict[str, str]) -> "CodeTree":
        nodes = {}
        for code, desc in descriptions.items():
            nodes[code] = CodeNode(code, desc, parent_code(code), code_level(code))
        return cls(nodes)

    def __contains__(self, code: str) -> bool:
        return code in self.nodes

    def __len__(self) -> int:
        return len(self.nodes)

    def description(self, code: str) -> str:
        node = self.nodes.get(code)
        return node.description if node else ""

    def parent(self, code: str) -> str | None:
        return self.nodes[code].parent

    def children(self, code: str) -> list[str]:
        return sorted(c for c, n in self.nodes.items() if n.parent == code)


def with_ancestors(descriptions: dict[str, str]) -> dict[str, str]:
    """Add every missing ancestor of the listed codes with a placeholder description."""
    out = dict(descriptions)
    for code in list(descriptions):
        p = parent_code(code)
        while p is not None:
            out.setdefault(p, f"group {p.rstrip('.')}")
            p = parent_code(p)
    return dict(sorted(out.items()))


@dataclass(frozen=True)
class TermList:
    terms: tuple[str, ...]
    kind: str

    def __post_init__(self):
        if self.kind not in ("indicator", "adr"):
            raise ValueError(f"term list kind must be 'indicator' or 'adr', got {self.kind!r}")

    def __iter__(self):
        return iter(self.terms)

    def __len__(self):
        return len(self.terms)

    def matches(self, description: str) -> str | None:
        """First term contained (case-insensitive substring) in ``description``."""
        text = description.lower()
        for term in self.terms:
            if term in text:
                return term
        return None

    @classmethod
    def of(cls, terms, kind: str) -> "TermList":
        seen: dict[str, None] = {}
        for t in terms:
            t = t.strip().lower()
            if t:
                seen.setdefault(t, None)
        return cls(tuple(seen), kind)


def _read_csv(path: Path, header: list[str]):
    try:
        fh = open(path, newline="", encoding="utf-8")
    except OSError as e:
        raise IngestError(f"{path}: cannot open ({e.strerror})") from e
    with fh:
        reader = csv.reader(fh)
        first = next(reader, None)
        if first is None:
            return
        if [h.strip() for h in first] != header:
            raise IngestError(f"{path}:1: expected header {','.join(header)!r}, got {','.join(first)!r}")
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(header):
                raise IngestError(f"{path}:{lineno}: expected {len(header)} columns, got {len(row)}")
            yield lineno, [v.strip() for v in row]


def _parse_age(path, lineno, text) -> int:
    try:
        age = int(text)
    except ValueError:
        raise IngestError(f"{path}:{lineno}: age {text!r} is not an integer") from None
    if age < 0:
        raise IngestError(f"{path}:{lineno}: negative age {age}")
    return age


def load_cohort(patients_path, medical_path, therapy_path, code_tree: CodeTree | None = None) -> Cohort:
    patients_path, medical_path, therapy_path = map(Path, (patients_path, medical_path, therapy_path))
    patients = []
    seen = set()
    for lineno, (pid, reg) in _read_csv(patients_path, ["patid", "registration_age"]):
        if pid in seen:
            raise IngestError(f"{patients_path}:{lineno}: duplicate patient {pid!r}")
        seen.add(pid)
        patients.append((pid, _parse_age(patients_path, lineno, reg)))

    def rows(path, header, valid, what):
        out = []
        for lineno, (pid, age, item) in _read_csv(path, header):
            if pid not in seen:
                raise IngestError(f"{path}:{lineno}: unknown patient {pid!r}")
            a = _parse_age(path, lineno, age)
            if not valid(item):
                raise IngestError(f"{path}:{lineno}: malformed {what} {item!r}")
            out.append((pid, a, item))
        return out

    ev = rows(medical_path, ["patid", "age", "code"], is_code, "code")
    rx = rows(therapy_path, ["patid", "age", "drugcode"], is_drug, "drugcode")
    return Cohort.from_rows(patients, ev, rx, code_tree=code_tree)


def load_code_tree(codes_path) -> CodeTree:
    codes_path = Path(codes_path)
    nodes = {}
    for lineno, (code, desc) in _read_csv(codes_path, ["code", "description"]):
        if not is_code(code):
            raise IngestError(f"{codes_path}:{lineno}: malformed code {code!r}")
        if code in nodes:
            raise IngestError(f"{codes_path}:{lineno}: duplicate code {code!r}")
        nodes[code] = CodeNode(code, desc, parent_code(code), code_level(code))
    return CodeTree(nodes)


def _read_lines(path) -> list[str]:
    path = Path(path)
    try:
        return path.read_text(encoding="utf-8").splitlines()
    except OSError as e:
        raise IngestError(f"{path}: cannot read ({e.strerror})") from e


def load_term_list(path, kind: str) -> TermList:
    return TermList.of(_read_lines(path), kind)


def load_prefixes(path) -> list[str]:
    """One code prefix per line; blank lines skipped, order kept, duplicates dropped."""
    out: dict[str, None] = {}
    for line in _read_lines(path):
        line = line.strip()
        if line:
            out.setdefault(line, None)
    return list(out)


def load_data_dir(data_dir) -> Cohort:
    d = Path(data_dir)
    tree = load_code_tree(d / CODES_FILE) if (d / CODES_FILE).exists() else None
    return load_cohort(d / PATIENTS_FILE, d / MEDICAL_FILE, d / THERAPY_FILE, code_tree=tree)


def write_cohort(cohort: Cohort, out_dir) -> None:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    with open(out / PATIENTS_FILE, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["patid", "registration_age"])
        w.writerows(zip(cohort.patient_ids, cohort.registration_age.tolist()))
    with open(out / MEDICAL_FILE, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["patid", "age", "code"])
        w.writerows(cohort.event_rows())
    with open(out / THERAPY_FILE, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["patid", "age", "drugcode"])
        w.writerows(cohort.prescription_rows())
    if cohort.code_tree is not None:
        write_code_tree(cohort.code_tree, out / CODES_FILE)


def write_code_tree(tree: CodeTree, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["code", "description"])
        for code in sorted(tree.nodes):
            w.writerow([code, tree.nodes[code].description])


@dataclass
class SynthSpec:
    """Parameters of a synthetic cohort with injected ground truth.

    A fraction ``exposure_fraction`` of patients get ``indication_code`` and
    then the drug ``min_indication_delay``-``max_indication_delay`` days later
    (1-7 by default, so the indication is always strictly before exposure). Each exposed patient gets each ADR code,
    with its incidence probability, 1-30 days after exposure. Comorbid codes
    are recorded 1-30 days before exposure with their probability. Background
    codes and background drugs are independent daily Bernoulli draws.
    """

    n_patients: int
    drug: str
    indication_code: str
    adr_codes: list[tuple[str, float]]
    background_codes: list[tuple[str, float]]
    observation_days: int = 3650
    rng_seed: int = 0
    exposure_fraction: float = 0.25
    comorbid_codes: list[tuple[str, float]] = field(default_factory=list)
    background_drugs: list[tuple[str, float]] = field(default_factory=list)
    descriptions: dict[str, str] = field(default_factory=dict)
    min_exposure_age: int = 400
    min_indication_delay: int = 1
    max_indication_delay: int = 7

    def __post_init__(self):
        self.adr_codes = [(c, float(p)) for c, p in self.adr_codes]
        self.background_codes = [(c, float(r)) for c, r in self.background_codes]
        self.comorbid_codes = [(c, float(p)) for c, p in self.comorbid_codes]
        self.background_drugs = [(d, float(r)) for d, r in self.background_drugs]
        self.validate()

    def validate(self) -> None:
        if self.n_patients < 1:
            raise ValueError("n_patients must be positive")
        if not is_drug(self.drug):
            raise ValueError(f"bad drugcode {self.drug!r}")
        for d, r in self.background_drugs:
            if not is_drug(d) or d == self.drug:
                raise ValueError(f"bad background drug {d!r}")
            if r < 0:
                raise ValueError("background drug rates must be >= 0")
        for c in [self.indication_code] + [c for c, _ in self.adr_codes + self.background_codes + self.comorbid_codes]:
            if not is_code(c):
                raise ValueError(f"bad code {c!r}")
        for c, p in self.adr_codes + self.comorbid_codes:
            if not 0.0 <= p <= 1.0:
                raise ValueError(f"probability for {c} outside [0, 1]")
        for c, r in self.background_codes:
            if not 0.0 <= r <= 1.0:
                raise ValueError(f"daily rate for {c} outside [0, 1]")
        if self.indication_code in {c for c, _ in self.adr_codes}:
            raise ValueError("adr_codes must not contain the indication code")
        if not 0.0 <= self.exposure_fraction <= 1.0:
            raise ValueError("exposure_fraction outside [0, 1]")
        if not 0 <= self.min_indication_delay <= self.max_indication_delay:
            raise ValueError("need 0 <= min_indication_delay <= max_indication_delay")
        if self.observation_days < self.min_exposure_age + 60:
            raise ValueError("observation_days too short for min_exposure_age")

    def to_json(self) -> dict:
        return asdict(self)

    @classmethod
    def from_json(cls, data: dict) -> "SynthSpec":
        data = dict(data)
        for key in ("adr_codes", "background_codes", "comorbid_codes", "background_drugs"):
            if key in data:
                data[key] = [tuple(x) for x in data[key]]
        return cls(**data)


def _bernoulli_days(rng: np.random.Generator, n: int, days: int, rate: float):
    """Patients and distinct ages of a daily Bernoulli(rate) process on ``[0, days]``."""
    counts = rng.binomial(days + 1, rate, size=n)
    patient = np.repeat(np.arange(n, dtype=np.int64), counts)
    age = rng.integers(0, days + 1, size=len(patient))
    # Conditional on the count the day set is a uniform subset: redraw collisions.
    while True:
        key = patient * (days + 1) + age
        order = np.argsort(key, kind="stable")
        dup = np.zeros(len(key), dtype=bool)
        dup[order[1:]] = key[order[1:]] == key[order[:-1]]
        if not dup.any():
            return patient, age
        age[dup] = rng.integers(0, days + 1, size=int(dup.sum()))


def generate_synthetic(spec: SynthSpec) -> tuple[Cohort, dict]:
    """Seeded synthetic cohort plus a manifest of exactly what was injected."""
    spec.validate()
    rng = np.random.default_rng(spec.rng_seed)
    n, days = spec.n_patients, spec.observation_days
    width = len(str(n - 1))
    pids = [f"p{i:0{width}d}" for i in range(n)]

    codes = sorted(
        {spec.indication_code}
        | {c for c, _ in spec.adr_codes}
        | {c for c, _ in spec.background_codes}
        | {c for c, _ in spec.comorbid_codes}
    )
    cpos = {c: i for i, c in enumerate(codes)}
    drugs = sorted({spec.drug} | {d for d, _ in spec.background_drugs})
    dpos = {d: i for i, d in enumerate(drugs)}

    ev_p, ev_a, ev_c = [], [], []
    rx_p, rx_a, rx_d = [], [], []
    manifest: dict = {"rng_seed": spec.rng_seed, "n_patients": n, "drug": spec.drug}

    exposed = np.flatnonzero(rng.random(n) < spec.exposure_fraction)
    expo = rng.integers(spec.min_exposure_age, days - 60 + 1, size=len(exposed))
    delay = rng.integers(spec.min_indication_delay, spec.max_indication_delay + 1, size=len(exposed))
    ev_p.append(exposed)
    ev_a.append(expo - delay)
    ev_c.append(np.full(len(exposed), cpos[spec.indication_code]))
    rx_p.append(exposed)
    rx_a.append(expo)
    rx_d.append(np.full(len(exposed), dpos[spec.drug]))
    manifest["exposed"] = int(len(exposed))
    manifest["indication_events"] = int(len(exposed))

    manifest["comorbid_events"] = {}
    for code, p in spec.comorbid_codes:
        hit = rng.random(len(exposed)) < p
        ev_p.append(exposed[hit])
        ev_a.append(expo[hit] - rng.integers(1, 31, size=int(hit.sum())))
        ev_c.append(np.full(int(hit.sum()), cpos[code]))
        manifest["comorbid_events"][code] = int(hit.sum())

    manifest["adr_events"] = {}
    for code, p in spec.adr_codes:
        hit = rng.random(len(exposed)) < p
        ev_p.append(exposed[hit])
        ev_a.append(expo[hit] + rng.integers(1, 31, size=int(hit.sum())))
        ev_c.append(np.full(int(hit.sum()), cpos[code]))
        manifest["adr_events"][code] = int(hit.sum())

    manifest["background_events"] = {}
    for code, rate in spec.background_codes:
        p, a = _bernoulli_days(rng, n, days, rate)
        ev_p.append(p)
        ev_a.append(a)
        ev_c.append(np.full(len(p), cpos[code]))
        manifest["background_events"][code] = int(len(p))

    manifest["background_prescriptions"] = {}
    for drug, rate in spec.background_drugs:
        p, a = _bernoulli_days(rng, n, days, rate)
        rx_p.append(p)
        rx_a.append(a)
        rx_d.append(np.full(len(p), dpos[drug]))
        manifest["background_prescriptions"][drug] = int(len(p))

    desc = {c: spec.descriptions.get(c, f"synthetic event {c.rstrip('.')}") for c in codes}
    tree = CodeTree.from_descriptions(with_ancestors(desc))
    cohort = Cohort(
        pids,
        np.zeros(n, dtype=np.int64),
        (np.concatenate(ev_p), np.concatenate(ev_a), np.concatenate(ev_c)),
        (np.concatenate(rx_p), np.concatenate(rx_a), np.concatenate(rx_d)),
        codes,
        drugs,
        code_tree=tree,
    )
    return cohort, manifest


def write_manifest(manifest: dict, path) -> None:
    Path(path).write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n", encoding="utf-8")
