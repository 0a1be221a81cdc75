"""Write the synthetic scenario's spec and term/prefix files into a directory.

    python3 scripts/make_example_inputs.py examples_in/ [--seed 0] [--n 20000] [--null]

Then: ``adr-scan generate --spec examples_in/spec.json --out data/`` and
``adr-scan run --data data/ --drug 912314611 --indicators examples_in/indicators.txt ...``.
"""
import argparse
import json
from pathlib import Path

from adrscan import scenarios


def main():
    p = argparse.ArgumentParser()
    p.add_argument("out", type=Path)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--n", type=int, default=20_000)
    p.add_argument("--null", action="store_true", help="zero every injected incidence")
    args = p.parse_args()
    args.out.mkdir(parents=True, exist_ok=True)
    spec = scenarios.injection_spec(args.seed, args.n, inject=not args.null)
    (args.out / "spec.json").write_text(json.dumps(spec.to_json(), indent=2) + "\n")
    for name, lines in [
        ("indicators.txt", scenarios.INDICATOR_TERMS),
        ("adrs.txt", scenarios.ADR_TERMS),
        ("noise_prefixes.txt", scenarios.NOISE_PREFIXES),
        ("irrelevant_prefixes.txt", scenarios.IRRELEVANT_PREFIXES),
    ]:
        (args.out / name).write_text("\n".join(lines) + "\n")
    print(f"wrote inputs for drug {scenarios.DRUG} ({scenarios.DRUG_NAME}) to {args.out}")


if __name__ == "__main__":
    main()
