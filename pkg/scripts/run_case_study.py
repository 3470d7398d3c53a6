"""Run the livestock/health case study and print what each smart object learned.

    python scripts/run_case_study.py [--seed N] [--out DIR]
"""

import argparse
from pathlib import Path

from knowmesh.harness import dump_store, resolve_scenario, run_scenario
from knowmesh.knowledge import KnowledgeLevel

PHASES = [("exchange", 400), ("induction", 2000), ("verification", 6000)]


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    parser.add_argument("--seed", type=int, default=None)
    parser.add_argument("--out", type=Path, default=None, help="write trace and store dumps here")
    args = parser.parse_args()

    scenario = resolve_scenario("case-study")
    initial = {ts.triple.key for ts in scenario.triples if ts.node == "SO1" and ts.at == 0}
    for phase, until in PHASES:
        result = run_scenario(scenario, seed=args.seed, until=until)
        so1 = result.stores["SO1"]
        print(f"== after {phase} (tick {until})")
        learned = sorted(t.key for t in so1.ontology if t.key not in initial and t.source == "SO2")
        print(f"   SO1 ontology entries from SO2: {len(learned)}")
        for key in learned:
            print("     " + " ".join(key))
        for level in (KnowledgeLevel.INVENTED, KnowledgeLevel.SECONDARY):
            for t in so1.triples(level):
                if t.predicate in ("is_a", "synonymous_to"):
                    print(f"   {level.value:9} {' '.join(t.key)}")
        for rec in result.trace:
            if rec.category == "lifecycle" and rec.detail.split()[0] in ("promoted", "rejected", "verify"):
                print(f"   t={rec.tick:<5} {rec.detail}")

    if args.out is not None:
        args.out.mkdir(parents=True, exist_ok=True)
        (args.out / "trace.tsv").write_text(result.trace_text, encoding="utf-8")
        for node, store in result.stores.items():
            dump_store(store, args.out / f"{node}.store")
        print(f"wrote trace and dumps to {args.out}")


if __name__ == "__main__":
    main()
