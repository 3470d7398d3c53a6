"""How often the case study reaches its expected outcome across seeds and thresholds.

For every (theta_induction, p_min) pair the case study is rerun over a range
of seeds.  Each run is scored on three outcomes: lying_time promoted,
swaps_per_hour rejected, and (user, is_a, person) asserted.

    python scripts/sweep_thresholds.py [--seeds 20]
"""

import argparse
from dataclasses import replace

from knowmesh.harness import resolve_scenario, run_scenario
from knowmesh.knowledge import KnowledgeLevel


def outcome(result) -> tuple[bool, bool, bool]:
    details = [r.detail for r in result.trace if r.node == "SO1" and r.category == "lifecycle"]
    promoted = "promoted lying_time" in details
    rejected = any(d.startswith("rejected swaps_per_hour") for d in details)
    asserted = result.stores["SO1"].level_of(("user", "is_a", "person")) is KnowledgeLevel.SECONDARY
    return promoted, rejected, asserted


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    parser.add_argument("--seeds", type=int, default=20)
    args = parser.parse_args()

    base = resolve_scenario("case-study")
    print(f"{'theta':>6} {'p_min':>6} {'promote':>8} {'reject':>8} {'assert':>8}")
    for theta in (0.6, 0.7, 0.8, 0.9):
        for p_min in (0.7, 0.8, 0.9):
            scenario = replace(base, thresholds=replace(base.thresholds, theta_induction=theta, p_min=p_min))
            tallies = [0, 0, 0]
            for seed in range(args.seeds):
                for i, ok in enumerate(outcome(run_scenario(scenario, seed=seed))):
                    tallies[i] += ok
            rates = " ".join(f"{t / args.seeds:8.2f}" for t in tallies)
            print(f"{theta:6.2f} {p_min:6.2f} {rates}")


if __name__ == "__main__":
    main()
