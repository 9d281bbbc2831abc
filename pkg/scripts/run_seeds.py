"""Run the experiment over several seeds and print a markdown summary table.

    python scripts/run_seeds.py --seeds 0 1 2 3 4 --config configs/default.json --out runs/seeds
"""
from __future__ import annotations

import argparse
import json
import statistics
from pathlib import Path

from son_adv.config import ExperimentConfig, load_config, with_seed
from son_adv.harness import run_experiment


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--seeds", type=int, nargs="+", default=[0, 1, 2, 3, 4])
    ap.add_argument("--config")
    ap.add_argument("--out", default="runs/seeds")
    args = ap.parse_args()

    base = load_config(args.config) if args.config else ExperimentConfig()
    rows = []
    for seed in args.seeds:
        payload = run_experiment(with_seed(base, seed), Path(args.out) / f"seed{seed}")["payload"]
        row = {"seed": seed, "clean": payload["clean_accuracy"]}
        for name, entry in payload["attacks"].items():
            row[f"{name} adv"] = entry["adversarial_accuracy"]
            row[f"{name} median k"] = entry["median_modified_features"]
            if "defense" in entry:
                row[f"{name} defended"] = entry["defense"]["post_defense_adv_accuracy"]
                row[f"{name} recovered"] = entry["defense"]["recovery_fraction"]
        rows.append(row)
        print(json.dumps(row), flush=True)

    cols = list(rows[0])
    print("\n| " + " | ".join(cols) + " |")
    print("|" + "---|" * len(cols))
    for row in rows:
        print("| " + " | ".join(f"{row[c]:.3f}" if isinstance(row[c], float) else str(row[c]) for c in cols) + " |")
    print("| mean | " + " | ".join(f"{statistics.mean(r[c] for r in rows):.3f}" for c in cols[1:]) + " |")


if __name__ == "__main__":
    main()
