"""Regenerate the shipped workload corpus and its MPKI trend files.

Usage: python3 scripts/make_corpus.py [--out DIR]
"""

import argparse
import os

from tilesec.engine import profile_mpki_raw
from tilesec.experiment import PROFILE_CORES
from tilesec.heuristic import normalize_trend
from tilesec.machine import default_config
from tilesec.workload import corpus_dir, generate_workload, save_workload

# six user-level pairs and two OS-level apps; invocations are scaled down so
# traced runs stay small, the template defaults keep the full interaction counts
CORPUS = [
    ("user-a", "user-interactive", 11, dict(interaction_total=1000, secure_share=0.5)),
    ("user-b", "user-interactive", 12, dict(interaction_total=1000, secure_share=0.35)),
    ("user-c", "user-interactive", 13, dict(interaction_total=1000, secure_share=0.5,
                                            reuse=0.98, hot_fraction=0.05)),
    ("user-d", "user-interactive", 14, dict(interaction_total=1000, secure_share=0.65)),
    ("user-e", "user-interactive", 15, dict(interaction_total=1000, secure_share=0.45,
                                            mem_ratio=0.4)),
    ("user-f", "user-interactive", 16, dict(interaction_total=1000, secure_share=0.55,
                                            secure_threads=32)),
    ("os-a", "os-interactive", 21, dict(interaction_total=10000, secure_share=0.5)),
    ("os-b", "os-interactive", 22, dict(interaction_total=10000, secure_share=0.4)),
]


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--out", default=corpus_dir())
    args = ap.parse_args()
    cfg = default_config()
    os.makedirs(args.out, exist_ok=True)
    for name, template, seed, params in CORPUS:
        spec = generate_workload(template, name=name, seed=seed, **params)
        app = spec.to_app()
        for ps, proc in zip(spec.processes, app.processes):
            raw = profile_mpki_raw(cfg, proc, list(PROFILE_CORES), seed)
            fname = f"{name}.pid{ps.pid}.csv"
            with open(os.path.join(args.out, fname), "w") as fh:
                fh.write(normalize_trend(raw).to_csv())
            ps.trend_file = fname
        save_workload(spec, os.path.join(args.out, name + ".json"))
        print("wrote", name)


if __name__ == "__main__":
    main()
