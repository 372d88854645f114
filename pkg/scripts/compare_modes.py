"""Run the same corpus and workload under all three modes and compare traffic.

Usage: python3 scripts/compare_modes.py [--peers N] [--documents N]
       [--windows N] [--seed N] [--out-dir DIR]
"""

import argparse
import json
from pathlib import Path

from xpnet.adapt import normalize_view_pattern
from xpnet.engine import ScenarioConfig, run_scenario, write_jsonl
from xpnet.pattern import canonical_pattern_text, parse_query

TEMPLATES = [
    "(//book (/title {val}))",
    "(//author {val})",
    "(//section (//para {cont}))",
    "(//book (/author $a) (/year {val}))",
    "(//journal (//name {val}))",
    "(//entry {id,val})",
    "(//lib (//book {cont}))",
    "(//title {val})",
    "(//ref (/name {val}))",
    "(//year {val})",
]


def build_config(args, mode, user_views):
    return ScenarioConfig.from_dict(
        {
            "mode": mode,
            "peers": {"count": args.peers, "budget_bytes": 1 << 17},
            "ticks": args.windows * 20,
            "seed": args.seed,
            "tau_ticks": 20,
            "corpus": {
                "generate": {"documents": args.documents, "max_nodes": 40, "seed": args.seed + 1}
            },
            "workload": {
                "templates": TEMPLATES,
                "count": 3 * args.windows * args.peers,
                "zipf_s": 1.0,
                "seed": args.seed + 2,
            },
            "user_views": [list(v) for v in user_views],
        }
    )


def main():
    parser = argparse.ArgumentParser()
    parser.add_argument("--peers", type=int, default=16)
    parser.add_argument("--documents", type=int, default=100)
    parser.add_argument("--windows", type=int, default=10)
    parser.add_argument("--seed", type=int, default=2026)
    parser.add_argument("--out-dir", default=None)
    args = parser.parse_args()

    top3 = [
        (f"p{i}", canonical_pattern_text(normalize_view_pattern(parse_query(t).patterns[0])))
        for i, t in enumerate(TEMPLATES[:3])
    ]
    final = {}
    for mode, uv in (("docIndexOnly", ()), ("userViews", top3), ("adaptive", ())):
        records = run_scenario(build_config(args, mode, uv))
        summary = records[-1]
        final[mode] = summary["finalWindowQueryBytes"]
        print(f"{mode:14s} windows {summary['windowQueryBytes']}")
        if args.out_dir:
            Path(args.out_dir).mkdir(parents=True, exist_ok=True)
            write_jsonl(records, str(Path(args.out_dir) / f"{mode}.jsonl"))

    base = final["docIndexOnly"]
    print()
    print(json.dumps({
        "finalWindowQueryBytes": final,
        "ratios": {m: round(v / base, 4) for m, v in final.items()},
    }, indent=2))


if __name__ == "__main__":
    main()
