"""Trace view churn round by round for a stationary workload.

Shows each adaptation round's added and dropped views per peer and the
final query cost of the hot queries before and after the system settles.

Usage: python3 scripts/adaptation_trace.py [--windows N] [--theta F]
"""

import argparse

from xpnet.engine import Engine, ScenarioConfig

HOT_QUERIES = [
    ("p0", "(//book (/title {val}))"),
    ("p1", "(//author {val})"),
    ("p2", "(//section (//para {cont}))"),
]


def main():
    parser = argparse.ArgumentParser()
    parser.add_argument("--windows", type=int, default=8)
    parser.add_argument("--theta", type=float, default=1.2)
    args = parser.parse_args()

    ticks = args.windows * 10
    events = [
        {"tick": t, "peer": peer, "query": q}
        for t in range(1, ticks + 1)
        for peer, q in HOT_QUERIES
    ]
    cfg = ScenarioConfig.from_dict(
        {
            "mode": "adaptive",
            "peers": {"count": 8, "budget_bytes": 1 << 16},
            "ticks": ticks,
            "seed": 5,
            "tau_ticks": 10,
            "theta": args.theta,
            "corpus": {"generate": {"documents": 40, "max_nodes": 30, "seed": 6}},
            "workload": {"events": events},
        }
    )
    engine = Engine(cfg)
    engine.start()
    engine.step(ticks)

    for rec in engine.records:
        for rnd in rec.get("rounds", []):
            print(f"round {rnd['round']}:")
            for rep in rnd["reports"]:
                if not rep["added"] and not rep["dropped"]:
                    continue
                for a in rep["added"]:
                    print(f"  {rep['peer']} + {a['pattern']} ({a['actualBytes']}B)")
                for d in rep["dropped"]:
                    print(f"  {rep['peer']} - {d}")

    summary = engine.summary()
    print()
    print("final window query bytes:", summary["windowQueryBytes"][-1])
    for peer, views in sorted(summary["views"].items()):
        for pattern in views:
            print(f"{peer}: {pattern}")


if __name__ == "__main__":
    main()
