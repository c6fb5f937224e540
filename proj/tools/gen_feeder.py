#!/usr/bin/env python3
"""Write the synthetic 9-bus feeder: a radial tree plus two closing branches."""
import argparse
import json

LOADS = {1: 0, 2: 10, 3: 30, 4: 35, 5: 30, 6: 40, 7: 15, 8: 20, 9: 30}
TREE = [(2, 3), (3, 4), (4, 5), (5, 6), (2, 7), (4, 8), (6, 9)]
LOOPS = [(3, 7), (5, 8)]


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--r", type=float, default=0.02)
    ap.add_argument("--x", type=float, default=0.05)
    ap.add_argument("--b", type=float, default=0.02, help="total charging per branch")
    ap.add_argument("--corridor", type=float, default=100.0, help="rating of the 1-2 branch, MVA")
    ap.add_argument("--rate", type=float, default=150.0)
    ap.add_argument("--vmin", type=float, default=0.95)
    ap.add_argument("--radial", action="store_true", help="drop the two closing branches")
    ap.add_argument("--out", required=True)
    a = ap.parse_args()

    buses = []
    for i in range(1, 10):
        bus = {"id": i, "v_min": a.vmin, "v_max": 2.0 - a.vmin, "load_mw": LOADS[i], "deficit_cost": 1000}
        if i == 1:
            bus["reference"] = True
        buses.append(bus)
    pairs = [(1, 2, a.corridor)] + [(f, t, a.rate) for f, t in TREE + ([] if a.radial else LOOPS)]
    case = {
        "format": "hydrosddp-case",
        "version": 1,
        "name": "feeder9-radial" if a.radial else "feeder9-synthetic",
        "base_mva": 100,
        "hours_per_stage": 730,
        "buses": buses,
        "branches": [{"from": f, "to": t, "r": a.r, "x": a.x, "b_c": a.b, "rate_mva": rt} for f, t, rt in pairs],
        "thermals": [
            {"id": 1, "bus": 5, "p_max_mw": 60, "q_min_mvar": -40, "q_max_mvar": 40, "cost": 60},
            {"id": 2, "bus": 9, "p_max_mw": 200, "q_min_mvar": -80, "q_max_mvar": 80, "cost": 180},
        ],
        "hydros": [
            {"id": 1, "bus": 1, "v_max": 500, "v_initial": 250, "u_max": 200, "rho": 1.0,
             "q_min_mvar": -100, "q_max_mvar": 100},
            {"id": 2, "bus": 7, "v_max": 150, "v_initial": 75, "u_max": 40, "rho": 0.8,
             "q_min_mvar": -30, "q_max_mvar": 30},
        ],
    }
    with open(a.out, "w") as f:
        json.dump(case, f, indent=2)
        f.write("\n")


if __name__ == "__main__":
    main()
