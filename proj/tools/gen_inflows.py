#!/usr/bin/env python3
"""Write a seasonal low/medium/high inflow table for the synthetic cases."""
import argparse
import math


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--stages", type=int, default=48)
    ap.add_argument("--plants", default="1", help="comma separated plant ids")
    ap.add_argument("--mean", type=float, nargs="+", default=[70.0], help="mean inflow per plant, hm3/stage")
    ap.add_argument("--swing", type=float, default=0.5, help="seasonal amplitude")
    ap.add_argument("--spread", type=float, default=0.5, help="low/high offset relative to medium")
    ap.add_argument("--out", required=True)
    a = ap.parse_args()
    ids = [int(x) for x in a.plants.split(",")]
    means = a.mean if len(a.mean) == len(ids) else [a.mean[0]] * len(ids)
    with open(a.out, "w") as f:
        f.write("stage,outcome,probability," + ",".join(f"inflow_{i}" for i in ids) + "\n")
        for t in range(1, a.stages + 1):
            season = 1.0 + a.swing * math.sin(2.0 * math.pi * (t - 1) / 12.0)
            for k, level in enumerate((1.0 - a.spread, 1.0, 1.0 + a.spread)):
                vals = [round(m * season * level, 4) for m in means]
                f.write(f"{t},{k},0.333333333333333333," + ",".join(repr(v) for v in vals) + "\n")


if __name__ == "__main__":
    main()
