"""Test accuracy of stream subsets {1}, {2}, {3} and {1,2,3} under the overfit protocol.

    python scripts/ablation.py --frame-size 64
"""

import argparse
from dataclasses import fields, replace

from overfit import OverfitExperiment, load_data, run

SUBSETS = ("1", "2", "3", "1,2,3")


def main():
    p = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    for f in fields(OverfitExperiment):
        if f.name != "streams":
            p.add_argument("--" + f.name.replace("_", "-"), type=type(f.default), default=f.default)
    exp = OverfitExperiment(**vars(p.parse_args()))
    splits = load_data(exp)
    rows = [run(replace(exp, streams=s), splits, verbose=False) for s in SUBSETS]
    print(f"{'streams':<10}{'test acc':>10}{'train acc':>11}{'epochs':>8}{'seconds':>9}")
    for r in rows:
        print(f"{'{' + r['streams'] + '}':<10}{r['test_acc']:>10.1%}{r['train_acc']:>11.1%}{r['epochs']:>8}{r['seconds']:>9.0f}")
    best_single = max(r["test_acc"] for r in rows[:3])
    gap = rows[3]["test_acc"] - best_single
    print(f"fused minus best single stream: {gap * 100:+.1f} points")


if __name__ == "__main__":
    main()
