#!/usr/bin/env python3
"""Retrieval demo: phase agreement of a pretrained encoder vs a random one.

Generates a synthetic dataset, pretrains an encoder, then answers the same
random queries against the test split twice: once with the pretrained
encoder and once with an untrained (epoch-0) encoder of the same shape.
Prints both phase-agreement rates; the pretrained encoder should win.
"""

import argparse
import sys
from pathlib import Path

from tempcoh.cli import main as tempcoh


def agreement_of(report_txt: Path) -> str:
    for line in report_txt.read_text().splitlines():
        if line.startswith("phase_agreement:"):
            return line.split(": ", 1)[1]
    return "n/a"


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--out", required=True, help="output directory")
    parser.add_argument("--videos", type=int, default=16)
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--method", default="contrastive2",
                        choices=("contrastive", "ranking", "contrastive2"))
    parser.add_argument("--queries", default="random:40")
    parser.add_argument("--set", action="append", default=[],
                        metavar="SECTION.KEY=VALUE",
                        help="forwarded config override (repeatable)")
    args = parser.parse_args()

    out = Path(args.out)
    sets = [flag for text in args.set for flag in ("--set", text)]
    data = out / "dataset"
    steps = [
        ["synth", "--out", str(data), "--videos", str(args.videos),
         "--seed", str(args.seed), *sets],
        ["pretrain", "--data", str(data), "--method", args.method,
         "--out", str(out / "pretrained.ckpt"), "--seed", str(args.seed),
         *sets],
        ["pretrain", "--data", str(data), "--method", args.method,
         "--out", str(out / "random.ckpt"), "--seed", str(args.seed),
         "--set", "pretrain.epochs=0", *sets],
        ["retrieve", "--data", str(data), "--model",
         str(out / "pretrained.ckpt"), "--queries", args.queries,
         "--query-split", "D", "--seed", str(args.seed),
         "--out", str(out / "pretrained_hits.csv"), *sets],
        ["retrieve", "--data", str(data), "--model", str(out / "random.ckpt"),
         "--queries", args.queries, "--query-split", "D",
         "--seed", str(args.seed), "--out", str(out / "random_hits.csv"),
         *sets],
    ]
    for argv in steps:
        code = tempcoh(argv)
        if code != 0:
            return code
    print()
    print("phase agreement, random encoder:    ",
          agreement_of(out / "random_hits.csv.txt"))
    print("phase agreement, pretrained encoder:",
          agreement_of(out / "pretrained_hits.csv.txt"))
    return 0


if __name__ == "__main__":
    sys.exit(main())
