"""Train, evaluate and deploy a small network end to end in a scratch directory.

Runs the command-line entry points with configs/toy.cfg: two Super-DCL
iterations, an evaluation against the tuned benchmarks, and an
estimate-then-decide run with unknown demand.  Takes a few seconds.
The toy budget is far too small for the network to compete with the tuned
benchmarks; configs/desk.cfg is the setup that does.
"""
import csv
import sys
import tempfile
from pathlib import Path

from ted.cli import main

toy = (Path(__file__).resolve().parents[1] / "configs" / "toy.cfg").read_text()
with tempfile.TemporaryDirectory() as tmp:
    tmp = Path(tmp)
    weights = tmp / "train" / "iter_2.net"
    cfg = tmp / "toy.cfg"
    cfg.write_text(toy + f"eval.weights={weights}\nted.weights={weights}\n")
    for cmd in ("train", "evaluate", "ted-run"):
        print(f"== ted {cmd}")
        if main([cmd, "--config", str(cfg), "--out", str(tmp / cmd.split("-")[0])]) != 0:
            sys.exit(f"ted {cmd} failed")
    with open(tmp / "evaluate" / "evaluate.csv") as fh:
        for row in csv.DictReader(fh):
            print(f"instance {row['instance']} {row['policy']:>6}: cost {float(row['mean']):7.3f}"
                  f"  gap vs BSP {float(row['gap_vs_bsp']):+.2%}")
    with open(tmp / "ted" / "ted.csv") as fh:
        for row in csv.DictReader(fh):
            print(f"instance {row['instance']} horizon {row['horizon']:>4}: gap to known parameters "
                  f"{float(row['gap']):+.2%}")
