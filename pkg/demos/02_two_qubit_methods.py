"""Two qubits with half of the measurements: pseudoinverse, MLE and a corrector.

A fixed collection of 8 out of the 16 product projectors is measured on
every test state. The corrector is trained for that collection; MLE and the
pseudoinverse need no training. A pseudoinverse sweep over all M is written
as CSV and SVG next to the script's working directory.

Run:  python demos/02_two_qubit_methods.py [--train 20000] [--epochs 40]
"""

import argparse
from pathlib import Path

import numpy as np

from qtomo.metrics import bures, bures_raw, psd_stats
from qtomo.models.corrector import reconstruct_batch, train_corrector
from qtomo.mle import MleConfig
from qtomo.nn import TrainConfig
from qtomo.states import RandomStateConfig, generate_dataset
from qtomo.sweep import bures_sweep, mle_collection, pinv_batch, svg_chart

parser = argparse.ArgumentParser()
parser.add_argument("--train", type=int, default=20000)
parser.add_argument("--test", type=int, default=2000)
parser.add_argument("--epochs", type=int, default=40)
parser.add_argument("--out", default=".")
args = parser.parse_args()

train = generate_dataset(RandomStateConfig(2, seed=0), args.train)
test = generate_dataset(RandomStateConfig(2, seed=1), args.test)
subset = (1, 3, 4, 6, 8, 10, 12, 14)

epochs = args.epochs
cosine = lambda e: 0.5 * (1 + np.cos(np.pi * e / epochs))
model, log = train_corrector(train, len(subset), "full_m", TrainConfig(epochs=epochs), subset=subset,
                             lr_schedule=cosine)
print(f"corrector training loss {log.losses[0]:.4f} -> {log.losses[-1]:.4f}")

raw = {
    "pinv": pinv_batch(test, subset, 2),
    "mle": mle_collection(test, subset, 2, MleConfig()),
    "corrector": reconstruct_batch(model, test, subset),
}
print(f"\nM = {len(subset)}, collection {subset}")
for name, rec in raw.items():
    score = bures(rec, test) if name == "mle" else bures_raw(rec, test)
    low = psd_stats(rec)["lowest_mean"]
    print(f"{name:10s} mean Bures {score.mean():.4f}   mean lowest eigenvalue {low:+.4f}")

# the pseudoinverse gets better with every extra measurement and is exact at M = 16
sweep = bures_sweep(test, "pinv", range(0, 17), collections=20)
out = Path(args.out)
(out / "pinv_sweep.csv").write_text(sweep.to_csv())
(out / "pinv_sweep.svg").write_text(svg_chart([sweep]))
print("\n" + "\n".join(f"M={r.m:2d}  {r.mean_bures:.4f}" for r in sweep.rows))
