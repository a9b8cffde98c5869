"""One qubit, two measurements: what can be recovered, and who recovers it.

For each of the six pairs of single-qubit projectors we compare three
estimators on the same test states:

* the pseudoinverse (least-norm) reconstruction,
* the best analytic estimate for that pair,
* a corrector network trained on that pair.

Run:  python demos/01_single_qubit_pairs.py [--train 5000] [--epochs 20]
"""

import argparse
from itertools import combinations

import numpy as np

from qtomo.measurement import outcomes, projector_set
from qtomo.metrics import bures_raw, error_map
from qtomo.models.corrector import reconstruct_batch, train_corrector
from qtomo.nn import TrainConfig
from qtomo.reconstruct import analytic_1q
from qtomo.states import RandomStateConfig, generate_dataset
from qtomo.sweep import pinv_batch

parser = argparse.ArgumentParser()
parser.add_argument("--train", type=int, default=5000)
parser.add_argument("--test", type=int, default=1000)
parser.add_argument("--epochs", type=int, default=20)
args = parser.parse_args()

train = generate_dataset(RandomStateConfig(1, seed=0), args.train)
test = generate_dataset(RandomStateConfig(1, seed=1), args.test)
pset = projector_set(1)

print("pair   pinv    analytic  corrector   (mean Bures distance)")
maps = {}
for pair in combinations(range(1, 5), 2):
    m = outcomes(test, pset, pair)
    rec_pinv = pinv_batch(test, pair, 1)
    rec_exact = np.stack([analytic_1q(pair, row) for row in m])
    model, _ = train_corrector(train, 2, "full_m", TrainConfig(epochs=args.epochs), subset=pair)
    rec_nn = reconstruct_batch(model, test, pair)
    scores = [bures_raw(r, test).mean() for r in (rec_pinv, rec_exact, rec_nn)]
    print(f"{pair}  " + "  ".join(f"{s:.4f}" for s in scores))
    maps[pair] = (error_map(test, rec_exact), error_map(test, rec_nn))

# The error maps show *where* information is missing: pairs of populations
# leave the coherence unknown, pairs of coherences leave the populations unknown.
print("\nelement-wise mean absolute error, analytic vs corrector")
for pair, (exact, nn) in maps.items():
    print(pair, np.round(exact.ravel(), 3), np.round(nn.ravel(), 3))
