"""Letting a network choose the next measurement.

X states have 7 real parameters, so 7 well-chosen product projectors pin
them down, while a random order wastes measurements on redundant outcomes.
A predefined-basis selector/reconstructor pair is trained on X states: the
reconstructor first learns on random orders, then the selector is trained
to pick, at each step, the label whose outcome helps the reconstructor most.

Run:  python demos/03_learned_measurement_order.py [--train 10000]
"""

import argparse

import numpy as np

from qtomo.metrics import bures_raw
from qtomo.models.lstm import SelectorReconstructor, run_episodes, train_selector_reconstructor
from qtomo.nn import TrainConfig
from qtomo.states import make_rng, x_state_dataset

parser = argparse.ArgumentParser()
parser.add_argument("--train", type=int, default=10000)
parser.add_argument("--warmup", type=int, default=30)
parser.add_argument("--epochs", type=int, default=15)
args = parser.parse_args()

train = x_state_dataset(args.train, 1)
test = x_state_dataset(1000, 2)

model = SelectorReconstructor.create("predefined", 2, seed=0)
model, _ = train_selector_reconstructor(train, "predefined", TrainConfig(epochs=args.warmup), model=model,
                                        steps=8, warmup_epochs=args.warmup)
epochs = args.epochs
cosine = lambda e: 0.5 * (1 + np.cos(np.pi * e / epochs))
model, log = train_selector_reconstructor(train, "predefined", TrainConfig(epochs=epochs, seed=1), model=model,
                                          steps=8, lr_schedule=cosine)

random_view = SelectorReconstructor("random", 2, model.weights, model.hidden_size, model.n_layers)
learned = run_episodes(model, test, 8)
shuffled = run_episodes(random_view, test, 8, rng=make_rng(0))
print("step  learned order  random order   (mean Bures distance)")
for l in range(8):
    print(f"{l + 1:4d}  {bures_raw(learned.reconstructions[:, l], test).mean():.4f}"
          f"         {bures_raw(shuffled.reconstructions[:, l], test).mean():.4f}")

sequences, counts = np.unique(learned.indices[:, :7], axis=0, return_counts=True)
print("\nmost common learned sequence:", sequences[np.argmax(counts)], f"({counts.max()} of {len(test)} states)")
