"""Hyperparameter search treats pipeline components as hyperparameters too:
loss kinds and samplers can be searched next to learning rates."""

import os

from kgembed import TrainConfig, load_kg
from kgembed.search import grid_search, random_search

DATA = os.path.join(os.path.dirname(__file__), "data", "countries")
_, kg = load_kg(DATA)

base = TrainConfig(
    model="distmult",
    dim=8,
    optimizer="adam",
    n_neg=4,
    batch_size=8,
    max_epochs=60,
    check_per_epoch=30,
    patience=5,
    seed=0,
)

space = {
    "lr": [0.1, 0.02],
    "loss": ["margin", "self_adversarial"],
}

best, trials = grid_search(space, base, kg)
print("grid search over lr x loss:")
for t in trials:
    print(f"  trial {t.index}: lr={t.config.lr:<5} loss={t.config.loss:<17} valid MRR={t.mrr:.3f}")
print(f"best: trial {best.index} (lr={best.config.lr}, loss={best.config.loss}) MRR={best.mrr:.3f}")

best_r, trials_r = random_search({"lr": [0.2, 0.1, 0.05, 0.02, 0.01]}, base, kg, n_trials=3, seed=4)
print("\nrandom search over lr (3 trials, seeded):")
for t in trials_r:
    print(f"  trial {t.index}: lr={t.config.lr:<5} valid MRR={t.mrr:.3f}")
print(f"best: lr={best_r.config.lr} MRR={best_r.mrr:.3f}")
