"""Train TransE on the countries toy KG and evaluate with filtered ranking."""

import os

from kgembed import TrainConfig, load_kg
from kgembed.train import final_report, train

DATA = os.path.join(os.path.dirname(__file__), "data", "countries")
_, kg = load_kg(DATA)

config = TrainConfig(
    model="transe",
    dim=16,
    lr=0.05,
    optimizer="adam",
    loss="margin",
    margin=2.0,
    sampler="uniform",
    n_neg=4,
    batch_size=8,
    max_epochs=200,
    check_per_epoch=50,  # evaluate on valid every 50 epochs
    limit_val_batches=1.0,
    patience=10,
    seed=1,
)

result = train(config, kg)

print("training log (one line per epoch metric):")
for line in result.log[-8:]:
    print(" ", line)

print(f"\nvalidation history: {[(e, round(m, 3)) for e, m in result.history]}")
print(f"best checkpoint from epoch {result.best.epoch} (valid MRR {result.best.best_metric:.3f})")

report = final_report(result.best.params, kg, split="test")
print("\nfiltered test metrics (head / tail prediction averaged):")
print(f"  MRR     {report.mrr:.3f}")
for k in (1, 3, 10):
    print(f"  Hits@{k:<2d} {report.hits(k):.3f}")
