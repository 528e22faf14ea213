"""Negative sampling strategies: uniform, Bernoulli, 1-vs-all, and graph batches."""

import os

import numpy as np

from kgembed import (
    all_negatives,
    bern_negatives,
    bernoulli_table,
    load_kg,
    sample_graph,
    uniform_negatives,
)
from kgembed.sampling import HEAD, TAIL

DATA = os.path.join(os.path.dirname(__file__), "data", "countries")
vocab, kg = load_kg(DATA)

# uniform corruption flips a fair coin per negative for the slot, draws the
# replacement uniformly, and redraws candidates that collide with train
batch = uniform_negatives(kg, kg.train[:4], n_neg=3, seed=0)
print("uniform negatives for the first positive:")
for j in range(3):
    h, r, t = batch.negatives[0, j]
    slot = "head" if batch.slot[0, j] == HEAD else "tail"
    print(f"  ({vocab.id_to_entity[h]}, {vocab.id_to_relation[r]}, {vocab.id_to_entity[t]})  [{slot} corrupted]")

# Bernoulli corruption biases the slot choice per relation: relations with
# many tails per head get their heads corrupted more often
table = bernoulli_table(kg)
print("\nper-relation head-corruption probabilities:")
for label, rid in vocab.relation_to_id.items():
    print(f"  {label:14s} tph={table.tph[rid]:.2f} hpt={table.hpt[rid]:.2f} p_head={table.p_head[rid]:.2f}")

big = np.repeat(kg.train[:1], 2000, axis=0)
nb = bern_negatives(kg, big, 50, table, seed=1)
rid = int(kg.train[0, 1])
print(f"empirical head fraction over 1e5 draws: {(nb.slot == HEAD).mean():.3f} (target {table.p_head[rid]:.3f})")

# the 1-vs-all candidate list sweeps one slot over every entity, the
# positive included at its own id; evaluation and 1-vs-all losses use it
cands = all_negatives(tuple(kg.train[0]), TAIL, kg)
print(f"\nall-candidates list has {len(cands)} rows (= entity count)")

# graph batches sample edges without replacement and carry in-batch
# normalization: edge weights 1/|same (dst, rel)|, node weights 1/in-degree
g = sample_graph(kg, n_edges=10, n_neg=2, seed=2)
print(f"\ngraph batch: {len(g.node_ids)} nodes, {len(g.edges)} edges")
print(f"edge_norm head: {np.round(g.edge_norm[:5], 3)}")
group_sums = {}
for e, (s, r, d) in enumerate(g.edges):
    group_sums[(int(r), int(d))] = group_sums.get((int(r), int(d)), 0.0) + g.edge_norm[e]
print(f"every (rel, dst) group sums to 1.0: {all(abs(v - 1) < 1e-12 for v in group_sums.values())}")
