"""Load a dataset directory, build vocabularies, and inspect the index.

The dataset layout is the usual one: train.txt / valid.txt / test.txt with
one tab-separated (head, relation, tail) triple per line.
"""

import os

from kgembed import add_inverse_relations, load_kg

DATA = os.path.join(os.path.dirname(__file__), "data", "countries")

vocab, kg = load_kg(DATA)

print(f"entities   : {kg.n_entities}")
print(f"relations  : {kg.n_relations}")
print(f"triples    : train={len(kg.train)} valid={len(kg.valid)} test={len(kg.test)}")

# ids are assigned by first occurrence, train first, so they are stable
print("\nfirst few entity ids:")
for label in list(vocab.entity_to_id)[:5]:
    print(f"  {label:10s} -> {vocab.entity_to_id[label]}")

# the index keeps tail sets per (head, relation) and head sets per
# (relation, tail), built from train only; samplers filter against these
oslo = vocab.entity_to_id["oslo"]
located = vocab.relation_to_id["located_in"]
tails = kg.hr2t[(oslo, located)]
print(f"\ntails of (oslo, located_in): {[vocab.id_to_entity[t] for t in tails]}")
print(f"frequency of (oslo, located_in): {kg.freq_hr[(oslo, located)]}")

# inverse augmentation doubles the relation space and mirrors every triple,
# so head prediction can be phrased as tail prediction over r-inverse
aug = add_inverse_relations(kg)
print(f"\nafter inverse augmentation: relations={aug.n_relations} train={len(aug.train)}")
