"""Triple/rule file loading, vocabularies, index structures, and rule grounding.

A dataset is a directory with ``train.txt``, ``valid.txt`` and ``test.txt``,
one tab-separated ``head relation tail`` triple per line (the de facto
layout of the public FB15K-237 / WN18RR distributions).
"""

from __future__ import annotations

import os
from collections import defaultdict
from dataclasses import dataclass, field

import numpy as np

Triple = tuple[str, str, str]

SPLIT_FILES = ("train.txt", "valid.txt", "test.txt")


class DataFormatError(ValueError):
    """Malformed input file (bad line, bad field, missing file)."""


@dataclass(frozen=True)
class Vocab:
    """Bijective label <-> contiguous-id maps for entities and relations.

    Ids are assigned 0..n-1 in first-occurrence order, scanning train,
    then valid, then test, so rebuilding from the same files always
    yields the same assignment.
    """

    entity_to_id: dict[str, int]
    relation_to_id: dict[str, int]
    id_to_entity: list[str] = field(repr=False)
    id_to_relation: list[str] = field(repr=False)

    @property
    def n_entities(self) -> int:
        return len(self.id_to_entity)

    @property
    def n_relations(self) -> int:
        return len(self.id_to_relation)


@dataclass
class IndexedKG:
    """Integer-encoded splits plus the train-set statistics used by samplers.

    ``hr2t`` / ``rt2h`` and the frequency counts are built from the train
    split only; evaluation-time filtering over all splits is a separate
    structure (see :func:`kgembed.evaluate.build_filter_sets`).
    """

    train: np.ndarray  # [n,3] int64 (h, r, t)
    valid: np.ndarray
    test: np.ndarray
    hr2t: dict[tuple[int, int], set[int]]
    rt2h: dict[tuple[int, int], set[int]]
    freq_hr: dict[tuple[int, int], int]
    freq_rt: dict[tuple[int, int], int]
    n_entities: int
    n_relations: int
    has_inverses: bool = False
    # sorted packed train keys, lazily built; used for vectorized membership
    _train_keys: np.ndarray | None = field(default=None, repr=False)

    def pack(self, triples: np.ndarray) -> np.ndarray:
        """Encode (h,r,t) rows as single int64 keys (h*R+r)*E+t."""
        triples = np.asarray(triples, dtype=np.int64)
        return (triples[..., 0] * self.n_relations + triples[..., 1]) * self.n_entities + triples[..., 2]

    def train_keys(self) -> np.ndarray:
        if self._train_keys is None:
            self._train_keys = np.unique(self.pack(self.train))
        return self._train_keys

    def in_train(self, triples: np.ndarray) -> np.ndarray:
        """Vectorized train-set membership for an array of id triples."""
        keys = self.train_keys()
        cand = self.pack(triples)
        pos = np.searchsorted(keys, cand)
        pos = np.minimum(pos, len(keys) - 1)
        return keys[pos] == cand


@dataclass(frozen=True)
class Rule:
    """Horn rule over relations: body (1 or 2 atoms) implies head.

    One-atom rules share the variable pair, r1(x,y) => head(x,y); two-atom
    rules chain, r1(x,y) & r2(y,z) => head(x,z).
    """

    body_relations: tuple[int, ...]
    head_relation: int
    confidence: float

    def __post_init__(self):
        if len(self.body_relations) not in (1, 2):
            raise DataFormatError(f"rule body must have 1 or 2 atoms, got {len(self.body_relations)}")
        if not 0.0 < self.confidence <= 1.0:
            raise DataFormatError(f"rule confidence must be in (0, 1], got {self.confidence}")


@dataclass(frozen=True)
class Grounding:
    """A rule instance with all variables bound to concrete entities."""

    body_triples: tuple[tuple[int, int, int], ...]
    conclusion: tuple[int, int, int]
    confidence: float
    in_train: bool = False


def load_triples(path: str) -> list[Triple]:
    """Read tab-separated label triples, in file order, duplicates kept.

    Raises :class:`DataFormatError` for a missing file, an empty file, or
    any line without exactly three fields (the error names the line).
    """
    if not os.path.exists(path):
        raise DataFormatError(f"triple file not found: {path}")
    triples: list[Triple] = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.rstrip("\n")
            if not line:
                continue
            fields = line.split("\t")
            if len(fields) != 3:
                raise DataFormatError(
                    f"{path}:{lineno}: expected 3 tab-separated fields, got {len(fields)}"
                )
            triples.append((fields[0], fields[1], fields[2]))
    if not triples:
        raise DataFormatError(f"{path}: no triples found")
    return triples


def build_vocab(train: list[Triple], valid: list[Triple] = (), test: list[Triple] = ()) -> Vocab:
    """Assign contiguous ids by first occurrence, scanning train/valid/test.

    Entity and relation label spaces are independent; the same label may
    appear in both without clashing.
    """
    entity_to_id: dict[str, int] = {}
    relation_to_id: dict[str, int] = {}
    for split in (train, valid, test):
        for h, r, t in split:
            if h not in entity_to_id:
                entity_to_id[h] = len(entity_to_id)
            if r not in relation_to_id:
                relation_to_id[r] = len(relation_to_id)
            if t not in entity_to_id:
                entity_to_id[t] = len(entity_to_id)
    return Vocab(
        entity_to_id=entity_to_id,
        relation_to_id=relation_to_id,
        id_to_entity=list(entity_to_id),
        id_to_relation=list(relation_to_id),
    )


def _encode_split(triples: list[Triple], vocab: Vocab) -> np.ndarray:
    out = np.empty((len(triples), 3), dtype=np.int64)
    e2i, r2i = vocab.entity_to_id, vocab.relation_to_id
    for i, (h, r, t) in enumerate(triples):
        try:
            out[i, 0] = e2i[h]
        except KeyError:
            raise DataFormatError(f"unknown entity label: {h!r}") from None
        try:
            out[i, 1] = r2i[r]
        except KeyError:
            raise DataFormatError(f"unknown relation label: {r!r}") from None
        try:
            out[i, 2] = e2i[t]
        except KeyError:
            raise DataFormatError(f"unknown entity label: {t!r}") from None
    return out


def index_kg(
    train: list[Triple],
    valid: list[Triple],
    test: list[Triple],
    vocab: Vocab,
) -> IndexedKG:
    """Encode splits to id arrays and build train-set statistics.

    ``hr2t[(h,r)]`` holds every train tail for the pair, ``rt2h[(r,t)]``
    every train head; the frequency dicts count train occurrences
    (duplicate lines in the raw file each count).
    """
    train_arr = _encode_split(train, vocab)
    valid_arr = _encode_split(valid, vocab)
    test_arr = _encode_split(test, vocab)

    hr2t: dict[tuple[int, int], set[int]] = defaultdict(set)
    rt2h: dict[tuple[int, int], set[int]] = defaultdict(set)
    freq_hr: dict[tuple[int, int], int] = defaultdict(int)
    freq_rt: dict[tuple[int, int], int] = defaultdict(int)
    for h, r, t in train_arr:
        h, r, t = int(h), int(r), int(t)
        hr2t[(h, r)].add(t)
        rt2h[(r, t)].add(h)
        freq_hr[(h, r)] += 1
        freq_rt[(r, t)] += 1

    return IndexedKG(
        train=train_arr,
        valid=valid_arr,
        test=test_arr,
        hr2t=dict(hr2t),
        rt2h=dict(rt2h),
        freq_hr=dict(freq_hr),
        freq_rt=dict(freq_rt),
        n_entities=vocab.n_entities,
        n_relations=vocab.n_relations,
    )


def add_inverse_relations(kg: IndexedKG) -> IndexedKG:
    """Return a new KG with an inverse triple (t, r+n_relations, h) per train triple.

    Doubles ``n_relations`` and rebuilds all train statistics. Refuses to
    run on a KG that already carries inverses.
    """
    if kg.has_inverses:
        raise ValueError("inverse relations already added")
    n_rel = kg.n_relations
    inv = kg.train[:, [2, 1, 0]].copy()
    inv[:, 1] += n_rel
    train = np.concatenate([kg.train, inv], axis=0)

    hr2t: dict[tuple[int, int], set[int]] = defaultdict(set)
    rt2h: dict[tuple[int, int], set[int]] = defaultdict(set)
    freq_hr: dict[tuple[int, int], int] = defaultdict(int)
    freq_rt: dict[tuple[int, int], int] = defaultdict(int)
    for h, r, t in train:
        h, r, t = int(h), int(r), int(t)
        hr2t[(h, r)].add(t)
        rt2h[(r, t)].add(h)
        freq_hr[(h, r)] += 1
        freq_rt[(r, t)] += 1

    return IndexedKG(
        train=train,
        valid=kg.valid.copy(),
        test=kg.test.copy(),
        hr2t=dict(hr2t),
        rt2h=dict(rt2h),
        freq_hr=dict(freq_hr),
        freq_rt=dict(freq_rt),
        n_entities=kg.n_entities,
        n_relations=2 * n_rel,
        has_inverses=True,
    )


def load_rules(path: str, vocab: Vocab) -> list[Rule]:
    """Read rules, one per line: ``confidence<TAB>head_rel<TAB>body_rel_1[<TAB>body_rel_2]``.

    Relation labels are resolved through ``vocab``; unknown labels and
    confidences outside (0, 1] raise :class:`DataFormatError`.
    """
    if not os.path.exists(path):
        raise DataFormatError(f"rule file not found: {path}")
    rules: list[Rule] = []
    r2i = vocab.relation_to_id
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.rstrip("\n")
            if not line:
                continue
            fields = line.split("\t")
            if len(fields) not in (3, 4):
                raise DataFormatError(
                    f"{path}:{lineno}: expected 3 or 4 tab-separated fields, got {len(fields)}"
                )
            try:
                conf = float(fields[0])
            except ValueError:
                raise DataFormatError(f"{path}:{lineno}: bad confidence {fields[0]!r}") from None
            if not 0.0 < conf <= 1.0:
                raise DataFormatError(f"{path}:{lineno}: confidence must be in (0, 1], got {conf}")
            rels = []
            for label in fields[1:]:
                if label not in r2i:
                    raise DataFormatError(f"{path}:{lineno}: unknown relation label: {label!r}")
                rels.append(r2i[label])
            rules.append(Rule(body_relations=tuple(rels[1:]), head_relation=rels[0], confidence=conf))
    return rules


def ground_rules(rules: list[Rule], kg: IndexedKG) -> list[Grounding]:
    """Instantiate every rule against the train split.

    One-atom rules yield one grounding per train triple of the body
    relation; chain rules yield one grounding per joinable triple pair.
    Conclusions already present in train are kept, flagged ``in_train``.
    """
    by_rel: dict[int, list[tuple[int, int, int]]] = defaultdict(list)
    for h, r, t in kg.train:
        by_rel[int(r)].append((int(h), int(r), int(t)))

    out: list[Grounding] = []
    for rule in rules:
        if len(rule.body_relations) == 1:
            r1 = rule.body_relations[0]
            for h, _, t in by_rel.get(r1, ()):
                concl = (h, rule.head_relation, t)
                out.append(
                    Grounding(
                        body_triples=((h, r1, t),),
                        conclusion=concl,
                        confidence=rule.confidence,
                        in_train=concl[2] in kg.hr2t.get((concl[0], concl[1]), ()),
                    )
                )
        else:
            r1, r2 = rule.body_relations
            for h, _, m in by_rel.get(r1, ()):
                for z in sorted(kg.hr2t.get((m, r2), ())):
                    concl = (h, rule.head_relation, z)
                    out.append(
                        Grounding(
                            body_triples=((h, r1, m), (m, r2, z)),
                            conclusion=concl,
                            confidence=rule.confidence,
                            in_train=concl[2] in kg.hr2t.get((concl[0], concl[1]), ()),
                        )
                    )
    return out


def write_groundings(groundings: list[Grounding], path: str) -> None:
    """Write groundings, one per line: ``conf<TAB>h,r,t<TAB>body1[<TAB>body2]`` (id triples)."""
    with open(path, "w", encoding="utf-8") as fh:
        for g in groundings:
            parts = [f"{g.confidence:g}", ",".join(map(str, g.conclusion))]
            parts += [",".join(map(str, b)) for b in g.body_triples]
            fh.write("\t".join(parts) + "\n")


def read_groundings(path: str, kg: IndexedKG) -> list[Grounding]:
    """Read a groundings file written by :func:`write_groundings`.

    The ``in_train`` flag is recomputed against ``kg`` rather than stored.
    """
    if not os.path.exists(path):
        raise DataFormatError(f"groundings file not found: {path}")
    out: list[Grounding] = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.rstrip("\n")
            if not line:
                continue
            fields = line.split("\t")
            if len(fields) not in (3, 4):
                raise DataFormatError(f"{path}:{lineno}: expected 3 or 4 fields, got {len(fields)}")
            try:
                conf = float(fields[0])
                triples = [tuple(int(x) for x in f.split(",")) for f in fields[1:]]
            except ValueError:
                raise DataFormatError(f"{path}:{lineno}: malformed grounding line") from None
            if any(len(t) != 3 for t in triples):
                raise DataFormatError(f"{path}:{lineno}: triples must be h,r,t")
            concl = triples[0]
            out.append(
                Grounding(
                    body_triples=tuple(triples[1:]),
                    conclusion=concl,
                    confidence=conf,
                    in_train=concl[2] in kg.hr2t.get((concl[0], concl[1]), ()),
                )
            )
    return out


def write_vocab(vocab: Vocab, directory: str) -> None:
    """Dump ``entities.tsv`` and ``relations.tsv`` (``label<TAB>id``) into ``directory``."""
    os.makedirs(directory, exist_ok=True)
    with open(os.path.join(directory, "entities.tsv"), "w", encoding="utf-8") as fh:
        for label, idx in vocab.entity_to_id.items():
            fh.write(f"{label}\t{idx}\n")
    with open(os.path.join(directory, "relations.tsv"), "w", encoding="utf-8") as fh:
        for label, idx in vocab.relation_to_id.items():
            fh.write(f"{label}\t{idx}\n")


def load_kg(dataset_dir: str) -> tuple[Vocab, IndexedKG]:
    """Load a train/valid/test dataset directory into a vocab and indexed KG."""
    splits = []
    for name in SPLIT_FILES:
        path = os.path.join(dataset_dir, name)
        if not os.path.exists(path):
            raise DataFormatError(f"missing dataset file: {path}")
        splits.append(load_triples(path))
    vocab = build_vocab(*splits)
    return vocab, index_kg(*splits, vocab)
