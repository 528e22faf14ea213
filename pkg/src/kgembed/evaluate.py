"""Filtered link-prediction evaluation: MRR and Hits@K, per direction.

Protocol: for each query triple and each prediction direction, score every
entity in the open slot, push the scores of all *other* known-true
completions (from train + valid + test) to -inf, and rank the target with
the mid-rank tie rule

    rank = 1 + |{s > s_target}| + floor(|{s == s_target}| / 2)

(the equal set includes the target itself). Mid-ranking keeps a
constant-output model at chance level instead of MRR ~ 1.
"""

from __future__ import annotations

import math
from collections import defaultdict
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .data import IndexedKG
from .sampling import HEAD, TAIL

DEFAULT_KS = (1, 3, 10)


@dataclass(frozen=True)
class FilterSets:
    """Known-true completions over all splits, keyed by the fixed pair."""

    hr2t: dict[tuple[int, int], np.ndarray]
    rt2h: dict[tuple[int, int], np.ndarray]


@dataclass(frozen=True)
class DirectionReport:
    mrr: float
    hits: dict[int, float]
    n_queries: int


@dataclass(frozen=True)
class RankingReport:
    """Per-direction metrics plus their average."""

    head: DirectionReport
    tail: DirectionReport

    @property
    def n_queries(self) -> int:
        return self.head.n_queries

    @property
    def mrr(self) -> float:
        return 0.5 * (self.head.mrr + self.tail.mrr)

    def hits(self, k: int) -> float:
        return 0.5 * (self.head.hits[k] + self.tail.hits[k])


def build_filter_sets(kg: IndexedKG) -> FilterSets:
    """Collect every (pair -> completions) over train, valid and test."""
    hr2t: dict[tuple[int, int], set[int]] = defaultdict(set)
    rt2h: dict[tuple[int, int], set[int]] = defaultdict(set)
    for split in (kg.train, kg.valid, kg.test):
        for h, r, t in split:
            h, r, t = int(h), int(r), int(t)
            hr2t[(h, r)].add(t)
            rt2h[(r, t)].add(h)
    return FilterSets(
        hr2t={k: np.fromiter(v, dtype=np.int64) for k, v in hr2t.items()},
        rt2h={k: np.fromiter(v, dtype=np.int64) for k, v in rt2h.items()},
    )


def ranks_for_queries(
    scorer, queries: np.ndarray, slot: int, filters: FilterSets, threads: int = 1
) -> np.ndarray:
    """Filtered rank of the true entity for each query, one direction."""
    queries = np.asarray(queries, dtype=np.int64)

    def run_chunk(chunk: np.ndarray) -> np.ndarray:
        scores = scorer.score_candidates(chunk, slot)
        target = chunk[:, 2] if slot == TAIL else chunk[:, 0]
        target_scores = scores[np.arange(len(chunk)), target].copy()
        for i, (h, r, t) in enumerate(chunk):
            known = (
                filters.hr2t.get((int(h), int(r))) if slot == TAIL else filters.rt2h.get((int(r), int(t)))
            )
            if known is not None:
                scores[i, known] = -np.inf
            scores[i, target[i]] = target_scores[i]
        greater = (scores > target_scores[:, None]).sum(axis=1)
        equal = (scores == target_scores[:, None]).sum(axis=1)
        return 1 + greater + equal // 2

    chunks = [queries[lo : lo + 512] for lo in range(0, len(queries), 512)]
    if threads > 1 and len(chunks) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            parts = list(pool.map(run_chunk, chunks))
    else:
        parts = [run_chunk(c) for c in chunks]
    return np.concatenate(parts) if parts else np.zeros(0, dtype=np.int64)


def evaluate(
    scorer,
    kg: IndexedKG,
    split,
    filters: FilterSets,
    ks: tuple[int, ...] = DEFAULT_KS,
    limit_fraction: float | None = None,
    seed: int = 0,
    threads: int = 1,
) -> RankingReport:
    """Filtered MRR / Hits@K over a split, head and tail directions.

    ``split`` is "valid", "test", "train", or an explicit [n, 3] array.
    ``limit_fraction`` evaluates a deterministic prefix of the
    seed-shuffled query list (debugging aid; final evaluation passes None).
    """
    if isinstance(split, str):
        queries = getattr(kg, split)
    else:
        queries = np.asarray(split, dtype=np.int64)
    if len(queries) == 0:
        raise ValueError("cannot evaluate an empty split")
    if limit_fraction is not None:
        if not 0.0 < limit_fraction <= 1.0:
            raise ValueError(f"limit_fraction must be in (0, 1], got {limit_fraction}")
        if limit_fraction < 1.0:
            order = np.random.default_rng(seed).permutation(len(queries))
            queries = queries[order[: math.ceil(limit_fraction * len(queries))]]

    reports = {}
    for name, slot in (("head", HEAD), ("tail", TAIL)):
        ranks = ranks_for_queries(scorer, queries, slot, filters, threads=threads)
        # exactly-rounded sum: the aggregate is independent of summation order
        mrr = math.fsum(1.0 / r for r in ranks) / len(ranks)
        hits = {k: int((ranks <= k).sum()) / len(ranks) for k in ks}
        reports[name] = DirectionReport(mrr=mrr, hits=hits, n_queries=len(queries))
    return RankingReport(head=reports["head"], tail=reports["tail"])


class CKGEScorer:
    """Adapter giving conventional KGE params the candidate-scoring interface."""

    def __init__(self, params):
        self.params = params

    def score_candidates(self, queries: np.ndarray, slot: int) -> np.ndarray:
        from .models import score_candidates

        return score_candidates(self.params, queries, slot)
