"""Conventional KGE models: parameter tables, scoring, and hand-derived gradients.

Seven models share one convention: ``score`` returns float64, higher =
more plausible (distance models negate the distance). Parameters are
stored float32; all score/loss/gradient arithmetic upcasts to float64.

Gradients are derived by hand per model and composed with the loss
derivatives from :mod:`kgembed.losses`; correctness is pinned by the
finite-difference test suite rather than an autodiff dependency.

Candidate scoring (one slot swept over every entity) evaluates the same
floating-point expression tree as ``score`` with the candidate table
substituted in, so per-triple and all-candidate paths agree to the bit
for elementwise models (matmul-backed TransH/TransR may differ in the
last ulp).
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .losses import (
    LossSpec,
    bce_loss,
    bce_loss_grads,
    margin_loss,
    margin_loss_grads,
    self_adversarial_loss,
    self_adversarial_loss_grads,
)
from .sampling import HEAD, TAIL, LabeledBatch, NegBatch

MODEL_KINDS = ("transe", "transh", "transr", "distmult", "complex", "rotate", "simple")

# sparse gradient: table name -> (sorted unique row ids, per-row grads, float64)
SparseGrad = dict[str, tuple[np.ndarray, np.ndarray]]


@dataclass
class ModelParams:
    """Embedding tables plus model-specific extras, float32.

    Table layout per model kind:
      transe/distmult: ent [nE, d], rel [nR, d]
      transh: + norm [nR, d] (hyperplane normals, unit rows)
      transr: + proj [nR, d, d] (per-relation projection, identity init)
      complex: ent [nE, 2d], rel [nR, 2d] (real halves then imaginary)
      rotate: ent [nE, 2d], rel [nR, d] (relation phases)
      simple: ent_h/ent_t [nE, d], rel/rel_inv [nR, d]

    ``version`` counts optimizer steps; consumers that cache derived
    quantities (e.g. soft labels) check it for staleness.
    """

    model: str
    dim: int
    tables: dict[str, np.ndarray]
    transe_p: int = 1
    version: int = 0

    @property
    def n_entities(self) -> int:
        name = "ent_h" if self.model == "simple" else "ent"
        return self.tables[name].shape[0]

    @property
    def n_relations(self) -> int:
        return self.tables["rel"].shape[0]

    def copy(self) -> "ModelParams":
        return replace(self, tables={k: v.copy() for k, v in self.tables.items()})


def init_params(model: str, n_entities: int, n_relations: int, dim: int, seed) -> ModelParams:
    """Seeded uniform init in [-6/sqrt(d), 6/sqrt(d)] per entry.

    Exceptions to the uniform bound: rotate phases are uniform in
    [-pi, pi), transr projections start at the identity, and transh
    normals are normalized to unit rows after drawing.
    """
    if model not in MODEL_KINDS:
        raise ValueError(f"unknown model kind: {model!r}")
    if dim < 1:
        raise ValueError(f"embedding dim must be >= 1, got {dim}")
    rng = np.random.default_rng(seed)
    bound = 6.0 / np.sqrt(dim)

    def uni(shape):
        return rng.uniform(-bound, bound, size=shape).astype(np.float32)

    tables: dict[str, np.ndarray] = {}
    if model in ("transe", "transh", "transr", "distmult"):
        tables["ent"] = uni((n_entities, dim))
        tables["rel"] = uni((n_relations, dim))
        if model == "transh":
            w = uni((n_relations, dim)).astype(np.float64)
            w /= np.linalg.norm(w, axis=1, keepdims=True)
            tables["norm"] = w.astype(np.float32)
        elif model == "transr":
            tables["proj"] = np.broadcast_to(
                np.eye(dim, dtype=np.float32), (n_relations, dim, dim)
            ).copy()
    elif model == "complex":
        tables["ent"] = uni((n_entities, 2 * dim))
        tables["rel"] = uni((n_relations, 2 * dim))
    elif model == "rotate":
        tables["ent"] = uni((n_entities, 2 * dim))
        tables["rel"] = rng.uniform(-np.pi, np.pi, size=(n_relations, dim)).astype(np.float32)
    elif model == "simple":
        tables["ent_h"] = uni((n_entities, dim))
        tables["ent_t"] = uni((n_entities, dim))
        tables["rel"] = uni((n_relations, dim))
        tables["rel_inv"] = uni((n_relations, dim))
    return ModelParams(model=model, dim=dim, tables=tables)


def renormalize_entities(params: ModelParams) -> None:
    """Project entity rows onto the unit L2 sphere (epoch-start constraint)."""
    for name in ("ent", "ent_h", "ent_t"):
        if name in params.tables:
            t = params.tables[name]
            norms = np.linalg.norm(t.astype(np.float64), axis=1, keepdims=True)
            np.divide(t, np.maximum(norms, 1e-12), out=t, casting="unsafe")


def renormalize_normals(params: ModelParams) -> None:
    """Re-unit the transh hyperplane normals (after each optimizer step)."""
    if params.model != "transh":
        return
    t = params.tables["norm"]
    norms = np.linalg.norm(t.astype(np.float64), axis=1, keepdims=True)
    np.divide(t, np.maximum(norms, 1e-12), out=t, casting="unsafe")


def _check_ids(params: ModelParams, triples: np.ndarray) -> np.ndarray:
    triples = np.asarray(triples, dtype=np.int64)
    if triples.ndim != 2 or triples.shape[1] != 3:
        raise ValueError("triples must be an [n, 3] array")
    if triples.size:
        if triples.min() < 0:
            raise ValueError("negative id in triples")
        if triples[:, [0, 2]].max() >= params.n_entities:
            raise ValueError(
                f"entity id {triples[:, [0, 2]].max()} out of range ({params.n_entities} entities)"
            )
        if triples[:, 1].max() >= params.n_relations:
            raise ValueError(
                f"relation id {triples[:, 1].max()} out of range ({params.n_relations} relations)"
            )
    return triples


def _rows(table: np.ndarray, ids: np.ndarray) -> np.ndarray:
    return table[ids].astype(np.float64)


# ---------------------------------------------------------------------------
# scoring


def score(params: ModelParams, triples: np.ndarray) -> np.ndarray:
    """Score triples under ``params.model``; returns float64 [n]."""
    triples = _check_ids(params, triples)
    h, r, t = triples[:, 0], triples[:, 1], triples[:, 2]
    return _SCORE[params.model](params, h, r, t)


def _score_transe(params, h, r, t):
    d = (_rows(params.tables["ent"], h) + _rows(params.tables["rel"], r)) - _rows(
        params.tables["ent"], t
    )
    return _neg_norm(d, params.transe_p)


def _neg_norm(d, p):
    if p == 1:
        return -np.abs(d).sum(axis=-1)
    return -np.sqrt((d * d).sum(axis=-1))


def _transh_project(e, w):
    return e - (e * w).sum(axis=-1, keepdims=True) * w


def _score_transh(params, h, r, t):
    w = _rows(params.tables["norm"], r)
    hp = _transh_project(_rows(params.tables["ent"], h), w)
    tp = _transh_project(_rows(params.tables["ent"], t), w)
    d = (hp + _rows(params.tables["rel"], r)) - tp
    return -(d * d).sum(axis=-1)


def _score_transr(params, h, r, t):
    m = _rows(params.tables["proj"], r)  # [n, d, d]
    mh = np.einsum("nij,nj->ni", m, _rows(params.tables["ent"], h))
    mt = np.einsum("nij,nj->ni", m, _rows(params.tables["ent"], t))
    d = (mh + _rows(params.tables["rel"], r)) - mt
    return -(d * d).sum(axis=-1)


def _score_distmult(params, h, r, t):
    return (
        (_rows(params.tables["ent"], h) * _rows(params.tables["rel"], r))
        * _rows(params.tables["ent"], t)
    ).sum(axis=-1)


def _split(x, d):
    return x[..., :d], x[..., d:]


def _score_complex(params, h, r, t):
    d = params.dim
    hre, him = _split(_rows(params.tables["ent"], h), d)
    rre, rim = _split(_rows(params.tables["rel"], r), d)
    tre, tim = _split(_rows(params.tables["ent"], t), d)
    re = hre * rre - him * rim
    im = hre * rim + him * rre
    return (re * tre + im * tim).sum(axis=-1)


def _score_rotate(params, h, r, t):
    d = params.dim
    hre, him = _split(_rows(params.tables["ent"], h), d)
    tre, tim = _split(_rows(params.tables["ent"], t), d)
    theta = _rows(params.tables["rel"], r)
    cos, sin = np.cos(theta), np.sin(theta)
    ure = (hre * cos - him * sin) - tre
    uim = (hre * sin + him * cos) - tim
    return -np.sqrt((ure * ure + uim * uim).sum(axis=-1))


def _score_simple(params, h, r, t):
    eh_h = _rows(params.tables["ent_h"], h)
    et_t = _rows(params.tables["ent_t"], t)
    eh_t = _rows(params.tables["ent_h"], t)
    et_h = _rows(params.tables["ent_t"], h)
    rr = _rows(params.tables["rel"], r)
    ri = _rows(params.tables["rel_inv"], r)
    s1 = ((eh_h * rr) * et_t).sum(axis=-1)
    s2 = ((eh_t * ri) * et_h).sum(axis=-1)
    return 0.5 * (s1 + s2)


_SCORE = {
    "transe": _score_transe,
    "transh": _score_transh,
    "transr": _score_transr,
    "distmult": _score_distmult,
    "complex": _score_complex,
    "rotate": _score_rotate,
    "simple": _score_simple,
}


# ---------------------------------------------------------------------------
# candidate scoring (one slot swept over all entities)


def score_candidates(
    params: ModelParams, queries: np.ndarray, slot: int, chunk_elems: int = 1 << 24
) -> np.ndarray:
    """Score every entity in ``slot`` of each query; returns float64 [B, n_entities].

    Row i column e is the score of query i with entity e substituted into
    the head (slot=0) or tail (slot=1) position.
    """
    queries = _check_ids(params, queries)
    if slot not in (HEAD, TAIL):
        raise ValueError(f"slot must be HEAD (0) or TAIL (1), got {slot}")
    n_e = params.n_entities
    width = max(params.tables[k].shape[-1] for k in params.tables)
    rows_per_chunk = max(1, chunk_elems // max(1, n_e * width))
    out = np.empty((len(queries), n_e), dtype=np.float64)
    fn = _CANDIDATES[params.model]
    for lo in range(0, len(queries), rows_per_chunk):
        q = queries[lo : lo + rows_per_chunk]
        out[lo : lo + len(q)] = fn(params, q[:, 0], q[:, 1], q[:, 2], slot)
    return out


def _cand_transe(params, h, r, t, slot):
    ent = params.tables["ent"].astype(np.float64)
    if slot == TAIL:
        d = (_rows(params.tables["ent"], h) + _rows(params.tables["rel"], r))[:, None, :] - ent[
            None, :, :
        ]
    else:
        d = (ent[None, :, :] + _rows(params.tables["rel"], r)[:, None, :]) - _rows(
            params.tables["ent"], t
        )[:, None, :]
    return _neg_norm(d, params.transe_p)


def _cand_transh(params, h, r, t, slot):
    ent = params.tables["ent"].astype(np.float64)
    w = _rows(params.tables["norm"], r)
    rel = _rows(params.tables["rel"], r)
    # candidate projections: ent - (ent . w_b) w_b, per query row b
    dots = np.einsum("ed,bd->be", ent, w)
    cand_p = ent[None, :, :] - dots[:, :, None] * w[:, None, :]
    if slot == TAIL:
        hp = _transh_project(_rows(params.tables["ent"], h), w)
        d = (hp + rel)[:, None, :] - cand_p
    else:
        tp = _transh_project(_rows(params.tables["ent"], t), w)
        d = (cand_p + rel[:, None, :]) - tp[:, None, :]
    return -(d * d).sum(axis=-1)


def _cand_transr(params, h, r, t, slot):
    ent = params.tables["ent"].astype(np.float64)
    m = _rows(params.tables["proj"], r)
    rel = _rows(params.tables["rel"], r)
    cand_m = np.einsum("bij,ej->bei", m, ent)
    if slot == TAIL:
        mh = np.einsum("bij,bj->bi", m, _rows(params.tables["ent"], h))
        d = (mh + rel)[:, None, :] - cand_m
    else:
        mt = np.einsum("bij,bj->bi", m, _rows(params.tables["ent"], t))
        d = (cand_m + rel[:, None, :]) - mt[:, None, :]
    return -(d * d).sum(axis=-1)


def _cand_distmult(params, h, r, t, slot):
    ent = params.tables["ent"].astype(np.float64)
    rel = _rows(params.tables["rel"], r)
    if slot == TAIL:
        return ((_rows(params.tables["ent"], h) * rel)[:, None, :] * ent[None, :, :]).sum(axis=-1)
    return (
        (ent[None, :, :] * rel[:, None, :]) * _rows(params.tables["ent"], t)[:, None, :]
    ).sum(axis=-1)


def _cand_complex(params, h, r, t, slot):
    d = params.dim
    ere, eim = _split(params.tables["ent"].astype(np.float64), d)
    rre, rim = _split(_rows(params.tables["rel"], r), d)
    if slot == TAIL:
        hre, him = _split(_rows(params.tables["ent"], h), d)
        re = (hre * rre - him * rim)[:, None, :]
        im = (hre * rim + him * rre)[:, None, :]
        return (re * ere[None, :, :] + im * eim[None, :, :]).sum(axis=-1)
    tre, tim = _split(_rows(params.tables["ent"], t), d)
    re = ere[None, :, :] * rre[:, None, :] - eim[None, :, :] * rim[:, None, :]
    im = ere[None, :, :] * rim[:, None, :] + eim[None, :, :] * rre[:, None, :]
    return (re * tre[:, None, :] + im * tim[:, None, :]).sum(axis=-1)


def _cand_rotate(params, h, r, t, slot):
    d = params.dim
    ere, eim = _split(params.tables["ent"].astype(np.float64), d)
    theta = _rows(params.tables["rel"], r)
    cos, sin = np.cos(theta), np.sin(theta)
    if slot == TAIL:
        hre, him = _split(_rows(params.tables["ent"], h), d)
        ure = (hre * cos - him * sin)[:, None, :] - ere[None, :, :]
        uim = (hre * sin + him * cos)[:, None, :] - eim[None, :, :]
    else:
        tre, tim = _split(_rows(params.tables["ent"], t), d)
        ure = (ere[None, :, :] * cos[:, None, :] - eim[None, :, :] * sin[:, None, :]) - tre[
            :, None, :
        ]
        uim = (ere[None, :, :] * sin[:, None, :] + eim[None, :, :] * cos[:, None, :]) - tim[
            :, None, :
        ]
    return -np.sqrt((ure * ure + uim * uim).sum(axis=-1))


def _cand_simple(params, h, r, t, slot):
    enth = params.tables["ent_h"].astype(np.float64)
    entt = params.tables["ent_t"].astype(np.float64)
    rr = _rows(params.tables["rel"], r)
    ri = _rows(params.tables["rel_inv"], r)
    if slot == TAIL:
        eh_h = _rows(params.tables["ent_h"], h)
        et_h = _rows(params.tables["ent_t"], h)
        s1 = ((eh_h * rr)[:, None, :] * entt[None, :, :]).sum(axis=-1)
        s2 = ((enth[None, :, :] * ri[:, None, :]) * et_h[:, None, :]).sum(axis=-1)
    else:
        et_t = _rows(params.tables["ent_t"], t)
        eh_t = _rows(params.tables["ent_h"], t)
        s1 = ((enth[None, :, :] * rr[:, None, :]) * et_t[:, None, :]).sum(axis=-1)
        s2 = ((eh_t * ri)[:, None, :] * entt[None, :, :]).sum(axis=-1)
    return 0.5 * (s1 + s2)


_CANDIDATES = {
    "transe": _cand_transe,
    "transh": _cand_transh,
    "transr": _cand_transr,
    "distmult": _cand_distmult,
    "complex": _cand_complex,
    "rotate": _cand_rotate,
    "simple": _cand_simple,
}


# ---------------------------------------------------------------------------
# gradients


class GradAccumulator:
    """Collects per-row gradient contributions and merges them per table.

    Duplicate row ids sum; rows whose accumulated gradient would come from
    no contribution at all are simply absent from the result.
    """

    def __init__(self) -> None:
        self._parts: dict[str, list[tuple[np.ndarray, np.ndarray]]] = {}

    def add(self, table: str, ids: np.ndarray, rows: np.ndarray) -> None:
        if len(ids) == 0:
            return
        self._parts.setdefault(table, []).append((np.asarray(ids, dtype=np.int64), rows))

    def finalize(self) -> SparseGrad:
        out: SparseGrad = {}
        for table, parts in self._parts.items():
            ids = np.concatenate([p[0] for p in parts])
            rows = np.concatenate([p[1] for p in parts], axis=0)
            uniq, inverse = np.unique(ids, return_inverse=True)
            buf = np.zeros((len(uniq),) + rows.shape[1:], dtype=np.float64)
            np.add.at(buf, inverse, rows)
            out[table] = (uniq, buf)
        return out


def score_grad(params: ModelParams, triples: np.ndarray, coeff: np.ndarray) -> SparseGrad:
    """Accumulate coeff[i] * d(score_i)/d(params) over the batch, touched rows only.

    Triples whose coefficient is exactly zero contribute nothing and do
    not mark rows as touched.
    """
    triples = _check_ids(params, triples)
    coeff = np.asarray(coeff, dtype=np.float64).reshape(-1)
    if len(coeff) != len(triples):
        raise ValueError("coeff length must match triples")
    keep = coeff != 0.0
    triples, coeff = triples[keep], coeff[keep]
    acc = GradAccumulator()
    if len(triples):
        _GRAD[params.model](params, triples[:, 0], triples[:, 1], triples[:, 2], coeff, acc)
    return acc.finalize()


def _grad_transe(params, h, r, t, c, acc):
    d = (_rows(params.tables["ent"], h) + _rows(params.tables["rel"], r)) - _rows(
        params.tables["ent"], t
    )
    if params.transe_p == 1:
        u = np.sign(d)
    else:
        nrm = np.sqrt((d * d).sum(axis=-1, keepdims=True))
        u = d / np.where(nrm > 0, nrm, 1.0)
    g = -c[:, None] * u
    acc.add("ent", h, g)
    acc.add("rel", r, g)
    acc.add("ent", t, -g)


def _grad_transh(params, h, r, t, c, acc):
    w = _rows(params.tables["norm"], r)
    he = _rows(params.tables["ent"], h)
    te = _rows(params.tables["ent"], t)
    hp = _transh_project(he, w)
    tp = _transh_project(te, w)
    d = (hp + _rows(params.tables["rel"], r)) - tp
    v = d - (d * w).sum(axis=-1, keepdims=True) * w
    c2 = (2.0 * c)[:, None]
    acc.add("ent", h, -c2 * v)
    acc.add("ent", t, c2 * v)
    acc.add("rel", r, -c2 * d)
    a = te - he
    dw = (d * w).sum(axis=-1, keepdims=True)
    aw = (a * w).sum(axis=-1, keepdims=True)
    acc.add("norm", r, -c2 * (dw * a + aw * d))


def _grad_transr(params, h, r, t, c, acc):
    m = _rows(params.tables["proj"], r)
    he = _rows(params.tables["ent"], h)
    te = _rows(params.tables["ent"], t)
    mh = np.einsum("nij,nj->ni", m, he)
    mt = np.einsum("nij,nj->ni", m, te)
    d = (mh + _rows(params.tables["rel"], r)) - mt
    c2 = (2.0 * c)[:, None]
    mtd = np.einsum("nij,ni->nj", m, d)  # M^T d
    acc.add("ent", h, -c2 * mtd)
    acc.add("ent", t, c2 * mtd)
    acc.add("rel", r, -c2 * d)
    # dF/dM = -2c * outer(d, h - t)
    acc.add("proj", r, -2.0 * c[:, None, None] * d[:, :, None] * (he - te)[:, None, :])


def _grad_distmult(params, h, r, t, c, acc):
    he = _rows(params.tables["ent"], h)
    re = _rows(params.tables["rel"], r)
    te = _rows(params.tables["ent"], t)
    cc = c[:, None]
    acc.add("ent", h, cc * (re * te))
    acc.add("rel", r, cc * (he * te))
    acc.add("ent", t, cc * (he * re))


def _grad_complex(params, h, r, t, c, acc):
    d = params.dim
    hre, him = _split(_rows(params.tables["ent"], h), d)
    rre, rim = _split(_rows(params.tables["rel"], r), d)
    tre, tim = _split(_rows(params.tables["ent"], t), d)
    cc = c[:, None]
    gh = np.concatenate([rre * tre + rim * tim, rre * tim - rim * tre], axis=1)
    gr = np.concatenate([hre * tre + him * tim, hre * tim - him * tre], axis=1)
    gt = np.concatenate([hre * rre - him * rim, hre * rim + him * rre], axis=1)
    acc.add("ent", h, cc * gh)
    acc.add("rel", r, cc * gr)
    acc.add("ent", t, cc * gt)


def _grad_rotate(params, h, r, t, c, acc):
    d = params.dim
    hre, him = _split(_rows(params.tables["ent"], h), d)
    tre, tim = _split(_rows(params.tables["ent"], t), d)
    theta = _rows(params.tables["rel"], r)
    cos, sin = np.cos(theta), np.sin(theta)
    hr_re = hre * cos - him * sin
    hr_im = hre * sin + him * cos
    ure = hr_re - tre
    uim = hr_im - tim
    nrm = np.sqrt((ure * ure + uim * uim).sum(axis=-1, keepdims=True))
    fac = c[:, None] / np.where(nrm > 0, nrm, 1.0)
    ghre = -(ure * cos + uim * sin) * fac
    ghim = -(-ure * sin + uim * cos) * fac
    acc.add("ent", h, np.concatenate([ghre, ghim], axis=1))
    acc.add("ent", t, np.concatenate([ure * fac, uim * fac], axis=1))
    acc.add("rel", r, (ure * hr_im - uim * hr_re) * fac)


def _grad_simple(params, h, r, t, c, acc):
    eh_h = _rows(params.tables["ent_h"], h)
    et_t = _rows(params.tables["ent_t"], t)
    eh_t = _rows(params.tables["ent_h"], t)
    et_h = _rows(params.tables["ent_t"], h)
    rr = _rows(params.tables["rel"], r)
    ri = _rows(params.tables["rel_inv"], r)
    half = (0.5 * c)[:, None]
    acc.add("ent_h", h, half * (rr * et_t))
    acc.add("rel", r, half * (eh_h * et_t))
    acc.add("ent_t", t, half * (eh_h * rr))
    acc.add("ent_h", t, half * (ri * et_h))
    acc.add("rel_inv", r, half * (eh_t * et_h))
    acc.add("ent_t", h, half * (eh_t * ri))


_GRAD = {
    "transe": _grad_transe,
    "transh": _grad_transh,
    "transr": _grad_transr,
    "distmult": _grad_distmult,
    "complex": _grad_complex,
    "rotate": _grad_rotate,
    "simple": _grad_simple,
}


def grad(
    params: ModelParams, batch: NegBatch | LabeledBatch, loss_spec: LossSpec
) -> tuple[float, SparseGrad]:
    """Batch loss and its sparse gradient over every touched table row.

    A :class:`NegBatch` pairs with margin / self_adversarial / bce (labels
    1 for positives, 0 for negatives); a :class:`LabeledBatch` requires bce.
    """
    loss_spec.validate()
    if isinstance(batch, LabeledBatch):
        if loss_spec.kind != "bce":
            raise ValueError(f"labeled batches require the bce loss, got {loss_spec.kind!r}")
        scores = score(params, batch.triples)
        loss = bce_loss(scores, batch.labels, loss_spec.label_smoothing)
        d_scores = bce_loss_grads(scores, batch.labels, loss_spec.label_smoothing)
        return loss, score_grad(params, batch.triples, d_scores)

    b, n = batch.negatives.shape[:2]
    pos_scores = score(params, batch.positives)
    neg_flat = batch.negatives.reshape(-1, 3)
    neg_scores = score(params, neg_flat).reshape(b, n)

    if loss_spec.kind == "margin":
        loss = margin_loss(pos_scores, neg_scores, loss_spec.margin)
        d_pos, d_neg = margin_loss_grads(pos_scores, neg_scores, loss_spec.margin)
    elif loss_spec.kind == "self_adversarial":
        loss = self_adversarial_loss(
            pos_scores, neg_scores, loss_spec.margin, loss_spec.adv_temperature
        )
        d_pos, d_neg = self_adversarial_loss_grads(
            pos_scores, neg_scores, loss_spec.margin, loss_spec.adv_temperature
        )
    else:  # bce
        scores = np.concatenate([pos_scores, neg_scores.reshape(-1)])
        labels = np.concatenate([np.ones(b), np.zeros(b * n)])
        loss = bce_loss(scores, labels, loss_spec.label_smoothing)
        d = bce_loss_grads(scores, labels, loss_spec.label_smoothing)
        d_pos, d_neg = d[:b], d[b:].reshape(b, n)

    acc = GradAccumulator()
    for triples, coeff in ((batch.positives, d_pos), (neg_flat, d_neg.reshape(-1))):
        keep = coeff != 0.0
        if keep.any():
            kept = triples[keep]
            _GRAD[params.model](params, kept[:, 0], kept[:, 1], kept[:, 2], coeff[keep], acc)
    return loss, acc.finalize()
