"""Point-cloud policy network.

One forward pass produces: a stage score, two pick-and-place point sets for
the fold steps, per-point canonical coordinates, K fling keypoint candidates
voted in canonical space and localized back to task space, and factorized
scores for every candidate pair.

The backbone is a per-point MLP (3 -> 64 -> 128) followed by a single 4-head
self-attention block, which keeps the whole network hand-auditable: every
gradient is checked against central finite differences in the test suite.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..nn import autodiff as ad
from ..nn.autodiff import Tensor

FEATURE_DIM = 128
HIDDEN_DIM = 64
ATTN_HEADS = 4
PAIR_EMBED_DIM = 64
FOLD_POINTS = 8  # 2 picks + 2 places per fold step, two steps


class NoCorrespondenceError(ValueError):
    """A canonical-space candidate has no nearby observed point."""


@dataclass
class PolicyConfig:
    num_points: int = 1024
    num_candidates: int = 16
    alpha: float = 50.0  # canonical-to-task correspondence sharpness
    vote_offset_scale: float = 0.2
    canonical_voting: bool = True  # False: vote directly in task space
    category: str = ""
    # Fixed observation normalization (workspace units).
    norm_center: tuple[float, float, float] = (0.0, 0.0, 0.3)
    norm_scale: float = 0.9

    def normalize(self, points: np.ndarray) -> np.ndarray:
        return (points - np.asarray(self.norm_center)) / self.norm_scale

    def denormalize(self, points: np.ndarray) -> np.ndarray:
        return points * self.norm_scale + np.asarray(self.norm_center)


def _layer_shapes(config: PolicyConfig) -> dict[str, tuple[int, ...]]:
    k = config.num_candidates
    f, h = FEATURE_DIM, HIDDEN_DIM
    pair_in = 2 * 2 * (f + 3)
    shapes: dict[str, tuple[int, ...]] = {
        "enc.l1.W": (3, h),
        "enc.l1.b": (h,),
        "enc.l2.W": (h, f),
        "enc.l2.b": (f,),
        "attn.q.W": (f, f),
        "attn.q.b": (f,),
        "attn.k.W": (f, f),
        "attn.k.b": (f,),
        "attn.v.W": (f, f),
        "attn.v.b": (f,),
        "attn.o.W": (f, f),
        "attn.o.b": (f,),
        "pool.W": (f, 1),
        "pool.b": (1,),
        "stage.l1.W": (f, h),
        "stage.l1.b": (h,),
        "stage.l2.W": (h, 1),
        "stage.l2.b": (1,),
        "nocs.l1.W": (f, h),
        "nocs.l1.b": (h,),
        "nocs.l2.W": (h, 3),
        "nocs.l2.b": (3,),
        "fold.w.W": (f, FOLD_POINTS),
        "fold.w.b": (FOLD_POINTS,),
        "fold.u.W": (f, FOLD_POINTS * 3),
        "fold.u.b": (FOLD_POINTS * 3,),
        "vote.w.W": (f, k),
        "vote.w.b": (k,),
        "vote.u.W": (f, k * 3),
        "vote.u.b": (k * 3,),
        "pair.l1.W": (pair_in, f),
        "pair.l1.b": (f,),
        "pair.l2.W": (f, PAIR_EMBED_DIM),
        "pair.l2.b": (PAIR_EMBED_DIM,),
    }
    for head in ("rc", "ra", "beta"):
        shapes[f"score.{head}.l1.W"] = (PAIR_EMBED_DIM, 32)
        shapes[f"score.{head}.l1.b"] = (32,)
        shapes[f"score.{head}.l2.W"] = (32, 1)
        shapes[f"score.{head}.l2.b"] = (1,)
    return shapes


def init_params(config: PolicyConfig, seed: int = 0) -> dict[str, Tensor]:
    rng = np.random.default_rng(seed)
    params: dict[str, Tensor] = {}
    for name, shape in _layer_shapes(config).items():
        if name.endswith(".b"):
            data = np.zeros(shape)
        else:
            fan_in = shape[0]
            data = rng.normal(0.0, 1.0 / np.sqrt(fan_in), size=shape)
        params[name] = Tensor(data, requires_grad=True)
    return params


def param_count(params: dict[str, Tensor]) -> int:
    return sum(p.data.size for p in params.values())


def _linear(x: Tensor, params: dict[str, Tensor], name: str) -> Tensor:
    return x @ params[f"{name}.W"] + params[f"{name}.b"]


def encode(points: np.ndarray, params: dict[str, Tensor], config: PolicyConfig):
    """Per-point features F_d (N, 128) and attention-pooled global F_g (128,)."""
    x = Tensor(config.normalize(np.asarray(points, dtype=np.float64)))
    n = x.shape[0]
    h1 = _linear(x, params, "enc.l1").tanh()
    h2 = _linear(h1, params, "enc.l2").tanh()

    dh = FEATURE_DIM // ATTN_HEADS
    q = _linear(h2, params, "attn.q").reshape(n, ATTN_HEADS, dh).swapaxes(0, 1)
    k = _linear(h2, params, "attn.k").reshape(n, ATTN_HEADS, dh).swapaxes(0, 1)
    v = _linear(h2, params, "attn.v").reshape(n, ATTN_HEADS, dh).swapaxes(0, 1)
    scores = (q @ k.T) * (1.0 / np.sqrt(dh))
    attn = ad.softmax(scores, axis=-1)
    mixed = (attn @ v).swapaxes(0, 1).reshape(n, FEATURE_DIM)
    f_d = (h2 + _linear(mixed, params, "attn.o")).tanh()

    pool_logits = _linear(f_d, params, "pool")
    weights = ad.softmax(pool_logits, axis=0)
    f_g = (weights * f_d).sum(axis=0)
    return f_g, f_d


def classify_stage(f_g: Tensor, params: dict[str, Tensor]) -> Tensor:
    h = _linear(f_g, params, "stage.l1").tanh()
    return _linear(h, params, "stage.l2").sigmoid().reshape(())


def predict_nocs(f_d: Tensor, params: dict[str, Tensor]) -> Tensor:
    """Per-point canonical coordinates, bounded inside [0, 1]^3."""
    h = _linear(f_d, params, "nocs.l1").tanh()
    return _linear(h, params, "nocs.l2").sigmoid()


def vote_keypoints(
    f_d: Tensor,
    base_coords: Tensor | np.ndarray,
    params: dict[str, Tensor],
    head: str = "vote",
    offset_scale: float = 0.2,
) -> tuple[Tensor, Tensor]:
    """Attention-based offset voting.

    Each of the head's J outputs is a convex combination over the N input
    points of (base_k + u_{k,j}), with the weights a per-output softmax over
    points and the offsets bounded by tanh scaling.

    Returns (votes (J, 3), weights (N, J)).
    """
    base = base_coords if isinstance(base_coords, Tensor) else Tensor(base_coords)
    n = f_d.shape[0]
    logits = _linear(f_d, params, f"{head}.w")
    j = logits.shape[1]
    weights = ad.softmax(logits, axis=0)  # (N, J), columns sum to 1
    offsets = (_linear(f_d, params, f"{head}.u").tanh() * offset_scale).reshape(n, j, 3)
    shifted = base.reshape(n, 1, 3) + offsets  # (N, J, 3)
    votes = (weights.reshape(n, j, 1) * shifted).sum(axis=0)  # (J, 3)
    return votes, weights


def predict_fold_points(
    f_d: Tensor, points: np.ndarray, params: dict[str, Tensor], config: PolicyConfig
) -> tuple[Tensor, Tensor]:
    """Eight voted task-space points: fold1 (p1, p2, q1, q2) then fold2."""
    votes, _ = vote_keypoints(
        f_d,
        np.asarray(points, dtype=np.float64),
        params,
        head="fold",
        offset_scale=config.vote_offset_scale,
    )
    return votes[np.arange(0, 4)], votes[np.arange(4, 8)]


def nocs_to_task(
    p_nocs: Tensor,
    nocs: Tensor,
    points: np.ndarray | Tensor,
    alpha: float = 50.0,
    min_weight: float = 1e-12,
) -> tuple[Tensor, np.ndarray]:
    """Localize canonical-space candidates in task space.

    Correspondence weights are exp(-alpha * ||p_nocs - c_k||); candidates whose
    total weight falls below ``min_weight`` are flagged invalid in the returned
    mask (the caller discards them).
    """
    pts = points if isinstance(points, Tensor) else Tensor(points)
    single = p_nocs.ndim == 1
    p = p_nocs.reshape(1, 3) if single else p_nocs  # (J, 3)
    j = p.shape[0]
    n = nocs.shape[0]
    diff = nocs.reshape(n, 1, 3) - p.reshape(1, j, 3)
    dist = (diff * diff).sum(axis=-1).sqrt()  # (N, J)
    beta = (dist * (-alpha)).exp()
    total = beta.sum(axis=0)  # (J,)
    valid = total.data >= min_weight
    safe_total = ad.where(valid, total, np.ones_like(total.data))
    task = (beta.reshape(n, j, 1) * pts.reshape(n, 1, 3)).sum(axis=0) / safe_total.reshape(
        j, 1
    )
    if single:
        if not valid[0]:
            raise NoCorrespondenceError("candidate has no canonical correspondence")
        return task.reshape(3), valid
    return task, valid


def pair_indices(k: int) -> np.ndarray:
    """All unordered candidate pairs in lexicographic order, shape (P, 2)."""
    return np.array([(j, i) for j in range(k) for i in range(j + 1, k)], dtype=np.int64)


def pair_embedding(
    f_cand: Tensor,
    candidates_norm: Tensor,
    pairs: np.ndarray,
    params: dict[str, Tensor],
) -> Tensor:
    """Order-invariant pair embeddings.

    The per-ordering concatenation [F_j, p_j, F_k, p_k] is pooled elementwise
    (max and min) across the two orderings before the MLP, so swapping j and k
    cannot change the embedding.
    """
    jj, kk = pairs[:, 0], pairs[:, 1]
    a = ad.concatenate([f_cand[jj], candidates_norm[jj]], axis=-1)
    b = ad.concatenate([f_cand[kk], candidates_norm[kk]], axis=-1)
    t1 = ad.concatenate([a, b], axis=-1)
    t2 = ad.concatenate([b, a], axis=-1)
    pooled = ad.concatenate([ad.maximum(t1, t2), ad.minimum(t1, t2)], axis=-1)
    h = _linear(pooled, params, "pair.l1").tanh()
    return _linear(h, params, "pair.l2").tanh()


def score_pair(embedding: Tensor, params: dict[str, Tensor]):
    """Factorized pair scores (R_C, R_A, beta, R_CA)."""

    def head(name: str) -> Tensor:
        h = _linear(embedding, params, f"score.{name}.l1").tanh()
        out = _linear(h, params, f"score.{name}.l2").sigmoid()
        return out.reshape(out.shape[:-1])

    r_c = head("rc")
    r_a = head("ra")
    beta = head("beta")
    r_ca = (1.0 - beta) * r_c + beta * r_a
    return r_c, r_a, beta, r_ca


def select_fling_pair(
    candidates: np.ndarray,
    pair_scores: np.ndarray,
    pairs: np.ndarray,
    valid: np.ndarray | None = None,
) -> tuple[int, int, np.ndarray, np.ndarray]:
    """Argmax over pair scores; ties resolve to the lowest (j, k) index.

    Returns (j, k, p1, p2). ``valid`` masks candidates that failed canonical
    localization.
    """
    scores = np.asarray(pair_scores, dtype=np.float64).copy()
    if valid is not None:
        bad = ~(valid[pairs[:, 0]] & valid[pairs[:, 1]])
        scores[bad] = -np.inf
    if not np.isfinite(scores).any():
        raise NoCorrespondenceError("no valid candidate pair to select")
    best = int(np.argmax(scores))
    j, k = int(pairs[best, 0]), int(pairs[best, 1])
    return j, k, candidates[j].copy(), candidates[k].copy()


@dataclass
class PolicyOutput:
    """Full forward-pass result. Tensors keep the autodiff graph alive for
    training; numpy accessors serve the controller."""

    stage_score: Tensor
    fold1: Tensor  # (4, 3) p1, p2, q1, q2
    fold2: Tensor
    nocs: Tensor  # (N, 3)
    candidates_nocs: Tensor | None  # (K, 3) canonical-space votes
    candidates_task: Tensor  # (K, 3)
    candidate_valid: np.ndarray  # (K,)
    vote_weights: Tensor  # (N, K)
    pair_embeddings: Tensor  # (P, 64)
    pairs: np.ndarray  # (P, 2)
    r_c: Tensor
    r_a: Tensor
    beta: Tensor
    r_ca: Tensor
    f_g: Tensor
    f_d: Tensor
    workspace_clip: tuple[float, float] = (-0.9, 0.9)

    @property
    def stage(self) -> float:
        return float(self.stage_score.data)

    def fold_points(self, step: int) -> np.ndarray:
        pts = (self.fold1 if step == 1 else self.fold2).data.copy()
        lo, hi = self.workspace_clip
        pts[:, :2] = np.clip(pts[:, :2], lo, hi)
        pts[:, 2] = np.clip(pts[:, 2], 0.0, None)
        return pts

    def select_pair(self) -> tuple[int, int, np.ndarray, np.ndarray]:
        return select_fling_pair(
            self.candidates_task.data, self.r_ca.data, self.pairs, self.candidate_valid
        )


def forward(
    points: np.ndarray, params: dict[str, Tensor], config: PolicyConfig
) -> PolicyOutput:
    points = np.asarray(points, dtype=np.float64)
    f_g, f_d = encode(points, params, config)
    stage = classify_stage(f_g, params)
    fold1, fold2 = predict_fold_points(f_d, points, params, config)
    nocs = predict_nocs(f_d, params)

    if config.canonical_voting:
        cand_nocs, weights = vote_keypoints(
            f_d, nocs, params, head="vote", offset_scale=config.vote_offset_scale
        )
        cand_task, valid = nocs_to_task(cand_nocs, nocs, points, alpha=config.alpha)
    else:
        cand_task, weights = vote_keypoints(
            f_d,
            points,
            params,
            head="vote",
            offset_scale=config.vote_offset_scale,
        )
        cand_nocs = None
        valid = np.ones(config.num_candidates, dtype=bool)

    # Candidate features: the same vote weights pooled over dense features.
    f_cand = weights.T @ f_d  # (K, 128)
    cand_norm = (cand_task - Tensor(np.asarray(config.norm_center))) * (
        1.0 / config.norm_scale
    )
    pairs = pair_indices(config.num_candidates)
    emb = pair_embedding(f_cand, cand_norm, pairs, params)
    r_c, r_a, beta, r_ca = score_pair(emb, params)

    return PolicyOutput(
        stage_score=stage,
        fold1=fold1,
        fold2=fold2,
        nocs=nocs,
        candidates_nocs=cand_nocs,
        candidates_task=cand_task,
        candidate_valid=valid,
        vote_weights=weights,
        pair_embeddings=emb,
        pairs=pairs,
        r_c=r_c,
        r_a=r_a,
        beta=beta,
        r_ca=r_ca,
        f_g=f_g,
        f_d=f_d,
    )
