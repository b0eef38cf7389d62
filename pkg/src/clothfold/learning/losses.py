"""Training losses.

All losses accept autodiff Tensors (and plain arrays for targets) and return
scalar Tensors. Distances are Euclidean L2 throughout.
"""

from __future__ import annotations

import numpy as np

from ..nn import autodiff as ad
from ..nn.autodiff import Tensor


def _wrap(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(np.asarray(x, dtype=np.float64))


def variety_loss(candidates: Tensor, target) -> Tensor:
    """Minimum-over-K loss: distance from the target to the closest candidate.

    Only the arg-min candidate receives gradient; ties resolve to the lowest
    candidate index.
    """
    cands = _wrap(candidates)
    tgt = _wrap(target)
    diff = cands - tgt.reshape(1, -1)
    dists = (diff * diff).sum(axis=1).sqrt()
    best = int(np.argmin(dists.data))
    return dists[best]


def dual_variety_loss(candidates: Tensor, target_left, target_right) -> Tensor:
    """Average of the two single-target variety losses (dual-arm targets)."""
    return (
        variety_loss(candidates, target_left) + variety_loss(candidates, target_right)
    ) * 0.5


def kp_all_loss(
    candidates_nocs: Tensor,
    candidates_task: Tensor,
    target_nocs,
    target_task,
) -> Tensor:
    """Candidate supervision in canonical and task space (sum of the two)."""
    return variety_loss(candidates_nocs, target_nocs) + variety_loss(
        candidates_task, target_task
    )


def huber(pred, target, delta: float = 0.1) -> Tensor:
    """Classic Huber: quadratic inside delta, linear (slope delta) outside.

    Reduces by summing the last axis (vector residual) and averaging the rest.
    """
    p, t = _wrap(pred), _wrap(target)
    d = p - t
    absd = d.abs()
    quad = (d * d) * 0.5
    lin = (absd - 0.5 * delta) * delta
    elem = ad.where(absd.data <= delta, quad, lin)
    if elem.ndim > 1:
        return elem.sum(axis=-1).mean()
    return elem.mean() if elem.ndim == 1 else elem


def nocs_symmetric_huber(pred_nocs, target_nocs, target_nocs_mirrored=None, delta: float = 0.1) -> Tensor:
    """Min of the Huber loss against the target and its bilateral mirror."""
    from ..garments import mirror_nocs

    target = np.asarray(target_nocs, dtype=np.float64)
    mirrored = (
        mirror_nocs(target)
        if target_nocs_mirrored is None
        else np.asarray(target_nocs_mirrored, dtype=np.float64)
    )
    a = huber(pred_nocs, target, delta)
    b = huber(pred_nocs, mirrored, delta)
    return a if a.data <= b.data else b


def smooth_l1(pred, target, delta: float = 0.1) -> Tensor:
    """Smooth-L1 with unit-slope linear tails: 0.5 d^2 / delta inside delta,
    |d| - delta/2 outside. Averages over all elements."""
    p, t = _wrap(pred), _wrap(target)
    d = p - t
    absd = d.abs()
    quad = (d * d) * (0.5 / delta)
    lin = absd - 0.5 * delta
    elem = ad.where(absd.data < delta, quad, lin)
    return elem.mean() if elem.ndim > 0 else elem


def _log_sigmoid(t: Tensor) -> Tensor:
    # log sigma(t) = min(t, 0) - log(1 + exp(-|t|)), stable for large |t|
    m = ad.minimum(t, 0.0)
    neg_abs = t.abs() * -1.0
    return m - (neg_abs.exp() + 1.0).log()


def preference_prob(score1, score2) -> tuple[Tensor, Tensor]:
    """Bradley-Terry odds from two scores: softmax over the pair."""
    s1, s2 = _wrap(score1), _wrap(score2)
    p12 = (s1 - s2).sigmoid()
    p21 = (s2 - s1).sigmoid()
    return p12, p21


def preference_loss(scored_comparisons) -> Tensor:
    """Cross-entropy over annotated comparisons.

    ``scored_comparisons`` is an iterable of (score1, score2, mu) where mu is
    one of (1, 0), (0, 1), (0.5, 0.5). The sum is normalized by the number of
    comparisons.
    """
    terms = []
    count = 0
    for s1, s2, mu in scored_comparisons:
        s1, s2 = _wrap(s1), _wrap(s2)
        log_p12 = _log_sigmoid(s1 - s2)
        log_p21 = _log_sigmoid(s2 - s1)
        terms.append(log_p12 * (-float(mu[0])) + log_p21 * (-float(mu[1])))
        count += 1
    if count == 0:
        return Tensor(0.0)
    total = terms[0]
    for t in terms[1:]:
        total = total + t
    return total * (1.0 / count)


def bce_loss(prob: Tensor, label: float, eps: float = 1e-12) -> Tensor:
    """Binary cross-entropy on an already-squashed probability."""
    p = _wrap(prob)
    y = float(label)
    return (p + eps).log() * (-y) + ((1.0 - p) + eps).log() * (y - 1.0)
