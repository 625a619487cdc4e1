"""Contrastive objective with hard and in-batch negatives."""

from __future__ import annotations

import numpy as np

from .. import autodiff as ad
from ..autodiff import Tensor


def contrastive_loss(anchor, positive, negatives) -> Tensor:
    """``-log softmax`` of the positive's inner product among all candidates.

    ``negatives`` is a (possibly empty) list of vectors. The result is a
    scalar :class:`Tensor` so gradients can flow when inputs require them.
    """
    anchor, positive = ad._lift(anchor), ad._lift(positive)
    pos = (anchor * positive).sum()
    if len(negatives) == 0:
        return pos - pos
    cands = ad.concat([positive.reshape(1, -1)] + [ad._lift(n).reshape(1, -1) for n in negatives],
                      axis=0)
    logits = (cands @ anchor.reshape(-1, 1)).reshape(-1)
    return ad.logsumexp(logits, axis=0) - pos


def batch_contrastive_loss(anchors: Tensor, positives: Tensor, hard: Tensor | None,
                           hard_owner: np.ndarray, in_batch_mask: np.ndarray) -> Tensor:
    """Mean contrastive loss over a batch.

    Row ``i`` scores anchor ``i`` against every positive in the batch (its
    own positive on the diagonal) and every hard negative. ``in_batch_mask``
    ``(n, n)`` marks which off-diagonal positives count as negatives;
    ``hard_owner[k]`` is the anchor that owns hard negative ``k``.
    """
    n = anchors.shape[0]
    sim = anchors @ positives.transpose(1, 0)  # (n, n)
    visible = in_batch_mask.copy()
    np.fill_diagonal(visible, True)
    parts, masks = [sim], [visible]
    if hard is not None and hard.shape[0]:
        parts.append(anchors @ hard.transpose(1, 0))  # (n, m)
        masks.append(hard_owner[None, :] == np.arange(n)[:, None])
    logits = ad.concat(parts, axis=1) if len(parts) > 1 else sim
    mask_add = np.where(np.concatenate(masks, axis=1), 0.0, ad.MASK_VALUE)
    pos = (anchors * positives).sum(axis=1)
    per_anchor = ad.logsumexp(logits, axis=1, mask_add=mask_add) - pos
    return ad.mean(per_anchor)
