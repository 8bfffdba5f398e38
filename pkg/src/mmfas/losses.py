"""Training objective: cross-entropy classification loss plus weighted SR reconstruction loss."""

from __future__ import annotations

from dataclasses import dataclass

import torch

DEFAULT_ALPHA = 0.001


@dataclass
class LossBreakdown:
    classification: torch.Tensor
    sr: torch.Tensor
    total: torch.Tensor
    alpha: float

    def item(self) -> dict[str, float]:
        return {
            "loss_c": float(self.classification.detach()),
            "loss_s": float(self.sr.detach()),
            "loss": float(self.total.detach()),
        }


def cross_entropy(logits: torch.Tensor, labels: torch.Tensor) -> torch.Tensor:
    """Mean negative log-softmax of the true class, stabilized with log-sum-exp."""
    labels = torch.as_tensor(labels, device=logits.device)
    if logits.ndim != 2 or logits.shape[0] != labels.shape[0]:
        raise ValueError(f"logits {tuple(logits.shape)} do not match labels {tuple(labels.shape)}")
    if labels.numel() and (labels.min() < 0 or labels.max() >= logits.shape[1]):
        raise ValueError("labels must index a logit column (0 = spoof, 1 = live)")
    log_norm = torch.logsumexp(logits, dim=1)
    picked = logits.gather(1, labels.long().view(-1, 1)).squeeze(1)
    return (log_norm - picked).mean()


def sr_loss(preds, gts, masks=None) -> torch.Tensor:
    """Mean squared reconstruction error, averaged per modality and then across modalities.

    ``preds``/``gts`` are sequences of ``(B, C, H, W)`` tensors, one per
    modality. ``masks`` optionally holds a ``(B,)`` 0/1 tensor per modality;
    masked-out samples (erased modalities) contribute nothing. A modality with
    no unmasked samples is left out of the average.
    """
    if isinstance(preds, torch.Tensor):
        preds, gts = [preds], [gts]
        masks = None if masks is None else [masks]
    if len(preds) != len(gts):
        raise ValueError("preds and gts must list the same modalities")
    terms = []
    for i, (pred, gt) in enumerate(zip(preds, gts)):
        if pred.shape != gt.shape:
            raise ValueError(f"modality {i}: pred {tuple(pred.shape)} vs gt {tuple(gt.shape)}")
        sq = (pred - gt) ** 2
        if masks is None:
            terms.append(sq.mean())
            continue
        weight = torch.as_tensor(masks[i], dtype=pred.dtype, device=pred.device).view(-1, 1, 1, 1)
        count = weight.sum() * sq[0].numel()
        if count > 0:
            terms.append((sq * weight).sum() / count)
    if not terms:
        return preds[0].new_zeros(())
    return torch.stack(terms).mean()


def total_loss(lc, ls, alpha: float = DEFAULT_ALPHA) -> LossBreakdown:
    lc = torch.as_tensor(lc)
    ls = torch.as_tensor(ls)
    return LossBreakdown(lc, ls, lc + alpha * ls, alpha)
