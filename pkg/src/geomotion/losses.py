"""Training objective: focal loss plus dice loss, summed over frames with
configurable weights."""

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .errors import ConfigError, ShapeContractError

PROB_CLAMP = 1e-7  # predictions are clamped to [delta, 1 - delta] before log


@dataclass
class LossConfig:
    lambda_focal: float = 0.5
    lambda_dice: float = 0.5
    alpha: float = 0.25  # focal class balance for the foreground
    gamma: float = 2.0  # focal focusing exponent
    eps: float = 1.0  # dice smoothing, keeps empty masks well defined

    def validate(self):
        if self.lambda_focal < 0 or self.lambda_dice < 0:
            raise ConfigError("loss weights must be non-negative")
        if self.gamma < 0:
            raise ConfigError("gamma must be non-negative")
        if not 0 <= self.alpha <= 1:
            raise ConfigError("alpha must lie in [0, 1]")
        if self.eps <= 0:
            raise ConfigError("dice smoothing must be positive")


def _check_shapes(pred, gt):
    if pred.shape != gt.shape:
        raise ShapeContractError(
            f"prediction shape {pred.shape} does not match mask {gt.shape}"
        )


def focal_loss(mask, gt, alpha=0.25, gamma=2.0):
    """Pixel mean of -alpha_t (1 - p_t)^gamma log p_t.

    p_t is the predicted probability of the true class; alpha_t weighs
    foreground pixels by alpha and background by 1 - alpha. The mean (not
    sum) keeps the loss balance resolution independent.
    """
    mask = ad.as_tensor(mask)
    gt = np.asarray(gt, dtype=mask.data.dtype)
    _check_shapes(mask.data, gt)
    p = ad.clip(mask, PROB_CLAMP, 1.0 - PROB_CLAMP)
    pt = ad.add(ad.mul(p, gt), ad.mul(ad.sub(1.0, p), 1.0 - gt))
    alpha_t = alpha * gt + (1.0 - alpha) * (1.0 - gt)
    modulator = ad.power(ad.sub(1.0, pt), gamma) if gamma != 0 else 1.0
    term = ad.mul(ad.mul(modulator, ad.log(pt)), -alpha_t)
    return ad.tmean(term)


def dice_loss(mask, gt, eps=1.0):
    """1 - (2 |M * M_gt| + eps) / (|M| + |M_gt| + eps), soft overlap loss."""
    mask = ad.as_tensor(mask)
    gt = np.asarray(gt, dtype=mask.data.dtype)
    _check_shapes(mask.data, gt)
    inter = ad.tsum(ad.mul(mask, gt))
    denom = ad.add(ad.tsum(mask), float(gt.sum()))
    return ad.sub(1.0, ad.div(ad.add(ad.mul(inter, 2.0), eps), ad.add(denom, eps)))


def total_loss(masks, gts, cfg: LossConfig | None = None):
    """Sum over frames of lambda1 * focal + lambda2 * dice.

    masks: Tensor [N, H, W] of probabilities; gts: array [N, H, W] binary.
    """
    cfg = cfg or LossConfig()
    cfg.validate()
    masks = ad.as_tensor(masks)
    gts = np.asarray(gts)
    if masks.data.shape[0] != gts.shape[0]:
        raise ShapeContractError(
            f"{masks.data.shape[0]} predictions for {gts.shape[0]} ground-truth masks"
        )
    total = None
    for t in range(masks.data.shape[0]):
        frame = ad.index(masks, t)
        term = ad.add(
            ad.mul(focal_loss(frame, gts[t], cfg.alpha, cfg.gamma), cfg.lambda_focal),
            ad.mul(dice_loss(frame, gts[t], cfg.eps), cfg.lambda_dice),
        )
        total = term if total is None else ad.add(total, term)
    return total
