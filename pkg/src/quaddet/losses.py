"""Training objective with analytic gradients.

Scalar entry points return :class:`LossTerm`; the ``*_array`` variants are the
vectorized kernels used by the trainer and return ``(values, grads)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidProbability

PROB_EPS = 1e-7
FOCAL_ALPHA = 0.25
FOCAL_GAMMA = 2.0
SMOOTH_L1_BETA = 1.0 / 9.0


@dataclass
class LossTerm:
    value: float
    gradient: object
    parts: dict = field(default_factory=dict)


@dataclass(frozen=True)
class LossWeights:
    lambda_cls: float = 10.0
    lambda_reg: float = 1.0
    lambda_ctr: float = 1.0
    lambda_center: float = 1.0
    normalized: bool = True

    def resolve(self, terms) -> dict:
        """Weights of the active terms, divided by their sum when normalized."""
        raw = {t: getattr(self, f"lambda_{t}") for t in terms}
        if not self.normalized:
            return raw
        total = sum(raw.values())
        return {t: w / total for t, w in raw.items()}


def _check_prob(p):
    p = np.asarray(p, dtype=np.float64)
    if np.any(~np.isfinite(p)) or np.any(p < 0.0) or np.any(p > 1.0):
        raise InvalidProbability(f"probability outside [0, 1]: {p}")
    return np.clip(p, PROB_EPS, 1.0 - PROB_EPS)


# -- focal -------------------------------------------------------------------

def focal_loss_array(p, positive, alpha=FOCAL_ALPHA, gamma=FOCAL_GAMMA):
    """Element-wise focal loss and its derivative w.r.t. ``p`` (already clamped)."""
    p = np.asarray(p, dtype=np.float64)
    positive = np.asarray(positive, dtype=bool)
    q = 1.0 - p
    logp, logq = np.log(p), np.log(q)
    pos_val = -alpha * q ** gamma * logp
    pos_grad = alpha * (gamma * q ** (gamma - 1.0) * logp - q ** gamma / p)
    neg_val = -(1.0 - alpha) * p ** gamma * logq
    neg_grad = -(1.0 - alpha) * (gamma * p ** (gamma - 1.0) * logq - p ** gamma / q)
    return np.where(positive, pos_val, neg_val), np.where(positive, pos_grad, neg_grad)


def focal_loss(prob: float, is_positive: bool, alpha=FOCAL_ALPHA, gamma=FOCAL_GAMMA) -> LossTerm:
    p = _check_prob(prob)
    v, g = focal_loss_array(p, is_positive, alpha, gamma)
    return LossTerm(float(v), np.array([float(g)]))


# -- smooth L1 ------------------------------------------------------------------

def smooth_l1_array(d, beta=SMOOTH_L1_BETA):
    d = np.asarray(d, dtype=np.float64)
    ad = np.abs(d)
    val = np.where(ad < beta, 0.5 * d * d / beta, ad - 0.5 * beta)
    return val, np.clip(d / beta, -1.0, 1.0)


def smooth_l1(diff: float, beta=SMOOTH_L1_BETA) -> LossTerm:
    v, g = smooth_l1_array(diff, beta)
    return LossTerm(float(v), np.array([float(g)]))


# -- eight-point modulation ----------------------------------------------------

def cyclic_shifts(target):
    """The 4 cyclic vertex reorderings of (..., 8) targets, shape (4, ..., 8)."""
    target = np.asarray(target, dtype=np.float64)
    return np.stack([np.roll(target, -2 * k, axis=-1) for k in range(4)])


def eight_point_loss_array(pred, target, beta=SMOOTH_L1_BETA):
    """Per-row min over cyclic target shifts; returns (values, grad wrt pred, chosen shift)."""
    pred = np.asarray(pred, dtype=np.float64)
    shifted = cyclic_shifts(target)
    vals, grads = smooth_l1_array(pred[None] - shifted, beta)
    sums = vals[..., 0].copy()
    for j in range(1, 8):         # fixed left-to-right order, independent of numpy's pairwise sum
        sums += vals[..., j]
    k = np.argmin(sums, axis=0)
    idx = np.expand_dims(k, 0)
    best = np.take_along_axis(sums, idx, axis=0)[0]
    grad = np.take_along_axis(grads, idx[..., None], axis=0)[0]
    return best, grad, k


def eight_point_loss(pred, target, beta=SMOOTH_L1_BETA) -> LossTerm:
    v, g, k = eight_point_loss_array(np.asarray(pred)[None], np.asarray(target)[None], beta)
    return LossTerm(float(v[0]), g[0], {"shift": int(k[0])})


# -- binary cross-entropy ----------------------------------------------------

def bce_array(p, t):
    p = np.asarray(p, dtype=np.float64)
    t = np.asarray(t, dtype=np.float64)
    val = -(t * np.log(p) + (1.0 - t) * np.log(1.0 - p))
    return val, -t / p + (1.0 - t) / (1.0 - p)


def bce_loss(pred: float, target: float) -> LossTerm:
    p = _check_prob(pred)
    if not 0.0 <= target <= 1.0:
        raise InvalidProbability(f"target outside [0, 1]: {target}")
    v, g = bce_array(p, target)
    return LossTerm(float(v), np.array([float(g)]))


# -- full objective ----------------------------------------------------------

def total_loss(cls_prob, cls_target, reg_pred, reg_target,
               ctr_pred=None, ctr_target=None,
               center_pred=None, center_target=None,
               weights: LossWeights = LossWeights(), strategy=None,
               beta=SMOOTH_L1_BETA, alpha=FOCAL_ALPHA, gamma=FOCAL_GAMMA) -> LossTerm:
    """Weighted detection objective over a batch of N locations.

    cls_prob (N, C) probabilities; cls_target (N,) class id or -1; reg_* (N, 8)
    stride-normalized corners; ctr_* (N,) center-ness; center_* (N, 2).
    Classification is summed over all locations, every other term over
    positives, and each is divided by max(#positives, 1).  The center term is
    active only for the center-to-corner strategy; the center-ness term only
    when ``ctr_pred`` is given.  Gradients are w.r.t. the prediction arrays.
    """
    from .strategies import StrategyKind

    cls_prob = np.asarray(cls_prob, dtype=np.float64)
    cls_target = np.asarray(cls_target)
    n, n_cls = cls_prob.shape
    pos = cls_target >= 0
    npos = int(pos.sum())
    norm = float(max(npos, 1))

    terms = ["cls"]
    if npos:
        terms.append("reg")
        if ctr_pred is not None:
            terms.append("ctr")
        if strategy == StrategyKind.CENTER_TO_CORNER and center_pred is not None:
            terms.append("center")
    lam = weights.resolve(_all_terms(ctr_pred is not None, strategy == StrategyKind.CENTER_TO_CORNER))

    onehot = np.zeros((n, n_cls), dtype=bool)
    onehot[np.nonzero(pos)[0], cls_target[pos].astype(int)] = True
    p = np.clip(cls_prob, PROB_EPS, 1.0 - PROB_EPS)
    fv, fg = focal_loss_array(p, onehot, alpha, gamma)
    live = (cls_prob > PROB_EPS) & (cls_prob < 1.0 - PROB_EPS)
    parts = {"cls": fv.sum() / norm}
    grads = {"cls_prob": lam["cls"] * fg * live / norm}

    reg_grad = np.zeros_like(np.asarray(reg_pred, dtype=np.float64))
    if "reg" in terms:
        rv, rg, _ = eight_point_loss_array(np.asarray(reg_pred)[pos], np.asarray(reg_target)[pos], beta)
        parts["reg"] = rv.sum() / norm
        reg_grad[pos] = lam["reg"] * rg / norm
    grads["reg_pred"] = reg_grad

    if ctr_pred is not None:
        cg = np.zeros(n)
        if "ctr" in terms:
            cp = np.asarray(ctr_pred, dtype=np.float64)[pos]
            cpc = np.clip(cp, PROB_EPS, 1.0 - PROB_EPS)
            bv, bg = bce_array(cpc, np.asarray(ctr_target)[pos])
            parts["ctr"] = bv.sum() / norm
            cg[pos] = lam["ctr"] * bg * ((cp > PROB_EPS) & (cp < 1.0 - PROB_EPS)) / norm
        grads["ctr_pred"] = cg

    if center_pred is not None:
        eg = np.zeros((n, 2))
        if "center" in terms:
            sv, sg = smooth_l1_array(np.asarray(center_pred)[pos] - np.asarray(center_target)[pos], beta)
            parts["center"] = sv.sum() / norm
            eg[pos] = lam["center"] * sg / norm
        grads["center_pred"] = eg

    value = float(sum(lam[t] * parts[t] for t in parts))
    return LossTerm(value, grads, {t: float(v) for t, v in parts.items()})


def _all_terms(with_ctr: bool, with_center: bool):
    terms = ["cls", "reg"]
    if with_ctr:
        terms.append("ctr")
    if with_center:
        terms.append("center")
    return terms


def sigmoid(z):
    z = np.asarray(z, dtype=np.float64)
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def prior_logit(prior: float = 0.01) -> float:
    return -math.log((1.0 - prior) / prior)
