"""Reference scalar kernels for every training objective, with default weights.

These are pure functions of their inputs: no gradients, no schedules.  Mean
reductions are over points for mask-style losses and over matched queries for
motion and structure losses, keeping magnitudes independent of M and N_q.
Probabilities are clamped to [1e-7, 1 - 1e-7] before logs; vector norms below
1e-12 are errors, never clamped.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .model import JOINT_TYPE_ORDER, JointLimits, JointSpec, JointType

PROB_CLAMP = 1e-7
DICE_EPS = 1e-6
NORM_EPS = 1e-12


@dataclass(frozen=True)
class LossWeights:
    """Objective weights; defaults are the published training configuration."""

    triplet: float = 0.2
    mask: float = 1.0
    score: float = 1.0
    motion: float = 1.0
    focal: float = 1.0
    dice: float = 1.0
    gamma: float = 2.0
    beta: float = 2.0
    type: float = 1.0
    dir: float = 1.0
    origin: float = 1.0
    limit: float = 1.0

    def __post_init__(self):
        for name, value in self.__dict__.items():
            if value < 0:
                raise ValueError(f"loss weight {name} must be >= 0, got {value}")


DEFAULT_WEIGHTS = LossWeights()


def _clamp_prob(p) -> np.ndarray:
    return np.clip(np.asarray(p, dtype=np.float64), PROB_CLAMP, 1.0 - PROB_CLAMP)


def _cosine(a: np.ndarray, b: np.ndarray) -> float:
    na = float(np.linalg.norm(a))
    nb = float(np.linalg.norm(b))
    if na < NORM_EPS or nb < NORM_EPS:
        raise ValueError("zero-norm embedding in cosine similarity")
    return float(np.dot(a, b)) / (na * nb)


def triplet_loss(h_a, h_b, h_c, tau: float) -> float:
    """Contrastive triplet loss on exp(cos/tau) similarities.

    (h_a, h_b) are embeddings of the same part, h_c of a different one.
    """
    tau = float(tau)
    if tau <= 0:
        raise ValueError(f"tau must be positive, got {tau}")
    a = np.asarray(h_a, dtype=np.float64)
    b = np.asarray(h_b, dtype=np.float64)
    c = np.asarray(h_c, dtype=np.float64)
    x_ab = _cosine(a, b) / tau
    x_ac = _cosine(a, c) / tau
    x_bc = _cosine(b, c) / tau
    # log(s_ab / (s_ab + s_xy)) = x_ab - logaddexp(x_ab, x_xy)
    term_ac = x_ab - np.logaddexp(x_ab, x_ac)
    term_bc = x_ab - np.logaddexp(x_ab, x_bc)
    return float(-0.5 * (term_ac + term_bc))


def focal_loss(pred, gt, gamma: float = 2.0) -> float:
    """Mean focal loss -(1 - p_t)^gamma * log(p_t) over mask points."""
    pred = _clamp_prob(pred)
    gt = np.asarray(gt, dtype=np.float64)
    if pred.shape != gt.shape:
        raise ValueError(f"mask length mismatch: {pred.shape} vs {gt.shape}")
    p_t = np.where(gt > 0.5, pred, 1.0 - pred)
    return float(np.mean(-((1.0 - p_t) ** float(gamma)) * np.log(p_t)))


def dice_loss(pred, gt) -> float:
    """1 - 2*sum(p*g) / (sum(p) + sum(g) + eps)."""
    pred = np.asarray(pred, dtype=np.float64)
    gt = np.asarray(gt, dtype=np.float64)
    if pred.shape != gt.shape:
        raise ValueError(f"mask length mismatch: {pred.shape} vs {gt.shape}")
    inter = float(np.sum(pred * gt))
    return 1.0 - 2.0 * inter / (float(pred.sum()) + float(gt.sum()) + DICE_EPS)


def confidence_loss(c_hat: float, u: float, beta: float = 2.0) -> float:
    """Quality-focal confidence loss |sigma(c) - u|^beta * BCE(sigma(c), u)."""
    u = float(u)
    if not 0.0 <= u <= 1.0:
        raise ValueError(f"target u must lie in [0, 1], got {u}")
    sig = 1.0 / (1.0 + math.exp(-float(c_hat)))
    sig = min(max(sig, PROB_CLAMP), 1.0 - PROB_CLAMP)
    bce = -u * math.log(sig) - (1.0 - u) * math.log(1.0 - sig)
    return abs(sig - u) ** float(beta) * bce


def _log_softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max()
    return shifted - math.log(float(np.exp(shifted).sum()))


@dataclass(frozen=True)
class MotionPrediction:
    """Raw regression outputs for one query's joint parameters."""

    type_logits: np.ndarray
    axis: np.ndarray
    pivot: np.ndarray
    center: float
    span: float

    def __post_init__(self):
        object.__setattr__(self, "type_logits", np.asarray(self.type_logits, dtype=np.float64))
        object.__setattr__(self, "axis", np.asarray(self.axis, dtype=np.float64))
        object.__setattr__(self, "pivot", np.asarray(self.pivot, dtype=np.float64))
        object.__setattr__(self, "center", float(self.center))
        object.__setattr__(self, "span", float(self.span))


def motion_loss(pred: MotionPrediction, gt: JointSpec, weights: LossWeights = DEFAULT_WEIGHTS):
    """Joint supervision: type CE, unsigned axis cosine, pivot L1, center-span L1.

    Returns (total, breakdown) where breakdown holds the unweighted terms
    keyed "type", "dir", "origin", "limit".
    """
    gt_index = JOINT_TYPE_ORDER.index(gt.jtype)
    if pred.type_logits.ndim != 1 or pred.type_logits.size <= gt_index:
        raise ValueError("type_logits must cover every joint type")
    l_type = float(-_log_softmax(pred.type_logits)[gt_index])

    na = float(np.linalg.norm(pred.axis))
    ng = float(np.linalg.norm(gt.axis))
    if na < NORM_EPS:
        raise ValueError("predicted axis has zero norm")
    if ng < NORM_EPS:
        raise ValueError("ground-truth axis has zero norm")
    l_dir = 1.0 - abs(float(np.dot(pred.axis, gt.axis)) / (na * ng))

    l_origin = float(np.abs(pred.pivot - gt.pivot).sum())
    l_limit = abs(pred.center - gt.limits.center) + abs(pred.span - gt.limits.span)

    breakdown = {"type": l_type, "dir": l_dir, "origin": l_origin, "limit": l_limit}
    total = (
        weights.type * l_type
        + weights.dir * l_dir
        + weights.origin * l_origin
        + weights.limit * l_limit
    )
    return total, breakdown


def structure_loss(parent_probs, gt_parents) -> float:
    """Mean negative log-probability of the true parent over matched queries."""
    probs = np.asarray(parent_probs, dtype=np.float64)
    gt = np.asarray(gt_parents, dtype=np.int64)
    if probs.ndim != 2 or gt.shape != (probs.shape[0],):
        raise ValueError("parent_probs must be (R, C) with one gt index per row")
    if probs.shape[0] == 0:
        raise ValueError("structure loss needs at least one matched query")
    if np.any(np.abs(probs.sum(axis=1) - 1.0) > 1e-6):
        raise ValueError("parent_probs rows must sum to 1")
    if gt.min() < 0 or gt.max() >= probs.shape[1]:
        raise ValueError("gt parent index out of range")
    picked = probs[np.arange(probs.shape[0]), gt]
    return float(np.mean(-np.log(np.maximum(picked, PROB_CLAMP))))


def object_category_loss(logits, gt_index: int) -> float:
    """Softmax cross-entropy for the auxiliary object-category head."""
    logits = np.asarray(logits, dtype=np.float64)
    gt_index = int(gt_index)
    if logits.ndim != 1:
        raise ValueError(f"logits must be 1-d, got shape {logits.shape}")
    if not 0 <= gt_index < logits.size:
        raise ValueError(f"gt index {gt_index} out of range for {logits.size} classes")
    return float(-_log_softmax(logits)[gt_index])


_STAGE_TERMS = {1: ("triplet",), 2: ("obj",), 3: ("triplet", "mask", "score", "motion"), 4: ("struct",)}


def stage_loss(stage: int, components, weights: LossWeights = DEFAULT_WEIGHTS, ramp: float = 1.0) -> float:
    """Combined objective of one training stage.

    Stages I, II and IV are single unweighted terms; stage III is the weighted
    sum of triplet, mask, score and ramp-scaled motion losses.
    """
    stage = int(stage)
    if stage not in _STAGE_TERMS:
        raise ValueError(f"stage must be 1..4, got {stage}")
    missing = [name for name in _STAGE_TERMS[stage] if name not in components]
    if missing:
        raise ValueError(f"stage {stage} missing component {missing[0]!r}")
    if stage == 1:
        return float(components["triplet"])
    if stage == 2:
        return float(components["obj"])
    if stage == 4:
        return float(components["struct"])
    return (
        weights.triplet * float(components["triplet"])
        + weights.mask * float(components["mask"])
        + weights.score * float(components["score"])
        + float(ramp) * weights.motion * float(components["motion"])
    )


# ---------------------------------------------------------------------------
# self-test: the documented closed-form examples, runnable from the CLI


def _bce_mean(pred, gt) -> float:
    pred = _clamp_prob(pred)
    gt = np.asarray(gt, dtype=np.float64)
    return float(np.mean(-(gt * np.log(pred) + (1.0 - gt) * np.log(1.0 - pred))))


def selftest() -> list:
    """Evaluate every documented kernel example; returns rows of
    {name, value, expected, tol, passed}."""
    e1 = np.array([1.0, 0.0])
    e2 = np.array([0.0, 1.0])
    neg = np.array([-1.0, 0.0])
    half = np.full(4, 0.5)
    half_gt = np.array([1.0, 1.0, 0.0, 0.0])

    door = JointSpec(
        JointType.REVOLUTE, [0, 0, 1], [0.0, 0.0, 0.0], limits=JointLimits(0.5, 0.25)
    )
    motion_exact, _ = motion_loss(
        MotionPrediction([0.0, 30.0, 0.0, 0.0], [0, 0, 1], [0.0, 0.0, 0.0], 0.5, 0.25), door
    )
    _, flip = motion_loss(
        MotionPrediction([0.0, 30.0, 0.0, 0.0], [0, 0, -1], [0.0, 0.0, 0.0], 0.5, 0.25), door
    )
    _, perp = motion_loss(
        MotionPrediction([0.0, 30.0, 0.0, 0.0], [1, 0, 0], [0.1, -0.2, 0.0], 0.5, 0.25), door
    )

    rows = [
        ("triplet/degenerate", triplet_loss(e1, e1, e1, tau=0.7), math.log(2.0), 1e-6),
        ("triplet/antipodal", triplet_loss(e1, e1, neg, tau=1.0), math.log(1.0 + math.exp(-2.0)), 1e-6),
        ("focal/at-0.5", focal_loss(half, half_gt, gamma=2.0), 0.25 * math.log(2.0), 1e-6),
        (
            "focal/gamma-0-is-bce",
            focal_loss(np.array([0.3, 0.8, 0.6]), np.array([0.0, 1.0, 1.0]), gamma=0.0)
            - _bce_mean(np.array([0.3, 0.8, 0.6]), np.array([0.0, 1.0, 1.0])),
            0.0,
            1e-12,
        ),
        ("dice/half-overlap", dice_loss(half, half_gt), 0.5, 1e-6),
        ("dice/identical", dice_loss(half_gt, half_gt), 0.0, 1e-6),
        ("confidence/at-0.5-u1", confidence_loss(0.0, 1.0, beta=2.0), 0.25 * math.log(2.0), 1e-6),
        ("confidence/sigma-equals-u", confidence_loss(0.0, 0.5, beta=2.0), 0.0, 1e-12),
        ("motion/exact", motion_exact, 0.0, 1e-6),
        ("motion/flipped-axis-dir", flip["dir"], 0.0, 1e-12),
        ("motion/perpendicular-dir", perp["dir"], 1.0, 1e-12),
        ("motion/origin-l1", perp["origin"], 0.3, 1e-12),
        ("structure/one-hot", structure_loss(np.array([e1]), np.array([0])), 0.0, 1e-12),
        ("structure/uniform-4", structure_loss(np.full((1, 4), 0.25), np.array([2])), math.log(4.0), 1e-6),
        (
            "structure/mean-of-two",
            structure_loss(np.array([[0.5, 0.5], [0.0, 1.0]]), np.array([0, 1])),
            0.5 * math.log(2.0),
            1e-6,
        ),
        ("object/uniform-5", object_category_loss(np.zeros(5), 3), math.log(5.0), 1e-6),
        ("object/saturated", object_category_loss(np.array([30.0, 0.0, 0.0]), 0), 0.0, 1e-6),
        (
            "stage-iii/defaults",
            stage_loss(3, {"triplet": 1.0, "mask": 1.0, "score": 1.0, "motion": 1.0}, ramp=1.0),
            3.2,
            1e-9,
        ),
        ("stage-i/identity", stage_loss(1, {"triplet": 0.7}), 0.7, 1e-12),
    ]
    return [
        {
            "name": name,
            "value": float(value),
            "expected": float(expected),
            "tol": tol,
            "passed": abs(float(value) - float(expected)) <= tol,
        }
        for name, value, expected, tol in rows
    ]
