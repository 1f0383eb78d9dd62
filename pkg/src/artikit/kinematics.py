"""Forward kinematics, articulation-state sampling and kinematic-tree construction.

Joint values are absolute displacements from the canonical pose (value 0),
radians for revolute/continuous joints and normalized lengths for prismatic
joints.  Transforms compose in the shared canonical frame: a part's own joint
transform is applied first, then its parent's, and so on up to the root, so a
parent's motion carries all of its descendants.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .model import (
    ROOT_ID,
    ArticulatedModel,
    JointLimits,
    JointSpec,
    JointType,
    KinematicTree,
    require_valid,
)

LIMIT_TOL = 1e-9

TWO_PI = 2.0 * math.pi


def rotation_about_axis(axis, angle: float) -> np.ndarray:
    """Rodrigues rotation matrix for a unit axis and an angle in radians."""
    axis = np.asarray(axis, dtype=np.float64)
    k = np.array(
        [
            [0.0, -axis[2], axis[1]],
            [axis[2], 0.0, -axis[0]],
            [-axis[1], axis[0], 0.0],
        ]
    )
    return np.eye(3) + math.sin(angle) * k + (1.0 - math.cos(angle)) * (k @ k)


def _check_axis(joint: JointSpec) -> None:
    norm = float(np.linalg.norm(joint.axis))
    if abs(norm - 1.0) > 1e-6:
        raise ValueError(f"joint axis not unit length (norm={norm:.6g})")


def _check_limit(joint: JointSpec, value: float) -> None:
    if joint.jtype is JointType.CONTINUOUS:
        return
    if joint.jtype is JointType.FIXED:
        if abs(value) > LIMIT_TOL:
            raise ValueError(f"fixed joint only admits value 0, got {value!r}")
        return
    if abs(value) <= LIMIT_TOL:
        # value 0 is the canonical pose and is always admissible, even for
        # joints whose motion range does not include 0
        return
    lo, hi = joint.limits.lower, joint.limits.upper
    if not (lo - LIMIT_TOL <= value <= hi + LIMIT_TOL):
        raise ValueError(
            f"joint value {value!r} outside limits [{lo!r}, {hi!r}]"
        )


def joint_transform(joint: JointSpec, value: float):
    """Rigid transform (R, t) of a joint at the given value; x -> R @ x + t."""
    value = float(value)
    if joint.jtype is JointType.FIXED:
        _check_limit(joint, value)
        return np.eye(3), np.zeros(3)
    _check_axis(joint)
    _check_limit(joint, value)
    if joint.jtype is JointType.PRISMATIC:
        return np.eye(3), value * joint.axis
    rot = rotation_about_axis(joint.axis, value)
    return rot, joint.pivot - rot @ joint.pivot


def apply_joint(joint: JointSpec, value: float, points) -> np.ndarray:
    """Transform points by one joint: identity, translation, or rotation about
    the axis line through the pivot."""
    pts = np.asarray(points, dtype=np.float64)
    squeeze = pts.ndim == 1
    pts = pts.reshape(-1, 3)
    rot, trans = joint_transform(joint, value)
    out = pts @ rot.T + trans
    return out[0] if squeeze else out


def sample_states(limits: JointLimits, jtype: JointType, n: int = 6) -> np.ndarray:
    """n joint values spanning the motion range.

    Fixed -> zeros; revolute/prismatic -> inclusive linspace over
    [center - span, center + span]; continuous -> uniform half-open [0, 2*pi).
    """
    n = int(n)
    if n < 2:
        raise ValueError(f"need at least 2 states, got {n}")
    if jtype is JointType.FIXED:
        return np.zeros(n)
    if jtype is JointType.CONTINUOUS:
        return np.arange(n) * (TWO_PI / n)
    return np.linspace(limits.lower, limits.upper, n)


def part_transforms(model: ArticulatedModel, state) -> dict:
    """Composed rigid transform per part id at the given state.

    ``state`` maps part id -> joint value and must cover every part.
    """
    require_valid(model)
    parts = {p.id: p for p in model.parts}
    missing = [pid for pid in parts if pid not in state]
    if missing:
        raise ValueError(f"missing state value for part {missing[0]}")

    own = {
        pid: joint_transform(part.joint, float(state[pid]))
        for pid, part in parts.items()
    }
    composed: dict = {}

    def resolve(pid: int):
        if pid == ROOT_ID:
            return np.eye(3), np.zeros(3)
        if pid not in composed:
            pr, pt = resolve(model.tree.parent[pid])
            r, t = own[pid]
            composed[pid] = (pr @ r, pr @ t + pt)
        return composed[pid]

    for pid in parts:
        resolve(pid)
    return composed


def articulate(model: ArticulatedModel, state) -> np.ndarray:
    """Pose the model's canonical points at the given state; base points stay."""
    transforms = part_transforms(model, state)
    out = model.points.copy()
    for part in model.parts:
        rot, trans = transforms[part.id]
        idx = part.point_indices
        out[idx] = model.points[idx] @ rot.T + trans
    return out


def canonical_state(model: ArticulatedModel) -> dict:
    return {part.id: 0.0 for part in model.parts}


# ---------------------------------------------------------------------------
# tree construction from part-category probabilities


@dataclass(frozen=True)
class AffinityMatrix:
    """scores[i, j] = attachment score of part j as parent of part i."""

    scores: np.ndarray
    root_scores: np.ndarray

    def __post_init__(self):
        scores = np.asarray(self.scores, dtype=np.float64)
        root = np.asarray(self.root_scores, dtype=np.float64)
        if scores.ndim != 2 or scores.shape[0] != scores.shape[1] or scores.shape[0] < 1:
            raise ValueError(f"scores must be square (N, N) with N >= 1, got {scores.shape}")
        if root.shape != (scores.shape[0],):
            raise ValueError(f"root_scores must have shape ({scores.shape[0]},)")
        if not (np.all(np.isfinite(scores)) and np.all(np.isfinite(root))):
            raise ValueError("affinity entries must be finite")
        object.__setattr__(self, "scores", scores)
        object.__setattr__(self, "root_scores", root)

    @property
    def n(self) -> int:
        return self.scores.shape[0]


@dataclass(frozen=True)
class ParentDistribution:
    """Row-stochastic (N, N+1) matrix; column j < N is parent j, column N is ROOT."""

    probs: np.ndarray

    def __post_init__(self):
        probs = np.asarray(self.probs, dtype=np.float64)
        if probs.ndim != 2 or probs.shape[1] != probs.shape[0] + 1:
            raise ValueError(f"probs must have shape (N, N+1), got {probs.shape}")
        if np.any(np.abs(probs.sum(axis=1) - 1.0) > 1e-9):
            raise ValueError("rows must sum to 1")
        if np.any(np.diagonal(probs) != 0.0):
            raise ValueError("self-parent probabilities must be 0")
        object.__setattr__(self, "probs", probs)

    @property
    def n(self) -> int:
        return self.probs.shape[0]


def pairwise_affinity(part_probs, compat, root_scores=None) -> AffinityMatrix:
    """Bilinear attachment scores s_i^T C s_j from per-part category distributions.

    ``root_scores`` defaults to zeros (a neutral root prior); callers with a
    trained root embedding can pass their own.
    """
    probs = np.asarray(part_probs, dtype=np.float64)
    comp = np.asarray(compat, dtype=np.float64)
    if probs.ndim != 2:
        raise ValueError(f"part_probs must be (N, N_c), got {probs.shape}")
    if comp.shape != (probs.shape[1], probs.shape[1]):
        raise ValueError(
            f"compat must be ({probs.shape[1]}, {probs.shape[1]}), got {comp.shape}"
        )
    sums = probs.sum(axis=1)
    if np.any(np.abs(sums - 1.0) > 1e-6):
        raise ValueError("part_probs rows must sum to 1")
    scores = probs @ comp @ probs.T
    if root_scores is None:
        root_scores = np.zeros(probs.shape[0])
    return AffinityMatrix(scores=scores, root_scores=root_scores)


def parent_distribution(aff: AffinityMatrix) -> ParentDistribution:
    """Per-part softmax over candidate parents (all other parts plus ROOT)."""
    n = aff.n
    cand = np.concatenate([aff.scores, aff.root_scores[:, None]], axis=1)
    mask = np.eye(n, n + 1, dtype=bool)
    cand = np.where(mask, -np.inf, cand)
    cand -= cand.max(axis=1, keepdims=True)
    expd = np.exp(cand)
    probs = expd / expd.sum(axis=1, keepdims=True)
    probs[mask] = 0.0
    return ParentDistribution(probs=probs)


def _reaches(parent: dict, start: int, target: int) -> bool:
    """Follow committed parent links from ``start``; True if ``target`` is hit."""
    cur = start
    while cur != ROOT_ID and cur in parent:
        if cur == target:
            return True
        cur = parent[cur]
    return cur == target


def build_tree(dist: ParentDistribution) -> KinematicTree:
    """Argmax parent assignment with greedy cycle repair.

    Every part takes its most probable parent; if the result is cyclic, parts
    are reprocessed in descending order of their top parent probability
    (ties: lower part id first), committing each edge only if it keeps the
    graph acyclic and otherwise falling back to the next-most-probable
    candidate.  ROOT is always admissible, so the repair terminates and the
    result always validates.
    """
    probs = dist.probs
    n = dist.n
    root_col = n

    def to_parent(col: int) -> int:
        return ROOT_ID if col == root_col else col

    direct = {i: to_parent(int(np.argmax(probs[i]))) for i in range(n)}
    if not _tree_has_cycle(direct):
        return KinematicTree(direct)

    order = sorted(range(n), key=lambda i: (-float(probs[i].max()), i))
    committed: dict = {}
    for i in order:
        # candidate columns by descending probability; ROOT sorts after parts
        # on equal probability so the tie rule stays deterministic
        cand = sorted(
            (c for c in range(n + 1) if c != i),
            key=lambda c: (-float(probs[i, c]), c),
        )
        for col in cand:
            parent = to_parent(col)
            if parent == ROOT_ID or not _reaches(committed, parent, i):
                committed[i] = parent
                break
    return KinematicTree(committed)


def _tree_has_cycle(parent: dict) -> bool:
    for start in parent:
        seen = set()
        cur = start
        while cur != ROOT_ID:
            if cur in seen:
                return True
            seen.add(cur)
            cur = parent.get(cur, ROOT_ID)
    return False


# ---------------------------------------------------------------------------
# center-span limit parameterization


def limits_from_range(l_min: float, l_max: float) -> JointLimits:
    """Convert motion bounds to the center-span parameterization."""
    l_min, l_max = float(l_min), float(l_max)
    if l_min > l_max:
        raise ValueError(f"l_min={l_min!r} exceeds l_max={l_max!r}")
    return JointLimits(center=0.5 * (l_min + l_max), span=0.5 * (l_max - l_min))


def limits_to_range(limits: JointLimits):
    """Inverse of limits_from_range."""
    return limits.lower, limits.upper
