"""Query-to-part matching: mask logits, Hungarian assignment, confidence targets,
residual query updates and confidence filtering.

The bipartite matcher minimizes total cost over min(N, K) pairs and breaks
ties toward the lexicographically smallest pair list, so results are
deterministic across implementations.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np
from scipy.optimize import linear_sum_assignment
from scipy.special import expit

from .errors import ParseError

PROB_CLAMP = 1e-7
DICE_EPS = 1e-6
HARD_MASK_THRESHOLD = 0.5
#: query-set size of the stock pipeline (the upper bound on parts)
DEFAULT_NUM_QUERIES = 100


@dataclass(frozen=True, eq=False)
class QuerySet:
    """Paired position/content queries with confidences and part logits.

    All fields are row-aligned: positions (N, 3), contents (N, d), confidences
    (N,) in [0, 1], part_logits (N, C).
    """

    positions: np.ndarray
    contents: np.ndarray
    confidences: np.ndarray
    part_logits: np.ndarray

    def __post_init__(self):
        pos = np.asarray(self.positions, dtype=np.float64)
        con = np.asarray(self.contents, dtype=np.float64)
        conf = np.asarray(self.confidences, dtype=np.float64)
        logits = np.asarray(self.part_logits, dtype=np.float64)
        if pos.ndim != 2 or pos.shape[1] != 3:
            raise ValueError(f"positions must be (N, 3), got {pos.shape}")
        n = pos.shape[0]
        if con.ndim != 2 or con.shape[0] != n:
            raise ValueError(f"contents must be (N, d) with N={n}, got {con.shape}")
        if conf.shape != (n,):
            raise ValueError(f"confidences must be ({n},), got {conf.shape}")
        if logits.ndim != 2 or logits.shape[0] != n:
            raise ValueError(f"part_logits must be (N, C) with N={n}, got {logits.shape}")
        if conf.size and (conf.min() < 0.0 or conf.max() > 1.0):
            raise ValueError("confidences must lie in [0, 1]")
        for arr in (pos, con, conf, logits):
            arr.setflags(write=False)
        object.__setattr__(self, "positions", pos)
        object.__setattr__(self, "contents", con)
        object.__setattr__(self, "confidences", conf)
        object.__setattr__(self, "part_logits", logits)

    def __len__(self) -> int:
        return self.positions.shape[0]


@dataclass(frozen=True)
class SoftMaskSet:
    """Raw query-to-point affinity logits (N_q, M)."""

    logits: np.ndarray

    def __post_init__(self):
        logits = np.asarray(self.logits, dtype=np.float64)
        if logits.ndim != 2:
            raise ValueError(f"logits must be (N_q, M), got {logits.shape}")
        if not np.all(np.isfinite(logits)):
            raise ValueError("mask logits must be finite")
        object.__setattr__(self, "logits", logits)

    @property
    def soft(self) -> np.ndarray:
        """Sigmoid of the logits: per-point soft assignment in (0, 1)."""
        return expit(self.logits)

    @property
    def hard(self) -> np.ndarray:
        """Soft assignment thresholded at 0.5."""
        return self.soft > HARD_MASK_THRESHOLD


@dataclass(frozen=True)
class MatchResult:
    """Injective pairing (query index, gt part index) plus unmatched queries."""

    pairs: tuple
    unmatched_queries: tuple
    total_cost: float

    def __post_init__(self):
        pairs = tuple((int(q), int(g)) for q, g in self.pairs)
        unmatched = tuple(int(q) for q in self.unmatched_queries)
        qs = [q for q, _ in pairs]
        gs = [g for _, g in pairs]
        if len(set(qs)) != len(qs) or len(set(gs)) != len(gs):
            raise ValueError("pairs must be injective on both sides")
        if set(qs) & set(unmatched):
            raise ValueError("a query cannot be both matched and unmatched")
        object.__setattr__(self, "pairs", pairs)
        object.__setattr__(self, "unmatched_queries", unmatched)
        object.__setattr__(self, "total_cost", float(self.total_cost))

    def gt_for_query(self) -> dict:
        return dict(self.pairs)


def compute_mask_logits(contents, features) -> SoftMaskSet:
    """Part-mask logits as the affinity between content queries and point features."""
    con = np.asarray(contents, dtype=np.float64)
    feats = np.asarray(features, dtype=np.float64)
    if con.ndim != 2 or feats.ndim != 2:
        raise ValueError("contents and features must be 2-d arrays")
    if con.shape[1] != feats.shape[1]:
        raise ValueError(
            f"feature dimension mismatch: contents {con.shape[1]} vs features {feats.shape[1]}"
        )
    return SoftMaskSet(logits=con @ feats.T)


def matching_cost(pred_soft, gt_masks, w_bce=1.0, w_dice=1.0) -> np.ndarray:
    """(N, K) matching cost: mean-per-point BCE plus Dice cost, weighted.

    Predictions are clamped to [1e-7, 1 - 1e-7] before the log terms.
    """
    pred = np.asarray(pred_soft, dtype=np.float64)
    gt = np.asarray(gt_masks, dtype=np.float64)
    if pred.ndim != 2 or gt.ndim != 2:
        raise ValueError("masks must be 2-d arrays")
    if pred.shape[1] != gt.shape[1]:
        raise ValueError(f"point count mismatch: {pred.shape[1]} vs {gt.shape[1]}")
    m = pred.shape[1]
    if m == 0:
        raise ValueError("masks must cover at least one point")
    pred = np.clip(pred, PROB_CLAMP, 1.0 - PROB_CLAMP)

    log_p = np.log(pred)
    log_np = np.log1p(-pred)
    # bce[i, j] = -(log_p[i] . gt[j] + log_np[i] . (1 - gt[j])) / M
    bce = -(log_p @ gt.T + log_np @ (1.0 - gt).T) / m

    inter = pred @ gt.T
    denom = pred.sum(axis=1)[:, None] + gt.sum(axis=1)[None, :] + DICE_EPS
    dice = 1.0 - 2.0 * inter / denom
    return float(w_bce) * bce + float(w_dice) * dice


def _row_order_total(cost: np.ndarray, pairs) -> float:
    """Float total of pair costs summed in ascending row order (tie-rule arithmetic)."""
    total = 0.0
    for q, g in sorted(pairs):
        total += float(cost[q, g])
    return total


def hungarian(cost) -> MatchResult:
    """Minimum-cost assignment of min(N, K) pairs with lexicographic tie-breaking.

    Row by row, each candidate column (and, when rows outnumber columns, the
    skip option) is scored as its cost plus the optimal assignment of the
    remaining submatrix; the first candidate achieving the minimum is
    committed.  This yields the lexicographically smallest optimal pair list.
    """
    matrix = np.asarray(cost, dtype=np.float64)
    if matrix.ndim != 2:
        raise ValueError(f"cost must be 2-d, got shape {matrix.shape}")
    n, k = matrix.shape
    if n == 0 or k == 0:
        return MatchResult(pairs=(), unmatched_queries=tuple(range(n)), total_cost=0.0)
    if not np.all(np.isfinite(matrix)):
        raise ValueError("cost entries must be finite")

    committed: list = []
    free_cols = list(range(k))
    for row in range(n):
        if not free_cols:
            break
        rows_left = list(range(row + 1, n))

        def branch_total(col):
            pairs = committed + [(row, col)]
            rest_cols = [c for c in free_cols if c != col]
            pairs += _optimal_rest(matrix, rows_left, rest_cols)
            return _row_order_total(matrix, pairs)

        best_col = None
        best_total = None
        for col in free_cols:
            total = branch_total(col)
            if best_total is None or total < best_total:
                best_total = total
                best_col = col
        # skipping this row is admissible only if the remaining rows can
        # still take every free column
        if len(rows_left) >= len(free_cols):
            skip_total = _row_order_total(
                matrix, committed + _optimal_rest(matrix, rows_left, free_cols)
            )
            if skip_total < best_total:
                best_total = skip_total
                best_col = None
        if best_col is not None:
            committed.append((row, best_col))
            free_cols.remove(best_col)

    matched = {q for q, _ in committed}
    unmatched = tuple(q for q in range(n) if q not in matched)
    return MatchResult(
        pairs=tuple(committed),
        unmatched_queries=unmatched,
        total_cost=_row_order_total(matrix, committed),
    )


def _optimal_rest(matrix: np.ndarray, rows, cols) -> list:
    """Optimal assignment pairs on a row/column subset (may be empty)."""
    if not rows or not cols:
        return []
    sub = matrix[np.ix_(rows, cols)]
    r_idx, c_idx = linear_sum_assignment(sub)
    return [(rows[r], cols[c]) for r, c in zip(r_idx, c_idx)]


def confidence_targets(pred_hard, gt_masks, match: MatchResult) -> np.ndarray:
    """Per-query IoU against the matched GT mask; unmatched queries get 0."""
    pred = np.asarray(pred_hard, dtype=bool)
    gt = np.asarray(gt_masks, dtype=bool)
    if pred.ndim != 2 or gt.ndim != 2 or pred.shape[1] != gt.shape[1]:
        raise ValueError("pred and gt masks must be 2-d with matching point counts")
    out = np.zeros(pred.shape[0])
    for q, g in match.pairs:
        if not (0 <= q < pred.shape[0] and 0 <= g < gt.shape[0]):
            raise ValueError(f"match pair ({q}, {g}) outside mask shapes")
        inter = np.count_nonzero(pred[q] & gt[g])
        union = np.count_nonzero(pred[q] | gt[g])
        out[q] = inter / union if union else 0.0
    return out


def residual_update(queries: QuerySet, delta_p, delta_c) -> QuerySet:
    """Additive refinement of positions and contents; other fields unchanged."""
    dp = np.asarray(delta_p, dtype=np.float64)
    dc = np.asarray(delta_c, dtype=np.float64)
    if dp.shape != queries.positions.shape:
        raise ValueError(f"delta_p shape {dp.shape} != positions {queries.positions.shape}")
    if dc.shape != queries.contents.shape:
        raise ValueError(f"delta_c shape {dc.shape} != contents {queries.contents.shape}")
    return QuerySet(
        positions=queries.positions + dp,
        contents=queries.contents + dc,
        confidences=queries.confidences,
        part_logits=queries.part_logits,
    )


def filter_queries(queries: QuerySet, threshold: float = 0.5) -> QuerySet:
    """Drop rows with confidence strictly below the threshold; order preserved."""
    threshold = float(threshold)
    if not 0.0 <= threshold <= 1.0:
        raise ValueError(f"threshold must lie in [0, 1], got {threshold}")
    keep = queries.confidences >= threshold
    return QuerySet(
        positions=queries.positions[keep],
        contents=queries.contents[keep],
        confidences=queries.confidences[keep],
        part_logits=queries.part_logits[keep],
    )


# ---------------------------------------------------------------------------
# mask interchange: little-endian bitsets (hard) or raw f32 rows (soft), with
# a JSON sidecar {"rows": R, "M": M} at <path>.json


def _sidecar_path(path) -> str:
    return str(path) + ".json"


def save_masks(masks, path) -> None:
    """Write hard masks as packed bits or soft masks as f32 rows."""
    arr = np.asarray(masks)
    if arr.ndim != 2:
        raise ValueError(f"masks must be 2-d, got shape {arr.shape}")
    with open(path, "wb") as fh:
        if arr.dtype == bool:
            fh.write(np.packbits(arr, axis=1, bitorder="little").tobytes())
        else:
            fh.write(np.ascontiguousarray(arr, dtype="<f4").tobytes())
    with open(_sidecar_path(path), "w", encoding="utf-8") as fh:
        json.dump({"rows": int(arr.shape[0]), "M": int(arr.shape[1])}, fh)
        fh.write("\n")


def load_masks(path):
    """Read a mask file; returns (array, is_soft).

    Bitset files decode to bool arrays, f32 files to float arrays.  The two
    encodings are distinguished by file size, which can never collide.
    """
    try:
        with open(_sidecar_path(path), "r", encoding="utf-8") as fh:
            meta = json.load(fh)
        rows, m = int(meta["rows"]), int(meta["M"])
    except FileNotFoundError as exc:
        raise ParseError(f"{path}: missing sidecar {_sidecar_path(path)}") from exc
    except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
        raise ParseError(f"{path}: bad sidecar: {exc}") from exc
    if rows < 0 or m < 1:
        raise ParseError(f"{path}: sidecar must have rows >= 0 and M >= 1")
    with open(path, "rb") as fh:
        blob = fh.read()
    if rows == 0:
        if blob:
            raise ParseError(f"{path}: expected empty payload for rows=0")
        return np.zeros((0, m), dtype=bool), False
    bits_size = rows * ((m + 7) // 8)
    f32_size = rows * m * 4
    if len(blob) == bits_size:
        packed = np.frombuffer(blob, dtype=np.uint8).reshape(rows, -1)
        masks = np.unpackbits(packed, axis=1, count=m, bitorder="little").astype(bool)
        return masks, False
    if len(blob) == f32_size:
        return np.frombuffer(blob, dtype="<f4").reshape(rows, m).astype(np.float64), True
    raise ParseError(
        f"{path}: size {len(blob)} matches neither bitset ({bits_size}) nor f32 ({f32_size})"
    )
