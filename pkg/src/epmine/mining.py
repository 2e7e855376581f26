"""In-batch example selection over a similarity matrix.

All selections are argmax/argmin of a row of ``S`` restricted to a label mask.
Ties go to the lowest index (``np.argmax``/``np.argmin`` return the first
extremum).  Anchors without any same-label partner are skipped by
:func:`mine_batch`; such items still act as negatives for other anchors.
"""
from dataclasses import dataclass
from typing import Optional

import numpy as np

POSITIVE_RULES = ("EP", "HP")
NEGATIVE_RULES = ("ALL", "HN", "SHN")


@dataclass(frozen=True)
class MiningSelection:
    anchor: int
    positive: Optional[int]
    negative: Optional[int]
    positive_sim: float = float("nan")
    negative_sim: float = float("nan")


def _candidates(labels, anchor, same):
    labels = np.asarray(labels)
    mask = labels == labels[anchor] if same else labels != labels[anchor]
    if same:
        mask = mask.copy()
        mask[anchor] = False
    return mask


def _masked_pick(row, mask, largest):
    if not mask.any():
        return None
    fill = -np.inf if largest else np.inf
    vals = np.where(mask, row, fill)
    return int(np.argmax(vals) if largest else np.argmin(vals))


def mine_easy_positive(S, labels, anchor):
    """Most similar same-label item other than the anchor itself."""
    return _masked_pick(np.asarray(S)[anchor], _candidates(labels, anchor, True), True)


def mine_hard_positive(S, labels, anchor):
    """Least similar same-label item other than the anchor itself."""
    return _masked_pick(np.asarray(S)[anchor], _candidates(labels, anchor, True), False)


def mine_hard_negative(S, labels, anchor):
    return _masked_pick(np.asarray(S)[anchor], _candidates(labels, anchor, False), True)


def mine_easy_negative(S, labels, anchor):
    return _masked_pick(np.asarray(S)[anchor], _candidates(labels, anchor, False), False)


def mine_semi_hard_negative(S, labels, anchor, positive_sim):
    """Closest different-label item that is still strictly less similar than
    the chosen positive.  Returns None when no negative qualifies."""
    row = np.asarray(S)[anchor]
    mask = _candidates(labels, anchor, False) & (row < positive_sim)
    return _masked_pick(row, mask, True)


def parse_strategy(strategy):
    """Accept ``("EP", "SHN")`` or the compact spelling ``"EPSHN"``/``"EP"``."""
    if isinstance(strategy, str):
        pos, neg = strategy[:2].upper(), strategy[2:].upper() or "ALL"
    else:
        pos, neg = (s.upper() for s in strategy)
    if pos not in POSITIVE_RULES or neg not in NEGATIVE_RULES:
        raise ValueError(f"unknown mining strategy {strategy!r}")
    return pos, neg


def label_masks(labels):
    labels = np.asarray(labels)
    same = labels[:, None] == labels[None, :]
    pos = same.copy()
    np.fill_diagonal(pos, False)
    return pos, ~same


def mine_arrays(S, labels, strategy):
    """Vectorised batch mining.

    Returns ``(anchors, positives, negatives, neg_mask)`` as arrays over the
    anchors that have a positive.  ``negatives`` holds -1 where no single
    negative applies (rule ALL, or SHN/HN infeasible).  ``neg_mask`` is the
    B x B different-label mask, used by the ALL rule.
    """
    pos_rule, neg_rule = parse_strategy(strategy)
    S = np.asarray(S)
    pos_mask, neg_mask = label_masks(labels)
    anchors = np.flatnonzero(pos_mask.any(axis=1))
    rows = S[anchors]
    pm = pos_mask[anchors]
    if pos_rule == "EP":
        positives = np.argmax(np.where(pm, rows, -np.inf), axis=1)
    else:
        positives = np.argmin(np.where(pm, rows, np.inf), axis=1)
    negatives = np.full(len(anchors), -1, dtype=np.int64)
    if neg_rule != "ALL":
        nm = neg_mask[anchors]
        if neg_rule == "SHN":
            s_pos = rows[np.arange(len(anchors)), positives]
            nm = nm & (rows < s_pos[:, None])
        has = nm.any(axis=1)
        picked = np.argmax(np.where(nm, rows, -np.inf), axis=1)
        negatives[has] = picked[has]
    return anchors, positives.astype(np.int64), negatives, neg_mask


def mine_batch(S, labels, strategy):
    """One :class:`MiningSelection` per anchor that has an in-batch positive.

    ``strategy`` pairs a positive rule (EP, HP) with a negative rule (ALL, HN,
    SHN).  Under ALL the ``negative`` field is None: the loss consumes every
    different-label item.  An infeasible SHN also yields None; falling back to
    the hardest negative is the loss layer's decision.
    """
    S = np.asarray(S)
    anchors, positives, negatives, _ = mine_arrays(S, labels, strategy)
    out = []
    for a, p, n in zip(anchors.tolist(), positives.tolist(), negatives.tolist()):
        out.append(
            MiningSelection(
                anchor=a,
                positive=p,
                negative=None if n < 0 else n,
                positive_sim=float(S[a, p]),
                negative_sim=float("nan") if n < 0 else float(S[a, n]),
            )
        )
    return out
