"""NCA-style losses over mined selections, with analytic gradients.

Every NCA strategy reduces to a list of terms ``(anchor, positive, negatives)``
evaluated as

    -log( exp(s_ap/t) / (exp(s_ap/t) + sum_n exp(s_an/t)) )

and averaged over terms.  Gradients are taken with respect to the normalized
embedding rows; mined indices are treated as constants.
"""
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, DataError, EmptyNegatives, NoValidTriplet
from .linalg import cosine_similarity_matrix
from .mining import label_masks, mine_arrays

NCA_STRATEGIES = ("EP", "EPHN", "EPSHN", "HP", "HPHN", "NPAIR", "BATCH_ALL")
STRATEGIES = NCA_STRATEGIES + ("TRIPLET_MARGIN",)
_MINED = {
    "EP": ("EP", "ALL"),
    "HP": ("HP", "ALL"),
    "EPHN": ("EP", "HN"),
    "HPHN": ("HP", "HN"),
    "EPSHN": ("EP", "SHN"),
}


@dataclass(frozen=True)
class LossConfig:
    strategy: str = "EPSHN"
    temperature: float = 0.1
    margin: float = 0.1
    shn_fallback: str = "hardest"
    # positive rule for TRIPLET_MARGIN: random, easy or hard
    triplet_positive: str = "random"
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "strategy", self.strategy.upper())
        if self.strategy not in STRATEGIES:
            raise ConfigError(f"unknown loss strategy {self.strategy!r}")
        if not self.temperature > 0:
            raise ConfigError("temperature must be > 0")
        if self.margin < 0:
            raise ConfigError("margin must be >= 0")
        if self.shn_fallback not in ("hardest", "skip"):
            raise ConfigError("shn_fallback must be 'hardest' or 'skip'")
        if self.triplet_positive not in ("random", "easy", "hard"):
            raise ConfigError("triplet_positive must be random, easy or hard")


@dataclass
class LossOutput:
    loss: float
    grad: np.ndarray
    num_anchors: int
    # (anchors, positives, negatives) per term; negative -1 means "all negatives"
    selection: tuple = field(default=(), repr=False)


def nca_term(s_pos, s_negs, temperature):
    """Loss and gradients of a single NCA term.

    Returns ``(loss, dloss/ds_pos, dloss/ds_negs)``.  The softmax is evaluated
    with the max scaled similarity subtracted first.
    """
    s_negs = np.atleast_1d(np.asarray(s_negs, dtype=np.float64))
    if s_negs.size == 0:
        raise EmptyNegatives("an NCA term needs at least one negative")
    z = np.concatenate(([s_pos], s_negs)) / temperature
    m = z.max()
    w = np.exp(z - m)
    total = w.sum()
    loss = m + np.log(total) - z[0]
    p = w / total
    return float(loss), float(-(1.0 - p[0]) / temperature), p[1:] / temperature


def _nca_terms(S, anchors, positives, neg_mask, tau):
    """Vectorised nca_term over T terms; neg_mask is T x B.

    Returns per-term losses and the T x B matrix of dloss/dS[anchor, j].
    """
    rows = S[anchors] / tau
    zp = rows[np.arange(len(anchors)), positives]
    zn = np.where(neg_mask, rows, -np.inf)
    m = np.maximum(zn.max(axis=1), zp)
    en = np.exp(zn - m[:, None])
    ep = np.exp(zp - m)
    total = ep + en.sum(axis=1)
    losses = m + np.log(total) - zp
    d = en / total[:, None] / tau
    d[np.arange(len(anchors)), positives] = -(1.0 - ep / total) / tau
    return losses, d


def _assemble_grad(e, anchors, dS_rows):
    """Chain rule through s_aj = e_a . e_j for a T x B block of dloss/ds."""
    G = np.zeros((e.shape[0], e.shape[0]))
    np.add.at(G, anchors, dS_rows)
    return G @ e + G.T @ e


def _terms_for(S, labels, cfg):
    pos_mask, neg_mask = label_masks(labels)
    strategy = cfg.strategy
    if strategy == "BATCH_ALL":
        anchors, positives = np.nonzero(pos_mask)
        negatives = np.full(len(anchors), -1, dtype=np.int64)
        return anchors, positives, negatives, neg_mask[anchors]
    if strategy == "NPAIR":
        counts = pos_mask.sum(axis=1)
        if counts.max(initial=0) > 1:
            raise DataError("NPAIR needs at most one positive per anchor (group size 2)")
        anchors, positives, negatives, _ = mine_arrays(S, labels, ("EP", "ALL"))
        return anchors, positives, negatives, neg_mask[anchors]

    pos_rule, neg_rule = _MINED[strategy]
    anchors, positives, negatives, _ = mine_arrays(S, labels, (pos_rule, neg_rule))
    if neg_rule == "ALL":
        return anchors, positives, negatives, neg_mask[anchors]

    if neg_rule == "SHN":
        missing = negatives < 0
        if missing.any() and cfg.shn_fallback == "hardest":
            _, _, hardest, _ = mine_arrays(S, labels, (pos_rule, "HN"))
            negatives = np.where(missing, hardest, negatives)
    keep = negatives >= 0
    anchors, positives, negatives = anchors[keep], positives[keep], negatives[keep]
    one_hot = np.zeros((len(anchors), S.shape[0]), dtype=bool)
    one_hot[np.arange(len(anchors)), negatives] = True
    return anchors, positives, negatives, one_hot


def compute_loss(e, labels, cfg, rng=None):
    """Mean loss over contributing terms and its gradient w.r.t. ``e``.

    ``rng`` only matters for TRIPLET_MARGIN with random positives; when omitted
    a generator seeded from ``cfg.seed`` is used.
    """
    if cfg.strategy == "TRIPLET_MARGIN":
        return triplet_margin_loss(e, labels, cfg, rng=rng)
    e = np.asarray(e, dtype=np.float64)
    labels = np.asarray(labels)
    S = cosine_similarity_matrix(e)
    anchors, positives, negatives, neg_mask = _terms_for(S, labels, cfg)
    has_neg = neg_mask.any(axis=1)
    anchors, positives, negatives, neg_mask = (
        anchors[has_neg], positives[has_neg], negatives[has_neg], neg_mask[has_neg]
    )
    if len(anchors) == 0:
        raise NoValidTriplet(f"{cfg.strategy}: no anchor has both a positive and a negative")
    losses, dS = _nca_terms(S, anchors, positives, neg_mask, cfg.temperature)
    T = len(anchors)
    grad = _assemble_grad(e, anchors, dS / T)
    return LossOutput(
        loss=float(losses.sum() / T),
        grad=grad,
        num_anchors=int(np.unique(anchors).size),
        selection=(anchors, positives, negatives),
    )


def _triplet_positives(S, pos_mask, anchors, rule, rng):
    if rule == "easy":
        return np.argmax(np.where(pos_mask[anchors], S[anchors], -np.inf), axis=1)
    if rule == "hard":
        return np.argmin(np.where(pos_mask[anchors], S[anchors], np.inf), axis=1)
    return np.array([rng.choice(np.flatnonzero(pos_mask[a])) for a in anchors], dtype=np.int64)


def triplet_margin_loss(e, labels, cfg, rng=None):
    """Hinge ``max(0, d_ap - d_an + margin)`` on euclidean distances.

    Each anchor uses a random positive (see ``cfg.triplet_positive``) and its
    semi-hard negative, falling back to the hardest negative per
    ``cfg.shn_fallback``.  Anchors with zero hinge still count in the mean.
    """
    e = np.asarray(e, dtype=np.float64)
    labels = np.asarray(labels)
    if rng is None:
        rng = np.random.default_rng(cfg.seed)
    S = cosine_similarity_matrix(e)
    pos_mask, neg_mask = label_masks(labels)
    anchors = np.flatnonzero(pos_mask.any(axis=1) & neg_mask.any(axis=1))
    positives = _triplet_positives(S, pos_mask, anchors, cfg.triplet_positive, rng)
    rows = S[anchors]
    s_ap = rows[np.arange(len(anchors)), positives]
    nm = neg_mask[anchors]
    semi = nm & (rows < s_ap[:, None])
    negatives = np.argmax(np.where(semi, rows, -np.inf), axis=1)
    feasible = semi.any(axis=1)
    if cfg.shn_fallback == "hardest":
        hardest = np.argmax(np.where(nm, rows, -np.inf), axis=1)
        negatives = np.where(feasible, negatives, hardest)
    else:
        anchors, positives, negatives, s_ap = (
            anchors[feasible], positives[feasible], negatives[feasible], s_ap[feasible]
        )
        rows = rows[feasible]
    if len(anchors) == 0:
        raise NoValidTriplet("TRIPLET_MARGIN: no anchor has both a positive and a negative")

    s_an = rows[np.arange(len(anchors)), negatives]
    d_ap = np.sqrt(np.maximum(2.0 - 2.0 * s_ap, 1e-24))
    d_an = np.sqrt(np.maximum(2.0 - 2.0 * s_an, 1e-24))
    hinge = d_ap - d_an + cfg.margin
    active = hinge > 0
    T = len(anchors)
    # dd/ds = -1/d for d = sqrt(2 - 2s)
    dS = np.zeros((T, e.shape[0]))
    idx = np.arange(T)
    dS[idx, positives] = np.where(active, -1.0 / d_ap, 0.0) / T
    dS[idx, negatives] += np.where(active, 1.0 / d_an, 0.0) / T
    return LossOutput(
        loss=float(np.maximum(hinge, 0.0).sum() / T),
        grad=_assemble_grad(e, anchors, dS),
        num_anchors=T,
        selection=(anchors, positives, negatives, active),
    )


def triplet_hinge(d_ap, d_an, margin):
    return max(0.0, d_ap - d_an + margin)
