"""Retrieval evaluation and embedding diagnostics."""
from dataclasses import dataclass, field

import numpy as np

from .data import write_features
from .errors import ConfigError, DegenerateCovariance, DimensionMismatch, KTooLarge
from .linalg import cosine_similarity_matrix, cross_similarity

MODES = ("self_query", "query_gallery")


@dataclass(frozen=True)
class RetrievalConfig:
    k_values: tuple = (1, 2, 4, 8)
    mode: str = "self_query"
    # forced on in self_query; in query_gallery it assumes query i is gallery row i
    exclude_self: bool = False

    def __post_init__(self):
        k = tuple(int(x) for x in self.k_values)
        object.__setattr__(self, "k_values", k)
        if not k or k[0] < 1 or any(b <= a for a, b in zip(k, k[1:])):
            raise ConfigError("k_values must be strictly increasing and >= 1")
        if self.mode not in MODES:
            raise ConfigError(f"retrieval mode must be one of {MODES}")
        if self.mode == "self_query":
            object.__setattr__(self, "exclude_self", True)


@dataclass
class RetrievalReport:
    recall_at_k: dict
    num_queries: int

    def to_text(self):
        lines = [f"num_queries={self.num_queries}"]
        lines += [f"recall@{k}={v:.6f}" for k, v in self.recall_at_k.items()]
        return "\n".join(lines) + "\n"


def ranked_neighbors(query, gallery, k, exclude_self=False):
    """Indices of the ``k`` most similar gallery rows per query.

    Ties break toward the lower gallery index.  With ``exclude_self`` the query
    is assumed to be row ``i`` of the gallery and is never retrieved.
    """
    sims = cross_similarity(query, gallery)
    if exclude_self:
        np.fill_diagonal(sims, -np.inf)
    # stable sort of the negated scores keeps lower indices first among ties
    order = np.argsort(-sims, axis=1, kind="stable")
    return order[:, :k]


def recall_at_k(query, query_labels, gallery=None, gallery_labels=None, cfg=None):
    """Fraction of queries with at least one same-label item among their top K."""
    cfg = cfg or RetrievalConfig()
    query = np.asarray(query)
    query_labels = np.asarray(query_labels)
    if cfg.mode == "self_query":
        if gallery is not None and gallery is not query and not np.array_equal(gallery, query):
            raise ConfigError("self_query mode needs gallery == query")
        gallery, gallery_labels = query, query_labels
    elif gallery is None or gallery_labels is None:
        raise ConfigError("query_gallery mode needs a gallery")
    gallery = np.asarray(gallery)
    gallery_labels = np.asarray(gallery_labels)
    if query.shape[1] != gallery.shape[1]:
        raise DimensionMismatch(f"query dim {query.shape[1]} != gallery dim {gallery.shape[1]}")
    exclude = cfg.mode == "self_query" or cfg.exclude_self
    effective = len(gallery) - (1 if exclude else 0)
    kmax = cfg.k_values[-1]
    if kmax >= effective:
        raise KTooLarge(f"K={kmax} needs a gallery larger than {effective} items")
    top = ranked_neighbors(query, gallery, kmax, exclude_self=exclude)
    hits = gallery_labels[top] == query_labels[:, None]
    first_hit = np.where(hits.any(axis=1), hits.argmax(axis=1), kmax)
    recalls = {k: float(np.mean(first_hit < k)) for k in cfg.k_values}
    return RetrievalReport(recalls, len(query))


@dataclass
class NeighborStats:
    nearest_pos: np.ndarray  # NaN where the item has no same-class partner
    nearest_neg: np.ndarray
    correct_at_1: np.ndarray
    labels: np.ndarray = field(repr=False, default=None)

    @property
    def eligible(self):
        return ~np.isnan(self.nearest_pos)

    def accuracy(self):
        """Fraction of eligible items whose nearest neighbour shares their label;
        nan when no item has a same-label partner."""
        ok = self.correct_at_1[self.eligible]
        return float(ok.mean()) if ok.size else float("nan")

    def to_csv(self, path):
        with open(path, "w", newline="\n") as fh:
            fh.write("index,label,nearest_pos_sim,nearest_neg_sim,correct_at_1\n")
            for i in range(len(self.nearest_pos)):
                pos = "" if np.isnan(self.nearest_pos[i]) else f"{self.nearest_pos[i]:.9g}"
                fh.write(
                    f"{i},{int(self.labels[i])},{pos},{self.nearest_neg[i]:.9g},"
                    f"{int(self.correct_at_1[i])}\n"
                )


def neighbor_stats(e, labels):
    """Similarity of each item to its nearest same-class and nearest
    other-class neighbour (self excluded).  An item counts as correct at 1
    only when the same-class similarity is strictly larger."""
    labels = np.asarray(labels)
    S = cosine_similarity_matrix(e)
    same = labels[:, None] == labels[None, :]
    pos_mask = same.copy()
    np.fill_diagonal(pos_mask, False)
    pos = np.where(pos_mask, S, -np.inf).max(axis=1)
    neg = np.where(~same, S, -np.inf).max(axis=1)
    pos = np.where(np.isneginf(pos), np.nan, pos)
    with np.errstate(invalid="ignore"):
        correct = np.nan_to_num(pos, nan=-np.inf) > neg
    return NeighborStats(pos, neg, correct, labels)


DECILES = tuple(range(0, 101, 10))


@dataclass
class SpreadSummary:
    mean: float
    std: float
    deciles: np.ndarray
    num_pairs: int


def _summarize(values):
    return SpreadSummary(
        mean=float(values.mean()),
        std=float(values.std()),
        deciles=np.percentile(values, DECILES),
        num_pairs=int(values.size),
    )


def intra_class_spread(e, labels):
    """Summaries of all same-class pair similarities (i < j).

    Returns ``(per_class, pooled)``: a dict of class id to
    :class:`SpreadSummary` and the summary over every class's pairs together.
    Classes with fewer than two items are left out.
    """
    labels = np.asarray(labels)
    S = cosine_similarity_matrix(e)
    per_class = {}
    pooled = []
    for c in np.unique(labels).tolist():
        idx = np.flatnonzero(labels == c)
        if len(idx) < 2:
            continue
        iu = np.triu_indices(len(idx), k=1)
        vals = S[np.ix_(idx, idx)][iu]
        per_class[int(c)] = _summarize(vals)
        pooled.append(vals)
    if not pooled:
        raise ConfigError("no class has two or more items")
    return per_class, _summarize(np.concatenate(pooled))


def spread_to_csv(per_class, pooled, path):
    cols = ["class", "num_pairs", "mean", "std"] + [f"p{d}" for d in DECILES]
    with open(path, "w", newline="\n") as fh:
        fh.write(",".join(cols) + "\n")
        for name, s in [*per_class.items(), ("pooled", pooled)]:
            vals = [str(name), str(s.num_pairs), f"{s.mean:.9g}", f"{s.std:.9g}"]
            vals += [f"{v:.9g}" for v in s.deciles]
            fh.write(",".join(vals) + "\n")


def pca_basis(e):
    """Mean and top-two principal directions (rows) of ``e``.

    Each direction's sign is fixed so that its first nonzero loading is
    positive.
    """
    e = np.asarray(e, dtype=np.float64)
    if e.shape[0] < 3:
        raise DegenerateCovariance("PCA needs at least 3 points")
    mean = e.mean(axis=0)
    centered = e - mean
    _, sv, vt = np.linalg.svd(centered, full_matrices=False)
    tol = max(centered.shape) * np.finfo(float).eps * (sv[0] if sv.size else 0.0)
    if sv.size < 2 or sv[1] <= tol:
        raise DegenerateCovariance("embedding has rank < 2 after centering")
    comps = vt[:2].copy()
    for row in comps:
        nz = np.flatnonzero(np.abs(row) > 1e-12)
        if row[nz[0]] < 0:
            row *= -1
    return mean, comps


def pca_project_2d(e):
    mean, comps = pca_basis(e)
    return (np.asarray(e, dtype=np.float64) - mean) @ comps.T


def export_embeddings(e, labels, path, format=None):
    """Write embeddings in the CSV or EMB1 feature format."""
    return write_features(path, e, labels, format=format)
