"""Attribute-level explanations of MMF predictions."""

from __future__ import annotations

import csv
from collections.abc import Sequence
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from .dataset import AttributeCatalog, RatingDataset
from .errors import NoAttributeError
from .mmf import MmfModel, mmf_predict


@dataclass(frozen=True)
class AttributeContribution:
    index: int
    attribute: str
    type: str
    raw: float
    # share of the signed total; may be negative or exceed 100
    percent: float | None
    # share of the summed magnitudes, always in [0, 100]
    abs_percent: float | None


@dataclass(frozen=True)
class ContributionBreakdown:
    user_id: str
    item_id: str
    prediction: float
    entries: tuple[AttributeContribution, ...]

    def to_dict(self):
        return {
            "user_id": self.user_id,
            "item_id": self.item_id,
            "prediction": self.prediction,
            "entries": [asdict(e) for e in self.entries],
        }


def contribution_breakdown(m: MmfModel, i: int, j: int) -> ContributionBreakdown:
    """Split the prediction for (user ``i``, item ``j``) into per-attribute terms.

    Raw terms sum to the prediction. ``percent`` is undefined (None) when the
    prediction is exactly 0, ``abs_percent`` when every term is 0.
    """
    ks = m.attrs_of(j)
    if len(ks) == 0:
        raise NoAttributeError(f"item {m.item_ids[j]!r} has no attributes to explain")
    raw = m.W[i, ks] * m.T[j, ks] * (m.F[ks] @ m.U[i]) / len(ks)
    total = float(raw.sum())
    mag = float(np.abs(raw).sum())
    entries = []
    for k, r in zip(ks.tolist(), raw.tolist()):
        typ, value = m.attributes[k]
        entries.append(
            AttributeContribution(
                index=k,
                attribute=value,
                type=typ,
                raw=r,
                percent=100.0 * r / total if total != 0.0 else None,
                abs_percent=100.0 * abs(r) / mag if mag != 0.0 else None,
            )
        )
    return ContributionBreakdown(m.user_ids[i], m.item_ids[j], mmf_predict(m, i, j), tuple(entries))


def nearest_attributes(m: MmfModel, k_attr: int, k: int, candidates=None) -> list[int]:
    """The ``k`` attributes closest to ``k_attr`` in latent space.

    Euclidean distance between rows of ``F``; ties go to the lower index and
    the query itself is never returned. ``candidates`` (indices or a boolean
    mask) restricts the pool; fewer than ``k`` come back if it is smaller.
    """
    if k <= 0:
        raise ValueError("k must be positive")
    if k >= m.n_attributes:
        raise ValueError(f"k={k} must be below the attribute count {m.n_attributes}")
    if not 0 <= k_attr < m.n_attributes:
        raise IndexError(f"attribute index {k_attr} out of range")
    if candidates is None:
        pool = np.arange(m.n_attributes)
    else:
        candidates = np.asarray(candidates)
        pool = np.flatnonzero(candidates) if candidates.dtype == bool else np.unique(candidates)
    pool = pool[pool != k_attr]
    dist = np.sqrt(np.sum((m.F[pool] - m.F[k_attr]) ** 2, axis=1))
    order = np.lexsort((pool, dist))
    return pool[order[:k]].tolist()


def attribute_neighborhood(m: MmfModel, k_attr: int, k: int = 5) -> list[int]:
    """Query attribute plus its ``k`` nearest trained attributes of the same type."""
    same = np.array([t == m.attr_type(k_attr) for t, _ in m.attributes]) & m.trained_attrs
    same[k_attr] = False
    if not same.any():
        return [k_attr]
    return [k_attr] + nearest_attributes(m, k_attr, min(k, m.n_attributes - 1), candidates=same)


def aad(
    m: MmfModel, ds: RatingDataset, cat: AttributeCatalog, i: int, k_attr: int, k: int = 5
) -> float | None:
    """Attribute-aware rating difference of user ``i`` for attribute ``k_attr``.

    Mean of the user's ratings in ``ds`` on items holding any attribute of
    the neighborhood, minus the user's overall mean rating. Returns None
    when no rated item holds a neighborhood attribute.
    """
    user_id = m.user_ids[i]
    if user_id not in ds.user_index:
        raise ValueError(f"user {user_id!r} has no ratings")
    rows = np.flatnonzero(ds.users == ds.user_index[user_id])
    hood = {m.attributes[a] for a in attribute_neighborhood(m, k_attr, k)}
    hit = []
    for r in rows:
        keys = {cat.attributes[a] for a in cat.attrs_of(ds.item_ids[ds.items[r]])}
        hit.append(bool(keys & hood))
    hit = np.array(hit, dtype=bool)
    if not hit.any():
        return None
    # offsets from a shared reference keep constant-rating users at exactly 0
    dev = ds.ratings[rows] - ds.ratings[rows[0]]
    return float(dev[hit].mean() - dev.mean())


def pearson(x: Sequence[float], y: Sequence[float]) -> float | None:
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.size < 2:
        return None
    dx = x - x.mean()
    dy = y - y.mean()
    den = np.sqrt((dx @ dx) * (dy @ dy))
    if den == 0.0:
        return None
    return float(np.clip((dx @ dy) / den, -1.0, 1.0))


def contribution_aad_correlation(
    breakdown: ContributionBreakdown, aads: Sequence[float | None], use_abs: bool = False
) -> float | None:
    """Pearson correlation between attribute shares and their AADs.

    Entries whose AAD or share is undefined are skipped; None means fewer
    than two usable pairs or no variance.
    """
    if len(aads) != len(breakdown.entries):
        raise ValueError("one AAD per breakdown entry expected")
    pairs = []
    for e, a in zip(breakdown.entries, aads):
        share = e.abs_percent if use_abs else e.percent
        if a is not None and share is not None and np.isfinite(a):
            pairs.append((share, a))
    if len(pairs) < 2:
        return None
    x, y = zip(*pairs)
    return pearson(x, y)


def explain(
    m: MmfModel, ds: RatingDataset, cat: AttributeCatalog, user_id: str, item_id: str, k: int = 5
) -> dict:
    """Explanation report for one (user, item) pair, ready for JSON."""
    if user_id not in m.user_index:
        raise KeyError(f"unknown user {user_id!r}")
    if item_id not in m.item_index:
        raise KeyError(f"unknown item {item_id!r}")
    i, j = m.user_index[user_id], m.item_index[item_id]
    bd = contribution_breakdown(m, i, j)
    hoods, aads = [], []
    for e in bd.entries:
        hood = attribute_neighborhood(m, e.index, k)
        hoods.append({"attribute": e.attribute, "type": e.type,
                      "neighbors": [list(m.attributes[a]) for a in hood[1:]]})
        aads.append(aad(m, ds, cat, i, e.index, k))
    return {
        "breakdown": bd.to_dict(),
        "neighborhoods": hoods,
        "aad": [{"attribute": e.attribute, "type": e.type, "aad": a} for e, a in zip(bd.entries, aads)],
        "correlation": contribution_aad_correlation(bd, aads),
        "correlation_abs": contribution_aad_correlation(bd, aads, use_abs=True),
        "k": k,
    }


def export_vectors(m: MmfModel, path, which: str = "attributes", ids=None) -> int:
    """Write latent vectors as ``id,type,v1..vd`` CSV; returns the row count.

    ``which`` is ``"attributes"`` (id is the attribute value, type its
    attribute type; only trained attributes by default) or ``"users"``.
    ``ids`` selects a subset: model indices, or ``(type, value)`` keys /
    user ids.
    """
    if which == "attributes":
        if ids is None:
            rows = np.flatnonzero(m.trained_attrs).tolist()
        else:
            rows = [m.attr_index[tuple(x)] if not isinstance(x, (int, np.integer)) else int(x) for x in ids]
        labels = [m.attributes[k] for k in rows]
        mat = m.F
    elif which == "users":
        if ids is None:
            rows = list(range(len(m.user_ids)))
        else:
            rows = [m.user_index[x] if isinstance(x, str) else int(x) for x in ids]
        labels = [("user", m.user_ids[i]) for i in rows]
        mat = m.U
    else:
        raise ValueError(f"unknown vector kind {which!r}")
    with open(Path(path), "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["id", "type"] + [f"v{c + 1}" for c in range(m.dim)])
        for row, (typ, value) in zip(rows, labels):
            w.writerow([value, typ] + [repr(float(x)) for x in mat[row]])
    return len(rows)


def load_vectors(path):
    """Inverse of ``export_vectors``: (ids, types, matrix)."""
    with open(Path(path), encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        d = len(header) - 2
        ids, types, vecs = [], [], []
        for row in reader:
            ids.append(row[0])
            types.append(row[1])
            vecs.append([float(x) for x in row[2:]])
    return ids, types, np.array(vecs, dtype=np.float64).reshape(len(ids), d)
