"""Planted-model data for recovery, ablation and cold-start checks."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .dataset import AttributeCatalog, RatingDataset


@dataclass
class PlantedMMF:
    ratings: RatingDataset
    catalog: AttributeCatalog
    U: np.ndarray
    F: np.ndarray
    W: np.ndarray
    T: np.ndarray
    item_attrs: list[np.ndarray]


def planted_mmf(
    n_users: int,
    n_items: int,
    n_attrs: int,
    dim: int,
    attrs_per_item: tuple[int, int] = (2, 4),
    density: float = 1.0,
    weight_spread: float = 0.5,
    n_types: int = 1,
    noise: float = 0.0,
    offset: float = 0.0,
    seed: int = 0,
) -> PlantedMMF:
    """Ratings generated by an MMF model with random parameters.

    Latent entries are N(0, 1/sqrt(dim)) so attribute ratings have unit
    scale; weights are uniform on ``1 +/- weight_spread`` (all ones when the
    spread is 0). Each item draws between ``attrs_per_item`` attributes
    without replacement; each (user, item) pair is observed with
    probability ``density``.
    """
    rng = np.random.default_rng(seed)
    scale = 1.0 / np.sqrt(np.sqrt(dim))
    U = rng.normal(0.0, scale, (n_users, dim))
    F = rng.normal(0.0, scale, (n_attrs, dim))
    W = 1.0 + weight_spread * rng.uniform(-1.0, 1.0, (n_users, n_attrs))
    T = 1.0 + weight_spread * rng.uniform(-1.0, 1.0, (n_items, n_attrs))
    lo, hi = attrs_per_item
    item_attrs = [
        np.sort(rng.choice(n_attrs, size=rng.integers(lo, hi + 1), replace=False)) for _ in range(n_items)
    ]
    attr_type = [f"t{k % n_types}" for k in range(n_attrs)]
    rows = [(f"i{j}", attr_type[k], f"a{k}") for j, ks in enumerate(item_attrs) for k in ks]
    catalog = AttributeCatalog.from_rows(rows)

    observed = rng.random((n_users, n_items)) < density
    records = []
    for i in range(n_users):
        for j in range(n_items):
            if not observed[i, j]:
                continue
            ks = item_attrs[j]
            r = np.sum(W[i, ks] * T[j, ks] * (F[ks] @ U[i])) / len(ks) + offset
            if noise:
                r += noise * rng.normal()
            records.append((f"u{i}", f"i{j}", float(r)))
    ds = RatingDataset.from_records(records)
    return PlantedMMF(ds, catalog, U, F, W, T, item_attrs)
