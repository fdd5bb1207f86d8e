"""Plain matrix factorization: ratings approximated by ``U @ V.T``."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from .config import TrainConfig
from .dataset import EmptyDatasetError, RatingDataset
from .errors import DivergenceError

logger = logging.getLogger(__name__)


def init_rng(seed: int) -> np.random.Generator:
    return np.random.default_rng([seed, 0])


def shuffle_rng(seed: int) -> np.random.Generator:
    return np.random.default_rng([seed, 1])


def uniform_init(rng, shape, dim):
    return (rng.random(shape) - 0.5) / np.sqrt(dim)


@dataclass
class MfModel:
    U: np.ndarray
    V: np.ndarray
    user_ids: tuple[str, ...]
    item_ids: tuple[str, ...]
    lam: float = 0.0
    global_mean: float = 0.0
    loss_trace: list[float] = field(default_factory=list)

    kind = "mf"

    def __post_init__(self):
        self.U = np.ascontiguousarray(self.U, dtype=np.float64)
        self.V = np.ascontiguousarray(self.V, dtype=np.float64)
        if self.U.shape != (len(self.user_ids), self.V.shape[1]) or self.V.shape[0] != len(self.item_ids):
            raise ValueError("latent matrices do not match the index maps")
        self.user_ids = tuple(self.user_ids)
        self.item_ids = tuple(self.item_ids)
        self.user_index = {u: i for i, u in enumerate(self.user_ids)}
        self.item_index = {j: i for i, j in enumerate(self.item_ids)}

    @property
    def dim(self) -> int:
        return self.U.shape[1]

    def copy(self) -> MfModel:
        return MfModel(
            self.U.copy(), self.V.copy(), self.user_ids, self.item_ids,
            self.lam, self.global_mean, list(self.loss_trace),
        )

    def predict(self, i: int, j: int) -> float:
        return mf_predict(self, i, j)

    def predict_indices(self, users, items) -> np.ndarray:
        return _kernels.mf_predict_batch(
            self.U, self.V, np.asarray(users, dtype=np.int64), np.asarray(items, dtype=np.int64)
        )

    def encode(self, ds: RatingDataset):
        """Map ``ds`` ids to model indices; unknown ids get -1."""
        u = np.array([self.user_index.get(x, -1) for x in ds.user_ids], dtype=np.int64)
        v = np.array([self.item_index.get(x, -1) for x in ds.item_ids], dtype=np.int64)
        return u[ds.users], v[ds.items]

    def predict_dataset(self, ds: RatingDataset):
        """Predictions for every record of ``ds`` plus a mask of fallback rows."""
        users, items = self.encode(ds)
        fallback = (users < 0) | (items < 0)
        preds = np.full(len(ds), self.global_mean)
        ok = ~fallback
        preds[ok] = self.predict_indices(users[ok], items[ok])
        return preds, fallback


def mf_predict(m: MfModel, i: int, j: int) -> float:
    if not (0 <= i < m.U.shape[0]) or not (0 <= j < m.V.shape[0]):
        raise IndexError(f"index ({i}, {j}) out of range")
    return float(m.U[i] @ m.V[j])


def _aligned(m: MfModel, ds: RatingDataset):
    users, items = m.encode(ds)
    if np.any(users < 0) or np.any(items < 0):
        raise IndexError("dataset contains ids unknown to the model")
    return users, items


def mf_loss(m: MfModel, ds: RatingDataset) -> float:
    """Squared error over observed ratings plus ``lam * (|U|^2 + |V|^2)``."""
    users, items = _aligned(m, ds)
    resid = ds.ratings - m.predict_indices(users, items)
    return float(resid @ resid + m.lam * (np.sum(m.U**2) + np.sum(m.V**2)))


def mf_gradients(m: MfModel, users, items, ratings):
    """Gradient of the batch loss with respect to (U, V).

    The batch loss is the squared error of the given records plus the L2
    penalty of the user/item rows they touch.
    """
    dU = np.zeros_like(m.U)
    dV = np.zeros_like(m.V)
    users = np.asarray(users)
    items = np.asarray(items)
    for i, j, x in zip(users, items, ratings):
        e = x - m.U[i] @ m.V[j]
        dU[i] += -2.0 * e * m.V[j]
        dV[j] += -2.0 * e * m.U[i]
    for i in np.unique(users):
        dU[i] += 2.0 * m.lam * m.U[i]
    for j in np.unique(items):
        dV[j] += 2.0 * m.lam * m.V[j]
    return dU, dV


def init_mf(ds: RatingDataset, config: TrainConfig) -> MfModel:
    rng = init_rng(config.seed)
    U = uniform_init(rng, (ds.n_users, config.dim), config.dim)
    V = uniform_init(rng, (ds.n_items, config.dim), config.dim)
    mean = ds.global_mean if len(ds) else 0.0
    return MfModel(U, V, ds.user_ids, ds.item_ids, config.lam, mean)


def mf_fit(ds: RatingDataset, config: TrainConfig, init: MfModel | None = None, callback=None) -> MfModel:
    """Train by SGD over observed ratings.

    ``init`` replaces the random initialization (it is copied, not mutated)
    and must share ``ds``'s index maps. ``callback(epoch, model)`` runs after
    every epoch.
    """
    if not len(ds):
        raise EmptyDatasetError("cannot fit an empty dataset")
    model = init_mf(ds, config) if init is None else init.copy()
    if model.user_ids != ds.user_ids or model.item_ids != ds.item_ids:
        raise ValueError("initial model index maps differ from the dataset")
    model.lam = config.lam
    model.global_mean = ds.global_mean
    model.loss_trace = []
    rng = shuffle_rng(config.seed)
    users = np.ascontiguousarray(ds.users)
    items = np.ascontiguousarray(ds.items)
    ratings = np.ascontiguousarray(ds.ratings)
    dU = np.zeros_like(model.U)
    dV = np.zeros_like(model.V)
    tu = np.zeros(ds.n_users, dtype=np.bool_)
    tv = np.zeros(ds.n_items, dtype=np.bool_)
    for epoch in range(1, config.epochs + 1):
        order = rng.permutation(len(ds)) if config.shuffle else np.arange(len(ds))
        _kernels.mf_epoch(
            model.U, model.V, users, items, ratings, order,
            config.learning_rate, config.lam, config.batch, dU, dV, tu, tv,
        )
        loss = mf_loss(model, ds) if np.all(np.isfinite(model.U)) and np.all(np.isfinite(model.V)) else np.nan
        if not np.isfinite(loss):
            raise DivergenceError(epoch, loss)
        model.loss_trace.append(loss)
        logger.debug("mf epoch %d loss %.6f", epoch, loss)
        if callback is not None:
            callback(epoch, model)
    return model
