"""Multi-matrix factorization.

A rating is the mean over the item's attributes of
``omega[i, k] * theta[j, k] * (u_i . f_k)``: a user-specific preference
weight times an item-specific performance weight times the user's latent
affinity for the attribute.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from .config import TrainConfig, Variant
from .dataset import AttributeCatalog, RatingDataset
from .errors import DivergenceError, EmptyDatasetError, NoAttributeError
from .mf import init_rng, shuffle_rng, uniform_init

logger = logging.getLogger(__name__)


@dataclass
class MmfModel:
    """Fitted (or initialized) MMF parameters bound to an attribute layout.

    ``attributes`` lists the ``(type, value)`` key of each row of ``F``.
    ``item_ptr``/``item_attr`` hold, in CSR form, the attributes each item
    is predicted from: the catalog's attributes for that item restricted to
    those seen during training. Items left with none fall back to
    ``global_mean``.
    """

    U: np.ndarray
    F: np.ndarray
    W: np.ndarray
    T: np.ndarray
    user_ids: tuple[str, ...]
    item_ids: tuple[str, ...]
    attributes: tuple[tuple[str, str], ...]
    item_ptr: np.ndarray
    item_attr: np.ndarray
    variant: Variant = Variant.FULL
    lam: float = 0.0
    lam_weights: float = 0.0
    global_mean: float = 0.0
    trained_attrs: np.ndarray | None = None
    loss_trace: list[float] = field(default_factory=list)

    kind = "mmf"

    def __post_init__(self):
        for name in ("U", "F", "W", "T"):
            setattr(self, name, np.ascontiguousarray(getattr(self, name), dtype=np.float64))
        self.item_ptr = np.ascontiguousarray(self.item_ptr, dtype=np.int64)
        self.item_attr = np.ascontiguousarray(self.item_attr, dtype=np.int64)
        self.user_ids = tuple(self.user_ids)
        self.item_ids = tuple(self.item_ids)
        self.attributes = tuple((str(t), str(v)) for t, v in self.attributes)
        self.variant = Variant.parse(self.variant)
        nu, na, ni, d = len(self.user_ids), len(self.attributes), len(self.item_ids), self.U.shape[1]
        if (
            self.U.shape != (nu, d)
            or self.F.shape != (na, d)
            or self.W.shape != (nu, na)
            or self.T.shape != (ni, na)
            or self.item_ptr.shape != (ni + 1,)
        ):
            raise ValueError("parameter shapes do not match the index maps")
        if self.trained_attrs is None:
            self.trained_attrs = np.zeros(na, dtype=bool)
            self.trained_attrs[self.item_attr] = True
        self.trained_attrs = np.asarray(self.trained_attrs, dtype=bool)
        self.user_index = {u: i for i, u in enumerate(self.user_ids)}
        self.item_index = {j: i for i, j in enumerate(self.item_ids)}
        self.attr_index = {a: k for k, a in enumerate(self.attributes)}

    @property
    def dim(self) -> int:
        return self.U.shape[1]

    @property
    def n_attributes(self) -> int:
        return len(self.attributes)

    def attrs_of(self, j: int) -> np.ndarray:
        return self.item_attr[self.item_ptr[j] : self.item_ptr[j + 1]]

    def attr_type(self, k: int) -> str:
        return self.attributes[k][0]

    def copy(self) -> MmfModel:
        return MmfModel(
            self.U.copy(), self.F.copy(), self.W.copy(), self.T.copy(),
            self.user_ids, self.item_ids, self.attributes,
            self.item_ptr.copy(), self.item_attr.copy(), self.variant,
            self.lam, self.lam_weights, self.global_mean,
            self.trained_attrs.copy(), list(self.loss_trace),
        )

    def predict(self, i: int, j: int) -> float:
        return mmf_predict(self, i, j)

    def predict_indices(self, users, items) -> np.ndarray:
        return _kernels.mmf_predict_batch(
            self.U, self.F, self.W, self.T, self.item_ptr, self.item_attr,
            np.asarray(users, dtype=np.int64), np.asarray(items, dtype=np.int64),
            self.global_mean,
        )

    def encode(self, ds: RatingDataset):
        u = np.array([self.user_index.get(x, -1) for x in ds.user_ids], dtype=np.int64)
        v = np.array([self.item_index.get(x, -1) for x in ds.item_ids], dtype=np.int64)
        return u[ds.users], v[ds.items]

    def predict_dataset(self, ds: RatingDataset):
        """Predictions for every record of ``ds`` plus a mask of fallback rows.

        Unknown users, unknown items and items without usable attributes are
        predicted as the training mean.
        """
        users, items = self.encode(ds)
        fallback = (users < 0) | (items < 0)
        counts = np.diff(self.item_ptr)
        fallback[~fallback] = counts[items[~fallback]] == 0
        preds = np.full(len(ds), self.global_mean)
        ok = ~fallback
        preds[ok] = self.predict_indices(users[ok], items[ok])
        return preds, fallback


def _check_index(m: MmfModel, i: int, j: int):
    if not (0 <= i < len(m.user_ids)) or not (0 <= j < len(m.item_ids)):
        raise IndexError(f"index ({i}, {j}) out of range")


def mmf_predict(m: MmfModel, i: int, j: int) -> float:
    """Predicted rating of user ``i`` for item ``j``; the training mean if ``j`` has no attributes."""
    _check_index(m, i, j)
    ks = m.attrs_of(j)
    if len(ks) == 0:
        return m.global_mean
    dots = m.F[ks] @ m.U[i]
    return float(np.sum(m.W[i, ks] * m.T[j, ks] * dots) / len(ks))


def item_embedding(m: MmfModel, i: int, j: int) -> np.ndarray:
    """Weighted mean of item ``j``'s attribute vectors, as seen by user ``i``.

    Its inner product with ``U[i]`` is the predicted rating.
    """
    _check_index(m, i, j)
    ks = m.attrs_of(j)
    if len(ks) == 0:
        raise NoAttributeError(f"item {m.item_ids[j]!r} has no attributes")
    w = m.W[i, ks] * m.T[j, ks]
    return (w[:, None] * m.F[ks]).sum(axis=0) / len(ks)


def _aligned(m: MmfModel, ds: RatingDataset):
    users, items = m.encode(ds)
    if np.any(users < 0) or np.any(items < 0):
        raise IndexError("dataset contains ids unknown to the model")
    return users, items


def mmf_loss(m: MmfModel, ds: RatingDataset) -> float:
    """Squared error over observed ratings plus ``lam * (|U|^2 + |F|^2)``.

    The weights are unpenalized unless ``m.lam_weights > 0``, in which case
    ``lam_weights * (|W - 1|^2 + |T - 1|^2)`` is added.
    """
    users, items = _aligned(m, ds)
    resid = ds.ratings - m.predict_indices(users, items)
    loss = resid @ resid + m.lam * (np.sum(m.U**2) + np.sum(m.F**2))
    if m.lam_weights:
        loss += m.lam_weights * (np.sum((m.W - 1.0) ** 2) + np.sum((m.T - 1.0) ** 2))
    return float(loss)


@dataclass
class GradientBundle:
    dU: np.ndarray
    dF: np.ndarray
    dW: np.ndarray
    dT: np.ndarray


def mmf_gradients(m: MmfModel, users, items, ratings) -> GradientBundle:
    """Gradient of the batch loss for records given in model index space.

    The batch loss is the squared error over the records plus the penalty
    on rows of ``U`` and ``F`` (and, when enabled, weight entries) that the
    batch touches. Weight families frozen by ``m.variant`` get zeros.
    """
    dU = np.zeros_like(m.U)
    dF = np.zeros_like(m.F)
    dW = np.zeros_like(m.W)
    dT = np.zeros_like(m.T)
    train_w = m.variant.trains_omega
    train_t = m.variant.trains_theta
    touched_u, touched_f, touched_w, touched_t = set(), set(), set(), set()
    for i, j, x in zip(users, items, ratings):
        ks = m.attrs_of(j)
        if len(ks) == 0:
            continue
        n = len(ks)
        dots = m.F[ks] @ m.U[i]
        wt = m.W[i, ks] * m.T[j, ks]
        resid = x - np.sum(wt * dots) / n
        g = -2.0 * resid / n
        dU[i] += g * (wt @ m.F[ks])
        dF[ks] += g * np.outer(wt, m.U[i])
        touched_u.add(i)
        touched_f.update(ks.tolist())
        if train_w:
            dW[i, ks] += g * m.T[j, ks] * dots
            touched_w.update((i, k) for k in ks.tolist())
        if train_t:
            dT[j, ks] += g * m.W[i, ks] * dots
            touched_t.update((j, k) for k in ks.tolist())
    for i in touched_u:
        dU[i] += 2.0 * m.lam * m.U[i]
    for k in touched_f:
        dF[k] += 2.0 * m.lam * m.F[k]
    if m.lam_weights:
        for i, k in touched_w:
            dW[i, k] += 2.0 * m.lam_weights * (m.W[i, k] - 1.0)
        for j, k in touched_t:
            dT[j, k] += 2.0 * m.lam_weights * (m.T[j, k] - 1.0)
    return GradientBundle(dU, dF, dW, dT)


def _layout(ds: RatingDataset, cat: AttributeCatalog):
    item_ids = list(ds.item_ids)
    known = set(item_ids)
    item_ids += [j for j in cat.item_attrs if j not in known]
    trained = np.zeros(cat.n_attributes, dtype=bool)
    for j in ds.item_ids:
        trained[list(cat.attrs_of(j))] = True
    ptr = [0]
    flat: list[int] = []
    for j in item_ids:
        flat.extend(k for k in cat.attrs_of(j) if trained[k])
        ptr.append(len(flat))
    return item_ids, trained, np.array(ptr, dtype=np.int64), np.array(flat, dtype=np.int64)


def init_mmf(
    ds: RatingDataset, cat: AttributeCatalog, config: TrainConfig, variant=Variant.FULL
) -> MmfModel:
    """Random latent matrices, all-ones weights.

    The model's items are ``ds``'s items followed by catalog-only items, so
    that never-rated items can still be scored from shared attributes.
    """
    item_ids, trained, ptr, flat = _layout(ds, cat)
    rng = init_rng(config.seed)
    U = uniform_init(rng, (ds.n_users, config.dim), config.dim)
    F = uniform_init(rng, (cat.n_attributes, config.dim), config.dim)
    W = np.ones((ds.n_users, cat.n_attributes))
    T = np.ones((len(item_ids), cat.n_attributes))
    mean = ds.global_mean if len(ds) else 0.0
    return MmfModel(
        U, F, W, T, ds.user_ids, item_ids, cat.attributes, ptr, flat,
        Variant.parse(variant), config.lam, config.lam_weights, mean, trained,
    )


def mmf_fit(
    ds: RatingDataset,
    cat: AttributeCatalog,
    config: TrainConfig,
    variant=Variant.FULL,
    init: MmfModel | None = None,
    callback=None,
) -> MmfModel:
    """Mini-batch SGD on the MMF loss.

    ``init`` (copied) must have been built for ``ds`` and ``cat``, e.g. by
    ``init_mmf``. Weight families frozen by ``variant`` stay at exactly 1.
    """
    if not len(ds):
        raise EmptyDatasetError("cannot fit an empty dataset")
    variant = Variant.parse(variant)
    model = init_mmf(ds, cat, config, variant) if init is None else init.copy()
    if model.user_ids != ds.user_ids or model.item_ids[: ds.n_items] != ds.item_ids:
        raise ValueError("initial model index maps differ from the dataset")
    if (not variant.trains_omega and np.any(model.W != 1.0)) or (
        not variant.trains_theta and np.any(model.T != 1.0)
    ):
        raise ValueError(f"variant {variant.value} requires frozen weights equal to 1")
    model.variant = variant
    model.lam = config.lam
    model.lam_weights = config.lam_weights
    model.global_mean = ds.global_mean
    model.loss_trace = []

    n_missing = int(np.sum(np.diff(model.item_ptr)[: ds.n_items] == 0))
    if n_missing:
        logger.warning("%d training items have no attributes; their ratings are not fitted", n_missing)

    rng = shuffle_rng(config.seed)
    users = np.ascontiguousarray(ds.users)
    items = np.ascontiguousarray(ds.items)
    ratings = np.ascontiguousarray(ds.ratings)
    nu, ni, na = model.W.shape[0], model.T.shape[0], model.F.shape[0]
    max_m = int(np.max(np.diff(model.item_ptr), initial=0))
    scratch = (
        np.zeros_like(model.U),
        np.zeros_like(model.F),
        np.zeros_like(model.W) if variant.trains_omega else np.zeros((nu, 0)),
        np.zeros_like(model.T) if variant.trains_theta else np.zeros((ni, 0)),
        np.zeros(nu, dtype=np.bool_),
        np.zeros(na, dtype=np.bool_),
        np.zeros(model.W.shape if variant.trains_omega else (nu, na), dtype=np.bool_),
        np.zeros(model.T.shape if variant.trains_theta else (ni, na), dtype=np.bool_),
        np.zeros(max(max_m, 1)),
    )
    for epoch in range(1, config.epochs + 1):
        order = rng.permutation(len(ds)) if config.shuffle else np.arange(len(ds))
        _kernels.mmf_epoch(
            model.U, model.F, model.W, model.T, model.item_ptr, model.item_attr,
            users, items, ratings, order, config.learning_rate, config.lam,
            config.lam_weights, config.batch, variant.trains_omega, variant.trains_theta,
            *scratch,
        )
        finite = all(np.all(np.isfinite(a)) for a in (model.U, model.F, model.W, model.T))
        loss = mmf_loss(model, ds) if finite else np.nan
        if not np.isfinite(loss):
            raise DivergenceError(epoch, loss)
        model.loss_trace.append(loss)
        logger.debug("mmf epoch %d loss %.6f", epoch, loss)
        if callback is not None:
            callback(epoch, model)
    return model
