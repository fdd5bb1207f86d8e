"""Rating datasets, attribute catalogs, density statistics and splits."""

from __future__ import annotations

import csv
import json
import logging
import math
from collections.abc import Iterable, Sequence
from dataclasses import asdict, dataclass, field
from functools import cached_property
from pathlib import Path

import numpy as np

from .errors import (
    ConfigError,
    ConsistencyError,
    DataFormatError,
    EmptyDatasetError,
    UndefinedDensityError,
)

logger = logging.getLogger(__name__)

ATTRIBUTE_HEADER = ("item_id", "type", "value")
_CSV_HEADERS = {
    ("user", "item", "rating"),
    ("user_id", "item_id", "rating"),
    ("user_id", "movie_id", "rating"),
}


def _frozen(a, dtype):
    a = np.array(a, dtype=dtype)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class RatingDataset:
    """Observed (user, item, rating) triples with dense index maps.

    ``users[r]``/``items[r]`` index into ``user_ids``/``item_ids``; both id
    lists are in first-appearance order and cover exactly the ids present in
    the records.
    """

    user_ids: tuple[str, ...]
    item_ids: tuple[str, ...]
    users: np.ndarray
    items: np.ndarray
    ratings: np.ndarray
    n_duplicates: int = field(default=0)

    def __post_init__(self):
        object.__setattr__(self, "users", _frozen(self.users, np.int64))
        object.__setattr__(self, "items", _frozen(self.items, np.int64))
        object.__setattr__(self, "ratings", _frozen(self.ratings, np.float64))
        n = len(self.ratings)
        if len(self.users) != n or len(self.items) != n:
            raise ValueError("users, items and ratings must have equal length")
        if not np.all(np.isfinite(self.ratings)):
            raise ValueError("ratings must be finite")
        if n:
            if self.users.min() < 0 or self.users.max() >= len(self.user_ids):
                raise ValueError("user index out of range")
            if self.items.min() < 0 or self.items.max() >= len(self.item_ids):
                raise ValueError("item index out of range")
        keys = self.users * max(len(self.item_ids), 1) + self.items
        if len(np.unique(keys)) != n:
            raise ValueError("duplicate (user, item) pair")
        if len(set(self.user_ids)) != len(self.user_ids) or len(set(self.item_ids)) != len(
            self.item_ids
        ):
            raise ValueError("index maps must be bijections")
        if n and (
            len(np.unique(self.users)) != len(self.user_ids)
            or len(np.unique(self.items)) != len(self.item_ids)
        ):
            raise ValueError("index maps must cover exactly the ids in the records")

    @classmethod
    def from_records(cls, records: Iterable[tuple[str, str, float]]) -> RatingDataset:
        """Build from triples; a repeated (user, item) pair keeps the last rating."""
        merged: dict[tuple[str, str], float] = {}
        n_dup = 0
        for u, i, r in records:
            key = (str(u), str(i))
            if key in merged:
                n_dup += 1
            merged[key] = float(r)
        user_pos: dict[str, int] = {}
        item_pos: dict[str, int] = {}
        users, items, ratings = [], [], []
        for (u, i), r in merged.items():
            users.append(user_pos.setdefault(u, len(user_pos)))
            items.append(item_pos.setdefault(i, len(item_pos)))
            ratings.append(r)
        if n_dup:
            logger.warning("dropped %d duplicate ratings (last occurrence kept)", n_dup)
        return cls(tuple(user_pos), tuple(item_pos), users, items, ratings, n_dup)

    def __len__(self):
        return len(self.ratings)

    @property
    def n_users(self) -> int:
        return len(self.user_ids)

    @property
    def n_items(self) -> int:
        return len(self.item_ids)

    @cached_property
    def user_index(self) -> dict[str, int]:
        return {u: i for i, u in enumerate(self.user_ids)}

    @cached_property
    def item_index(self) -> dict[str, int]:
        return {j: i for i, j in enumerate(self.item_ids)}

    @property
    def records(self) -> list[tuple[str, str, float]]:
        return [
            (self.user_ids[u], self.item_ids[i], float(r))
            for u, i, r in zip(self.users, self.items, self.ratings)
        ]

    @property
    def global_mean(self) -> float:
        if not len(self):
            raise EmptyDatasetError("empty dataset has no mean rating")
        return float(self.ratings.mean())

    def subset(self, rows) -> RatingDataset:
        """Dataset made of the selected rows (boolean mask or index array), reindexed."""
        rows = np.asarray(rows)
        if rows.dtype == bool:
            rows = np.flatnonzero(rows)
        return RatingDataset.from_records(
            (self.user_ids[self.users[r]], self.item_ids[self.items[r]], self.ratings[r])
            for r in rows
        )

    def same_records(self, other: RatingDataset) -> bool:
        return self.records == other.records


def _sniff_format(first_line: str) -> str:
    return "tsv" if "\t" in first_line else "csv"


def load_ratings(path, format: str | None = None) -> RatingDataset:
    """Read a ratings file.

    ``format`` is ``"tsv"`` (MovieLens ``u.data``: user, item, rating and an
    ignored timestamp column) or ``"csv"`` (``user,item,rating``, optional
    header). ``None`` picks by the presence of a tab on the first line.
    """
    path = Path(path)
    text = path.read_text(encoding="utf-8")
    lines = text.splitlines()
    if not any(line.strip() for line in lines):
        raise EmptyDatasetError(f"{path}: no ratings")
    if format is None:
        format = _sniff_format(next(line for line in lines if line.strip()))
    if format in ("tsv", "tsv-4col"):
        sep = "\t"
    elif format in ("csv", "csv-3col"):
        sep = ","
    else:
        raise ConfigError(f"unknown ratings format {format!r}")

    records = []
    for lineno, line in enumerate(lines, start=1):
        if not line.strip():
            continue
        parts = [p.strip() for p in line.split(sep)]
        if sep == "," and lineno == 1 and tuple(p.lower() for p in parts[:3]) in _CSV_HEADERS:
            continue
        if len(parts) not in (3, 4):
            raise DataFormatError(f"expected 3 or 4 columns, got {len(parts)}", path, lineno)
        try:
            rating = float(parts[2])
        except ValueError:
            raise DataFormatError(f"bad rating {parts[2]!r} in row {line!r}", path, lineno) from None
        if not math.isfinite(rating):
            raise DataFormatError(f"non-finite rating in row {line!r}", path, lineno)
        if not parts[0] or not parts[1]:
            raise DataFormatError(f"empty id in row {line!r}", path, lineno)
        records.append((parts[0], parts[1], rating))
    if not records:
        raise EmptyDatasetError(f"{path}: no ratings")
    return RatingDataset.from_records(records)


def save_ratings(ds: RatingDataset, path) -> None:
    """Write ``user<TAB>item<TAB>rating``; ``load_ratings`` reads it back exactly."""
    with open(path, "w", encoding="utf-8", newline="") as fh:
        for u, i, r in ds.records:
            fh.write(f"{u}\t{i}\t{r!r}\n")


class AttributeCatalog:
    """Typed item attributes.

    Attributes are keyed by ``(type, value)`` so that the same value under two
    types yields two attributes. ``attributes[k]`` is the key of global
    attribute index ``k``; ``item_attrs[item_id]`` is the duplicate-free
    tuple of indices making up that item's attribute set.
    """

    def __init__(
        self,
        types: Sequence[str],
        attributes: Sequence[tuple[str, str]],
        item_attrs: dict[str, Sequence[int]],
    ):
        self.types = tuple(types)
        self.attributes = tuple((str(t), str(v)) for t, v in attributes)
        if len(set(self.types)) != len(self.types):
            raise ConsistencyError("duplicate attribute type")
        type_set = set(self.types)
        self.attr_index: dict[tuple[str, str], int] = {}
        for k, key in enumerate(self.attributes):
            if key[0] not in type_set:
                raise ConsistencyError(f"attribute {key!r} has undeclared type")
            if key in self.attr_index:
                raise ConsistencyError(f"attribute {key!r} assigned two indices")
            self.attr_index[key] = k
        n = len(self.attributes)
        self.item_attrs: dict[str, tuple[int, ...]] = {}
        for item, ks in item_attrs.items():
            ks = tuple(int(k) for k in ks)
            if any(k < 0 or k >= n for k in ks):
                raise ConsistencyError(f"item {item!r} references unknown attribute")
            if len(set(ks)) != len(ks):
                raise ConsistencyError(f"item {item!r} lists an attribute twice")
            self.item_attrs[str(item)] = ks
        self.attr_type = np.array([self.types.index(t) for t, _ in self.attributes], dtype=np.int64)

    @classmethod
    def from_rows(cls, rows: Iterable[tuple[str, str, str]]) -> AttributeCatalog:
        types: dict[str, None] = {}
        index: dict[tuple[str, str], int] = {}
        items: dict[str, list[int]] = {}
        for item, typ, value in rows:
            types.setdefault(typ)
            k = index.setdefault((typ, value), len(index))
            ks = items.setdefault(item, [])
            if k not in ks:
                ks.append(k)
        return cls(list(types), list(index), items)

    def rows(self):
        for item, ks in self.item_attrs.items():
            for k in ks:
                t, v = self.attributes[k]
                yield item, t, v

    def __len__(self):
        return len(self.attributes)

    @property
    def n_attributes(self) -> int:
        return len(self.attributes)

    def attrs_of(self, item_id: str) -> tuple[int, ...]:
        return self.item_attrs.get(item_id, ())

    def type_of(self, k: int) -> str:
        return self.attributes[k][0]

    def items_without_attributes(self, item_ids: Iterable[str]) -> list[str]:
        """Diagnostics: the given items whose attribute set is empty."""
        return [j for j in item_ids if not self.item_attrs.get(j)]

    def without_types(self, names: Iterable[str]) -> AttributeCatalog:
        drop = set(names)
        return AttributeCatalog.from_rows(r for r in self.rows() if r[1] not in drop)

    def with_rows(self, extra: Iterable[tuple[str, str, str]]) -> AttributeCatalog:
        return AttributeCatalog.from_rows(list(self.rows()) + list(extra))


def load_attributes(path) -> AttributeCatalog:
    """Read a ``item_id,type,value`` CSV into a catalog."""
    path = Path(path)
    with open(path, encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            return AttributeCatalog([], [], {})
        header = tuple(h.strip() for h in header)
        if header != ATTRIBUTE_HEADER:
            raise DataFormatError(
                f"header must be {','.join(ATTRIBUTE_HEADER)}, got {','.join(header)}", path, 1
            )
        rows = []
        for lineno, row in enumerate(reader, start=2):
            if not row or not any(c.strip() for c in row):
                continue
            if len(row) != 3:
                raise DataFormatError(f"expected 3 columns, got {len(row)}", path, lineno)
            item, typ, value = (c.strip() for c in row)
            if not item or not typ or not value:
                raise DataFormatError("empty field", path, lineno)
            rows.append((item, typ, value))
    return AttributeCatalog.from_rows(rows)


def save_attributes(cat: AttributeCatalog, path) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(ATTRIBUTE_HEADER)
        w.writerows(cat.rows())


def compute_rate(ds: RatingDataset) -> float:
    """Rating density: number of ratings over (items x users)."""
    if ds.n_users == 0 or ds.n_items == 0:
        raise UndefinedDensityError("density undefined without users and items")
    return len(ds) / (ds.n_items * ds.n_users)


def compute_dense_rate(cat: AttributeCatalog, items: Iterable[str]) -> float:
    """Attribute density over ``items``.

    For every attribute type, the mean number of that type's attributes per
    item divided by the number of distinct attributes of the type seen in
    ``items``, then averaged over types. Types absent from ``items`` do not
    count.
    """
    items = list(dict.fromkeys(items))
    if not items:
        raise UndefinedDensityError("no items")
    n_types = len(cat.types)
    counts = np.zeros(n_types)
    distinct: list[set[int]] = [set() for _ in range(n_types)]
    for j in items:
        for k in cat.attrs_of(j):
            t = cat.attr_type[k]
            counts[t] += 1
            distinct[t].add(k)
    ratios = [counts[t] / len(items) / len(distinct[t]) for t in range(n_types) if distinct[t]]
    if not ratios:
        raise UndefinedDensityError("no attributes on the given items")
    return float(np.mean(ratios))


@dataclass(frozen=True)
class SplitSpec:
    kind: str = "random"
    test_fraction: float | None = None
    seed: int = 0

    def __post_init__(self):
        if self.kind not in ("random", "item-cold-start"):
            raise ConfigError(f"unknown split kind {self.kind!r}")
        if self.test_fraction is None:
            object.__setattr__(self, "test_fraction", 0.2 if self.kind == "random" else 0.1)
        f = self.test_fraction
        if not (isinstance(f, (int, float)) and 0.0 < f < 1.0):
            raise ConfigError(f"test_fraction must lie in (0, 1), got {f!r}")
        if not (isinstance(self.seed, int) and 0 <= self.seed < 2**64):
            raise ConfigError("seed must be a 64-bit unsigned integer")

    def to_dict(self):
        return asdict(self)


def _round_half_up(x: float) -> int:
    return int(math.floor(x + 0.5))


def split(ds: RatingDataset, spec: SplitSpec) -> tuple[RatingDataset, RatingDataset]:
    """Partition ``ds`` into (train, test).

    ``random`` holds out ``round(N * fraction)`` records. ``item-cold-start``
    holds out every rating of ``round(n_items * fraction)`` items (at least
    one, at most all but one). Records keep their original relative order.
    """
    if not len(ds):
        raise EmptyDatasetError("cannot split an empty dataset")
    rng = np.random.default_rng(spec.seed)
    test = np.zeros(len(ds), dtype=bool)
    if spec.kind == "random":
        n_test = _round_half_up(len(ds) * spec.test_fraction)
        test[rng.permutation(len(ds))[:n_test]] = True
    else:
        n_pick = _round_half_up(ds.n_items * spec.test_fraction)
        n_pick = min(max(n_pick, 1), max(ds.n_items - 1, 1))
        picked = rng.choice(ds.n_items, size=n_pick, replace=False)
        test = np.isin(ds.items, picked)
    return ds.subset(~test), ds.subset(test)


def save_split(train: RatingDataset, test: RatingDataset, spec: SplitSpec, directory) -> None:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    save_ratings(train, directory / "train.tsv")
    save_ratings(test, directory / "test.tsv")
    sidecar = {"split": spec.to_dict(), "n_train": len(train), "n_test": len(test)}
    (directory / "split.json").write_text(json.dumps(sidecar, indent=2) + "\n")


def load_split(directory) -> tuple[RatingDataset, RatingDataset, SplitSpec]:
    directory = Path(directory)
    meta = json.loads((directory / "split.json").read_text())
    spec = SplitSpec(**meta["split"])
    return load_ratings(directory / "train.tsv"), load_ratings(directory / "test.tsv"), spec
