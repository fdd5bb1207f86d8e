import os
from pathlib import Path

import numpy as np
import pytest

from mmfrec.config import TrainConfig, Variant
from mmfrec.dataset import AttributeCatalog, RatingDataset
from mmfrec.mmf import init_mmf

ML100K_DIR = Path(os.environ.get("MMF_ML100K_DIR", "/root/data/ml-100k"))

_acceptance_lines: list[str] = []


def record_acceptance(line: str):
    _acceptance_lines.append(line)
    print(line)


def pytest_terminal_summary(terminalreporter):
    if _acceptance_lines:
        terminalreporter.section("acceptance criteria")
        for line in _acceptance_lines:
            terminalreporter.write_line(line)


@pytest.fixture
def tiny():
    ds = RatingDataset.from_records(
        [("u1", "i1", 5.0), ("u1", "i2", 3.0), ("u2", "i1", 4.0), ("u2", "i3", 1.0), ("u3", "i2", 2.0)]
    )
    cat = AttributeCatalog.from_rows(
        [("i1", "genre", "Action"), ("i1", "cast", "X"), ("i2", "genre", "Action"),
         ("i2", "genre", "Drama"), ("i3", "cast", "Y")]
    )
    return ds, cat


def random_instance(rng, variant=Variant.FULL, lam=None, lam_weights=0.0):
    """Small fully observed MMF problem whose every user and attribute is touched."""
    n_users = int(rng.integers(1, 6))
    n_items = int(rng.integers(1, 6))
    n_attrs = int(rng.integers(1, 6))
    d = int(rng.integers(1, 5))
    assign = [set() for _ in range(n_items)]
    for k in range(n_attrs):
        assign[int(rng.integers(n_items))].add(k)
    for ks in assign:
        if not ks:
            ks.add(int(rng.integers(n_attrs)))
    # declare attributes in index order so catalog index == k
    rows = [(f"i{j}", "t", f"a{k}") for k in range(n_attrs) for j, ks in enumerate(assign) if k in ks]
    cat = AttributeCatalog.from_rows(rows)
    ds = RatingDataset.from_records(
        (f"u{i}", f"i{j}", float(rng.normal(3, 1))) for i in range(n_users) for j in range(n_items)
    )
    lam = float(rng.uniform(0, 0.5)) if lam is None else lam
    cfg = TrainConfig(dim=d, lam=lam, lam_weights=lam_weights, seed=int(rng.integers(2**32)))
    m = init_mmf(ds, cat, cfg, variant)
    m.U = rng.normal(size=m.U.shape)
    m.F = rng.normal(size=m.F.shape)
    if variant.trains_omega:
        m.W = rng.uniform(0.2, 2.0, size=m.W.shape)
    if variant.trains_theta:
        for j in range(len(m.item_ids)):
            ks = m.attrs_of(j)
            m.T[j, ks] = rng.uniform(0.2, 2.0, size=len(ks))
    return m, ds, cat


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
