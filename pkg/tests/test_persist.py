import json

import numpy as np
import pytest

from mmfrec.config import TrainConfig, Variant
from mmfrec.errors import DataFormatError
from mmfrec.evaluation import evaluate
from mmfrec.mf import mf_fit
from mmfrec.mmf import mmf_fit
from mmfrec.persist import load_model, save_model
from mmfrec.synthetic import planted_mmf


@pytest.fixture
def planted():
    return planted_mmf(15, 10, 8, 3, density=0.7, seed=3)


def test_mf_round_trip(planted, tmp_path):
    m = mf_fit(planted.ratings, TrainConfig(dim=3, epochs=3))
    save_model(m, tmp_path / "m.json")
    back = load_model(tmp_path / "m.json")
    assert np.array_equal(back.U, m.U) and np.array_equal(back.V, m.V)
    assert back.loss_trace == m.loss_trace and back.global_mean == m.global_mean
    assert evaluate(back, planted.ratings) == evaluate(m, planted.ratings)


@pytest.mark.parametrize("variant", list(Variant), ids=lambda v: v.value)
def test_mmf_round_trip(planted, tmp_path, variant):
    cat = planted.catalog.with_rows([("cold", "t0", "a-new")])
    m = mmf_fit(planted.ratings, cat, TrainConfig(dim=3, epochs=3, lam_weights=0.1), variant)
    save_model(m, tmp_path / "m.json")
    back = load_model(tmp_path / "m.json")
    for name in ("U", "F", "W", "T", "item_ptr", "item_attr", "trained_attrs"):
        assert np.array_equal(getattr(back, name), getattr(m, name)), name
    assert back.variant is m.variant
    assert back.attributes == m.attributes and back.item_ids == m.item_ids
    assert back.lam_weights == m.lam_weights
    save_model(back, tmp_path / "again.json")
    assert (tmp_path / "m.json").read_bytes() == (tmp_path / "again.json").read_bytes()


def test_rejects_foreign_files(tmp_path):
    (tmp_path / "x.json").write_text("not json")
    with pytest.raises(DataFormatError):
        load_model(tmp_path / "x.json")
    (tmp_path / "y.json").write_text(json.dumps({"format": "other"}))
    with pytest.raises(DataFormatError):
        load_model(tmp_path / "y.json")
    (tmp_path / "z.json").write_text(json.dumps({"format": "mmfrec-model", "version": 99}))
    with pytest.raises(DataFormatError):
        load_model(tmp_path / "z.json")
