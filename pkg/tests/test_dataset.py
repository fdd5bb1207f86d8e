import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mmfrec.dataset import (
    AttributeCatalog,
    RatingDataset,
    SplitSpec,
    compute_dense_rate,
    compute_rate,
    load_attributes,
    load_ratings,
    load_split,
    save_attributes,
    save_ratings,
    save_split,
    split,
)
from mmfrec.errors import (
    ConfigError,
    ConsistencyError,
    DataFormatError,
    EmptyDatasetError,
    UndefinedDensityError,
)


def write(path, text):
    path.write_text(text, encoding="utf-8")
    return path


class TestLoadRatings:
    def test_two_rows(self, tmp_path):
        ds = load_ratings(write(tmp_path / "r.csv", "u1,i1,5\nu2,i1,3\n"))
        assert (ds.n_users, ds.n_items, len(ds)) == (2, 1, 2)
        assert ds.records == [("u1", "i1", 5.0), ("u2", "i1", 3.0)]

    def test_tsv_ignores_timestamp(self, tmp_path):
        ds = load_ratings(write(tmp_path / "u.data", "196\t242\t3\t881250949\n186\t302\t3\t891717742\n"))
        assert ds.records == [("196", "242", 3.0), ("186", "302", 3.0)]

    def test_csv_header_skipped(self, tmp_path):
        ds = load_ratings(write(tmp_path / "r.csv", "user,item,rating\na,b,4\n"), format="csv")
        assert len(ds) == 1

    def test_bad_rating_names_row(self, tmp_path):
        with pytest.raises(DataFormatError) as exc:
            load_ratings(write(tmp_path / "r.csv", "u,i,4\na,b,notanumber\n"))
        assert exc.value.line == 2
        assert "a,b,notanumber" in str(exc.value)

    def test_wrong_column_count(self, tmp_path):
        with pytest.raises(DataFormatError):
            load_ratings(write(tmp_path / "r.csv", "a,b\n"))

    def test_empty_file(self, tmp_path):
        with pytest.raises(EmptyDatasetError):
            load_ratings(write(tmp_path / "r.csv", ""))

    def test_duplicates_last_wins(self, tmp_path):
        ds = load_ratings(write(tmp_path / "r.csv", "a,x,1\nb,x,2\na,x,5\n"))
        assert ds.records == [("a", "x", 5.0), ("b", "x", 2.0)]
        assert ds.n_duplicates == 1

    def test_first_appearance_order(self, tmp_path):
        ds = load_ratings(write(tmp_path / "r.csv", "z,q,1\na,p,2\nz,p,3\n"))
        assert ds.user_ids == ("z", "a")
        assert ds.item_ids == ("q", "p")


record_lists = st.lists(
    st.tuples(
        st.text("abcxyz0123", min_size=1, max_size=3),
        st.text("abcxyz0123", min_size=1, max_size=3),
        st.floats(1, 5, allow_nan=False),
    ),
    min_size=1,
    max_size=30,
)


@settings(max_examples=50, deadline=None)
@given(record_lists)
def test_save_load_roundtrip(tmp_path_factory, records):
    ds = RatingDataset.from_records(records)
    path = tmp_path_factory.mktemp("rt") / "r.tsv"
    save_ratings(ds, path)
    again = load_ratings(path)
    assert again.records == ds.records
    assert again.user_ids == ds.user_ids and again.item_ids == ds.item_ids


def test_dataset_rejects_duplicates_and_nonfinite():
    with pytest.raises(ValueError):
        RatingDataset(("a",), ("x",), [0, 0], [0, 0], [1.0, 2.0])
    with pytest.raises(ValueError):
        RatingDataset(("a",), ("x",), [0], [0], [float("nan")])


class TestAttributes:
    def test_basic(self, tmp_path):
        p = write(tmp_path / "a.csv", "item_id,type,value\ni1,genre,Action\ni1,cast,X\ni2,genre,Action\n")
        cat = load_attributes(p)
        assert cat.types == ("genre", "cast")
        assert cat.n_attributes == 2
        keys = lambda j: {cat.attributes[k] for k in cat.attrs_of(j)}
        assert keys("i1") == {("genre", "Action"), ("cast", "X")}
        assert keys("i2") == {("genre", "Action")}
        assert cat.attrs_of("missing") == ()

    def test_empty_file(self, tmp_path):
        cat = load_attributes(write(tmp_path / "a.csv", ""))
        assert cat.types == () and cat.attrs_of("i1") == ()

    def test_same_value_two_types(self, tmp_path):
        cat = load_attributes(write(tmp_path / "a.csv", "item_id,type,value\ni1,genre,Z\ni1,cast,Z\n"))
        assert len(cat.attrs_of("i1")) == 2
        assert cat.attr_index[("genre", "Z")] != cat.attr_index[("cast", "Z")]

    def test_bad_header(self, tmp_path):
        with pytest.raises(DataFormatError):
            load_attributes(write(tmp_path / "a.csv", "item,type,value\ni1,g,a\n"))
        with pytest.raises(DataFormatError):
            load_attributes(write(tmp_path / "a.csv", "item_id,type,type\ni1,g,a\n"))

    def test_repeated_row_deduplicated(self, tmp_path):
        cat = load_attributes(write(tmp_path / "a.csv", "item_id,type,value\ni1,g,a\ni1,g,a\n"))
        assert cat.attrs_of("i1") == (0,)

    def test_consistency_errors(self):
        with pytest.raises(ConsistencyError):
            AttributeCatalog(["g"], [("g", "a"), ("g", "a")], {})
        with pytest.raises(ConsistencyError):
            AttributeCatalog(["g"], [("c", "a")], {})
        with pytest.raises(ConsistencyError):
            AttributeCatalog(["g"], [("g", "a")], {"i": [0, 0]})

    def test_roundtrip_and_diagnostics(self, tmp_path, tiny):
        _, cat = tiny
        save_attributes(cat, tmp_path / "a.csv")
        again = load_attributes(tmp_path / "a.csv")
        assert list(again.rows()) == list(cat.rows())
        assert cat.items_without_attributes(["i1", "i9"]) == ["i9"]

    def test_without_types(self, tiny):
        _, cat = tiny
        g = cat.without_types(["cast"])
        assert g.types == ("genre",)
        assert "i3" not in g.item_attrs


class TestRate:
    def test_full_matrix(self):
        assert compute_rate(RatingDataset.from_records([("a", "x", 1)])) == 1.0

    @pytest.mark.parametrize(
        "n_ratings,n_items,n_users,expected",
        [(100000, 1683, 944, 0.063), (99326, 206, 3550, 0.136)],
    )
    def test_table_values(self, n_ratings, n_items, n_users, expected):
        # reported densities for MovieLens 100k and the box-office subset;
        # (r mod users, r mod items) pairs are distinct while r < lcm
        ds = RatingDataset.from_records((f"u{r % n_users}", f"i{r % n_items}", 3.0) for r in range(n_ratings))
        assert (len(ds), ds.n_items, ds.n_users) == (n_ratings, n_items, n_users)
        assert round(compute_rate(ds), 3) == expected

    def test_empty(self):
        with pytest.raises(UndefinedDensityError):
            compute_rate(RatingDataset.from_records([]))


class TestDenseRate:
    def cat(self, rows):
        return AttributeCatalog.from_rows(rows)

    def test_single_shared(self):
        c = self.cat([("p", "g", "a"), ("q", "g", "a")])
        assert compute_dense_rate(c, ["p", "q"]) == 1.0

    def test_one_type(self):
        c = self.cat([("p", "g", "a"), ("p", "g", "b"), ("q", "g", "c")])
        assert compute_dense_rate(c, ["p", "q"]) == pytest.approx(0.5)

    def test_two_types(self):
        c = self.cat([("p", "g", "a"), ("p", "g", "b"), ("q", "g", "c"), ("p", "h", "x"), ("q", "h", "x")])
        assert compute_dense_rate(c, ["p", "q"]) == pytest.approx(0.75)

    def test_no_attributes(self):
        with pytest.raises(UndefinedDensityError):
            compute_dense_rate(self.cat([]), ["p"])


def _ds(n_users=6, n_items=5):
    return RatingDataset.from_records(
        (f"u{i}", f"i{j}", float(1 + (i + j) % 5)) for i in range(n_users) for j in range(n_items)
    )


class TestSplit:
    def test_random_ten_records(self):
        ds = RatingDataset.from_records((f"u{i}", "x", 3.0) for i in range(10))
        train, test = split(ds, SplitSpec("random", 0.2, 7))
        assert (len(train), len(test)) == (8, 2)

    @pytest.mark.parametrize("kind", ["random", "item-cold-start"])
    def test_partition_and_determinism(self, kind):
        ds = _ds()
        spec = SplitSpec(kind, seed=3)
        tr1, te1 = split(ds, spec)
        tr2, te2 = split(ds, spec)
        assert tr1.records == tr2.records and te1.records == te2.records
        assert sorted(tr1.records + te1.records) == sorted(ds.records)
        assert not set(tr1.records) & set(te1.records)

    def test_cold_start_items_disjoint(self):
        ds = _ds(10, 20)
        train, test = split(ds, SplitSpec("item-cold-start", 0.1, 1))
        assert set(train.item_ids).isdisjoint(test.item_ids)
        assert len(test.item_ids) == 2
        assert len(test) == 2 * 10

    def test_defaults(self):
        assert SplitSpec().test_fraction == 0.2
        assert SplitSpec("item-cold-start").test_fraction == 0.1

    @pytest.mark.parametrize("f", [0.0, 1.0, -0.1, 1.5])
    def test_bad_fraction(self, f):
        with pytest.raises(ConfigError):
            SplitSpec("random", f)

    def test_persist(self, tmp_path):
        ds = _ds()
        spec = SplitSpec("random", 0.3, 5)
        train, test = split(ds, spec)
        save_split(train, test, spec, tmp_path)
        tr, te, sp = load_split(tmp_path)
        assert tr.records == train.records and te.records == test.records and sp == spec
        assert json.loads((tmp_path / "split.json").read_text())["split"]["seed"] == 5
