import datetime as dt

import numpy as np
import pytest

from macroregimes.ingest import (
    AssetMeta,
    IngestError,
    ReturnsPanel,
    align_meta,
    load_levels,
    load_meta,
    require_complete,
    restrict_complete,
    to_returns,
    write_levels,
    write_meta,
)


def _write(path, text):
    path.write_text(text)
    return path


class TestLoadLevels:
    def test_roundtrip(self, tmp_path):
        dates = [dt.date(2020, 1, d) for d in (2, 3, 6)]
        vals = np.array([[1.0, 2.5], [1.1, 2.4], [1.2, 2.6]])
        write_levels(tmp_path / "l.csv", dates, ["a", "b"], vals)
        lv = load_levels(tmp_path / "l.csv")
        assert lv.dates == tuple(dates)
        assert lv.columns == ("a", "b")
        np.testing.assert_array_equal(lv.values, vals)

    def test_rows_sorted_by_date(self, tmp_path):
        p = _write(tmp_path / "l.csv", "date,a\n2020-01-03,2\n2020-01-02,1\n")
        lv = load_levels(p)
        assert lv.dates[0] == dt.date(2020, 1, 2)
        np.testing.assert_array_equal(lv.values[:, 0], [1.0, 2.0])

    def test_blank_and_nan_are_missing(self, tmp_path):
        p = _write(tmp_path / "l.csv", "date,a,b\n2020-01-02,,1\n2020-01-03,NaN,2\n")
        lv = load_levels(p)
        assert np.isnan(lv.values[:, 0]).all()

    def test_bad_number_names_row_and_column(self, tmp_path):
        p = _write(tmp_path / "l.csv", "date,a,b\n2020-01-02,1,2\n2020-01-03,1,oops\n")
        with pytest.raises(IngestError, match=r"row 3, column 'b'"):
            load_levels(p)

    def test_bad_date(self, tmp_path):
        p = _write(tmp_path / "l.csv", "date,a\n02/01/2020,1\n")
        with pytest.raises(IngestError, match="row 2"):
            load_levels(p)

    def test_duplicate_date(self, tmp_path):
        p = _write(tmp_path / "l.csv", "date,a\n2020-01-02,1\n2020-01-02,2\n")
        with pytest.raises(IngestError, match="duplicate"):
            load_levels(p)

    def test_schema_selects_columns(self, tmp_path):
        p = _write(tmp_path / "l.csv", "day,a,b\n2020-01-02,1,2\n2020-01-03,3,4\n")
        lv = load_levels(p, {"date": "day", "columns": ["b"]})
        assert lv.columns == ("b",)
        np.testing.assert_array_equal(lv.values[:, 0], [2, 4])

    def test_missing_file(self, tmp_path):
        with pytest.raises(IngestError, match="not found"):
            load_levels(tmp_path / "nope.csv")


class TestCompleteness:
    def _levels(self, tmp_path, body):
        return load_levels(_write(tmp_path / "l.csv", "date,a,b,c\n" + body))

    def test_require_complete_names_cell(self, tmp_path):
        lv = self._levels(tmp_path, "2020-01-02,1,2,3\n2020-01-03,1,,3\n")
        with pytest.raises(IngestError, match=r"2020-01-03.*'b'"):
            require_complete(lv)

    def test_restrict_drops_gapped_and_trims(self, tmp_path):
        lv = self._levels(
            tmp_path,
            "2020-01-02,1,,1\n2020-01-03,2,2,\n2020-01-06,3,3,3\n2020-01-07,4,4,4\n",
        )
        out = restrict_complete(lv)
        # c has an interior gap; b starts late and is kept
        assert out.columns == ("a", "b")
        assert out.dates[0] == dt.date(2020, 1, 3)
        assert not np.isnan(out.values).any()

    def test_restrict_all_gapped(self, tmp_path):
        lv = self._levels(tmp_path, "2020-01-02,1,1,1\n2020-01-03,,,\n2020-01-06,1,1,1\n")
        with pytest.raises(IngestError):
            restrict_complete(lv)


class TestReturns:
    def _setup(self, tmp_path, rate_kind="simple_difference"):
        dates = [dt.date(2021, 3, d) for d in (1, 2, 3)]
        write_levels(tmp_path / "l.csv", dates, ["spx", "ust10"], [[100, 1.5], [110, 1.75], [99, 1.25]])
        meta = [AssetMeta(0, "spx", "equity"), AssetMeta(1, "ust10", "interest_rate", rate_kind)]
        write_meta(tmp_path / "m.csv", meta)
        return load_levels(tmp_path / "l.csv"), load_meta(tmp_path / "m.csv")

    def test_percent_change_and_difference(self, tmp_path):
        lv, meta = self._setup(tmp_path)
        rp = to_returns(lv, align_meta(lv, meta))
        np.testing.assert_allclose(rp.values[:, 0], [0.1, -0.1])
        np.testing.assert_allclose(rp.values[:, 1], [0.25, -0.5])
        assert rp.dates == (dt.date(2021, 3, 2), dt.date(2021, 3, 3))
        assert rp.asset_classes == ["equity", "interest_rate"]

    def test_difference_disallowed_for_class(self, tmp_path):
        lv, meta = self._setup(tmp_path)
        with pytest.raises(IngestError, match="simple_difference"):
            to_returns(lv, meta, allow_difference_for=())

    def test_zero_level(self, tmp_path):
        dates = [dt.date(2021, 3, d) for d in (1, 2, 3)]
        write_levels(tmp_path / "l.csv", dates, ["x"], [[1.0], [0.0], [1.0]])
        lv = load_levels(tmp_path / "l.csv")
        with pytest.raises(IngestError, match=r"'x'.*2021-03-02"):
            to_returns(lv, [AssetMeta(0, "x", "commodity")])

    def test_meta_mismatch(self, tmp_path):
        lv, meta = self._setup(tmp_path)
        with pytest.raises(IngestError):
            to_returns(lv, meta[:1])

    def test_align_meta_missing(self, tmp_path):
        lv, meta = self._setup(tmp_path)
        with pytest.raises(IngestError, match="no metadata"):
            align_meta(lv, meta[:1])

    def test_meta_roundtrip(self, tmp_path):
        _, meta = self._setup(tmp_path)
        assert meta[1].return_kind.value == "simple_difference"
        assert meta[0].asset_class.value == "equity"


class TestReturnsPanel:
    def test_validation(self):
        d = (dt.date(2020, 1, 1), dt.date(2020, 1, 2))
        with pytest.raises(IngestError, match="increasing"):
            ReturnsPanel(d[::-1], np.zeros((2, 1)))
        with pytest.raises(IngestError, match="non-finite"):
            ReturnsPanel(d, np.array([[0.0], [np.inf]]))
        with pytest.raises(IngestError, match="unique"):
            ReturnsPanel(d, np.zeros((2, 2)), (AssetMeta(0, "a", "equity"), AssetMeta(0, "b", "equity")))

    def test_values_read_only(self):
        d = (dt.date(2020, 1, 1), dt.date(2020, 1, 2))
        p = ReturnsPanel(d, np.zeros((2, 2)))
        with pytest.raises(ValueError):
            p.values[0, 0] = 1.0

    def test_rows(self):
        d = tuple(dt.date(2020, 1, i) for i in range(1, 5))
        p = ReturnsPanel(d, np.arange(8.0).reshape(4, 2))
        sub = p.rows([1, 3])
        assert sub.dates == (d[1], d[3])
        np.testing.assert_array_equal(sub.values, [[2, 3], [6, 7]])
