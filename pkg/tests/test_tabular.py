import numpy as np
import pytest

from glmmkit import DataError, DataTable, column_stats, drop_incomplete, read_csv, write_csv


@pytest.fixture
def csv_file(tmp_path):
    def _write(text, name="data.csv"):
        path = tmp_path / name
        path.write_text(text, encoding="utf-8")
        return str(path)

    return _write


class TestReadCsv:
    def test_numeric_columns(self, csv_file):
        table = read_csv(csv_file("y,x\n1,2\n3,4\n"))
        assert table.n_rows == 2
        assert table["y"].is_numeric and table["x"].is_numeric
        np.testing.assert_array_equal(table["y"].values, [1.0, 3.0])

    def test_categorical_levels_sorted(self, csv_file):
        table = read_csv(csv_file("c\na\nb\na\n"))
        col = table["c"]
        assert not col.is_numeric
        assert col.levels == ["a", "b"]
        np.testing.assert_array_equal(col.codes, [0, 1, 0])

    def test_empty_cell_is_missing(self, csv_file):
        table = read_csv(csv_file("x,z\n1,2\n,3\n"))
        assert np.isnan(table["x"].values[1])
        assert not np.isnan(table["z"].values).any()

    def test_na_token_is_missing(self, csv_file):
        table = read_csv(csv_file("c\nred\nNA\nblue\n"))
        assert table["c"].codes[1] == -1
        assert table["c"].levels == ["blue", "red"]

    def test_mixed_column_is_categorical(self, csv_file):
        table = read_csv(csv_file("c\n1\ntwo\n"))
        assert not table["c"].is_numeric

    def test_ragged_row_error(self, csv_file):
        with pytest.raises(DataError):
            read_csv(csv_file("a,b\n1,2\n3\n"))

    def test_empty_file_error(self, csv_file):
        with pytest.raises(DataError):
            read_csv(csv_file(""))

    def test_missing_file_error(self, tmp_path):
        with pytest.raises(DataError):
            read_csv(str(tmp_path / "nope.csv"))

    def test_roundtrip_bit_exact(self, csv_file, tmp_path):
        rng = np.random.default_rng(7)
        values = rng.normal(size=20) * 10.0 ** rng.integers(-8, 8, size=20)
        table = DataTable.from_dict({"x": values, "c": ["a"] * 10 + ["b"] * 10})
        out = tmp_path / "round.csv"
        write_csv(table, str(out))
        back = read_csv(str(out))
        np.testing.assert_array_equal(back["x"].values, values)
        assert back["c"].levels == ["a", "b"]


class TestDropIncomplete:
    def test_drops_and_counts(self):
        table = DataTable.from_dict({
            "x": [1.0, None, 3.0, None, 5.0, 6.0, 7.0, 8.0, 9.0, 10.0],
            "y": list(range(10)),
        })
        out, dropped = drop_incomplete(table, ["x", "y"])
        assert dropped == 2
        assert out.n_rows == 8
        assert out.n_rows + dropped == table.n_rows

    def test_no_missing_identity(self):
        table = DataTable.from_dict({"x": [1.0, 2.0]})
        out, dropped = drop_incomplete(table, ["x"])
        assert dropped == 0
        assert out is table

    def test_all_missing_error(self):
        table = DataTable.from_dict({"x": [None, None]})
        with pytest.raises(DataError, match="empty dataset after dropna"):
            drop_incomplete(table, ["x"])

    def test_unknown_variable(self):
        table = DataTable.from_dict({"x": [1.0, 2.0]})
        with pytest.raises(DataError):
            drop_incomplete(table, ["zzz"])


class TestColumnStats:
    def test_simple(self):
        table = DataTable.from_dict({"x": [1.0, 2.0, 3.0]})
        stats = column_stats(table["x"])
        assert stats.mean == 2.0
        assert stats.sd == 1.0
        assert stats.var == 1.0

    def test_constant_column_sd_zero(self):
        table = DataTable.from_dict({"x": [5.0, 5.0, 5.0]})
        assert column_stats(table["x"]).sd == 0.0

    def test_two_point_column(self):
        table = DataTable.from_dict({"x": [0.0, 2.0]})
        stats = column_stats(table["x"])
        assert stats.mean == 1.0
        np.testing.assert_allclose(stats.sd, np.sqrt(2.0), rtol=0, atol=1e-15)

    def test_too_short(self):
        table = DataTable.from_dict({"x": [1.0]})
        with pytest.raises(DataError):
            column_stats(table["x"])

    def test_var_is_sd_squared(self):
        rng = np.random.default_rng(3)
        table = DataTable.from_dict({"x": rng.normal(size=50)})
        stats = column_stats(table["x"])
        np.testing.assert_allclose(stats.var, stats.sd ** 2, rtol=1e-15)
