import json

import numpy as np
import pytest

from viscohj import fieldio
from viscohj.grid import Field, GridError, make_grid


class TestCsv:
    @pytest.mark.parametrize("d,n", [(1, 8), (2, 4), (3, 4)])
    def test_real_roundtrip_exact(self, tmp_path, rng, d, n):
        f = Field(make_grid(d, n), rng.standard_normal((n,) * d))
        fieldio.field_to_csv(f, tmp_path / "f.csv")
        g = fieldio.field_from_csv(tmp_path / "f.csv")
        assert g.grid == f.grid
        np.testing.assert_array_equal(g.values, f.values)

    def test_complex_roundtrip_and_header(self, tmp_path, rng):
        f = Field(make_grid(2, 4), rng.standard_normal((4, 4)) + 1j * rng.standard_normal((4, 4)))
        fieldio.field_to_csv(f, tmp_path / "c.csv")
        assert (tmp_path / "c.csv").read_text().splitlines()[0] == "i0,i1,value_re,value_im"
        np.testing.assert_array_equal(fieldio.field_from_csv(tmp_path / "c.csv").values, f.values)


class TestBinary:
    def test_roundtrip(self, tmp_path, rng):
        for vals in (rng.standard_normal((6, 6)), rng.standard_normal((6, 6)) * (1 + 2j)):
            f = Field(make_grid(2, 6), vals)
            fieldio.write_field(f, tmp_path / "f.bin")
            g = fieldio.read_field(tmp_path / "f.bin")
            np.testing.assert_array_equal(g.values, f.values)
            assert g.is_complex == f.is_complex

    def test_header_layout(self):
        data = fieldio.field_to_bytes(Field(make_grid(1, 4), np.arange(4.0)))
        assert data[:4] == b"VHJF"
        assert len(data) == 12 + 4 * 8

    def test_bad_magic(self):
        with pytest.raises(GridError):
            fieldio.field_from_bytes(b"XXXX" + bytes(8))


class TestJson:
    def test_canonical_and_hash_stable(self):
        a = {"b": 1.5, "a": [np.float64(0.1), np.int64(3)], "c": np.array([1.0, 2.0])}
        b = {"c": [1.0, 2.0], "a": [0.1, 3], "b": 1.5}
        assert fieldio.dumps(a) == fieldio.dumps(b)
        assert fieldio.content_hash(a) == fieldio.content_hash(b)
        assert json.loads(fieldio.dumps(a))["a"][0] == 0.1

    def test_nonfinite_as_string(self):
        assert json.loads(fieldio.dumps({"x": float("inf")}))["x"] == "inf"

    def test_table(self, tmp_path):
        fieldio.write_table(tmp_path / "t.csv", ["n", "err"], [(1, 0.5), (2, 0.25)])
        assert (tmp_path / "t.csv").read_text() == "n,err\n1,0.5\n2,0.25\n"
