import struct

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from pathacoustics import afld
from pathacoustics.fields import Grid, ScalarField, VectorField


class TestRoundTrip:
    def test_scalar_bytes_identical(self, tmp_path, rng):
        g = Grid.square(64)
        f = ScalarField(g, rng.standard_normal(g.shape))
        path = tmp_path / "f.afld"
        afld.write_field(path, f)
        back = afld.read_field(path)
        assert isinstance(back, ScalarField)
        assert back.grid == g
        assert back.values.tobytes() == f.values.tobytes()
        afld.write_field(tmp_path / "g.afld", back)
        assert (tmp_path / "g.afld").read_bytes() == path.read_bytes()

    def test_vector_components_stored_consecutively(self, rng):
        g = Grid((4, 6), (1.0, 2.0))
        v = VectorField(g, rng.standard_normal((2, 4, 6)))
        data = afld.encode_field(v)
        header = 8 + 2 * 4 + 2 * 8
        assert len(data) == header + 8 * 48
        first = np.frombuffer(data, "<f8", count=24, offset=header).reshape(4, 6)
        assert np.array_equal(first, v.values[0])

    def test_header_layout(self):
        g = Grid((4, 8, 6), (1.0, 2.0, 3.0))
        data = afld.encode_field(ScalarField(g, np.zeros(g.shape)))
        assert data[:4] == b"AFLD"
        assert struct.unpack_from("<BBBB", data, 4) == (1, 3, 0, 0)
        assert struct.unpack_from("<3I", data, 8) == (4, 8, 6)
        assert struct.unpack_from("<3d", data, 20) == (1.0, 2.0, 3.0)

    @settings(max_examples=30, deadline=None)
    @given(
        n=st.sampled_from([4, 6, 8, 16]),
        m=st.sampled_from([4, 10, 12]),
        length=st.floats(min_value=1e-3, max_value=1e3),
        vector=st.booleans(),
        seed=st.integers(0, 2**31),
    )
    def test_round_trip_property(self, n, m, length, vector, seed):
        g = Grid((n, m), (length, 2 * length))
        r = np.random.default_rng(seed)
        f = VectorField(g, r.standard_normal((2, n, m))) if vector else ScalarField(g, r.standard_normal((n, m)))
        back = afld.decode_field(afld.encode_field(f))
        assert type(back) is type(f)
        assert back.values.tobytes() == f.values.tobytes()


class TestErrors:
    def _data(self, n=32):
        g = Grid.square(n)
        return afld.encode_field(ScalarField(g, np.ones(g.shape)))

    def test_bad_magic(self):
        data = b"XFLD" + self._data()[4:]
        with pytest.raises(afld.MalformedHeaderError, match="malformed header"):
            afld.decode_field(data)

    def test_bad_version(self):
        data = bytearray(self._data())
        data[4] = 9
        with pytest.raises(afld.MalformedHeaderError):
            afld.decode_field(bytes(data))

    def test_short_header(self):
        with pytest.raises(afld.MalformedHeaderError):
            afld.decode_field(self._data()[:12])

    def test_truncated_payload(self):
        data = self._data()[:-8]  # 1023 values for a 32x32 header
        with pytest.raises(afld.TruncatedPayloadError, match="truncated payload"):
            afld.decode_field(data)

    def test_extra_payload_is_dimension_mismatch(self):
        with pytest.raises(afld.DimensionMismatchError):
            afld.decode_field(self._data() + b"\0" * 8)

    def test_expected_grid_mismatch(self):
        with pytest.raises(afld.DimensionMismatchError, match="dimension mismatch"):
            afld.decode_field(self._data(), Grid.square(16))

    def test_errors_are_distinct(self):
        kinds = {afld.MalformedHeaderError, afld.DimensionMismatchError, afld.TruncatedPayloadError}
        assert len(kinds) == 3
        assert all(issubclass(k, afld.FieldFormatError) for k in kinds)
