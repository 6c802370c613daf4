import struct

import numpy as np
import pytest

from pareto_forge.checkpoint import MAGIC, from_bytes, load_checkpoint, save_checkpoint, to_bytes
from pareto_forge.errors import DomainError
from pareto_forge.net import MTLSpec, MultiTaskNet


@pytest.fixture
def model(small_spec):
    net = MultiTaskNet(small_spec)
    params = net.new_params(4)
    params.flat[:] += np.random.default_rng(0).normal(size=len(params))
    return small_spec, params


class TestCheckpoint:
    def test_roundtrip(self, model, tmp_path):
        spec, params = model
        path = save_checkpoint(tmp_path / "m.ckpt", spec, params, {"sr": 0.5}, {"seed": 3})
        spec2, params2, header = load_checkpoint(path)
        assert spec2 == spec
        np.testing.assert_array_equal(params2.flat, params.flat)
        assert header["metrics"] == {"sr": 0.5} and header["extra"] == {"seed": 3}

    def test_bytes_are_deterministic(self, model):
        spec, params = model
        assert to_bytes(spec, params, {"a": 1, "b": 2}) == to_bytes(spec, params.copy(), {"b": 2, "a": 1})

    def test_layout_is_self_describing(self, model):
        spec, params = model
        data = to_bytes(spec, params)
        assert data[:8] == MAGIC
        (hlen,) = struct.unpack("<Q", data[8:16])
        start = 16 + hlen + (-(16 + hlen)) % 8
        assert start % 8 == 0
        flat = np.frombuffer(data[start:], dtype="<f8")
        np.testing.assert_array_equal(flat, params.flat)

    def test_bad_magic(self, model):
        with pytest.raises(DomainError, match="magic"):
            from_bytes(b"NOTACKPT" + b"\x00" * 16)

    def test_truncated(self, model):
        spec, params = model
        with pytest.raises(DomainError):
            from_bytes(to_bytes(spec, params)[:-8])

    def test_layout_mismatch(self, model):
        spec, params = model
        other = MTLSpec("mdmtn", 6, (3, 3), shared=(8, 6), monitors=(6,), heads=(4,))
        data = bytearray(to_bytes(spec, params))
        (hlen,) = struct.unpack("<Q", data[8:16])
        header = data[16:16 + hlen].decode().replace('"heads":[5]', '"heads":[4]')
        assert other.to_json()["heads"] == [4]
        with pytest.raises(DomainError, match="layout"):
            from_bytes(bytes(data[:16]) + header.encode() + bytes(data[16 + hlen:]))
