import struct
import zlib

import numpy as np
import pytest

from _oracles import align_and_check
from gsico import ModelKind, decode, encode, encode_detailed, encode_points, inspect, preset
from gsico.bitstream import MAGIC, parse_container
from gsico.errors import BadMagic, ContainerError, CorruptPayload, InvariantViolation, VersionMismatch, WrongFlavor
from gsico.metrics import shannon_entropy
from gsico.quantization import QuantizedMap


def refresh_crc(data):
    body = bytes(data[:-4])
    return body + struct.pack("<I", zlib.crc32(body))


@pytest.fixture(scope="module")
def scaffold_trace(small_scaffold):
    return encode_detailed(small_scaffold, preset(ModelKind.SCAFFOLD, 1), seed=3)


def test_scaffold_roundtrip_bound(scaffold_trace, small_scaffold):
    t = scaffold_trace
    out = decode(t.container)
    assert out.kind == ModelKind.SCAFFOLD and len(out) == t.geometry.n_kept
    assert out.mlp_blob == small_scaffold.mlp_blob
    assert align_and_check(t.model.params, out.params, parse_container(t.container).records) == []
    # pixel order: decoded row p is encoder element m_all[p]
    m = t.m_all.cells.ravel()
    assert np.abs(out.params - t.model.params[m]).max() < 1e-3 * np.abs(t.model.params).max() + 1e-2


def test_3dgs_roundtrip_yuv_bound(small_3dgs):
    point = preset(ModelKind.THREEDGS, 2).all_lossless()
    t = encode_detailed(small_3dgs, point, seed=1)
    yuv = decode(t.container, to_rgb=False)
    assert yuv.color_space == "yuv"
    assert align_and_check(t.model.params, yuv.params, parse_container(t.container).records) == []
    rgb = decode(t.container)
    assert rgb.color_space == "rgb" and len(rgb) == t.geometry.n_kept


def test_deterministic_and_seed_matters(small_3dgs):
    a = encode(small_3dgs, rd=1, seed=5)
    assert a == encode(small_3dgs, rd=1, seed=5)
    assert len(a) < 59 * 4 * len(small_3dgs)


def test_encode_points_matches_encode(small_scaffold):
    pts = [preset(ModelKind.SCAFFOLD, r) for r in (1, 3, 5)]
    traces = encode_points(small_scaffold, pts, seed=2)
    for p, t in zip(pts, traces):
        assert t.container == encode(small_scaffold, p, seed=2)


def test_wrong_point_kind(small_3dgs):
    with pytest.raises(WrongFlavor):
        encode(small_3dgs, preset(ModelKind.SCAFFOLD, 1))


def test_custom_depths_carried(small_scaffold):
    p = preset(ModelKind.SCAFFOLD, 1).with_depths(offsets=3, anchor_features=0)
    data = encode(small_scaffold, p)
    rep = inspect(data)
    assert rep["rd_index"] == 0
    assert {m["bit_depth"] for m in rep["maps"] if m["group"] == "offsets"} == {3}
    assert all(m["payload_bytes"] == 0 for m in rep["maps"] if m["group"] == "anchor_features")
    out = decode(data)
    assert not out.params[:, 33:65].any()


def test_inspect_accounting(scaffold_trace):
    data = scaffold_trace.container
    r = inspect(data)
    assert r["total_bytes"] == len(data)
    assert r["header_bytes"] + sum(m["record_bytes"] for m in r["maps"]) + r["mlp_bytes"] + r["trailer_bytes"] == len(data)
    assert r["n_maps"] == 66 and len(r["maps"]) == 66
    assert r["compression_factor"] > 1


def test_entropy_values():
    assert shannon_entropy(np.zeros((16, 16), dtype=np.uint16)) == 0.0
    assert shannon_entropy(np.array([0, 1] * 128)) == 1.0
    u = np.random.default_rng(0).integers(0, 256, (256, 256))
    assert abs(shannon_entropy(QuantizedMap(u, 8, 0.0, 1.0)) - 8) <= 0.05


def test_header_errors(scaffold_trace):
    data = scaffold_trace.container
    with pytest.raises(BadMagic):
        decode(b"XXXX" + data[4:])
    with pytest.raises(BadMagic):
        decode(b"")
    with pytest.raises(VersionMismatch):
        decode(refresh_crc(MAGIC + b"\x02" + data[5:]))
    with pytest.raises(CorruptPayload):
        decode(data[:-1])
    bad = bytearray(data)
    bad[100] ^= 1
    with pytest.raises(CorruptPayload):
        decode(bytes(bad))


def test_structural_violations_detected(scaffold_trace):
    data = bytearray(scaffold_trace.container)
    # model kind byte -> 3DGS while carrying 66 maps
    k = bytearray(data)
    k[5] = 0
    with pytest.raises(InvariantViolation):
        decode(refresh_crc(k))
    # width field not a multiple of 16
    w = bytearray(data)
    struct.pack_into("<I", w, 14, 17)
    with pytest.raises(InvariantViolation):
        decode(refresh_crc(w))
    # second record's param id
    rec0 = parse_container(bytes(data)).header_bytes
    plen = struct.unpack_from("<Q", data, rec0 + 13)[0]
    r = bytearray(data)
    struct.pack_into("<H", r, rec0 + 21 + plen, 7)
    with pytest.raises(InvariantViolation):
        decode(refresh_crc(r))
    # min > max
    r = bytearray(data)
    struct.pack_into("<ff", r, rec0 + 3, 5.0, 1.0)
    with pytest.raises(InvariantViolation):
        decode(refresh_crc(r))


def test_payload_mutation_never_crashes(scaffold_trace):
    data = scaffold_trace.container
    rng = np.random.default_rng(0)
    for _ in range(200):
        b = bytearray(data)
        i = int(rng.integers(len(b) - 4))
        b[i] = int(rng.integers(256))
        try:
            decode(refresh_crc(b))
        except ContainerError:
            pass
