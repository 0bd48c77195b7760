import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gsico import GaussianModel, ModelKind, generate_synthetic, parse_model, write_model
from gsico.clustering import extract_features
from gsico.color import sh_rgb_to_yuv
from gsico.errors import MalformedFile, MissingMlp, NonFiniteValue, UnknownFlavor, WrongState
from gsico.model_io import PARAM_NAMES, detect_flavor, read_model, save_model
from gsico.synthetic import generate_synthetic_with_labels


def ascii_ply(names, rows, extra_header=()):
    head = ["ply", "format ascii 1.0", *extra_header, f"element vertex {len(rows)}"]
    head += [f"property float {n}" for n in names] + ["end_header"]
    body = [" ".join(repr(float(v)) for v in r) for r in rows]
    return ("\n".join(head + body) + "\n").encode()


def test_parse_512_gaussians_fieldwise():
    m = generate_synthetic(ModelKind.THREEDGS, 512, 2, seed=1)
    parsed = parse_model(write_model(m))
    assert parsed.kind == ModelKind.THREEDGS and len(parsed) == 512
    for k, name in enumerate(PARAM_NAMES[ModelKind.THREEDGS]):
        assert np.array_equal(parsed.params[:, k], m.params[:, k]), name


def test_single_zero_vertex_ascii():
    names = PARAM_NAMES[ModelKind.THREEDGS]
    m = parse_model(ascii_ply(names, [[0.0] * 59]))
    assert len(m) == 1 and not m.params.any() and m.color_space == "rgb"


def test_missing_opacity_is_unknown_flavor():
    names = [n for n in PARAM_NAMES[ModelKind.THREEDGS] if n != "opacity"]
    with pytest.raises(UnknownFlavor):
        parse_model(ascii_ply(names, [[0.0] * 58]))


def test_ascii_and_binary_agree():
    m = generate_synthetic(ModelKind.THREEDGS, 40, 2, seed=5)
    text = ascii_ply(m.param_names, m.params.tolist())
    assert parse_model(text) == m


def test_extra_properties_ignored_and_order_irrelevant():
    m = generate_synthetic(ModelKind.THREEDGS, 8, 1, seed=0)
    names = ["nx", "ny", "nz", *reversed(m.param_names)]
    rows = np.concatenate([np.zeros((8, 3)), m.params[:, ::-1]], axis=1)
    assert parse_model(ascii_ply(names, rows.tolist())) == m


def test_detect_flavor_pure_function_of_names():
    assert detect_flavor(PARAM_NAMES[ModelKind.SCAFFOLD]) == ModelKind.SCAFFOLD
    assert detect_flavor(reversed(PARAM_NAMES[ModelKind.THREEDGS])) == ModelKind.THREEDGS
    with pytest.raises(UnknownFlavor):
        detect_flavor(["x", "y", "z"])


def test_scaffold_roundtrip_with_7086_blob(tmp_path):
    m = generate_synthetic(ModelKind.SCAFFOLD, 256, 1, seed=1)
    assert len(m.mlp_blob) == 7086 * 4
    assert parse_model(write_model(m)) == m
    save_model(m, tmp_path / "a.ply", tmp_path / "a.mlp")
    assert read_model(tmp_path / "a.ply", tmp_path / "a.mlp") == m
    with pytest.raises(MissingMlp):
        read_model(tmp_path / "a.ply")


def test_metadata_roundtrip_and_empty_metadata():
    m = generate_synthetic(ModelKind.THREEDGS, 4, 1, seed=0)
    data = write_model(m)
    assert b"comment" not in data
    tagged = m.replace(source_metadata={"scene": "garden", "iters": "30000"})
    assert parse_model(write_model(tagged)) == tagged


@pytest.mark.parametrize("bad", [b"", b"nope", b"ply\nformat ascii 1.0\n",
                                 b"ply\nformat binary_big_endian 1.0\nelement vertex 1\nend_header\n"])
def test_malformed(bad):
    with pytest.raises(MalformedFile):
        parse_model(bad)


def test_truncated_binary():
    data = write_model(generate_synthetic(ModelKind.THREEDGS, 10, 1, seed=0))
    with pytest.raises(MalformedFile):
        parse_model(data[:-5])


def test_non_finite_rejected():
    names = PARAM_NAMES[ModelKind.THREEDGS]
    row = [0.0] * 59
    row[10] = float("nan")
    with pytest.raises(NonFiniteValue):
        parse_model(ascii_ply(names, [row]))


def test_scaffold_requires_blob_and_yuv_write_rejected():
    with pytest.raises(MissingMlp):
        GaussianModel(ModelKind.SCAFFOLD, np.zeros((1, 66)))
    m = sh_rgb_to_yuv(generate_synthetic(ModelKind.THREEDGS, 4, 1, seed=0))
    with pytest.raises(WrongState):
        write_model(m)


def test_model_is_immutable():
    m = generate_synthetic(ModelKind.THREEDGS, 4, 1, seed=0)
    with pytest.raises(ValueError):
        m.params[0, 0] = 1.0


@settings(max_examples=25, deadline=None)
@given(kind=st.sampled_from(list(ModelKind)), n=st.integers(1, 300), seed=st.integers(0, 2**32 - 1))
def test_roundtrip_property(kind, n, seed):
    m = generate_synthetic(kind, n, 3, seed)
    assert parse_model(write_model(m)) == m


@settings(max_examples=20, deadline=None)
@given(arr=st.lists(st.floats(allow_nan=False, allow_infinity=False, width=32), min_size=59, max_size=59 * 4))
def test_roundtrip_arbitrary_floats(arr):
    n = len(arr) // 59
    m = GaussianModel(ModelKind.THREEDGS, np.array(arr[: n * 59]).reshape(n, 59))
    assert parse_model(write_model(m)) == m


def test_synthetic_deterministic_and_separated():
    a = generate_synthetic(ModelKind.THREEDGS, 512, 2, seed=1)
    assert a == generate_synthetic(ModelKind.THREEDGS, 512, 2, seed=1)
    s = generate_synthetic(ModelKind.SCAFFOLD, 256, 1, seed=1)
    assert len(s) == 256
    for kind in ModelKind:
        m, labels = generate_synthetic_with_labels(kind, 512, 2, seed=1)
        f = extract_features(sh_rgb_to_yuv(m) if kind == ModelKind.THREEDGS else m)
        c = [f[labels == b].mean(axis=0) for b in (0, 1)]
        spread = max(np.sqrt(((f[labels == b] - c[b]) ** 2).sum(1).mean()) for b in (0, 1))
        assert np.linalg.norm(c[0] - c[1]) > 10 * spread
