"""In-memory Gaussian Splatting models and PLY (de)serialization.

A model is stored as one ``(N, P)`` float32 matrix whose column order is the
canonical parameter order also used for the parameter maps and the container
(``THREEDGS_PARAMS`` / ``SCAFFOLD_PARAMS``). Field accessors return views.
"""
from __future__ import annotations

import dataclasses
import enum
import re
import struct
from dataclasses import dataclass, field

import numpy as np

from .errors import MalformedFile, MissingMlp, NonFiniteValue, UnknownFlavor, WrongState


class ModelKind(enum.IntEnum):
    THREEDGS = 0
    SCAFFOLD = 1


THREEDGS_PARAMS: tuple[str, ...] = (
    ("x", "y", "z")
    + tuple(f"f_dc_{i}" for i in range(3))
    + tuple(f"f_rest_{i}" for i in range(45))
    + tuple(f"scale_{i}" for i in range(3))
    + tuple(f"rot_{i}" for i in range(4))
    + ("opacity",)
)

SCAFFOLD_PARAMS: tuple[str, ...] = (
    ("x", "y", "z")
    + tuple(f"offset_{i}" for i in range(30))
    + tuple(f"feat_{i}" for i in range(32))
    + ("scale_factor",)
)

PARAM_NAMES = {ModelKind.THREEDGS: THREEDGS_PARAMS, ModelKind.SCAFFOLD: SCAFFOLD_PARAMS}
N_PARAMS = {kind: len(names) for kind, names in PARAM_NAMES.items()}

# column slices in the canonical order
POSITION = slice(0, 3)
SH_DC = slice(3, 6)
SH_AC = slice(6, 51)
SCALE = slice(51, 54)
ROTATION = slice(54, 58)
OPACITY = 58

ANCHOR = slice(0, 3)
OFFSETS = slice(3, 33)
ANCHOR_FEATURES = slice(33, 65)
SCALE_FACTOR = 65

MLP_SIDECAR_HEADER = struct.Struct("<Q")


@dataclass(frozen=True, eq=False)
class GaussianModel:
    """A parsed GS model.

    ``params`` has one row per Gaussian (3DGS) or voxel (Scaffold-GS).
    ``color_space`` tracks whether 3DGS SH coefficients are currently RGB or
    YUV; it is ``None`` for Scaffold models.
    """

    kind: ModelKind
    params: np.ndarray
    mlp_blob: bytes | None = None
    source_metadata: dict[str, str] = field(default_factory=dict)
    color_space: str | None = None

    def __post_init__(self):
        kind = ModelKind(self.kind)
        object.__setattr__(self, "kind", kind)
        params = np.array(self.params, dtype=np.float32, copy=True, order="C")
        if params.ndim != 2 or params.shape[1] != N_PARAMS[kind]:
            raise ValueError(
                f"{kind.name} params must have shape (N, {N_PARAMS[kind]}), got {params.shape}"
            )
        if params.shape[0] < 1:
            raise ValueError("a model needs at least one element")
        params.setflags(write=False)
        object.__setattr__(self, "params", params)
        if kind == ModelKind.SCAFFOLD:
            if self.mlp_blob is None:
                raise MissingMlp("Scaffold models must carry an MLP blob")
            if self.color_space is not None:
                raise ValueError("Scaffold models have no color space")
            object.__setattr__(self, "mlp_blob", bytes(self.mlp_blob))
        else:
            if self.mlp_blob is not None:
                raise ValueError("3DGS models cannot carry an MLP blob")
            cs = self.color_space or "rgb"
            if cs not in ("rgb", "yuv"):
                raise ValueError(f"unknown color space {cs!r}")
            object.__setattr__(self, "color_space", cs)
        object.__setattr__(self, "source_metadata", dict(self.source_metadata))

    def __len__(self) -> int:
        return self.params.shape[0]

    def __eq__(self, other) -> bool:
        if not isinstance(other, GaussianModel):
            return NotImplemented
        return (
            self.kind == other.kind
            and self.color_space == other.color_space
            and self.mlp_blob == other.mlp_blob
            and self.source_metadata == other.source_metadata
            and self.params.shape == other.params.shape
            and np.array_equal(self.params.view(np.uint32), other.params.view(np.uint32))
        )

    __hash__ = None

    @property
    def n_params(self) -> int:
        return self.params.shape[1]

    @property
    def param_names(self) -> tuple[str, ...]:
        return PARAM_NAMES[self.kind]

    def replace(self, **changes) -> "GaussianModel":
        return dataclasses.replace(self, **changes)

    def subset(self, indices) -> "GaussianModel":
        """Model restricted to ``indices`` (in the given order)."""
        return self.replace(params=self.params[np.asarray(indices)])

    # 3DGS views
    @property
    def positions(self) -> np.ndarray:
        return self.params[:, POSITION]

    @property
    def sh_dc(self) -> np.ndarray:
        self._need(ModelKind.THREEDGS)
        return self.params[:, SH_DC]

    @property
    def sh_ac(self) -> np.ndarray:
        self._need(ModelKind.THREEDGS)
        return self.params[:, SH_AC]

    @property
    def scales(self) -> np.ndarray:
        self._need(ModelKind.THREEDGS)
        return self.params[:, SCALE]

    @property
    def rotations(self) -> np.ndarray:
        self._need(ModelKind.THREEDGS)
        return self.params[:, ROTATION]

    @property
    def opacities(self) -> np.ndarray:
        self._need(ModelKind.THREEDGS)
        return self.params[:, OPACITY]

    # Scaffold views
    @property
    def offsets(self) -> np.ndarray:
        self._need(ModelKind.SCAFFOLD)
        return self.params[:, OFFSETS]

    @property
    def anchor_features(self) -> np.ndarray:
        self._need(ModelKind.SCAFFOLD)
        return self.params[:, ANCHOR_FEATURES]

    @property
    def scale_factors(self) -> np.ndarray:
        self._need(ModelKind.SCAFFOLD)
        return self.params[:, SCALE_FACTOR]

    def _need(self, kind):
        if self.kind != kind:
            raise AttributeError(f"not available on a {self.kind.name} model")


def detect_flavor(property_names) -> ModelKind:
    """Flavor from a set of PLY vertex property names.

    Extra properties (e.g. the normals most 3DGS trainers write) are allowed;
    the required set of exactly one flavor must be present.
    """
    names = set(property_names)
    matches = [kind for kind, req in PARAM_NAMES.items() if set(req) <= names]
    if len(matches) != 1:
        raise UnknownFlavor(
            "vertex properties match no supported model flavor"
            if not matches
            else "vertex properties match more than one model flavor"
        )
    return matches[0]


_PLY_TYPES = {
    "char": "i1", "int8": "i1",
    "uchar": "u1", "uint8": "u1",
    "short": "i2", "int16": "i2",
    "ushort": "u2", "uint16": "u2",
    "int": "i4", "int32": "i4",
    "uint": "u4", "uint32": "u4",
    "float": "f4", "float32": "f4",
    "double": "f8", "float64": "f8",
}

_HEADER_END = re.compile(rb"end_header\r?\n")


def _parse_header(data: bytes):
    if not data.startswith(b"ply"):
        raise MalformedFile("not a PLY file (missing 'ply' magic)")
    m = _HEADER_END.search(data, 0, 1 << 20)
    if m is None:
        raise MalformedFile("PLY header is not terminated by end_header")
    try:
        lines = data[: m.start()].decode("ascii").splitlines()
    except UnicodeDecodeError as exc:
        raise MalformedFile("PLY header is not ASCII") from exc

    fmt = None
    metadata: dict[str, str] = {}
    elements: list[list] = []
    for line in lines[1:]:
        tok = line.split()
        if not tok:
            continue
        if tok[0] == "format":
            if len(tok) != 3 or tok[1] not in ("ascii", "binary_little_endian"):
                raise MalformedFile(f"unsupported PLY format line {line!r}")
            fmt = tok[1]
        elif tok[0] == "comment":
            body = line.partition("comment")[2].strip()
            key, sep, value = body.partition("=")
            if sep:
                metadata[key.strip()] = value.strip()
        elif tok[0] == "obj_info":
            continue
        elif tok[0] == "element":
            if len(tok) != 3 or not tok[2].isdigit():
                raise MalformedFile(f"bad element line {line!r}")
            elements.append([tok[1], int(tok[2]), []])
        elif tok[0] == "property":
            if not elements:
                raise MalformedFile("property before any element")
            if len(tok) != 3:
                raise MalformedFile(f"unsupported property line {line!r}")
            if tok[1] not in _PLY_TYPES:
                raise MalformedFile(f"unknown property type {tok[1]!r}")
            elements[-1][2].append((tok[2], _PLY_TYPES[tok[1]]))
        else:
            raise MalformedFile(f"unexpected header line {line!r}")
    if fmt is None:
        raise MalformedFile("PLY header has no format line")
    vertex = [e for e in elements if e[0] == "vertex"]
    if len(vertex) != 1:
        raise MalformedFile("PLY file must contain exactly one vertex element")
    if any(e[1] for e in elements if e[0] != "vertex"):
        raise MalformedFile("non-empty elements other than 'vertex' are not supported")
    if elements[0][0] != "vertex":
        raise MalformedFile("vertex must be the first element")
    _, count, props = vertex[0]
    names = [p[0] for p in props]
    if len(set(names)) != len(names):
        raise MalformedFile("duplicate vertex property names")
    return fmt, count, props, metadata, m.end()


def _split_sidecar(tail: bytes) -> bytes | None:
    if not tail:
        return None
    if len(tail) < MLP_SIDECAR_HEADER.size:
        raise MalformedFile("trailing bytes after vertex data are not an MLP sidecar")
    (n,) = MLP_SIDECAR_HEADER.unpack_from(tail)
    if n != len(tail) - MLP_SIDECAR_HEADER.size:
        raise MalformedFile("MLP sidecar length does not match the trailing data")
    return tail[MLP_SIDECAR_HEADER.size:]


def parse_model(data: bytes, mlp_blob: bytes | None = None) -> GaussianModel:
    """Parse a PLY file (binary little-endian or ASCII) into a model.

    ``mlp_blob`` supplies a Scaffold MLP blob from a companion file; it takes
    precedence over a sidecar appended to the PLY payload.
    """
    data = bytes(data)
    fmt, count, props, metadata, offset = _parse_header(data)
    names = [p[0] for p in props]
    kind = detect_flavor(names)
    if count < 1:
        raise MalformedFile("PLY vertex element is empty")

    if fmt == "binary_little_endian":
        dtype = np.dtype([(name, "<" + t) for name, t in props])
        end = offset + dtype.itemsize * count
        if end > len(data):
            raise MalformedFile("PLY vertex data is truncated")
        table = np.frombuffer(data, dtype=dtype, count=count, offset=offset)
        columns = [table[name].astype(np.float32) for name in PARAM_NAMES[kind]]
        tail = data[end:]
    else:
        body = data[offset:].split(b"\n", count)
        if len(body) < count:
            raise MalformedFile("PLY vertex data is truncated")
        rows = body[:count]
        tail = body[count] if len(body) > count else b""
        try:
            values = np.array([r.split() for r in rows], dtype=np.float64)
        except ValueError as exc:
            raise MalformedFile("malformed ASCII vertex rows") from exc
        if values.ndim != 2 or values.shape[1] != len(props):
            raise MalformedFile("ASCII vertex rows have the wrong number of values")
        index = {name: i for i, name in enumerate(names)}
        columns = [values[:, index[name]].astype(np.float32) for name in PARAM_NAMES[kind]]
        if tail.strip() == b"":
            tail = b""

    params = np.stack(columns, axis=1)
    if not np.isfinite(params).all():
        bad = int(np.argwhere(~np.isfinite(params))[0, 0])
        raise NonFiniteValue(f"non-finite parameter value in element {bad}")

    sidecar = _split_sidecar(tail)
    blob = mlp_blob if mlp_blob is not None else sidecar
    if kind == ModelKind.THREEDGS:
        if blob is not None:
            raise MalformedFile("3DGS files do not carry an MLP sidecar")
        return GaussianModel(kind, params, source_metadata=metadata, color_space="rgb")
    if blob is None:
        raise MissingMlp("Scaffold model has no MLP blob (no sidecar and no companion file)")
    return GaussianModel(kind, params, mlp_blob=blob, source_metadata=metadata)


def write_model(model: GaussianModel, *, embed_mlp: bool = True) -> bytes:
    """Serialize as binary little-endian PLY.

    Scaffold MLP blobs are appended as a length-prefixed sidecar unless
    ``embed_mlp`` is false (the caller then writes a companion file).
    """
    if model.kind == ModelKind.THREEDGS and model.color_space != "rgb":
        raise WrongState("convert SH coefficients back to RGB before writing")
    lines = ["ply", "format binary_little_endian 1.0"]
    for key, value in model.source_metadata.items():
        lines.append(f"comment {key}={value}")
    lines.append(f"element vertex {len(model)}")
    lines.extend(f"property float {name}" for name in model.param_names)
    lines.append("end_header")
    out = ("\n".join(lines) + "\n").encode("ascii")
    out += model.params.astype("<f4", copy=False).tobytes()
    if model.kind == ModelKind.SCAFFOLD and embed_mlp:
        out += MLP_SIDECAR_HEADER.pack(len(model.mlp_blob)) + model.mlp_blob
    return out


def read_model(path, mlp_path=None) -> GaussianModel:
    with open(path, "rb") as f:
        data = f.read()
    blob = None
    if mlp_path is not None:
        with open(mlp_path, "rb") as f:
            blob = f.read()
    return parse_model(data, mlp_blob=blob)


def save_model(model: GaussianModel, path, mlp_path=None) -> None:
    with open(path, "wb") as f:
        f.write(write_model(model, embed_mlp=mlp_path is None))
    if mlp_path is not None and model.kind == ModelKind.SCAFFOLD:
        with open(mlp_path, "wb") as f:
            f.write(model.mlp_blob)
