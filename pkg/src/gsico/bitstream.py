"""The .gsico container and the end-to-end encode/decode pipelines.

Layout (all integers little-endian)::

    header   magic "GSIC", version u8, model_kind u8, n_elements_kept u64,
             w_map u32, h_map u32, n_maps u16, rd_index u8,
             backend name (u16 length + UTF-8), mlp_blob_len u64
    records  n_maps x (param_id u16, bit_depth u8, x_min f32, x_max f32,
             codec_mode u8, quality u8, payload_len u64, payload)
    blob     mlp_blob_len raw bytes (Scaffold-GS only)
    trailer  CRC-32 of everything above, u32

Records follow the canonical parameter order. A bit depth of 0 marks a
discarded map with an empty payload. ``rd_index`` 0 denotes a custom
operating point; bit depths are always read from the records.
"""
from __future__ import annotations

import struct
import zlib
from dataclasses import dataclass

import numpy as np

from .clustering import ClusterSet, extract_features, fixed_size_kmeans
from .color import sh_rgb_to_yuv, sh_yuv_to_rgb
from .errors import (
    BadMagic,
    CorruptPayload,
    GsicoError,
    InvariantViolation,
    VersionMismatch,
    WrongFlavor,
)
from .imaging import MAX_PIXELS, CodecRequest, decode_image, encode_image, get_backend
from .layout import BLOCK, MapGeometry, compute_geometry, prune
from .metrics import shannon_entropy
from .model_io import N_PARAMS, PARAM_NAMES, GaussianModel, ModelKind
from .nns import (
    AssignmentMatrix,
    ParameterMapSet,
    assign_clusters_to_blocks,
    build_maps,
    fill_blocks,
    invert_maps,
)
from .quantization import (
    LOSSLESS,
    MAX_BIT_DEPTH,
    OperatingPoint,
    QuantizedMap,
    dequantize_map,
    param_group,
    preset,
    quantize_map,
)

MAGIC = b"GSIC"
VERSION = 1
CODEC_LOSSLESS = 0
CODEC_LOSSY = 1

_HEADER = struct.Struct("<4sBBQIIHB")
_U16 = struct.Struct("<H")
_U64 = struct.Struct("<Q")
_RECORD = struct.Struct("<HBffBBQ")
_TRAILER = struct.Struct("<I")


@dataclass(frozen=True)
class ContainerHeader:
    model_kind: ModelKind
    n_elements_kept: int
    w_map: int
    h_map: int
    n_maps: int
    rd_index: int
    backend_name: str
    mlp_blob_len: int
    version: int = VERSION

    def pack(self) -> bytes:
        name = self.backend_name.encode("utf-8")
        return (
            _HEADER.pack(MAGIC, self.version, int(self.model_kind), self.n_elements_kept,
                         self.w_map, self.h_map, self.n_maps, self.rd_index)
            + _U16.pack(len(name)) + name
            + _U64.pack(self.mlp_blob_len)
        )


@dataclass(frozen=True)
class MapRecord:
    param_id: int
    bit_depth: int
    x_min: float
    x_max: float
    codec_mode: int
    quality: int
    payload: bytes

    def pack(self) -> bytes:
        return _RECORD.pack(self.param_id, self.bit_depth, self.x_min, self.x_max,
                            self.codec_mode, self.quality, len(self.payload)) + self.payload

    @property
    def size(self) -> int:
        return _RECORD.size + len(self.payload)


@dataclass
class EncodeTrace:
    """Intermediate products of one encoder run (for tests and benchmarks)."""

    container: bytes
    model: GaussianModel          # pruned, in coding color space
    geometry: MapGeometry
    features: np.ndarray
    clusters: ClusterSet
    m_blocks: AssignmentMatrix
    m_all: AssignmentMatrix
    maps: ParameterMapSet
    quantized: list
    records: list


# encoder ---------------------------------------------------------------------

def prepare_model(model: GaussianModel, scaffold_score: str = "mlp"):
    """Color-convert (3DGS) and prune to the map geometry."""
    coding = model
    if model.kind == ModelKind.THREEDGS and model.color_space == "rgb":
        coding = sh_rgb_to_yuv(model)
    geometry = compute_geometry(len(coding))
    return prune(coding, geometry, scaffold_score=scaffold_score), geometry


def map_assignment(model: GaussianModel, geometry: MapGeometry, seed: int):
    features = extract_features(model)
    clusters = fixed_size_kmeans(features, seed)
    m_blocks = assign_clusters_to_blocks(clusters, features, geometry)
    m_all = fill_blocks(clusters, features, m_blocks, geometry)
    return features, clusters, m_blocks, m_all


def code_maps(maps: ParameterMapSet, point: OperatingPoint, backend="png"):
    """Quantize and image-code every map. Returns (quantized, records).

    Maps the operating point marks lossy are coded losslessly when the
    backend has no lossy mode.
    """
    be = get_backend(backend)
    quantized, records = [], []
    for pid in range(len(maps)):
        b = point.depth(pid)
        qm = quantize_map(maps.maps[pid], b, pid)
        quantized.append(qm)
        if b == 0:
            records.append(MapRecord(pid, 0, qm.x_min, qm.x_max, CODEC_LOSSLESS, LOSSLESS, b""))
            continue
        depth = 8 if b <= 8 else 16
        quality = point.quality(pid)
        lossy = quality < LOSSLESS and be.supports_lossy and depth == 8
        req = CodecRequest(qm.indices, depth, quality if lossy else None)
        payload = encode_image(req, be)
        records.append(MapRecord(pid, b, qm.x_min, qm.x_max,
                                 CODEC_LOSSY if lossy else CODEC_LOSSLESS,
                                 quality if lossy else LOSSLESS, payload))
    return quantized, records


def serialize(header: ContainerHeader, records, mlp_blob: bytes | None) -> bytes:
    body = header.pack() + b"".join(r.pack() for r in records) + (mlp_blob or b"")
    return body + _TRAILER.pack(zlib.crc32(body))


def _resolve_point(model, point, rd):
    if point is None:
        return preset(model.kind, rd)
    if point.kind != model.kind:
        raise WrongFlavor(f"operating point is for {point.kind.name}, model is {model.kind.name}")
    return point


def encode_detailed(model: GaussianModel, point: OperatingPoint | None = None, backend="png",
                    seed: int = 0, *, rd: int = 1, scaffold_score: str = "mlp") -> EncodeTrace:
    point = _resolve_point(model, point, rd)
    be = get_backend(backend)
    pruned, geometry = prepare_model(model, scaffold_score)
    features, clusters, m_blocks, m_all = map_assignment(pruned, geometry, seed)
    maps = build_maps(pruned, m_all)
    quantized, records = code_maps(maps, point, be)
    blob = pruned.mlp_blob if model.kind == ModelKind.SCAFFOLD else None
    header = ContainerHeader(model.kind, geometry.n_kept, geometry.w_map, geometry.h_map,
                             len(maps), point.rd_index, be.name, len(blob or b""))
    container = serialize(header, records, blob)
    return EncodeTrace(container, pruned, geometry, features, clusters, m_blocks, m_all,
                       maps, quantized, records)


def encode_points(model: GaussianModel, points, backend="png", seed: int = 0, *,
                  scaffold_score: str = "mlp") -> list[EncodeTrace]:
    """Encode at several operating points, running the ordering stage once.

    Each container is byte-identical to ``encode(model, point, backend, seed)``.
    """
    points = list(points)
    if not points:
        return []
    first = encode_detailed(model, points[0], backend, seed, scaffold_score=scaffold_score)
    traces = [first]
    be = get_backend(backend)
    blob = first.model.mlp_blob if model.kind == ModelKind.SCAFFOLD else None
    for point in points[1:]:
        point = _resolve_point(model, point, 1)
        quantized, records = code_maps(first.maps, point, be)
        g = first.geometry
        header = ContainerHeader(model.kind, g.n_kept, g.w_map, g.h_map, len(first.maps),
                                 point.rd_index, be.name, len(blob or b""))
        traces.append(EncodeTrace(serialize(header, records, blob), first.model, g, first.features,
                                  first.clusters, first.m_blocks, first.m_all, first.maps,
                                  quantized, records))
    return traces


def encode(model: GaussianModel, point: OperatingPoint | None = None, backend="png",
           seed: int = 0, *, rd: int = 1, scaffold_score: str = "mlp") -> bytes:
    """Compress ``model``. ``point`` defaults to the preset ``rd`` for its kind."""
    return encode_detailed(model, point, backend, seed, rd=rd, scaffold_score=scaffold_score).container


# decoder ---------------------------------------------------------------------

@dataclass
class ParsedContainer:
    header: ContainerHeader
    records: list
    mlp_blob: bytes | None
    header_bytes: int
    total_bytes: int


def parse_container(data: bytes) -> ParsedContainer:
    data = bytes(data)
    if len(data) < 4 or data[:4] != MAGIC:
        raise BadMagic("not a gsico container")
    if len(data) < 5:
        raise CorruptPayload("container truncated in header")
    if data[4] != VERSION:
        raise VersionMismatch(f"container version {data[4]}, this decoder reads {VERSION}")
    if len(data) < _HEADER.size + _U16.size + _U64.size + _TRAILER.size:
        raise CorruptPayload("container truncated in header")
    body, (crc,) = data[:-_TRAILER.size], _TRAILER.unpack_from(data, len(data) - _TRAILER.size)
    if zlib.crc32(body) != crc:
        raise CorruptPayload("container checksum mismatch")

    _, version, kind, n_kept, w, h, n_maps, rd_index = _HEADER.unpack_from(body, 0)
    pos = _HEADER.size
    (name_len,) = _U16.unpack_from(body, pos)
    pos += _U16.size
    if pos + name_len + _U64.size > len(body):
        raise CorruptPayload("container truncated in header")
    try:
        backend_name = body[pos : pos + name_len].decode("utf-8")
    except UnicodeDecodeError as exc:
        raise InvariantViolation("backend name is not UTF-8") from exc
    pos += name_len
    (blob_len,) = _U64.unpack_from(body, pos)
    pos += _U64.size
    header_bytes = pos

    if kind not in (0, 1):
        raise InvariantViolation(f"unknown model kind {kind}")
    kind = ModelKind(kind)
    if n_maps != N_PARAMS[kind]:
        raise InvariantViolation(f"{kind.name} containers hold {N_PARAMS[kind]} maps, header says {n_maps}")
    if w == 0 or h == 0 or w % BLOCK or h % BLOCK:
        raise InvariantViolation(f"map size {w}x{h} is not a positive multiple of {BLOCK}")
    if w * h != n_kept or n_kept > MAX_PIXELS:
        raise InvariantViolation("element count does not match the map size")
    if rd_index > 5:
        raise InvariantViolation(f"rd_index {rd_index} out of range")
    if (kind == ModelKind.SCAFFOLD) != (blob_len > 0):
        raise InvariantViolation("MLP blob presence does not match the model kind")

    records = []
    for expected_id in range(n_maps):
        if pos + _RECORD.size > len(body):
            raise CorruptPayload("container truncated in map records")
        pid, b, x_min, x_max, mode, quality, plen = _RECORD.unpack_from(body, pos)
        pos += _RECORD.size
        if pid != expected_id:
            raise InvariantViolation(f"map record {expected_id} has parameter id {pid}")
        if b > MAX_BIT_DEPTH or mode not in (CODEC_LOSSLESS, CODEC_LOSSY) or quality > LOSSLESS:
            raise InvariantViolation(f"map record {pid} has invalid coding fields")
        if (b == 0) != (plen == 0):
            raise InvariantViolation(f"map record {pid}: payload presence does not match bit depth")
        if mode == CODEC_LOSSY and (b > 8 or quality >= LOSSLESS):
            raise InvariantViolation(f"map record {pid}: invalid lossy coding fields")
        if mode == CODEC_LOSSLESS and quality != LOSSLESS:
            raise InvariantViolation(f"map record {pid}: lossless record with quality {quality}")
        if not (np.isfinite(x_min) and np.isfinite(x_max)) or x_min > x_max:
            raise InvariantViolation(f"map record {pid} has an invalid value range")
        if pos + plen > len(body):
            raise CorruptPayload("container truncated in map payload")
        records.append(MapRecord(pid, b, float(x_min), float(x_max), mode, quality,
                                 body[pos : pos + plen]))
        pos += plen
    if pos + blob_len != len(body):
        raise InvariantViolation("container size does not match its contents")
    blob = body[pos:] if blob_len else None
    header = ContainerHeader(kind, n_kept, w, h, n_maps, rd_index, backend_name, blob_len, version)
    return ParsedContainer(header, records, blob, header_bytes, len(data))


def decode_quantized(parsed: ParsedContainer) -> list:
    """Image-decode every record into a QuantizedMap."""
    hdr = parsed.header
    shape = (hdr.h_map, hdr.w_map)
    be = get_backend(hdr.backend_name)
    out = []
    for rec in parsed.records:
        if rec.bit_depth == 0:
            out.append(QuantizedMap(np.zeros(shape, dtype=np.uint16), 0, rec.x_min, rec.x_max, rec.param_id))
            continue
        img = decode_image(rec.payload, be)
        samples = np.asarray(img.samples)
        if samples.shape != shape:
            raise InvariantViolation(f"map {rec.param_id} decodes to {samples.shape}, expected {shape}")
        if img.sample_depth != (8 if rec.bit_depth <= 8 else 16):
            raise InvariantViolation(f"map {rec.param_id} has the wrong sample depth")
        top = (1 << rec.bit_depth) - 1
        if rec.codec_mode == CODEC_LOSSLESS and samples.max() > top:
            raise InvariantViolation(f"map {rec.param_id} has indices above 2^{rec.bit_depth}-1")
        indices = np.minimum(samples, top).astype(np.uint16)
        out.append(QuantizedMap(indices, rec.bit_depth, rec.x_min, rec.x_max, rec.param_id))
    return out


def decode(data: bytes, *, to_rgb: bool = True) -> GaussianModel:
    """Reconstruct a model; elements come out in row-major pixel order.

    With ``to_rgb=False`` a 3DGS model is returned in the YUV coding space.
    """
    try:
        parsed = parse_container(data)
        hdr = parsed.header
        quantized = decode_quantized(parsed)
        stack = np.stack([dequantize_map(q) for q in quantized]).astype(np.float32)
        cs = "yuv" if hdr.model_kind == ModelKind.THREEDGS else None
        model = invert_maps(ParameterMapSet(hdr.model_kind, stack, cs), mlp_blob=parsed.mlp_blob)
        if hdr.model_kind == ModelKind.THREEDGS and to_rgb:
            model = sh_yuv_to_rgb(model)
        if not np.isfinite(model.params).all():
            raise InvariantViolation("decoded parameters overflow float32")
        return model
    except GsicoError:
        raise
    except Exception as exc:  # defensive: malformed input must never escape as a crash
        raise CorruptPayload(f"container could not be decoded: {exc}") from exc


def inspect(data: bytes) -> dict:
    """Per-map sizes, ranges, depths and entropies, plus totals.

    ``header_bytes + sum(record_bytes) + mlp_bytes + trailer_bytes`` equals
    ``total_bytes``.
    """
    parsed = parse_container(data)
    hdr = parsed.header
    quantized = decode_quantized(parsed)
    names = PARAM_NAMES[hdr.model_kind]
    maps = []
    for rec, q in zip(parsed.records, quantized):
        maps.append({
            "param_id": rec.param_id,
            "name": names[rec.param_id],
            "group": param_group(hdr.model_kind, rec.param_id),
            "bit_depth": rec.bit_depth,
            "x_min": rec.x_min,
            "x_max": rec.x_max,
            "codec": "lossy" if rec.codec_mode == CODEC_LOSSY else "lossless",
            "quality": rec.quality,
            "payload_bytes": len(rec.payload),
            "record_bytes": rec.size,
            "entropy_bits": shannon_entropy(q) if rec.bit_depth else 0.0,
        })
    raw = hdr.n_elements_kept * hdr.n_maps * 4
    return {
        "version": hdr.version,
        "model_kind": hdr.model_kind.name,
        "n_elements": hdr.n_elements_kept,
        "w_map": hdr.w_map,
        "h_map": hdr.h_map,
        "n_maps": hdr.n_maps,
        "rd_index": hdr.rd_index,
        "backend": hdr.backend_name,
        "header_bytes": parsed.header_bytes,
        "maps_bytes": sum(m["record_bytes"] for m in maps),
        "mlp_bytes": hdr.mlp_blob_len,
        "trailer_bytes": _TRAILER.size,
        "total_bytes": parsed.total_bytes,
        "raw_f32_bytes": raw,
        "compression_factor": raw / parsed.total_bytes,
        "maps": maps,
    }
