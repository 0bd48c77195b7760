"""Training-free compression of Gaussian Splatting models via 2-D image codecs."""
from . import _kernels
from .bench import OrderingBenchResult, bench_orderings
from .bitstream import decode, encode, encode_detailed, encode_points, inspect
from .clustering import ClusterSet, extract_features, fixed_size_kmeans
from .color import sh_rgb_to_yuv, sh_yuv_to_rgb
from .errors import GsicoError
from .imaging import CodecRequest, available_backends, decode_image, encode_image, register_backend
from .layout import MapGeometry, compute_geometry, prune
from .metrics import mean_gradient, shannon_entropy
from .model_io import GaussianModel, ModelKind, parse_model, read_model, save_model, write_model
from .nns import AssignmentMatrix, ParameterMapSet, build_maps, invert_maps, nns_sort
from .quantization import OperatingPoint, QuantizedMap, dequantize_map, preset, quantize_map
from .synthetic import generate_synthetic

__version__ = "0.1.0"

_kernels.set_threads()
