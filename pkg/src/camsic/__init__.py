"""Stereo image codec with an iterative masked Transformer entropy model.

Core flow: analysis transform -> quantized latents -> per-view iterative
range coding under a conditional Gaussian field predicted from hyperprior
and cross-view priors -> versioned container.  The service package wraps
this engine behind HTTP; the CLI is a thin client of the service.
"""

__version__ = "0.1.0"

from .codec import (DecodeResult, EncodeResult, decode_pair, encode_pair,
                    parse_container, two_step_rate)
from .config import DESK_CONFIG, ModelConfig
from .errors import CamsicError
from .metrics import bd_psnr, bd_rate, psnr
from .ppm import read_ppm, write_ppm
from .weights_io import (WEIGHTS_ENV_VAR, WeightStore, load_weights_file,
                         random_store, save_weights, validate_manifest)

__all__ = [
    "CamsicError", "DecodeResult", "DESK_CONFIG", "EncodeResult",
    "ModelConfig", "WEIGHTS_ENV_VAR", "WeightStore", "bd_psnr", "bd_rate",
    "decode_pair", "encode_pair", "load_weights_file", "parse_container",
    "psnr", "random_store", "read_ppm", "save_weights", "two_step_rate",
    "validate_manifest", "write_ppm", "__version__",
]
