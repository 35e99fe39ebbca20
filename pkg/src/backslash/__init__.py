"""Rate-constrained training and exp-Golomb coding of model parameters."""

from .codec import decode_tensor, encode_tensor, rate_report
from .errors import (
    BackslashError,
    CorruptionError,
    DegenerateSampleError,
    DivergenceError,
    DomainError,
    FormatError,
    RangeError,
    ShapeError,
    TruncationError,
)
from .ggd import GGFit, fit_gg, gg_pdf, rho, solve_shape
from .rate import RateConfig, dggr, soft_rate, soft_rate_grad
from .tensorstore import ParameterTensor, load_tensors, prune, quantize, save_tensors
from .trainer import Model, TrainConfig, evaluate, gen_blobs, train

__version__ = "0.1.0"
