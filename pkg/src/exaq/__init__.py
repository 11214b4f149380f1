"""Exponent-aware quantization of softmax inputs.

Analytical engine that finds MSE-optimal clipping values for sub-4-bit
quantization of pre-exponent activations, plus lookup-table softmax kernels
that replace per-element exponentiation and 4-way accumulation with table
lookups.
"""

__version__ = "0.1.0"

from .clip_optimizer import (
    DEFAULT_CLIP_MODELS,
    BoundarySolutionError,
    ClipSolution,
    LinearClipModel,
    PredictedClip,
    fit_linear_model,
    predict_clip,
    simulate_empirical_clip,
    solve_optimal_clip,
)
from .gaussian_mse import (
    GaussianParams,
    MseBreakdown,
    mse_clip,
    mse_quadrature_oracle,
    mse_quant,
    mse_total,
    partial_exp_moment,
    uniform_noise_factor,
)
from .lut_engine import (
    DEFAULT_PACK_WIDTH,
    ExpLut,
    LutBundle,
    LutFormatError,
    SumLut,
    build_bundle,
    build_exp_lut,
    build_sum_lut,
    load_lut,
    pack_codes,
    save_lut,
    unpack_key,
)
from .quantizer import (
    CalibStats,
    QuantSpec,
    calibrate,
    dequantize,
    make_spec_dynamic,
    make_spec_exaq,
    make_spec_naive,
    quantize_row,
    shift_by_max,
)
from .softmax_kernels import (
    SoftmaxResult,
    output_mse,
    softmax_exaq,
    softmax_exaq_batch,
    softmax_quantized_scalar,
    softmax_reference,
)
from .tensor_io import (
    BadMagicError,
    NonFiniteError,
    TensorF32,
    TensorIOError,
    TensorStats,
    TruncatedFileError,
    gen_gaussian_tensor,
    load_tensor,
    save_tensor,
    tensor_stats,
)
