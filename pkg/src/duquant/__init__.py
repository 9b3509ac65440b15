"""Low-bit weight-activation quantization via an invertible dual transform:
per-channel smoothing, an outlier-targeted block rotation, a zigzag channel
permutation, and a second block rotation."""

from .calib import OutlierProfile, SynthSpec, aggregate_profile, classify_outliers, synth_activations
from .permute import (
    Permutation,
    apply_permutation,
    block_variance,
    random_permutation,
    zigzag_mean_bound,
    zigzag_permutation,
)
from .pipeline import (
    ErrorReport,
    PipelineConfig,
    TransformBundle,
    ablation_sweep,
    calibrate,
    quantized_forward,
    save_bundle,
    transform_activation,
    transform_weight,
)
from .quant import ClipParams, QuantConfig, QuantizedTensor, dequantize, quant_error, quantize, search_clip
from .rotate import (
    BlockDiagonalRotation,
    BlockRotation,
    RotationSpec,
    apply_block_rotation,
    assemble_block_diagonal,
    build_single_rotation,
    greedy_rotation,
    hadamard,
    random_orthogonal,
    uniform_first_row_orthogonal,
)
from .smooth import SmoothingScale, apply_smoothing, compute_smoothing
from .tensor import (
    Axis,
    NpyFormatError,
    ShapeError,
    col_absmax,
    matmul,
    read_npy,
    row_absmax,
    transpose,
    write_npy,
)

__version__ = "0.1.0"
