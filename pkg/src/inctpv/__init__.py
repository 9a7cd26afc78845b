"""Solvers for Total-p-Variation regularized imaging inverse problems.

The package covers the weighted subproblem solver (Chambolle-Pock), the
iterative reweighting loop, incremental p/lambda schedules with optional
guess operators, Gaussian-blur and fan-beam forward models, phantom
generation, the noise model, quality metrics, and an experiment driver.
"""

__version__ = "0.1.0"

from .cp import DivergenceError, cp_solve, subproblem_objective
from .datasets import (
    NoiseModel,
    corrupt,
    export_training_pairs,
    load_image_folder,
    load_png,
    load_training_manifest,
    read_manifest,
    save_png16,
    sha256_file,
    write_phantom_dataset,
)
from .guess import (
    GuessOperator,
    identity_guess,
    load_model_guess,
    oracle_blend_guess,
)
from .image import (
    GradientField,
    gradient,
    gradient_adjoint,
    gradient_magnitude,
    tpv_objective,
)
from .incremental import (
    DegenerateObjectiveError,
    IncrementalConfig,
    IncrementalTrace,
    TraceStep,
    inc_dg,
    inc_tpv,
    update_lambda,
    update_p,
)
from .metrics import BatchStats, batch_stats, relative_error, ssim
from .operators import (
    FanBeamGeometry,
    FanBeamOperator,
    GaussianBlurOperator,
    IdentityOperator,
    LinearOperator,
    StackedOperator,
    estimate_operator_norm,
    fbp_reconstruct,
    make_gaussian_kernel,
)
from .phantoms import EllipsePhantomSpec, generate_batch, generate_phantom
from .reweight import IrConfig, compute_weights, ir_solve

__all__ = [
    "BatchStats",
    "DegenerateObjectiveError",
    "DivergenceError",
    "EllipsePhantomSpec",
    "FanBeamGeometry",
    "FanBeamOperator",
    "GaussianBlurOperator",
    "GradientField",
    "GuessOperator",
    "IdentityOperator",
    "IncrementalConfig",
    "IncrementalTrace",
    "IrConfig",
    "LinearOperator",
    "NoiseModel",
    "StackedOperator",
    "TraceStep",
    "batch_stats",
    "compute_weights",
    "corrupt",
    "cp_solve",
    "estimate_operator_norm",
    "export_training_pairs",
    "fbp_reconstruct",
    "generate_batch",
    "generate_phantom",
    "gradient",
    "gradient_adjoint",
    "gradient_magnitude",
    "identity_guess",
    "inc_dg",
    "inc_tpv",
    "ir_solve",
    "load_image_folder",
    "load_model_guess",
    "load_png",
    "load_training_manifest",
    "make_gaussian_kernel",
    "oracle_blend_guess",
    "read_manifest",
    "relative_error",
    "save_png16",
    "sha256_file",
    "ssim",
    "subproblem_objective",
    "tpv_objective",
    "update_lambda",
    "update_p",
    "write_phantom_dataset",
]
