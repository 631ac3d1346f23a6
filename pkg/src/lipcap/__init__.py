"""Capacity diagnostics for normalized feedforward networks."""

__version__ = "0.1.0"

from .errors import ConfigError, ShapeError
from .linalg import chain_truncate_pad, inf_norm, max_norm, truncate_pad
from .normalizers import (
    BnStats,
    GnCfg,
    LnCfg,
    NormalizerCfg,
    bn_apply,
    bn_jacobian_diag,
    gn_apply,
    gn_jacobian,
    ln_apply,
    ln_jacobian,
    norm_lipschitz,
)
from .network import (
    Activation,
    LayerSpec,
    NetworkSpec,
    batch_prenorm_variance,
    forward,
    forward_batch,
    forward_trace,
    validate_network,
    weight_norm_product,
)
from .bounds import (
    CapacityReport,
    capacity_report,
    estimate_activation_sup,
    input_lipschitz_upper,
    loss_weight_lipschitz_upper,
    optimization_report,
    reduction_factors,
    weight_lipschitz_upper,
)
from .witness import (
    IDENTITY_LOSS,
    SQUARED_LOSS,
    GradientWitness,
    ScalarLoss,
    WitnessCfg,
    analytic_gradient,
    build_gradient_witness,
    build_input_witness,
    build_weight_witness,
    make_trunc_pad_matrix,
)
from .lipestimate import (
    LipEstimate,
    Region,
    directional_quotient,
    finite_diff_jacobian,
    rowwise,
    sampled_lipschitz,
)
from .genbound import (
    GenBoundReport,
    PartitionedData,
    estimate_lambda,
    exclude_zero_measure,
    g_term,
    generalization_bound,
    grid_partition,
    normalized_gen_bound,
)
from .trainer import (
    TrainConfig,
    TrainTrace,
    backward,
    build_mlp,
    he_init,
    loss_l1,
    loss_mse,
    one_hot,
    train,
)
from .datasets import annulus, gaussian_blobs
