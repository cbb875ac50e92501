"""Maximum-margin hypersphere anomaly detection with an interpretable final layer."""

from .data import (
    LabeledDataset,
    SplitDataset,
    generate_moons,
    generate_spiral,
    kfold,
    load_csv,
    make_split,
)
from .metrics import accuracy, auc, export_boundary, export_distance_density, nu_audit
from .network import (
    AdamState,
    Gradients,
    Layer,
    Network,
    adam_step,
    backward,
    forward,
    forward_batch,
    init_network,
)
from .sphere import (
    HypersphereView,
    Multipliers,
    NuParams,
    deepsvdd_loss,
    deepsvdd_score,
    equivalence_residual,
    explicit_sphere_loss,
    imdad_loss,
    imdad_score,
    validate_nu,
    view_hypersphere,
)
from .trainer import (
    FittedModel,
    TrainConfig,
    TrainReport,
    fit,
    train_ablation,
    train_deepsvdd,
    train_imdad,
    update_multipliers,
)

__all__ = [name for name in dir() if not name.startswith("_")]
__version__ = "0.1.0"
