from .losses import (
    bce_loss,
    dual_variety_loss,
    huber,
    kp_all_loss,
    nocs_symmetric_huber,
    preference_loss,
    preference_prob,
    smooth_l1,
    variety_loss,
)
from .optim import AdamState, adam_init, hybrid_step, optimize_step
from .gradcheck import GradCheckReport, grad_check
from .records import (
    DemoRecord,
    ExplorationRecord,
    PreferenceRecord,
    load_records,
    save_records,
)
from .train import (
    PreferenceDataset,
    TrainConfig,
    finetune_preferences,
    train_selfsup,
    train_supervised,
)

__all__ = [
    "bce_loss",
    "dual_variety_loss",
    "huber",
    "kp_all_loss",
    "nocs_symmetric_huber",
    "preference_loss",
    "preference_prob",
    "smooth_l1",
    "variety_loss",
    "AdamState",
    "adam_init",
    "hybrid_step",
    "optimize_step",
    "GradCheckReport",
    "grad_check",
    "DemoRecord",
    "ExplorationRecord",
    "PreferenceRecord",
    "load_records",
    "save_records",
    "PreferenceDataset",
    "TrainConfig",
    "finetune_preferences",
    "train_selfsup",
    "train_supervised",
]
