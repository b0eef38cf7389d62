from .network import (
    NoCorrespondenceError,
    PolicyConfig,
    PolicyOutput,
    classify_stage,
    encode,
    forward,
    init_params,
    nocs_to_task,
    pair_embedding,
    pair_indices,
    predict_fold_points,
    predict_nocs,
    score_pair,
    select_fling_pair,
    vote_keypoints,
)
from .checkpoint import load_checkpoint, save_checkpoint

__all__ = [
    "NoCorrespondenceError",
    "PolicyConfig",
    "PolicyOutput",
    "classify_stage",
    "encode",
    "forward",
    "init_params",
    "nocs_to_task",
    "pair_embedding",
    "pair_indices",
    "predict_fold_points",
    "predict_nocs",
    "score_pair",
    "select_fling_pair",
    "vote_keypoints",
    "load_checkpoint",
    "save_checkpoint",
]
