from .checkpoint import CheckpointError, load_checkpoint, save_checkpoint
from .network import DeblurState, TemporalFeatures, UnrollResult, deblur_block, rdn_unroll
from .params import RdnParams, build_layer_table, init_params

__all__ = [
    "CheckpointError",
    "DeblurState",
    "RdnParams",
    "TemporalFeatures",
    "UnrollResult",
    "build_layer_table",
    "deblur_block",
    "init_params",
    "load_checkpoint",
    "rdn_unroll",
    "save_checkpoint",
]
