"""Joint synthesis: sampling around joints, the implicit decoder and its training."""
from .decoder import ImplicitDecoder, LossConfig, loss_match, loss_mse, objective_h, probe_values, total_loss
from .training import (
    JointSample,
    JointTrainConfig,
    PointSetDecoder,
    chamfer_loss,
    pretrain_encoders,
    pretrain_lr,
    sample_count,
    train_joint,
)
from .volume import (
    JointBoundarySet,
    JointVolumeError,
    TrainingSampleSet,
    build_joint_volume,
    eroded_occupancy,
    sample_training_points,
    select_joint_boundary,
    split_counts,
)
