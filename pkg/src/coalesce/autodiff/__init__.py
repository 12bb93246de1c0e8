from .checkpoint import CheckpointError, file_digest, load_checkpoint, save_checkpoint
from .nn import MLP, Linear, Module, cast_module, mlp_forward, xavier_uniform
from .optim import Adam, AdamState, NonFiniteGradient, adam_step
from .tensor import (
    BINARY_OPS,
    UNARY_OPS,
    ShapeError,
    Tensor,
    absolute,
    add,
    as_tensor,
    broadcast_to,
    concat,
    default_dtype,
    div,
    exp,
    gather_rows,
    index_select,
    leaky_relu,
    log,
    matmul,
    max_over_axis,
    mul,
    neg,
    no_grad,
    precision,
    reduce_mean,
    reduce_sum,
    relu,
    reshape,
    set_default_dtype,
    sigmoid,
    sqrt,
    square,
    sub,
    transpose,
)
