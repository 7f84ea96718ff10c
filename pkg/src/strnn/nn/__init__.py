"""Differentiable numeric kernel: tensors, layers, gradients and AdaDelta."""

from .functional import ConfigurationError, batch_norm_eval, batch_norm_train, dense, dropout, lstm_step, mse
from .gradcheck import check_gradients, numerical_grad, relative_error
from .layers import (
    BatchNorm,
    Dense,
    Dropout,
    LSTMCell,
    LstmState,
    Module,
    Parameter,
    batch_norm_forward,
    dense_forward,
    dropout_forward,
    glorot_uniform,
    l2_penalty,
    lstm_cell_step,
)
from .optim import AdaDelta, NonFiniteGradient, adadelta_step
from .tensor import (
    Tensor,
    add,
    as_tensor,
    backward,
    concat,
    cos,
    elu,
    exp,
    grad,
    getitem,
    is_grad_enabled,
    make_node,
    matmul,
    mean,
    mul,
    no_grad,
    reshape,
    sigmoid,
    sin,
    sqrt,
    square,
    stack,
    sub,
    take,
    tanh,
    transpose,
    tsum,
)
