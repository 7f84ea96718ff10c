"""Spatial, temporal and residual networks and their composition."""

from .checkpoint import CheckpointError, load_checkpoint, load_into, save_checkpoint
from .spatial import SpatialDecoder, SpatialEncoder, weight_entries
from .strnn import STRNN, ModelConfig, ModelTag, Residual, residual_forward, strnn_forward
from .temporal import TemporalNet, tdecoder_run, tencoder_run, tpredictor_run
