"""Motion data: skeleton, frame layout, processing and synthetic clips."""

from .motion import (
    FRAME_DIM,
    PARTITION,
    BodyPartition,
    MotionClip,
    MotionFormatError,
    default_partition,
    joint_positions,
    read_motion,
    write_motion,
)
from .processing import (
    DataError,
    DatasetSplit,
    NoiseSchedule,
    NormalizationStats,
    WorldMotion,
    corrupt,
    denormalize,
    detect_foot_contact,
    integrate_root,
    normalize,
    resample,
    split_segments,
    to_local_frame,
    to_world_positions,
    window_segments,
)
from .skeleton import Skeleton, SkeletonError, default_skeleton, read_skeleton, write_skeleton
from .synth import GAIT_PERIOD, synth_dataset, synth_world
