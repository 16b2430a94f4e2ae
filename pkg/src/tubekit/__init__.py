"""Synthetic motion tubelets and a desk-scale momentum-contrastive learner."""

from .clip import Clip
from .compositor import AugmentConfig, PairConfig, PairSample, make_pair, make_scaled_crop_control, overlay
from .config import RunConfig, parse_config
from .contrastive import EncoderArch, EncoderParams, TrainConfig, encode, infonce, retrieval_eval, train
from .trajectory import MotionConfig, Trajectory

__all__ = [
    "AugmentConfig", "Clip", "EncoderArch", "EncoderParams", "MotionConfig", "PairConfig",
    "PairSample", "RunConfig", "TrainConfig", "Trajectory", "encode", "infonce", "make_pair",
    "make_scaled_crop_control", "overlay", "parse_config", "retrieval_eval", "train",
]

__version__ = "0.1.0"
