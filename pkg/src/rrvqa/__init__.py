"""Reduced-reference video quality assessment from DCT complexity residuals and SSIM."""

from rrvqa.errors import VqaError
from rrvqa.features import FrameFeatures, PooledFeatures, extract_sequence_features, temporal_pool
from rrvqa.fusion import FusedFeature, ResidualVector, fuse, kl_proxy, residual
from rrvqa.gbt import GbtModel, GbtParams, load_model, predict, predict_batch, save_model, train
from rrvqa.metrics import MetricsReport, evaluate, krocc, plcc, rmse, srocc
from rrvqa.ssim import SsimResult, ssim_frame, ssim_sequence
from rrvqa.video_io import FramePlanes, VideoSequence, normalize_bit_depth, read_video, rescale_to

__version__ = "0.1.0"

__all__ = [
    "VqaError",
    "FrameFeatures",
    "PooledFeatures",
    "extract_sequence_features",
    "temporal_pool",
    "FusedFeature",
    "ResidualVector",
    "fuse",
    "kl_proxy",
    "residual",
    "GbtModel",
    "GbtParams",
    "load_model",
    "predict",
    "predict_batch",
    "save_model",
    "train",
    "MetricsReport",
    "evaluate",
    "krocc",
    "plcc",
    "rmse",
    "srocc",
    "SsimResult",
    "ssim_frame",
    "ssim_sequence",
    "FramePlanes",
    "VideoSequence",
    "normalize_bit_depth",
    "read_video",
    "rescale_to",
]
