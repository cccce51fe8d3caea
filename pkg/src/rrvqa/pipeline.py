"""Reference/test pair analysis: align, extract features and SSIM, fuse."""

from __future__ import annotations

from contextlib import contextmanager
from dataclasses import dataclass
from typing import List, Optional, Tuple

from rrvqa.errors import VqaError
from rrvqa.features import (
    FrameFeatures,
    PooledFeatures,
    chain_statistics,
    frame_statistics,
    temporal_pool,
)
from rrvqa.fusion import FusedFeature, fuse, kl_proxy, residual
from rrvqa.parallel import map_frames
from rrvqa.ssim import SsimResult, pool_ssim, ssim_frame
from rrvqa.video_io import RawParams, VideoSequence, align_pair, read_video


class StageError(VqaError):
    def __init__(self, stage: str, source, cause: Exception):
        self.stage = stage
        self.source = source
        self.cause = cause
        super().__init__(f"{stage} failed for {source}: {cause}")


@contextmanager
def stage(name: str, source):
    try:
        yield
    except StageError:
        raise
    except (VqaError, OSError) as exc:
        raise StageError(name, source, exc) from exc


@dataclass(frozen=True)
class PairAnalysis:
    ref_frames: List[FrameFeatures]
    test_frames: List[FrameFeatures]
    ref_pooled: PooledFeatures
    test_pooled: PooledFeatures
    ssim: SsimResult
    fused: FusedFeature

    @property
    def kl_proxy(self) -> float:
        return kl_proxy(self.fused.residual)


def load_pair(ref_path, test_path, raw_params: Optional[RawParams] = None
              ) -> Tuple[VideoSequence, VideoSequence]:
    with stage("decode", ref_path):
        ref = read_video(ref_path, raw_params=raw_params)
    with stage("decode", test_path):
        test = read_video(test_path, raw_params=raw_params)
    return ref, test


def _pair_task(shared, i: int):
    ref, test = shared
    fr, ft = ref.frames[i], test.frames[i]
    return frame_statistics(fr), frame_statistics(ft), ssim_frame(fr.luma, ft.luma)


def analyze_pair(ref: VideoSequence, test: VideoSequence, workers: Optional[int] = 1,
                 source: str = "pair") -> PairAnalysis:
    """Run the whole pipeline on one reference/test pair.

    Frames are processed independently (optionally by a process pool); the
    temporal chaining and all reductions are done afterwards in frame order.
    """
    with stage("align", source):
        ref, test = align_pair(ref, test)
    with stage("features+ssim", source):
        results = map_frames(_pair_task, len(ref), workers, shared=(ref, test))
        ref_frames = chain_statistics([r[0] for r in results])
        test_frames = chain_statistics([r[1] for r in results])
        ssim = pool_ssim([r[2] for r in results])
    with stage("fusion", source):
        ref_pooled = temporal_pool(ref_frames)
        test_pooled = temporal_pool(test_frames)
        fused = fuse(residual(ref_pooled, test_pooled), ssim.mu_ssim)
    return PairAnalysis(ref_frames, test_frames, ref_pooled, test_pooled, ssim, fused)


def analyze_files(ref_path, test_path, raw_params: Optional[RawParams] = None,
                  workers: Optional[int] = 1) -> PairAnalysis:
    ref, test = load_pair(ref_path, test_path, raw_params)
    return analyze_pair(ref, test, workers, source=f"{ref_path} vs {test_path}")
