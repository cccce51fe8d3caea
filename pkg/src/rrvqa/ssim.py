"""Single-scale SSIM on luma with an 11x11 Gaussian window (sigma 1.5).

Moments are taken with separable Gaussian filtering and only windows that fit
entirely inside the plane contribute to the frame score.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from functools import lru_cache
from typing import List, Sequence

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view
from scipy import ndimage

from rrvqa.errors import AlignmentError, DataError, InputTooSmallError
from rrvqa.parallel import map_frames
from rrvqa.video_io import VideoSequence, check_aligned

WINDOW = 11
SIGMA = 1.5
DYNAMIC_RANGE = 255.0
C1 = (0.01 * DYNAMIC_RANGE) ** 2
C2 = (0.03 * DYNAMIC_RANGE) ** 2


@lru_cache(maxsize=4)
def gaussian_kernel_1d(size: int = WINDOW, sigma: float = SIGMA) -> np.ndarray:
    x = np.arange(size, dtype=np.float64) - (size - 1) / 2.0
    g = np.exp(-(x * x) / (2.0 * sigma * sigma))
    g /= g.sum()
    g.flags.writeable = False
    return g


def _filter_valid(a: np.ndarray, g: np.ndarray) -> np.ndarray:
    """Separable 'valid' correlation of ``a`` with ``g`` along both axes."""
    r = len(g) // 2
    rows = ndimage.correlate1d(a, g, axis=1, mode="constant")[:, r:-r]
    return sliding_window_view(rows, len(g), axis=0) @ g


def ssim_map(ref_luma: np.ndarray, test_luma: np.ndarray) -> np.ndarray:
    """SSIM at every valid window position, shape (H - 10, W - 10)."""
    x = np.asarray(ref_luma, dtype=np.float64)
    y = np.asarray(test_luma, dtype=np.float64)
    if x.shape != y.shape:
        raise AlignmentError(f"plane geometry mismatch: {x.shape} vs {y.shape}")
    if x.ndim != 2 or x.shape[0] < WINDOW or x.shape[1] < WINDOW:
        raise InputTooSmallError(f"plane {x.shape} is smaller than the {WINDOW}x{WINDOW} window")
    g = gaussian_kernel_1d()
    mu_x = _filter_valid(x, g)
    mu_y = _filter_valid(y, g)
    # sigma_x^2 + sigma_y^2 only ever appears as a sum, so one filtered map covers both
    sq_sum = _filter_valid(x * x + y * y, g)
    cross = _filter_valid(x * y, g)
    mu_xy = mu_x * mu_y
    mu_sq = mu_x * mu_x
    mu_sq += mu_y * mu_y
    num = (2.0 * mu_xy + C1) * (2.0 * (cross - mu_xy) + C2)
    den = (mu_sq + C1) * ((sq_sum - mu_sq) + C2)
    return num / den


def ssim_frame(ref_luma: np.ndarray, test_luma: np.ndarray) -> float:
    s = float(ssim_map(ref_luma, test_luma).mean())
    return min(1.0, max(-1.0, s))


@dataclass(frozen=True)
class SsimResult:
    per_frame: List[float]
    mu_ssim: float


def pool_ssim(per_frame: Sequence[float]) -> SsimResult:
    values = np.asarray(per_frame, dtype=np.float64)
    if values.size == 0:
        raise AlignmentError("no frame pairs to pool")
    return SsimResult([float(v) for v in values], float(values.mean()))


def _ssim_task(shared, i: int) -> float:
    ref, test = shared
    return ssim_frame(ref.frames[i].luma, test.frames[i].luma)


def ssim_sequence(ref: VideoSequence, test: VideoSequence, workers: int = 1) -> SsimResult:
    check_aligned(ref, test)
    if ref.bit_depth != 8 or test.bit_depth != 8:
        raise DataError("normalize both sequences to the 8-bit scale before SSIM")
    return pool_ssim(map_frames(_ssim_task, len(ref), workers, shared=(ref, test)))


def write_ssim_csv(path, result: SsimResult) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(("frame", "ssim"))
        for i, v in enumerate(result.per_frame):
            writer.writerow((i, f"{v:.9g}"))
