"""Block-DCT complexity features: texture energy, temporal energy gradient, mean level.

Per frame the extractor yields seven numbers (luma energy, temporal gradient,
luma level, then energy and level for U and V). Energies are normalized by
``K * w**2`` so they do not depend on resolution.
"""

from __future__ import annotations

import csv
from dataclasses import astuple, dataclass
from functools import lru_cache
from typing import Iterable, List, Optional, Sequence, Tuple

import numpy as np
import scipy.fft

from rrvqa.errors import DataError, EmptyInputError, InternalConsistencyError
from rrvqa.parallel import map_frames
from rrvqa.video_io import FramePlanes, VideoSequence

LUMA_BLOCK = 32
CHROMA_BLOCK = 16

FEATURE_NAMES = ("E_Y", "h", "L_Y", "E_U", "L_U", "E_V", "L_V")


@dataclass(frozen=True)
class FrameFeatures:
    E_Y: float
    h: float
    L_Y: float
    E_U: float
    L_U: float
    E_V: float
    L_V: float

    def as_array(self) -> np.ndarray:
        return np.array(astuple(self), dtype=np.float64)

    @classmethod
    def from_array(cls, values: Sequence[float]) -> "FrameFeatures":
        if len(values) != 7:
            raise DataError(f"expected 7 feature values, got {len(values)}")
        return cls(*(float(v) for v in values))


@dataclass(frozen=True)
class PooledFeatures:
    E_Y: float
    h: float
    L_Y: float
    E_U: float
    L_U: float
    E_V: float
    L_V: float
    n: int

    def as_array(self) -> np.ndarray:
        return np.array([getattr(self, name) for name in FEATURE_NAMES], dtype=np.float64)


@dataclass(frozen=True)
class EnergyMap:
    energies: np.ndarray
    block_size: int

    @property
    def shape(self) -> Tuple[int, int]:
        return self.energies.shape


@lru_cache(maxsize=8)
def energy_weights(w: int) -> np.ndarray:
    """Frequency weights exp(|((i*j)/w^2)^2 - 1|), with the DC weight set to zero."""
    i = np.arange(w, dtype=np.float64)
    ij = np.outer(i, i) / float(w * w)
    weights = np.exp(np.abs(ij * ij - 1.0))
    weights[0, 0] = 0.0
    weights.flags.writeable = False
    return weights


def dct2d(block: np.ndarray) -> np.ndarray:
    """Orthonormal 2-D DCT-II over the last two axes (a stack of blocks is fine)."""
    return scipy.fft.dctn(np.asarray(block, dtype=np.float64), type=2, norm="ortho",
                          axes=(-2, -1))


def block_texture_energy(coeffs: np.ndarray) -> np.ndarray:
    """Weighted AC magnitude sum of one w x w block (or of a stack of them)."""
    coeffs = np.asarray(coeffs, dtype=np.float64)
    w = coeffs.shape[-1]
    if coeffs.shape[-2] != w:
        raise DataError(f"coefficient blocks must be square, got {coeffs.shape[-2:]}")
    flat = np.abs(coeffs).reshape(coeffs.shape[:-2] + (w * w,))
    return flat @ energy_weights(w).ravel()


def pad_to_blocks(plane: np.ndarray, w: int) -> np.ndarray:
    h, wd = plane.shape
    ph = -h % w
    pw = -wd % w
    if ph == 0 and pw == 0:
        return plane
    return np.pad(plane, ((0, ph), (0, pw)), mode="edge")


def frame_energy_map(plane: np.ndarray, w: int) -> EnergyMap:
    """Texture energy of each w x w block of ``plane``, in raster order.

    Edge blocks are completed by replicating the last row/column.
    """
    padded = pad_to_blocks(np.asarray(plane, dtype=np.float64), w)
    bh, bw = padded.shape[0] // w, padded.shape[1] // w
    blocks = padded.reshape(bh, w, bw, w).transpose(0, 2, 1, 3)
    energies = block_texture_energy(dct2d(blocks))
    energies.flags.writeable = False
    return EnergyMap(energies, w)


def plane_energy(emap: EnergyMap) -> float:
    k = emap.energies.size
    return float(emap.energies.sum() / (k * emap.block_size**2))


def plane_level(plane: np.ndarray) -> float:
    return float(np.mean(plane, dtype=np.float64))


def temporal_gradient(current: EnergyMap, previous: Optional[EnergyMap]) -> float:
    """Normalized SAD between consecutive luma energy maps; 0 without a predecessor."""
    if previous is None:
        return 0.0
    if previous.shape != current.shape or previous.block_size != current.block_size:
        raise InternalConsistencyError(
            f"energy map geometry changed between frames: {previous.shape} "
            f"(w={previous.block_size}) -> {current.shape} (w={current.block_size})"
        )
    k = current.energies.size
    sad = np.abs(current.energies - previous.energies).sum()
    return float(sad / (k * current.block_size**2))


@dataclass(frozen=True)
class FrameStatistics:
    """Everything for one frame except h, which needs the previous frame."""

    luma_map: EnergyMap
    E_Y: float
    L_Y: float
    E_U: float
    L_U: float
    E_V: float
    L_V: float

    def with_gradient(self, h: float) -> FrameFeatures:
        return FrameFeatures(self.E_Y, h, self.L_Y, self.E_U, self.L_U, self.E_V, self.L_V)


def frame_statistics(frame: FramePlanes) -> FrameStatistics:
    luma_map = frame_energy_map(frame.luma, LUMA_BLOCK)
    return FrameStatistics(
        luma_map,
        plane_energy(luma_map),
        plane_level(frame.luma),
        plane_energy(frame_energy_map(frame.chroma_u, CHROMA_BLOCK)),
        plane_level(frame.chroma_u),
        plane_energy(frame_energy_map(frame.chroma_v, CHROMA_BLOCK)),
        plane_level(frame.chroma_v),
    )


def extract_frame_features(frame: FramePlanes,
                           prev_luma_energy: Optional[EnergyMap] = None
                           ) -> Tuple[FrameFeatures, EnergyMap]:
    stats = frame_statistics(frame)
    h = temporal_gradient(stats.luma_map, prev_luma_energy)
    return stats.with_gradient(h), stats.luma_map


def chain_statistics(stats: Sequence[FrameStatistics]) -> List[FrameFeatures]:
    out = []
    prev = None
    for s in stats:
        out.append(s.with_gradient(temporal_gradient(s.luma_map, prev)))
        prev = s.luma_map
    return out


def extract_sequence_features(seq: VideoSequence, workers: int = 1) -> List[FrameFeatures]:
    """Per-frame features for a normalized sequence.

    Energy maps may be computed by ``workers`` processes; chaining into h is a
    sequential pass so results do not depend on the worker count.
    """
    if seq.bit_depth != 8:
        raise DataError("normalize the sequence to the 8-bit scale before extracting features")
    stats = map_frames(_statistics_task, len(seq), workers, shared=(seq,))
    return chain_statistics(stats)


def _statistics_task(shared, i: int) -> FrameStatistics:
    (seq,) = shared
    return frame_statistics(seq.frames[i])


def temporal_pool(features: Sequence[FrameFeatures]) -> PooledFeatures:
    """Average per-frame features over the segment.

    h is averaged over frames 1..N-1 since frame 0 has no predecessor.
    """
    if len(features) == 0:
        raise EmptyInputError("cannot pool an empty feature list")
    rows = np.stack([f.as_array() for f in features])
    pooled = rows.mean(axis=0)
    lo, hi = rows.min(axis=0), rows.max(axis=0)
    if len(features) > 1:
        h = rows[1:, 1]
        pooled[1] = h.mean()
        lo[1], hi[1] = h.min(), h.max()
    else:
        pooled[1] = 0.0
    # keep the mean inside the per-frame range despite rounding in the sum
    pooled = np.clip(pooled, lo, hi)
    return PooledFeatures(*(float(v) for v in pooled), n=len(features))


def fmt(value: float) -> str:
    return f"{value:.9g}"


def write_frame_csv(path, features: Iterable[FrameFeatures]) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(("frame",) + FEATURE_NAMES)
        for i, f in enumerate(features):
            writer.writerow([i] + [fmt(v) for v in astuple(f)])


def write_pooled_csv(path, pooled: PooledFeatures) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(FEATURE_NAMES)
        writer.writerow([fmt(v) for v in pooled.as_array()])

