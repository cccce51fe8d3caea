"""Residual features, the KL-divergence proxy and the fused 8-value model input."""

from __future__ import annotations

import math
from dataclasses import astuple, dataclass
from typing import Sequence

import numpy as np

from rrvqa.errors import DataError
from rrvqa.features import PooledFeatures

RESIDUAL_NAMES = ("r_E", "r_h", "r_L", "r_EU", "r_LU", "r_EV", "r_LV")
FUSED_NAMES = RESIDUAL_NAMES + ("mu_ssim",)


@dataclass(frozen=True)
class ResidualVector:
    r_E: float
    r_h: float
    r_L: float
    r_EU: float
    r_LU: float
    r_EV: float
    r_LV: float

    def as_array(self) -> np.ndarray:
        return np.array(astuple(self), dtype=np.float64)

    def __neg__(self) -> "ResidualVector":
        return ResidualVector(*(-v for v in astuple(self)))


@dataclass(frozen=True)
class FusedFeature:
    residual: ResidualVector
    mu_ssim: float

    def flatten(self) -> np.ndarray:
        return np.append(self.residual.as_array(), self.mu_ssim)

    @classmethod
    def unflatten(cls, values: Sequence[float]) -> "FusedFeature":
        if len(values) != len(FUSED_NAMES):
            raise DataError(f"fused vector must have {len(FUSED_NAMES)} values, got {len(values)}")
        return fuse(ResidualVector(*(float(v) for v in values[:7])), float(values[7]))


def residual(ref_pooled: PooledFeatures, test_pooled: PooledFeatures) -> ResidualVector:
    diff = ref_pooled.as_array() - test_pooled.as_array()
    return ResidualVector(*(float(v) for v in diff))


def kl_proxy(r: ResidualVector) -> float:
    """Half the squared norm of the residual. Reported as a diagnostic, never fed to the model."""
    return 0.5 * math.fsum(v * v for v in astuple(r))


def fuse(r: ResidualVector, mu_ssim: float) -> FusedFeature:
    if not -1.0 <= mu_ssim <= 1.0:
        raise DataError(f"mu_ssim must lie in [-1, 1], got {mu_ssim!r}")
    return FusedFeature(r, float(mu_ssim))
