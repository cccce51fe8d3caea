"""Seeded synthetic corpus: moving textures plus noisy and blurred renditions.

Rendition ``s`` of ``L`` levels has strength ``s / (L - 1)`` and pseudo-MOS
``5 - 4 * s / (L - 1)``, so level 0 is an exact copy scored 5.
"""

from __future__ import annotations

import csv
import os
from dataclasses import dataclass
from typing import List

import numpy as np
from scipy import ndimage

from rrvqa.video_io import VideoSequence, sequence_from_arrays, write_y4m

NOISE_SIGMA_MAX = 20.0
BLUR_SIGMA_MAX = 2.0
DISTORTIONS = ("noise", "blur", "noise+blur")


@dataclass(frozen=True)
class CorpusEntry:
    ref: str
    test: str
    mos: float
    content: int
    level: int


def pseudo_mos(level: int, n_levels: int) -> float:
    if n_levels < 2:
        return 5.0
    return 5.0 - 4.0 * level / (n_levels - 1)


def _grating_field(rng, h, w, n_waves, amp):
    yy, xx = np.mgrid[0:h, 0:w].astype(np.float64)
    out = np.zeros((h, w))
    for _ in range(n_waves):
        theta = rng.uniform(0, np.pi)
        freq = rng.uniform(0.04, 0.35)
        phase = rng.uniform(0, 2 * np.pi)
        a = rng.uniform(0.3, 1.0) * amp
        out += a * np.sin(2 * np.pi * freq * (xx * np.cos(theta) + yy * np.sin(theta)) + phase)
    return out


def make_content(rng: np.random.Generator, width: int = 64, height: int = 64,
                 frames: int = 30) -> VideoSequence:
    """Periodic textured canvas translated by an integer velocity each frame."""
    canvas = 2 * max(width, height)
    texture_scale = rng.uniform(0.3, 1.0)
    luma = _grating_field(rng, canvas, canvas, int(rng.integers(2, 5)), 40 * texture_scale)
    noise = ndimage.gaussian_filter(rng.normal(0, 1, (canvas, canvas)),
                                    rng.uniform(0.6, 2.5), mode="wrap")
    luma += noise / (noise.std() + 1e-12) * 25 * texture_scale
    luma += rng.uniform(70, 180)
    cu = _grating_field(rng, canvas // 2, canvas // 2, 2, 15) + rng.uniform(100, 156)
    cv = _grating_field(rng, canvas // 2, canvas // 2, 2, 15) + rng.uniform(100, 156)
    vx, vy = (int(v) for v in rng.integers(-2, 3, size=2))
    if vx == 0 and vy == 0:
        vx = 1
    ys, us, vs = [], [], []
    cw, ch = (width + 1) // 2, (height + 1) // 2
    for t in range(frames):
        dy, dx = vy * t, vx * t
        y = np.roll(luma, (dy, dx), axis=(0, 1))[:height, :width]
        u = np.roll(cu, (dy // 2, dx // 2), axis=(0, 1))[:ch, :cw]
        v = np.roll(cv, (dy // 2, dx // 2), axis=(0, 1))[:ch, :cw]
        ys.append(_to_u8(y))
        us.append(_to_u8(u))
        vs.append(_to_u8(v))
    return sequence_from_arrays(ys, us, vs)


def _to_u8(a: np.ndarray) -> np.ndarray:
    return np.clip(np.round(a), 0, 255).astype(np.uint8)


def degrade(seq: VideoSequence, strength: float, kind: str,
            rng: np.random.Generator) -> VideoSequence:
    if strength <= 0:
        return seq
    blur = BLUR_SIGMA_MAX * strength if "blur" in kind else 0.0
    sigma = NOISE_SIGMA_MAX * strength if "noise" in kind else 0.0
    ys, us, vs = [], [], []
    for f in seq.frames:
        planes = []
        for k, plane in enumerate(f.planes):
            p = plane.astype(np.float64)
            if blur > 0:
                p = ndimage.gaussian_filter(p, blur if k == 0 else blur / 2, mode="nearest")
            if sigma > 0:
                p = p + rng.normal(0.0, sigma, p.shape)
            planes.append(_to_u8(p))
        ys.append(planes[0])
        us.append(planes[1])
        vs.append(planes[2])
    return sequence_from_arrays(ys, us, vs, frame_rate=seq.frame_rate)


def generate_corpus(out_dir, n_contents: int = 12, n_levels: int = 5, seed: int = 0,
                    width: int = 64, height: int = 64, frames: int = 30) -> List[CorpusEntry]:
    """Write reference and degraded Y4M clips plus ``manifest.csv`` into ``out_dir``.

    Paths in the manifest are relative to ``out_dir``.
    """
    os.makedirs(out_dir, exist_ok=True)
    entries = []
    for c in range(n_contents):
        ref = make_content(np.random.default_rng([seed, c]), width, height, frames)
        ref_name = f"ref_{c:03d}.y4m"
        write_y4m(os.path.join(out_dir, ref_name), ref)
        kind = DISTORTIONS[c % len(DISTORTIONS)]
        for level in range(n_levels):
            strength = level / (n_levels - 1) if n_levels > 1 else 0.0
            test = degrade(ref, strength, kind, np.random.default_rng([seed, c, level]))
            test_name = f"test_{c:03d}_{level:02d}.y4m"
            write_y4m(os.path.join(out_dir, test_name), test)
            entries.append(CorpusEntry(ref_name, test_name, pseudo_mos(level, n_levels), c, level))
    write_manifest(os.path.join(out_dir, "manifest.csv"), entries)
    return entries


def write_manifest(path, entries: List[CorpusEntry]) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(("ref", "test", "mos"))
        for e in entries:
            writer.writerow((e.ref, e.test, f"{e.mos:.9g}"))
