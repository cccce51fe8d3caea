"""Decoding of Y4M and raw planar 4:2:0 video, bit-depth normalization and rescaling.

Sequences are immutable: plane arrays are marked read-only on construction so a
decoded sequence can be shared between worker processes and threads freely.
"""

from __future__ import annotations

import os
import re
import warnings
from dataclasses import dataclass, field
from functools import lru_cache
from pathlib import Path
from typing import Iterable, Optional, Sequence, Tuple

import numpy as np
import scipy.sparse

from rrvqa.errors import (
    AlignmentError,
    DataError,
    TruncatedFileError,
    UnsupportedFormatError,
    VqaError,
    Y4MParseError,
)

Y4M_SIGNATURE = "YUV4MPEG2"
FRAME_MARKER = b"FRAME"

# colorspace tag -> bit depth; anything else is rejected
Y4M_COLORSPACES = {
    "420": 8,
    "420jpeg": 8,
    "420mpeg2": 8,
    "420p10": 10,
}

CATMULL_ROM_A = -0.5


def chroma_size(width: int, height: int) -> Tuple[int, int]:
    """(width, height) of a 4:2:0 chroma plane."""
    return (width + 1) // 2, (height + 1) // 2


def frame_size_bytes(width: int, height: int, bit_depth: int) -> int:
    cw, ch = chroma_size(width, height)
    bytes_per_sample = 1 if bit_depth == 8 else 2
    return (width * height + 2 * cw * ch) * bytes_per_sample


def _freeze(a: np.ndarray) -> np.ndarray:
    if a.flags.writeable:
        a.flags.writeable = False
    return a


@dataclass(frozen=True)
class FramePlanes:
    luma: np.ndarray
    chroma_u: np.ndarray
    chroma_v: np.ndarray

    def __post_init__(self):
        for plane in self.planes:
            if plane.ndim != 2:
                raise DataError(f"planes must be 2-D, got shape {plane.shape}")
            _freeze(plane)

    @property
    def planes(self) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
        return self.luma, self.chroma_u, self.chroma_v


@dataclass(frozen=True)
class VideoSequence:
    """Decoded planar 4:2:0 frames.

    ``bit_depth`` is the scale the samples live on. After
    :func:`normalize_bit_depth` it is always 8 and samples may be fractional.
    """

    frames: Tuple[FramePlanes, ...]
    width: int
    height: int
    bit_depth: int = 8
    chroma: str = "420"
    frame_rate: Tuple[int, int] = (30, 1)
    validate_samples: bool = field(default=True, repr=False, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "frames", tuple(self.frames))
        if self.bit_depth not in (8, 10):
            raise UnsupportedFormatError(f"unsupported bit depth {self.bit_depth}")
        if self.chroma != "420":
            raise UnsupportedFormatError(f"unsupported chroma layout {self.chroma!r}")
        if len(self.frames) < 2:
            raise DataError(f"a sequence needs at least 2 frames, got {len(self.frames)}")
        cw, ch = chroma_size(self.width, self.height)
        peak = float(2**self.bit_depth - 1)
        for i, frame in enumerate(self.frames):
            if frame.luma.shape != (self.height, self.width):
                raise DataError(
                    f"frame {i}: luma shape {frame.luma.shape} != {(self.height, self.width)}"
                )
            for name, plane in (("U", frame.chroma_u), ("V", frame.chroma_v)):
                if plane.shape != (ch, cw):
                    raise DataError(f"frame {i}: chroma {name} shape {plane.shape} != {(ch, cw)}")
            if self.validate_samples:
                for plane in frame.planes:
                    if plane.size and (plane.min() < 0 or plane.max() > peak):
                        raise DataError(f"frame {i}: samples outside [0, {peak:g}]")

    @property
    def frame_count(self) -> int:
        return len(self.frames)

    def __len__(self) -> int:
        return len(self.frames)

    def truncated(self, n: int) -> "VideoSequence":
        if n == len(self.frames):
            return self
        return VideoSequence(
            self.frames[:n], self.width, self.height, self.bit_depth, self.chroma,
            self.frame_rate, validate_samples=False,
        )


@dataclass(frozen=True)
class RawParams:
    width: int
    height: int
    bit_depth: int = 8
    chroma: str = "420"

    @classmethod
    def parse(cls, text: str) -> "RawParams":
        """Parse ``WxH`` or ``WxH:bitdepth`` (e.g. ``1920x1080:10``)."""
        m = re.fullmatch(r"\s*(\d+)[xX](\d+)(?::(\d+))?\s*", text)
        if not m:
            raise VqaError(f"raw format must look like WxH:bitdepth, got {text!r}")
        bit_depth = int(m.group(3)) if m.group(3) else 8
        return cls(int(m.group(1)), int(m.group(2)), bit_depth)


def _split_frame(buf: np.ndarray, width: int, height: int) -> FramePlanes:
    cw, ch = chroma_size(width, height)
    n_luma = width * height
    n_chroma = cw * ch
    y = buf[:n_luma].reshape(height, width)
    u = buf[n_luma:n_luma + n_chroma].reshape(ch, cw)
    v = buf[n_luma + n_chroma:n_luma + 2 * n_chroma].reshape(ch, cw)
    return FramePlanes(y, u, v)


def _sample_dtype(bit_depth: int) -> np.dtype:
    return np.dtype(np.uint8) if bit_depth == 8 else np.dtype("<u2")


def _parse_y4m_header(line: str):
    tokens = line.split(" ")
    if tokens[0] != Y4M_SIGNATURE:
        raise Y4MParseError(f"bad stream signature {tokens[0]!r}, expected {Y4M_SIGNATURE!r}")
    width = height = None
    frame_rate = (30, 1)
    colorspace = "420"
    for tok in tokens[1:]:
        if not tok:
            continue
        key, val = tok[0], tok[1:]
        try:
            if key == "W":
                width = int(val)
            elif key == "H":
                height = int(val)
            elif key == "F":
                num, den = val.split(":")
                frame_rate = (int(num), int(den))
            elif key == "C":
                colorspace = val
            elif key in "IAX":
                pass
            else:
                raise Y4MParseError(f"unknown header token {tok!r}")
        except ValueError as exc:
            raise Y4MParseError(f"malformed header token {tok!r}") from exc
        if key in "WH" and int(val) <= 0:
            raise Y4MParseError(f"malformed header token {tok!r}")
    if width is None:
        raise Y4MParseError("header is missing the W token")
    if height is None:
        raise Y4MParseError("header is missing the H token")
    if colorspace not in Y4M_COLORSPACES:
        raise UnsupportedFormatError(f"unsupported colorspace tag 'C{colorspace}'")
    return width, height, frame_rate, Y4M_COLORSPACES[colorspace]


def _check_range(frames: Iterable[FramePlanes], bit_depth: int, path) -> None:
    if bit_depth == 8:
        return
    peak = 2**bit_depth - 1
    for i, f in enumerate(frames):
        if max(int(p.max()) for p in f.planes) > peak:
            raise DataError(f"{path}: frame {i} has samples above {peak}")


def read_y4m(path) -> VideoSequence:
    data = Path(path).read_bytes()
    eol = data.find(b"\n")
    if eol < 0:
        raise Y4MParseError(f"{path}: no header line terminator")
    try:
        header = data[:eol].decode("ascii")
    except UnicodeDecodeError as exc:
        raise Y4MParseError(f"{path}: header is not ASCII") from exc
    width, height, frame_rate, bit_depth = _parse_y4m_header(header)
    fsize = frame_size_bytes(width, height, bit_depth)
    dtype = _sample_dtype(bit_depth)
    frames = []
    pos = eol + 1
    while pos < len(data):
        marker_end = data.find(b"\n", pos)
        if marker_end < 0:
            raise TruncatedFileError(f"{path}: frame {len(frames)} header is not terminated")
        marker = data[pos:marker_end]
        if marker.split(b" ")[0] != FRAME_MARKER:
            tok = marker.split(b" ")[0][:16].decode("ascii", "replace")
            raise Y4MParseError(f"{path}: expected FRAME marker, found {tok!r}")
        start = marker_end + 1
        avail = len(data) - start
        if avail < fsize:
            raise TruncatedFileError(
                f"{path}: frame {len(frames)} truncated: expected {fsize} bytes, got {avail}"
            )
        buf = np.frombuffer(data, dtype=dtype, count=fsize // dtype.itemsize, offset=start)
        frames.append(_split_frame(buf, width, height))
        pos = start + fsize
    _check_range(frames, bit_depth, path)
    return VideoSequence(tuple(frames), width, height, bit_depth, "420", frame_rate,
                         validate_samples=False)


def read_raw(path, params: RawParams) -> VideoSequence:
    if params.chroma not in ("420", "4:2:0", "i420", "I420"):
        raise UnsupportedFormatError(f"unsupported chroma layout {params.chroma!r}")
    if params.bit_depth not in (8, 10):
        raise UnsupportedFormatError(f"unsupported bit depth {params.bit_depth}")
    data = Path(path).read_bytes()
    fsize = frame_size_bytes(params.width, params.height, params.bit_depth)
    if len(data) == 0 or len(data) % fsize:
        raise TruncatedFileError(
            f"{path}: size {len(data)} bytes, expected multiple of {fsize} bytes"
        )
    dtype = _sample_dtype(params.bit_depth)
    per_frame = fsize // dtype.itemsize
    samples = np.frombuffer(data, dtype=dtype)
    frames = [
        _split_frame(samples[i * per_frame:(i + 1) * per_frame], params.width, params.height)
        for i in range(len(data) // fsize)
    ]
    _check_range(frames, params.bit_depth, path)
    return VideoSequence(tuple(frames), params.width, params.height, params.bit_depth,
                         validate_samples=False)


def sniff_format(path) -> str:
    with open(path, "rb") as fh:
        head = fh.read(len(Y4M_SIGNATURE))
    return "y4m" if head == Y4M_SIGNATURE.encode() else "raw"


def read_video(path, format_hint: Optional[str] = None,
               raw_params: Optional[RawParams] = None) -> VideoSequence:
    """Decode ``path`` into a :class:`VideoSequence`.

    ``format_hint`` is ``"y4m"``, ``"raw"`` or None to sniff the file signature.
    A Y4M header always wins over ``raw_params``.
    """
    if not os.path.isfile(path):
        raise FileNotFoundError(f"no such video file: {path}")
    fmt = format_hint or sniff_format(path)
    if fmt == "raw" and sniff_format(path) == "y4m":
        fmt = "y4m"
    if fmt == "y4m":
        return read_y4m(path)
    if fmt != "raw":
        raise UnsupportedFormatError(f"unknown format hint {fmt!r}")
    if raw_params is None:
        raise VqaError(f"{path}: raw input needs width, height and bit depth")
    return read_raw(path, raw_params)


def _frame_bytes(frame: FramePlanes, bit_depth: int) -> bytes:
    dtype = _sample_dtype(bit_depth)
    out = []
    for plane in frame.planes:
        if plane.dtype.kind == "f":
            if not np.array_equal(plane, np.round(plane)):
                raise DataError("cannot write fractional samples; round or denormalize first")
        out.append(np.ascontiguousarray(plane, dtype=dtype).tobytes())
    return b"".join(out)


def write_y4m(path, seq: VideoSequence) -> None:
    tag = "420jpeg" if seq.bit_depth == 8 else "420p10"
    num, den = seq.frame_rate
    header = f"{Y4M_SIGNATURE} W{seq.width} H{seq.height} F{num}:{den} Ip A1:1 C{tag}\n"
    with open(path, "wb") as fh:
        fh.write(header.encode("ascii"))
        for frame in seq.frames:
            fh.write(FRAME_MARKER + b"\n")
            fh.write(_frame_bytes(frame, seq.bit_depth))


def write_raw(path, seq: VideoSequence) -> None:
    with open(path, "wb") as fh:
        for frame in seq.frames:
            fh.write(_frame_bytes(frame, seq.bit_depth))


def normalize_bit_depth(seq: VideoSequence) -> VideoSequence:
    """Map samples onto the 8-bit scale by dividing by ``2**(bit_depth - 8)``.

    8-bit input is returned as is. 10-bit samples become float32, which holds
    every quarter step in [0, 255.75] exactly.
    """
    if seq.bit_depth == 8:
        return seq
    if seq.bit_depth != 10:
        raise UnsupportedFormatError(f"unsupported bit depth {seq.bit_depth}")
    scale = np.float32(2 ** (seq.bit_depth - 8))
    frames = tuple(
        FramePlanes(*(p.astype(np.float32) / scale for p in f.planes)) for f in seq.frames
    )
    return VideoSequence(frames, seq.width, seq.height, 8, seq.chroma, seq.frame_rate,
                         validate_samples=False)


def cubic_weight(x: np.ndarray, a: float = CATMULL_ROM_A) -> np.ndarray:
    x = np.abs(x)
    near = ((a + 2) * x - (a + 3)) * x * x + 1
    far = ((a * x - 5 * a) * x + 8 * a) * x - 4 * a
    return np.where(x <= 1, near, np.where(x < 2, far, 0.0))


@lru_cache(maxsize=32)
def resample_matrix(n_in: int, n_out: int) -> scipy.sparse.csr_matrix:
    """Sparse (n_out, n_in) bicubic interpolation operator with edge replication.

    Sample centres are aligned, i.e. output sample ``j`` reads input position
    ``(j + 0.5) * n_in / n_out - 0.5``.
    """
    pos = (np.arange(n_out) + 0.5) * (n_in / n_out) - 0.5
    base = np.floor(pos).astype(np.int64)
    rows, cols, vals = [], [], []
    for tap in range(-1, 3):
        idx = base + tap
        rows.append(np.arange(n_out))
        cols.append(np.clip(idx, 0, n_in - 1))
        vals.append(cubic_weight(pos - idx))
    m = scipy.sparse.coo_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
        shape=(n_out, n_in),
    )
    return m.tocsr()


def resample_plane(plane: np.ndarray, width: int, height: int, peak: float) -> np.ndarray:
    h_in, w_in = plane.shape
    if (h_in, w_in) == (height, width):
        return plane
    src = np.asarray(plane, dtype=np.float64)
    tmp = resample_matrix(h_in, height) @ src
    out = (resample_matrix(w_in, width) @ tmp.T).T
    return np.clip(out, 0.0, peak)


def rescale_to(seq: VideoSequence, target_width: int, target_height: int) -> VideoSequence:
    """Bicubic (Catmull-Rom) resampling of every plane to the target geometry.

    Matching geometry is a bit-exact pass-through. Resampled samples are
    float64, clipped to the sample range of ``seq.bit_depth``.
    """
    if target_width < 2 or target_height < 2:
        raise VqaError(f"target size must be at least 2x2, got {target_width}x{target_height}")
    if (seq.width, seq.height) == (target_width, target_height):
        return seq
    cw, ch = chroma_size(target_width, target_height)
    peak = float(2**seq.bit_depth - 1)
    frames = tuple(
        FramePlanes(
            resample_plane(f.luma, target_width, target_height, peak),
            resample_plane(f.chroma_u, cw, ch, peak),
            resample_plane(f.chroma_v, cw, ch, peak),
        )
        for f in seq.frames
    )
    return VideoSequence(frames, target_width, target_height, seq.bit_depth, seq.chroma,
                         seq.frame_rate, validate_samples=False)


def align_pair(ref: VideoSequence, test: VideoSequence) -> Tuple[VideoSequence, VideoSequence]:
    """Normalize both sequences, truncate to a common length and rescale ``test`` to ``ref``."""
    ref = normalize_bit_depth(ref)
    test = normalize_bit_depth(test)
    n = min(len(ref), len(test))
    if len(ref) != len(test):
        warnings.warn(
            f"frame count mismatch (ref {len(ref)}, test {len(test)}); truncating both to {n}",
            RuntimeWarning,
            stacklevel=2,
        )
        ref, test = ref.truncated(n), test.truncated(n)
    test = rescale_to(test, ref.width, ref.height)
    return ref, test


def check_aligned(ref: VideoSequence, test: VideoSequence) -> None:
    if (ref.width, ref.height) != (test.width, test.height):
        raise AlignmentError(
            f"geometry mismatch: ref {ref.width}x{ref.height}, test {test.width}x{test.height}"
        )
    if len(ref) != len(test):
        raise AlignmentError(f"frame count mismatch: ref {len(ref)}, test {len(test)}")


def sequence_from_arrays(lumas: Sequence[np.ndarray], chroma_u: Sequence[np.ndarray],
                         chroma_v: Sequence[np.ndarray], bit_depth: int = 8,
                         frame_rate: Tuple[int, int] = (30, 1)) -> VideoSequence:
    """Build a sequence from per-frame plane arrays (used by the synthetic generator and tests)."""
    frames = tuple(FramePlanes(y, u, v) for y, u, v in zip(lumas, chroma_u, chroma_v))
    h, w = frames[0].luma.shape
    return VideoSequence(frames, w, h, bit_depth, frame_rate=frame_rate)


def uniform_chroma(width: int, height: int, value: float, dtype=np.uint8) -> np.ndarray:
    cw, ch = chroma_size(width, height)
    return np.full((ch, cw), value, dtype=dtype)


__all__ = [
    "FramePlanes",
    "RawParams",
    "VideoSequence",
    "align_pair",
    "check_aligned",
    "chroma_size",
    "frame_size_bytes",
    "normalize_bit_depth",
    "read_raw",
    "read_video",
    "read_y4m",
    "rescale_to",
    "resample_matrix",
    "sequence_from_arrays",
    "write_raw",
    "write_y4m",
]
