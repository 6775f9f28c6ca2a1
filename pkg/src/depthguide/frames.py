"""Core rasters, coordinate conventions and file IO.

Coordinates are ``(x, y)`` = (column, row) with the origin at the top-left
corner. Rasters are numpy arrays of shape ``(height, width)`` and the linear
index of a pixel is ``y * width + x``, matching numpy's C order.
"""

from __future__ import annotations

import csv
import dataclasses
import enum
import io
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import (
    DimensionMismatchError,
    DuplicateCoordinateError,
    FormatError,
    OutOfBoundsError,
)
from .metrics import Metric

PGM16_MAX_DEPTH = 65.535  # meters, 65535 mm


class DepthFormat(str, enum.Enum):
    PFM = "pfm"
    PGM16 = "pgm16"

    @classmethod
    def from_path(cls, path: str | Path) -> "DepthFormat":
        suffix = Path(path).suffix.lower()
        if suffix == ".pfm":
            return cls.PFM
        if suffix == ".pgm":
            return cls.PGM16
        raise ValueError(f"cannot infer depth format from {path!r}")


def _frozen(a: np.ndarray) -> np.ndarray:
    a.setflags(write=False)
    return a


def linear_index(x, y, width: int):
    return y * width + x


@dataclass(frozen=True)
class DepthFrame:
    """Dense ground-truth depth in meters plus a validity mask.

    Depth is stored as float32 so that PFM round trips are exact. Entries at
    invalid pixels are forced to 0 and must never be used as depth.
    """

    depth: np.ndarray
    valid: np.ndarray

    def __post_init__(self):
        depth = np.array(self.depth, dtype=np.float32, copy=True)
        valid = np.array(self.valid, dtype=bool, copy=True)
        if depth.ndim != 2 or depth.shape[0] < 1 or depth.shape[1] < 1:
            raise DimensionMismatchError(f"depth must be a non-empty 2-D raster, got shape {depth.shape}")
        if valid.shape != depth.shape:
            raise DimensionMismatchError(f"mask shape {valid.shape} != depth shape {depth.shape}")
        good = np.isfinite(depth) & (depth > 0)
        if np.any(valid & ~good):
            raise ValueError("valid pixels must hold finite depth > 0")
        depth[~valid] = 0.0
        object.__setattr__(self, "depth", _frozen(depth))
        object.__setattr__(self, "valid", _frozen(valid))

    @classmethod
    def from_array(cls, depth, valid=None) -> "DepthFrame":
        """Build a frame, marking non-finite and non-positive depths invalid."""
        d = np.asarray(depth, dtype=np.float32)
        with np.errstate(invalid="ignore"):
            good = np.isfinite(d) & (d > 0)
        if valid is not None:
            good &= np.asarray(valid, dtype=bool)
        return cls(np.where(good, d, np.float32(0)), good)

    @property
    def height(self) -> int:
        return self.depth.shape[0]

    @property
    def width(self) -> int:
        return self.depth.shape[1]

    @property
    def shape(self) -> tuple[int, int]:
        return self.depth.shape

    @property
    def num_valid(self) -> int:
        return int(self.valid.sum())

    def values_at(self, pattern: "SamplePattern") -> np.ndarray:
        pattern.check_bounds(self.width, self.height)
        xs, ys = pattern.xs, pattern.ys
        if not np.all(self.valid[ys, xs]):
            raise OutOfBoundsError("pattern contains pixels without valid ground truth")
        return self.depth[ys, xs].astype(np.float64)


@dataclass(frozen=True)
class GuideImage:
    """Intensity image in [0, 1]; shape ``(H, W)`` or ``(H, W, 3)``."""

    data: np.ndarray

    def __post_init__(self):
        data = np.array(self.data, dtype=np.float64, copy=True)
        if data.ndim == 3 and data.shape[2] == 1:
            data = data[:, :, 0]
        if not (data.ndim == 2 or (data.ndim == 3 and data.shape[2] == 3)):
            raise DimensionMismatchError(f"guide must be HxW or HxWx3, got {data.shape}")
        if not np.all(np.isfinite(data)) or data.min(initial=0.0) < 0 or data.max(initial=0.0) > 1:
            raise ValueError("guide intensities must lie in [0, 1]")
        object.__setattr__(self, "data", _frozen(data))

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def width(self) -> int:
        return self.data.shape[1]

    @property
    def shape(self) -> tuple[int, int]:
        return self.data.shape[:2]

    @property
    def channels(self) -> int:
        return 1 if self.data.ndim == 2 else 3

    def gray(self) -> np.ndarray:
        return self.data if self.data.ndim == 2 else self.data.mean(axis=2)


@dataclass(frozen=True)
class SamplePattern:
    """Ordered, duplicate-free list of ``(x, y)`` sample coordinates.

    Order is selection rank for greedy generators, so prefixes are
    meaningful budgets on their own.
    """

    coords: np.ndarray

    def __post_init__(self):
        c = np.array(self.coords, dtype=np.int64, copy=True).reshape(-1, 2)
        if c.size and c.min() < 0:
            raise OutOfBoundsError("negative coordinate in pattern")
        key = np.sort(c[:, 1] * (int(c[:, 0].max(initial=0)) + 1) + c[:, 0])
        if np.any(key[1:] == key[:-1]):
            raise DuplicateCoordinateError("pattern contains duplicate coordinates")
        object.__setattr__(self, "coords", _frozen(c))

    @classmethod
    def from_linear(cls, indices, width: int) -> "SamplePattern":
        idx = np.asarray(indices, dtype=np.int64)
        return cls(np.stack([idx % width, idx // width], axis=1))

    @property
    def budget(self) -> int:
        return len(self.coords)

    def __len__(self) -> int:
        return len(self.coords)

    @property
    def xs(self) -> np.ndarray:
        return self.coords[:, 0]

    @property
    def ys(self) -> np.ndarray:
        return self.coords[:, 1]

    def linear_indices(self, width: int) -> np.ndarray:
        return linear_index(self.xs, self.ys, width)

    def as_tuples(self) -> list[tuple[int, int]]:
        return [(int(x), int(y)) for x, y in self.coords]

    def mask(self, width: int, height: int) -> np.ndarray:
        self.check_bounds(width, height)
        m = np.zeros((height, width), dtype=bool)
        m[self.ys, self.xs] = True
        return m

    def check_bounds(self, width: int, height: int) -> None:
        if len(self.coords) and (self.xs.max() >= width or self.ys.max() >= height):
            raise OutOfBoundsError(f"pattern exceeds {width}x{height} frame")

    def check_against(self, valid: np.ndarray) -> None:
        """Raise unless every sample is in bounds and on a valid pixel."""
        h, w = valid.shape
        self.check_bounds(w, h)
        if not np.all(valid[self.ys, self.xs]):
            raise OutOfBoundsError("pattern samples an invalid pixel")


@dataclass(frozen=True)
class QMap:
    """Non-negative importance raster (float32, persisted as PFM)."""

    data: np.ndarray

    def __post_init__(self):
        data = np.array(self.data, dtype=np.float32, copy=True)
        if data.ndim != 2:
            raise DimensionMismatchError(f"Q map must be 2-D, got shape {data.shape}")
        if not np.all(np.isfinite(data)) or np.any(data < 0):
            raise ValueError("Q map entries must be finite and >= 0")
        data[data == 0] = 0.0  # normalise -0.0
        object.__setattr__(self, "data", _frozen(data))

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def width(self) -> int:
        return self.data.shape[1]

    @property
    def shape(self) -> tuple[int, int]:
        return self.data.shape


@dataclass(frozen=True)
class FrameworkConfig:
    """Hyper-parameters shared by Q computation, sampling and evaluation.

    ``sigma=None`` selects the density-derived default kernel width, see
    :func:`depthguide.patterns.default_sigma`.
    """

    budget: int
    depth_threshold: float = 100.0
    metric: Metric = Metric.RMSE
    mc_iterations: int = 100
    grid_fraction: float = 0.05
    sigma: float | None = None
    rng_seed: int = 0
    extra: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "metric", Metric.parse(self.metric))
        if self.budget < 1:
            raise ValueError("budget must be >= 1")
        if not self.depth_threshold > 0:
            raise ValueError("depth_threshold must be > 0")
        if self.mc_iterations < 1:
            raise ValueError("mc_iterations must be >= 1")
        if not 0.0 <= self.grid_fraction <= 1.0:
            raise ValueError("grid_fraction must lie in [0, 1]")
        if self.sigma is not None and not self.sigma > 0:
            raise ValueError("sigma must be > 0")
        if not 0 <= self.rng_seed < 2**64:
            raise ValueError("rng_seed must be a 64-bit unsigned integer")

    def replace(self, **changes) -> "FrameworkConfig":
        return dataclasses.replace(self, **changes)

    def snapshot(self) -> dict:
        return {
            "budget": self.budget,
            "depth_threshold": self.depth_threshold,
            "metric": self.metric.value,
            "mc_iterations": self.mc_iterations,
            "grid_fraction": self.grid_fraction,
            "sigma": self.sigma,
            "rng_seed": self.rng_seed,
        }


def default_budget(width: int, height: int, fraction: float = 0.01) -> int:
    return max(1, int(math.floor(width * height * fraction + 0.5)))


# --------------------------------------------------------------------------
# Netpbm-style header parsing

_WS = b" \t\r\n\x0b\x0c"


class _HeaderReader:
    def __init__(self, buf: bytes):
        self.buf = buf
        self.pos = 0

    def skip_ws(self, comments: bool):
        buf = self.buf
        while self.pos < len(buf):
            c = buf[self.pos : self.pos + 1]
            if c in _WS:
                self.pos += 1
            elif comments and c == b"#":
                nl = buf.find(b"\n", self.pos)
                self.pos = len(buf) if nl < 0 else nl + 1
            else:
                break

    def token(self, what: str, comments: bool) -> tuple[bytes, int]:
        self.skip_ws(comments)
        start = self.pos
        while self.pos < len(self.buf) and self.buf[self.pos : self.pos + 1] not in _WS:
            self.pos += 1
        if self.pos == start:
            raise FormatError(f"missing {what} in header", start)
        return self.buf[start : self.pos], start

    def int_token(self, what: str, comments: bool) -> int:
        tok, off = self.token(what, comments)
        try:
            value = int(tok)
        except ValueError:
            raise FormatError(f"bad {what} {tok!r}", off) from None
        if value < 1:
            raise FormatError(f"{what} must be positive, got {value}", off)
        return value

    def end_header(self):
        # exactly one whitespace byte separates the header from the payload
        if self.pos >= len(self.buf) or self.buf[self.pos : self.pos + 1] not in _WS:
            raise FormatError("header not terminated by whitespace", self.pos)
        self.pos += 1
        return self.pos


def _read_payload(buf: bytes, start: int, nbytes: int) -> bytes:
    end = start + nbytes
    if len(buf) < end:
        raise FormatError(f"truncated payload: expected {nbytes} bytes, found {len(buf) - start}", len(buf))
    return buf[start:end]


def read_pfm(path: str | Path) -> np.ndarray:
    """Read a single-channel PFM into a top-row-first float32 array."""
    buf = Path(path).read_bytes()
    hr = _HeaderReader(buf)
    magic, off = hr.token("magic", comments=False)
    if magic == b"PF":
        raise FormatError("unsupported channel count 3 (PF); expected single-channel Pf", off)
    if magic != b"Pf":
        raise FormatError(f"not a PFM file (magic {magic!r})", off)
    width = hr.int_token("width", comments=False)
    height = hr.int_token("height", comments=False)
    tok, off = hr.token("scale", comments=False)
    try:
        scale = float(tok)
    except ValueError:
        raise FormatError(f"bad scale {tok!r}", off) from None
    if scale == 0 or not math.isfinite(scale):
        raise FormatError(f"bad scale {tok!r}", off)
    start = hr.end_header()
    dtype = np.dtype("<f4") if scale < 0 else np.dtype(">f4")
    raw = _read_payload(buf, start, width * height * 4)
    data = np.frombuffer(raw, dtype=dtype).reshape(height, width)
    return np.flipud(data).astype(np.float32)


def write_pfm(path: str | Path, data: np.ndarray) -> None:
    a = np.asarray(data, dtype="<f4")
    if a.ndim != 2:
        raise DimensionMismatchError("PFM writer expects a 2-D raster")
    h, w = a.shape
    header = f"Pf\n{w} {h}\n-1.0\n".encode("ascii")
    Path(path).write_bytes(header + np.ascontiguousarray(np.flipud(a)).tobytes())


def read_pnm(path: str | Path) -> tuple[np.ndarray, int]:
    """Read a binary PGM (P5) or PPM (P6). Returns ``(array, maxval)``."""
    buf = Path(path).read_bytes()
    hr = _HeaderReader(buf)
    magic, off = hr.token("magic", comments=True)
    if magic not in (b"P5", b"P6"):
        raise FormatError(f"not a binary PGM/PPM file (magic {magic!r})", off)
    channels = 1 if magic == b"P5" else 3
    width = hr.int_token("width", comments=True)
    height = hr.int_token("height", comments=True)
    maxval = hr.int_token("maxval", comments=True)
    if maxval > 65535:
        raise FormatError(f"maxval {maxval} exceeds 65535", hr.pos)
    start = hr.end_header()
    dtype = np.dtype(">u2") if maxval > 255 else np.dtype("u1")
    raw = _read_payload(buf, start, width * height * channels * dtype.itemsize)
    a = np.frombuffer(raw, dtype=dtype).astype(np.int64)
    shape = (height, width) if channels == 1 else (height, width, 3)
    return a.reshape(shape), maxval


def write_pnm(path: str | Path, data: np.ndarray, maxval: int) -> None:
    a = np.asarray(data)
    if a.ndim == 2:
        magic = "P5"
    elif a.ndim == 3 and a.shape[2] == 3:
        magic = "P6"
    else:
        raise DimensionMismatchError(f"cannot write array of shape {a.shape} as PGM/PPM")
    if a.size and (a.min() < 0 or a.max() > maxval):
        raise ValueError("pixel values outside [0, maxval]")
    dtype = ">u2" if maxval > 255 else "u1"
    h, w = a.shape[:2]
    header = f"{magic}\n{w} {h}\n{maxval}\n".encode("ascii")
    Path(path).write_bytes(header + np.ascontiguousarray(a.astype(dtype)).tobytes())


# --------------------------------------------------------------------------
# Depth frames


def load_depth(path: str | Path, format: DepthFormat | str | None = None) -> DepthFrame:
    """Load a depth frame.

    PFM holds meters; non-positive or non-finite values become invalid.
    PGM16 holds millimeters (maxval 65535); 0 marks an invalid pixel.
    """
    fmt = DepthFormat.from_path(path) if format is None else DepthFormat(format)
    if fmt is DepthFormat.PFM:
        return DepthFrame.from_array(read_pfm(path))
    a, maxval = read_pnm(path)
    if a.ndim != 2:
        raise FormatError("unsupported channel count 3 for depth; expected P5", 0)
    if maxval != 65535:
        raise FormatError(f"PGM16 depth requires maxval 65535, got {maxval}", 0)
    valid = a > 0
    depth = (a / 1000.0).astype(np.float32)
    return DepthFrame(np.where(valid, depth, np.float32(0)), valid)


def save_depth(frame: DepthFrame, path: str | Path, format: DepthFormat | str | None = None, *,
               strict: bool = False) -> None:
    """Inverse of :func:`load_depth`.

    PGM16 rounds to the nearest millimeter and clamps at 65.535 m unless
    ``strict`` is set, in which case out-of-range depth raises.
    """
    fmt = DepthFormat.from_path(path) if format is None else DepthFormat(format)
    if fmt is DepthFormat.PFM:
        write_pfm(path, np.where(frame.valid, frame.depth, np.float32(0)))
        return
    d = frame.depth.astype(np.float64)
    if strict and np.any(frame.valid & (d > PGM16_MAX_DEPTH)):
        raise ValueError(f"depth exceeds {PGM16_MAX_DEPTH} m, not representable in PGM16")
    mm = np.clip(np.floor(d * 1000.0 + 0.5), 1, 65535).astype(np.int64)
    write_pnm(path, np.where(frame.valid, mm, 0), 65535)


# --------------------------------------------------------------------------
# Guide images, Q maps, masks


def load_guide(path: str | Path) -> GuideImage:
    a, maxval = read_pnm(path)
    return GuideImage(a / float(maxval))


def save_guide(guide: GuideImage, path: str | Path) -> None:
    """Write as 16-bit PGM/PPM. Intensities quantised to k/65535 round-trip exactly."""
    write_pnm(path, np.floor(guide.data * 65535.0 + 0.5).astype(np.int64), 65535)


def quantize_guide(data: np.ndarray) -> np.ndarray:
    """Snap intensities to the 16-bit grid used by :func:`save_guide`."""
    return np.floor(np.clip(data, 0.0, 1.0) * 65535.0 + 0.5) / 65535.0


def load_qmap(path: str | Path) -> QMap:
    return QMap(read_pfm(path))


def save_qmap(qmap: QMap, path: str | Path) -> None:
    write_pfm(path, qmap.data)


def load_mask(path: str | Path) -> np.ndarray:
    a, _ = read_pnm(path)
    if a.ndim != 2:
        raise FormatError("mask must be single-channel", 0)
    return a > 0


def save_mask(mask: np.ndarray, path: str | Path) -> None:
    write_pnm(path, np.where(np.asarray(mask, dtype=bool), 255, 0), 255)


# --------------------------------------------------------------------------
# Pattern CSV


def save_pattern(pattern: SamplePattern, path: str | Path) -> None:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["x", "y"])
    w.writerows(pattern.as_tuples())
    Path(path).write_text(buf.getvalue())


def load_pattern(path: str | Path) -> SamplePattern:
    """Load a pattern CSV. Bounds are checked later, against the frame in use."""
    text = Path(path).read_text()
    rows = list(csv.reader(io.StringIO(text)))
    if not rows or [c.strip() for c in rows[0]] != ["x", "y"]:
        raise FormatError("pattern CSV must start with header 'x,y'", 0)
    coords = []
    seen = set()
    for lineno, row in enumerate(rows[1:], start=2):
        if not row or all(not c.strip() for c in row):
            continue
        if len(row) != 2:
            raise FormatError(f"line {lineno}: expected 2 fields, got {len(row)}")
        try:
            x, y = int(row[0]), int(row[1])
        except ValueError:
            raise FormatError(f"line {lineno}: non-integer coordinate {row!r}") from None
        if (x, y) in seen:
            raise DuplicateCoordinateError(f"line {lineno}: duplicate coordinate ({x}, {y})")
        if x < 0 or y < 0:
            raise OutOfBoundsError(f"line {lineno}: negative coordinate ({x}, {y})")
        seen.add((x, y))
        coords.append((x, y))
    return SamplePattern(np.array(coords, dtype=np.int64).reshape(-1, 2))
