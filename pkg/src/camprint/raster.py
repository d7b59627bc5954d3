"""Image and raster containers plus bit-exact file formats.

A Raster is a thin wrapper over a float32 numpy array, 2-D ``(H, W)`` for
single-channel data or 3-D ``(H, W, C)`` for color. Images live in [0, 1]
(8-bit samples map through v/255); residuals and heatmaps are unbounded reals;
masks hold {0, 1}.

The native binary format ("NPRT") is a 24-byte little-endian header
``magic "NPRT" | version u32 | height u32 | width u32 | channels u32 |
reserved u32`` followed by float32 samples, row-major, channel interleaved.
Round trips are bit-exact.
"""

import os
import struct
import tempfile
from dataclasses import dataclass

import numpy as np
from PIL import Image

RASTER_MAGIC = b"NPRT"
RASTER_VERSION = 1
_HEADER = struct.Struct("<4sIIIII")

LUMA_WEIGHTS = (0.299, 0.587, 0.114)


class RasterFormatError(ValueError):
    """Malformed raster/weight file or unsupported image format."""


@dataclass
class Raster:
    data: np.ndarray

    def __post_init__(self):
        arr = np.asarray(self.data, dtype=np.float32)
        if arr.ndim == 3 and arr.shape[2] == 1:
            arr = arr[:, :, 0]
        if arr.ndim not in (2, 3):
            raise ValueError(f"raster data must be 2-D or 3-D, got shape {arr.shape}")
        if arr.ndim == 3 and arr.shape[2] != 3:
            raise ValueError(f"color rasters must have 3 channels, got {arr.shape[2]}")
        self.data = arr

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def width(self) -> int:
        return self.data.shape[1]

    @property
    def channels(self) -> int:
        return 1 if self.data.ndim == 2 else self.data.shape[2]


@dataclass(frozen=True)
class PatchRef:
    """Window of `size` pixels at (top, left) in the image named `source`."""

    source: str
    top: int
    left: int
    size: int

    def position_class(self, period: int = 8) -> tuple:
        return (self.top % period, self.left % period)


def atomic_write_bytes(path, payload: bytes):
    """Write-temp-rename so readers never observe partial files."""
    path = os.fspath(path)
    dirname = os.path.dirname(path) or "."
    fd, tmp = tempfile.mkstemp(dir=dirname, prefix=".tmp-", suffix=".part")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(payload)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def load_image(path) -> Raster:
    """Load an 8-bit PNG or PGM (P5) as a [0, 1] image raster (v / 255)."""
    path = os.fspath(path)
    if not os.path.exists(path):
        raise FileNotFoundError(path)
    if path.lower().endswith(".pgm"):
        return Raster(_read_pgm(path) / np.float32(255.0))
    img = Image.open(path)
    if img.mode == "I;16" or img.mode == "I":
        raise RasterFormatError(f"unsupported bit depth in {path} (8-bit only)")
    if img.mode not in ("L", "RGB"):
        img = img.convert("RGB" if ("A" in img.mode or img.mode == "P") else "L")
    arr = np.asarray(img, dtype=np.uint8)
    return Raster(arr.astype(np.float32) / np.float32(255.0))


def _read_pgm(path) -> np.ndarray:
    with open(path, "rb") as fh:
        data = fh.read()
    if not data.startswith(b"P5"):
        raise RasterFormatError(f"{path}: not a binary PGM (P5) file")
    fields, pos = [], 2
    while len(fields) < 3:
        while pos < len(data) and data[pos : pos + 1].isspace():
            pos += 1
        if pos < len(data) and data[pos : pos + 1] == b"#":
            while pos < len(data) and data[pos] != 0x0A:
                pos += 1
            continue
        start = pos
        while pos < len(data) and not data[pos : pos + 1].isspace():
            pos += 1
        fields.append(data[start:pos])
    pos += 1  # single whitespace after maxval
    width, height, maxval = (int(f) for f in fields)
    if maxval != 255:
        raise RasterFormatError(f"{path}: unsupported bit depth (maxval {maxval})")
    pixels = np.frombuffer(data, dtype=np.uint8, count=height * width, offset=pos)
    if pixels.size != height * width:
        raise RasterFormatError(f"{path}: truncated pixel data")
    return pixels.reshape(height, width).astype(np.float32)


def save_pgm(raster: Raster, path):
    """8-bit PGM of a [0, 1] single-channel image (round(v * 255))."""
    if raster.channels != 1:
        raise ValueError("PGM output is single-channel only")
    samples = np.clip(np.rint(raster.data * 255.0), 0, 255).astype(np.uint8)
    header = f"P5\n{raster.width} {raster.height}\n255\n".encode("ascii")
    atomic_write_bytes(path, header + samples.tobytes())


def save_png(raster: Raster, path):
    """8-bit grayscale or RGB PNG of a [0, 1] image (round(v * 255))."""
    samples = np.clip(np.rint(raster.data * 255.0), 0, 255).astype(np.uint8)
    img = Image.fromarray(samples, mode="L" if raster.channels == 1 else "RGB")
    fd, tmp = tempfile.mkstemp(dir=os.path.dirname(os.fspath(path)) or ".",
                               prefix=".tmp-", suffix=".png")
    os.close(fd)
    try:
        img.save(tmp, format="PNG")
        os.replace(tmp, os.fspath(path))
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def to_luminance(img: Raster) -> Raster:
    """Rec.601 luma: 0.299 R + 0.587 G + 0.114 B."""
    if img.channels != 3:
        raise ValueError(f"luminance conversion needs 3 channels, got {img.channels}")
    r, g, b = (img.data[:, :, i].astype(np.float64) for i in range(3))
    y = LUMA_WEIGHTS[0] * r + LUMA_WEIGHTS[1] * g + LUMA_WEIGHTS[2] * b
    return Raster(y.astype(np.float32))


def extract_patch(img: Raster, ref: PatchRef) -> Raster:
    if ref.top < 0 or ref.left < 0 or ref.size < 1:
        raise ValueError(f"bad patch ref {ref}")
    if ref.top + ref.size > img.height or ref.left + ref.size > img.width:
        raise ValueError(
            f"patch {ref} out of bounds for {img.height}x{img.width} image")
    window = img.data[ref.top : ref.top + ref.size, ref.left : ref.left + ref.size]
    return Raster(window.copy())


def save_raster(raster: Raster, path):
    header = _HEADER.pack(RASTER_MAGIC, RASTER_VERSION, raster.height,
                          raster.width, raster.channels, 0)
    samples = np.ascontiguousarray(raster.data, dtype="<f4")
    atomic_write_bytes(path, header + samples.tobytes())


def load_raster(path) -> Raster:
    with open(os.fspath(path), "rb") as fh:
        blob = fh.read()
    if len(blob) < _HEADER.size:
        raise RasterFormatError(f"{path}: too short for a raster header")
    magic, version, height, width, channels, _ = _HEADER.unpack_from(blob)
    if magic != RASTER_MAGIC:
        raise RasterFormatError(f"{path}: bad magic {magic!r}")
    if version != RASTER_VERSION:
        raise RasterFormatError(f"{path}: unsupported version {version}")
    count = height * width * channels
    payload = blob[_HEADER.size :]
    if len(payload) != 4 * count:
        raise RasterFormatError(
            f"{path}: expected {4 * count} sample bytes, found {len(payload)}")
    arr = np.frombuffer(payload, dtype="<f4").reshape(
        (height, width) if channels == 1 else (height, width, channels))
    return Raster(arr.copy())


# Monotone colormap for heatmap previews: black -> violet -> red -> orange ->
# yellow, linear in the anchor index so equal score gaps get equal LUT gaps.
_CMAP_ANCHORS = np.array(
    [[0, 0, 0], [84, 18, 110], [194, 48, 56], [244, 124, 28], [252, 254, 164]],
    dtype=np.float64)


def _colormap_lut() -> np.ndarray:
    t = np.linspace(0.0, 1.0, 256)
    pos = np.linspace(0.0, 1.0, len(_CMAP_ANCHORS))
    lut = np.stack([np.interp(t, pos, _CMAP_ANCHORS[:, c]) for c in range(3)], axis=1)
    return np.rint(lut).astype(np.uint8)


_LUT = _colormap_lut()


def render_heatmap_png(heatmap: Raster, path):
    """Min-max normalize and render through the fixed colormap.

    Constant heatmaps have no usable range and render uniform mid-gray.
    """
    if heatmap.channels != 1:
        raise ValueError("heatmap rendering is single-channel only")
    data = heatmap.data.astype(np.float64)
    lo, hi = float(data.min()), float(data.max())
    if hi > lo:
        idx = np.rint((data - lo) / (hi - lo) * 255.0).astype(np.intp)
        rgb = _LUT[idx]
    else:
        rgb = np.full((heatmap.height, heatmap.width, 3), 128, dtype=np.uint8)
    img = Image.fromarray(rgb, mode="RGB")
    fd, tmp = tempfile.mkstemp(dir=os.path.dirname(os.fspath(path)) or ".",
                               prefix=".tmp-", suffix=".png")
    os.close(fd)
    try:
        img.save(tmp, format="PNG")
        os.replace(tmp, os.fspath(path))
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
