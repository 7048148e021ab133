"""HDR file codecs and dataset ingestion.

Radiance RGBE (.hdr) with new-style RLE or flat scanlines, PFM ("PF" color),
and 8-bit PNG export of tonemapped images.  Pixel data lives in linear
radiance everywhere; gamma handling is confined to the tonemap/export path.
OpenEXR is deliberately out of scope; RGBE is the interchange format.
"""

from __future__ import annotations

import hashlib
import io
import json
import math
import re
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image

from .errors import ParseError, ValidationError
from .geometry import EnvMap

__all__ = [
    "rgbe_encode",
    "rgbe_decode",
    "read_hdr",
    "write_hdr",
    "read_pfm",
    "write_pfm",
    "export_png",
    "encode_png_bytes",
    "decode_png",
    "DatasetIndex",
    "IndexEntry",
    "ingest_dir",
]

_HDR_MAGIC = b"#?RADIANCE"
_RES_RE = re.compile(rb"^-Y (\d+) \+X (\d+)$")


def rgbe_encode(rgb) -> tuple[int, int, int, int]:
    """Encode linear RGB into (r, g, b, e) shared-exponent bytes.

    Mantissas are rounded to the nearest step, so the decoded max channel is
    within 1/256 of the original.  (1, 1, 1) encodes to (128, 128, 128, 129)
    since 1.0 = 0.5 * 2^1.
    """
    r, g, b = (float(c) for c in rgb)
    for c in (r, g, b):
        if not math.isfinite(c) or c < 0.0:
            raise ValidationError(f"RGBE input must be finite and >= 0, got {rgb}")
    m = max(r, g, b)
    if m < 1e-38:
        return (0, 0, 0, 0)
    frac, exp = math.frexp(m)
    if frac * 256.0 >= 255.5:  # rounding would overflow the mantissa byte
        frac /= 2.0
        exp += 1
    if exp + 128 > 255:
        raise ValidationError(f"value too large for RGBE: {m}")
    if exp + 128 < 1:
        return (0, 0, 0, 0)
    scale = frac * 256.0 / m
    return (
        int(r * scale + 0.5),
        int(g * scale + 0.5),
        int(b * scale + 0.5),
        exp + 128,
    )


def rgbe_decode(pixel) -> np.ndarray:
    """Decode (r, g, b, e) bytes to linear RGB; e = 0 is canonical zero."""
    r, g, b, e = (int(c) for c in pixel)
    for c in (r, g, b, e):
        if not 0 <= c <= 255:
            raise ValidationError(f"RGBE bytes out of range: {pixel}")
    if e == 0:
        return np.zeros(3)
    scale = math.ldexp(1.0, e - 136)  # mantissa / 256 * 2^(e - 128)
    return np.array([r * scale, g * scale, b * scale])


def _encode_rgbe_rows(arr: np.ndarray) -> np.ndarray:
    """Vectorized RGBE encoding of an (H, W, 3) array to (H, W, 4) uint8."""
    m = arr.max(axis=2)
    frac, exp = np.frexp(m)
    bump = frac * 256.0 >= 255.5
    frac = np.where(bump, frac / 2.0, frac)
    exp = np.where(bump, exp + 1, exp)
    if np.any(exp + 128 > 255):
        raise ValidationError("value too large for RGBE")
    valid = (m >= 1e-38) & (exp + 128 >= 1)
    scale = np.where(valid, frac * 256.0 / np.where(m > 0, m, 1.0), 0.0)
    mant = np.floor(arr * scale[..., None] + 0.5).astype(np.uint8)
    e = np.where(valid, exp + 128, 0).astype(np.uint8)
    out = np.concatenate([mant, e[..., None]], axis=2)
    out[~valid] = 0
    return out


def _decode_rgbe_rows(rgbe: np.ndarray) -> np.ndarray:
    e = rgbe[..., 3].astype(np.int32)
    scale = np.where(e > 0, np.ldexp(1.0, e - 136), 0.0)
    return rgbe[..., :3].astype(np.float64) * scale[..., None]


def _parse_hdr_header(data: bytes):
    """Returns (height, width, body_offset)."""
    pos = 0
    end = data.find(b"\n", pos)
    if end < 0 or data[pos:end] != _HDR_MAGIC:
        raise ParseError("not a Radiance file (expected '#?RADIANCE' magic)", offset=0)
    pos = end + 1
    saw_blank = False
    while True:
        end = data.find(b"\n", pos)
        if end < 0:
            raise ParseError("truncated header", offset=pos)
        line = data[pos:end]
        if line == b"":
            saw_blank = True
            pos = end + 1
            break
        if line.startswith(b"FORMAT=") and line != b"FORMAT=32-bit_rle_rgbe":
            raise ParseError(f"unsupported FORMAT {line[7:]!r}", offset=pos)
        pos = end + 1
    if not saw_blank:
        raise ParseError("missing blank line before resolution", offset=pos)
    end = data.find(b"\n", pos)
    if end < 0:
        raise ParseError("missing resolution line", offset=pos)
    match = _RES_RE.match(data[pos:end])
    if not match:
        raise ParseError(
            f"unsupported resolution line {data[pos:end]!r} (only '-Y H +X W')", offset=pos
        )
    height, width = int(match.group(1)), int(match.group(2))
    if height < 1 or width < 1:
        raise ParseError(f"degenerate resolution {height}x{width}", offset=pos)
    return height, width, end + 1


def _decode_hdr_bytes(data: bytes) -> np.ndarray:
    height, width, pos = _parse_hdr_header(data)
    rgbe = np.zeros((height, width, 4), dtype=np.uint8)
    for row in range(height):
        if pos + 4 > len(data):
            raise ParseError(f"truncated scanline {row}", offset=pos)
        head = data[pos : pos + 4]
        new_rle = (
            head[0] == 2
            and head[1] == 2
            and ((head[2] << 8) | head[3]) == width
            and 8 <= width <= 32767
        )
        if new_rle:
            pos += 4
            for comp in range(4):
                filled = 0
                while filled < width:
                    if pos >= len(data):
                        raise ParseError(f"truncated RLE data in scanline {row}", offset=pos)
                    code = data[pos]
                    pos += 1
                    if code > 128:  # run
                        count = code - 128
                        if pos >= len(data) or filled + count > width:
                            raise ParseError(f"bad RLE run in scanline {row}", offset=pos)
                        rgbe[row, filled : filled + count, comp] = data[pos]
                        pos += 1
                    else:  # literal block
                        count = code
                        if count == 0 or filled + count > width or pos + count > len(data):
                            raise ParseError(f"bad RLE literal in scanline {row}", offset=pos)
                        rgbe[row, filled : filled + count, comp] = np.frombuffer(
                            data[pos : pos + count], dtype=np.uint8
                        )
                        pos += count
                    filled += count
        else:
            need = width * 4
            if pos + need > len(data):
                raise ParseError(f"truncated flat scanline {row}", offset=pos)
            rgbe[row] = np.frombuffer(data[pos : pos + need], dtype=np.uint8).reshape(width, 4)
            pos += need
    return _decode_rgbe_rows(rgbe)


def read_hdr(path) -> EnvMap:
    """Read a Radiance .hdr panorama (W = 2H enforced by :class:`EnvMap`)."""
    return EnvMap(_decode_hdr_bytes(Path(path).read_bytes()))


def _rle_component(comp: np.ndarray) -> bytes:
    """Canonical new-style RLE for one component of one scanline."""
    out = bytearray()
    w = len(comp)
    i = 0
    while i < w:
        run = 1
        while i + run < w and comp[i + run] == comp[i] and run < 127:
            run += 1
        if run >= 4:
            out.append(128 + run)
            out.append(int(comp[i]))
            i += run
            continue
        # literal block: extend until a >=4 run starts or 128 bytes are taken
        j = i + run
        while j < w and j - i < 128:
            if j + 3 < w and comp[j] == comp[j + 1] == comp[j + 2] == comp[j + 3]:
                break
            j += 1
        out.append(j - i)
        out.extend(int(c) for c in comp[i:j])
        i = j
    return bytes(out)


def _hdr_bytes(arr: np.ndarray) -> bytes:
    height, width = arr.shape[:2]
    rgbe = _encode_rgbe_rows(arr)
    parts = [
        _HDR_MAGIC + b"\n",
        b"FORMAT=32-bit_rle_rgbe\n",
        b"\n",
        f"-Y {height} +X {width}\n".encode(),
    ]
    use_rle = 8 <= width <= 32767
    for row in range(height):
        if use_rle:
            parts.append(bytes([2, 2, (width >> 8) & 0xFF, width & 0xFF]))
            for comp in range(4):
                parts.append(_rle_component(rgbe[row, :, comp]))
        else:
            parts.append(rgbe[row].tobytes())
    return b"".join(parts)


def write_hdr(path, image) -> None:
    """Write an :class:`EnvMap` or a plain (H, W, 3) array as Radiance .hdr."""
    arr = image.data if isinstance(image, EnvMap) else np.asarray(image, dtype=np.float64)
    if arr.ndim != 3 or arr.shape[2] != 3:
        raise ValidationError(f"expected an HxWx3 image, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)) or arr.min() < 0.0:
        raise ValidationError("HDR output must be finite and >= 0")
    Path(path).write_bytes(_hdr_bytes(arr))


def _decode_pfm_bytes(data: bytes) -> np.ndarray:
    def next_line(pos):
        end = data.find(b"\n", pos)
        if end < 0:
            raise ParseError("truncated PFM header", offset=pos)
        return data[pos:end], end + 1

    magic, pos = next_line(0)
    if magic == b"Pf":
        raise ValidationError("grayscale 'Pf' PFM is not supported, expected color 'PF'")
    if magic != b"PF":
        raise ParseError(f"not a PFM file (magic {magic!r})", offset=0)
    dims, pos = next_line(pos)
    try:
        width, height = (int(t) for t in dims.split())
    except ValueError as exc:
        raise ParseError(f"bad PFM dimensions line {dims!r}", offset=pos) from exc
    if width < 1 or height < 1:
        raise ParseError(f"degenerate PFM dimensions {width}x{height}", offset=pos)
    scale_line, pos = next_line(pos)
    try:
        scale = float(scale_line)
    except ValueError as exc:
        raise ParseError(f"bad PFM scale line {scale_line!r}", offset=pos) from exc
    if scale == 0.0:
        raise ParseError("PFM scale must be nonzero", offset=pos)
    dtype = "<f4" if scale < 0.0 else ">f4"
    need = width * height * 3 * 4
    if len(data) - pos < need:
        raise ParseError(
            f"truncated PFM payload ({len(data) - pos} of {need} bytes)", offset=pos
        )
    flat = np.frombuffer(data[pos : pos + need], dtype=dtype).astype(np.float64)
    rows = flat.reshape(height, width, 3)
    return rows[::-1].copy()  # PFM stores scanlines bottom-to-top


def read_pfm(path) -> EnvMap:
    """Read a color PFM panorama (lossless 32-bit float container)."""
    return EnvMap(_decode_pfm_bytes(Path(path).read_bytes()))


def write_pfm(path, image) -> None:
    """Write as little-endian color PFM (scale -1.0), bottom-to-top rows."""
    arr = image.data if isinstance(image, EnvMap) else np.asarray(image, dtype=np.float64)
    if arr.ndim != 3 or arr.shape[2] != 3:
        raise ValidationError(f"expected an HxWx3 image, got shape {arr.shape}")
    height, width = arr.shape[:2]
    header = f"PF\n{width} {height}\n-1.0\n".encode()
    body = arr[::-1].astype("<f4").tobytes()
    Path(path).write_bytes(header + body)


def _quantize_ldr(ldr: np.ndarray) -> np.ndarray:
    arr = np.asarray(ldr, dtype=np.float64)
    if arr.ndim != 3 or arr.shape[2] != 3:
        raise ValidationError(f"expected an HxWx3 image, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)) or arr.min() < 0.0 or arr.max() > 1.0:
        raise ValidationError("LDR image values must lie in [0, 1]")
    return np.rint(arr * 255.0).astype(np.uint8)


def export_png(ldr, path) -> None:
    """Write an LDR image in [0, 1] as an 8-bit RGB PNG (round(255 x))."""
    Image.fromarray(_quantize_ldr(ldr), mode="RGB").save(Path(path), format="PNG")


def encode_png_bytes(ldr) -> bytes:
    """In-memory variant of :func:`export_png`; deterministic bytes."""
    buf = io.BytesIO()
    Image.fromarray(_quantize_ldr(ldr), mode="RGB").save(buf, format="PNG")
    return buf.getvalue()


def decode_png(source) -> np.ndarray:
    """Read an 8-bit RGB PNG back to uint8 (H, W, 3)."""
    if isinstance(source, (bytes, bytearray)):
        source = io.BytesIO(source)
    with Image.open(source) as img:
        return np.asarray(img.convert("RGB"))


@dataclass(frozen=True)
class IndexEntry:
    path: str
    width: int | None = None
    height: int | None = None
    sha256: str | None = None
    error: str | None = None


@dataclass(frozen=True)
class DatasetIndex:
    entries: tuple[IndexEntry, ...]
    format_tag: str

    def to_json(self) -> str:
        return json.dumps(
            {
                "format": self.format_tag,
                "entries": [
                    {
                        "path": e.path,
                        "width": e.width,
                        "height": e.height,
                        "sha256": e.sha256,
                        "error": e.error,
                    }
                    for e in self.entries
                ],
            },
            indent=2,
        )


def _probe_dims(path: Path, data: bytes):
    suffix = path.suffix.lower()
    if suffix == ".hdr":
        height, width, _ = _parse_hdr_header(data)
        return width, height
    if suffix == ".pfm":
        arr = _decode_pfm_bytes(data)
        return arr.shape[1], arr.shape[0]
    raise ValidationError(f"unsupported file type {suffix!r}")


def ingest_dir(directory, pattern: str = "*.hdr") -> DatasetIndex:
    """Index matching files in a directory, lexicographically ordered.

    Unreadable or malformed files stay in the index with an error tag; the
    scan never aborts on a bad file.
    """
    root = Path(directory)
    if not root.is_dir():
        raise ParseError(f"not a readable directory: {root}")
    entries = []
    for path in sorted(root.glob(pattern)):
        if not path.is_file():
            continue
        try:
            data = path.read_bytes()
        except OSError as exc:
            entries.append(IndexEntry(path=str(path), error=f"io: {exc}"))
            continue
        digest = hashlib.sha256(data).hexdigest()
        try:
            width, height = _probe_dims(path, data)
        except (ParseError, ValidationError) as exc:
            entries.append(IndexEntry(path=str(path), sha256=digest, error=str(exc)))
            continue
        entries.append(IndexEntry(path=str(path), width=width, height=height, sha256=digest))
    return DatasetIndex(entries=tuple(entries), format_tag=pattern)
