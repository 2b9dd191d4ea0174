"""Binary decoder-bundle files.

Layout (all little-endian):

    offset 0   magic  ``SCNB1\\0``                     (6 bytes)
    offset 6   header ``<u32 H, u32 W, u32 C, u32 B>`` (16 bytes)
    offset 22  ``<f32 a>`` average depth               (4 bytes)
    offset 26  ``<u32 flags>`` reserved, zero          (4 bytes)
    offset 30  tensors as f32, row-major, code index fastest:
               D0[H*W], b[H*W], J_d[H*W*B], S0[H*W*C], J_s[H*W*C*B]

The file size must match the header exactly; a reload then re-write is
byte-identical.
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from .decoder import DecoderBundle

MAGIC = b"SCNB1\x00"
_HEADER = struct.Struct("<IIIIfI")
HEADER_SIZE = len(MAGIC) + _HEADER.size  # 30 bytes


class BundleFormatError(ValueError):
    """Malformed bundle file; the message names the offending byte offset/field."""


def write_bundle(path, bundle: DecoderBundle) -> None:
    h, w = bundle.shape
    c = bundle.class_count
    b = bundle.code_size
    parts = [
        MAGIC,
        _HEADER.pack(h, w, c, b, float(bundle.avg_depth), 0),
        np.ascontiguousarray(bundle.d0, dtype="<f4").tobytes(),
        np.ascontiguousarray(bundle.b, dtype="<f4").tobytes(),
        np.ascontiguousarray(bundle.jd, dtype="<f4").tobytes(),
        np.ascontiguousarray(bundle.s0, dtype="<f4").tobytes(),
        np.ascontiguousarray(bundle.js, dtype="<f4").tobytes(),
    ]
    Path(path).write_bytes(b"".join(parts))


def expected_size(h: int, w: int, c: int, b: int) -> int:
    return HEADER_SIZE + 4 * (h * w * (2 + b + c + c * b))


def read_bundle(path) -> DecoderBundle:
    raw = Path(path).read_bytes()
    if len(raw) < HEADER_SIZE:
        raise BundleFormatError(f"{path}: truncated header ({len(raw)} bytes < {HEADER_SIZE})")
    if raw[: len(MAGIC)] != MAGIC:
        raise BundleFormatError(
            f"{path}: bad magic at byte 0: expected {MAGIC!r} (SCNB1), got {raw[:len(MAGIC)]!r}"
        )
    h, w, c, b, avg_depth, flags = _HEADER.unpack_from(raw, len(MAGIC))
    if min(h, w, c, b) <= 0:
        raise BundleFormatError(f"{path}: invalid dimensions H={h} W={w} C={c} B={b} in header at byte 6")
    if flags != 0:
        raise BundleFormatError(f"{path}: unsupported flags {flags:#x} at byte 26")
    want = expected_size(h, w, c, b)
    if len(raw) != want:
        raise BundleFormatError(
            f"{path}: file size {len(raw)} does not match header (expected {want}; "
            f"tensor section starts at byte {HEADER_SIZE})"
        )
    data = np.frombuffer(raw, dtype="<f4", offset=HEADER_SIZE).astype(np.float64)
    n = h * w
    at = 0

    def take(count, shape):
        nonlocal at
        out = data[at : at + count].reshape(shape)
        at += count
        return out

    d0 = take(n, (h, w))
    unc = take(n, (h, w))
    jd = take(n * b, (h, w, b))
    s0 = take(n * c, (h, w, c))
    js = take(n * c * b, (h, w, c, b))
    try:
        return DecoderBundle(d0=d0, jd=jd, s0=s0, js=js, b=unc, avg_depth=float(avg_depth))
    except ValueError as exc:
        raise BundleFormatError(f"{path}: invalid tensor content: {exc}") from exc
