"""Map and image files: PGM (P5), PPM (P6), and little-endian PFM.

Float maps are written twice when meant for viewing: a PFM with the exact
values and an 8-bit PGM normalized over a range recorded in a ``.range.txt``
sidecar. Label maps get a fixed palette PPM for viewing plus a raw-id PGM
that round-trips exactly.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np

# fixed, documented palette (13 entries; tests pin the first six)
LABEL_PALETTE = np.array(
    [
        (31, 119, 180),
        (255, 127, 14),
        (44, 160, 44),
        (214, 39, 40),
        (148, 103, 189),
        (140, 86, 75),
        (227, 119, 194),
        (127, 127, 127),
        (188, 189, 34),
        (23, 190, 207),
        (174, 199, 232),
        (255, 187, 120),
        (152, 223, 138),
    ],
    dtype=np.uint8,
)


def palette(class_count: int) -> np.ndarray:
    if class_count > len(LABEL_PALETTE):
        raise ValueError(f"palette supports up to {len(LABEL_PALETTE)} classes")
    return LABEL_PALETTE[:class_count]


def write_pgm(path, values: np.ndarray) -> None:
    """8-bit binary PGM from a uint8 array."""
    arr = np.asarray(values)
    if arr.dtype != np.uint8 or arr.ndim != 2:
        raise ValueError("write_pgm expects a 2-D uint8 array")
    h, w = arr.shape
    Path(path).write_bytes(f"P5\n{w} {h}\n255\n".encode() + arr.tobytes())


def read_pgm(path) -> np.ndarray:
    data = Path(path).read_bytes()
    magic, dims, maxval, pixels = _parse_netpbm(data, b"P5")
    w, h = dims
    if maxval != 255:
        raise ValueError(f"{path}: only 8-bit PGM supported")
    return np.frombuffer(pixels, dtype=np.uint8, count=h * w).reshape(h, w).copy()


def write_pgm_normalized(path, values: np.ndarray, fixed_range: tuple[float, float] | None = None) -> None:
    """Normalized 8-bit PGM of a float map, with the range in a sidecar file.

    ``fixed_range`` pins the normalization (e.g. [0, ln C] for entropy maps)
    so images are comparable across runs; default is the data min/max.
    """
    arr = np.asarray(values, dtype=np.float64)
    lo, hi = fixed_range if fixed_range is not None else (float(arr.min()), float(arr.max()))
    span = hi - lo
    if span <= 0:
        scaled = np.zeros(arr.shape, dtype=np.uint8)
    else:
        scaled = np.clip(np.rint((arr - lo) / span * 255.0), 0, 255).astype(np.uint8)
    write_pgm(path, scaled)
    Path(str(path) + ".range.txt").write_text(f"min {lo:.17g}\nmax {hi:.17g}\n")


def write_ppm(path, rgb: np.ndarray) -> None:
    arr = np.asarray(rgb)
    if arr.dtype != np.uint8 or arr.ndim != 3 or arr.shape[2] != 3:
        raise ValueError("write_ppm expects an H x W x 3 uint8 array")
    h, w = arr.shape[:2]
    Path(path).write_bytes(f"P6\n{w} {h}\n255\n".encode() + arr.tobytes())


def read_ppm(path) -> np.ndarray:
    data = Path(path).read_bytes()
    magic, dims, maxval, pixels = _parse_netpbm(data, b"P6")
    w, h = dims
    return np.frombuffer(pixels, dtype=np.uint8, count=h * w * 3).reshape(h, w, 3).copy()


def write_labels(path_ppm, labels: np.ndarray, class_count: int) -> None:
    """Palette PPM of a label map (the raw ids go in a separate PGM)."""
    write_ppm(path_ppm, palette(class_count)[np.asarray(labels, dtype=np.intp)])


def labels_from_ppm(path, class_count: int) -> np.ndarray:
    rgb = read_ppm(path)
    pal = palette(class_count)
    lookup = {tuple(color): idx for idx, color in enumerate(pal)}
    flat = rgb.reshape(-1, 3)
    out = np.empty(flat.shape[0], dtype=np.int64)
    for i, px in enumerate(map(tuple, flat)):
        if px not in lookup:
            raise ValueError(f"{path}: color {px} not in the label palette")
        out[i] = lookup[px]
    return out.reshape(rgb.shape[:2])


def write_pfm(path, values: np.ndarray) -> None:
    """Grayscale little-endian PFM (scale -1.0), rows bottom-to-top."""
    arr = np.asarray(values, dtype=np.float32)
    if arr.ndim != 2:
        raise ValueError("write_pfm expects a 2-D array")
    h, w = arr.shape
    body = np.ascontiguousarray(arr[::-1], dtype="<f4").tobytes()
    Path(path).write_bytes(f"Pf\n{w} {h}\n-1.0\n".encode() + body)


def read_pfm(path) -> np.ndarray:
    data = Path(path).read_bytes()
    parts = data.split(b"\n", 3)
    if len(parts) < 4 or parts[0] != b"Pf":
        raise ValueError(f"{path}: not a grayscale PFM")
    w, h = (int(tok) for tok in parts[1].split())
    scale = float(parts[2])
    dtype = "<f4" if scale < 0 else ">f4"
    arr = np.frombuffer(parts[3], dtype=dtype, count=h * w).reshape(h, w)
    return arr[::-1].astype(np.float32)


def _parse_netpbm(data: bytes, magic: bytes):
    if not data.startswith(magic):
        raise ValueError(f"expected {magic!r} file")
    # header tokens: magic, width, height, maxval; comments unsupported
    tokens = []
    pos = len(magic)
    while len(tokens) < 3:
        while pos < len(data) and data[pos : pos + 1].isspace():
            pos += 1
        start = pos
        while pos < len(data) and not data[pos : pos + 1].isspace():
            pos += 1
        tokens.append(data[start:pos])
    pos += 1  # single whitespace after maxval
    w, h, maxval = (int(t) for t in tokens)
    return magic, (w, h), maxval, data[pos:]
