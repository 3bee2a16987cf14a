"""On-disk formats: binary PGM images, raw tensor files, checkpoint
containers and flat key=value config files.

All formats round-trip bit-exactly for files this package wrote; readers are
strict and report the byte offset of the first malformed element.
"""

from __future__ import annotations

import os

import numpy as np

from .errors import FormatError

TENSOR_MAGIC = b"FANT"
_MAX_RANK = 32


# ---------------------------------------------------------------------------
# PGM (P5, binary, 8- or 16-bit)

def write_pgm(path, image: np.ndarray, maxval: int = 255) -> None:
    """Quantize a [0, 1] float plane to a binary PGM.

    Rounding is half-up: q = floor(v * maxval + 0.5), so 0.5 with maxval 255
    stores 128.  Values are clipped into [0, 1] first.  maxval up to 255
    writes one byte per pixel; larger maxval (up to 65535) writes big-endian
    16-bit samples per the PNM convention.
    """
    img = np.asarray(image, dtype=np.float64)
    if img.ndim != 2:
        raise ValueError(f"PGM wants a 2D plane, got shape {img.shape}")
    if not np.all(np.isfinite(img)):
        raise ValueError("PGM image contains non-finite values")
    if not 1 <= maxval <= 65535:
        raise ValueError(f"maxval must be in 1..65535, got {maxval}")
    q = np.floor(np.clip(img, 0.0, 1.0) * maxval + 0.5)
    q = np.minimum(q, maxval)
    payload = q.astype(">u2" if maxval > 255 else np.uint8).tobytes()
    header = f"P5\n{img.shape[1]} {img.shape[0]}\n{maxval}\n".encode("ascii")
    with open(path, "wb") as fh:
        fh.write(header + payload)


def read_pgm(path):
    """Read a binary PGM; returns (plane of q/maxval floats, maxval)."""
    with open(path, "rb") as fh:
        data = fh.read()
    pos = 0

    def fail(msg):
        raise FormatError(f"{path}: {msg} at byte offset {pos}")

    def skip_space():
        nonlocal pos
        while pos < len(data):
            if data[pos : pos + 1].isspace():
                pos += 1
            elif data[pos : pos + 1] == b"#":
                while pos < len(data) and data[pos : pos + 1] != b"\n":
                    pos += 1
            else:
                break

    def token():
        nonlocal pos
        skip_space()
        start = pos
        while pos < len(data) and not data[pos : pos + 1].isspace():
            pos += 1
        if pos == start:
            fail("missing header token")
        return data[start:pos]

    if data[:2] != b"P5":
        fail("not a binary PGM (magic != P5)")
    pos = 2
    try:
        width = int(token())
        height = int(token())
        maxval = int(token())
    except ValueError:
        fail("non-integer header field")
    if width < 1 or height < 1 or not 1 <= maxval <= 65535:
        fail(f"invalid dimensions/maxval {width}x{height}/{maxval}")
    if pos >= len(data) or not data[pos : pos + 1].isspace():
        fail("expected single whitespace before payload")
    pos += 1
    dtype = ">u2" if maxval > 255 else np.uint8
    expected = width * height * (2 if maxval > 255 else 1)
    if len(data) - pos != expected:
        fail(f"payload is {len(data) - pos} bytes, expected {expected}")
    raw = np.frombuffer(data, dtype=dtype, offset=pos).reshape(height, width)
    if raw.max(initial=0) > maxval:
        fail(f"sample value exceeds maxval {maxval}")
    return raw.astype(np.float64) / maxval, maxval


# ---------------------------------------------------------------------------
# raw tensor files: magic, u32 rank, u32 dims, f64 payload, all little-endian

def write_tensor(path, array: np.ndarray) -> None:
    arr = np.ascontiguousarray(array, dtype=np.float64)
    with open(path, "wb") as fh:
        fh.write(TENSOR_MAGIC)
        fh.write(np.uint32(arr.ndim).astype("<u4").tobytes())
        fh.write(np.asarray(arr.shape, dtype="<u4").tobytes())
        fh.write(arr.astype("<f8").tobytes())


def read_tensor(path) -> np.ndarray:
    with open(path, "rb") as fh:
        data = fh.read()
    if data[:4] != TENSOR_MAGIC:
        raise FormatError(f"{path}: bad magic {data[:4]!r} at byte offset 0 "
                          "(expected little-endian 'FANT' container)")
    if len(data) < 8:
        raise FormatError(f"{path}: truncated header at byte offset {len(data)}")
    rank = int(np.frombuffer(data, "<u4", count=1, offset=4)[0])
    if rank > _MAX_RANK:
        raise FormatError(f"{path}: implausible rank {rank} at byte offset 4")
    header_end = 8 + 4 * rank
    if len(data) < header_end:
        raise FormatError(f"{path}: truncated dims at byte offset {len(data)}")
    dims = tuple(int(d) for d in np.frombuffer(data, "<u4", count=rank, offset=8))
    count = 1
    for d in dims:
        count *= d
    if len(data) - header_end != 8 * count:
        raise FormatError(f"{path}: payload is {len(data) - header_end} bytes, "
                          f"expected {8 * count} at byte offset {header_end}")
    return np.frombuffer(data, "<f8", count=count, offset=header_end).reshape(dims).copy()


# ---------------------------------------------------------------------------
# checkpoint container: a directory of tensor files plus a manifest

def save_checkpoint(directory, params: dict, alpha=None) -> None:
    """Write named parameter arrays plus the mask ratio used (or 'none')."""
    os.makedirs(directory, exist_ok=True)
    lines = [f"alpha {alpha!r}" if alpha is not None else "alpha none"]
    for name in sorted(params):
        arr = np.asarray(params[name].values if hasattr(params[name], "values") else params[name])
        write_tensor(os.path.join(directory, name + ".fant"), arr)
        lines.append(name + " " + " ".join(str(d) for d in arr.shape))
    with open(os.path.join(directory, "manifest.txt"), "w", encoding="utf-8", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")


def load_checkpoint(directory):
    """Returns (params dict of ndarrays, alpha or None); validates shapes."""
    manifest = os.path.join(directory, "manifest.txt")
    with open(manifest, "r", encoding="utf-8") as fh:
        lines = [ln.rstrip("\n") for ln in fh if ln.strip()]
    if not lines or not lines[0].startswith("alpha "):
        raise FormatError(f"{manifest}: first line must declare alpha")
    alpha_field = lines[0].split(None, 1)[1]
    alpha = None if alpha_field == "none" else float(alpha_field)
    params = {}
    for ln in lines[1:]:
        fields = ln.split()
        name, shape = fields[0], tuple(int(d) for d in fields[1:])
        arr = read_tensor(os.path.join(directory, name + ".fant"))
        if arr.shape != shape:
            raise FormatError(f"{manifest}: {name} has shape {arr.shape}, manifest says {shape}")
        params[name] = arr
    return params, alpha


# ---------------------------------------------------------------------------
# flat config files: `key = value`, '#' comments, UTF-8

def read_config(path) -> dict:
    """Parse a flat key=value file into a {str: str} dict (values untyped)."""
    out = {}
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise FormatError(f"{path}:{lineno}: expected 'key = value', got {raw.rstrip()!r}")
            key, value = line.split("=", 1)
            out[key.strip()] = value.strip()
    return out
