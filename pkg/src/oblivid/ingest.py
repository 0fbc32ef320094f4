"""Frame ingestion: PGM/PNM grayscale files or raw 8-bit planes with a size sidecar."""
from __future__ import annotations

import re
from pathlib import Path

import numpy as np

FRAME_SUFFIXES = {".pgm", ".pnm", ".raw"}


class IngestError(ValueError):
    pass


def _tokens(data: bytes, count: int) -> tuple[list[int], int]:
    """First ``count`` header integers of a netpbm file and the offset after them."""
    vals, i = [], 2
    while len(vals) < count:
        while i < len(data) and data[i:i + 1].isspace():
            i += 1
        if data[i:i + 1] == b"#":
            while i < len(data) and data[i:i + 1] not in (b"\n", b"\r"):
                i += 1
            continue
        j = i
        while j < len(data) and data[j:j + 1].isdigit():
            j += 1
        if j == i:
            raise IngestError("malformed netpbm header")
        vals.append(int(data[i:j]))
        i = j
    return vals, i + 1          # exactly one whitespace byte precedes raster data


def read_pnm(path: str | Path) -> np.ndarray:
    """8- or 16-bit binary (P5) or ASCII (P2) grayscale; 16-bit is scaled to 8."""
    data = Path(path).read_bytes()
    magic = data[:2]
    if magic not in (b"P5", b"P2"):
        raise IngestError(f"{path}: not a grayscale PGM/PNM (magic {magic!r})")
    (w, h, maxval), off = _tokens(data, 3)
    if not 0 < maxval < 65536:
        raise IngestError(f"{path}: bad maxval {maxval}")
    if magic == b"P2":
        px = np.array(data[off:].split()[: w * h], np.int64)
    else:
        dt = np.dtype(">u2" if maxval > 255 else np.uint8)
        px = np.frombuffer(data, dt, w * h, off) if len(data) >= off + w * h * dt.itemsize else np.array([])
    if px.size != w * h:
        raise IngestError(f"{path}: raster holds {px.size} of {w * h} pixels")
    img = px.reshape(h, w).astype(np.float64)
    return np.rint(img * (255.0 / maxval)).astype(np.uint8)


def write_pgm(path: str | Path, img: np.ndarray) -> None:
    img = np.asarray(img, np.uint8)
    h, w = img.shape
    Path(path).write_bytes(b"P5\n%d %d\n255\n" % (w, h) + img.tobytes())


def _sidecar_dims(path: Path) -> tuple[int, int]:
    for cand in (path.with_suffix(path.suffix + ".dims"), path.with_suffix(".dims"),
                 path.parent / "dims.txt"):
        if cand.exists():
            m = re.fullmatch(r"\s*(\d+)\s*[xX]\s*(\d+)\s*", cand.read_text())
            if not m:
                raise IngestError(f"{cand}: sidecar must read WIDTHxHEIGHT")
            return int(m.group(1)), int(m.group(2))
    raise IngestError(f"{path}: raw plane without a WIDTHxHEIGHT sidecar")


def read_raw(path: str | Path) -> np.ndarray:
    path = Path(path)
    w, h = _sidecar_dims(path)
    data = path.read_bytes()
    if len(data) != w * h:
        raise IngestError(f"{path}: {len(data)} bytes, sidecar says {w}x{h}")
    return np.frombuffer(data, np.uint8).reshape(h, w).copy()


def ingest_frames(src: str | Path) -> list[np.ndarray]:
    """All frames of a directory (lexicographic order) or a single frame file."""
    src = Path(src)
    if src.is_dir():
        files = sorted(p for p in src.iterdir() if p.suffix.lower() in FRAME_SUFFIXES)
        if not files:
            raise IngestError(f"{src}: no .pgm/.pnm/.raw frames")
    elif src.exists():
        files = [src]
    else:
        raise IngestError(f"{src}: no such file or directory")
    frames, first = [], None
    for p in files:
        try:
            img = read_raw(p) if p.suffix.lower() == ".raw" else read_pnm(p)
        except OSError as exc:
            raise IngestError(f"{p}: unreadable ({exc})") from exc
        if first is None:
            first = (p, img.shape)
        elif img.shape != first[1]:
            raise IngestError(f"{p.name} is {img.shape[1]}x{img.shape[0]} but {first[0].name} "
                              f"is {first[1][1]}x{first[1][0]}")
        frames.append(img)
    return frames
