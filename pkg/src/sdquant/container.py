"""Image file I/O (binary PGM/PPM, 8-bit) and the .sdq quantized container.

Container layout, all integers and floats little-endian 64-bit unless noted:

    magic       4 bytes  b"SDQ1"
    mode        u64      0 msq | 1 msq_dither | 2 sd1d_col | 3 sd2d
    order r     u64
    beta hint   u64
    flags       u64      bit 0: fine tail records present
    rows, cols  u64, u64 stored grid (after any reflection padding)
    orig rows   u64      dimensions before padding (crop target)
    orig cols   u64
    channels    u64
    patch_rows  u64      0 means "whole image"
    patch_cols  u64
    remainder   u64      0 ragged | 1 pad-reflect
    alphabet    variant u64 (0 uniform | 1 optimal2d), a f64, b f64, d u64,
                delta f64, margin u64
    n_levels    u64
    bits/idx    u64
    payload_len u64
    payload     bit-packed level indices, MSB first within each byte,
                row-major within a patch, patches in row-major order,
                channels outermost
    fine tail   if flagged: per channel, per column, r indices as u64
    crc32       u32      IEEE CRC-32 of everything above

The container is byte-deterministic: identical code objects serialize to
identical bytes.
"""

import struct
import zlib

import numpy as np

from .alphabet import make_fine_boundary_alphabet, make_optimal_2d_alphabet, make_uniform_alphabet
from .encoder import FineTail, SigmaDeltaCode

__all__ = [
    "ContainerFormatError",
    "read_image",
    "write_image",
    "serialize_code",
    "parse_container",
    "pack_bits",
    "unpack_bits",
]

MAGIC = b"SDQ1"
_MODES = ["msq", "msq_dither", "sd1d_col", "sd2d"]
_POLICIES = ["ragged", "pad-reflect"]


class ContainerFormatError(ValueError):
    """Malformed image or container bytes."""


# ---------------------------------------------------------------------------
# netpbm images
# ---------------------------------------------------------------------------


def _read_pnm_tokens(data, count):
    """Read header tokens, skipping whitespace and '#' comments."""
    tokens = []
    i = 0
    while len(tokens) < count:
        if i >= len(data):
            raise ContainerFormatError("truncated netpbm header")
        ch = data[i : i + 1]
        if ch in b" \t\r\n":
            i += 1
        elif ch == b"#":
            j = data.find(b"\n", i)
            if j < 0:
                raise ContainerFormatError("unterminated comment in header")
            i = j + 1
        else:
            j = i
            while j < len(data) and data[j : j + 1] not in b" \t\r\n":
                j += 1
            tokens.append(data[i:j])
            i = j
    return tokens, i + 1  # single whitespace after the last token


def read_image(path):
    """Binary PGM (P5) or PPM (P6), 8-bit, scaled to [0, 1].

    Grayscale images come back as (rows, cols); RGB as (rows, cols, 3).
    """
    with open(path, "rb") as fh:
        data = fh.read()
    if data[:2] not in (b"P5", b"P6"):
        raise ContainerFormatError("only binary PGM (P5) and PPM (P6) are supported")
    color = data[:2] == b"P6"
    tokens, offset = _read_pnm_tokens(data[2:], 3)
    try:
        cols, rows, maxval = (int(t) for t in tokens)
    except ValueError as exc:
        raise ContainerFormatError(f"bad netpbm header: {exc}") from exc
    if maxval != 255:
        raise ContainerFormatError(f"unsupported maxval {maxval}; only 8-bit images")
    if rows < 1 or cols < 1:
        raise ContainerFormatError("bad image dimensions")
    nbytes = rows * cols * (3 if color else 1)
    raw = data[2 + offset : 2 + offset + nbytes]
    if len(raw) != nbytes:
        raise ContainerFormatError("truncated pixel data")
    pix = np.frombuffer(raw, dtype=np.uint8).astype(float) / 255.0
    if color:
        return pix.reshape(rows, cols, 3)
    return pix.reshape(rows, cols)


def write_image(path, data):
    """Write [0, 1] data as binary PGM/PPM, rounding half away from zero."""
    data = np.asarray(data, dtype=float)
    if data.ndim == 2:
        head, planes = b"P5", 1
    elif data.ndim == 3 and data.shape[2] == 3:
        head, planes = b"P6", 3
    else:
        raise ValueError("expected (rows, cols) or (rows, cols, 3) data")
    rows, cols = data.shape[:2]
    scaled = np.clip(np.floor(data * 255.0 + 0.5), 0, 255).astype(np.uint8)
    with open(path, "wb") as fh:
        fh.write(head + b"\n%d %d\n255\n" % (cols, rows))
        fh.write(scaled.tobytes())


# ---------------------------------------------------------------------------
# bit packing
# ---------------------------------------------------------------------------


def pack_bits(indices, bits: int) -> bytes:
    """Pack nonnegative integers into ``bits`` bits each, MSB first."""
    idx = np.asarray(indices, dtype=np.uint64).ravel()
    if bits < 1 or bits > 64:
        raise ValueError("bits per index must be in 1..64")
    if idx.size and int(idx.max()) >= (1 << bits):
        raise ValueError("index does not fit the bit width")
    shifts = np.arange(bits - 1, -1, -1, dtype=np.uint64)
    bitgrid = ((idx[:, None] >> shifts[None, :]) & 1).astype(np.uint8)
    return np.packbits(bitgrid.ravel(), bitorder="big").tobytes()


def unpack_bits(payload: bytes, bits: int, count: int) -> np.ndarray:
    """Inverse of pack_bits; returns ``count`` indices as int64."""
    bitstream = np.unpackbits(
        np.frombuffer(payload, dtype=np.uint8), bitorder="big"
    )
    need = count * bits
    if bitstream.size < need:
        raise ContainerFormatError("bit payload shorter than declared")
    grid = bitstream[:need].reshape(count, bits).astype(np.uint64)
    shifts = np.arange(bits - 1, -1, -1, dtype=np.uint64)
    return (grid << shifts[None, :]).sum(axis=1).astype(np.int64)


# ---------------------------------------------------------------------------
# the .sdq container
# ---------------------------------------------------------------------------


def _patch_grid(rows, cols, prows, pcols):
    """Row-major list of (r0, r1, c0, c1) tiles (ragged at the edges)."""
    if prows <= 0:
        prows = rows
    if pcols <= 0:
        pcols = cols
    tiles = []
    for r0 in range(0, rows, prows):
        for c0 in range(0, cols, pcols):
            tiles.append((r0, min(r0 + prows, rows), c0, min(c0 + pcols, cols)))
    return tiles


def _rebuild_alphabet(variant, a, b, d, margin):
    if variant == 1:
        return make_optimal_2d_alphabet(a, b, d)
    return make_uniform_alphabet(a, b, d, margin)


def serialize_code(
    codes, patch_rows=0, patch_cols=0, policy="ragged", orig_shape=None
) -> bytes:
    """Serialize per-channel codes (list of SigmaDeltaCode, same settings)."""
    if isinstance(codes, SigmaDeltaCode):
        codes = [codes]
    first = codes[0]
    rows, cols = (first.shape if len(first.shape) == 2 else (first.shape[0], 1))
    orig_rows, orig_cols = orig_shape if orig_shape is not None else (rows, cols)
    alph = first.alphabet
    fine = first.fine_tail is not None
    bits = max(1, int(np.ceil(np.log2(alph.num_levels))))
    tiles = _patch_grid(rows, cols, patch_rows, patch_cols)

    blob = bytearray()
    blob += MAGIC
    blob += struct.pack(
        "<12Q",
        _MODES.index(first.mode),
        first.order,
        min(first.order, 2) if first.order else 1,
        1 if fine else 0,
        rows,
        cols,
        orig_rows,
        orig_cols,
        len(codes),
        patch_rows,
        patch_cols,
        _POLICIES.index(policy),
    )
    blob += struct.pack(
        "<QddQdQ",
        1 if alph.variant == "optimal2d" else 0,
        alph.lo,
        alph.hi,
        alph.bit_depth,
        alph.step,
        alph.margin_levels,
    )
    flat = []
    for code in codes:
        grid = code.indices.reshape(rows, cols)
        for r0, r1, c0, c1 in tiles:
            flat.append(grid[r0:r1, c0:c1].ravel())
    payload = pack_bits(np.concatenate(flat), bits)
    blob += struct.pack("<QQQ", alph.num_levels, bits, len(payload))
    blob += payload
    if fine:
        for code in codes:
            tail_idx = code.fine_tail.indices.reshape(first.order, -1)
            blob += tail_idx.astype("<u8").T.tobytes()
    blob += struct.pack("<I", zlib.crc32(bytes(blob)) & 0xFFFFFFFF)
    return bytes(blob)


def parse_container(blob: bytes):
    """Parse container bytes back to per-channel codes and layout metadata.

    Returns (codes, meta) where meta carries rows, cols, channels,
    patch_rows, patch_cols, policy, and beta hint.
    """
    if len(blob) < 8 or blob[:4] != MAGIC:
        raise ContainerFormatError("not an SDQ1 container")
    (crc_stored,) = struct.unpack("<I", blob[-4:])
    if zlib.crc32(blob[:-4]) & 0xFFFFFFFF != crc_stored:
        raise ContainerFormatError("CRC mismatch; container is corrupt")
    off = 4
    fields = struct.unpack_from("<12Q", blob, off)
    off += 96
    (
        mode_i,
        order,
        beta_hint,
        flags,
        rows,
        cols,
        orig_rows,
        orig_cols,
        channels,
        prows,
        pcols,
        pol,
    ) = fields
    if mode_i >= len(_MODES) or pol >= len(_POLICIES):
        raise ContainerFormatError("unknown mode or remainder policy")
    variant, a, b, d, delta, margin = struct.unpack_from("<QddQdQ", blob, off)
    off += 48
    n_levels, bits, payload_len = struct.unpack_from("<QQQ", blob, off)
    off += 24
    alph = _rebuild_alphabet(variant, a, b, int(d), int(margin))
    if alph.num_levels != n_levels:
        raise ContainerFormatError("alphabet record does not match level count")
    payload = blob[off : off + payload_len]
    if len(payload) != payload_len:
        raise ContainerFormatError("truncated payload")
    off += payload_len

    total = rows * cols * channels
    idx = unpack_bits(payload, int(bits), int(total))
    if np.any(idx >= n_levels):
        raise ContainerFormatError("level index out of range")
    tiles = _patch_grid(rows, cols, int(prows), int(pcols))
    mode = _MODES[mode_i]
    fine_present = bool(flags & 1)

    codes = []
    per_chan = rows * cols
    for ch in range(channels):
        grid = np.empty((rows, cols), dtype=np.int64)
        pos = ch * per_chan
        for r0, r1, c0, c1 in tiles:
            n = (r1 - r0) * (c1 - c0)
            grid[r0:r1, c0:c1] = idx[pos : pos + n].reshape(r1 - r0, c1 - c0)
            pos += n
        tail = None
        if fine_present:
            fine_alph = make_fine_boundary_alphabet(alph, rows, int(order))
            need = int(order) * cols * 8
            raw = blob[off : off + need]
            if len(raw) != need:
                raise ContainerFormatError("truncated fine-tail records")
            off += need
            tail_idx = (
                np.frombuffer(raw, dtype="<u8").astype(np.int64)
                .reshape(cols, int(order)).T
            )
            tail = FineTail(fine_alph, tail_idx)
        codes.append(
            SigmaDeltaCode(grid, mode, int(order), alph, (rows, cols), tail)
        )
    if off != len(blob) - 4:
        raise ContainerFormatError("trailing bytes before CRC footer")
    meta = {
        "rows": int(rows),
        "cols": int(cols),
        "orig_rows": int(orig_rows),
        "orig_cols": int(orig_cols),
        "channels": int(channels),
        "patch_rows": int(prows),
        "patch_cols": int(pcols),
        "policy": _POLICIES[pol],
        "beta_hint": int(beta_hint),
    }
    return codes, meta
