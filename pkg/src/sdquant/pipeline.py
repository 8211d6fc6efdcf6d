"""End-to-end image workflow: segment, encode, serialize, decode, stack.

Images are split into columns or rectangular patches, each patch is
quantized independently and decoded independently.  Equal-shape patches are
decoded as one vectorized batch; channels and ragged shape groups fan out to
a thread pool when requested.  Results merge in deterministic patch order
regardless of completion order.
"""

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .alphabet import (
    default_margin_levels,
    make_fine_boundary_alphabet,
    make_optimal_2d_alphabet,
    make_uniform_alphabet,
)
from .analysis import build_quality_report
from .container import parse_container, serialize_code
from .decoder import (
    SolverConfig,
    decode_class1_columns,
    decode_class2_batch,
    decode_class3_columns,
    decode_naive,
)
from .encoder import (
    encode_msq,
    encode_msq_dithered,
    encode_sd1d_columns,
    encode_sd2d,
)

__all__ = [
    "PatchLayout",
    "segment",
    "stack",
    "brighten",
    "quantize_image",
    "reconstruct_image",
]

_CLASS_MODES = {
    "naive": {"msq", "msq_dither", "sd1d_col", "sd2d"},
    "c1": {"sd1d_col"},
    "c2": {"sd2d"},
    "c3": {"sd1d_col"},
}


@dataclass(frozen=True)
class PatchLayout:
    """Tiling of an image into patch_rows x patch_cols windows.

    Zero means "whole extent".  The ragged policy keeps edge patches
    smaller; pad-reflect mirrors the image out to full tiles first (stack
    crops the padding back off).
    """

    patch_rows: int = 0
    patch_cols: int = 0
    policy: str = "ragged"

    def __post_init__(self):
        if self.patch_rows < 0 or self.patch_cols < 0:
            raise ValueError("patch sizes must be nonnegative")
        if self.policy not in ("ragged", "pad-reflect"):
            raise ValueError("remainder policy must be 'ragged' or 'pad-reflect'")

    def tiles(self, rows, cols):
        pr = self.patch_rows or rows
        pc = self.patch_cols or cols
        out = []
        for r0 in range(0, rows, pr):
            for c0 in range(0, cols, pc):
                out.append((r0, min(r0 + pr, rows), c0, min(c0 + pc, cols)))
        return out

    def padded_shape(self, rows, cols):
        pr = self.patch_rows or rows
        pc = self.patch_cols or cols
        return (-(-rows // pr) * pr, -(-cols // pc) * pc)


def segment(X, layout: PatchLayout):
    """Cut an image into patches; returns (patches, working shape).

    With pad-reflect the working shape is the padded one; every pixel of the
    working image lands in exactly one patch.
    """
    X = np.asarray(X, dtype=float)
    rows, cols = X.shape
    if layout.policy == "pad-reflect":
        prow, pcol = layout.padded_shape(rows, cols)
        X = np.pad(X, ((0, prow - rows), (0, pcol - cols)), mode="reflect")
    return [X[r0:r1, c0:c1] for r0, r1, c0, c1 in layout.tiles(*X.shape)], X.shape


def stack(patches, layout: PatchLayout, shape, crop_to=None):
    """Reassemble patches from segment; inverse up to the reflection crop."""
    rows, cols = shape
    out = np.empty((rows, cols))
    tiles = layout.tiles(rows, cols)
    if len(tiles) != len(patches):
        raise ValueError("patch count does not match the layout")
    for (r0, r1, c0, c1), patch in zip(tiles, patches):
        out[r0:r1, c0:c1] = patch
    if crop_to is not None:
        out = out[: crop_to[0], : crop_to[1]]
    return out


def brighten(x):
    """Cube-root intensity stretch used for low-light display and scoring."""
    return np.cbrt(np.clip(np.asarray(x, dtype=float), 0.0, None))


def _as_channels(img):
    img = np.asarray(img, dtype=float)
    if img.ndim == 2:
        return [img]
    if img.ndim == 3 and img.shape[2] == 3:
        return [img[:, :, c] for c in range(3)]
    raise ValueError("expected (rows, cols) or (rows, cols, 3) image data")


def quantize_image(
    img,
    mode: str,
    bits: int = 3,
    order: int = 1,
    layout: PatchLayout | None = None,
    seed: int = 0,
    value_range=(0.0, 1.0),
    margin_levels: int | None = None,
    fine_tail: bool = False,
) -> bytes:
    """Encode an image (RGB channels independently) into .sdq container bytes.

    ``mode`` is one of msq, msq-dither, sd1d, sd2d.  sd2d uses the
    stability-optimal alphabet and encodes patch by patch; the others use a
    uniform grid over ``value_range`` (sd1d adds the margin its feedback
    order needs unless overridden) and ignore the patch layout for encoding.
    """
    layout = layout if layout is not None else PatchLayout()
    channels = _as_channels(img)
    orig_shape = channels[0].shape
    a, b = value_range
    mode = mode.replace("-", "_")
    if mode == "sd2d":
        alph = make_optimal_2d_alphabet(a, b, bits)
    else:
        m = margin_levels
        if m is None:
            m = default_margin_levels(order) if mode == "sd1d" else 0
        alph = make_uniform_alphabet(a, b, bits, m)

    codes = []
    work_shape = orig_shape
    for ch_i, chan in enumerate(channels):
        if mode == "msq":
            code = encode_msq(chan, alph)
        elif mode == "msq_dither":
            code = encode_msq_dithered(chan, alph, seed + ch_i)
        elif mode == "sd1d":
            fine = (
                make_fine_boundary_alphabet(alph, orig_shape[0], order)
                if fine_tail
                else None
            )
            code = encode_sd1d_columns(chan, alph, order, fine=fine)
        elif mode == "sd2d":
            patches, work_shape = segment(chan, layout)
            parts = [encode_sd2d(p, alph, order)[0] for p in patches]
            grid = stack([p.indices for p in parts], layout, work_shape)
            code = parts[0]
            code.indices = grid.astype(np.int64)
            code.shape = work_shape
        else:
            raise ValueError(f"unknown mode {mode!r}")
        codes.append(code)
    return serialize_code(
        codes, layout.patch_rows, layout.patch_cols, layout.policy, orig_shape
    )


def _decode_channel(code, meta, klass, beta, cfg, workers):
    q = code.dequantize()
    layout = PatchLayout(meta["patch_rows"], meta["patch_cols"], meta["policy"])
    crop = (meta["orig_rows"], meta["orig_cols"])
    if klass == "naive":
        return decode_naive(q)[: crop[0], : crop[1]], []
    if klass in ("c1", "c3"):
        if beta > code.order:
            raise ValueError(
                f"TV order {beta} exceeds the container's feedback order "
                f"{code.order}; the feasibility box would not hold"
            )
        if klass == "c1":
            z, results = decode_class1_columns(
                q, beta, code.order, code.alphabet.step, cfg
            )
        else:
            z, results = decode_class3_columns(
                q, beta, code.order, code.alphabet.step, None, cfg
            )
        return z[: crop[0], : crop[1]], results
    # class 2: group ragged patches by shape so each group decodes as a batch
    patches = [q[r0:r1, c0:c1] for r0, r1, c0, c1 in layout.tiles(*q.shape)]
    out = [None] * len(patches)
    results = []

    def run(shape):
        members = [i for i, p in enumerate(patches) if p.shape == shape]
        z, res = decode_class2_batch(
            np.stack([patches[i] for i in members]), code.alphabet.step, cfg
        )
        return members, z, res

    shapes = sorted({p.shape for p in patches})
    if workers > 1 and len(shapes) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            groups = list(pool.map(run, shapes))
    else:
        groups = [run(shape) for shape in shapes]
    for members, z, res in groups:
        for slot, i in enumerate(members):
            out[i] = z[slot]
        results.extend(res)
    return stack(out, layout, q.shape, crop), results


def reconstruct_image(
    blob: bytes,
    klass: str = "naive",
    beta: int = 1,
    cfg: SolverConfig | None = None,
    truth=None,
    apply_brighten: bool = False,
    workers: int = 1,
):
    """Decode an .sdq container back to an image.

    Returns (image, info); info carries per-patch solver results and, when
    ``truth`` is given, a quality report (computed after the optional
    brightness stretch, which is also how low-light runs are scored).
    """
    cfg = cfg if cfg is not None else SolverConfig()
    codes, meta = parse_container(blob)
    if klass not in _CLASS_MODES:
        raise ValueError(f"unknown decoder class {klass!r}")
    if codes[0].mode not in _CLASS_MODES[klass]:
        raise ValueError(
            f"decoder class {klass!r} is incompatible with mode {codes[0].mode!r}"
        )
    if klass == "c3" and codes[0].fine_tail is None:
        raise ValueError("class-3 decoding needs a container with fine-tail records")

    if workers > 1 and len(codes) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            decoded = list(
                pool.map(
                    lambda code: _decode_channel(code, meta, klass, beta, cfg, workers),
                    codes,
                )
            )
    else:
        decoded = [
            _decode_channel(code, meta, klass, beta, cfg, workers) for code in codes
        ]
    planes = [z for z, _ in decoded]
    all_results = [r for _, results in decoded for r in results]
    img = planes[0] if len(planes) == 1 else np.stack(planes, axis=2)
    if apply_brighten:
        img = brighten(img)
    info = {
        "results": all_results,
        "converged": all(r.converged for r in all_results),
        "feasible": all(r.feasible for r in all_results),
        "mode": codes[0].mode,
        "meta": meta,
    }
    if truth is not None:
        ref = brighten(truth) if apply_brighten else np.asarray(truth, dtype=float)
        max_i = 255.0 if img.ndim == 3 else 1.0
        info["report"] = build_quality_report(ref * max_i, img * max_i, max_i)
    return img, info
