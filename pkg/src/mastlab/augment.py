"""Atomic image augmentation operators, composition sampling, paired views.

Images are float arrays of shape (3, h, w) with values in [0, 1]; every
operator also accepts a batch (n, 3, h, w) and is vectorized over it.  All
randomness is drawn up front into a parameter dict, so applying an operator
is a pure function of (op, params, image).  Outputs are clamped to [0, 1]
and never alias the input.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from matplotlib.colors import hsv_to_rgb, rgb_to_hsv
from scipy import ndimage

from .errors import ContractError, DimensionError, DomainError

_LUMA = np.array([0.299, 0.587, 0.114])


@dataclass(frozen=True)
class OpSpec:
    """Static description of one augmentation operator.

    ``magnitude_range`` is the default sampling interval for training;
    ``valid_range`` is the physical domain ``apply`` enforces (analysis may
    probe magnitudes outside the training interval, e.g. a near-zero blur).
    ``strong_end`` is +1 when the range's top is the strongest setting and
    -1 when the bottom is (RandomResizedCrop: smaller ratio = stronger).
    """

    name: str
    default_probability: float
    magnitude_range: tuple[float, float]
    valid_range: tuple[float, float]
    continuous: bool
    strong_end: int = 1
    symmetric: bool = False  # magnitude sign is a coin flip around 0
    integer: bool = False


OPS: dict[str, OpSpec] = {
    spec.name: spec
    for spec in [
        OpSpec("ColorJitter", 0.8, (0.0, 1.0), (0.0, 1.0), True),
        OpSpec("GaussianBlur", 0.5, (0.1, 2.0), (0.0, 8.0), True),
        OpSpec("RandomFlip", 0.5, (1.0, 1.0), (0.0, 1.0), False),
        OpSpec("RandomGrayscale", 0.2, (1.0, 1.0), (0.0, 1.0), False),
        OpSpec("RandomResizedCrop", 1.0, (0.2, 1.0), (0.05, 1.0), True, strong_end=-1),
        OpSpec("ShearX", 0.5, (-0.3, 0.3), (-1.0, 1.0), True, symmetric=True),
        OpSpec("ShearY", 0.5, (-0.3, 0.3), (-1.0, 1.0), True, symmetric=True),
        OpSpec("TranslateX", 0.5, (-0.25, 0.25), (-1.0, 1.0), True, symmetric=True),
        OpSpec("TranslateY", 0.5, (-0.25, 0.25), (-1.0, 1.0), True, symmetric=True),
        OpSpec("Rotate", 0.5, (-30.0, 30.0), (-180.0, 180.0), True, symmetric=True),
        OpSpec("Invert", 0.5, (1.0, 1.0), (0.0, 1.0), False),
        OpSpec("Sharpness", 0.5, (0.5, 2.0), (0.0, 4.0), True),
        OpSpec("GaussianNoise", 0.5, (0.01, 0.1), (0.0, 1.0), True),
        OpSpec("SobelFilter", 0.5, (1.0, 1.0), (0.0, 1.0), False),
        OpSpec("Cutout", 0.5, (0.1, 0.3), (0.0, 1.0), True),
        OpSpec("Solarize", 0.5, (0.4, 0.9), (0.0, 1.0), True, strong_end=-1),
        OpSpec("Equalize", 0.5, (1.0, 1.0), (0.0, 1.0), False),
        OpSpec("Posterize", 0.5, (3.0, 6.0), (1.0, 8.0), False, strong_end=-1, integer=True),
        OpSpec("MotionBlur", 0.5, (3.0, 7.0), (1.0, 15.0), False, integer=True),
    ]
}

OP_ORDER = list(OPS)
MAST5_OPS = OP_ORDER[:5]
MAST15_OPS = OP_ORDER[:15]
MAST19_OPS = OP_ORDER[:]

AUG_SETS = {"mast5": MAST5_OPS, "mast15": MAST15_OPS, "mast19": MAST19_OPS}


def _as_batch(img: np.ndarray) -> tuple[np.ndarray, bool]:
    if img.ndim == 3:
        return img[None], True
    if img.ndim == 4:
        return img, False
    raise DimensionError(f"expected (3,h,w) or (n,3,h,w) image, got shape {img.shape}")


def _grid(h: int, w: int):
    return np.meshgrid(np.arange(h, dtype=np.float64), np.arange(w, dtype=np.float64), indexing="ij")


def _bilinear(imgs: np.ndarray, src_y: np.ndarray, src_x: np.ndarray) -> np.ndarray:
    """Sample imgs at float source coords (edge-replicate outside)."""
    h, w = imgs.shape[-2:]
    sy = np.clip(src_y, 0.0, h - 1.0)
    sx = np.clip(src_x, 0.0, w - 1.0)
    y0 = np.floor(sy).astype(np.intp)
    x0 = np.floor(sx).astype(np.intp)
    y1 = np.minimum(y0 + 1, h - 1)
    x1 = np.minimum(x0 + 1, w - 1)
    fy = (sy - y0).astype(imgs.dtype)
    fx = (sx - x0).astype(imgs.dtype)
    top = imgs[..., y0, x0] * (1 - fx) + imgs[..., y0, x1] * fx
    bot = imgs[..., y1, x0] * (1 - fx) + imgs[..., y1, x1] * fx
    return top * (1 - fy) + bot * fy


def _luma(imgs: np.ndarray) -> np.ndarray:
    return np.tensordot(_LUMA, imgs, axes=([0], [-3]))  # (n, h, w) for (n,3,h,w)


# ---------------------------------------------------------------------------
# operator implementations (batch in, batch out; no clamping here)


def _color_jitter(imgs, p):
    out = imgs * p["brightness"]
    gray_mean = _luma(out).mean(axis=(-2, -1))[..., None, None, None]
    out = (out - gray_mean) * p["contrast"] + gray_mean
    gray = _luma(out)[..., None, :, :]
    out = (out - gray) * p["saturation"] + gray
    if p["hue"] != 0.0:
        hsv = rgb_to_hsv(np.clip(out, 0.0, 1.0).swapaxes(-3, -1))
        hsv[..., 0] = (hsv[..., 0] + p["hue"]) % 1.0
        out = hsv_to_rgb(hsv).swapaxes(-3, -1)
    return out


def _gaussian_blur(imgs, p):
    sigma = p["magnitude"]
    pad = (0,) * (imgs.ndim - 2)
    return ndimage.gaussian_filter(imgs, sigma=pad + (sigma, sigma), mode="nearest")


def _flip(imgs, p):
    return imgs[..., ::-1].copy()

def _grayscale(imgs, p):
    gray = _luma(imgs)[..., None, :, :]
    return np.repeat(gray, 3, axis=-3)


def _resized_crop(imgs, p):
    h, w = imgs.shape[-2:]
    area = p["magnitude"] * h * w
    cw = np.sqrt(area * p["aspect"])
    ch = np.sqrt(area / p["aspect"])
    cw = min(max(cw, 1.0), float(w))
    ch = min(max(ch, 1.0), float(h))
    x0 = p["cx"] * (w - cw)
    y0 = p["cy"] * (h - ch)
    ys = y0 + (np.arange(h) * ((ch - 1.0) / (h - 1.0) if h > 1 else 0.0))
    xs = x0 + (np.arange(w) * ((cw - 1.0) / (w - 1.0) if w > 1 else 0.0))
    src_y, src_x = np.meshgrid(ys, xs, indexing="ij")
    return _bilinear(imgs, src_y, src_x)


def _shear_x(imgs, p):
    h, w = imgs.shape[-2:]
    yy, xx = _grid(h, w)
    cy = (h - 1) / 2.0
    return _bilinear(imgs, yy, xx + p["magnitude"] * (yy - cy))


def _shear_y(imgs, p):
    h, w = imgs.shape[-2:]
    yy, xx = _grid(h, w)
    cx = (w - 1) / 2.0
    return _bilinear(imgs, yy + p["magnitude"] * (xx - cx), xx)


def _translate_x(imgs, p):
    h, w = imgs.shape[-2:]
    yy, xx = _grid(h, w)
    return _bilinear(imgs, yy, xx - p["magnitude"] * w)


def _translate_y(imgs, p):
    h, w = imgs.shape[-2:]
    yy, xx = _grid(h, w)
    return _bilinear(imgs, yy - p["magnitude"] * h, xx)


def _rotate(imgs, p):
    h, w = imgs.shape[-2:]
    yy, xx = _grid(h, w)
    cy, cx = (h - 1) / 2.0, (w - 1) / 2.0
    theta = np.deg2rad(p["magnitude"])
    cos_t, sin_t = np.cos(theta), np.sin(theta)
    dy, dx = yy - cy, xx - cx
    return _bilinear(imgs, cy + dy * cos_t - dx * sin_t, cx + dy * sin_t + dx * cos_t)


def _invert(imgs, p):
    return 1.0 - imgs


def _sharpness(imgs, p):
    kernel = np.array([[1.0, 1.0, 1.0], [1.0, 5.0, 1.0], [1.0, 1.0, 1.0]]) / 13.0
    kernel = kernel.reshape((1,) * (imgs.ndim - 2) + (3, 3))
    smooth = ndimage.convolve(imgs, kernel, mode="nearest")
    return smooth + p["magnitude"] * (imgs - smooth)


def _gaussian_noise(imgs, p):
    noise_rng = np.random.default_rng(p["seed"])
    noise = noise_rng.standard_normal(imgs.shape[-3:])
    return imgs + p["magnitude"] * noise.astype(imgs.dtype)


def _sobel(imgs, p):
    kx = np.array([[-1.0, 0.0, 1.0], [-2.0, 0.0, 2.0], [-1.0, 0.0, 1.0]])
    shape = (1,) * (imgs.ndim - 2) + (3, 3)
    gx = ndimage.correlate(imgs, kx.reshape(shape), mode="nearest")
    gy = ndimage.correlate(imgs, kx.T.reshape(shape), mode="nearest")
    return np.sqrt(gx * gx + gy * gy) / 4.0


def _cutout(imgs, p):
    h, w = imgs.shape[-2:]
    side_y = int(round(p["magnitude"] * h))
    side_x = int(round(p["magnitude"] * w))
    out = imgs.copy()
    if side_y == 0 or side_x == 0:
        return out
    cy = int(round(p["cy"] * (h - 1)))
    cx = int(round(p["cx"] * (w - 1)))
    y0, y1 = max(0, cy - side_y // 2), min(h, cy - side_y // 2 + side_y)
    x0, x1 = max(0, cx - side_x // 2), min(w, cx - side_x // 2 + side_x)
    out[..., y0:y1, x0:x1] = 0.5
    return out


def _solarize(imgs, p):
    return np.where(imgs >= p["magnitude"], 1.0 - imgs, imgs)


def _equalize(imgs, p):
    batch, _ = _as_batch(imgs)
    out = np.empty_like(batch)
    flatpix = batch.shape[-2] * batch.shape[-1]
    for i in range(batch.shape[0]):
        for c in range(3):
            q = np.clip(np.round(batch[i, c] * 255.0), 0, 255).astype(np.int64)
            hist = np.bincount(q.reshape(-1), minlength=256)
            cdf = np.cumsum(hist)
            cdf_min = cdf[np.nonzero(hist)[0][0]]
            if cdf_min == flatpix:  # constant channel
                out[i, c] = batch[i, c]
                continue
            lut = (cdf - cdf_min) * 255.0 / (flatpix - cdf_min)
            out[i, c] = lut[q] / 255.0
    return out if imgs.ndim == 4 else out[0]


def _posterize(imgs, p):
    bits = int(round(p["magnitude"]))
    keep = 256 - (1 << (8 - bits)) if bits < 8 else 255
    q = np.clip(np.floor(imgs * 255.0), 0, 255).astype(np.int64) & keep
    return q.astype(imgs.dtype) / 255.0


def _motion_blur(imgs, p):
    length = int(round(p["magnitude"]))
    kernel2d = np.zeros((length, length))
    angle = p.get("angle", 0.0)
    if angle == 0.0:
        kernel2d[length // 2, :] = 1.0
    elif angle == 90.0:
        kernel2d[:, length // 2] = 1.0
    elif angle == 45.0:
        np.fill_diagonal(kernel2d, 1.0)
        kernel2d = kernel2d[::-1]
    else:  # 135
        np.fill_diagonal(kernel2d, 1.0)
    kernel2d /= kernel2d.sum()
    kernel = kernel2d.reshape((1,) * (imgs.ndim - 2) + kernel2d.shape)
    return ndimage.convolve(imgs, kernel, mode="nearest")


_APPLY = {
    "ColorJitter": _color_jitter,
    "GaussianBlur": _gaussian_blur,
    "RandomFlip": _flip,
    "RandomGrayscale": _grayscale,
    "RandomResizedCrop": _resized_crop,
    "ShearX": _shear_x,
    "ShearY": _shear_y,
    "TranslateX": _translate_x,
    "TranslateY": _translate_y,
    "Rotate": _rotate,
    "Invert": _invert,
    "Sharpness": _sharpness,
    "GaussianNoise": _gaussian_noise,
    "SobelFilter": _sobel,
    "Cutout": _cutout,
    "Solarize": _solarize,
    "Equalize": _equalize,
    "Posterize": _posterize,
    "MotionBlur": _motion_blur,
}


def apply(op_id: str, params: dict, img: np.ndarray) -> np.ndarray:
    """Apply one operator; deterministic given (op, params, img)."""
    if op_id not in OPS:
        raise ContractError(f"unknown augmentation operator {op_id!r}")
    spec = OPS[op_id]
    m = float(params.get("magnitude", 1.0))
    if not spec.valid_range[0] <= m <= spec.valid_range[1]:
        raise DomainError(
            f"{op_id} magnitude {m} outside valid range {spec.valid_range}"
        )
    out = _APPLY[op_id](img, params)
    return np.clip(out, 0.0, 1.0).astype(img.dtype, copy=False)


def draw_params(op_id: str, rng: np.random.Generator, magnitude: float | None = None) -> dict:
    """Draw a full parameter dict; magnitude may be pinned by the caller."""
    spec = OPS[op_id]
    lo, hi = spec.magnitude_range
    if magnitude is None:
        magnitude = float(rng.uniform(lo, hi))
        if spec.integer:
            magnitude = float(rng.integers(int(lo), int(hi) + 1))
    params: dict = {"magnitude": magnitude}
    if op_id == "ColorJitter":
        m = magnitude
        params["brightness"] = float(rng.uniform(max(0.0, 1 - 0.4 * m), 1 + 0.4 * m))
        params["contrast"] = float(rng.uniform(max(0.0, 1 - 0.4 * m), 1 + 0.4 * m))
        params["saturation"] = float(rng.uniform(max(0.0, 1 - 0.4 * m), 1 + 0.4 * m))
        params["hue"] = float(rng.uniform(-0.1 * m, 0.1 * m))
    elif op_id == "RandomResizedCrop":
        params["aspect"] = float(np.exp(rng.uniform(np.log(3 / 4), np.log(4 / 3))))
        params["cx"] = float(rng.uniform(0.0, 1.0))
        params["cy"] = float(rng.uniform(0.0, 1.0))
    elif op_id == "GaussianNoise":
        params["seed"] = int(rng.integers(0, 2**31 - 1))
    elif op_id == "Cutout":
        params["cx"] = float(rng.uniform(0.0, 1.0))
        params["cy"] = float(rng.uniform(0.0, 1.0))
    elif op_id == "MotionBlur":
        params["angle"] = float(rng.choice([0.0, 45.0, 90.0, 135.0]))
    return params


def deterministic_params(op_id: str, magnitude: float) -> dict:
    """Canonical rng-free params at a given magnitude (analysis path)."""
    params: dict = {"magnitude": float(magnitude)}
    if op_id == "ColorJitter":
        m = magnitude
        params.update(
            brightness=1 + 0.4 * m, contrast=1 + 0.4 * m, saturation=1 + 0.4 * m, hue=0.1 * m
        )
    elif op_id == "RandomResizedCrop":
        params.update(aspect=1.0, cx=0.5, cy=0.5)
    elif op_id == "GaussianNoise":
        params["seed"] = 0
    elif op_id == "Cutout":
        params.update(cx=0.5, cy=0.5)
    elif op_id == "MotionBlur":
        params["angle"] = 0.0
    return params


def magnitude_at_strength(op_id: str, strength: float) -> float:
    """Map a strength in [0, 1] to a magnitude, honoring the strong end."""
    if not 0.0 <= strength <= 1.0:
        raise ContractError(f"strength must lie in [0,1], got {strength}")
    spec = OPS[op_id]
    lo, hi = spec.magnitude_range
    if spec.symmetric:
        return strength * hi
    if spec.strong_end < 0:
        return hi - strength * (hi - lo)
    return lo + strength * (hi - lo)


@dataclass
class CompositionPlan:
    """Shared operator selection with independent per-view parameters."""

    selected_ops: list[str]
    view_params: tuple[list[dict], list[dict]] = field(default_factory=lambda: ([], []))

    @property
    def k(self) -> int:
        return len(self.selected_ops)


def sample_composition(
    rng: np.random.Generator, allowed_ops: list[str], k_effective: int
) -> CompositionPlan:
    """Uniformly select k distinct operators and draw both views' params.

    Each selected operator fires with its default probability independently
    per view; a non-fired operator is kept in the plan as an identity (its
    loss term then acts as a consistency anchor).
    """
    if not 1 <= k_effective <= len(allowed_ops):
        raise ContractError(
            f"k_effective={k_effective} invalid for {len(allowed_ops)} allowed ops"
        )
    chosen = rng.choice(len(allowed_ops), size=k_effective, replace=False)
    selected = sorted((allowed_ops[int(i)] for i in chosen), key=OP_ORDER.index)
    views: tuple[list[dict], list[dict]] = ([], [])
    for op_id in selected:
        for view in (0, 1):
            fired = bool(rng.random() < OPS[op_id].default_probability)
            params = draw_params(op_id, rng)
            params["fired"] = fired
            views[view].append(params)
    return CompositionPlan(selected_ops=selected, view_params=views)


def make_views(img: np.ndarray, plan: CompositionPlan) -> tuple[np.ndarray, np.ndarray]:
    """Produce the two augmented views of one image (or an image batch)."""
    outs = []
    for view in (0, 1):
        cur = img.copy()
        for op_id, params in zip(plan.selected_ops, plan.view_params[view]):
            if params.get("fired", True):
                cur = apply(op_id, params, cur)
        outs.append(cur)
    return outs[0], outs[1]


def rotate_quarter(img: np.ndarray, turns: int) -> np.ndarray:
    """Exact 90-degree rotations (pretext labels 0..3)."""
    return np.rot90(img, k=turns % 4, axes=(-2, -1)).copy()
