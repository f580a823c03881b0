"""Dataset ingestion, binary tasks, resampling, augmentation and Mixup.

Images are handled as float arrays in [0, 1], row-major ``(height, width)``.
"""

from __future__ import annotations

import gzip
import json
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import BadMagicError, CountMismatchError, DimensionError, TruncatedFileError

IMAGES_MAGIC = 0x00000803
LABELS_MAGIC = 0x00000801

AUGMENT_METHODS = ("jitter", "rotation", "crop", "flip")
BRIGHTNESS = 0.2
CONTRAST = (0.8, 1.25)
MAX_ROTATION_DEG = 15.0
MIN_CROP_AREA = 0.75
BLUR_SIGMA = (0.1, 1.0)


@dataclass
class ImageSample:
    pixels: np.ndarray
    width: int
    height: int
    label: int | None = None

    def __post_init__(self):
        self.pixels = np.asarray(self.pixels, dtype=np.float64).reshape(-1)
        if self.pixels.size != self.width * self.height:
            raise DimensionError("pixel count must equal width * height")

    def as_array(self) -> np.ndarray:
        return self.pixels.reshape(self.height, self.width)

    @classmethod
    def from_array(cls, arr, label=None) -> "ImageSample":
        arr = np.asarray(arr, dtype=np.float64)
        return cls(arr.reshape(-1), arr.shape[1], arr.shape[0], label)


# --- IDX -------------------------------------------------------------------

def _read_bytes(path) -> bytes:
    raw = Path(path).read_bytes()
    if raw[:2] == b"\x1f\x8b":
        try:
            raw = gzip.decompress(raw)
        except (EOFError, OSError) as exc:
            raise TruncatedFileError(f"{path}: corrupt gzip stream ({exc})") from exc
    return raw


def _parse_idx(raw: bytes, magic: int, ndim: int, path) -> np.ndarray:
    header = 4 + 4 * ndim
    if len(raw) < 4:
        raise TruncatedFileError(f"{path}: header truncated")
    (got,) = struct.unpack(">I", raw[:4])
    if got != magic:
        raise BadMagicError(f"{path}: magic 0x{got:08x}, expected 0x{magic:08x}")
    if len(raw) < header:
        raise TruncatedFileError(f"{path}: header truncated")
    dims = struct.unpack(">" + "I" * ndim, raw[4:header])
    size = int(np.prod(dims))
    if len(raw) - header < size:
        raise TruncatedFileError(f"{path}: expected {size} data bytes, found {len(raw) - header}")
    return np.frombuffer(raw, dtype=np.uint8, count=size, offset=header).reshape(dims)


def read_idx(path_images, path_labels) -> tuple[np.ndarray, np.ndarray]:
    """Images as float (N, H, W) in [0, 1] and int labels (N,)."""
    imgs = _parse_idx(_read_bytes(path_images), IMAGES_MAGIC, 3, path_images)
    labels = _parse_idx(_read_bytes(path_labels), LABELS_MAGIC, 1, path_labels)
    if imgs.shape[0] != labels.shape[0]:
        raise CountMismatchError(f"{imgs.shape[0]} images but {labels.shape[0]} labels")
    return imgs.astype(np.float64) / 255.0, labels.astype(np.int64)


def load_idx(path_images, path_labels) -> list[ImageSample]:
    imgs, labels = read_idx(path_images, path_labels)
    return [ImageSample.from_array(im, int(y)) for im, y in zip(imgs, labels)]


def write_idx(images, labels, path_images, path_labels, compress=None) -> None:
    """Write uint8 IDX files; gzip when ``compress`` is true or the name ends in ``.gz``."""
    images = np.asarray(images)
    if images.dtype != np.uint8:
        images = np.clip(np.rint(np.asarray(images, dtype=np.float64) * 255), 0, 255).astype(np.uint8)
    labels = np.asarray(labels, dtype=np.uint8)
    n, h, w = images.shape
    img_bytes = struct.pack(">IIII", IMAGES_MAGIC, n, h, w) + images.tobytes()
    lab_bytes = struct.pack(">II", LABELS_MAGIC, labels.shape[0]) + labels.tobytes()
    for path, blob in ((path_images, img_bytes), (path_labels, lab_bytes)):
        path = Path(path)
        gz = compress if compress is not None else path.suffix == ".gz"
        # mtime=0 keeps gzip output byte-stable across runs
        path.write_bytes(gzip.compress(blob, mtime=0) if gz else blob)


# --- resampling --------------------------------------------------------------

def _tent_weights(n_in: int, n_out: int) -> np.ndarray:
    """(n_out, n_in) resampling weights on a corner-aligned grid.

    Upsampling reduces to plain linear interpolation; downsampling widens the
    tent to the output spacing so every input pixel contributes.
    """
    if n_out == 1:
        centers = np.array([(n_in - 1) / 2.0])
        half = max(1.0, n_in / 2.0)
    else:
        step = (n_in - 1) / (n_out - 1)
        centers = np.arange(n_out) * step
        half = max(1.0, step)
    src = np.arange(n_in)
    w = np.clip(1.0 - np.abs(src[None, :] - centers[:, None]) / half, 0.0, None)
    return w / w.sum(axis=1, keepdims=True)


def resize_batch(X, out_h: int, out_w: int) -> np.ndarray:
    X = np.asarray(X, dtype=np.float64)
    if out_h < 1 or out_w < 1:
        raise DimensionError("output dimensions must be >= 1")
    wy = _tent_weights(X.shape[-2], out_h)
    wx = _tent_weights(X.shape[-1], out_w)
    out = np.einsum("ih,...hw,jw->...ij", wy, X, wx)
    return np.clip(out, 0.0, 1.0)


def bilinear_downsample(img: ImageSample, out_w: int, out_h: int) -> ImageSample:
    return ImageSample.from_array(resize_batch(img.as_array(), out_h, out_w), img.label)


def _sample_bilinear(img: np.ndarray, ys: np.ndarray, xs: np.ndarray) -> np.ndarray:
    """Bilinear lookup at fractional coordinates, zero outside the frame."""
    H, W = img.shape
    y0 = np.floor(ys).astype(int)
    x0 = np.floor(xs).astype(int)
    fy = ys - y0
    fx = xs - x0
    out = np.zeros(ys.shape)
    for dy, wy in ((0, 1 - fy), (1, fy)):
        for dx, wx in ((0, 1 - fx), (1, fx)):
            yy, xx = y0 + dy, x0 + dx
            ok = (yy >= 0) & (yy < H) & (xx >= 0) & (xx < W)
            vals = np.zeros(ys.shape)
            vals[ok] = img[yy[ok], xx[ok]]
            out += wy * wx * vals
    return out


# --- augmentation --------------------------------------------------------------

@dataclass
class AugmentConfig:
    method: str = "jitter"
    gaussian_blur: bool = True
    rng_seed: int = 0

    def __post_init__(self):
        if self.method not in AUGMENT_METHODS:
            raise ValueError(f"augmentation method must be one of {AUGMENT_METHODS}")


def jitter(img, brightness, contrast):
    return np.clip(contrast * img + brightness, 0.0, 1.0)


def rotate(img, degrees):
    H, W = img.shape
    cy, cx = (H - 1) / 2.0, (W - 1) / 2.0
    th = np.deg2rad(degrees)
    yy, xx = np.mgrid[0:H, 0:W].astype(np.float64)
    # inverse map: output pixel -> source coordinate
    sy = np.cos(th) * (yy - cy) - np.sin(th) * (xx - cx) + cy
    sx = np.sin(th) * (yy - cy) + np.cos(th) * (xx - cx) + cx
    return np.clip(_sample_bilinear(img, sy, sx), 0.0, 1.0)


def crop_resize(img, area_frac, top_frac, left_frac):
    H, W = img.shape
    side = np.sqrt(area_frac)
    ch, cw = side * (H - 1), side * (W - 1)
    top = top_frac * ((H - 1) - ch)
    left = left_frac * ((W - 1) - cw)
    ys = top + np.linspace(0.0, ch, H)
    xs = left + np.linspace(0.0, cw, W)
    gy, gx = np.meshgrid(ys, xs, indexing="ij")
    return np.clip(_sample_bilinear(img, gy, gx), 0.0, 1.0)


def gaussian_kernel(sigma: float) -> np.ndarray:
    radius = max(1, int(np.ceil(3 * sigma)))
    t = np.arange(-radius, radius + 1)
    k = np.exp(-0.5 * (t / sigma) ** 2)
    return k / k.sum()


def _conv_matrix(n: int, k: np.ndarray) -> np.ndarray:
    """Zero-padded 'same' convolution with kernel ``k`` as an (n, n) matrix."""
    r = k.size // 2
    i = np.arange(n)
    off = i[None, :] - i[:, None] + r
    ok = (off >= 0) & (off < k.size)
    return np.where(ok, k[np.clip(off, 0, k.size - 1)], 0.0)


def gaussian_blur(img, sigma, clamp=True):
    k = gaussian_kernel(sigma)
    H, W = img.shape
    out = _conv_matrix(H, k) @ img @ _conv_matrix(W, k).T
    return np.clip(out, 0.0, 1.0) if clamp else out


def random_view(img: np.ndarray, method: str, blur: bool, rng: np.random.Generator) -> np.ndarray:
    if method == "jitter":
        out = jitter(img, rng.uniform(-BRIGHTNESS, BRIGHTNESS),
                     np.exp(rng.uniform(np.log(CONTRAST[0]), np.log(CONTRAST[1]))))
    elif method == "rotation":
        out = rotate(img, rng.uniform(-MAX_ROTATION_DEG, MAX_ROTATION_DEG))
    elif method == "crop":
        out = crop_resize(img, rng.uniform(MIN_CROP_AREA, 1.0), rng.uniform(), rng.uniform())
    else:
        out = img[:, ::-1].copy() if rng.uniform() < 0.5 else img.copy()
    if blur:
        out = gaussian_blur(out, rng.uniform(*BLUR_SIGMA))
    return out


def augment_pair(img: ImageSample, cfg: AugmentConfig, rng=None) -> tuple[ImageSample, ImageSample]:
    """Two independent random views of one image.

    Without an explicit ``rng`` the draw is seeded from ``cfg.rng_seed``.
    """
    rng = np.random.default_rng(cfg.rng_seed if rng is None else rng)
    a = img.as_array()
    v1 = random_view(a, cfg.method, cfg.gaussian_blur, rng)
    v2 = random_view(a, cfg.method, cfg.gaussian_blur, rng)
    return ImageSample.from_array(v1, img.label), ImageSample.from_array(v2, img.label)


def augment_batch(X: np.ndarray, cfg: AugmentConfig, epoch: int) -> tuple[np.ndarray, np.ndarray]:
    """Views for a stack of images; sample ``i`` draws from stream (seed, epoch, i)."""
    v1 = np.empty_like(X)
    v2 = np.empty_like(X)
    for i, img in enumerate(X):
        rng = np.random.default_rng([cfg.rng_seed, epoch, i])
        v1[i] = random_view(img, cfg.method, cfg.gaussian_blur, rng)
        v2[i] = random_view(img, cfg.method, cfg.gaussian_blur, rng)
    return v1, v2


# --- Mixup -------------------------------------------------------------------

def mixup(a, b, label_a, label_b, alpha=0.2, rng=None, lam=None):
    """Convex combination of two samples and their soft labels.

    ``lam`` overrides the Beta(alpha, alpha) draw. Returns ``(pixels, label, lam)``.
    """
    a = np.asarray(a.pixels if isinstance(a, ImageSample) else a, dtype=np.float64)
    b = np.asarray(b.pixels if isinstance(b, ImageSample) else b, dtype=np.float64)
    la = np.asarray(label_a, dtype=np.float64)
    lb = np.asarray(label_b, dtype=np.float64)
    if a.shape != b.shape or la.shape != lb.shape:
        raise DimensionError("mixup operands must share dimensions")
    if lam is None:
        lam = float(np.random.default_rng(rng).beta(alpha, alpha))
    return lam * a + (1 - lam) * b, lam * la + (1 - lam) * lb, lam


def mixup_within_class(X, soft, hard, alpha, rng):
    """Mix every sample with a random partner sharing its hard label."""
    X = np.asarray(X, dtype=np.float64)
    soft = np.asarray(soft, dtype=np.float64)
    partner = np.arange(len(X))
    for c in np.unique(hard):
        members = np.flatnonzero(hard == c)
        partner[members] = rng.choice(members, size=members.size)
    lam = rng.beta(alpha, alpha, size=len(X))
    lx = lam.reshape((-1,) + (1,) * (X.ndim - 1))
    return lx * X + (1 - lx) * X[partner], lam[:, None] * soft + (1 - lam[:, None]) * soft[partner]


# --- binary tasks --------------------------------------------------------------

@dataclass
class BinaryTask:
    """Two-class task with victim train/test splits and a disjoint attacker pool.

    ``*_x`` hold full-resolution images (N, H, W); labels are remapped to {0, 1}.
    """

    name: str
    class_a: int
    class_b: int
    train_x: np.ndarray
    train_y: np.ndarray
    test_x: np.ndarray
    test_y: np.ndarray
    pool_x: np.ndarray = field(default_factory=lambda: np.zeros((0, 1, 1)))
    pool_y: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.int64))

    def samples(self, split: str) -> list[ImageSample]:
        xs, ys = getattr(self, f"{split}_x"), getattr(self, f"{split}_y")
        return [ImageSample.from_array(x, int(y)) for x, y in zip(xs, ys)]


def task_name(prefix: str, a: int, b: int) -> str:
    return f"{prefix}{a}{b}"


def parse_task_name(name: str) -> tuple[str, int, int]:
    if len(name) != 3 or not name[1:].isdigit():
        raise ValueError(f"task names look like 'm01', got {name!r}")
    return name[0], int(name[1]), int(name[2])


def make_binary_task(images, labels, class_a, class_b, train_size, test_size, pool_size=0,
                     seed=0, name=None) -> BinaryTask:
    """Draw disjoint, class-balanced train/test/pool splits for one class pair."""
    rng = np.random.default_rng([seed, class_a, class_b])
    splits = {"train": [], "test": [], "pool": []}
    sizes = {"train": train_size, "test": test_size, "pool": pool_size}
    for cls in (class_a, class_b):
        idx = rng.permutation(np.flatnonzero(labels == cls))
        need = {k: v // 2 + (v % 2 if cls == class_a else 0) for k, v in sizes.items()}
        if sum(need.values()) > idx.size:
            raise ValueError(f"class {cls} has {idx.size} images, need {sum(need.values())}")
        start = 0
        for k in ("train", "test", "pool"):
            splits[k].append(idx[start:start + need[k]])
            start += need[k]
    out = {}
    for k, parts in splits.items():
        sel = rng.permutation(np.concatenate(parts))
        out[f"{k}_x"] = np.asarray(images)[sel]
        out[f"{k}_y"] = (np.asarray(labels)[sel] == class_b).astype(np.int64)
    return BinaryTask(name or f"{class_a}{class_b}", class_a, class_b, **out)


def load_task_config(path) -> dict:
    cfg = json.loads(Path(path).read_text())
    for key in ("dataset", "classes", "train_size", "test_size"):
        if key not in cfg:
            raise ValueError(f"task config lacks {key!r}")
    return cfg


def flatten(X) -> np.ndarray:
    X = np.asarray(X)
    return X.reshape(X.shape[0], -1)


def save_pgm(path, img) -> None:
    """Binary PGM dump (for eyeballing augmented pairs)."""
    arr = np.asarray(img.as_array() if isinstance(img, ImageSample) else img, dtype=np.float64)
    data = np.clip(np.rint(arr * 255), 0, 255).astype(np.uint8)
    h, w = data.shape
    Path(path).write_bytes(f"P5\n{w} {h}\n255\n".encode() + data.tobytes())
