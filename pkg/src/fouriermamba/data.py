"""Synthetic rain pairs, PNG I/O and reflection padding.

All randomness comes from ``numpy.random.Philox`` (a counter-based 64-bit
generator) keyed by an integer seed, so streams can be replayed exactly.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image


def make_rng(seed: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(int(seed)))


@dataclass(frozen=True)
class RainParams:
    count: int = 24
    angle_range: tuple[float, float] = (70.0, 110.0)  # degrees from horizontal
    length_range: tuple[float, float] = (5.0, 14.0)
    width: float = 1.0
    intensity_range: tuple[float, float] = (0.35, 0.75)

    def __post_init__(self):
        for name in ("angle_range", "length_range", "intensity_range"):
            lo, hi = getattr(self, name)
            if lo > hi:
                raise ValueError(f"{name} is empty: {lo} > {hi}")
        if self.count < 0 or self.width <= 0:
            raise ValueError("count must be >= 0 and width > 0")


@dataclass
class RainPair:
    rainy: np.ndarray
    clean: np.ndarray
    seed: int


def streak_layer(H: int, W: int, rng: np.random.Generator, params: RainParams) -> np.ndarray:
    """Grayscale layer of anti-aliased line segments, each pixel at most the brightest streak covering it."""
    layer = np.zeros((H, W))
    if params.count == 0:
        return layer
    yy, xx = np.mgrid[0:H, 0:W].astype(np.float64)
    for _ in range(params.count):
        cx, cy = rng.uniform(0, W), rng.uniform(0, H)
        theta = np.deg2rad(rng.uniform(*params.angle_range))
        length = rng.uniform(*params.length_range)
        inten = rng.uniform(*params.intensity_range)
        dx, dy = np.cos(theta) * length / 2, -np.sin(theta) * length / 2
        x0, y0, x1, y1 = cx - dx, cy - dy, cx + dx, cy + dy
        vx, vy = x1 - x0, y1 - y0
        t = np.clip(((xx - x0) * vx + (yy - y0) * vy) / max(vx * vx + vy * vy, 1e-12), 0.0, 1.0)
        dist = np.hypot(xx - (x0 + t * vx), yy - (y0 + t * vy))
        cover = np.clip(params.width / 2 + 0.5 - dist, 0.0, 1.0)
        np.maximum(layer, inten * cover, out=layer)
    return layer


def synth_rain(clean: np.ndarray, seed: int, params: RainParams | None = None) -> RainPair:
    clean = np.asarray(clean, dtype=np.float64)
    if clean.ndim != 3 or clean.shape[0] < 2 or clean.shape[1] < 2:
        raise ValueError(f"synth_rain needs an [H, W, C] image with H, W >= 2, got {clean.shape}")
    params = params or RainParams()
    layer = streak_layer(clean.shape[0], clean.shape[1], make_rng(seed), params)
    rainy = np.clip(clean + layer[..., None], 0.0, 1.0)
    return RainPair(rainy, clean.copy(), seed)


def synth_clean(size: int, seed: int) -> np.ndarray:
    """Smooth colour scene: gradient background, a few soft shapes, faint texture."""
    rng = make_rng(seed)
    yy, xx = np.mgrid[0:size, 0:size] / max(size - 1, 1)
    c0, c1 = rng.uniform(0.1, 0.6, size=3), rng.uniform(0.1, 0.6, size=3)
    ang = rng.uniform(0, 2 * np.pi)
    ramp = (np.cos(ang) * xx + np.sin(ang) * yy + 1.0) / 2.0
    img = c0 + (c1 - c0) * ramp[..., None]
    for _ in range(rng.integers(2, 5)):
        cx, cy = rng.uniform(0, 1, size=2)
        rx, ry = rng.uniform(0.1, 0.35, size=2)
        col = rng.uniform(0.0, 0.7, size=3)
        r2 = ((xx - cx) / rx) ** 2 + ((yy - cy) / ry) ** 2
        alpha = 1.0 / (1.0 + np.exp(np.minimum((r2 - 1.0) * 8.0, 50.0)))
        img = img * (1 - alpha[..., None]) + col * alpha[..., None]
    fx, fy = rng.uniform(1, 4, size=2)
    img += 0.03 * np.sin(2 * np.pi * (fx * xx + fy * yy))[..., None]
    return np.clip(img, 0.0, 1.0)


def synth_dataset(n: int, size: int, seed: int, params: RainParams | None = None) -> tuple[np.ndarray, np.ndarray]:
    """``n`` pairs as ``(rainy, clean)`` arrays of shape ``[n, size, size, 3]``."""
    base = make_rng(seed).integers(0, 2 ** 62, size=(n, 2))
    rainy, clean = [], []
    for s_img, s_rain in base:
        pair = synth_rain(synth_clean(size, int(s_img)), int(s_rain), params)
        rainy.append(pair.rainy)
        clean.append(pair.clean)
    return np.stack(rainy), np.stack(clean)


def load_pair_folder(root, size: int | None = None) -> tuple[np.ndarray, np.ndarray]:
    """Paired PNGs from ``root/rainy`` and ``root/clean`` matched by file name."""
    root = Path(root)
    names = sorted(p.name for p in (root / "rainy").glob("*.png"))
    if not names:
        raise FileNotFoundError(f"no PNG files under {root / 'rainy'}")
    rainy = [read_png(root / "rainy" / n) for n in names]
    clean = [read_png(root / "clean" / n) for n in names]
    if size is not None:
        rainy = [r[:size, :size] for r in rainy]
        clean = [c[:size, :size] for c in clean]
    return np.stack(rainy), np.stack(clean)


def read_png(path) -> np.ndarray:
    with Image.open(path) as im:
        return np.asarray(im.convert("RGB"), dtype=np.float64) / 255.0


def write_png(path, img: np.ndarray) -> None:
    arr = np.clip(np.rint(np.asarray(img) * 255.0), 0, 255).astype(np.uint8)
    if arr.ndim == 3 and arr.shape[-1] == 1:
        arr = arr[..., 0]
    Image.fromarray(arr).save(path, format="PNG")


def next_pow2(n: int) -> int:
    return 1 << max(n - 1, 0).bit_length()


def pad_reflect(img: np.ndarray, min_size: int = 1) -> tuple[np.ndarray, tuple[int, int]]:
    """Reflect-pad bottom/right to power-of-two extents (at least ``min_size``)."""
    H, W = img.shape[:2]
    th, tw = max(next_pow2(H), min_size), max(next_pow2(W), min_size)
    pad = [(0, th - H), (0, tw - W)] + [(0, 0)] * (img.ndim - 2)
    mode = "reflect" if min(H, W) > 1 else "edge"
    return np.pad(img, pad, mode=mode), (H, W)


def crop(img: np.ndarray, hw: tuple[int, int]) -> np.ndarray:
    return img[:hw[0], :hw[1]]
