"""Scan orders over frequency planes, spatial planes and the channel half-axis.

A :class:`ScanOrder` is a permutation of an index set. Spectral orders run
over the half-spectrum set (see :func:`fouriermamba.fourier.half_spectrum_set`),
classic orders over the full ``H x W`` plane, and the channel order over
bins ``0..C/2``. ``encode`` gathers values held in the index set's canonical
order into scan order; ``decode`` scatters them back.

Ring index of a centered frequency ``(u, v)`` is ``|u| + |v|``.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .fourier import centered_to_flat, half_spectrum_set, is_power_of_two

SPECTRAL = ("progressive-zigzag", "bilateral-zigzag", "progressive-reversed", "bilateral-reversed")
CLASSIC = ("classic-row", "classic-col", "classic-row-rev", "classic-col-rev")
CHANNEL = ("channel-half",)
VARIANTS = SPECTRAL + CLASSIC + CHANNEL


@dataclass(frozen=True)
class IndexSet:
    kind: str  # "half-spectrum" | "full-plane" | "channel-half"
    shape: tuple[int, ...]
    coords: np.ndarray  # [L, 2] centered (u, v), [L, 2] (row, col), or [L, 1] bin

    def __len__(self) -> int:
        return len(self.coords)

    def flat_positions(self, centered: bool = False) -> np.ndarray:
        """Row-major plane index of every member (channel bins map to themselves)."""
        if self.kind == "half-spectrum":
            H, W = self.shape
            return centered_to_flat(self.coords, H, W, centered)
        if self.kind == "full-plane":
            return (self.coords[:, 0] * self.shape[1] + self.coords[:, 1]).astype(np.intp)
        return self.coords[:, 0].astype(np.intp)


@dataclass(frozen=True)
class ScanOrder:
    variant: str
    shape: tuple[int, ...]
    perm: np.ndarray  # perm[i] = index-set position visited at step i
    index_set: IndexSet

    def __len__(self) -> int:
        return len(self.perm)

    @property
    def inverse(self) -> np.ndarray:
        inv = np.empty_like(self.perm)
        inv[self.perm] = np.arange(len(self.perm))
        return inv

    def ring_sequence(self) -> np.ndarray:
        """Ring index at each scan step (spectral orders only)."""
        if self.index_set.kind != "half-spectrum":
            raise ValueError(f"{self.variant} has no frequency rings")
        return ring_index(self.index_set.coords)[self.perm]

    def positions(self) -> np.ndarray:
        """Index-set coordinates in visiting order."""
        return self.index_set.coords[self.perm]


def ring_index(coords: np.ndarray) -> np.ndarray:
    return np.abs(coords[:, 0]) + np.abs(coords[:, 1])


def _serpentine(coords: np.ndarray, members: np.ndarray, descending_rings: bool) -> list[int]:
    """Order ``members`` ring by ring; direction within a ring flips with ring parity."""
    d = ring_index(coords)
    out: list[int] = []
    rings = np.unique(d[members])
    if descending_rings:
        rings = rings[::-1]
    for r in rings:
        ring = members[d[members] == r]
        # ascending v, then ascending u
        key = np.lexsort((coords[ring, 0], coords[ring, 1]))
        ring = ring[key]
        if r % 2:
            ring = ring[::-1]
        out.extend(int(i) for i in ring)
    return out


@lru_cache(maxsize=None)
def _index_set(kind: str, shape: tuple[int, ...]) -> IndexSet:
    if kind == "half-spectrum":
        coords = half_spectrum_set(*shape)
    elif kind == "full-plane":
        H, W = shape
        r, c = np.meshgrid(np.arange(H), np.arange(W), indexing="ij")
        coords = np.stack([r.ravel(), c.ravel()], axis=1)
    else:
        coords = np.arange(shape[0] // 2 + 1)[:, None]
    coords = np.array(coords)
    coords.flags.writeable = False
    return IndexSet(kind, shape, coords)


@lru_cache(maxsize=None)
def _build(variant: str, shape: tuple[int, ...]) -> ScanOrder:
    if variant in CHANNEL:
        (C,) = shape
        iset = _index_set("channel-half", shape)
        perm = np.arange(len(iset))
    elif variant in CLASSIC:
        H, W = shape
        iset = _index_set("full-plane", shape)
        grid = np.arange(H * W).reshape(H, W)
        perm = grid.ravel() if variant.startswith("classic-row") else grid.T.ravel()
        if variant.endswith("-rev"):
            perm = perm[::-1]
    else:
        iset = _index_set("half-spectrum", shape)
        coords = iset.coords
        everything = np.arange(len(coords))
        if variant.startswith("progressive"):
            perm = np.array(_serpentine(coords, everything, descending_rings=False))
        else:
            dc = int(np.flatnonzero((coords[:, 0] == 0) & (coords[:, 1] == 0))[0])
            rest = everything[everything != dc]
            wing_a = rest[coords[rest, 0] < 0]
            wing_b = rest[coords[rest, 0] >= 0]
            perm = np.array(_serpentine(coords, wing_a, descending_rings=True) + [dc]
                            + _serpentine(coords, wing_b, descending_rings=False))
        if variant.endswith("reversed"):
            perm = perm[::-1]
    perm = np.ascontiguousarray(perm, dtype=np.intp)
    perm.flags.writeable = False
    return ScanOrder(variant, shape, perm, iset)


def build_order(variant: str, *shape: int) -> ScanOrder:
    """Build (or fetch from cache) the scan order ``variant`` for ``(H, W)`` or ``(C,)``."""
    if variant not in VARIANTS:
        raise ValueError(f"unknown scan variant {variant!r}; choose from {', '.join(VARIANTS)}")
    shape = tuple(int(s) for s in shape)
    if variant in CHANNEL:
        if len(shape) != 1 or shape[0] < 2 or shape[0] % 2:
            raise ValueError(f"{variant} needs one even channel count, got {shape}")
    else:
        if len(shape) != 2 or min(shape) < 1:
            raise ValueError(f"{variant} needs a plane shape (H, W), got {shape}")
        if variant in SPECTRAL and not (is_power_of_two(shape[0]) and is_power_of_two(shape[1])
                                        and min(shape) >= 2):
            raise ValueError(f"{variant} needs power-of-two extents >= 2, got {shape}")
    return _build(variant, shape)


def encode(order: ScanOrder, values: np.ndarray) -> np.ndarray:
    """Gather values laid out over the index set (axis 0) into scan order.

    Full-plane orders also accept an ``[H, W, ...]`` plane.
    """
    values = np.asarray(values)
    L = len(order)
    if order.index_set.kind == "full-plane" and values.shape[:2] == order.shape:
        values = values.reshape((L,) + values.shape[2:])
    if values.shape[0] != L:
        raise ValueError(f"{order.variant}: expected {L} values on axis 0, got {values.shape[0]}")
    return values[order.perm]


def decode(order: ScanOrder, seq: np.ndarray) -> np.ndarray:
    """Scatter a scan-ordered sequence back into index-set order."""
    seq = np.asarray(seq)
    L = len(order)
    if seq.shape[0] != L:
        raise ValueError(f"{order.variant}: expected sequence length {L}, got {seq.shape[0]}")
    out = np.empty_like(seq)
    out[order.perm] = seq
    return out


def rank_image(order: ScanOrder) -> np.ndarray:
    """Plane holding each member's visit rank (centered layout), -1 off the index set."""
    if order.index_set.kind == "channel-half":
        raise ValueError("rank images need a plane order")
    H, W = order.shape
    img = np.full(H * W, -1, dtype=np.int64)
    flat = order.index_set.flat_positions(centered=True)
    img[flat[order.perm]] = np.arange(len(order))
    return img.reshape(H, W)


def plane_rows_cols(order: ScanOrder) -> np.ndarray:
    """``(row, col)`` of each visited position in the centered plane, in scan order."""
    if order.index_set.kind == "channel-half":
        raise ValueError("row/col listing needs a plane order")
    W = order.shape[1]
    flat = order.index_set.flat_positions(centered=True)[order.perm]
    return np.stack([flat // W, flat % W], axis=1)
