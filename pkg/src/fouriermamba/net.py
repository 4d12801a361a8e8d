"""FourierMamba U-Net: spatial/channel Fourier scan blocks, assembly, loss, weights I/O."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from functools import lru_cache
from pathlib import Path
from typing import Mapping

import numpy as np

from . import autodiff as ad
from . import fourier as ft
from .autodiff import Tensor
from .scan_orders import CLASSIC, SPECTRAL, build_order
from .ssm import SCAN_METHODS, init_seq_transform, seq_transform

FULL_BLOCKS = (2, 3, 3, 4, 3, 3, 2)


@dataclass(frozen=True)
class ModelConfig:
    base_channels: int = 8
    blocks: tuple[int, ...] = (1, 1, 1)
    state_size: int = 8
    scan_variants: tuple[str, ...] = SPECTRAL
    lam: float = 0.02
    in_channels: int = 3
    conv_taps: int = 4
    channel_scan_dim: int = 4  # feature width of the channel-spectrum sequence
    scan_method: str = "fused"

    def __post_init__(self):
        object.__setattr__(self, "blocks", tuple(int(b) for b in self.blocks))
        object.__setattr__(self, "scan_variants", tuple(self.scan_variants))
        if len(self.blocks) % 2 == 0 or any(b < 0 for b in self.blocks):
            raise ValueError(f"blocks must be an odd-length list of counts, got {self.blocks}")
        if self.lam < 0:
            raise ValueError("loss weight lam must be non-negative")
        if self.base_channels < 2 or self.base_channels % 2:
            raise ValueError("base_channels must be even")
        if self.state_size < 1 or self.conv_taps < 1 or self.channel_scan_dim < 1:
            raise ValueError("state_size, conv_taps and channel_scan_dim must be positive")
        if self.scan_method not in SCAN_METHODS:
            raise ValueError(f"scan_method must be one of {SCAN_METHODS}")
        v = self.scan_variants
        if not v or not (set(v) <= set(SPECTRAL) or set(v) <= set(CLASSIC)):
            raise ValueError(f"scan_variants must be spectral orders or classic orders, not a mix: {v}")

    @property
    def levels(self) -> int:
        return len(self.blocks) // 2

    def channels_at(self, level: int) -> int:
        return self.base_channels * 2 ** level

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: Mapping) -> "ModelConfig":
        return cls(**{k: (tuple(v) if isinstance(v, list) else v) for k, v in d.items()})


# --------------------------------------------------------------------------
# initialisation

def _conv_init(rng, k, cin, cout):
    bound = np.sqrt(1.0 / (k * k * cin))
    return rng.uniform(-bound, bound, size=(k, k, cin, cout)), np.zeros(cout)


def _prefixed(prefix: str, d: Mapping[str, np.ndarray]) -> dict[str, np.ndarray]:
    return {f"{prefix}.{k}": v for k, v in d.items()}


def init_fsi(C: int, cfg: ModelConfig, rng) -> dict[str, np.ndarray]:
    p = {"ln.g": np.ones(C), "ln.b": np.zeros(C)}
    p.update(_prefixed("amp", init_seq_transform(C, cfg.state_size, rng, cfg.conv_taps)))
    p.update(_prefixed("pha", init_seq_transform(C, cfg.state_size, rng, cfg.conv_taps)))
    p["spa_in.w"], p["spa_in.b"] = _conv_init(rng, 1, C, C)
    p.update(_prefixed("spa", init_seq_transform(C, cfg.state_size, rng, cfg.conv_taps)))
    p["fuse.w"], p["fuse.b"] = _conv_init(rng, 1, 2 * C, C)
    return p


def init_fce(C: int, cfg: ModelConfig, rng) -> dict[str, np.ndarray]:
    E = cfg.channel_scan_dim
    p = {"ln.g": np.ones(C), "ln.b": np.zeros(C)}
    for part in ("amp", "pha"):
        p[f"{part}.lift.w"] = rng.uniform(-1.0, 1.0, size=(1, E))
        p[f"{part}.lift.b"] = np.zeros(E)
        p.update(_prefixed(part, init_seq_transform(E, cfg.state_size, rng, cfg.conv_taps)))
        p[f"{part}.proj.w"] = rng.uniform(-np.sqrt(1.0 / E), np.sqrt(1.0 / E), size=(E, 1))
        p[f"{part}.proj.b"] = np.zeros(1)
    p["out.w"], p["out.b"] = _conv_init(rng, 1, C, C)
    return p


def init_frssb(C: int, cfg: ModelConfig, rng) -> dict[str, np.ndarray]:
    p = _prefixed("fsi", init_fsi(C, cfg, rng))
    p.update(_prefixed("fce", init_fce(C, cfg, rng)))
    return p


@dataclass
class ModelWeights:
    config: ModelConfig
    params: dict[str, np.ndarray] = field(default_factory=dict)

    def count(self) -> int:
        return int(sum(v.size for v in self.params.values()))

    def tensors(self, requires_grad: bool = False) -> dict[str, Tensor]:
        return {k: Tensor(v, requires_grad=requires_grad) for k, v in self.params.items()}

    def copy(self) -> "ModelWeights":
        return ModelWeights(self.config, {k: v.copy() for k, v in self.params.items()})


def init_weights(cfg: ModelConfig, seed: int = 0) -> ModelWeights:
    rng = np.random.Generator(np.random.Philox(seed))
    p: dict[str, np.ndarray] = {}
    c0 = cfg.base_channels
    p["shallow.w"], p["shallow.b"] = _conv_init(rng, 3, cfg.in_channels, c0)
    L = cfg.levels
    for i in range(L):
        C = cfg.channels_at(i)
        for j in range(cfg.blocks[i]):
            p.update(_prefixed(f"enc{i}.blk{j}", init_frssb(C, cfg, rng)))
        p[f"down{i}.w"], p[f"down{i}.b"] = _conv_init(rng, 3, C, 2 * C)
    for j in range(cfg.blocks[L]):
        p.update(_prefixed(f"mid.blk{j}", init_frssb(cfg.channels_at(L), cfg, rng)))
    for i in reversed(range(L)):
        C = cfg.channels_at(i)
        p[f"up{i}.w"], p[f"up{i}.b"] = _conv_init(rng, 3, 2 * C, C)
        p[f"fuse{i}.w"], p[f"fuse{i}.b"] = _conv_init(rng, 1, 2 * C, C)
        for j in range(cfg.blocks[len(cfg.blocks) - 1 - i]):
            p.update(_prefixed(f"dec{i}.blk{j}", init_frssb(C, cfg, rng)))
    p["out.w"], p["out.b"] = _conv_init(rng, 3, c0, cfg.in_channels)
    # the network starts close to the identity map
    p["out.w"] *= 0.1
    return ModelWeights(cfg, p)


# --------------------------------------------------------------------------
# blocks

def sub_weights(w: Mapping[str, Tensor], prefix: str) -> dict[str, Tensor]:
    n = len(prefix) + 1
    return {k[n:]: v for k, v in w.items() if k.startswith(prefix + ".")}


@lru_cache(maxsize=None)
def _spectral_indices(variants: tuple[str, ...], H: int, W: int):
    """Gather index (into the flat uncentered plane) and decode index per order."""
    orders = [build_order(v, H, W) for v in variants]
    pos = orders[0].index_set.flat_positions()
    L = len(pos)
    gather = np.concatenate([pos[o.perm] for o in orders])
    decode = np.concatenate([k * L + o.inverse for k, o in enumerate(orders)])
    return gather, decode, L


def scan_plane(plane: Tensor, variants: tuple[str, ...], w: Mapping[str, Tensor], method: str,
               taps: dict | None = None, tap_name: str = "") -> Tensor:
    """Run ``plane`` ``[B, H, W, C]`` through every scan order and sum the decoded results.

    Spectral orders return values over the half set ``[B, L, C]``; classic
    orders return the full flattened plane ``[B, H*W, C]``.
    """
    B, H, W, C = plane.shape
    gather, decode, L = _spectral_indices(variants, H, W)
    K = len(variants)
    flat = ad.reshape(plane, (B, H * W, C))
    seq = ad.reshape(ad.take(flat, gather, axis=1), (B, K, L, C))
    if taps is not None:
        taps[tap_name] = seq.data
    out = seq_transform(seq, w, method)
    dec = ad.take(ad.reshape(out, (B, K * L, C)), decode, axis=1)
    return ad.sum_axis(ad.reshape(dec, (B, K, L, C)), axis=1)


def fourier_branch(F_l: Tensor, w: Mapping[str, Tensor], cfg: ModelConfig, taps: dict | None = None) -> Tensor:
    """fft2 -> amplitude/phase -> scan each -> rebuild spectrum -> ifft2 (real part)."""
    B, H, W, C = F_l.shape
    spec = ft.fft2_op(F_l)
    amp = ft.complex_abs(spec)
    pha = ft.complex_angle(spec)
    amp_s = scan_plane(amp, cfg.scan_variants, sub_weights(w, "amp"), cfg.scan_method, taps, "amp_seq")
    pha_s = scan_plane(pha, cfg.scan_variants, sub_weights(w, "pha"), cfg.scan_method, taps, "pha_seq")
    if cfg.scan_variants[0] in SPECTRAL:
        a_full, p_full = ft.mirror_half_polar(amp_s, pha_s, H, W)
    else:
        a_full = ad.reshape(amp_s, (B, H, W, C))
        p_full = ad.reshape(pha_s, (B, H, W, C))
    return ft.ifft2_real_op(ft.polar(a_full, p_full))


def spatial_branch(F_l: Tensor, w: Mapping[str, Tensor], cfg: ModelConfig) -> Tensor:
    B, H, W, C = F_l.shape
    x = ad.conv2d(F_l, w["spa_in.w"], w["spa_in.b"])
    s = scan_plane(x, CLASSIC, sub_weights(w, "spa"), cfg.scan_method)
    return ad.reshape(s, (B, H, W, C))


def _batched(x: Tensor) -> tuple[Tensor, bool]:
    if x.ndim == 3:
        return ad.reshape(x, (1,) + x.shape), True
    if x.ndim != 4:
        raise ValueError(f"expected [H, W, C] or [B, H, W, C], got {x.shape}")
    return x, False


def fsi_ssm(F_in: Tensor, w: Mapping[str, Tensor], cfg: ModelConfig, taps: dict | None = None) -> Tensor:
    """Spatial-interaction block: Fourier and spatial scan branches, 1x1 fusion, residual."""
    x, squeeze = _batched(F_in)
    H, W = x.shape[1], x.shape[2]
    if not (ft.is_power_of_two(H) and ft.is_power_of_two(W)):
        raise ValueError(f"fsi_ssm needs power-of-two spatial extents, got {H}x{W}")
    F_l = ad.layernorm(x, w["ln.g"], w["ln.b"])
    gate = ad.silu(F_l)
    F_f = ad.mul(fourier_branch(F_l, w, cfg, taps), gate)
    F_s = ad.mul(spatial_branch(F_l, w, cfg), gate)
    fused = ad.conv2d(ad.concat([F_f, F_s], axis=-1), w["fuse.w"], w["fuse.b"])
    out = ad.add(x, fused)
    if taps is not None:
        taps.update(F_l=F_l.data, F_f=F_f.data, F_s=F_s.data)
    return ad.reshape(out, F_in.shape) if squeeze else out


def channel_scan(vals: Tensor, w: Mapping[str, Tensor], method: str) -> Tensor:
    """Sequence transform over channel-frequency bins ``[B, K]``, lifted to a few features."""
    B, K = vals.shape
    seq = ad.linear(ad.reshape(vals, (B, K, 1)), w["lift.w"], w["lift.b"])
    seq = seq_transform(seq, w, method)
    return ad.reshape(ad.linear(seq, w["proj.w"], w["proj.b"]), (B, K))


def fce_ssm(F_r: Tensor, w: Mapping[str, Tensor], cfg: ModelConfig, taps: dict | None = None) -> Tensor:
    """Channel-evolution block: pooled channel spectrum scanned, used as channel attention."""
    x, squeeze = _batched(F_r)
    B, C = x.shape[0], x.shape[-1]
    if C % 2:
        raise ValueError(f"fce_ssm needs an even channel count, got {C}")
    F_g = ad.global_avg_pool(x)                       # [B, 1, 1, C]
    Z = ft.fft_channel_op(ad.reshape(F_g, (B, C)))    # [B, C, 2]
    half = ad.take(Z, np.arange(C // 2 + 1), axis=1)
    amp = channel_scan(ft.complex_abs(half), sub_weights(w, "amp"), cfg.scan_method)
    pha = channel_scan(ft.complex_angle(half), sub_weights(w, "pha"), cfg.scan_method)
    a_full, p_full = ft.mirror_channel_polar(amp, pha, C)
    inv = ft.ifft_channel_real_op(ft.polar(a_full, p_full))
    F_a = ad.mul(ad.reshape(inv, (B, 1, 1, C)), ad.silu(F_g))
    F_c = ad.mul(F_a, x)
    if taps is not None:
        taps.update(F_g=F_g.data, F_a=F_a.data)
    return ad.reshape(F_c, F_r.shape) if squeeze else F_c


def frssb(x: Tensor, w: Mapping[str, Tensor], cfg: ModelConfig) -> Tensor:
    """FSI block, then a residual channel-evolution step behind a 1x1 projection."""
    y = fsi_ssm(x, sub_weights(w, "fsi"), cfg)
    fw = sub_weights(w, "fce")
    c = fce_ssm(ad.layernorm(y, fw["ln.g"], fw["ln.b"]), fw, cfg)
    return ad.add(y, ad.conv2d(c, fw["out.w"], fw["out.b"]))


def forward(image, cfg: ModelConfig, w: Mapping[str, Tensor]) -> Tensor:
    """Restore ``[H, W, 3]`` or ``[B, H, W, 3]`` images; the output adds to the input."""
    img = image if isinstance(image, Tensor) else Tensor(image)
    x, squeeze = _batched(img)
    H, W = x.shape[1], x.shape[2]
    L = cfg.levels
    if not (ft.is_power_of_two(H) and ft.is_power_of_two(W)) or min(H, W) < 2 ** (L + 1):
        raise ValueError(f"forward needs power-of-two extents of at least {2 ** (L + 1)}, got {H}x{W}")
    if x.shape[-1] != cfg.in_channels:
        raise ValueError(f"expected {cfg.in_channels} input channels, got {x.shape[-1]}")
    h = ad.conv2d(x, w["shallow.w"], w["shallow.b"])
    skips = []
    for i in range(L):
        for j in range(cfg.blocks[i]):
            h = frssb(h, sub_weights(w, f"enc{i}.blk{j}"), cfg)
        skips.append(h)
        h = ad.conv2d(h, w[f"down{i}.w"], w[f"down{i}.b"], stride=2)
    for j in range(cfg.blocks[L]):
        h = frssb(h, sub_weights(w, f"mid.blk{j}"), cfg)
    for i in reversed(range(L)):
        h = ad.conv2d(ad.upsample2x(h), w[f"up{i}.w"], w[f"up{i}.b"])
        h = ad.conv2d(ad.concat([h, skips[i]], axis=-1), w[f"fuse{i}.w"], w[f"fuse{i}.b"])
        for j in range(cfg.blocks[len(cfg.blocks) - 1 - i]):
            h = frssb(h, sub_weights(w, f"dec{i}.blk{j}"), cfg)
    out = ad.add(x, ad.conv2d(h, w["out.w"], w["out.b"]))
    return ad.reshape(out, img.shape) if squeeze else out


def loss_total(y_out: Tensor, y_gt, lam: float = 0.02) -> Tensor:
    """Mean L1 in pixels plus ``lam`` times mean complex-modulus L1 between spectra."""
    y_gt = y_gt if isinstance(y_gt, Tensor) else Tensor(y_gt)
    if y_out.shape != y_gt.shape:
        raise ValueError(f"loss_total: shape mismatch {y_out.shape} vs {y_gt.shape}")
    d = ad.sub(y_out, y_gt)
    pix = ad.mean_all(ad.absolute(d))
    if lam == 0:
        return pix
    # the transform is linear, so F(a) - F(b) = F(a - b)
    freq = ad.mean_all(ft.complex_abs(ft.fft2_op(d)))
    return ad.add(pix, ad.scale(freq, lam))


# --------------------------------------------------------------------------
# persistence: text manifest, then raw little-endian float64

MAGIC = "FOURIERMAMBA-WEIGHTS 1"


def save_weights(weights: ModelWeights, path) -> None:
    lines = [MAGIC, "config " + json.dumps(weights.config.to_dict(), sort_keys=True)]
    offset = 0
    for name, arr in weights.params.items():
        dims = "x".join(str(d) for d in arr.shape) or "scalar"
        lines.append(f"param {name} {dims} {offset}")
        offset += arr.size * 8
    lines.append("end")
    with open(path, "wb") as fh:
        fh.write(("\n".join(lines) + "\n").encode("ascii"))
        for arr in weights.params.values():
            fh.write(np.ascontiguousarray(arr, dtype="<f8").tobytes())


def load_weights(path) -> ModelWeights:
    raw = Path(path).read_bytes()
    marker = b"\nend\n"
    cut = raw.find(marker)
    if not raw.startswith(MAGIC.encode()) or cut < 0:
        raise ValueError(f"{path}: not a weights container")
    header = raw[:cut].decode("ascii").split("\n")
    blob = raw[cut + len(marker):]
    cfg = None
    params: dict[str, np.ndarray] = {}
    for line in header[1:]:
        kind, _, rest = line.partition(" ")
        if kind == "config":
            cfg = ModelConfig.from_dict(json.loads(rest))
        elif kind == "param":
            name, dims, off = rest.split(" ")
            shape = () if dims == "scalar" else tuple(int(d) for d in dims.split("x"))
            n = int(np.prod(shape)) if shape else 1
            off = int(off)
            if off + 8 * n > len(blob):
                raise ValueError(f"{path}: truncated data for {name}")
            params[name] = np.frombuffer(blob, dtype="<f8", count=n, offset=off).astype(np.float64).reshape(shape)
        else:
            raise ValueError(f"{path}: unexpected manifest line {line!r}")
    if cfg is None:
        raise ValueError(f"{path}: manifest has no config line")
    return ModelWeights(cfg, params)
