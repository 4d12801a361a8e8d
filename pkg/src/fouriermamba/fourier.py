"""2D and channel-axis discrete Fourier transforms.

Conventions:

* ``fft2`` is unitary: both directions scale by ``1/sqrt(H*W)``.
* ``fft_channel`` scales by ``1/C`` forward and by 1 on the way back, so the
  DC bin is the channel mean.
* Spectra are stored uncentered (DC at index 0) unless ``centered`` is set,
  in which case DC sits at ``(H//2, W//2)``.
* Centered frequency coordinates run over ``[-H/2, H/2) x [-W/2, W/2)``.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .autodiff import Tensor, node, register_op, take, mul, add, reshape


def is_power_of_two(n: int) -> bool:
    return n >= 1 and (n & (n - 1)) == 0


@lru_cache(maxsize=None)
def _bitrev(n: int) -> np.ndarray:
    bits = n.bit_length() - 1
    idx = np.arange(n)
    rev = np.zeros(n, dtype=np.intp)
    for b in range(bits):
        rev |= ((idx >> b) & 1) << (bits - 1 - b)
    return rev


@lru_cache(maxsize=None)
def _twiddles(m2: int) -> np.ndarray:
    """exp(-2 pi i k / m2) for k < m2/2, exact at multiples of pi/2."""
    k = np.arange(m2 // 2)
    theta = 2.0 * np.pi * k / m2
    c, s = np.cos(theta), np.sin(theta)
    c[np.abs(c) < 1e-15] = 0.0
    s[np.abs(s) < 1e-15] = 0.0
    return c - 1j * s


def _fft_last(z: np.ndarray, inverse: bool) -> np.ndarray:
    """Unnormalized iterative radix-2 DFT over the last axis."""
    n = z.shape[-1]
    lead = z.shape[:-1]
    z = z[..., _bitrev(n)].astype(np.complex128)
    m = 1
    while m < n:
        tw = _twiddles(2 * m)
        if inverse:
            tw = np.conj(tw)
        blocks = z.reshape(lead + (n // (2 * m), 2, m))
        even = blocks[..., 0, :]
        odd = blocks[..., 1, :] * tw
        z = np.concatenate((even + odd, even - odd), axis=-1).reshape(lead + (n,))
        m *= 2
    return z


def _dft_last(z: np.ndarray, inverse: bool) -> np.ndarray:
    n = z.shape[-1]
    if is_power_of_two(n):
        return _fft_last(z, inverse)
    # direct summation fallback for short non power-of-two channel axes
    k = np.arange(n)
    sign = 1.0 if inverse else -1.0
    mat = np.exp(sign * 2j * np.pi * np.outer(k, k) / n)
    return z @ mat.T


def dft_axis(z: np.ndarray, axis: int, inverse: bool = False) -> np.ndarray:
    z = np.moveaxis(np.asarray(z), axis, -1)
    return np.moveaxis(_dft_last(z, inverse), -1, axis)


def _check_plane(H: int, W: int) -> None:
    if not (is_power_of_two(H) and is_power_of_two(W)):
        raise ValueError(f"2D transform needs power-of-two extents, got {H}x{W}; "
                         "reflect-pad the image to the next power of two first")


def fft2_array(x: np.ndarray) -> np.ndarray:
    """Unitary 2D DFT of ``[..., H, W, C]`` over the H and W axes, complex result."""
    H, W = x.shape[-3], x.shape[-2]
    _check_plane(H, W)
    z = dft_axis(dft_axis(x, -3), -2)
    return z / np.sqrt(H * W)


def ifft2_array(z: np.ndarray) -> np.ndarray:
    H, W = z.shape[-3], z.shape[-2]
    _check_plane(H, W)
    x = dft_axis(dft_axis(z, -3, inverse=True), -2, inverse=True)
    return x / np.sqrt(H * W)


# --------------------------------------------------------------------------
# spectrum containers

@dataclass(frozen=True)
class ComplexSpectrum:
    real: np.ndarray
    imag: np.ndarray
    centered: bool = False

    @property
    def shape(self) -> tuple[int, ...]:
        return self.real.shape

    def as_complex(self) -> np.ndarray:
        return self.real + 1j * self.imag

    @classmethod
    def from_complex(cls, z: np.ndarray, centered: bool = False) -> "ComplexSpectrum":
        return cls(np.ascontiguousarray(z.real), np.ascontiguousarray(z.imag), centered)

    def to_centered(self) -> "ComplexSpectrum":
        if self.centered:
            return self
        return ComplexSpectrum(_shift(self.real), _shift(self.imag), True)

    def to_uncentered(self) -> "ComplexSpectrum":
        if not self.centered:
            return self
        return ComplexSpectrum(_shift(self.real), _shift(self.imag), False)


def _shift(a: np.ndarray) -> np.ndarray:
    # rolling by half of an even extent is its own inverse
    H, W = a.shape[-3], a.shape[-2]
    return np.roll(a, (H // 2, W // 2), axis=(-3, -2))


@dataclass(frozen=True)
class AmpPhase:
    amplitude: np.ndarray
    phase: np.ndarray
    centered: bool = False


def fft2(x) -> ComplexSpectrum:
    arr = x.data if isinstance(x, Tensor) else np.asarray(x, dtype=np.float64)
    return ComplexSpectrum.from_complex(fft2_array(arr))


def ifft2(S: ComplexSpectrum) -> np.ndarray:
    """Inverse unitary 2D DFT; returns the real part."""
    return ifft2_array(S.to_uncentered().as_complex()).real


PHASE_EPS = 1e-12


def _angle(re: np.ndarray, im: np.ndarray) -> np.ndarray:
    # +0.0 folds -0.0 onto +0.0 so negative reals map to +pi, never -pi.
    # Bins at roundoff magnitude get phase 0: their sign is noise.
    p = np.arctan2(im + 0.0, re)
    return np.where(np.hypot(re, im) <= PHASE_EPS, 0.0, p)


def amp_phase(S: ComplexSpectrum) -> AmpPhase:
    return AmpPhase(np.hypot(S.real, S.imag), _angle(S.real, S.imag), S.centered)


def recompose(A, P=None) -> ComplexSpectrum:
    if isinstance(A, AmpPhase):
        A, P, centered = A.amplitude, A.phase, A.centered
    else:
        centered = False
    return ComplexSpectrum(A * np.cos(P), A * np.sin(P), centered)


def fft_channel(y) -> np.ndarray:
    """Channel-axis DFT with 1/C scaling, complex result over the last axis."""
    arr = y.data if isinstance(y, Tensor) else np.asarray(y, dtype=np.float64)
    C = arr.shape[-1]
    if C % 2:
        raise ValueError(f"channel transform needs an even channel count, got {C}")
    return dft_axis(arr, -1) / C


def ifft_channel(Z: np.ndarray) -> np.ndarray:
    """Inverse of :func:`fft_channel`; returns the real part."""
    C = Z.shape[-1]
    if C % 2:
        raise ValueError(f"channel transform needs an even channel count, got {C}")
    return dft_axis(Z, -1, inverse=True).real


# --------------------------------------------------------------------------
# half spectrum

@lru_cache(maxsize=None)
def half_spectrum_set(H: int, W: int) -> np.ndarray:
    """Centered coordinates ``(u, v)`` of the non-redundant half plane, shape [HW/2+2, 2].

    Members: every ``v > 0``, plus the ``v = 0`` and ``v = -W/2`` columns for
    ``u >= 0`` and for ``u = -H/2``. Rows are sorted by ``u`` then ``v``.
    """
    _check_plane(H, W)
    if H < 2 or W < 2:
        raise ValueError(f"half spectrum needs H, W >= 2, got {H}x{W}")
    u, v = np.meshgrid(np.arange(-H // 2, H // 2), np.arange(-W // 2, W // 2), indexing="ij")
    u, v = u.ravel(), v.ravel()
    edge_u = (u >= 0) | (u == -H // 2)
    keep = (v > 0) | ((v == 0) & edge_u) | ((v == -W // 2) & edge_u)
    coords = np.stack([u[keep], v[keep]], axis=1)
    coords.flags.writeable = False
    return coords


def centered_to_flat(coords: np.ndarray, H: int, W: int, centered: bool = False) -> np.ndarray:
    """Flat row-major plane index of centered frequency coordinates."""
    u, v = coords[:, 0], coords[:, 1]
    if centered:
        r, c = u + H // 2, v + W // 2
    else:
        r, c = u % H, v % W
    return (r * W + c).astype(np.intp)


@lru_cache(maxsize=None)
def hermitian_map(H: int, W: int) -> tuple[np.ndarray, np.ndarray]:
    """For every uncentered flat position: index into the half set and a sign.

    Sign is +1 for half-set members, -1 for conjugate images and 0 for the
    four self-conjugate points.
    """
    coords = half_spectrum_set(H, W)
    flat = centered_to_flat(coords, H, W)
    conj = centered_to_flat(-coords, H, W)
    src = np.full(H * W, -1, dtype=np.intp)
    sign = np.zeros(H * W)
    src[conj] = np.arange(len(coords))
    sign[conj] = -1.0
    src[flat] = np.arange(len(coords))
    sign[flat] = np.where(flat == conj, 0.0, 1.0)
    assert (src >= 0).all()
    src.flags.writeable = False
    sign.flags.writeable = False
    return src, sign


def gather_half(S: ComplexSpectrum) -> np.ndarray:
    """Complex values over the half set, shape [..., HW/2+2, C]."""
    S = S.to_uncentered()
    H, W = S.shape[-3], S.shape[-2]
    flat = centered_to_flat(half_spectrum_set(H, W), H, W)
    z = S.as_complex()
    z = z.reshape(z.shape[:-3] + (H * W, z.shape[-1]))
    return np.take(z, flat, axis=-2)


def hermitian_reconstruct(half: np.ndarray, H: int, W: int) -> ComplexSpectrum:
    """Full uncentered spectrum from complex values over the half set.

    Amplitude is mirrored centrally and phase anti-symmetrically. At the four
    self-conjugate points the phase snaps to 0 or pi, leaving a purely real value.
    """
    half = np.asarray(half)
    L = len(half_spectrum_set(H, W))
    if half.ndim < 2 or half.shape[-2] != L:
        raise ValueError(f"half-spectrum values need {L} entries on axis -2 for {H}x{W}, got shape {half.shape}")
    src, sign = hermitian_map(H, W)
    amp = np.abs(half)
    ph = _angle(half.real, half.imag)
    amp_f = np.take(amp, src, axis=-2)
    ph_f = np.take(ph, src, axis=-2) * sign[:, None]
    re = amp_f * np.cos(ph_f)
    im = amp_f * np.sin(ph_f)
    selfc = sign == 0
    re[..., selfc, :] = amp_f[..., selfc, :] * np.where(np.cos(np.take(ph, src[selfc], axis=-2)) < 0, -1.0, 1.0)
    im[..., selfc, :] = 0.0
    shape = half.shape[:-2] + (H, W, half.shape[-1])
    return ComplexSpectrum(re.reshape(shape), im.reshape(shape), False)


def amplitude_swap(a: np.ndarray, b: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Exchange amplitude spectra: (amp(b) with phase(a), amp(a) with phase(b)), clamped to [0, 1]."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError(f"amplitude_swap: shape mismatch {a.shape} vs {b.shape}")
    pa, pb = amp_phase(fft2(a)), amp_phase(fft2(b))
    out_a = ifft2(recompose(pb.amplitude, pa.phase))
    out_b = ifft2(recompose(pa.amplitude, pb.phase))
    return np.clip(out_a, 0.0, 1.0), np.clip(out_b, 0.0, 1.0)


# --------------------------------------------------------------------------
# differentiable hooks; complex values travel as a trailing axis of size 2

def _pair(z: np.ndarray) -> np.ndarray:
    return np.stack([z.real, z.imag], axis=-1)


def _unpair(p: np.ndarray) -> np.ndarray:
    return p[..., 0] + 1j * p[..., 1]


def fft2_op(x: Tensor) -> Tensor:
    out = _pair(fft2_array(x.data))
    # unitary: the adjoint is the inverse transform, restricted to the real input
    return node(out, (x,), lambda g: (ifft2_array(_unpair(g)).real,), "fft2")


def ifft2_real_op(z: Tensor) -> Tensor:
    out = ifft2_array(_unpair(z.data)).real
    return node(out, (z,), lambda g: (_pair(fft2_array(g)),), "ifft2")


def fft_channel_op(y: Tensor) -> Tensor:
    C = y.shape[-1]
    out = _pair(fft_channel(y.data))
    return node(out, (y,), lambda g: (dft_axis(_unpair(g), -1, inverse=True).real / C,), "fft_channel")


def ifft_channel_real_op(z: Tensor) -> Tensor:
    out = ifft_channel(_unpair(z.data))
    return node(out, (z,), lambda g: (_pair(dft_axis(g.astype(np.complex128), -1)),), "ifft_channel")


AMP_FLOOR = 1e-12


def complex_abs(z: Tensor) -> Tensor:
    re, im = z.data[..., 0], z.data[..., 1]
    a = np.hypot(re, im)

    def vjp(g):
        d = np.maximum(a, AMP_FLOOR)
        return (np.stack([g * re / d, g * im / d], axis=-1),)

    return node(a, (z,), vjp, "complex_abs")


def complex_angle(z: Tensor) -> Tensor:
    re, im = z.data[..., 0], z.data[..., 1]
    p = _angle(re, im)

    def vjp(g):
        d2 = re * re + im * im
        g = np.where(d2 <= PHASE_EPS ** 2, 0.0, g) / np.maximum(d2, PHASE_EPS ** 2)
        return (np.stack([-g * im, g * re], axis=-1),)

    return node(p, (z,), vjp, "complex_angle")


def polar(a: Tensor, p: Tensor) -> Tensor:
    c, s = np.cos(p.data), np.sin(p.data)
    out = np.stack([a.data * c, a.data * s], axis=-1)

    def vjp(g):
        gr, gi = g[..., 0], g[..., 1]
        return gr * c + gi * s, a.data * (gi * c - gr * s)

    return node(out, (a, p), vjp, "polar")


for _name in ("fft2", "ifft2", "fft_channel", "ifft_channel", "complex_abs", "complex_angle", "polar"):
    register_op(_name)


def mirror_half_polar(amp: Tensor, phase: Tensor, H: int, W: int) -> tuple[Tensor, Tensor]:
    """Expand amplitude/phase over the half set (axis -2) to the full uncentered plane.

    Returns ``[..., H, W, C]`` amplitude and phase; self-conjugate phases snap
    to 0 or pi and carry no gradient.
    """
    src, sign = hermitian_map(H, W)
    a_full = take(amp, src, axis=-2)
    p_take = take(phase, src, axis=-2)
    selfc = sign == 0
    snap = np.zeros(p_take.shape)
    snap[..., selfc, :] = np.where(np.cos(p_take.data[..., selfc, :]) < 0, np.pi, 0.0)
    p_full = add(mul(p_take, sign[:, None]), snap)
    lead = amp.shape[:-2]
    C = amp.shape[-1]
    return reshape(a_full, lead + (H, W, C)), reshape(p_full, lead + (H, W, C))


def mirror_channel_polar(amp: Tensor, phase: Tensor, C: int) -> tuple[Tensor, Tensor]:
    """Extend amplitude/phase over channel bins z = 0..C/2 (last axis) to all C bins.

    Amplitude is mirrored, phase negated; DC and Nyquist phases snap to 0 or pi.
    """
    half = C // 2
    if amp.shape[-1] != half + 1 or phase.shape[-1] != half + 1:
        raise ValueError(f"need {half + 1} channel bins, got {amp.shape[-1]} and {phase.shape[-1]}")
    src = np.concatenate([np.arange(half + 1), C - np.arange(half + 1, C)])
    sign = np.ones(C)
    sign[half + 1:] = -1.0
    sign[0] = sign[half] = 0.0
    a_full = take(amp, src, axis=-1)
    p_take = take(phase, src, axis=-1)
    snap = np.zeros(p_take.shape)
    for z in (0, half):
        snap[..., z] = np.where(np.cos(p_take.data[..., z]) < 0, np.pi, 0.0)
    return a_full, add(mul(p_take, sign), snap)
