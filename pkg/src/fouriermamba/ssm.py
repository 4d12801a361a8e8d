"""Selective state-space scan with zero-order-hold discretization.

Per position t with input ``u_t`` (C channels)::

    delta_t = softplus(u_t @ W_delta + b_delta)     # [C]
    B_t, C_t = u_t @ W_B, u_t @ W_C                 # [N], shared by channels
    Abar = exp(delta_t * A)                         # A: [C, N], negative
    Bbar = (exp(delta_t * A) - 1) / A * B_t
    h_t = Abar * h_{t-1} + Bbar * u_t               # h_0 prior is zero
    y_t = sum_n C_t[n] h_t[:, n] + D * u_t
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping

import numpy as np
from numba import njit

from . import autodiff as ad
from .autodiff import Tensor, node, register_op


@dataclass
class SSMParams:
    A: np.ndarray        # [C, N], strictly negative
    D: np.ndarray        # [C]
    W_B: np.ndarray      # [C, N]
    W_C: np.ndarray      # [C, N]
    W_delta: np.ndarray  # [C, C]
    b_delta: np.ndarray  # [C]

    def __post_init__(self):
        if np.any(self.A >= 0):
            raise ValueError("SSM state matrix entries must be strictly negative")

    @property
    def channels(self) -> int:
        return self.A.shape[0]

    @property
    def state_size(self) -> int:
        return self.A.shape[1]

    @classmethod
    def from_weights(cls, w: Mapping[str, np.ndarray]) -> "SSMParams":
        g = lambda k: w[k].data if isinstance(w[k], Tensor) else np.asarray(w[k])  # noqa: E731
        return cls(-np.exp(g("A_log")), g("D"), g("W_B"), g("W_C"), g("W_delta"), g("b_delta"))

    def projections(self, u: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        delta = np.logaddexp(0.0, u @ self.W_delta + self.b_delta)
        return delta, u @ self.W_B, u @ self.W_C


def zoh_discretize(A: np.ndarray, B: np.ndarray, delta: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Exact zero-order hold for diagonal ``A``: returns ``(Abar, Bbar)``."""
    A = np.asarray(A, dtype=np.float64)
    delta = np.asarray(delta, dtype=np.float64)
    if np.any(delta <= 0):
        raise ValueError("zoh_discretize: step size delta must be positive")
    dA = delta * A
    return np.exp(dA), np.expm1(dA) / A * np.asarray(B, dtype=np.float64)


def _discretize_seq(params: SSMParams, u: np.ndarray):
    delta, Bm, Cm = params.projections(u)
    Abar, E = zoh_discretize(params.A, 1.0, delta[..., None])
    x = E * Bm[..., None, :] * u[..., None]
    return Abar, x, Cm


def selective_scan_seq(params: SSMParams, u: np.ndarray) -> np.ndarray:
    """Reference recurrence, one position at a time. ``u`` is ``[..., L, C]``."""
    u = np.asarray(u, dtype=np.float64)
    Abar, x, Cm = _discretize_seq(params, u)
    L = u.shape[-2]
    h = np.zeros(u.shape[:-2] + params.A.shape)
    y = np.empty_like(u)
    for t in range(L):
        h = Abar[..., t, :, :] * h + x[..., t, :, :]
        y[..., t, :] = (h * Cm[..., t, None, :]).sum(axis=-1) + params.D * u[..., t, :]
    return y


def linear_scan_parallel(a: np.ndarray, b: np.ndarray, axis: int) -> np.ndarray:
    """Inclusive prefix scan of ``h_t = a_t h_{t-1} + b_t`` (h before start is 0).

    Hillis-Steele doubling over the composition
    ``(a2, b2) o (a1, b1) = (a2 a1, a2 b1 + b2)``: log2(L) vectorized rounds.
    """
    a = np.moveaxis(np.array(a, dtype=np.float64), axis, 0)
    b = np.moveaxis(np.array(b, dtype=np.float64), axis, 0)
    L = a.shape[0]
    step = 1
    while step < L:
        nb = b[step:] + a[step:] * b[:-step]
        na = a[step:] * a[:-step]
        b[step:] = nb
        a[step:] = na
        step *= 2
    return np.moveaxis(b, 0, axis)


def linear_scan_seq(a: np.ndarray, b: np.ndarray, axis: int) -> np.ndarray:
    a = np.moveaxis(a, axis, 0)
    b = np.moveaxis(b, axis, 0)
    h = np.empty(b.shape)
    acc = np.zeros(b.shape[1:])
    for t in range(b.shape[0]):
        acc = a[t] * acc + b[t]
        h[t] = acc
    return np.moveaxis(h, 0, axis)


def selective_scan_parallel(params: SSMParams, u: np.ndarray) -> np.ndarray:
    """Same contract as :func:`selective_scan_seq`, computed by an associative scan."""
    u = np.asarray(u, dtype=np.float64)
    Abar, x, Cm = _discretize_seq(params, u)
    h = linear_scan_parallel(Abar, x, axis=-3)
    return (h * Cm[..., None, :]).sum(axis=-1) + params.D * u


@njit(cache=True)
def _fused_forward(u, delta, A, Bm, Cm, D):
    nb, L, C = u.shape
    N = A.shape[1]
    y = np.empty((nb, L, C))
    hs = np.empty((nb, L, C, N))
    for b in range(nb):
        for c in range(C):
            for n in range(N):
                h = 0.0
                for t in range(L):
                    dA = delta[b, t, c] * A[c, n]
                    h = np.exp(dA) * h + np.expm1(dA) / A[c, n] * Bm[b, t, n] * u[b, t, c]
                    hs[b, t, c, n] = h
            for t in range(L):
                acc = D[c] * u[b, t, c]
                for n in range(N):
                    acc += Cm[b, t, n] * hs[b, t, c, n]
                y[b, t, c] = acc
    return y, hs


@njit(cache=True)
def _fused_backward(g, u, delta, A, Bm, Cm, D, hs):
    nb, L, C = u.shape
    N = A.shape[1]
    gu = np.zeros((nb, L, C))
    gdelta = np.zeros((nb, L, C))
    gA = np.zeros((C, N))
    gB = np.zeros((nb, L, N))
    gC = np.zeros((nb, L, N))
    gD = np.zeros(C)
    for b in range(nb):
        for c in range(C):
            for t in range(L):
                gu[b, t, c] += g[b, t, c] * D[c]
                gD[c] += g[b, t, c] * u[b, t, c]
            for n in range(N):
                Acn = A[c, n]
                gh = 0.0
                a_next = 0.0
                for t in range(L - 1, -1, -1):
                    gt = g[b, t, c]
                    gC[b, t, n] += gt * hs[b, t, c, n]
                    gh = gh * a_next + gt * Cm[b, t, n]
                    dA = delta[b, t, c] * Acn
                    a = np.exp(dA)
                    E = np.expm1(dA) / Acn
                    hp = hs[b, t - 1, c, n] if t > 0 else 0.0
                    gE = gh * Bm[b, t, n] * u[b, t, c]
                    gu[b, t, c] += gh * E * Bm[b, t, n]
                    gB[b, t, n] += gh * E * u[b, t, c]
                    ga_tot = gh * hp + gE / Acn
                    gdelta[b, t, c] += ga_tot * a * Acn
                    gA[c, n] += ga_tot * a * delta[b, t, c] - gE * E / Acn
                    a_next = a
    return gu, gdelta, gA, gB, gC, gD


def _ssm_scan_fused(u, delta, A, Bm, Cm, D):
    lead = u.shape[:-2]
    L, C = u.shape[-2:]
    N = A.shape[1]
    flat = lambda v, k: np.ascontiguousarray(v.data.reshape((-1, L, k)))  # noqa: E731
    args = (flat(u, C), flat(delta, C), np.ascontiguousarray(A.data), flat(Bm, N), flat(Cm, N),
            np.ascontiguousarray(D.data))
    y, hs = _fused_forward(*args)

    def vjp(g):
        gu, gdelta, gA, gB, gC, gD = _fused_backward(np.ascontiguousarray(g.reshape((-1, L, C))), *args, hs)
        return (gu.reshape(u.shape), gdelta.reshape(delta.shape), gA,
                gB.reshape(Bm.shape), gC.reshape(Cm.shape), gD)

    return node(y.reshape(lead + (L, C)), (u, delta, A, Bm, Cm, D), vjp, "ssm_scan")


_SCANS = {"sequential": linear_scan_seq, "parallel": linear_scan_parallel}
SCAN_METHODS = ("fused",) + tuple(_SCANS)
DEFAULT_SCAN = "fused"


def ssm_scan(u: Tensor, delta: Tensor, A: Tensor, Bm: Tensor, Cm: Tensor, D: Tensor,
             method: str | None = None) -> Tensor:
    """Differentiable selective scan.

    Shapes: ``u, delta`` ``[..., L, C]``; ``A`` ``[C, N]``; ``Bm, Cm`` ``[..., L, N]``; ``D`` ``[C]``.
    ``method`` picks the compiled per-element loop (``"fused"``) or a
    vectorized numpy recurrence (``"sequential"``, ``"parallel"``).
    """
    method = method or DEFAULT_SCAN
    if method == "fused":
        return _ssm_scan_fused(u, delta, A, Bm, Cm, D)
    if method not in _SCANS:
        raise ValueError(f"unknown scan method {method!r}; choose from {SCAN_METHODS}")
    scan = _SCANS[method]
    Ad = A.data
    dA = delta.data[..., None] * Ad
    a = np.exp(dA)
    E = np.expm1(dA) / Ad
    ub = u.data[..., None]
    Bx = Bm.data[..., None, :]
    x = E * Bx * ub
    h = scan(a, x, axis=-3)
    Cx = Cm.data[..., None, :]
    y = (h * Cx).sum(axis=-1) + D.data * u.data

    def vjp(g):
        gC = (g[..., None] * h).sum(axis=-2)
        gD = (g * u.data).reshape(-1, g.shape[-1]).sum(axis=0)
        # adjoint recurrence runs backwards: gh_t = g_t C_t + a_{t+1} gh_{t+1}
        src = g[..., None] * Cx
        a_next = np.zeros_like(a)
        a_next[..., :-1, :, :] = a[..., 1:, :, :]
        gh = np.flip(scan(np.flip(a_next, -3), np.flip(src, -3), axis=-3), -3)
        h_prev = np.zeros_like(h)
        h_prev[..., 1:, :, :] = h[..., :-1, :, :]
        ga = gh * h_prev
        gE = gh * Bx * ub
        gu = (gh * E * Bx).sum(axis=-1) + g * D.data
        gB = (gh * E * ub).sum(axis=-2)
        ga_tot = ga + gE / Ad
        gdelta = (ga_tot * a * Ad).sum(axis=-1)
        flat = lambda v: v.reshape((-1,) + Ad.shape).sum(axis=0)  # noqa: E731
        gA = flat(ga_tot * a * delta.data[..., None]) - flat(gE * E / Ad)
        return gu, gdelta, gA, gB, gC, gD

    return node(y, (u, delta, A, Bm, Cm, D), vjp, "ssm_scan")


register_op("ssm_scan")


def selective_scan(u: Tensor, w: Mapping[str, Tensor], method: str | None = None) -> Tensor:
    """Project ``u`` to the selective parameters and run the scan."""
    delta = ad.softplus(ad.linear(u, w["W_delta"], w["b_delta"]))
    Bm = ad.linear(u, w["W_B"])
    Cm = ad.linear(u, w["W_C"])
    A = ad.neg(ad.exp(w["A_log"]))
    return ssm_scan(u, delta, A, Bm, Cm, w["D"], method)


def seq_transform(seq: Tensor, w: Mapping[str, Tensor], method: str | None = None) -> Tensor:
    """DWConv -> SiLU -> SSM -> LayerNorm over a ``[..., L, C]`` sequence."""
    x = ad.dwconv1d(seq, w["conv_w"], w["conv_b"])
    x = ad.silu(x)
    x = selective_scan(x, w, method)
    return ad.layernorm(x, w["ln_g"], w["ln_b"])


SEQ_KEYS = ("conv_w", "conv_b", "W_delta", "b_delta", "W_B", "W_C", "A_log", "D", "ln_g", "ln_b")


def init_seq_transform(C: int, N: int, rng: np.random.Generator, k: int = 4) -> dict[str, np.ndarray]:
    """Fresh weights: A = -(1..N) per channel, softplus(b_delta) log-uniform in [1e-3, 1e-1]."""
    bound = lambda fan_in: np.sqrt(1.0 / fan_in)  # noqa: E731
    dt = np.exp(rng.uniform(np.log(1e-3), np.log(1e-1), size=C))
    return {
        "conv_w": rng.uniform(-bound(k), bound(k), size=(k, C)),
        "conv_b": np.zeros(C),
        "W_delta": rng.uniform(-bound(C), bound(C), size=(C, C)) * 0.1,
        "b_delta": dt + np.log(-np.expm1(-dt)),  # inverse softplus
        "W_B": rng.uniform(-bound(C), bound(C), size=(C, N)),
        "W_C": rng.uniform(-bound(C), bound(C), size=(C, N)),
        "A_log": np.log(np.tile(np.arange(1, N + 1, dtype=np.float64), (C, 1))),
        "D": np.ones(C),
        "ln_g": np.ones(C),
        "ln_b": np.zeros(C),
    }
