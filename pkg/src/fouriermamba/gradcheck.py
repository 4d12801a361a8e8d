"""Registered finite-difference gradient checks.

Each check builds a small random instance, contracts the op's output with a
fixed random cotangent to get a scalar, and compares backprop against central
differences (h = 1e-5) on up to ``samples`` coordinates.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from . import autodiff as ad
from . import fourier as ft
from . import net, ssm

TOL = 1e-4
H_STEP = 1e-5


@dataclass
class CheckResult:
    name: str
    error: float
    coords: int

    @property
    def passed(self) -> bool:
        return self.error < TOL


def _contract(out: ad.Tensor, seed: int) -> ad.Tensor:
    rng = np.random.default_rng(seed + 99)
    return ad.sum_all(ad.mul(out, rng.normal(size=out.shape)))


def _check(name: str, fn: Callable, arrays: list[np.ndarray], samples: int | None, seed: int) -> CheckResult:
    f = lambda ts: _contract(fn(*ts), seed)  # noqa: E731
    total = sum(a.size for a in arrays)
    err = ad.grad_check(f, arrays, h=H_STEP, n_samples=samples, seed=seed)
    return CheckResult(name, err, min(total, samples or total))


def _seq_weights(C, N, rng):
    w = ssm.init_seq_transform(C, N, rng)
    # push the step sizes into a range where the recurrence mixes visibly
    w["b_delta"] = rng.uniform(-1.0, 0.5, size=C)
    w["ln_g"] = rng.uniform(0.5, 1.5, size=C)
    w["ln_b"] = rng.normal(scale=0.1, size=C)
    return w


def _jitter(w: dict, rng, scale: float = 0.3, keep: tuple[str, ...] = ()) -> dict:
    # init sits on special points (zero LN bias, unit gains, tiny steps) where
    # many partials fall below finite-difference resolution; move off them
    out = {k: v if k in keep else v + rng.normal(scale=scale, size=v.shape) for k, v in w.items()}
    for k in out:
        if k.endswith("b_delta"):
            out[k] = rng.uniform(-1.0, 0.5, size=out[k].shape)
    return out


def op_checks(seed: int = 0, samples: int = 60) -> list[CheckResult]:
    rng = np.random.default_rng(seed)
    r = lambda *s: rng.normal(size=s)  # noqa: E731
    pos = lambda *s: rng.uniform(0.5, 2.0, size=s)  # noqa: E731
    out = [
        _check("add", lambda a, b: ad.add(a, b), [r(8, 6), r(6)], samples, seed),
        _check("sub", lambda a, b: ad.sub(a, b), [r(8, 6), r(8, 1)], samples, seed),
        _check("mul", lambda a, b: ad.mul(a, b), [r(5, 6), r(5, 6)], samples, seed),
        _check("neg", lambda a: ad.neg(a), [r(50)], samples, seed),
        _check("scale", lambda a: ad.scale(a, 0.3), [r(50)], samples, seed),
        _check("exp", lambda a: ad.exp(a), [r(50)], samples, seed),
        _check("abs", lambda a: ad.absolute(a), [pos(50) * np.sign(r(50))], samples, seed),
        _check("sigmoid", lambda a: ad.sigmoid(a), [r(50)], samples, seed),
        _check("silu", lambda a: ad.silu(a), [r(50)], samples, seed),
        _check("softplus", lambda a: ad.softplus(a), [r(50)], samples, seed),
        _check("sum", lambda a: ad.sum_all(ad.mul(a, a)), [r(5, 10)], samples, seed),
        _check("mean", lambda a: ad.mean_all(ad.mul(a, a)), [r(5, 10)], samples, seed),
        _check("sum_axis", lambda a: ad.sum_axis(a, 1), [r(3, 4, 5)], samples, seed),
        _check("reshape", lambda a: ad.reshape(a, (10, 6)), [r(6, 10)], samples, seed),
        _check("stack", lambda a, b: ad.stack_leading([a, b]), [r(5, 5), r(5, 5)], samples, seed),
        _check("concat", lambda a, b: ad.concat([a, b], axis=-1), [r(6, 5), r(6, 4)], samples, seed),
        _check("take", lambda a: ad.take(a, np.array([2, 0, 2, 1, 4]), axis=1), [r(10, 5)], samples, seed),
        _check("global_avg_pool", lambda a: ad.global_avg_pool(a), [r(4, 4, 4)], samples, seed),
        _check("upsample2x", lambda a: ad.upsample2x(a), [r(3, 3, 6)], samples, seed),
        _check("linear", lambda a, w, b: ad.linear(a, w, b), [r(8, 4), r(4, 5), r(5)], samples, seed),
        _check("conv2d", lambda a, w, b: ad.conv2d(a, w, b), [r(5, 5, 2), r(3, 3, 2, 3), r(3)], samples, seed),
        _check("conv2d/stride2", lambda a, w, b: ad.conv2d(a, w, b, stride=2), [r(2, 6, 6, 2), r(3, 3, 2, 2), r(2)],
               samples, seed),
        _check("dwconv1d", lambda a, w, b: ad.dwconv1d(a, w, b), [r(12, 3), r(4, 3), r(3)], samples, seed),
        _check("layernorm", lambda a, g, b: ad.layernorm(a, g, b), [r(8, 5), r(5), r(5)], samples, seed),
        _check("silu+layernorm", lambda a, g, b: ad.layernorm(ad.silu(a), g, b), [r(8, 6), r(6), r(6)], samples, seed),
        _check("fft2", lambda a: ft.fft2_op(a), [r(4, 4, 4)], samples, seed),
        _check("ifft2", lambda z: ft.ifft2_real_op(z), [r(4, 4, 2, 2)], samples, seed),
        _check("fft_channel", lambda a: ft.fft_channel_op(a), [r(7, 8)], samples, seed),
        _check("ifft_channel", lambda z: ft.ifft_channel_real_op(z), [r(4, 8, 2)], samples, seed),
        _check("complex_abs", lambda z: ft.complex_abs(z), [r(25, 2)], samples, seed),
        _check("complex_angle", lambda z: ft.complex_angle(z), [pos(25, 2)], samples, seed),
        _check("polar", lambda a, p: ft.polar(a, p), [r(25), r(25)], samples, seed),
    ]
    # selective scan at L=8, C=2, N=4
    C, N, L = 2, 4, 8
    A = -rng.uniform(0.5, 2.0, size=(C, N))
    for method in ssm.SCAN_METHODS:
        out.append(_check(
            f"ssm_scan/{method}",
            lambda u, d, a_log, b, c, dd, m=method: ssm.ssm_scan(u, d, ad.neg(ad.exp(a_log)), b, c, dd, m),
            [r(L, C), pos(L, C), np.log(-A), r(L, N), r(L, N), r(C)], samples, seed))
    return out


def block_checks(seed: int = 0, samples: int = 50) -> list[CheckResult]:
    rng = np.random.default_rng(seed)
    out = []
    C, N = 4, 4
    sw = _seq_weights(C, N, rng)
    names = list(sw)

    def seq_fn(x, *ws):
        return ssm.seq_transform(x, dict(zip(names, ws)))

    out.append(_check("seq_transform", seq_fn, [rng.normal(size=(10, C))] + [sw[k] for k in names], samples, seed))

    cfg = net.ModelConfig(base_channels=4, blocks=(1, 1, 1), state_size=4)
    fsi = _jitter(net.init_fsi(C, cfg, rng), rng)
    fsi_names = list(fsi)
    out.append(_check("fsi_ssm", lambda x, *ws: net.fsi_ssm(x, dict(zip(fsi_names, ws)), cfg),
                      [rng.normal(size=(4, 4, C))] + [fsi[k] for k in fsi_names], samples, seed))

    fce = _jitter(net.init_fce(C, cfg, rng), rng)
    fce_names = list(fce)
    out.append(_check("fce_ssm", lambda x, *ws: net.fce_ssm(x, dict(zip(fce_names, ws)), cfg),
                      [rng.normal(size=(4, 4, C))] + [fce[k] for k in fce_names], samples, seed))
    out.append(forward_check(seed, samples))
    return out


def forward_check(seed: int = 0, samples: int = 50) -> CheckResult:
    """loss_total(forward(.)) w.r.t. jittered network parameters, minimal config on 8x8x3."""
    cfg = net.ModelConfig(base_channels=4, blocks=(1, 1, 1), state_size=4)
    rng = np.random.default_rng(seed)
    # the output head stays at init so the loss is O(1) and its ulp small
    params = _jitter(net.init_weights(cfg, seed).params, rng, 0.5, keep=("out.w", "out.b"))
    x = rng.uniform(size=(8, 8, 3))
    y = rng.uniform(size=(8, 8, 3))
    names = list(params)

    def f(ts):
        return net.loss_total(net.forward(x, cfg, dict(zip(names, ts))), y, cfg.lam)

    err = ad.grad_check(f, [params[k] for k in names], h=H_STEP, n_samples=samples, seed=seed)
    return CheckResult("loss_total(forward)", err, samples)


def run_all(seed: int = 0) -> list[CheckResult]:
    return op_checks(seed) + block_checks(seed)
