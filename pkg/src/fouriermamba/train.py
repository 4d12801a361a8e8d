"""Toy training loop, held-out evaluation and the scan-order ablation runner."""

from __future__ import annotations

import ast
import configparser
import hashlib
import json
import logging
import math
import time
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from . import autodiff as ad
from .data import RainParams, load_pair_folder, make_rng, synth_dataset
from .metrics import psnr_y, ssim_y
from .net import ModelConfig, ModelWeights, forward, init_weights, loss_total, save_weights
from .scan_orders import CLASSIC, SPECTRAL

log = logging.getLogger(__name__)

# scan-variant sets compared by the ablation runner
ABLATION_SETS: dict[str, tuple[str, ...]] = {
    "classic": CLASSIC,
    "bilateral": ("bilateral-zigzag", "bilateral-reversed"),
    "progressive": ("progressive-zigzag", "progressive-reversed"),
    "all": SPECTRAL,
}


@dataclass
class RunConfig:
    model: ModelConfig = field(default_factory=ModelConfig)
    iterations: int = 2000
    batch_size: int = 4
    lr0: float = 3e-4
    lr_min: float = 1e-6
    seed: int = 0
    dataset_size: int = 64
    holdout_size: int = 16
    image_size: int = 32
    log_every: int = 100
    rain: RainParams = field(default_factory=RainParams)
    data_dir: str | None = None
    out_dir: str | None = None
    ablation: tuple[str, ...] = ("classic", "bilateral", "progressive", "all")

    def __post_init__(self):
        if self.iterations <= 0 or self.batch_size <= 0 or self.dataset_size <= 0:
            raise ValueError("iterations, batch_size and dataset_size must be positive")


class TrainingError(RuntimeError):
    pass


@dataclass
class TrainResult:
    weights: ModelWeights
    log: list[dict]
    data_hash: str
    final: dict


def build_data(cfg: RunConfig):
    if cfg.data_dir:
        rainy, clean = load_pair_folder(Path(cfg.data_dir) / "train", cfg.image_size)
        h_rainy, h_clean = load_pair_folder(Path(cfg.data_dir) / "test", cfg.image_size)
        return (rainy, clean), (h_rainy, h_clean)
    train = synth_dataset(cfg.dataset_size, cfg.image_size, cfg.seed, cfg.rain)
    held = synth_dataset(cfg.holdout_size, cfg.image_size, cfg.seed + 1_000_003, cfg.rain)
    return train, held


def batch_schedule(n: int, batch: int, iterations: int, seed: int) -> np.ndarray:
    """Index of every sample in every batch: reshuffled each epoch, shape [iterations, batch]."""
    rng = make_rng(seed + 7)
    need = iterations * batch
    chunks = []
    while sum(len(c) for c in chunks) < need:
        chunks.append(rng.permutation(n))
    return np.concatenate(chunks)[:need].reshape(iterations, batch)


def schedule_hash(sched: np.ndarray) -> str:
    return hashlib.sha256(np.ascontiguousarray(sched, dtype="<i8").tobytes()).hexdigest()[:16]


def restore(weights: ModelWeights, images: np.ndarray, chunk: int = 8) -> np.ndarray:
    """Inference without building a gradient graph; output clamped to [0, 1]."""
    w = weights.tensors(requires_grad=False)
    outs = [forward(images[i:i + chunk], weights.config, w).data for i in range(0, len(images), chunk)]
    return np.clip(np.concatenate(outs), 0.0, 1.0)


def evaluate(weights: ModelWeights, rainy: np.ndarray, clean: np.ndarray) -> dict:
    out = restore(weights, rainy)
    return {
        "psnr": float(np.mean([psnr_y(o, c) for o, c in zip(out, clean)])),
        "ssim": float(np.mean([ssim_y(o, c) for o, c in zip(out, clean)])),
        "rainy_psnr": float(np.mean([psnr_y(r, c) for r, c in zip(rainy, clean)])),
        "rainy_ssim": float(np.mean([ssim_y(r, c) for r, c in zip(rainy, clean)])),
    }


def train(cfg: RunConfig, data=None) -> TrainResult:
    (rainy, clean), (h_rainy, h_clean) = data if data is not None else build_data(cfg)
    weights = init_weights(cfg.model, cfg.seed)
    params = weights.params
    state = ad.AdamState()
    sched = batch_schedule(len(rainy), cfg.batch_size, cfg.iterations, cfg.seed)
    history: list[dict] = []
    t0 = time.time()
    for it in range(cfg.iterations):
        idx = sched[it]
        lr = ad.cosine_lr(it, cfg.iterations, cfg.lr0, cfg.lr_min)
        w = weights.tensors(requires_grad=True)
        out = forward(rainy[idx], cfg.model, w)
        loss = loss_total(out, clean[idx], cfg.model.lam)
        value = loss.item()
        if not math.isfinite(value):
            snap = None
            if cfg.out_dir:
                snap = Path(cfg.out_dir) / f"nonfinite_iter{it}.npz"
                snap.parent.mkdir(parents=True, exist_ok=True)
                np.savez(snap, rainy=rainy[idx], clean=clean[idx], indices=idx)
            raise TrainingError(f"non-finite loss {value} at iteration {it} (batch {idx.tolist()}, snapshot {snap})")
        ad.backward(loss)
        ad.adam_step(params, {k: t.grad for k, t in w.items()}, state, lr)
        entry = {"iter": it, "loss": value, "lr": lr}
        if cfg.log_every and ((it + 1) % cfg.log_every == 0 or it + 1 == cfg.iterations):
            entry["heldout_psnr"] = float(np.mean([psnr_y(o, c) for o, c in zip(restore(weights, h_rainy), h_clean)]))
            log.info("iter %d loss %.5f lr %.2e heldout PSNR %.2f dB (%.0fs)",
                     it + 1, value, lr, entry["heldout_psnr"], time.time() - t0)
        history.append(entry)
    final = evaluate(weights, h_rainy, h_clean)
    result = TrainResult(weights, history, schedule_hash(sched), final)
    if cfg.out_dir:
        out = Path(cfg.out_dir)
        out.mkdir(parents=True, exist_ok=True)
        save_weights(weights, out / "weights.fmw")
        with open(out / "log.jsonl", "w") as fh:
            for e in history:
                fh.write(json.dumps(e, sort_keys=True) + "\n")
        (out / "final.json").write_text(json.dumps({**final, "data_hash": result.data_hash}, indent=2, sort_keys=True) + "\n")
    return result


@dataclass
class AblationRow:
    variant: str
    psnr: float
    ssim: float
    data_hash: str


def ablation_run(cfg: RunConfig, variants: dict[str, tuple[str, ...]] | None = None) -> list[AblationRow]:
    """Train one model per variant set with shared data, seed and budget."""
    variants = variants or {k: ABLATION_SETS[k] for k in cfg.ablation}
    data = build_data(cfg)
    rows = []
    for label, vs in variants.items():
        sub = replace(cfg, model=replace(cfg.model, scan_variants=tuple(vs)), out_dir=None)
        res = train(sub, data)
        rows.append(AblationRow(label, res.final["psnr"], res.final["ssim"], res.data_hash))
    return rows


def format_table(rows: list[AblationRow]) -> str:
    head = ("variant", "PSNR", "SSIM")
    body = [(r.variant, f"{r.psnr:.4f}", f"{r.ssim:.4f}") for r in rows]
    widths = [max(len(x[i]) for x in [head] + body) for i in range(3)]
    fmt = lambda cols: "  ".join(c.ljust(widths[0]) if i == 0 else c.rjust(widths[i])  # noqa: E731
                                 for i, c in enumerate(cols))
    return "\n".join([fmt(head), "  ".join("-" * w for w in widths)] + [fmt(b) for b in body]) + "\n"


def format_csv(rows: list[AblationRow]) -> str:
    lines = ["variant,psnr,ssim"] + [f"{r.variant},{r.psnr:.6f},{r.ssim:.6f}" for r in rows]
    return "\n".join(lines) + "\n"


# --------------------------------------------------------------------------
# config files: INI sections with Python-literal values

def _value(raw: str):
    try:
        return ast.literal_eval(raw)
    except (ValueError, SyntaxError):
        return raw.strip()


def load_run_config(path, seed: int | None = None) -> RunConfig:
    parser = configparser.ConfigParser(inline_comment_prefixes=("#",))
    if not parser.read(path):
        raise FileNotFoundError(f"cannot read config file {path}")
    known = {"model", "train", "data", "rain", "output", "ablation"}
    unknown = set(parser.sections()) - known
    if unknown:
        raise ValueError(f"unknown config sections: {sorted(unknown)}")
    sec = lambda name: {k: _value(v) for k, v in parser[name].items()} if parser.has_section(name) else {}  # noqa: E731
    model = sec("model")
    if isinstance(model.get("scan_variants"), str):
        model["scan_variants"] = ABLATION_SETS[model["scan_variants"]]
    kwargs = {**sec("train"), **sec("data")}
    out = sec("output")
    if "dir" in out:
        kwargs["out_dir"] = str(out["dir"])
    abl = sec("ablation")
    if "variants" in abl:
        v = abl["variants"]
        kwargs["ablation"] = tuple(v) if isinstance(v, (list, tuple)) else tuple(s.strip() for s in v.split(","))
        bad = set(kwargs["ablation"]) - set(ABLATION_SETS)
        if bad:
            raise ValueError(f"unknown ablation sets {sorted(bad)}; choose from {sorted(ABLATION_SETS)}")
    cfg = RunConfig(model=ModelConfig(**model), rain=RainParams(**sec("rain")), **kwargs)
    if seed is not None:
        cfg = replace(cfg, seed=seed)
    return cfg
