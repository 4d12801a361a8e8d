"""Command-line entry point: ``fouriermamba <subcommand> ...``."""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

import numpy as np


def _cmd_train(args) -> int:
    from .train import load_run_config, train

    cfg = load_run_config(args.config, seed=args.seed)
    if args.out:
        from dataclasses import replace
        cfg = replace(cfg, out_dir=args.out)
    res = train(cfg)
    f = res.final
    print(f"held-out PSNR-Y {f['psnr']:.3f} dB (rainy {f['rainy_psnr']:.3f} dB), "
          f"SSIM-Y {f['ssim']:.4f} (rainy {f['rainy_ssim']:.4f})")
    if cfg.out_dir:
        print(f"weights written to {Path(cfg.out_dir) / 'weights.fmw'}")
    return 0


def _cmd_ablate(args) -> int:
    from .train import ablation_run, format_csv, format_table, load_run_config

    cfg = load_run_config(args.config, seed=args.seed)
    rows = ablation_run(cfg)
    table = format_table(rows)
    print(table, end="")
    out = Path(args.out or cfg.out_dir or ".")
    out.mkdir(parents=True, exist_ok=True)
    (out / "ablation.txt").write_text(table)
    (out / "ablation.csv").write_text(format_csv(rows))
    hashes = {r.data_hash for r in rows}
    print(f"data order hash: {', '.join(sorted(hashes))}")
    return 0 if len(hashes) == 1 else 1


def _cmd_derain(args) -> int:
    from .data import crop, pad_reflect, read_png, write_png
    from .net import load_weights
    from .train import restore

    weights = load_weights(args.weights)
    img = read_png(args.input)
    padded, hw = pad_reflect(img, min_size=2 ** (weights.config.levels + 1))
    out = restore(weights, padded[None])[0]
    write_png(args.output, crop(out, hw))
    return 0


def _cmd_scan_viz(args) -> int:
    from .data import write_png
    from .scan_orders import plane_rows_cols, rank_image, build_order

    order = build_order(args.variant, args.H, args.W)
    out = Path(args.out)
    pairs = plane_rows_cols(order)
    out.write_text("".join(f"{r} {c}\n" for r, c in pairs))
    ranks = rank_image(order).astype(np.float64)
    img = np.where(ranks < 0, 0.0, (ranks + 1) / len(order))
    write_png(out.with_suffix(".png"), img)
    return 0


def _cmd_spectrum_swap(args) -> int:
    from .data import crop, pad_reflect, read_png, write_png
    from .fourier import amplitude_swap

    a, b = read_png(args.a), read_png(args.b)
    if a.shape != b.shape:
        raise ValueError(f"images differ in size: {a.shape[:2]} vs {b.shape[:2]}")
    pa, hw = pad_reflect(a)
    pb, _ = pad_reflect(b)
    sa, sb = amplitude_swap(pa, pb)
    out = Path(args.outdir)
    out.mkdir(parents=True, exist_ok=True)
    # first keeps a's phase with b's amplitude, second the reverse
    write_png(out / "a_phase_b_amplitude.png", crop(sa, hw))
    write_png(out / "b_phase_a_amplitude.png", crop(sb, hw))
    return 0


def _cmd_gradcheck(args) -> int:
    from .gradcheck import TOL, run_all

    results = run_all(seed=args.seed or 0)
    for r in results:
        print(f"{'PASS' if r.passed else 'FAIL'}  {r.name:<24} max rel err {r.error:.3e}  ({r.coords} coords)")
    failed = [r.name for r in results if not r.passed]
    print(f"{len(results) - len(failed)}/{len(results)} checks below {TOL:g}")
    return 1 if failed else 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="fouriermamba", description="Fourier-space Mamba deraining toolkit")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True)

    t = sub.add_parser("train", help="train a model from a config file")
    t.add_argument("config")
    t.add_argument("--seed", type=int)
    t.add_argument("--out", help="output directory (overrides the config)")
    t.set_defaults(func=_cmd_train)

    d = sub.add_parser("derain", help="restore one PNG with saved weights")
    d.add_argument("weights")
    d.add_argument("input")
    d.add_argument("output")
    d.set_defaults(func=_cmd_derain)

    s = sub.add_parser("scan-viz", help="dump a scan order as 'row col' lines plus a rank image")
    s.add_argument("variant")
    s.add_argument("H", type=int)
    s.add_argument("W", type=int)
    s.add_argument("out")
    s.set_defaults(func=_cmd_scan_viz)

    w = sub.add_parser("spectrum-swap", help="exchange the amplitude spectra of two images")
    w.add_argument("a")
    w.add_argument("b")
    w.add_argument("outdir")
    w.set_defaults(func=_cmd_spectrum_swap)

    g = sub.add_parser("gradcheck", help="run every registered finite-difference check")
    g.add_argument("--seed", type=int)
    g.set_defaults(func=_cmd_gradcheck)

    a = sub.add_parser("ablate", help="train one model per scan-variant set and tabulate")
    a.add_argument("config")
    a.add_argument("--seed", type=int)
    a.add_argument("--out", help="directory for ablation.txt / ablation.csv")
    a.set_defaults(func=_cmd_ablate)
    return p


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(asctime)s %(message)s", stream=sys.stderr)
    try:
        return args.func(args)
    except (OSError, ValueError, KeyError, RuntimeError) as exc:
        msg = str(exc).splitlines()[0] if str(exc) else type(exc).__name__
        print(f"fouriermamba {args.command}: {msg}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
