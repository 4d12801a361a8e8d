"""Scan-order ablation: one model per variant set, shared data and budget."""

import argparse
import logging
from pathlib import Path

from fouriermamba.train import ablation_run, format_csv, format_table, load_run_config


def main():
    p = argparse.ArgumentParser(description=__doc__)
    p.add_argument("--config", default="configs/ablation_small.ini")
    p.add_argument("--seed", type=int)
    args = p.parse_args()
    logging.basicConfig(level=logging.INFO, format="%(asctime)s %(message)s")
    cfg = load_run_config(args.config, seed=args.seed)
    rows = ablation_run(cfg)
    print(format_table(rows), end="")
    if cfg.out_dir:
        out = Path(cfg.out_dir)
        out.mkdir(parents=True, exist_ok=True)
        (out / "ablation.csv").write_text(format_csv(rows))


if __name__ == "__main__":
    main()
