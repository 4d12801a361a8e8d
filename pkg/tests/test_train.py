import math
from dataclasses import replace

import numpy as np
import pytest

from fouriermamba import net
from fouriermamba import train as T

SMALL = T.RunConfig(model=net.ModelConfig(base_channels=4, state_size=4), iterations=3, batch_size=2,
                    dataset_size=6, holdout_size=2, image_size=16, log_every=0)


def batch_loss(weights, rainy, clean, lam):
    out = net.forward(rainy, weights.config, weights.tensors())
    return net.loss_total(out, clean, lam).item()


def test_single_iteration_moves_parameters():
    start = net.init_weights(SMALL.model, SMALL.seed)
    res = T.train(replace(SMALL, iterations=1))
    assert any(not np.array_equal(start.params[k], v) for k, v in res.weights.params.items())


@pytest.mark.slow
def test_loss_falls_over_200_iterations():
    cfg = replace(SMALL, iterations=200, batch_size=4, dataset_size=16, lr0=1e-3)
    data = T.build_data(cfg)
    rainy, clean = data[0]
    idx = T.batch_schedule(len(rainy), cfg.batch_size, cfg.iterations, cfg.seed)[0]
    before = batch_loss(net.init_weights(cfg.model, cfg.seed), rainy[idx], clean[idx], cfg.model.lam)
    res = T.train(cfg, data)
    assert batch_loss(res.weights, rainy[idx], clean[idx], cfg.model.lam) < before


def test_replay_is_bitwise_identical():
    a, b = T.train(SMALL), T.train(SMALL)
    assert a.data_hash == b.data_hash
    assert all(a.weights.params[k].tobytes() == b.weights.params[k].tobytes() for k in a.weights.params)
    assert [e["loss"] for e in a.log] == [e["loss"] for e in b.log]


def test_batch_schedule_covers_epochs():
    sched = T.batch_schedule(5, 2, 5, 0)
    assert sched.shape == (5, 2)
    assert sorted(sched.ravel()[:5].tolist()) == list(range(5))


def test_outputs_written(tmp_path):
    cfg = replace(SMALL, iterations=2, log_every=1, out_dir=str(tmp_path))
    res = T.train(cfg)
    assert (tmp_path / "weights.fmw").exists() and (tmp_path / "final.json").exists()
    lines = (tmp_path / "log.jsonl").read_text().splitlines()
    assert len(lines) == 2 and "heldout_psnr" in lines[-1]
    assert set(res.final) == {"psnr", "ssim", "rainy_psnr", "rainy_ssim"}


def test_non_finite_loss_aborts_with_snapshot(tmp_path):
    (rainy, clean), held = T.build_data(SMALL)
    rainy = rainy.copy()
    rainy[:, 0, 0, 0] = np.nan
    with pytest.raises(T.TrainingError, match="non-finite") as exc:
        T.train(replace(SMALL, out_dir=str(tmp_path)), ((rainy, clean), held))
    assert "iteration 0" in str(exc.value)
    assert list(tmp_path.glob("nonfinite_iter0.npz"))


def test_ablation_rows_share_data_order():
    rows = T.ablation_run(replace(SMALL, iterations=1))
    assert [r.variant for r in rows] == ["classic", "bilateral", "progressive", "all"]
    assert len({r.data_hash for r in rows}) == 1
    assert all(math.isfinite(r.psnr) and math.isfinite(r.ssim) for r in rows)


def test_table_and_csv_formats():
    rows = [T.AblationRow("classic", 20.5, 0.71234, "h"), T.AblationRow("all", 21.25, 0.8, "h")]
    assert T.format_table(rows) == (
        "variant     PSNR    SSIM\n"
        "-------  -------  ------\n"
        "classic  20.5000  0.7123\n"
        "all      21.2500  0.8000\n"
    )
    assert T.format_csv(rows) == "variant,psnr,ssim\nclassic,20.500000,0.712340\nall,21.250000,0.800000\n"


def test_load_run_config(tmp_path):
    p = tmp_path / "run.ini"
    p.write_text(
        "[model]\nbase_channels = 4\nblocks = (1, 1, 1)\nscan_variants = bilateral\n"
        "[train]\niterations = 7  # short\nlr0 = 1e-3\n"
        "[data]\nimage_size = 16\n"
        "[rain]\ncount = 5\n"
        "[output]\ndir = runs/x\n"
        "[ablation]\nvariants = classic, all\n"
    )
    cfg = T.load_run_config(p, seed=4)
    assert cfg.iterations == 7 and cfg.lr0 == 1e-3 and cfg.seed == 4 and cfg.image_size == 16
    assert cfg.model.scan_variants == T.ABLATION_SETS["bilateral"]
    assert cfg.rain.count == 5 and cfg.out_dir == "runs/x" and cfg.ablation == ("classic", "all")


def test_load_run_config_errors(tmp_path):
    with pytest.raises(FileNotFoundError):
        T.load_run_config(tmp_path / "missing.ini")
    p = tmp_path / "bad.ini"
    p.write_text("[modle]\nx = 1\n")
    with pytest.raises(ValueError, match="unknown config sections"):
        T.load_run_config(p)
    p.write_text("[ablation]\nvariants = zigzag\n")
    with pytest.raises(ValueError, match="unknown ablation sets"):
        T.load_run_config(p)


def test_run_config_validation():
    with pytest.raises(ValueError):
        T.RunConfig(iterations=0)


def test_shipped_toy_config_matches_defaults():
    from pathlib import Path
    cfg = T.load_run_config(Path(__file__).parent.parent / "configs" / "toy.ini")
    assert replace(cfg, out_dir=None) == T.RunConfig()
