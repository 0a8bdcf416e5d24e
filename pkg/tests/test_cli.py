import json
import math

import numpy as np
import pytest

from risae import cli
from risae.baseline import qpsk_awgn_ser_analytic
from risae.cli import SerCurve, main
from risae.config import ConfigError, ExperimentConfig, config_from_dict, load_config

TINY = {
    "geometry": {"n_elements": 4},
    "codebook": {"size": 4},
    "model": {"encoder_hidden": [8], "selector_hidden": [8, 8], "decoder_hidden": [16, 16]},
    "train": {"batch_size": 32, "iterations": 25},
    "sweep": {"snr_lo_db": -2, "snr_hi_db": 4, "snr_step_db": 2, "n_symbols": 3000, "chunk_size": 1000},
    "top_k": [1, 3],
    "seed": 7,
}


@pytest.fixture
def tiny_config(tmp_path):
    path = tmp_path / "tiny.json"
    path.write_text(json.dumps(TINY))
    return path


def test_defaults_encode_published_constants():
    cfg = ExperimentConfig()
    assert cfg.geometry.n_elements == 32
    assert cfg.geometry.incident_azimuth_deg == 90.0
    assert cfg.geometry.receiver_azimuth_deg == 110.0
    assert cfg.geometry.spacing_wavelengths == 0.5
    assert (cfg.codebook.size, cfg.codebook.min_deg, cfg.codebook.max_deg) == (32, 100.0, 160.0)
    assert cfg.kappa_db == 3.0 and cfg.k_bits == 2
    assert cfg.obstruction_losses_db == (6.0, 7.0, 10.0)
    assert cfg.top_k == (1, 3, 5, 10, 16, 32)
    assert cfg.train.batch_size == 512 and cfg.train.iterations == 20_000
    assert cfg.train.learning_rate == 1e-3 and cfg.train.train_snr_range_db == (0.0, 20.0)
    assert cfg.sweep.n_symbols == 10**6


def test_empty_config_is_default():
    assert config_from_dict({}) == ExperimentConfig()
    assert load_config(None) == ExperimentConfig()


def test_config_json_round_trip():
    cfg = config_from_dict(TINY)
    assert config_from_dict(json.loads(cfg.to_json())) == cfg


@pytest.mark.parametrize("bad", [
    {"unknown": 1},
    {"geometry": {"n_elements": 4, "spam": 0}},
    {"kappa_db": "3"},
    {"k_bits": True},
    {"k_bits": 2.5},
    {"top_k": [1, 40]},
    {"train": {"selector_mode": "magic"}},
    {"train": {"train_snr_range_db": [0]}},
    {"sweep": {"snr_step_db": 0}},
    {"gain_targets": [2.0]},
    {"obstruction_losses_db": [-1]},
])
def test_config_rejects_invalid(bad):
    with pytest.raises(ConfigError):
        config_from_dict(bad)


def test_invalid_json(tmp_path):
    p = tmp_path / "c.json"
    p.write_text("{not json")
    with pytest.raises(ConfigError):
        load_config(p)


def test_sweep_grid():
    assert config_from_dict(TINY).sweep.grid() == [-2.0, 0.0, 2.0, 4.0]
    assert config_from_dict(TINY).sweep.grid(4.0) == [-2.0, 0.0, 2.0, 4.0, 6.0, 8.0]
    assert len(ExperimentConfig().sweep.grid()) == 19


def test_print_config(capsys, tiny_config):
    assert main(["--config", str(tiny_config), "--print-config"]) == 0
    printed = json.loads(capsys.readouterr().out)
    assert config_from_dict(printed) == config_from_dict(TINY)
    assert main(["--print-config", "--seed", "12"]) == 0
    assert json.loads(capsys.readouterr().out)["seed"] == 12


def test_bad_config_exit_code(tmp_path, capsys):
    p = tmp_path / "bad.json"
    p.write_text(json.dumps({"nope": 1}))
    assert main(["--config", str(p), "codebook"]) == 2
    assert "unknown keys" in capsys.readouterr().err


def test_codebook_command(tmp_path):
    assert main(["codebook", "--out", str(tmp_path)]) == 0
    text = (tmp_path / "codebook.csv").read_text()
    rows = text.strip().split("\n")
    assert len(rows) == 33
    assert rows[0].split(",")[:3] == ["index", "angle_deg", "e0"]
    assert all(len(r.split(",")) == 34 for r in rows)
    assert {e for r in rows[1:] for e in r.split(",")[2:]} == {"1", "-1"}
    main(["codebook", "--out", str(tmp_path)])
    assert (tmp_path / "codebook.csv").read_text() == text


def test_codebook_size_two(tmp_path):
    cfg = config_from_dict({"codebook": {"size": 2}, "top_k": [1, 2]})
    rows = cli.cmd_codebook(cfg, tmp_path).read_text().strip().split("\n")[1:]
    assert [float(r.split(",")[1]) for r in rows] == [100.0, 160.0]


def test_sweep_requires_checkpoint(tmp_path, tiny_config, capsys):
    assert main(["sweep", "--config", str(tiny_config), "--out", str(tmp_path)]) == 1
    assert "not found" in capsys.readouterr().err


def test_train_sweep_gains_pipeline(tmp_path, tiny_config):
    runs = {}
    for name, workers in (("a", "1"), ("b", "3")):
        out = tmp_path / name
        assert main(["--config", str(tiny_config), "--out", str(out), "train"]) == 0
        assert main(["sweep", "--config", str(tiny_config), "--out", str(out), "--workers", workers]) == 0
        assert main(["gains", "--config", str(tiny_config), "--out", str(out)]) == 0
        runs[name] = {f: (out / f).read_bytes() for f in ("model.ckpt", "loss.csv", "ser.csv", "gains.csv")}
    assert runs["a"] == runs["b"]

    out = tmp_path / "a"
    loss_rows = (out / "loss.csv").read_text().strip().split("\n")
    assert loss_rows[0] == "iteration,total_loss,symbol_loss,beam_loss"
    assert len(loss_rows) == 1 + TINY["train"]["iterations"]

    curves = cli.read_curves(out / "ser.csv")
    assert set(curves) == {"ris_ae_best", "ris_ae_top3", "direct_qpsk_lo6", "direct_qpsk_lo7",
                           "direct_qpsk_lo10", "qpsk_awgn_analytic"}
    assert len(curves["ris_ae_best"].points) == 4
    assert curves["direct_qpsk_lo10"].snr_db[-1] == 14.0
    for snr, ser, n, e in curves["qpsk_awgn_analytic"].points:
        assert abs(ser - qpsk_awgn_ser_analytic(snr)) <= 1e-12
    for snr, ser, n, e in curves["ris_ae_best"].points:
        assert n == 3000 and ser == e / n

    gains = (out / "gains.csv").read_text().strip().split("\n")
    assert gains[0] == "target_ser,l_o_db,gain_db"
    assert len(gains) == 1 + 5 * 3


def test_seed_flag_changes_results(tmp_path, tiny_config):
    for name, seed in (("a", "1"), ("b", "2")):
        main(["--config", str(tiny_config), "--seed", seed, "--out", str(tmp_path / name), "train"])
    assert (tmp_path / "a" / "loss.csv").read_bytes() != (tmp_path / "b" / "loss.csv").read_bytes()


def test_baseline_command(tmp_path, tiny_config):
    assert main(["baseline", "--config", str(tiny_config), "--out", str(tmp_path)]) == 0
    curves = cli.read_curves(tmp_path / "baseline.csv")
    assert set(curves) == {"qpsk_awgn_analytic", "qpsk_awgn_mc"}
    rows = (tmp_path / "baseline.csv").read_text().strip().split("\n")
    assert len(rows) == 1 + 4 * 2
    ana = curves["qpsk_awgn_analytic"]
    for (snr, p, _, _), (_, ser, n, e) in zip(ana.points, curves["qpsk_awgn_mc"].points):
        assert abs(ser - p) <= 3 * math.sqrt(p * (1 - p) / n)
    assert ana.points[1][1] == pytest.approx(0.29214, abs=5e-6)


def test_divergence_exit_code(tmp_path, tiny_config, monkeypatch, capsys):
    from risae import autoencoder

    def boom(*a, **k):
        raise autoencoder.TrainingDiverged("non-finite loss at iteration 3")

    monkeypatch.setattr(autoencoder, "train", boom)
    assert main(["train", "--config", str(tiny_config), "--out", str(tmp_path)]) == 3
    assert "diverged" in capsys.readouterr().err


# ------------------------------------------------------- curves and gains

def test_ser_curve_validation():
    with pytest.raises(ValueError):
        SerCurve("x", [(1.0, 0.1, 10, 1), (1.0, 0.05, 10, 1)])
    with pytest.raises(ValueError):
        SerCurve("x", [(1.0, 1.5, 10, 1)])
    with pytest.raises(ValueError):
        SerCurve("x", [(1.0, 0.5, 10, 11)])


def test_curve_csv_round_trip(tmp_path):
    curves = [SerCurve("a", [(0.0, 0.1, 1000, 100), (1.5, 1 / 3, 3, 1)]), SerCurve("b", [(2.0, 0.0, 10, 0)])]
    cli.write_curves(tmp_path / "c.csv", curves)
    back = cli.read_curves(tmp_path / "c.csv")
    assert back["a"].points == curves[0].points and back["b"].points == curves[1].points


def test_snr_at_ser_log_linear():
    c = SerCurve("c", [(0.0, 1e-1, 0, 0), (2.0, 1e-3, 0, 0), (4.0, 1e-4, 0, 0)])
    assert cli.snr_at_ser(c, 1e-2) == pytest.approx(1.0, abs=1e-12)
    assert cli.snr_at_ser(c, 1e-1) == 0.0
    assert cli.snr_at_ser(c, 10**-3.5) == pytest.approx(3.0, abs=1e-12)
    assert cli.snr_at_ser(c, 1e-5) is None
    assert cli.snr_at_ser(c, 0.5) is None
    assert cli.snr_at_ser(SerCurve("z", [(0.0, 1e-2, 0, 0), (1.0, 0.0, 0, 0)]), 1e-3) is None


def test_gain_arithmetic():
    curves = {
        "ris_ae_best": SerCurve("ris_ae_best", [(6.0, 1e-1, 0, 0), (8.0, 1e-2, 0, 0), (10.0, 1e-3, 0, 0)]),
        "direct_qpsk_lo6": SerCurve("direct_qpsk_lo6", [(12.0, 1e-1, 0, 0), (14.0, 1e-2, 0, 0)]),
    }
    rows = cli.compute_gains(curves, [1e-2, 1e-3], [6.0])
    assert rows[0] == (1e-2, 6.0, pytest.approx(6.0, abs=1e-12))
    assert rows[1] == (1e-3, 6.0, None)


@pytest.mark.parametrize("slope, shift", [(0.5, 3.0), (1.3, 7.25), (0.8, 0.0)])
def test_gain_exact_on_piecewise_log_linear_curves(slope, shift):
    # log10 SER = -slope * snr on both curves, direct link delayed by `shift` dB
    grid = np.arange(0.0, 20.0, 1.0)
    ris = SerCurve("ris_ae_best", [(s, 10 ** (-slope * s), 0, 0) for s in grid])
    direct = SerCurve("direct_qpsk_lo7", [(s + shift, 10 ** (-slope * s), 0, 0) for s in grid])
    for t in (10**-0.7, 1e-2, 10**-3.3):
        ((_, _, gain),) = cli.compute_gains({"ris_ae_best": ris, "direct_qpsk_lo7": direct}, [t], [7.0])
        assert gain == pytest.approx(shift, abs=1e-9)


def test_gains_csv_marks_unavailable(tmp_path):
    curves = [SerCurve("ris_ae_best", [(0.0, 0.2, 0, 0), (5.0, 1e-2, 0, 0)]),
              SerCurve("direct_qpsk_lo6", [(0.0, 0.5, 0, 0), (10.0, 1e-2, 0, 0)])]
    cli.write_curves(tmp_path / "ser.csv", curves)
    text = cli.cmd_gains(tmp_path / "ser.csv", tmp_path, [1e-1, 1e-4], [6.0]).read_text()
    lines = text.strip().split("\n")
    assert lines[2].endswith("unavailable")
    assert float(lines[1].split(",")[2]) > 0


def test_ser_interval():
    lo, hi = cli.ser_interval(50, 1000)
    assert lo < 0.05 < hi
    assert cli.ser_interval(0, 100)[0] == 0.0
