import csv
import json
import os
import struct
import subprocess
import sys

import numpy as np
import pytest

from prunefl.harness import cli
from prunefl.harness.channels import ChannelSpec, fading_samples, path_gain, sample_channels
from prunefl.harness.config import OUTPUT_ENV, ConfigError, load_config, parse_config, parse_quantity
from prunefl.harness.idx import IdxParseError, load_idx, load_idx_dataset, parse_idx, write_idx
from prunefl.harness.sweep import AGG_COLUMNS, run_sweep
from prunefl.harness.train import run_fl


def _idx_header(magic, *dims):
    return struct.pack(">I", magic) + struct.pack(f">{len(dims)}I", *dims)


class TestIdx:
    def test_empty_file(self, tmp_path):
        (tmp_path / "l").write_bytes(_idx_header(0x801, 0))
        (tmp_path / "i").write_bytes(_idx_header(0x803, 0, 28, 28))
        ds = load_idx_dataset(tmp_path / "i", tmp_path / "l")
        assert len(ds) == 0 and ds.images.shape == (0, 784)

    def test_hand_built_fixture(self, tmp_path):
        pixels = bytes(range(0, 255, 14))[:18]
        (tmp_path / "img").write_bytes(_idx_header(0x803, 2, 3, 3) + pixels)
        (tmp_path / "lab").write_bytes(_idx_header(0x801, 2) + bytes([7, 2]))
        img = load_idx(tmp_path / "img")
        assert img.shape == (2, 3, 3)
        np.testing.assert_array_equal(img.ravel() * 255, list(pixels))
        np.testing.assert_array_equal(load_idx(tmp_path / "lab"), [7, 2])

    def test_round_trip_gzip(self, tmp_path):
        arr = np.random.default_rng(0).integers(0, 256, (4, 5, 6)).astype(np.uint8)
        write_idx(tmp_path / "a.gz", arr, compress=True)
        assert (tmp_path / "a.gz").read_bytes()[:2] == b"\x1f\x8b"
        np.testing.assert_array_equal(load_idx(tmp_path / "a.gz") * 255, arr)
        floats = np.linspace(-1, 1, 6).reshape(2, 3)
        write_idx(tmp_path / "f", floats)
        np.testing.assert_array_equal(load_idx(tmp_path / "f"), floats)

    def test_bad_magic(self):
        with pytest.raises(IdxParseError) as err:
            parse_idx(b"\x01\x00\x08\x01" + b"\x00" * 8)
        assert err.value.offset == 0

    def test_truncated(self):
        with pytest.raises(IdxParseError) as err:
            parse_idx(_idx_header(0x803, 2, 3, 3) + b"\x00" * 10)
        assert err.value.offset == 16 + 10
        with pytest.raises(IdxParseError):
            parse_idx(b"\x00\x00\x08\x03\x00\x00")
        with pytest.raises(IdxParseError):
            parse_idx(b"\x00")

    def test_mnist_fixture(self, mnist_idx):
        train = load_idx_dataset(mnist_idx["train_images"], mnist_idx["train_labels"])
        test = load_idx_dataset(mnist_idx["test_images"], mnist_idx["test_labels"])
        assert len(train) == 4000 and len(test) == 1000
        assert train.images.shape[1] == 784
        assert 0.0 <= train.images.min() and train.images.max() == 1.0
        assert set(np.unique(test.labels)) == set(range(10))

    @pytest.mark.skipif(not os.environ.get("MNIST_TEST_IMAGES"), reason="official t10k files not available")
    def test_official_mnist_test_file(self):
        labels = load_idx(os.environ["MNIST_TEST_LABELS"])
        images = load_idx(os.environ["MNIST_TEST_IMAGES"])
        assert len(labels) == len(images) == 10000
        assert labels[0] == 7


class TestChannels:
    def test_equal_distances_equal_gains(self):
        spec = ChannelSpec(num_ues=4, min_distance=200.0, cell_radius=200.0)
        draw = sample_channels(spec, 1)
        assert np.all(draw.uplink == draw.uplink[0])
        assert draw.uplink[0] == pytest.approx(10 ** (-(128.1 + 37.6 * np.log10(0.2)) / 10))

    def test_reproducible(self):
        spec = ChannelSpec(num_ues=6, fading=True)
        a, b = sample_channels(spec, 42), sample_channels(spec, 42)
        np.testing.assert_array_equal(a.uplink, b.uplink)
        assert not np.array_equal(a.uplink, sample_channels(spec, 43).uplink)

    def test_fading_mean(self):
        assert abs(fading_samples(10_000, 0).mean() - 1.0) <= 0.05

    def test_non_reciprocal(self):
        draw = sample_channels(ChannelSpec(num_ues=3, fading=True, reciprocal=False), 0)
        assert not np.array_equal(draw.uplink, draw.downlink)

    def test_path_gain_decreasing(self):
        g = path_gain(np.array([50.0, 100.0, 400.0]), ChannelSpec())
        assert np.all(np.diff(g) < 0)

    def test_invalid(self):
        with pytest.raises(ValueError):
            ChannelSpec(min_distance=600.0)


class TestConfig:
    @pytest.mark.parametrize("text, dim, expect", [
        ("23 dBm", "power", 0.19952623149688797),
        ("15 MHz", "frequency", 15e6),
        ("1.6 Mbit", "bits", 1.6e6),
        ("0.168 GHz", "cycles", 0.168e9),
        ("-174 dBm/Hz", "psd", 10 ** (-17.4) / 1000),
        ("3 dB", "ratio", 10 ** 0.3),
        ("2.5", "frequency", 2.5),
        (4, "bits", 4.0),
    ])
    def test_quantities(self, text, dim, expect):
        assert parse_quantity(text, dim) == pytest.approx(expect, rel=1e-12)

    @pytest.mark.parametrize("text, dim", [("23 dBm", "frequency"), ("5 furlongs", "bits"), ("fast", "time"),
                                           (True, "bits"), ([1], "bits"), ("1e999", "bits")])
    def test_bad_quantities(self, text, dim):
        with pytest.raises(ConfigError):
            parse_quantity(text, dim)

    def test_defaults_reproduce_reference(self):
        cfg = parse_config({})
        p = cfg.params(0)
        assert p.num_ues == 5
        assert p.total_bandwidth_B == 15e6 and p.model_bits_DM == 1.6e6 and p.lam == 4e-4
        assert list(p.K) == [30, 40, 50, 30, 40]
        assert cfg.defaults_used == ["agg_latency", "bs_tx_power", "m0_is_db", "m_const"]

    def test_m0_db_flag(self):
        assert parse_config({"scenario": {"m0_is_db": True}}).params(0).waterfall_m0 == pytest.approx(10 ** 0.0023)
        cfg = parse_config({"scenario": {"waterfall_m0": "0.023 dB"}})
        assert cfg.params(0).metadata["m0_interpretation"] == "dB->linear"

    @pytest.mark.parametrize("raw", [
        {"bogus": 1},
        {"scenario": {"tx_power": "23 MHz"}},
        {"scenario": {"colour": "red"}},
        {"sweep": {"variable": "weather", "values": [1]}},
        {"sweep": {"variable": "lambda", "values": []}},
        {"policies": ["magic"]},
        {"seeds": "many"},
        {"solver": {"max_outer_iters": 0}},
        {"scenario": {"lambda": 2.0}},
        {"scenario": {"num_ues": 3, "samples": [1, 2]}},
        {"fl": {"epochs": 3}},
        {"channel": {"colour": 1}},
        {"output": {"workers": 0}},
    ])
    def test_errors(self, raw):
        with pytest.raises(ConfigError):
            parse_config(raw)

    def test_hash_and_env(self, tmp_path, monkeypatch):
        a = parse_config({"seeds": 3})
        assert a.config_hash == parse_config({"seeds": 3}).config_hash != parse_config({"seeds": 4}).config_hash
        monkeypatch.setenv(OUTPUT_ENV, str(tmp_path / "env"))
        assert parse_config({"output": {"directory": "x"}}).output_dir == tmp_path / "env"

    def test_load_file(self, tmp_path):
        (tmp_path / "c.json").write_text(json.dumps({"fl": {"train_images": "data/x"}}))
        cfg = load_config(tmp_path / "c.json")
        assert cfg.fl.train_images == str(tmp_path / "data/x")
        with pytest.raises(ConfigError):
            load_config(tmp_path / "missing.json")
        (tmp_path / "bad.json").write_text("{")
        with pytest.raises(ConfigError):
            load_config(tmp_path / "bad.json")


def _sweep_cfg(tmp_path, **kw):
    raw = {"seeds": 3, "output": {"directory": str(tmp_path)}}
    raw.update(kw)
    return parse_config(raw)


class TestSweep:
    def test_single_row(self, tmp_path):
        rows, per_seed = run_sweep(_sweep_cfg(tmp_path, policies=["proposed"]))
        assert len(rows) == 1 and len(per_seed) == 3
        assert rows[0].status == "ok" and rows[0].seeds == "0-2"
        assert rows[0].metadata["config_hash"] and rows[0].metadata["m0_interpretation"] == "linear"

    def test_lambda_endpoints(self, tmp_path):
        cfg = _sweep_cfg(tmp_path, policies=["proposed"], sweep={"variable": "lambda", "values": [0.0, 4e-4, 1.0]})
        rows, _ = run_sweep(cfg, write=False)
        lat = [r.latency_term for r in rows]
        learn = [r.learning_term for r in rows]
        assert lat[0] == min(lat) and learn[-1] == min(learn)

    def test_csv_layout_and_reproducibility(self, tmp_path):
        sweep = {"variable": "tx_power", "values": ["17 dBm", "23 dBm"]}
        run_sweep(_sweep_cfg(tmp_path / "a", sweep=sweep))
        run_sweep(_sweep_cfg(tmp_path / "b", sweep=sweep))
        for name in ("sweep_tx_power.csv", "sweep_tx_power_seeds.csv"):
            assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()
        with open(tmp_path / "a" / "sweep_tx_power.csv", newline="", encoding="utf-8") as fh:
            table = list(csv.reader(fh))
        assert table[0] == AGG_COLUMNS
        assert len(table) == 1 + 2 * 5
        assert all(len(row) == len(AGG_COLUMNS) for row in table)
        assert all(row[AGG_COLUMNS.index("config_hash")] for row in table[1:])

    def test_parallel_matches_serial(self, tmp_path):
        sweep = {"variable": "model_bits", "values": ["0.4 Mbit", "2.4 Mbit"]}
        serial, _ = run_sweep(_sweep_cfg(tmp_path, sweep=sweep), write=False)
        cfg = _sweep_cfg(tmp_path, sweep=sweep, output={"directory": str(tmp_path), "workers": 2})
        parallel, _ = run_sweep(cfg, write=False)
        assert [r.total_cost for r in serial] == [r.total_cost for r in parallel]

    def test_infeasible_rows_flagged(self, tmp_path):
        cfg = _sweep_cfg(tmp_path, policies=["fpr(0.7)", "proposed"], sweep={"variable": "rho_max", "values": [0.5]})
        rows, _ = run_sweep(cfg, write=False)
        assert rows[0].status == "infeasible" and rows[0].total_cost is None and rows[0].seed_count == 0
        assert rows[1].status == "ok"

    def test_exhaustive_size_guard(self, tmp_path):
        cfg = _sweep_cfg(tmp_path, policies=["exhaustive"], seeds=1, solver={"rho_grid": 10, "bw_grid": 10})
        rows, _ = run_sweep(cfg, write=False)
        assert rows[0].status == "skipped_size_guard"
        small = _sweep_cfg(tmp_path, policies=["exhaustive", "proposed"], seeds=1,
                           scenario={"num_ues": 2}, solver={"rho_grid": 10, "bw_grid": 10})
        rows, _ = run_sweep(small, write=False)
        assert rows[0].status == "ok" and rows[0].total_cost >= rows[1].total_cost * 0.9


class TestTrain:
    def test_synthetic_run_writes_csv(self, tmp_path):
        cfg = parse_config({"fl": {"rounds": 3, "seeds": 2, "train_size": 300, "test_size": 50,
                                   "policies": ["ideal", "fpr(0.35)"]},
                            "output": {"directory": str(tmp_path)}})
        summaries, traces = run_fl(cfg)
        assert [s.policy for s in summaries] == ["ideal", "fpr(0.35)"]
        assert len(traces) == 4
        rows = (tmp_path / "train_trace.csv").read_text().splitlines()
        assert len(rows) == 1 + 4 * 4
        assert "synthetic gaussian blobs" in rows[1]

    def test_idx_run(self, tmp_path, mnist_idx):
        cfg = parse_config({"fl": dict(mnist_idx, rounds=2, seeds=1, train_size=300, test_size=100,
                                       policies=["proposed"]),
                            "output": {"directory": str(tmp_path)}})
        summaries, traces = run_fl(cfg, write=False)
        assert traces[0].rounds == 2 and 0 <= summaries[0].mean_accuracy_final <= 1

    def test_partial_paths(self, mnist_idx):
        cfg = parse_config({"fl": {"train_images": mnist_idx["train_images"]}})
        with pytest.raises(ConfigError):
            run_fl(cfg, write=False)


class TestCli:
    def test_solve(self, capsys):
        assert cli.main(["solve", "--seed", "3"]) == 0
        out = json.loads(capsys.readouterr().out)
        assert len(out["rho"]) == 5 and out["metadata"]["channel_seed"] == 3
        assert sum(out["bandwidth_hz"]) <= 15e6

    def test_oracle_small(self, tmp_path, capsys):
        path = tmp_path / "c.json"
        path.write_text(json.dumps({"scenario": {"num_ues": 2}, "solver": {"rho_grid": 20, "bw_grid": 20}}))
        assert cli.main(["oracle", "--config", str(path)]) == 0
        assert json.loads(capsys.readouterr().out)["ratio"] <= 1.02

    def test_sweep_writes_out(self, tmp_path, capsys):
        path = tmp_path / "c.json"
        path.write_text(json.dumps({"seeds": 2, "policies": ["proposed", "gba"],
                                    "sweep": {"variable": "lambda", "values": [1e-4, 1e-3]}}))
        assert cli.main(["sweep", "--config", str(path), "--out", str(tmp_path / "o")]) == 0
        assert (tmp_path / "o" / "sweep_lambda.csv").exists()

    def test_config_error(self, tmp_path):
        (tmp_path / "c.json").write_text('{"scenario": {"tx_power": "3 parsecs"}}')
        assert cli.main(["solve", "--config", str(tmp_path / "c.json")]) == 1

    def test_size_guard_is_config_error(self):
        assert cli.main(["oracle"]) == 1

    def test_infeasible(self, tmp_path):
        (tmp_path / "c.json").write_text(json.dumps({"scenario": {"num_ues": 2}, "solver": {"bw_grid": 1}}))
        assert cli.main(["oracle", "--config", str(tmp_path / "c.json")]) == 2

    def test_internal_error(self, monkeypatch):
        def boom(cfg):
            raise RuntimeError("bug")
        monkeypatch.setitem(cli.COMMANDS, "solve", boom)
        assert cli.main(["solve"]) == 3

    def test_module_entry(self):
        res = subprocess.run([sys.executable, "-m", "prunefl", "solve", "--seed", "1"],
                             capture_output=True, text=True, check=False)
        assert res.returncode == 0 and json.loads(res.stdout)["converged"]
