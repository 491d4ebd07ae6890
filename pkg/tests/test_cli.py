"""Experiment driver: configs, runs, persistence, evaluation, exit codes."""

import json
import math

import numpy as np
import pytest

from atmc import save_dataset, two_moons
from atmc.cli import (
    Config,
    build_sampler_config,
    derive_hyperparameters,
    main,
    parse_config_text,
)
from atmc.errors import ConfigError

GAUSS_CONFIG = """
# smoke target
target.kind = gaussian
target.dim = 2
sampler.method = atmc
sampler.h0 = 0.01
sampler.momentum_noise = 1.0
sampler.mass = 1.0
sampler.total_steps = 100
sampler.burn_in_steps = 10
sampler.collect = every:20
sampler.record_every = 50
sampler.seed = 3
"""


def write_config(tmp_path, text, name="run.cfg"):
    path = tmp_path / name
    path.write_text(text)
    return str(path)


def mlp_config(tmp_path, train_path, seed=1, steps=240, cycle=60, burn=120):
    return write_config(tmp_path, f"""
target.kind = mlp
target.dataset = {train_path}
target.widths = 2,8,2
sampler.method = atmc
sampler.h0 = 0.05
sampler.kinetics = hyperbolic
sampler.mass = 25.0
sampler.speed_cap = 0.2
sampler.momentum_noise = 2.0
sampler.schedule = cyclic
sampler.cycle_length = {cycle}
sampler.total_steps = {steps}
sampler.burn_in_steps = {burn}
sampler.batch_size = 16
sampler.seed = {seed}
""", name="mlp.cfg")


@pytest.fixture
def moons_files(tmp_path):
    x, y = two_moons(120, rng=77)
    train = tmp_path / "train.csv"
    test = tmp_path / "test.csv"
    save_dataset(train, x[:80], y[:80])
    save_dataset(test, x[80:], y[80:])
    return str(train), str(test)


class TestConfigParsing:
    def test_parses_flat_keys_and_comments(self):
        values = parse_config_text("a.b = 1  # comment\n\n# full comment\nc.d = x\n")
        assert values == {"a.b": "1", "c.d": "x"}

    def test_duplicate_keys_rejected(self):
        with pytest.raises(ConfigError, match="duplicate"):
            parse_config_text("a = 1\na = 2\n")

    def test_missing_field_named_in_error(self):
        cfg = Config(parse_config_text("sampler.method = atmc\n"))
        with pytest.raises(ConfigError, match="sampler.h0"):
            build_sampler_config(cfg)

    def test_bad_number_named_in_error(self):
        cfg = Config({"sampler.method": "atmc", "sampler.h0": "fast"})
        with pytest.raises(ConfigError, match="sampler.h0"):
            build_sampler_config(cfg)

    def test_auto_values_follow_conventions(self):
        cfg = Config(parse_config_text(
            "sampler.method = atmc\nsampler.h0 = 0.001\n"
            "sampler.kinetics = hyperbolic\nsampler.mass = auto\n"
            "sampler.speed_cap = auto\nsampler.momentum_noise = auto\n"
            "sampler.total_steps = 10\nsampler.burn_in_steps = 0\n"
        ))
        sc = build_sampler_config(cfg)
        assert sc.kinetics.mass == pytest.approx((0.0003 / 0.001) ** -2)
        assert sc.kinetics.speed_cap == pytest.approx(1.0)
        assert sc.momentum_noise == pytest.approx(-math.log(0.9) / 0.001)


class TestDeriveHypers:
    def test_reference_values_at_h0_678(self):
        values = derive_hyperparameters(0.001)
        assert values["m"] == pytest.approx(100.0 / 9.0, rel=1e-12)
        assert values["m"] == pytest.approx(11.111, rel=1e-4)
        assert values["c"] == pytest.approx(1.0, rel=1e-12)
        assert values["D"] == pytest.approx(105.361, rel=1e-5)
        assert abs(values["retention"] - 0.9) < 1e-12

    def test_retention_invariant_in_h0(self):
        for h0 in (0.001, 0.0005, 0.037):
            assert abs(derive_hyperparameters(h0)["retention"] - 0.9) < 1e-12

    def test_half_step_doubles_speed_cap(self):
        assert derive_hyperparameters(0.0005)["c"] == pytest.approx(2.0)

    def test_cli_output(self, capsys):
        assert main(["derive-hypers", "--h0", "0.001"]) == 0
        out = capsys.readouterr().out
        assert "m = 11.11111111111111" in out
        assert "c = 1.0" in out
        assert "D = 105.36051565782628" in out
        assert "retention = 0.9" in out


class TestSample:
    def test_smoke_run_writes_artifacts(self, tmp_path):
        config = write_config(tmp_path, GAUSS_CONFIG)
        outdir = tmp_path / "run1"
        assert main(["sample", "--config", config, "--outdir", str(outdir)]) == 0
        manifest = json.loads((outdir / "manifest.json").read_text())
        assert manifest["dimension"] == 2
        assert manifest["method"] == "atmc"
        assert len(manifest["snapshots"]) == 4  # steps 30, 50, 70, 90
        assert manifest["config_hash"]
        chain = (outdir / "chain.jsonl").read_text().strip().splitlines()
        assert all(json.loads(line) for line in chain)
        snap = np.frombuffer(
            (outdir / manifest["snapshots"][0]["file"]).read_bytes(), dtype="<f8"
        )
        assert snap.shape == (2,)

    def test_missing_dataset_exits_one_naming_field(self, tmp_path, capsys):
        config = write_config(tmp_path, """
target.kind = mlp
target.dataset = /nonexistent/data.csv
target.widths = 2,4,2
sampler.method = atmc
sampler.h0 = 0.01
sampler.total_steps = 10
sampler.burn_in_steps = 0
""")
        code = main(["sample", "--config", config, "--outdir", str(tmp_path / "x")])
        assert code == 1
        assert "target.dataset" in capsys.readouterr().err

    def test_rerun_refuses_without_force(self, tmp_path, capsys):
        config = write_config(tmp_path, GAUSS_CONFIG)
        outdir = str(tmp_path / "run")
        assert main(["sample", "--config", config, "--outdir", outdir]) == 0
        assert main(["sample", "--config", config, "--outdir", outdir]) == 1
        assert "--force" in capsys.readouterr().err
        assert main(["sample", "--config", config, "--outdir", outdir, "--force"]) == 0

    def test_same_seed_byte_identical_chain(self, tmp_path):
        config = write_config(tmp_path, GAUSS_CONFIG)
        out1, out2 = str(tmp_path / "a"), str(tmp_path / "b")
        assert main(["sample", "--config", config, "--outdir", out1]) == 0
        assert main(["sample", "--config", config, "--outdir", out2]) == 0
        assert (tmp_path / "a" / "chain.jsonl").read_bytes() == \
               (tmp_path / "b" / "chain.jsonl").read_bytes()
        assert (tmp_path / "a" / "manifest.json").read_bytes() == \
               (tmp_path / "b" / "manifest.json").read_bytes()

    def test_seed_flag_changes_chain(self, tmp_path):
        config = write_config(tmp_path, GAUSS_CONFIG)
        out1, out2 = str(tmp_path / "a"), str(tmp_path / "b")
        assert main(["sample", "--config", config, "--outdir", out1]) == 0
        assert main(["sample", "--config", config, "--outdir", out2, "--seed", "99"]) == 0
        assert (tmp_path / "a" / "chain.jsonl").read_bytes() != \
               (tmp_path / "b" / "chain.jsonl").read_bytes()

    def test_numerical_abort_exits_two(self, tmp_path, capsys):
        # a constant-noise thermostat started at a huge negative temperature
        # amplifies the momentum by e^{|beta| h} per step until it overflows
        config = write_config(tmp_path, """
target.kind = gaussian
target.dim = 1
sampler.method = sgnht
sampler.h0 = 1.0
sampler.momentum_noise = 1.0
sampler.initial_temperature = -1e6
sampler.initial_momentum = 1.0
sampler.total_steps = 100
sampler.burn_in_steps = 0
""")
        code = main(["sample", "--config", config, "--outdir", str(tmp_path / "boom")])
        assert code == 2


class TestEvaluate:
    def test_single_member_rows_identical(self, tmp_path, moons_files, capsys):
        train, test = moons_files
        config = mlp_config(tmp_path, train, steps=120, cycle=60, burn=60)
        run = str(tmp_path / "run")
        assert main(["sample", "--config", config, "--outdir", run]) == 0
        assert main(["evaluate", "--run", run, "--dataset", test]) == 0
        table = (tmp_path / "run" / "evaluation.txt").read_text()
        lines = [l for l in table.splitlines() if l.startswith("ATMC")]
        single = lines[-2].split()[-2:]
        predictive = lines[-1].split()[-2:]
        assert single == predictive

    def test_predictive_beats_mean_single_sample(self, tmp_path, moons_files):
        train, test = moons_files
        config = mlp_config(tmp_path, train, steps=360, cycle=60, burn=120)
        run = str(tmp_path / "run")
        assert main(["sample", "--config", config, "--outdir", run]) == 0
        assert main(["evaluate", "--run", run, "--dataset", test]) == 0
        table = (tmp_path / "run" / "evaluation.txt").read_text()
        predictive_nll = float([l for l in table.splitlines()
                                if "posterior predictive" in l][0].split()[-1])
        mean_nll = float([l for l in table.splitlines()
                          if l.startswith("mean single-sample")][0].split()[-1])
        assert predictive_nll <= mean_nll + 1e-12
        assert (tmp_path / "run" / "calibration.csv").read_text().splitlines()[-1] \
            .startswith("ece,")

    def test_method_name_labels_rows(self, tmp_path, moons_files, capsys):
        train, test = moons_files
        config = mlp_config(tmp_path, train, steps=120, cycle=60, burn=60)
        run = str(tmp_path / "run")
        main(["sample", "--config", config, "--outdir", run])
        main(["evaluate", "--run", run, "--dataset", test])
        out = capsys.readouterr().out
        assert "ATMC (posterior predictive)" in out
        assert "ATMC (single sample)" in out

    def test_per_sample_rows(self, tmp_path, moons_files, capsys):
        train, test = moons_files
        config = mlp_config(tmp_path, train, steps=240, cycle=60, burn=120)
        run = str(tmp_path / "run")
        main(["sample", "--config", config, "--outdir", run])
        main(["evaluate", "--run", run, "--dataset", test, "--per-sample"])
        out = capsys.readouterr().out
        sample_rows = [l for l in out.splitlines() if "(sample step=" in l]
        assert len(sample_rows) == 2  # cycle ends at steps 180 and 240

    def test_mismatched_target_hashes_refused(self, tmp_path, moons_files, capsys):
        train, test = moons_files
        run_a, run_b = str(tmp_path / "ra"), str(tmp_path / "rb")
        main(["sample", "--config", mlp_config(tmp_path, train, steps=120, cycle=60,
                                               burn=60), "--outdir", run_a])
        other = mlp_config(tmp_path, train, steps=120, cycle=60, burn=60)
        text = open(other).read().replace("target.widths = 2,8,2",
                                          "target.widths = 2,4,2")
        other2 = tmp_path / "mlp2.cfg"
        other2.write_text(text)
        main(["sample", "--config", str(other2), "--outdir", run_b])
        code = main(["evaluate", "--run", run_a, "--run", run_b, "--dataset", test])
        assert code == 1
        assert "target" in capsys.readouterr().err

    def test_evaluate_deterministic(self, tmp_path, moons_files):
        train, test = moons_files
        config = mlp_config(tmp_path, train, steps=120, cycle=60, burn=60)
        run = str(tmp_path / "run")
        main(["sample", "--config", config, "--outdir", run])
        main(["evaluate", "--run", run, "--dataset", test])
        first = (tmp_path / "run" / "evaluation.txt").read_bytes()
        first_cal = (tmp_path / "run" / "calibration.csv").read_bytes()
        main(["evaluate", "--run", run, "--dataset", test])
        assert (tmp_path / "run" / "evaluation.txt").read_bytes() == first
        assert (tmp_path / "run" / "calibration.csv").read_bytes() == first_cal

    def test_no_runs_exits_nonzero(self, tmp_path, capsys):
        empty = tmp_path / "empty"
        empty.mkdir()
        code = main(["evaluate", "--run", str(empty)])
        assert code != 0


class TestCalibrate:
    def test_report_from_predictions_file(self, tmp_path, capsys):
        rng = np.random.default_rng(5)
        n = 64
        conf = rng.uniform(0.5, 1.0, n)
        correct = rng.uniform(size=n) < conf
        rows = []
        for c, ok in zip(conf, correct):
            label = 0 if ok else 1
            rows.append(f"{float(c)!r},{float(1 - c)!r},{label}")
        path = tmp_path / "preds.csv"
        path.write_text("\n".join(rows) + "\n")
        out_path = tmp_path / "cal.csv"
        assert main(["calibrate", "--predictions", str(path), "--out", str(out_path)]) == 0
        text = out_path.read_text().strip().splitlines()
        assert len(text) == 9
        assert text[-1].startswith("ece,")
        assert capsys.readouterr().out.strip().splitlines() == text

    def test_unreadable_file_exits_three(self, tmp_path):
        assert main(["calibrate", "--predictions", str(tmp_path / "nope.csv")]) == 3


class TestScheduleDump:
    def test_prints_cycle(self, capsys):
        assert main(["schedule-dump", "--h0", "0.001", "--cycle-length", "100",
                     "--steps", "101"]) == 0
        lines = capsys.readouterr().out.strip().splitlines()
        assert len(lines) == 101
        first_step, first_h = lines[0].split()
        assert first_step == "0" and float(first_h) == 0.001
        assert float(lines[50].split()[1]) == pytest.approx(0.0005)
        assert float(lines[100].split()[1]) == 0.001  # new cycle restarts

    def test_constant_schedule(self, capsys):
        main(["schedule-dump", "--h0", "0.5", "--steps", "3"])
        values = {float(l.split()[1]) for l in capsys.readouterr().out.strip().splitlines()}
        assert values == {0.5}
