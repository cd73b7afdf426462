"""Config parsing, artifact emission and the exit-code contract."""

import json
from pathlib import Path

import numpy as np
import pytest

from rvbatch.cli import main
from rvbatch.experiments import ConfigError, ExperimentConfig, parse_config, run_experiment
from rvbatch.models import DiffusionVariant, KernelVariant


class TestParseConfig:
    def test_preset_defaults_resolve(self):
        cfg = parse_config(None, preset="test1a")
        base, methods = cfg.resolve()
        assert base.model.kernel.variant is KernelVariant.BOUNDED_CONFIDENCE
        assert base.model.kernel.delta == 1.0
        assert base.n == 10_000 and base.m == 10 and base.t_end == 5.0
        assert methods == ("rbm", "rvrbm")

    def test_test2_has_multiplicative_noise(self):
        base, _ = parse_config(None, preset="test2").resolve()
        assert base.model.diffusion.variant is DiffusionVariant.OPINION_MULTIPLICATIVE
        assert base.model.diffusion.sigma2 == 0.1

    def test_test3_partition_scheme_and_phase_space(self):
        base, _ = parse_config(None, preset="test3").resolve()
        assert base.batch_scheme == "partition"
        assert base.model.dim_x == 1
        assert base.model.kernel.xi == 1.0 and base.model.kernel.beta == 0.1
        assert base.cv.lambda_mode == "per_particle"

    def test_batch_size_error_names_both_values(self):
        cfg = parse_config(None, preset="test1a", n=10, m=20)
        with pytest.raises(ConfigError, match="m=20.*n=10"):
            cfg.resolve()

    def test_empty_file_rejected(self, tmp_path):
        p = tmp_path / "empty.cfg"
        p.write_text("")
        with pytest.raises(ConfigError, match="no preset and no model"):
            parse_config(str(p))

    def test_unknown_key_named(self, tmp_path):
        p = tmp_path / "bad.cfg"
        p.write_text("[sim]\nn = 100\nwarp = 9\n")
        with pytest.raises(ConfigError, match="warp"):
            parse_config(str(p))

    def test_unknown_section_named(self, tmp_path):
        p = tmp_path / "bad2.cfg"
        p.write_text("[outputs]\ndir = x\n")
        with pytest.raises(ConfigError, match="outputs"):
            parse_config(str(p))

    def test_file_values_and_flag_override(self, tmp_path):
        p = tmp_path / "exp.cfg"
        p.write_text(
            "[experiment]\npreset = test1a\nseed = 5\n"
            "[sim]\nn = 500\nm = 5\nt_end = 0.5\n"
            "[sweep]\naxis = n\nvalues = 100, 200\n"
            "[output]\ndir = from_file\nplots = false\n"
        )
        cfg = parse_config(str(p), n=800)
        assert cfg.n == 800  # flag wins
        assert cfg.seed == 5 and cfg.sweep == ("n", (100.0, 200.0))
        assert cfg.plots is False and cfg.outdir == Path("from_file")

    def test_unknown_preset(self):
        with pytest.raises(ConfigError, match="bogus"):
            parse_config(None, preset="bogus").resolve()

    def test_custom_requires_kernel(self):
        with pytest.raises(ConfigError, match="kernel"):
            parse_config(None, preset="custom").resolve()


class TestRunExperiment:
    def test_artifacts_written(self, tmp_path):
        cfg = parse_config(
            None, preset="test1a", n=300, m=5, t_end=0.3, seed=1,
            outdir=tmp_path, snapshot_times=(0.3,), plots=True,
        )
        written = run_experiment(cfg)
        for key in ("manifest", "series_rbm", "series_rvrbm",
                    "density_rbm_t0.3", "density_rvrbm_t0.3", "fig_error"):
            assert key in written and Path(written[key]).exists(), key
        manifest = json.loads((tmp_path / "manifest.json").read_text())
        assert manifest["resolved_sim"]["n"] == 300
        assert manifest["methods"] == ["rbm", "rvrbm"]
        header = (tmp_path / "series_rbm.csv").read_text().splitlines()[0]
        assert header == "t,mean,variance,error,lambda_mean,clamp_count,clip_count"

    def test_rerun_bytes_identical(self, tmp_path):
        out1, out2 = tmp_path / "a", tmp_path / "b"
        for out in (out1, out2):
            cfg = parse_config(None, preset="test1a", n=400, m=5, t_end=0.2,
                               seed=3, outdir=out, plots=False)
            run_experiment(cfg)
        for name in ("series_rbm.csv", "series_rvrbm.csv"):
            assert (out1 / name).read_bytes() == (out2 / name).read_bytes()

    def test_sweep_summary(self, tmp_path):
        cfg = parse_config(None, preset="test1a", t_end=0.0, m=5,
                           sweep=("n", (50.0, 100.0)), repeats=3,
                           outdir=tmp_path, plots=False,
                           error_reference="law")
        written = run_experiment(cfg)
        assert "summary" in written
        lines = (tmp_path / "summary.csv").read_text().splitlines()
        assert lines[0] == "axis,value,method,repeats,error_mean,error_rms,ci_lo,ci_hi"
        assert len(lines) == 1 + 2 * 2  # two axis values x two methods

    def test_manifest_written_for_sweep(self, tmp_path):
        cfg = parse_config(None, preset="test1a", t_end=0.0, m=5,
                           sweep=("m", (2.0, 5.0)), repeats=2, n=100,
                           outdir=tmp_path, plots=False)
        run_experiment(cfg)
        manifest = json.loads((tmp_path / "manifest.json").read_text())
        assert manifest["experiment"]["sweep"] == [["m"], [2.0, 5.0]] or \
            manifest["experiment"]["sweep"] == ["m", [2.0, 5.0]]


class TestPresetBehavior:
    def test_test3_lambda_decays_from_initial_value(self):
        # transport decorrelates the surrogate from the true interaction,
        # so the average per-particle weight falls from its early value
        from dataclasses import replace

        import rvbatch as rb

        base, _ = parse_config(None, preset="test3", n=10_000, m=10, dt=0.05).resolve()
        out = rb.run(replace(base, method="rvrbm", snapshot_times=()))
        lam = out.lambda_mean[np.isfinite(out.lambda_mean)]
        assert lam.size > 10
        assert lam[-1] < lam[0]
        assert lam[0] > 0.5  # starts well correlated


class TestCliMain:
    def test_exit_codes(self, tmp_path):
        assert main(["run", "--preset", "nope", "--out", str(tmp_path)]) == 1
        assert main(["run", "--out", str(tmp_path)]) == 1
        assert main(["run", "--preset", "test1a", "--n", "10", "--m", "20",
                     "--out", str(tmp_path)]) == 1

    def test_happy_path(self, tmp_path, capsys):
        rc = main(["run", "--preset", "test1a", "--n", "200", "--m", "5",
                   "--t-end", "0.1", "--out", str(tmp_path), "--no-plots"])
        assert rc == 0
        assert (tmp_path / "series_rvrbm.csv").exists()
        assert "series_rvrbm" in capsys.readouterr().out

    def test_flag_plumbing_surrogate_and_delta(self, tmp_path):
        rc = main(["run", "--preset", "test1a", "--n", "200", "--m", "5",
                   "--t-end", "0.1", "--delta", "0.5", "--surrogate", "parabolic",
                   "--out", str(tmp_path), "--no-plots"])
        assert rc == 0
        manifest = json.loads((tmp_path / "manifest.json").read_text())
        assert manifest["resolved_sim"]["model"]["kernel"]["delta"] == 0.5
        assert manifest["resolved_sim"]["cv"]["surrogate"]["variant"] == "parabolic"
