import json
import math
import subprocess
import sys

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from raman_decoherence import cli, scan
from raman_decoherence import config as configmod
from raman_decoherence.fitting import fit as real_fit

SMALL_COLLIDE = "[collisions]\nn_trajectories = 60\nn_groups = 6\n"


def run(tmp_path, *args, config=None):
    argv = list(args)
    if config is not None:
        path = tmp_path / "run.ini"
        path.write_text(config)
        argv += ["--config", str(path)]
    return cli.main(argv)


@pytest.fixture(scope="module")
def synth_file(tmp_path_factory):
    out = tmp_path_factory.mktemp("synth") / "trace.tsv"
    assert cli.main(["synth", "--out", str(out)]) == 0
    return out


class TestConfig:
    def test_defaults_are_reference_values(self):
        cfg = configmod.defaults()
        assert cfg["etalon"]["fsr"] == 5.0 and cfg["etalon"]["fwhm"] == 0.48
        assert cfg["channel"]["hyperfine_ground_split"] == 6.834
        assert cfg["channel"]["excited_split"] == 0.812
        assert cfg["channel"]["write_detuning"] == 0.8
        assert cfg["scan"]["amplitude_A"] == 0.35 and cfg["scan"]["n_cycles_per_point"] == 4000
        assert cfg["collisions"]["pressure"] == 7.0 and cfg["collisions"]["gamma"] == 3.6e7
        assert cfg.gamma_c() == pytest.approx(4.9e7)

    def test_round_trip_exact(self):
        text = configmod.dumps(configmod.defaults())
        assert configmod.dumps(configmod.loads(text)) == text

    @given(
        st.floats(0.3, 3.0),
        st.floats(0.1, 2.0),
        st.floats(0.0, 1.0),
        st.integers(0, 2**31),
    )
    def test_round_trip_values(self, det, dop, a, seed):
        text = (
            f"[channel]\nwrite_detuning = {det!r}\ndoppler_fwhm = {dop!r}\n"
            f"[scan]\namplitude_A = {a!r}\nseed = {seed}\n"
        )
        cfg = configmod.loads(text)
        again = configmod.loads(configmod.dumps(cfg))
        assert again.values == cfg.values
        assert again["channel"]["write_detuning"] == det

    def test_unknown_key(self):
        with pytest.raises(configmod.ConfigError, match="unknown key 'fsrr'"):
            configmod.loads("[etalon]\nfsrr = 5\n")
        with pytest.raises(configmod.ConfigError, match="unknown section"):
            configmod.loads("[optics]\nfsr = 5\n")

    @pytest.mark.parametrize(
        "text,needle",
        [
            ("[etalon]\nfsr = -1\n", "fsr"),
            ("[etalon]\nfwhm = 6\n", "fwhm"),
            ("[scan]\nn_cycles_per_point = 50\n", ">= 100"),
            ("[scan]\nsaturating = maybe\n", "saturating"),
            ("[fit]\nfree = coherent_amplitude, nonsense\n", "free"),
            ("[collisions]\ngamma_c = fast\n", "gamma_c"),
            ("[collisions]\ndt = 1e-9\n", "dt <"),
        ],
    )
    def test_range_checks(self, text, needle):
        with pytest.raises(configmod.ConfigError, match=needle):
            configmod.loads(text)

    def test_gamma_c_explicit_and_auto(self):
        assert configmod.loads("[collisions]\ngamma_c = 0\n").gamma_c() == 0.0
        assert configmod.loads("[collisions]\npressure = 0.2\n").gamma_c() == pytest.approx(1.4e6)


class TestTraceFormat:
    def test_header_and_rows(self, synth_file):
        lines = synth_file.read_text().splitlines()
        assert lines[0].startswith("# raman_decoherence")
        header = next(i for i, l in enumerate(lines) if not l.startswith("#"))
        assert lines[header].split("\t") == list(scan.COLUMNS)
        assert len(lines) - header - 1 == 501
        assert any(l.startswith("# config write_detuning = 0.8") for l in lines)

    def test_embedded_config_round_trips(self, synth_file):
        cfg_lines = [l[len(cli.CONFIG_PREFIX):] for l in synth_file.read_text().splitlines() if l.startswith(cli.CONFIG_PREFIX)]
        embedded = "\n".join(cfg_lines) + "\n"
        assert configmod.dumps(configmod.loads(embedded)) == configmod.dumps(configmod.defaults())

    def test_parse_round_trip(self, synth_file):
        trace = cli.parse_trace(synth_file.read_text())
        assert trace.n_cycles == 4000
        assert trace.provenance["amplitude_A"] == 0.35
        again = cli.format_trace(trace, configmod.defaults())
        assert again == synth_file.read_text()

    def test_column_order_free(self):
        text = "g2_sigma\tg2\tmean_counts\tfrequency_ghz\textra\n0.1\t1.2\t0.05\t0.0\tx\n"
        with pytest.raises(cli.InputError, match="line 2"):
            cli.parse_trace(text)
        text = "g2_sigma\tg2\tmean_counts\tfrequency_ghz\n0.1\t1.2\t0.05\t0.0\n0.1\t1.1\t0.04\t0.5\n"
        trace = cli.parse_trace(text)
        assert np.array_equal(trace.frequency, [0.0, 0.5]) and trace.g2[0] == 1.2


class TestSynth:
    def test_fsr_violation(self, tmp_path, capsys):
        code = run(tmp_path, "synth", "--out", str(tmp_path / "o.tsv"), config="[etalon]\nfsr = -1\n")
        assert code == 2
        err = capsys.readouterr().err
        assert "fsr" in err and "> 0" in err

    def test_byte_identical(self, tmp_path):
        outs = []
        for k in range(2):
            out = tmp_path / f"o{k}.tsv"
            assert run(tmp_path, "synth", "--out", str(out), "--seed", "17") == 0
            outs.append(out.read_bytes())
        assert outs[0] == outs[1]

    def test_seed_override(self, tmp_path, synth_file):
        out = tmp_path / "seeded.tsv"
        assert run(tmp_path, "synth", "--out", str(out), "--seed", "5") == 0
        text = out.read_text()
        assert "# provenance seed = 5" in text and "# config seed = 5" in text
        assert text != synth_file.read_text()

    def test_io_failure(self, tmp_path):
        assert run(tmp_path, "synth", "--out", str(tmp_path / "missing" / "o.tsv")) == 3
        assert run(tmp_path, "synth", "--out", str(tmp_path / "o.tsv"), "--config", str(tmp_path / "nope.ini")) == 3

    def test_bad_arguments(self, tmp_path):
        assert cli.main(["synth"]) == 2
        assert cli.main(["synth", "--out", str(tmp_path / "o"), "--fit-etalon", "gauss"]) == 2
        assert cli.main(["synth", "--out", str(tmp_path / "o"), "--seed", "-3"]) == 2


class TestFit:
    def test_round_trip_recovers_A(self, tmp_path, synth_file):
        report = tmp_path / "r.json"
        assert run(tmp_path, "fit", str(synth_file), "--out", str(report)) == 0
        rec = json.loads(report.read_text())
        assert rec["converged"]
        assert abs(rec["amplitude_A"] - 0.35) < 3 * rec["amplitude_A_sigma"]
        assert rec["provenance"]["seed"] == 0
        assert "[fit]" in rec["config"] and "etalon_mode = lorentzian" in rec["config"]
        table = {p["name"]: p for p in rec["intensity_fit"]["parameters"]}
        assert table["coherent_amplitude"]["free"] and table["coherent_amplitude"]["sigma"] > 0

    def test_matched_etalon_flag(self, tmp_path, synth_file):
        report = tmp_path / "r.json"
        assert run(tmp_path, "fit", str(synth_file), "--out", str(report), "--fit-etalon", "airy") == 0
        rec = json.loads(report.read_text())
        assert "etalon_mode = airy" in rec["config"]
        assert abs(rec["peak_separation_ghz"] - 0.8) < 3 * rec["peak_separation_sigma_ghz"]

    def test_empty(self, tmp_path):
        data = tmp_path / "empty.tsv"
        data.write_text("")
        assert run(tmp_path, "fit", str(data), "--out", str(tmp_path / "r.json")) == 2

    def test_missing_column(self, tmp_path, capsys):
        data = tmp_path / "d.tsv"
        data.write_text("frequency_ghz\tmean_counts\tg2\n0.0\t0.1\t1.0\n")
        assert run(tmp_path, "fit", str(data), "--out", str(tmp_path / "r.json")) == 2
        assert "g2_sigma" in capsys.readouterr().err

    def test_malformed_row(self, tmp_path, capsys, synth_file):
        lines = synth_file.read_text().splitlines()
        header = next(i for i, l in enumerate(lines) if not l.startswith("#"))
        lines[header + 3] = "0.1\tabc\t1.0\t0.1"
        data = tmp_path / "bad.tsv"
        data.write_text("\n".join(lines) + "\n")
        assert run(tmp_path, "fit", str(data), "--out", str(tmp_path / "r.json")) == 2
        assert f"line {header + 4}" in capsys.readouterr().err

    def test_missing_data_is_io(self, tmp_path):
        assert run(tmp_path, "fit", str(tmp_path / "none.tsv"), "--out", str(tmp_path / "r.json")) == 3

    def test_non_convergence_exit(self, tmp_path, synth_file, monkeypatch):
        monkeypatch.setattr(scan, "fit", lambda problem: real_fit(problem, max_iterations=1))
        report = tmp_path / "r.json"
        assert run(tmp_path, "fit", str(synth_file), "--out", str(report)) == 4
        assert json.loads(report.read_text())["converged"] is False

    def test_degenerate_fit_exit(self, tmp_path, synth_file):
        # fluorescence parameters free while its amplitude is pinned to zero
        config = "[channel]\nfluorescence_amplitude = 0\n[fit]\nfree = coherent_amplitude, fluorescence_upper_center, background\n"
        report = tmp_path / "r.json"
        assert run(tmp_path, "fit", str(synth_file), "--out", str(report), config=config) == 4
        rec = json.loads(report.read_text())
        assert "fluorescence_upper_center" in rec["error"]

    def test_json_is_strict(self, tmp_path, synth_file):
        report = tmp_path / "r.json"
        run(tmp_path, "fit", str(synth_file), "--out", str(report))
        json.loads(report.read_text(), parse_constant=lambda c: pytest.fail(f"non-standard JSON constant {c}"))


class TestCollide:
    def test_coherent_limit(self, tmp_path, capsys):
        out = tmp_path / "c.tsv"
        config = SMALL_COLLIDE + "gamma_c = 0\nnoise_amplitude = 0\n"
        assert run(tmp_path, "collide", "--out", str(out), config=config) == 0
        summary = next(l for l in out.read_text().splitlines() if l.startswith("# summary"))
        fields = dict(kv.split("=") for kv in summary[len("# summary "):].split())
        assert float(fields["coherent_fraction"]) >= 0.99
        assert "coherent_fraction" in capsys.readouterr().out

    def test_seven_torr_summary(self, tmp_path):
        out = tmp_path / "c.tsv"
        assert run(tmp_path, "collide", "--out", str(out), config=SMALL_COLLIDE) == 0
        text = out.read_text().splitlines()
        summary = next(l for l in text if l.startswith("# summary"))
        fields = dict(kv.split("=") for kv in summary[len("# summary "):].split())
        assert float(fields["reference_ratio"]) == pytest.approx(49 / 36)
        assert float(fields["ratio_error"]) > 0
        assert math.isfinite(float(fields["incoherent_coherent_ratio"]))
        header = text.index("offset_rad_s\tdensity")
        table = np.loadtxt(text[header + 1:])
        assert table.shape[1] == 2
        assert table[:, 1].sum() * (table[1, 0] - table[0, 0]) == pytest.approx(1.0, abs=1e-6)

    def test_dt_violation(self, tmp_path, capsys):
        code = run(tmp_path, "collide", "--out", str(tmp_path / "c.tsv"), config="[collisions]\ndt = 1e-9\n")
        assert code == 2
        assert "dt <" in capsys.readouterr().err

    def test_byte_identical(self, tmp_path):
        outs = []
        for k in range(2):
            out = tmp_path / f"c{k}.tsv"
            assert run(tmp_path, "collide", "--out", str(out), "--seed", "3", config=SMALL_COLLIDE) == 0
            outs.append(out.read_bytes())
        assert outs[0] == outs[1]


def test_console_entry_point(tmp_path):
    out = tmp_path / "o.tsv"
    proc = subprocess.run(
        [sys.executable, "-m", "raman_decoherence", "synth", "--out", str(out), "--seed", "1"],
        capture_output=True,
        text=True,
    )
    assert proc.returncode == 0, proc.stderr
    assert out.read_text().count("\n") > 501


def test_inline_comments():
    cfg = configmod.loads("[collisions]\npressure = 0.2   ; torr\n")
    assert cfg["collisions"]["pressure"] == 0.2
