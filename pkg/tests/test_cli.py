import json

import numpy as np
import pytest

from qdcascade.cascade import ensemble_density_matrix, reference_emitter
from qdcascade.cli import main
from qdcascade.correlate import save_histogram
from qdcascade.qdtt import read_qdtt
from qdcascade.states import bell_psi_plus
from qdcascade.tomography import TomoRecord, ideal_counts, save_record, standard_settings

CONFIG = """
[emitter]
fss_uev = 2.3
t1_xx_ps = 112
t1_x_ps = 134
k = 0.97

[excitation]
pulse_area_pi = 1.0

[detectors]
efficiency_ch0 = 0.2
efficiency_ch1 = 0.2
dark_rate_hz_ch0 = 0
dark_rate_hz_ch1 = 0

[run]
topology = cross
analyzer_a = H
analyzer_b = H
duration_s = 0.001
seed = 12
"""


class TestPredict:
    def test_reference_point(self, capsys):
        assert main(["analyze", "predict", "--s", "2.3", "--t1x", "134", "--k", "0.97"]) == 0
        assert "F = 0.890" in capsys.readouterr().out

    def test_high_splitting_point(self, capsys):
        assert main(["analyze", "predict", "--s", "9.8", "--t1x", "134", "--k", "0.97"]) == 0
        assert "F = 0.590" in capsys.readouterr().out


class TestContrast:
    def test_reported_values(self, capsys):
        code = main(
            [
                "analyze", "contrast",
                "--linear", "0.89", "--diagonal", "0.83", "--circular", "-0.78",
                "--linear-err", "0.03", "--diagonal-err", "0.04", "--circular-err", "0.04",
            ]
        )
        assert code == 0
        out = capsys.readouterr().out
        assert "F = 0.875" in out


class TestYield:
    def test_requires_seed(self, capsys):
        with pytest.raises(SystemExit):
            main(["analyze", "yield"])

    def test_reference_yield(self, capsys):
        assert main(["analyze", "yield", "--n", "20000", "--seed", "4"]) == 0
        fraction = float(capsys.readouterr().out.strip().split(":")[1])
        assert fraction >= 0.999


class TestSimulate:
    def test_writes_qdtt_with_summary(self, tmp_path, capsys):
        cfg = tmp_path / "run.cfg"
        cfg.write_text(CONFIG)
        out = tmp_path / "tags.qdtt"
        assert main(["simulate", str(cfg), str(out)]) == 0
        text = capsys.readouterr().out
        assert "seed 12" in text
        assert "channel 0" in text
        stream = read_qdtt(out)
        assert len(stream) > 0

    def test_byte_identical_reruns(self, tmp_path):
        cfg = tmp_path / "run.cfg"
        cfg.write_text(CONFIG)
        a, b = tmp_path / "a.qdtt", tmp_path / "b.qdtt"
        assert main(["simulate", str(cfg), str(a)]) == 0
        assert main(["simulate", str(cfg), str(b), "--threads", "3"]) == 0
        assert a.read_bytes() == b.read_bytes()

    def test_seed_override_changes_output(self, tmp_path):
        cfg = tmp_path / "run.cfg"
        cfg.write_text(CONFIG)
        a, b = tmp_path / "a.qdtt", tmp_path / "b.qdtt"
        main(["simulate", str(cfg), str(a)])
        main(["simulate", str(cfg), str(b), "--seed", "99"])
        assert a.read_bytes() != b.read_bytes()

    def test_zero_efficiency_dark_counts_only(self, tmp_path, capsys):
        dark_cfg = CONFIG.replace("efficiency_ch0 = 0.2", "efficiency_ch0 = 0").replace(
            "efficiency_ch1 = 0.2", "efficiency_ch1 = 0"
        ).replace("dark_rate_hz_ch0 = 0", "dark_rate_hz_ch0 = 200000").replace(
            "dark_rate_hz_ch1 = 0", "dark_rate_hz_ch1 = 0"
        ).replace("duration_s = 0.001", "duration_s = 0.05")
        cfg = tmp_path / "run.cfg"
        cfg.write_text(dark_cfg)
        out = tmp_path / "darks.qdtt"
        assert main(["simulate", str(cfg), str(out)]) == 0
        stream = read_qdtt(out)
        expected = 200000 * 0.05
        assert np.all(stream.channels == 0)
        assert len(stream) == pytest.approx(expected, abs=4 * np.sqrt(expected))

    def test_missing_config_is_error(self, tmp_path, capsys):
        assert main(["simulate", str(tmp_path / "nope.cfg"), str(tmp_path / "x.qdtt")]) == 1
        assert "error:" in capsys.readouterr().err


class TestG2Command:
    def test_full_pipeline(self, tmp_path, capsys):
        hbt_cfg = CONFIG.replace("topology = cross", "topology = hbt_xx").replace(
            "duration_s = 0.001", "duration_s = 0.03"
        )
        cfg = tmp_path / "run.cfg"
        cfg.write_text(hbt_cfg)
        tags = tmp_path / "tags.qdtt"
        main(["simulate", str(cfg), str(tags)])
        hist_out = tmp_path / "hist.csv"
        code = main(
            [
                "analyze", "g2", str(tags),
                "--bin-width", "100", "--max-delay", "160000",
                "--hist-out", str(hist_out),
            ]
        )
        assert code == 0
        out = capsys.readouterr().out
        assert "g2(0) = 0.0" in out
        assert hist_out.exists()


class TestTomoCommand:
    def test_noiseless_bell_counts(self, tmp_path, capsys):
        record = TomoRecord(
            standard_settings(),
            ideal_counts(bell_psi_plus().density_matrix(), 1_000_000),
            1.0,
        )
        path = tmp_path / "tomo.csv"
        save_record(record, path)
        rho_out = tmp_path / "rho.txt"
        metrics_out = tmp_path / "metrics.json"
        code = main(
            [
                "analyze", "tomo", str(path),
                "--rho-out", str(rho_out), "--metrics-out", str(metrics_out),
            ]
        )
        assert code == 0
        out = capsys.readouterr().out
        assert "concurrence = 1.000" in out
        metrics = json.loads(metrics_out.read_text())
        assert metrics["fidelity"] == pytest.approx(1.0, abs=1e-3)
        assert metrics["concurrence"] == pytest.approx(1.0, abs=1e-3)
        from qdcascade.states import load_density_matrix

        rho = load_density_matrix(rho_out)
        assert rho.matrix[0, 0].real == pytest.approx(0.5, abs=1e-4)

    def test_background_corrected_metrics(self, tmp_path, capsys):
        rho = ensemble_density_matrix(reference_emitter())
        record = TomoRecord(standard_settings(), ideal_counts(rho, 1_000_000), 1.0)
        path = tmp_path / "tomo.csv"
        save_record(record, path)
        code = main(["analyze", "tomo", str(path), "--k", "0.97"])
        assert code == 0
        out = capsys.readouterr().out
        # correcting the exact model counts gives the bare dot state
        assert "fidelity = 0.910" in out


class TestFitCommands:
    def test_fit_decay_roundtrip(self, tmp_path, capsys):
        from qdcascade.cascade import DetectorParams, EmitterParams, cascade_decay_curve
        from qdcascade.correlate import CoincidenceHistogram

        emitter = EmitterParams(fss_uev=0.0, t1_xx_ps=112, t1_x_ps=134, k=1.0)
        det = DetectorParams(irf_fwhm_ps=100.0)
        t = np.arange(0.0, 13000.0, 10.0)
        curve = 1e6 * 10.0 * cascade_decay_curve(t + 5.0 - 700.0, emitter, det, "XX") + 3.0
        hist = CoincidenceHistogram(
            bin_width_ps=10.0, origin_ps=0.0, counts=np.rint(curve).astype(np.int64)
        )
        path = tmp_path / "hist.csv"
        save_histogram(hist, path)
        report = tmp_path / "report.csv"
        curve_out = tmp_path / "curve.csv"
        code = main(
            [
                "analyze", "fit-decay", str(path),
                "--species", "XX", "--irf-fwhm", "100",
                "--report", str(report), "--curve", str(curve_out),
            ]
        )
        assert code == 0
        out = capsys.readouterr().out
        assert "t1_xx_ps" in out
        assert report.exists() and curve_out.exists()
        fitted = dict(
            line.split(",")[:2] for line in report.read_text().splitlines()[1:]
        )
        assert float(fitted["t1_xx_ps"]) == pytest.approx(112.0, rel=0.01)

    def test_fit_rabi_from_csv(self, tmp_path, capsys):
        from qdcascade.cascade import rabi_population

        x = np.linspace(0.05, 8.0, 80)
        y = 1000.0 * rabi_population(1.05 * x, 0.05)
        path = tmp_path / "rabi.csv"
        path.write_text("area,counts\n" + "\n".join(f"{a},{b}" for a, b in zip(x, y)))
        code = main(["analyze", "fit-rabi", str(path)])
        assert code == 0
        out = capsys.readouterr().out
        assert "area_scale" in out

    def test_fit_fss_from_csv(self, tmp_path, capsys):
        alpha = np.linspace(0, np.pi, 20)
        x = 1600.0 + (4.8 / 4) * np.cos(4 * alpha + 0.2)
        xx = 1595.0 - (4.8 / 4) * np.cos(4 * alpha + 0.2)
        path = tmp_path / "fss.csv"
        path.write_text(
            "alpha_rad,x_center_uev,xx_center_uev\n"
            + "\n".join(f"{a},{b},{c}" for a, b, c in zip(alpha, x, xx))
        )
        code = main(["analyze", "fit-fss", str(path)])
        assert code == 0
        out = capsys.readouterr().out
        assert "fss_uev = 4.8" in out

    def test_fit_lorentzian_from_csv(self, tmp_path, capsys):
        s = np.linspace(0, 10, 40)
        f = 0.25 + 0.5 / (1 + (s / 1.5) ** 2)
        path = tmp_path / "lor.csv"
        path.write_text("s,f\n" + "\n".join(f"{a},{b}" for a, b in zip(s, f)))
        code = main(["analyze", "fit-lorentzian", str(path)])
        assert code == 0
        assert "width_uev = 1.5" in capsys.readouterr().out

    def test_malformed_csv_is_error(self, tmp_path, capsys):
        path = tmp_path / "bad.csv"
        path.write_text("x,y\n1,2\nmid-file text row,3\n")
        assert main(["analyze", "fit-lorentzian", str(path)]) == 1
        assert "error:" in capsys.readouterr().err
