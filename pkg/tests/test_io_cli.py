import json
import math

import numpy as np
import pytest

from fanostat import (DataFormatError, FPBackground, MeasurementSet,
                      PhysicalParams, ScanRequest, fp_background,
                      load_measurements, merge_measurements, oracle_check,
                      params_from_config, read_config, run_scan, write_series)
from fanostat.cli import main


class TestConfig:
    def test_roundtrip(self, tmp_path):
        cfg = tmp_path / "params.cfg"
        cfg.write_text("# reference configuration\n"
                       "lifetime = 125\n"
                       "t0 = 0.62\n"
                       "beta = 0.99\n\n"
                       "sigma_wander = 4.7\n")
        params = params_from_config(cfg)
        assert params.lifetime == 125.0
        assert params.t0 == 0.62

    def test_bad_line_reports_location(self, tmp_path):
        cfg = tmp_path / "bad.cfg"
        cfg.write_text("lifetime = 125\nt0 0.62\n")
        with pytest.raises(DataFormatError, match="bad.cfg:2"):
            read_config(cfg)

    def test_non_numeric_value(self, tmp_path):
        cfg = tmp_path / "bad.cfg"
        cfg.write_text("t0 = fast\n")
        with pytest.raises(DataFormatError, match="non-numeric"):
            read_config(cfg)

    def test_unknown_key(self, tmp_path):
        cfg = tmp_path / "bad.cfg"
        cfg.write_text("t00 = 0.5\n")
        with pytest.raises(DataFormatError, match="unknown"):
            params_from_config(cfg)

    def test_overrides_take_precedence(self, tmp_path):
        cfg = tmp_path / "params.cfg"
        cfg.write_text("t0 = 0.62\n")
        params = params_from_config(cfg, {"t0": 0.5})
        assert params.t0 == 0.5

    def test_missing_file(self, tmp_path):
        with pytest.raises(DataFormatError, match="not found"):
            read_config(tmp_path / "nope.cfg")


class TestLoadMeasurements:
    def test_simple_table(self, tmp_path):
        f = tmp_path / "trans.csv"
        f.write_text("detuning_uev,transmission,uncertainty\n"
                     "-9.0,1.2,0.03\n0.0,0.8,0.03\n9.0,0.45,0.03\n")
        rep = load_measurements(f, "transmission")
        assert rep.n_rows == 3
        assert rep.rejected == ()
        assert rep.data.transmission.shape == (3, 3)

    def test_nan_row_rejected_with_diagnostic(self, tmp_path):
        f = tmp_path / "trans.csv"
        f.write_text("detuning_uev,transmission,uncertainty\n"
                     "-9.0,1.2,0.03\n0.0,nan,0.03\n9.0,0.45,0.03\n")
        rep = load_measurements(f, "transmission")
        assert rep.n_rows == 2
        assert len(rep.rejected) == 1
        assert rep.rejected[0][0] == 3    # 1-based line number
        assert "non-finite" in rep.rejected[0][1]

    def test_non_numeric_cell_rejected(self, tmp_path):
        f = tmp_path / "trans.csv"
        f.write_text("detuning_uev,transmission,uncertainty\n"
                     "-9.0,oops,0.03\n9.0,0.45,0.03\n")
        rep = load_measurements(f, "transmission")
        assert len(rep.rejected) == 1

    def test_missing_column(self, tmp_path):
        f = tmp_path / "trans.csv"
        f.write_text("detuning_uev,value\n1.0,2.0\n")
        with pytest.raises(DataFormatError, match="missing columns"):
            load_measurements(f, "transmission")

    def test_empty_file(self, tmp_path):
        f = tmp_path / "empty.csv"
        f.write_text("")
        with pytest.raises(DataFormatError, match="empty"):
            load_measurements(f, "transmission")

    def test_histogram_needs_detuning_metadata(self, tmp_path):
        f = tmp_path / "hist.csv"
        f.write_text("tau_ps,counts\n-100,50\n0,120\n100,50\n")
        with pytest.raises(DataFormatError, match="detuning_uev"):
            load_measurements(f, "g2_histogram")
        f.write_text("# detuning_uev: 9.0\ntau_ps,counts\n-100,50\n0,120\n100,50\n")
        rep = load_measurements(f, "g2_histogram")
        hist = rep.data.g2_histograms[0]
        assert hist.detuning == 9.0
        assert hist.counts[1] == 120.0

    def test_unknown_kind(self, tmp_path):
        with pytest.raises(ValueError, match="kind"):
            load_measurements(tmp_path / "x.csv", "spectra")


class TestWriteSeries:
    def test_roundtrip_bit_exact(self, tmp_path):
        rng = np.random.default_rng(12)
        det = rng.uniform(-40, 40, 17)
        val = rng.standard_normal(17) * np.pi
        unc = np.abs(rng.standard_normal(17)) + 1e-3
        out = tmp_path / "series.csv"
        write_series(("detuning_uev", "transmission", "uncertainty"),
                     list(zip(det, val, unc)), out, "csv",
                     {"convention_reduced_time": "tau_t = tau * gamma / 2"})
        rep = load_measurements(out, "transmission")
        assert np.array_equal(rep.data.transmission,
                              np.column_stack([det, val, unc]))

    def test_metadata_block_and_determinism(self, tmp_path):
        rows = [(1.0, 2.0)]
        meta = {"b_key": 1, "a_key": "x", "convention_reduced_time": "tau_t"}
        f1, f2 = tmp_path / "a.csv", tmp_path / "b.csv"
        write_series(("x", "y"), rows, f1, "csv", meta)
        write_series(("x", "y"), rows, f2, "csv", meta)
        assert f1.read_bytes() == f2.read_bytes()
        text = f1.read_text()
        assert text.startswith("# a_key: x\n# b_key: 1\n")
        assert "convention_reduced_time" in text

    def test_empty_series_header_only(self, tmp_path):
        f = tmp_path / "empty.csv"
        write_series(("x", "y"), [], f, "csv")
        assert f.read_text() == "x,y\n"

    def test_json_structure(self, tmp_path):
        f = tmp_path / "s.json"
        write_series(("x", "y"), [(1.5, -2.0)], f, "json", {"k": "v"})
        doc = json.loads(f.read_text())
        assert doc["metadata"] == {"k": "v"}
        assert doc["columns"] == ["x", "y"]
        assert doc["rows"] == [[1.5, -2.0]]

    def test_width_mismatch(self, tmp_path):
        with pytest.raises(ValueError, match="width"):
            write_series(("x",), [(1.0, 2.0)], tmp_path / "x.csv")


class TestMerge:
    def test_merge(self):
        a = MeasurementSet(transmission=np.array([[0.0, 1.0, 0.1]]))
        b = MeasurementSet(g2zero=np.array([[9.0, 2.0, 0.1]]))
        m = merge_measurements(a, b)
        assert m.transmission.shape == (1, 3)
        assert m.g2zero.shape == (1, 3)


class TestRunScan:
    def test_transmission_extrema_locations(self, tmp_path):
        req = ScanRequest(mode="transmission", params=PhysicalParams(),
                          grid_start=-40.0, grid_stop=40.0, grid_count=401,
                          out_path=str(tmp_path / "t.csv"))
        cols, rows, meta = run_scan(req)
        det = np.array([r[0] for r in rows])
        val = np.array([r[1] for r in rows])
        assert 5.0 < det[np.argmin(val)] < 13.0
        assert -13.0 < det[np.argmax(val)] < -2.0
        assert 0.3 < val.min() < 0.5
        assert meta["param_t0"] == 0.62

    def test_decompose_identity_and_signs(self):
        req = ScanRequest(mode="decompose", params=PhysicalParams(t0=math.sqrt(0.15)),
                          grid_start=-20.0, grid_stop=20.0, grid_count=101,
                          out_path="unused")
        cols, rows, _ = run_scan(req)
        assert cols[:2] == ("detuning_uev", "delta")
        arr = np.array([r[2:6] for r in rows], dtype=float)
        fin = np.isfinite(arr[:, 3])
        assert np.allclose(arr[fin, 0] + arr[fin, 1] + arr[fin, 2], arr[fin, 3],
                           atol=1e-12)
        assert np.all(arr[fin, 2] <= 0)     # T0 < 1/2: destructive interference

    def test_ideal_bunching_only_at_full_transmission(self):
        p = PhysicalParams(t0=1.0, beta=1.0, dephasing_time=1e12, sigma_wander=0.0)
        req = ScanRequest(mode="g2zero", params=p, grid_start=-40.0,
                          grid_stop=40.0, grid_count=201, out_path="unused",
                          average=False, convolve=False)
        _, rows, _ = run_scan(req)
        vals = np.array([r[1] for r in rows])
        assert np.all(vals[np.isfinite(vals)] >= 1.0)

    def test_divergent_rows_flagged(self):
        # at full background transmission the zero sits exactly on resonance
        p = PhysicalParams(t0=1.0, beta=1.0, dephasing_time=math.inf,
                           sigma_wander=0.0)
        req = ScanRequest(mode="g2zero", params=p, grid_start=0.0,
                          grid_stop=1.0, grid_count=2, out_path="unused",
                          average=False, convolve=False)
        _, rows, _ = run_scan(req)
        assert rows[0][2] == "divergent"
        assert rows[1][2] == ""

    def test_g2trace_needs_detuning(self):
        with pytest.raises(ValueError, match="detuning"):
            ScanRequest(mode="g2trace", params=PhysicalParams(),
                        grid_start=-500.0, grid_stop=500.0, grid_count=11,
                        out_path="unused")

    def test_g2trace_values(self):
        req = ScanRequest(mode="g2trace", params=PhysicalParams(),
                          grid_start=-600.0, grid_stop=600.0, grid_count=49,
                          out_path="unused", detuning=9.0)
        _, rows, _ = run_scan(req)
        vals = np.array([r[1] for r in rows])
        mid = vals[len(vals) // 2]
        assert 1.8 < mid < 2.4
        assert vals[0] < mid

    def test_validation(self):
        with pytest.raises(ValueError):
            ScanRequest(mode="transmission", params=PhysicalParams(),
                        grid_start=0.0, grid_stop=-1.0, grid_count=10,
                        out_path="x")
        with pytest.raises(ValueError):
            ScanRequest(mode="transmission", params=PhysicalParams(),
                        grid_start=0.0, grid_stop=1.0, grid_count=1,
                        out_path="x")
        with pytest.raises(ValueError):
            ScanRequest(mode="everything", params=PhysicalParams(),
                        grid_start=0.0, grid_stop=1.0, grid_count=5,
                        out_path="x")


class TestFPBackground:
    def test_no_mirrors_full_transmission(self):
        fp = FPBackground(reflectivity=0.0, fsr_nm=2.0)
        lam = np.linspace(910, 920, 101)
        t0, T = fp_background(fp, lam)
        assert np.allclose(T, 1.0)
        assert np.allclose(t0, 1.0)

    def test_unity_on_resonance_any_reflectivity(self):
        for R in (0.1, 0.5, 0.9):
            fp = FPBackground(reflectivity=R, fsr_nm=2.0)
            lam_res = fp.roundtrip_nm / round(fp.roundtrip_nm / 915.0)
            _, T = fp_background(fp, np.array([lam_res]))
            assert T[0] == pytest.approx(1.0, abs=1e-9)

    def test_fsr_spacing(self):
        fp = FPBackground(reflectivity=0.6, fsr_nm=2.0, wavelength_ref_nm=915.0)
        lam = np.linspace(910, 920, 20001)
        _, T = fp_background(fp, lam)
        peaks = [i for i in range(1, len(lam) - 1)
                 if T[i] > T[i - 1] and T[i] > T[i + 1] and T[i] > 0.99]
        spacings = np.diff(lam[peaks])
        assert np.all(np.abs(spacings - 2.0) / 2.0 < 0.01)

    def test_length_parametrization(self):
        fp = FPBackground(reflectivity=0.3, length_um=100.0, group_index=4.0)
        assert fp.roundtrip_nm == pytest.approx(8.0e5)

    def test_validation(self):
        with pytest.raises(ValueError):
            FPBackground(reflectivity=1.0, fsr_nm=2.0)
        with pytest.raises(ValueError):
            FPBackground(reflectivity=0.5)


class TestCLI:
    def test_scan_end_to_end_and_deterministic(self, tmp_path, capsys):
        out1 = tmp_path / "scan1.csv"
        out2 = tmp_path / "scan2.csv"
        for out in (out1, out2):
            code = main(["scan", "--mode", "transmission",
                         "--grid=-40:40:81", "--out", str(out)])
            assert code == 0
        assert out1.read_bytes() == out2.read_bytes()
        text = out1.read_text()
        assert "# convention_reduced_time: tau_t = tau * gamma / 2" in text

    def test_scan_with_config_and_set(self, tmp_path):
        cfg = tmp_path / "p.cfg"
        cfg.write_text("t0 = 0.5\nbeta = 0.9\n")
        out = tmp_path / "scan.json"
        code = main(["scan", "--mode", "g2zero", "--config", str(cfg),
                     "--set", "t0=0.62", "--grid=-20:20:21",
                     "--out", str(out), "--format", "json"])
        assert code == 0
        doc = json.loads(out.read_text())
        assert doc["metadata"]["param_t0"] == 0.62

    def test_fit_end_to_end(self, tmp_path):
        from fanostat import ModelCurves
        p = PhysicalParams()
        model = ModelCurves(p)
        det = np.linspace(-40, 40, 21)
        tr = model.transmission(det)
        f_t = tmp_path / "trans.csv"
        write_series(("detuning_uev", "transmission", "uncertainty"),
                     list(zip(det, tr, np.full_like(det, 0.02))), f_t)
        det_g = np.linspace(-18, 18, 7)
        g2 = np.asarray(model.g2zero(det_g))
        f_g = tmp_path / "g2.csv"
        write_series(("detuning_uev", "g2zero", "uncertainty"),
                     list(zip(det_g, g2, np.full_like(det_g, 0.02))), f_g)
        out = tmp_path / "report.json"
        code = main(["fit", "--transmission", str(f_t), "--g2zero", str(f_g),
                     "--set", "t0=0.55", "--out", str(out)])
        assert code == 0
        rep = json.loads(out.read_text())
        assert rep["converged"]
        assert abs(rep["parameters"]["t0"] - 0.62) < 0.02
        assert rep["conventions"]["frequency"].startswith("ordinary")

    def test_oracle_check_small_grid(self, tmp_path):
        out = tmp_path / "oracle.csv"
        code = main(["oracle-check", "--alpha", "1e-4",
                     "--deltas=-2.0,3.0,5.0", "--t0s", "0.55,1.0",
                     "--zetas", "1.0,1.2", "--betas", "0.95",
                     "--out", str(out), "--tol-g2", "2e-3"])
        assert code == 0
        assert out.exists()

    def test_oracle_check_tolerance_exit_code(self):
        code = main(["oracle-check", "--alpha", "1e-4",
                     "--deltas", "0.5", "--t0s", "1.0", "--zetas", "1.0",
                     "--betas", "1.0", "--tol-g2", "1e-12"])
        assert code == 4

    def test_fp_background_cli(self, tmp_path):
        out = tmp_path / "fp.csv"
        code = main(["fp-background", "--reflectivity", "0.4",
                     "--fsr-nm", "2.0", "--grid", "910:920:101",
                     "--out", str(out)])
        assert code == 0

    def test_missing_data_file_exit_code(self, tmp_path):
        code = main(["fit", "--transmission", str(tmp_path / "nope.csv"),
                     "--out", str(tmp_path / "r.json")])
        assert code == 3

    def test_bad_config_exit_code(self, tmp_path):
        cfg = tmp_path / "bad.cfg"
        cfg.write_text("t0 = 2.0\n")
        code = main(["scan", "--mode", "transmission", "--config", str(cfg),
                     "--grid=-1:1:5", "--out", str(tmp_path / "x.csv")])
        assert code == 3

    def test_bad_reflectivity_exit_code(self, tmp_path):
        code = main(["fp-background", "--reflectivity", "1.0",
                     "--fsr-nm", "2.0", "--grid", "910:920:11",
                     "--out", str(tmp_path / "x.csv")])
        assert code == 2
