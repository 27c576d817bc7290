import csv
import json

import numpy as np
import pytest

from _oracles import model_rates
from plantcomm.cli import EXIT_ERROR, EXIT_NO_MESSAGE, EXIT_OK, EXIT_USAGE, EXIT_WARNING, main
from plantcomm.transmitter import GeneParams, StressProfile, read_trace_csv, simulate_emission


def _json(path, data):
    path.write_text(json.dumps(data))
    return str(path)


def _series(path, t, v):
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["time", "value"])
        w.writerows(zip(t, v))
    return str(path)


@pytest.fixture
def gene(tmp_path):
    return _json(tmp_path / "gene.json", {"v_max": 2.0, "k_d": 0.3, "w": 1.5, "c": 3.0})


class TestEmit:
    def test_zero_stress_is_no_message(self, tmp_path, gene, capsys):
        stress = _json(tmp_path / "s.json", {"coefficients": [0.0]})
        # with c = 3 the zero-stress output sits at v_max*expit(-3)/k_d, so widen the band to cover it
        code = main(["emit", "--stress", stress, "--gene", gene, "--out", str(tmp_path / "o"), "--t1", "5",
                     "--g0", str(2.0 / (1 + np.exp(3.0)) / 0.3), "--constitutive", "0", "--epsilon", "0.5"])
        assert code == EXIT_NO_MESSAGE
        assert json.loads((tmp_path / "o" / "summary.json").read_text()) == {}
        assert "no message" in capsys.readouterr().out

    def test_rectangle_trace_mass(self, tmp_path, capsys):
        dt = 0.01
        t = np.round(np.arange(0, 10 + dt / 2, dt), 10)
        rate = np.where((t >= 2.0) & (t < 5.0), 4.0, 0.0)
        trace = tmp_path / "trace.csv"
        with trace.open("w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["time", "g", "rate"])
            w.writerows(zip(t, np.zeros_like(t), rate))
        out = tmp_path / "o"
        assert main(["emit", "--trace", str(trace), "--epsilon", "0.1", "--out", str(out)]) == EXIT_OK
        summary = json.loads((out / "summary.json").read_text())
        assert summary["M"] == pytest.approx(12.0, abs=4.0 * dt)
        assert set(summary) == {"M", "tau_b", "tau_e"}

    def test_trace_needs_epsilon(self, tmp_path, capsys):
        assert main(["emit", "--trace", str(tmp_path / "x.csv"), "--out", str(tmp_path)]) == EXIT_ERROR

    def test_missing_gene_field(self, tmp_path, capsys):
        stress = _json(tmp_path / "s.json", {"coefficients": [1.0]})
        bad = _json(tmp_path / "g.json", {"v_max": 2.0, "k_d": 0.3, "w": 1.5})
        assert main(["emit", "--stress", stress, "--gene", bad, "--out", str(tmp_path / "o")]) == EXIT_ERROR
        assert "c" in capsys.readouterr().err

    def test_malformed_json(self, tmp_path, gene, capsys):
        (tmp_path / "s.json").write_text("{coefficients: ")
        code = main(["emit", "--stress", str(tmp_path / "s.json"), "--gene", gene, "--out", str(tmp_path / "o")])
        assert code == EXIT_ERROR
        assert "s.json" in capsys.readouterr().err

    def test_manifest(self, tmp_path, gene):
        stress = _json(tmp_path / "s.json", {"coefficients": [0.5, 0.8, -0.06]})
        out = tmp_path / "o"
        main(["emit", "--stress", stress, "--gene", gene, "--out", str(out), "--t1", "12"])
        man = json.loads((out / "manifest.json").read_text())
        assert man["command"] == "emit"
        assert set(man["outputs"]) == {"emission.csv", "summary.json"}
        assert man["config"]["gene"]["w"] == 1.5
        assert man["version"]


class TestFit:
    T = np.linspace(0.0, 12.0, 40)
    COEFFS = (0.5, 0.8, -0.06)

    def _inputs(self, tmp_path):
        rates = model_rates((2.0, 0.3, 1.5, 3.0), self.COEFFS, self.T)
        em = _series(tmp_path / "em.csv", self.T, rates)
        st = _series(tmp_path / "st.csv", self.T, np.polynomial.polynomial.polyval(self.T, self.COEFFS))
        return em, st

    def test_self_consistent_fit(self, tmp_path, capsys):
        em, st = self._inputs(tmp_path)
        out = tmp_path / "fit"
        code = main(["fit", em, "--stress", st, "--degree", "2", "--v-max", "2.0", "--out", str(out),
                     "--target", "herbivory-lox-4"])
        assert code == EXIT_OK
        report = json.loads((out / "fit_report.json").read_text())
        assert report["r2"] >= 0.999
        assert "reference 0.9296 for herbivory-lox-4" in capsys.readouterr().out

    def test_fit_then_emit_round_trip(self, tmp_path, capsys):
        em, st = self._inputs(tmp_path)
        fit_out = tmp_path / "fit"
        main(["fit", em, "--stress", st, "--degree", "2", "--v-max", "2.0", "--out", str(fit_out)])
        emit_out = tmp_path / "emit"
        code = main(["emit", "--stress", str(fit_out / "stress.json"), "--gene", str(fit_out / "gene.json"),
                     "--t1", "12", "--out", str(emit_out)])
        assert code == EXIT_OK
        gene = json.loads((fit_out / "gene.json").read_text())
        g0 = gene.pop("g0", 0.0)
        stress = StressProfile(json.loads((fit_out / "stress.json").read_text())["coefficients"])
        direct = simulate_emission(GeneParams(**gene), stress, 0.0, 12.0, 0.01, g0)
        replay = read_trace_csv(emit_out / "emission.csv")
        np.testing.assert_array_equal(replay.rate, direct.rate)
        np.testing.assert_array_equal(replay.g, direct.g)

    def test_budget_warning_exit(self, tmp_path, capsys):
        em, st = self._inputs(tmp_path)
        code = main(["fit", em, "--stress", st, "--degree", "2", "--v-max", "2.0", "--max-evals", "5",
                     "--out", str(tmp_path / "f")])
        assert code == EXIT_WARNING
        assert "warning" in capsys.readouterr().err

    def test_degenerate_data(self, tmp_path, capsys):
        em = _series(tmp_path / "em.csv", self.T, np.zeros(self.T.size))
        st = _series(tmp_path / "st.csv", self.T, self.T)
        assert main(["fit", em, "--stress", st, "--out", str(tmp_path / "f")]) == EXIT_ERROR

    def test_unknown_target(self, tmp_path, capsys):
        em, st = self._inputs(tmp_path)
        assert main(["fit", em, "--stress", st, "--target", "nope", "--out", str(tmp_path)]) == EXIT_ERROR
        assert "known:" in capsys.readouterr().err

    def test_bad_degree_is_usage(self, tmp_path, capsys):
        assert main(["fit", "em.csv", "--degree", "two"]) == EXIT_USAGE


class TestSweep:
    def test_distance_demod_column(self, tmp_path, capsys):
        out = tmp_path / "d"
        assert main(["sweep", "distance", "--trials", "500", "--out", str(out)]) == EXIT_OK
        lines = (out / "distance.csv").read_text().splitlines()
        header = lines[1].split(",")
        rows = [dict(zip(header, ln.split(","))) for ln in lines[2:]]
        bits = [int(r["demod"]) for r in rows]
        xs = [float(r["x"]) for r in rows]
        assert bits[0] == 1 and all(b == 0 for x, b in zip(xs, bits) if x > 0.1)

    def test_rerun_identical_and_replay(self, tmp_path, capsys):
        a, b, c = tmp_path / "a", tmp_path / "b", tmp_path / "c"
        args = ["sweep", "noise", "--trials", "300", "--seed", "5"]
        main(args + ["--out", str(a)])
        main(args + ["--out", str(b), "--n-jobs", "3"])
        main(["sweep", "--from-manifest", str(a / "manifest.json"), "--out", str(c)])
        blob = (a / "noise.csv").read_bytes()
        assert (b / "noise.csv").read_bytes() == blob == (c / "noise.csv").read_bytes()
        assert json.loads((a / "manifest.json").read_text())["seed"] == 5

    def test_rsk_noise_ratio(self, tmp_path, capsys):
        out = tmp_path / "r"
        assert main(["rsk", "--noise-ratio", "1/15", "--trials", "2000", "--out", str(out)]) == EXIT_OK
        lines = (out / "rsk.csv").read_text().splitlines()
        cols = lines[1].split(",")
        assert cols[0] == "x" and "ratio[1/15]" in cols and "verdict[1/15]" in cols
        verdicts = {ln.split(",")[cols.index("verdict[1/15]")] for ln in lines[2:]}
        assert verdicts <= {"decoded", "corrupted", "silent"} and "decoded" in verdicts
        assert "noise ratio" in capsys.readouterr().out

    def test_noise_ratio_only_for_rsk(self, tmp_path, capsys):
        assert main(["sweep", "wind", "--noise-ratio", "1/5", "--out", str(tmp_path)]) == EXIT_ERROR

    def test_bad_noise_ratio(self, capsys):
        assert main(["rsk", "--noise-ratio", "2/3"]) == EXIT_USAGE

    def test_unknown_preset_lists_available(self, tmp_path, capsys):
        assert main(["sweep", "nope", "--out", str(tmp_path)]) == EXIT_ERROR
        assert "available: distance" in capsys.readouterr().err

    def test_config_file_with_bad_field(self, tmp_path, capsys):
        cfg = _json(tmp_path / "c.json", {"kind": "wind", "sweep": {"start": 0, "stop": 1}, "trials": -3})
        assert main(["sweep", cfg, "--out", str(tmp_path / "o")]) == EXIT_ERROR
        assert "trials" in capsys.readouterr().err

    def test_tsv_and_gnuplot(self, tmp_path, capsys):
        out = tmp_path / "t"
        assert main(["sweep", "wind_delay", "--format", "tsv", "--gnuplot", "--out", str(out)]) == EXIT_OK
        text = (out / "wind_delay.tsv").read_text()
        assert "\t" in text.splitlines()[1]
        dats = sorted(p.name for p in out.glob("*.dat"))
        assert dats and all(p.startswith("wind_delay") for p in dats)
        man = json.loads((out / "manifest.json").read_text())
        assert man["format"] == "tsv" and "wind_delay.tsv" in man["outputs"]


def test_delay(tmp_path, capsys):
    out = tmp_path / "d"
    assert main(["delay", "--x-r", "10", "--out", str(out)]) == EXIT_OK
    got = json.loads((out / "delay.json").read_text())["delay_s"]
    assert got["advective"] == 0.4
    assert got["diffusive"] == 1000.0
    assert got["mixed"] == 0.2 + 500.0


def test_presets(capsys):
    assert main(["presets"]) == EXIT_OK
    names = capsys.readouterr().out.split()
    assert "distance" in names and "rsk" in names
    assert main(["presets", "eddy"]) == EXIT_OK
    assert json.loads(capsys.readouterr().out)["family"] == [0.1, 10, 35, 100]
    assert main(["presets", "zzz"]) == EXIT_ERROR


def test_no_command_is_usage(capsys):
    assert main([]) == EXIT_USAGE
