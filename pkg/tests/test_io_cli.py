import csv
import json
from dataclasses import replace

import numpy as np
import pytest

from tgreedy import io
from tgreedy.cli import main
from tgreedy.evaluate import CurveSeries
from tgreedy.moments import DomainMoments, LabeledSampleSet, compute_domain_moments
from tgreedy.plotting import curve_svg
from tgreedy.synth import SynthConfig

TOY = """domain,label,a,b
x,1.0,1.0,0.0
x,-1.0,0.5,2.0
y,2.0,0.0,1.0
x,0.5,1.5,-1.0
y,-0.5,2.0,0.5
y,1.5,-1.0,1.0
"""


@pytest.fixture
def toy_csv(tmp_path):
    path = tmp_path / "toy.csv"
    path.write_text(TOY)
    return path


def small_config(tmp_path, seed=3):
    cfg = SynthConfig(p_robust=2, p_spurious=3, p_noise=3, n_domains=4,
                      samples_per_domain=300, seed=seed)
    path = tmp_path / "cfg.json"
    path.write_text(cfg.to_json())
    return path


def header(path):
    with open(path, newline="") as fh:
        return next(csv.reader(fh))


class TestMomentFiles:
    def test_round_trip_bit_exact(self, tmp_path, rng):
        A = rng.normal(size=(4, 4))
        m = DomainMoments("d/1", rng.normal(size=4), A @ A.T, 1.7, 123)
        path = tmp_path / io.moment_filename(m.domain_id)
        io.write_moments(path, m, ["a", "b", "c", "d"])
        back, names = io.read_moments(path)
        assert names == ["a", "b", "c", "d"]
        assert back.domain_id == "d/1" and back.sample_count == 123
        assert back.cross_cov.tobytes() == m.cross_cov.tobytes()
        assert back.gram.tobytes() == m.gram.tobytes()
        assert back.second_y == m.second_y
        assert path.name == "d_1.dsmom"

    def test_rejects_foreign_file(self, tmp_path):
        path = tmp_path / "bad.dsmom"
        path.write_bytes(b"hello")
        with pytest.raises(io.ValidationError):
            io.read_moments(path)

    def test_rejects_truncated(self, tmp_path):
        m = DomainMoments("d", np.ones(2), np.eye(2), 1.0, 5)
        path = tmp_path / "d.dsmom"
        io.write_moments(path, m)
        path.write_bytes(path.read_bytes()[:-8])
        with pytest.raises(io.ValidationError, match="expected 6 values"):
            io.read_moments(path)


class TestSamples:
    def test_grouping_first_seen_order(self, toy_csv):
        data, names = io.read_samples(toy_csv)
        assert list(data) == ["x", "y"] and names == ["a", "b"]
        np.testing.assert_array_equal(data["x"].labels, [1.0, -1.0, 0.5])

    def test_malformed_row_reports_line(self, tmp_path):
        path = tmp_path / "bad.csv"
        path.write_text("domain,label,a\nx,1.0,2.0\nx,oops,1.0\n")
        with pytest.raises(io.ValidationError, match=r"bad\.csv:3"):
            io.read_samples(path)

    def test_wrong_width_reports_line(self, tmp_path):
        path = tmp_path / "bad.csv"
        path.write_text("domain,label,a\nx,1.0,2.0,3.0\n")
        with pytest.raises(io.ValidationError, match=r":2: expected 3 fields"):
            io.read_samples(path)

    def test_write_read_round_trip(self, tmp_path, rng):
        data = {"p": LabeledSampleSet(rng.normal(size=(5, 2)), rng.normal(size=5))}
        io.write_samples(tmp_path / "s.csv", data, ["u", "v"])
        back, names = io.read_samples(tmp_path / "s.csv")
        assert names == ["u", "v"]
        assert back["p"].features.tobytes() == data["p"].features.tobytes()


def test_moments_shuffle_invariant(rng):
    X = rng.normal(size=(500, 3))
    y = rng.normal(size=500)
    perm = rng.permutation(500)
    a = compute_domain_moments(LabeledSampleSet(X, y), "a")
    b = compute_domain_moments(LabeledSampleSet(X[perm], y[perm]), "a")
    np.testing.assert_allclose(b.cross_cov, a.cross_cov, rtol=1e-12, atol=1e-15)
    np.testing.assert_allclose(b.gram, a.gram, rtol=1e-12, atol=1e-15)


def test_svg_has_three_polylines():
    c = CurveSeries([0, 1, 2], [0.5, 0.7, 0.8], [0.5, 0.6, 0.55], [np.nan, 3.0, 2.0])
    svg = curve_svg(c, "demo")
    assert svg.count("<polyline") == 3
    assert svg.startswith("<svg") or svg.startswith("<?xml")


def test_fmt_special_values():
    assert io.fmt(float("nan")) == "nan"
    assert io.fmt(float("-inf")) == "-inf"
    assert float(io.fmt(0.1)) == 0.1


def test_config_digest_is_key_order_free():
    assert io.config_digest({"a": 1, "b": 2}) == io.config_digest({"b": 2, "a": 1})
    assert io.config_digest({"a": 1}) != io.config_digest({"a": 2})


class TestCli:
    def test_usage_error_exit_1(self, capsys):
        with pytest.raises(SystemExit) as info:
            main(["select"])
        assert info.value.code == 1
        with pytest.raises(SystemExit) as info:
            main(["nonsense"])
        assert info.value.code == 1

    def test_moments_one_file_per_domain(self, toy_csv, tmp_path):
        out = tmp_path / "mom"
        assert main(["moments", str(toy_csv), "--out", str(out)]) == 0
        files = sorted(p.name for p in out.glob("*.dsmom"))
        assert files == ["x.dsmom", "y.dsmom"]
        m, names = io.read_moments(out / "x.dsmom")
        assert names == ["a", "b"] and m.sample_count == 3
        X = np.array([[1.0, 0.0], [0.5, 2.0], [1.5, -1.0]])
        y = np.array([1.0, -1.0, 0.5])
        np.testing.assert_allclose(m.cross_cov, X.T @ y / 3, rtol=1e-15)
        np.testing.assert_allclose(m.gram, X.T @ X / 3, rtol=1e-15)

    def test_malformed_input_exit_2(self, tmp_path, capsys):
        bad = tmp_path / "bad.csv"
        bad.write_text("domain,label,a\nx,1.0,2.0\nx,1.0,nan\n")
        assert main(["moments", str(bad), "--out", str(tmp_path / "o")]) == 2
        assert "bad.csv:3" in capsys.readouterr().err

    def test_missing_file_exit_2(self, tmp_path):
        assert main(["moments", str(tmp_path / "nope.csv"), "--out", str(tmp_path)]) == 2

    def test_zero_steps_gives_empty_trace(self, toy_csv, tmp_path):
        main(["moments", str(toy_csv), "--out", str(tmp_path / "m")])
        assert main(["select", str(tmp_path / "m"), "--steps", "0",
                     "--out", str(tmp_path / "s")]) == 0
        text = (tmp_path / "s" / "trace.csv").read_text()
        assert text == ",".join(io.TRACE_COLUMNS) + "\n"

    def test_synth_outputs_and_manifest(self, tmp_path):
        cfg_path = small_config(tmp_path, seed=11)
        out = tmp_path / "syn"
        assert main(["synth", "--config", str(cfg_path), "--out", str(out)]) == 0
        manifest = json.loads((out / "manifest.json").read_text())
        assert manifest["seeds"] == [11] and manifest["command"] == "synth"
        assert manifest["config"]["seed"] == 11
        assert manifest["config_digest"] == io.config_digest(manifest["config"])
        cfg = SynthConfig.from_dict(json.loads((out / "config.json").read_text()))
        assert cfg == SynthConfig.from_dict(json.loads(cfg_path.read_text()))
        truth = json.loads((out / "truth.json").read_text())
        idx = truth["robust_indices"] + truth["spurious_indices"] + truth["noise_indices"]
        assert sorted(idx) == list(range(cfg.n_features))
        data, _ = io.read_samples(out / "samples.csv")
        assert len(data) == 4 and all(s.n_samples == 300 for s in data.values())

    def test_seed_flag_overrides_config(self, tmp_path):
        out = tmp_path / "syn"
        main(["synth", "--config", str(small_config(tmp_path)), "--seed", "42",
              "--out", str(out)])
        assert json.loads((out / "manifest.json").read_text())["seeds"] == [42]

    def test_pipeline_schemas_and_determinism(self, tmp_path):
        cfg_path = small_config(tmp_path)

        def run(tag):
            root = tmp_path / tag
            main(["synth", "--config", str(cfg_path), "--out", str(root / "syn")])
            main(["split", str(root / "syn" / "samples.csv"), "--holdout", "d3",
                  "--out", str(root / "split")])
            main(["moments", str(root / "split" / "train.csv"), "--out", str(root / "mom")])
            main(["select", str(root / "mom"), "--method", "t_greedy", "--steps", "6",
                  "--out", str(root / "sel")])
            assert main(["eval", str(root / "sel" / "trace.csv"),
                         "--source", str(root / "split" / "source_eval.csv"),
                         "--target", str(root / "split" / "target_eval.csv"),
                         "--plot", "--out", str(root / "ev")]) == 0
            return root

        a, b = run("a"), run("b")
        for rel in ("sel/trace.csv", "ev/curve.csv", "ev/curve.svg"):
            assert (a / rel).read_bytes() == (b / rel).read_bytes()
        assert tuple(header(a / "sel/trace.csv")) == io.TRACE_COLUMNS
        assert tuple(header(a / "ev/curve.csv")) == io.CURVE_COLUMNS
        curve = io.read_curve(a / "ev/curve.csv")
        assert curve.steps.tolist() == list(range(7))
        assert curve.target_auroc[0] == 0.5
        assert (a / "ev/curve.svg").read_text().count("<polyline") == 3

    def test_eval_rejects_out_of_range_feature(self, tmp_path, toy_csv):
        trace = tmp_path / "trace.csv"
        trace.write_text(",".join(io.TRACE_COLUMNS) + "\n1,5,greedy,1,1,1,1,0\n")
        code = main(["eval", str(trace), "--source", str(toy_csv), "--target", str(toy_csv),
                     "--out", str(tmp_path / "ev")])
        assert code == 2

    def test_bounds_selfnorm_pass(self, tmp_path, capsys):
        code = main(["bounds", "--check", "selfnorm", "--n", "5", "--trials", "5000",
                     "--out", str(tmp_path)])
        assert code == 0
        assert capsys.readouterr().out.strip().endswith("PASS")
        assert tuple(header(tmp_path / "bounds.csv")) == io.BOUND_COLUMNS

    def test_bounds_theorem1_default_n_admissible(self, tmp_path):
        assert main(["bounds", "--check", "theorem1", "--trials", "200",
                     "--out", str(tmp_path)]) == 0

    def test_bounds_theorem1_outside_regime_exit_2(self, tmp_path, capsys):
        code = main(["bounds", "--check", "theorem1", "--n", "20", "--trials", "10",
                     "--out", str(tmp_path)])
        assert code == 2
        assert "max admissible" in capsys.readouterr().err

    def test_bounds_fail_exit_3(self, tmp_path, monkeypatch):
        import tgreedy.cli as cli
        real = cli.mc_exceedance

        def failing(*args, **kwargs):
            report = real(*args, **kwargs)
            return replace(report, empirical_freq=np.ones_like(report.empirical_freq))

        monkeypatch.setattr(cli, "mc_exceedance", failing)
        assert main(["bounds", "--check", "selfnorm", "--n", "5", "--trials", "100",
                     "--out", str(tmp_path)]) == 3

    def test_report_writes_curves_and_figure(self, tmp_path):
        out = tmp_path / "rep"
        assert main(["report", "--config", str(small_config(tmp_path)), "--steps", "4",
                     "--out", str(out)]) == 0
        assert (out / "loo_curves.png").stat().st_size > 0
        assert len(list(out.glob("curve_*average*.csv"))) == 2
        names = json.loads((out / "manifest.json").read_text())["outputs"]
        assert "loo_curves.png" in names
