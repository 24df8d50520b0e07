"""Command-line surface: config handling, artifact schemas, exit codes,
and byte-level determinism of the emitted CSVs.

The heavy pipeline runs once per scenario at a deliberately coarse grid
(25x20x10, 200 paths); scenario outputs are shared module-wide and the
determinism checks re-run the identical config into fresh directories.
"""

import json
import math

import pytest
from click.testing import CliRunner

from ashjb import cli as cli_mod
from ashjb import model, output
from ashjb.errors import ConfigError

COARSE = [
    "--set", "grid.n_time=25",
    "--set", "grid.n_gap=20",
    "--set", "grid.n_belief=10",
    "--set", "sim.n_paths=200",
    "--set", "sweep=[0.2,0.5,0.8]",
    "--set", "n_export=5",
]

CSV_NAMES = (
    "band.csv", "boundary.csv", "field.csv", "values.csv",
    "screen.csv", "compare.csv", "trajectory.csv",
)


def invoke(args, **kwargs):
    return CliRunner().invoke(cli_mod.main, args, **kwargs)


@pytest.fixture(scope="module")
def run_a(tmp_path_factory):
    out = tmp_path_factory.mktemp("run-a")
    res = invoke(["run", "--output-dir", str(out), *COARSE])
    assert res.exit_code == 0, res.output
    return out, res.output


@pytest.fixture(scope="module")
def run_b(tmp_path_factory):
    out = tmp_path_factory.mktemp("run-b")
    res = invoke(["run", "--output-dir", str(out), *COARSE])
    assert res.exit_code == 0, res.output
    return out


def read_rows(path):
    lines = path.read_text().splitlines()
    header = lines[0].split(",")
    return header, [dict(zip(header, ln.split(","))) for ln in lines[1:]]


class TestConfigSurface:
    def test_bad_model_parameter_exits_2(self, tmp_path):
        res = invoke(["band", "--output-dir", str(tmp_path),
                      "--set", "model.kappa=-1"])
        assert res.exit_code == 2
        assert "model.kappa" in res.output

    def test_degenerate_prior_exits_2(self, tmp_path):
        res = invoke(["values", "--output-dir", str(tmp_path),
                      "--set", "model.prior_p0=1.0"])
        assert res.exit_code == 2
        assert "interior" in res.output

    def test_sim_initial_belief_must_be_interior(self, tmp_path):
        res = invoke(["simulate", "--output-dir", str(tmp_path), *COARSE,
                      "--set", "sim.initial=[0,0,0,1.0]"])
        assert res.exit_code == 2
        assert "sim.initial" in res.output

    def test_unknown_preset_exits_2(self, tmp_path):
        res = invoke(["band", "--config", "no-such-preset",
                      "--output-dir", str(tmp_path)])
        assert res.exit_code == 2

    def test_malformed_override_exits_2(self, tmp_path):
        res = invoke(["band", "--output-dir", str(tmp_path),
                      "--set", "model.kappa"])
        assert res.exit_code == 2
        assert "key=value" in res.output

    def test_unknown_model_key_names_section(self, tmp_path):
        res = invoke(["band", "--output-dir", str(tmp_path),
                      "--set", "model.frobnicate=3"])
        assert res.exit_code == 2
        assert "model" in res.output

    def test_unknown_emit_name_exits_2(self, tmp_path):
        res = invoke(["run", "--output-dir", str(tmp_path),
                      "--set", 'emit=["band","wumpus"]'])
        assert res.exit_code == 2
        assert "wumpus" in res.output

    def test_sweep_prior_outside_open_interval_exits_2(self, tmp_path):
        res = invoke(["values", "--output-dir", str(tmp_path),
                      "--set", "sweep=[0.5,1.0]"])
        assert res.exit_code == 2
        assert "sweep" in res.output

    def test_garbage_thread_env_exits_2(self, tmp_path, monkeypatch):
        monkeypatch.setenv("ASHJB_THREADS", "lots")
        res = invoke(["band", "--output-dir", str(tmp_path)])
        assert res.exit_code == 2
        assert "ASHJB_THREADS" in res.output

    def test_thread_flag_beats_env(self, tmp_path, monkeypatch):
        monkeypatch.setenv("ASHJB_THREADS", "lots")
        res = invoke(["band", "--output-dir", str(tmp_path),
                      "--threads", "1"])
        assert res.exit_code == 0

    def test_config_file_path_is_honored(self, tmp_path):
        doc = {"model": {"kappa": 0.1, "horizon_T": 1.0,
                         "action_min": 0.0, "action_max": 1.0,
                         "cost_kind": "dominated",
                         "cost_params": {"curvature": [1.0, 2.0],
                                         "linear": [0.0, 0.0]}}}
        cfg = tmp_path / "my.json"
        cfg.write_text(json.dumps(doc))
        res = invoke(["band", "--config", str(cfg),
                      "--output-dir", str(tmp_path / "out")])
        assert res.exit_code == 0, res.output
        header, rows = read_rows(tmp_path / "out" / "band.csv")
        assert float(rows[-1]["t"]) == 1.0  # horizon came from the file


class TestLightArtifacts:
    def test_band_schema_and_closed_form(self, tmp_path):
        res = invoke(["band", "--output-dir", str(tmp_path)])
        assert res.exit_code == 0, res.output
        header, rows = read_rows(tmp_path / "band.csv")
        assert header == ["t", "W_lower", "W_upper"]
        assert len(rows) == 51  # grid default n_time=50
        assert rows[0]["W_upper"] == "1.81269246922"
        assert all(r["W_lower"] == "0" for r in rows)
        assert rows[-1]["W_upper"] == "0"

    def test_band_nondominated_is_symmetric(self, tmp_path):
        res = invoke(["band", "--config", "nondominated",
                      "--output-dir", str(tmp_path)])
        assert res.exit_code == 0, res.output
        _, rows = read_rows(tmp_path / "band.csv")
        for r in rows:
            assert math.isclose(float(r["W_lower"]), -float(r["W_upper"]),
                                rel_tol=0.0, abs_tol=1e-12)

    def test_boundary_schema(self, tmp_path):
        res = invoke(["boundary", "--output-dir", str(tmp_path),
                      "--set", "grid.n_time=25"])
        assert res.exit_code == 0, res.output
        header, rows = read_rows(tmp_path / "boundary.csv")
        assert header == ["t", "wbar", "wunder", "v0_upper", "v0_lower",
                          "v1_upper", "v1_lower"]
        assert len(rows) == 26
        # every wall value dies at the horizon
        assert all(v == "0" for k, v in rows[-1].items() if k != "t")


class TestRunPipeline:
    def test_all_artifacts_written(self, run_a):
        out, _ = run_a
        for name in CSV_NAMES:
            assert (out / name).is_file(), name
        assert (out / "field.npz").is_file()
        assert (out / "field_summary.json").is_file()
        assert (out / "summary.json").is_file()

    def test_field_table_covers_the_grid(self, run_a):
        out, _ = run_a
        header, rows = read_rows(out / "field.csv")
        assert header == ["t", "s", "p", "y", "w",
                          "z0_star", "z1_star", "boundary_flag"]
        assert len(rows) == 26 * 21 * 11
        flags = {r["boundary_flag"] for r in rows}
        assert flags <= {"0", "1", "2"}

    def test_values_and_screen_cover_the_sweep(self, run_a):
        out, _ = run_a
        header_v, rows_v = read_rows(out / "values.csv")
        assert header_v == ["p0", "v_c", "y0_c", "y1_c",
                            "v_uc", "y0_uc", "y1_uc"]
        header_s, rows_s = read_rows(out / "screen.csv")
        assert header_s == ["p0", "v_s", "y0", "y1c", "y0c", "y1"]
        assert [r["p0"] for r in rows_v] == ["0.2", "0.5", "0.8"]
        assert [r["p0"] for r in rows_s] == ["0.2", "0.5", "0.8"]

    def test_compare_orders_the_three_regimes(self, run_a):
        out, _ = run_a
        header, rows = read_rows(out / "compare.csv")
        assert header == ["p0", "v_c", "v_s", "v_uc"]
        assert len(rows) == 3
        for r in rows:
            v_c, v_s, v_uc = (float(r[k]) for k in ("v_c", "v_s", "v_uc"))
            assert v_c <= v_s + 1e-2
            assert v_s <= v_uc + 1e-2

    def test_trajectory_table_shape(self, run_a):
        out, _ = run_a
        header, rows = read_rows(out / "trajectory.csv")
        assert header == ["path", "t", "X", "p", "Y0", "Y1",
                          "W_lower", "W_upper", "z0", "z1", "boundary_flag"]
        assert len(rows) == 5 * 201
        assert rows[0]["t"] == "0"
        assert rows[200]["t"] == "2"

    def test_summary_reports_every_check_passing(self, run_a):
        out, stdout = run_a
        doc = json.loads((out / "summary.json").read_text())
        assert set(doc["checks"]) == {
            "apriori_sandwich", "control_truncation", "ordering",
            "band_violations", "terminal_gap", "filter_shadow",
        }
        assert all(doc["checks"].values())
        assert doc["passed"] is True
        assert "check ordering: pass" in stdout

    def test_summary_carries_structural_constants(self, run_a):
        out, _ = run_a
        consts = json.loads((out / "summary.json").read_text())["constants"]
        assert math.isclose(consts["a_lower"], 0.0, abs_tol=1e-12)
        assert math.isclose(consts["a_upper"], 1.0, rel_tol=1e-12)
        assert math.isclose(consts["c0_saturation"], 2.0 * math.sqrt(2.0),
                            rel_tol=1e-12)
        assert consts["c_upper_envelope"] > 0.0
        assert consts["c_lower_envelope"] < 0.0

    def test_single_prior_config_gives_one_row_tables(self, tmp_path):
        res = invoke(["values", "--output-dir", str(tmp_path),
                      "--set", "grid.n_time=25", "--set", "grid.n_gap=20",
                      "--set", "grid.n_belief=10", "--set", "sweep=[0.5]"])
        assert res.exit_code == 0, res.output
        _, rows = read_rows(tmp_path / "values.csv")
        assert len(rows) == 1
        assert rows[0]["p0"] == "0.5"


class TestCheckOnlyAndCompare:
    def test_check_only_reuses_the_archive(self, run_a):
        out, _ = run_a
        res = invoke(["solve", "--check-only", "--output-dir", str(out),
                      *COARSE])
        assert res.exit_code == 0, res.output
        assert "apriori_sandwich: pass" in res.output

    def test_check_only_without_archive_exits_3(self, tmp_path):
        res = invoke(["solve", "--check-only", "--output-dir",
                      str(tmp_path)])
        assert res.exit_code == 3
        assert "field.npz" in res.output

    def test_archive_rejects_a_different_model(self, run_a):
        out, _ = run_a
        with pytest.raises(ConfigError, match="different model"):
            output.load_field(out / "field.npz",
                              model.nondominated_spec(1.0, -1.0))

    def test_check_only_flags_model_mismatch(self, run_a):
        out, _ = run_a
        res = invoke(["solve", "--check-only", "--output-dir", str(out),
                      "--set", "model.kappa=0.3"])
        assert res.exit_code == 2
        assert "different model" in res.output

    def test_compare_joins_upstream_tables(self, run_a):
        out, _ = run_a
        res = invoke(["compare", "--output-dir", str(out)])
        assert res.exit_code == 0, res.output
        assert "check ordering: pass" in res.output

    def test_compare_without_upstream_exits_3(self, tmp_path):
        res = invoke(["compare", "--output-dir", str(tmp_path)])
        assert res.exit_code == 3
        assert "values.csv" in res.output


class TestDeterminism:
    def test_rerun_is_byte_identical(self, run_a, run_b):
        out_a, _ = run_a
        for name in CSV_NAMES:
            assert (out_a / name).read_bytes() == (run_b / name).read_bytes(), name

    def test_thread_count_does_not_change_results(self, run_a,
                                                  tmp_path_factory):
        out_a, _ = run_a
        out_c = tmp_path_factory.mktemp("run-c")
        res = invoke(["run", "--output-dir", str(out_c), "--threads", "3",
                      *COARSE])
        assert res.exit_code == 0, res.output
        for name in CSV_NAMES:
            assert (out_a / name).read_bytes() == (out_c / name).read_bytes(), name
        doc_a = json.loads((out_a / "summary.json").read_text())
        doc_c = json.loads((out_c / "summary.json").read_text())
        assert doc_a["simulate"]["payoff_mean"] == doc_c["simulate"]["payoff_mean"]
        assert doc_a["simulate"]["payoff_se"] == doc_c["simulate"]["payoff_se"]

    def test_seed_flag_changes_the_sample(self, run_a, tmp_path):
        out_a, _ = run_a
        res = invoke(["simulate", "--output-dir", str(tmp_path),
                      "--seed", "99", *COARSE])
        assert res.exit_code == 0, res.output
        doc_a = json.loads((out_a / "summary.json").read_text())
        doc_s = json.loads((tmp_path / "simulate_summary.json").read_text())
        assert doc_s["seed"] == 99
        assert doc_s["payoff_mean"] != doc_a["simulate"]["payoff_mean"]
