"""Experiment harness: scenario files, sweeps, CSV, validation, figures."""

import dataclasses
import math
from pathlib import Path

import numpy as np
import pytest

from irsec.channel import Scenario
from irsec.harness import (ALGORITHMS, CSV_HEADER, FIGURES, ExperimentSpec,
                           RunRecord, apply_axis, emit_csv, emit_plot,
                           load_scenario, parse_csv, run_experiment,
                           scenario_hash, validate_robustness, write_outputs)

TINY = Scenario(n_tx=2, n_irs=3, n_users=2, ao_max_iter=6)


# -- scenario files ------------------------------------------------------

def test_empty_scenario_file_gives_defaults(tmp_path):
    f = tmp_path / "empty.cfg"
    f.write_text("")
    assert load_scenario(f) == Scenario()


def test_single_override_changes_only_that_field(tmp_path):
    f = tmp_path / "m.cfg"
    f.write_text("system.n_irs = 32\n")
    loaded = load_scenario(f)
    assert loaded.n_irs == 32
    defaults = dataclasses.asdict(Scenario())
    got = dataclasses.asdict(loaded)
    for key in defaults:
        if key != "n_irs":
            assert got[key] == defaults[key], key


def test_bare_keys_comments_and_geometry(tmp_path):
    f = tmp_path / "full.cfg"
    f.write_text(
        "# downlink with a wider surface\n"
        "n_irs = 8\n"
        "link.power = 0.2   # watts\n"
        "geometry.irs = 0, 30, 35\n"
        "\n"
        "solver.ao_max_iter = 7\n")
    s = load_scenario(f)
    assert s.n_irs == 8
    assert s.power == 0.2
    assert s.geometry.irs == (0.0, 30.0, 35.0)
    assert s.ao_max_iter == 7


def test_out_of_range_value_error_names_the_field(tmp_path):
    f = tmp_path / "bad.cfg"
    f.write_text("uncertainty.delta_user = 1.5\n")
    with pytest.raises(ValueError, match="delta_user"):
        load_scenario(f)


def test_unknown_key_is_rejected_by_name(tmp_path):
    f = tmp_path / "unk.cfg"
    f.write_text("system.bogus = 3\n")
    with pytest.raises(ValueError, match="bogus"):
        load_scenario(f)


def test_malformed_line_reports_position(tmp_path):
    f = tmp_path / "syntax.cfg"
    f.write_text("n_irs 8\n")
    with pytest.raises(ValueError, match=":1"):
        load_scenario(f)


def test_unparseable_number_names_the_key(tmp_path):
    f = tmp_path / "num.cfg"
    f.write_text("link.power = lots\n")
    with pytest.raises(ValueError, match="power"):
        load_scenario(f)


def test_scenario_hash_tracks_content():
    a = scenario_hash(Scenario())
    assert a == scenario_hash(Scenario())
    assert a != scenario_hash(Scenario(n_irs=17))
    assert len(a) == 12


# -- sweep mechanics -----------------------------------------------------

def test_apply_axis_touches_the_right_field():
    base = Scenario()
    assert apply_axis(base, "delta", 0.05).delta_user == 0.05
    assert apply_axis(base, "delta", 0.05).delta_eve == 0.05
    assert apply_axis(base, "K", 4).n_users == 4
    assert apply_axis(base, "t_t", 2.0e-4).t_transmit == 2.0e-4
    assert apply_axis(base, "M", 32).n_irs == 32
    assert apply_axis(base, "none", 0.0) == base


@pytest.mark.parametrize("kwargs", [
    dict(axis="frequency", values=(1.0,)),
    dict(axis="delta"),
    dict(axis="delta", values=(1.5,)),
    dict(axis="K", values=(0,)),
    dict(axis="t_t", values=(0.0,)),
    dict(algorithms=("maxmin-fbr", "gradient-descent")),
    dict(algorithms=()),
    dict(csi="oracle"),
    dict(seeds=0),
])
def test_spec_validation_rejects(kwargs):
    with pytest.raises(ValueError):
        ExperimentSpec(base=TINY, **kwargs)


def test_spec_accepts_every_known_algorithm():
    spec = ExperimentSpec(base=TINY, algorithms=ALGORITHMS)
    assert spec.axis_values == (0.0,)


@pytest.fixture(scope="module")
def tiny_sweep(tmp_path_factory):
    out = tmp_path_factory.mktemp("sweep")
    spec = ExperimentSpec(base=TINY, algorithms=("maxmin-lbr", "maxmin-fbr"),
                          seeds=2, out_dir=str(out))
    outputs = run_experiment(spec)
    write_outputs(spec, outputs)
    return spec, outputs, out


def test_sweep_cardinality_and_record_shape(tiny_sweep):
    spec, outputs, _ = tiny_sweep
    assert len(outputs) == 2 * 2
    for o in outputs:
        rec = o.record
        assert rec.algorithm in spec.algorithms
        assert len(rec.per_user_srs_bps) == TINY.n_users
        assert rec.min_sr_bps >= 0.0
        assert rec.min_sr_bps == pytest.approx(min(rec.per_user_srs_bps))
        assert rec.ssr_bps == pytest.approx(sum(rec.per_user_srs_bps))
        if not math.isnan(rec.jain):
            assert 1.0 / TINY.n_users - 1e-12 <= rec.jain <= 1.0 + 1e-12
        assert rec.iterations >= 1
        assert rec.wall_time > 0.0


def test_identical_spec_reproduces_csv_bytes(tiny_sweep, tmp_path):
    spec, _, out = tiny_sweep
    again = ExperimentSpec(base=TINY, algorithms=spec.algorithms,
                           seeds=spec.seeds, out_dir=str(tmp_path))
    write_outputs(again, run_experiment(again))
    assert (tmp_path / "records.csv").read_bytes() == \
        (out / "records.csv").read_bytes()


def test_csv_schema_sorting_and_round_trip(tiny_sweep):
    _, outputs, out = tiny_sweep
    text = (out / "records.csv").read_text(encoding="utf-8")
    lines = text.strip().splitlines()
    assert lines[0] == CSV_HEADER
    assert len(lines) == 1 + len(outputs)
    assert "," in text and ";" in text
    assert " " not in text     # plain ASCII numbers, '.' decimal
    keys = [(ln.split(",")[4], ln.split(",")[2], ln.split(",")[1])
            for ln in lines[1:]]
    assert keys == sorted(keys)
    parsed = parse_csv(out / "records.csv")
    assert [r.csv_line() for r in parsed] == lines[1:]


def test_wall_time_lives_outside_the_csv(tiny_sweep):
    _, _, out = tiny_sweep
    assert "wall" not in (out / "records.csv").read_text()
    meta = (out / "meta.json").read_text()
    assert "wall_times" in meta


def test_traces_table_backs_convergence(tiny_sweep, tmp_path):
    _, outputs, out = tiny_sweep
    lines = (out / "traces.csv").read_text().strip().splitlines()
    assert len(lines) == 1 + sum(len(o.metric_series_bps) for o in outputs)
    emit_plot(out / "traces.csv", "convergence", tmp_path / "conv.png")
    assert (tmp_path / "conv.png").stat().st_size > 1000


def test_emit_csv_refuses_empty():
    with pytest.raises(ValueError):
        emit_csv([], "/tmp/never.csv")


def test_failed_run_is_recorded_not_raised(tmp_path, monkeypatch):
    import irsec.harness as hmod

    def boom(*a, **k):
        raise RuntimeError("synthetic driver failure")

    monkeypatch.setattr(hmod, "run_maxmin_perfect", boom)
    spec = ExperimentSpec(base=TINY, algorithms=("maxmin-lbr",),
                          out_dir=str(tmp_path))
    outputs = run_experiment(spec)
    write_outputs(spec, outputs)
    assert len(outputs) == 1
    rec = outputs[0].record
    assert rec.status == "Failed:RuntimeError"
    assert math.isnan(rec.min_sr_bps)
    assert (tmp_path / "records.csv").exists()


# -- robust designs and revalidation -------------------------------------

@pytest.fixture(scope="module")
def robust_design(tmp_path_factory):
    out = tmp_path_factory.mktemp("robust")
    base = TINY.with_updates(ao_max_iter=3, pccp_max_iter=20)
    spec = ExperimentSpec(base=base, algorithms=("maxmin-fbr",),
                          csi="robust", out_dir=str(out))
    outputs = run_experiment(spec)
    write_outputs(spec, outputs)
    designs = sorted(out.glob("robust_*.npz"))
    assert len(designs) == 1
    return out, designs[0]


def test_stored_design_passes_sampled_validation(robust_design):
    _, path = robust_design
    passed, margin, message = validate_robustness(
        path, 300, np.random.default_rng(3))
    assert passed, message
    assert margin >= -1.0e-4


def test_zero_radius_design_validates_exactly(tmp_path):
    base = TINY.with_updates(ao_max_iter=3, pccp_max_iter=20,
                             delta_user=0.0, delta_eve=0.0)
    spec = ExperimentSpec(base=base, algorithms=("maxmin-fbr",),
                          csi="robust", out_dir=str(tmp_path))
    write_outputs(spec, run_experiment(spec))
    path = sorted(tmp_path.glob("robust_*.npz"))[0]
    passed, margin, _ = validate_robustness(path, 50,
                                            np.random.default_rng(5))
    assert passed
    # no error ball: every sample reproduces the certified value
    assert abs(margin) < 1.0e-9


def test_inflated_certificate_is_caught(robust_design, tmp_path):
    _, path = robust_design
    data = dict(np.load(path, allow_pickle=False))
    data["certified_min"] = data["certified_min"] + 10.0
    fake = tmp_path / "tampered.npz"
    np.savez(fake, **data)
    passed, margin, message = validate_robustness(
        fake, 300, np.random.default_rng(3))
    assert not passed
    assert margin < -1.0e-4
    assert "FAIL" in message


# -- figures -------------------------------------------------------------

def _fake_records(axis, values, algorithms, seeds=3):
    rng = np.random.default_rng(11)
    records = []
    for v in values:
        for algo in algorithms:
            for seed in range(seeds):
                users = tuple(float(x) for x in rng.uniform(0.1, 2.0, 2))
                records.append(RunRecord(
                    "cafecafecafe", seed, algo, axis, float(v),
                    min(users), users, sum(users),
                    float(rng.uniform(0.5, 1.0)), 10, "Converged"))
    return records


@pytest.mark.parametrize("figure,axis,values", [
    ("sr-dist", "none", (0.0,)),
    ("jain-vs-delta", "delta", (0.0, 0.02, 0.05)),
    ("minsr-vs-delta", "delta", (0.0, 0.02, 0.05)),
    ("minsr-vs-K", "K", (2, 4, 6)),
    ("minsr-vs-tt", "t_t", (5e-5, 1e-4, 2e-4)),
])
def test_each_record_figure_renders(figure, axis, values, tmp_path):
    records = _fake_records(axis, values, ("maxmin-fbr", "maxmin-lbr"))
    emit_csv(records, tmp_path / "records.csv")
    emit_plot(tmp_path / "records.csv", figure, tmp_path / "fig.png")
    assert (tmp_path / "fig.png").stat().st_size > 1000


def test_every_declared_figure_is_exercised():
    assert set(FIGURES) == {"convergence", "sr-dist", "jain-vs-delta",
                            "minsr-vs-delta", "minsr-vs-K", "minsr-vs-tt"}


def test_convergence_rejects_record_table(tmp_path):
    records = _fake_records("none", (0.0,), ("maxmin-fbr",))
    emit_csv(records, tmp_path / "records.csv")
    with pytest.raises(ValueError, match="traces"):
        emit_plot(tmp_path / "records.csv", "convergence",
                  tmp_path / "x.png")


def test_unknown_figure_rejected(tmp_path):
    records = _fake_records("none", (0.0,), ("maxmin-fbr",))
    emit_csv(records, tmp_path / "records.csv")
    with pytest.raises(ValueError, match="waterfall"):
        emit_plot(tmp_path / "records.csv", "waterfall", tmp_path / "x.png")


# -- command line --------------------------------------------------------

@pytest.fixture()
def cli_runner():
    from click.testing import CliRunner
    return CliRunner()


def _write_tiny_scenario(path):
    path.write_text(
        "system.n_tx = 2\nsystem.n_irs = 3\nsystem.n_users = 2\n"
        "solver.ao_max_iter = 10\n")


def test_cli_run_plot_cycle(cli_runner, tmp_path):
    from irsec.cli import main
    cfg = tmp_path / "tiny.cfg"
    _write_tiny_scenario(cfg)
    out = tmp_path / "out"
    result = cli_runner.invoke(main, [
        "run", "--scenario", str(cfg), "--algos", "maxmin-lbr",
        "--csi", "perfect", "--seeds", "1", "--out", str(out)])
    assert (out / "records.csv").exists(), result.output
    records = parse_csv(out / "records.csv")
    assert len(records) == 1
    converged = records[0].status == "Converged"
    assert result.exit_code == (0 if converged else 1), result.output
    fig = tmp_path / "dist.png"
    result = cli_runner.invoke(main, [
        "plot", "--in", str(out / "records.csv"), "--fig", "sr-dist",
        "--out", str(fig)])
    assert result.exit_code == 0, result.output
    assert fig.stat().st_size > 1000


def test_cli_run_rejects_bad_sweep(cli_runner, tmp_path):
    from irsec.cli import main
    result = cli_runner.invoke(main, [
        "run", "--sweep", "frequency=1,2", "--out", str(tmp_path)])
    assert result.exit_code != 0
    assert "frequency" in result.output


def test_cli_validate_robust_dir(cli_runner, robust_design):
    from irsec.cli import main
    out, _ = robust_design
    result = cli_runner.invoke(main, [
        "validate", "--in", str(out), "--samples", "100"])
    assert result.exit_code == 0, result.output
    assert "ok:" in result.output


def test_cli_validate_empty_dir_fails(cli_runner, tmp_path):
    from irsec.cli import main
    result = cli_runner.invoke(main, ["validate", "--in", str(tmp_path)])
    assert result.exit_code == 1
    assert "no robust design" in result.output
