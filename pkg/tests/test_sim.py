import json

import numpy as np
import pytest

from movant.config import preset
from movant.sim import (
    EFFICIENCY_CAP,
    HEADER,
    MetricsRow,
    bootstrap_confidence,
    emit_results,
    energy_metrics,
    experiment_from_manifest,
    feasibility_ratio,
    prepare_output,
    read_metrics,
    realization_records,
    run_experiment,
    run_realization,
    short_term_trace,
)


@pytest.fixture
def tiny():
    return preset("desk", n_iter=3, batch_size=2, n_short_iter=3, eval_samples=6, realizations=2,
                  trace_eval_samples=3)


def row(**kw):
    base = dict(scheme="proposed-gmm", sweep_name="power", sweep_value=20.0, avg_sum_rate=3.5,
                feasibility_ratio=0.5, energy_eff=12.0, repositioning_delay=1e-3, realizations=4,
                seed=7)
    return MetricsRow(**{**base, **kw})


# --- metrics --------------------------------------------------------------------


def test_feasibility_ratio_examples():
    assert feasibility_ratio([[2.0, 1.5], [1.0, 3.0]], 1.0) == 1.0
    assert feasibility_ratio([[0.2, 1.5], [0.9, 3.0]], 1.0) == 0.0
    rates = [[2, 2], [2, 2], [2, 2], [0.5, 2]]
    assert feasibility_ratio(rates, 1.0) == 0.75
    with pytest.raises(ValueError):
        feasibility_ratio(np.zeros((0, 2)), 1.0)


def test_energy_single_antenna_arithmetic():
    # one user, one antenna moving 0.01 m every interval
    S = 5
    traj = np.zeros((S, 1, 1, 2))
    traj[:, 0, 0, 0] = 0.01 * np.arange(S)
    rates = np.full((S, 1), 2.0)
    eff, delay, dist = energy_metrics(traj, rates)
    assert dist == pytest.approx(0.01)
    assert eff == pytest.approx(2.0 / 0.1)  # power = 0.01 m * 10 / s * 1 J/m
    assert delay == pytest.approx(0.001)


def test_energy_static_trajectory():
    traj = np.zeros((4, 2, 2, 2))
    eff, delay, dist = energy_metrics(traj, np.ones((4, 2)))
    assert delay == 0.0 and dist == 0.0 and eff == EFFICIENCY_CAP


def test_energy_delay_uses_longest_antenna_move():
    traj = np.zeros((2, 1, 2, 2))
    traj[1, 0, 0] = [0.003, 0.004]  # 5 mm
    traj[1, 0, 1] = [0.001, 0.0]  # 1 mm
    _, delay, dist = energy_metrics(traj, np.ones((2, 1)))
    assert delay == pytest.approx(0.005 / 10)
    assert dist == pytest.approx(0.006)


def test_energy_needs_two_intervals():
    with pytest.raises(ValueError):
        energy_metrics(np.zeros((1, 1, 1, 2)), np.ones((1, 1)))


def test_metrics_row_invariants():
    with pytest.raises(ValueError):
        row(feasibility_ratio=1.5)
    with pytest.raises(ValueError):
        row(avg_sum_rate=-1.0)


# --- bootstrap ------------------------------------------------------------------


def test_bootstrap_confidence(rng):
    a = rng.normal(5, 1, 40)
    assert bootstrap_confidence(a + 10, a) == 1.0
    assert bootstrap_confidence(a, a + 10) == 0.0
    assert bootstrap_confidence(a, a) == 1.0  # ties count as holding
    b = rng.normal(5, 1, 40)
    c = bootstrap_confidence(a, b, seed=3)
    assert c == bootstrap_confidence(a, b, seed=3)
    assert 0.0 <= c <= 1.0
    mean = lambda x: x.mean(axis=1)  # noqa: E731
    assert bootstrap_confidence(a + 0.01, a, statistic=mean) == 1.0
    with pytest.raises(ValueError):
        bootstrap_confidence(a, a[:5])


# --- experiments ----------------------------------------------------------------


def test_one_realization_one_scheme_one_row(tiny):
    exp = run_experiment(tiny, schemes=["scsit-upa"], realizations=1, seed=1)
    assert len(exp.rows) == 1
    r = exp.rows[0]
    assert (r.scheme, r.sweep_name, r.sweep_value, r.realizations, r.seed) == (
        "scsit-upa", "power", tiny.power_dbm, 1, 1)


def test_sweep_rows_and_values(tiny):
    exp = run_experiment(tiny, schemes=["scsit-upa"], sweep=("power", [10, 20]), realizations=1)
    assert [r.sweep_value for r in exp.rows] == [10.0, 20.0]
    assert exp.config == tiny  # the sweep does not touch the base configuration
    with pytest.raises(ValueError):
        run_experiment(tiny, sweep=("colour", [1]))
    with pytest.raises(ValueError):
        run_experiment(tiny, sweep=("power", []))


def test_realization_independent_of_scheme_list(tiny):
    a = run_realization(tiny, ["decoupled-gmm"], 0, 5)
    b = run_realization(tiny, ["scsit-upa", "decoupled-gmm"], 0, 5)
    assert a[0].sum_rate == b[1].sum_rate
    assert np.array_equal(a[0].user_rates, b[1].user_rates)


def test_workers_do_not_change_results(tiny):
    a = run_experiment(tiny, schemes=["scsit-upa"], seed=2, workers=1)
    b = run_experiment(tiny, schemes=["scsit-upa"], seed=2, workers=2)
    assert a.rows == b.rows


def test_emitted_files_are_deterministic(tiny, tmp_path):
    outs = []
    for name in ("a", "b"):
        exp = run_experiment(tiny, schemes=["proposed-pmm"], seed=9)
        paths = emit_results(exp.rows, tmp_path / name, tiny,
                             extra={"per_realization": realization_records(exp)})
        outs.append({k: p.read_bytes() for k, p in paths.items()})
    assert outs[0] == outs[1]


def test_manifest_round_trip(tiny, tmp_path):
    exp = run_experiment(tiny, schemes=["scsit-upa", "scsit-gmm"], seed=4)
    extra = {"schemes": exp.schemes, "sweep": {"axis": exp.sweep_name, "values": exp.sweep_values},
             "per_realization": realization_records(exp)}
    paths = emit_results(exp.rows, tmp_path, tiny, extra=extra)
    manifest = json.loads(paths["manifest"].read_text())
    assert manifest["config"] == tiny.to_dict()
    back = experiment_from_manifest(paths["manifest"])
    assert back.rows == exp.rows
    for s in exp.schemes:
        assert np.array_equal(back.table(s, tiny.power_dbm), exp.table(s, tiny.power_dbm))


# --- files ----------------------------------------------------------------------


def test_one_row_gives_header_and_one_line(tiny, tmp_path):
    paths = emit_results([row()], tmp_path, tiny)
    lines = paths["metrics"].read_text().splitlines()
    assert len(lines) == 2
    assert lines[0].split(",") == HEADER


def test_table_round_trip(tiny, tmp_path):
    rows = [row(), row(scheme="scsit-upa", avg_sum_rate=1 / 3, energy_eff=EFFICIENCY_CAP,
                    feasibility_ratio=1.0, sweep_value=0.1 + 0.2)]
    paths = emit_results(rows, tmp_path, tiny)
    assert read_metrics(paths["metrics"]) == rows


def test_empty_rows_rejected(tiny, tmp_path):
    with pytest.raises(ValueError):
        emit_results([], tmp_path, tiny)


def test_unwritable_output(tmp_path):
    blocker = tmp_path / "file"
    blocker.write_text("x")
    with pytest.raises(OSError, match="not writable"):
        prepare_output(blocker / "sub")


def test_read_metrics_checks_header(tmp_path):
    p = tmp_path / "m.csv"
    p.write_text("a,b\n1,2\n")
    with pytest.raises(ValueError, match="unexpected header"):
        read_metrics(p)


# --- traces ---------------------------------------------------------------------


def test_gradient_ascent_trace_monotone(tiny):
    tr = short_term_trace(tiny, seed=3, kind="ga", n_samples=4)
    assert tr["user"].shape[:2] == (4, tiny.n_users)
    assert np.diff(tr["user"], axis=-1).min() >= 0
    assert np.allclose(tr["sum"], tr["user"].sum(axis=1))


def test_experiment_trace_recorded(tiny):
    exp = run_experiment(tiny, schemes=["proposed-gmm"], realizations=1, trace=True)
    tr = exp.results[0].trace
    assert len(tr["eval_sum_rate"]) == tiny.n_iter + 1
