import itertools
import math
import warnings
from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from bayesbench import benchfns, harness
from bayesbench.harness import ExperimentConfig, RunRecord, SchemaError
from bayesbench.optim import OptRun

EPS = harness.DEFAULT_EPSILONS


def record(alg="PSO", bm="sphere6d", noise=0.0, budget=100, rep=0, delta_f=0.5, euclid=1.0, feval=None,
           cpu=1.0, dim=6):
    solved = tuple(delta_f < e for e in EPS)
    if feval is None:
        feval = tuple(10 if s else None for s in solved)
    return RunRecord(alg, bm, dim, noise, budget, rep, delta_f, euclid, EPS, solved, feval, cpu)


# -- configuration and experiment ----------------------------------------------


def test_full_grid_has_24000_runs():
    cfg = ExperimentConfig(
        algorithms=["PSO", "DifferentialEvolution", "SimulatedAnnealing", "NelderMead", "CuckooSearch", "CMAES",
                    "RandomSearch1", "RandomSearch2"],
        benchmarks=benchfns.registry_list(),
        repetitions=10,
    )
    # 12 bundled functions instead of 30; the product rule is what matters
    assert cfg.n_runs == 8 * 12 * 2 * 5 * 10
    assert cfg.n_runs * 30 // 12 == 24_000


def test_small_grid_row_count():
    cfg = ExperimentConfig(["PSO", "RandomSearch1"], ["sphere6d", "zakharov2d", "qing2d"], noise_levels=[0.0],
                           budgets_per_dim=[20], repetitions=5, timing="off")
    rows = harness.run_experiment(cfg)
    assert len(rows) == cfg.n_runs == 30
    assert len({r.key for r in rows}) == 30


def test_same_seed_gives_byte_identical_csv(tiny_config, tiny_dataset):
    again = harness.run_experiment(tiny_config)
    assert harness.dumps_csv(again) == harness.dumps_csv(tiny_dataset)


def test_parallel_run_matches_serial(tiny_config, tiny_dataset):
    assert harness.dumps_csv(harness.run_experiment(tiny_config, jobs=2)) == harness.dumps_csv(tiny_dataset)


def test_different_master_seed_changes_results(tiny_config, tiny_dataset):
    other = harness.run_experiment(replace(tiny_config, master_seed=12))
    assert harness.dumps_csv(other) != harness.dumps_csv(tiny_dataset)


@pytest.mark.parametrize(
    "change, path",
    [
        ({"algorithms": ["Hillclimber"]}, "config.algorithms[0]"),
        ({"benchmarks": ["nosuch"]}, "config.benchmarks[0]"),
        ({"repetitions": 0}, "config.repetitions"),
        ({"epsilons": [0.1, 1.0]}, "config.epsilons"),
        ({"budgets_per_dim": []}, "config.budgets_per_dim"),
        ({"noise_levels": [-1.0]}, "config.noise_levels[0]"),
        ({"colour": "blue"}, "config.colour"),
    ],
)
def test_invalid_config_names_the_field(change, path):
    base = {"algorithms": ["PSO"], "benchmarks": ["sphere6d"]}
    with pytest.raises(SchemaError, match=path.replace("[", r"\[").replace("]", r"\]")):
        ExperimentConfig.from_dict({**base, **change})


def test_config_round_trips_through_dict(tiny_config):
    assert ExperimentConfig.from_dict(tiny_config.to_dict()) == tiny_config


def test_records_satisfy_their_invariants(tiny_dataset):
    for r in tiny_dataset:
        assert r.delta_f >= -1e-9
        for e, s, f in zip(r.epsilons, r.solved, r.feval):
            assert s == (r.delta_f < e)
            assert (f is not None) == s
            if f is not None:
                assert 1 <= f <= r.budget_per_dim * r.dimension
        # solved at a tight threshold implies solved at every looser one
        for i in range(1, len(r.solved)):
            assert r.solved[i] <= r.solved[i - 1]


# -- metrics -------------------------------------------------------------------


def _run(best_x, trace):
    fn = benchfns.get_function("sphere6d")
    evals, deltas = zip(*trace)
    return OptRun(np.asarray(best_x, float), float(fn(best_x)), np.array(evals), np.array(deltas), evals[-1], 0.1)


def test_metrics_at_global_minimum():
    fn = benchfns.get_function("sphere6d")
    m = harness.metrics_from_run(_run(np.zeros(6), [(1, 4.0), (7, 0.5), (30, 0.0)]), fn, EPS)
    assert m["delta_f"] == 0 and m["euclid"] == 0
    assert m["solved"] == (True,) * 4
    assert m["feval"] == (7, 30, 30, 30)


def test_unsolved_threshold_has_no_feval():
    fn = benchfns.get_function("sphere6d")
    x = np.array([0.01, 0, 0, 0, 0, 0])
    m = harness.metrics_from_run(_run(x, [(1, 3.0), (5, 1e-4)]), fn, EPS)
    assert m["solved"][-1] is False and m["feval"][-1] is None


def test_threshold_arithmetic():
    fn = benchfns.get_function("sphere6d")
    x = np.array([math.sqrt(0.05), 0, 0, 0, 0, 0])
    m = harness.metrics_from_run(_run(x, [(1, 0.05)]), fn, EPS)
    assert m["solved"] == (True, True, False, False)


# -- CSV -----------------------------------------------------------------------


def test_csv_round_trip(tmp_path, tiny_dataset):
    path = tmp_path / "d.csv"
    harness.write_csv(tiny_dataset, path)
    assert harness.read_csv(path) == tiny_dataset


def test_csv_header_order():
    assert harness.csv_header(EPS) == [
        "algorithm", "benchmark", "dimension", "noise", "budget_per_dim", "repetition", "delta_f", "euclid",
        "solved_1", "solved_0.1", "solved_1e-3", "solved_1e-6",
        "feval_1", "feval_0.1", "feval_1e-3", "feval_1e-6", "cpu_seconds",
    ]


def test_unsolved_row_has_empty_feval_field():
    text = harness.dumps_csv([record(delta_f=0.5)])
    header, row = [line.split(",") for line in text.strip().splitlines()]
    cells = dict(zip(header, row))
    assert cells["solved_0.1"] == "0" and cells["feval_0.1"] == ""
    assert cells["solved_1"] == "1" and cells["feval_1"] == "10"


def test_timing_off_leaves_cpu_empty(tiny_dataset):
    assert all(r.cpu_seconds is None for r in tiny_dataset)
    assert harness.dumps_csv(tiny_dataset).splitlines()[1].endswith(",")


def test_header_mismatch_is_a_schema_error(tmp_path):
    path = tmp_path / "bad.csv"
    path.write_text("algorithm,benchmark\nPSO,sphere6d\n")
    with pytest.raises(SchemaError):
        harness.read_csv(path)


def test_malformed_row_names_line_and_column(tmp_path):
    path = tmp_path / "bad.csv"
    lines = harness.dumps_csv([record(), record(rep=1)]).splitlines()
    lines[2] = lines[2].replace(",0.5,", ",abc,", 1)
    path.write_text("\n".join(lines) + "\n")
    with pytest.raises(SchemaError, match=r":3: column 'delta_f'"):
        harness.read_csv(path)


# -- filters and model inputs ---------------------------------------------------


def test_filters_accept_lists_and_comma_strings(tiny_dataset):
    a = harness.apply_filters(tiny_dataset, {"algorithm": "PSO,RandomSearch1", "noise": "0"})
    b = harness.apply_filters(tiny_dataset, {"algorithm": ["PSO", "RandomSearch1"], "noise": 0.0})
    assert a == b and len(a) == 2 * 2 * 3
    with pytest.raises(SchemaError, match="unknown filter"):
        harness.apply_filters(tiny_dataset, {"colour": "red"})


def test_binomial_counts_successes_per_group():
    rows = [record(rep=i, delta_f=0.05 if i < 2 else 0.5) for i in range(10)]
    data = harness.prepare_binomial(rows, 0.1)
    assert list(data.n_trials) == [10] and list(data.y) == [2]


def test_binomial_all_solved_gives_y_equal_n():
    data = harness.prepare_binomial([record(rep=i, delta_f=0.0) for i in range(4)], 0.1)
    assert list(data.y) == list(data.n_trials) == [4]


def test_binomial_keeps_budgets_separate():
    rows = [record(budget=b, rep=i) for b in (100, 1000) for i in range(3)]
    assert harness.prepare_binomial(rows, 0.1).n_obs == 2


def test_binomial_successes_sum_to_solved_rows(tiny_dataset):
    data = harness.prepare_binomial(tiny_dataset, 1.0)
    assert data.y.sum() == sum(r.solved_at(1.0) for r in tiny_dataset)
    assert data.n_trials.sum() == len(tiny_dataset)


def test_empty_selection_is_rejected(tiny_dataset):
    with pytest.raises(SchemaError, match="select no rows"):
        harness.prepare_binomial(tiny_dataset, 0.1, {"algorithm": "CMAES"})


def test_unlogged_epsilon_is_rejected():
    with pytest.raises(KeyError, match="not logged"):
        harness.prepare_binomial([record()], 0.5)


def _ri_rows(d_alg, d_base=(1.0, 3.0)):
    rows = [record(alg="RandomSearch1", rep=i, euclid=d) for i, d in enumerate(d_base)]
    return rows + [record(alg="PSO", rep=0, euclid=d_alg)]


@pytest.mark.parametrize("d_alg, expected", [(0.0, 1.0), (2.0, 0.0), (6.0, -1.0)])
def test_relative_improvement_values(d_alg, expected):
    data = harness.prepare_relative_improvement(_ri_rows(d_alg))
    assert data.algorithms == ["PSO"]
    assert data.y[0] == pytest.approx(expected)


def test_relative_improvement_needs_a_baseline():
    with pytest.raises(SchemaError, match="baseline"):
        harness.prepare_relative_improvement([record(alg="PSO")])


def test_relative_improvement_drops_degenerate_baseline():
    rows = _ri_rows(1.0, d_base=(0.0, 0.0)) + [
        record(alg="RandomSearch1", bm="zakharov2d", euclid=2.0),
        record(alg="PSO", bm="zakharov2d", euclid=1.0),
    ]
    with pytest.warns(RuntimeWarning, match="zero baseline"):
        data = harness.prepare_relative_improvement(rows)
    assert data.benchmarks == ["zakharov2d"] and data.y.tolist() == [0.5]


def test_relative_improvement_uses_noiseless_rows_only():
    rows = _ri_rows(0.0) + [record(alg="PSO", noise=3.0, rep=5, euclid=100.0)]
    assert harness.prepare_relative_improvement(rows).n_obs == 1


def test_pairs_lower_delta_f_wins():
    rows = [record(alg="A", delta_f=0.2), record(alg="B", delta_f=0.5)]
    data = harness.prepare_pairs(rows)
    assert data.algorithms[data.algo0[0]] == "A" and data.y[0] == 0


def test_pairs_tie_kept_or_randomised():
    rows = [record(alg="A", delta_f=0.3), record(alg="B", delta_f=0.3)]
    kept = harness.prepare_pairs(rows, tie_mode="keep_ties")
    assert kept.tie.tolist() == [True]
    rand = harness.prepare_pairs(rows, tie_mode="random_winner")
    assert rand.tie.tolist() == [False] and rand.y[0] in (0, 1)


def test_pairs_need_two_algorithms():
    with pytest.raises(SchemaError, match="two algorithms"):
        harness.prepare_pairs([record(alg="A")])


def test_eight_algorithms_give_28_pairs_per_block():
    algs = [f"A{i}" for i in range(8)]
    rows = [record(alg=a, rep=r, delta_f=float(i + r)) for i, a in enumerate(algs) for r in range(2)]
    data = harness.prepare_pairs(rows)
    assert data.n_obs == 2 * 28
    assert np.all(data.algo0 != data.algo1)


def test_survival_event_and_censoring():
    solved = record(delta_f=0.0, feval=(1200,) * 4, dim=6)
    unsolved = record(delta_f=5.0, budget=100_000, rep=1, dim=6)
    data = harness.prepare_survival([solved, unsolved], 0.1)
    assert sorted(zip(data.y.tolist(), data.event.tolist())) == [(200.0, 1), (100_000.0, 0)]


def test_survival_top4_filter():
    algs = ["CMAES", "DifferentialEvolution", "PSO", "RandomSearch1", "NelderMead", "SimulatedAnnealing"]
    rows = [record(alg=a) for a in algs]
    data = harness.prepare_survival(rows, 1.0, {"algorithm": list(harness.TOP4)})
    assert data.algorithms == sorted(harness.TOP4)


def test_cpu_scaling():
    data = harness.prepare_cpu([record(cpu=1.2, budget=10_000, dim=6)])
    assert data.y[0] == pytest.approx(0.2)


def test_cpu_filter_and_missing_timing():
    rows = [record(alg="PSO"), record(alg="CMAES")]
    assert harness.prepare_cpu(rows, {"algorithm": "PSO"}).algorithms == ["PSO"]
    with pytest.raises(SchemaError, match="timing off"):
        harness.prepare_cpu([record(cpu=None)])


def test_model_input_rejects_y_above_n():
    with pytest.raises(SchemaError, match="y <= N"):
        harness.ModelInput("binomial", np.array([3]), np.array([0]), ["A"], ["B"], alg_idx=np.array([0]),
                           n_trials=np.array([2]))


def test_model_input_rejects_out_of_range_index():
    with pytest.raises(SchemaError, match="out of range"):
        harness.ModelInput("linear", np.zeros(1), np.array([2]), ["A"], ["B"], alg_idx=np.array([0]))


@settings(max_examples=40, deadline=None)
@given(st.integers(2, 6), st.integers(1, 3), st.integers(1, 3), st.integers(0, 10**6))
def test_pair_rows_are_k_choose_2_per_block(k, n_bm, reps, seed):
    rng = np.random.default_rng(seed)
    rows = [
        record(alg=f"A{a}", bm=f"B{b}", rep=r, delta_f=float(rng.integers(3)))
        for a, b, r in itertools.product(range(k), range(n_bm), range(reps))
    ]
    for mode in ("random_winner", "keep_ties"):
        data = harness.prepare_pairs(rows, tie_mode=mode, seed=seed)
        assert data.n_obs == n_bm * reps * math.comb(k, 2)


@settings(max_examples=60, deadline=None)
@given(st.floats(0, 10, allow_nan=False))
def test_solved_is_monotone_in_epsilon(delta_f):
    r = record(delta_f=delta_f)
    for tight, loose in zip(EPS[1:], EPS[:-1]):
        assert not r.solved_at(tight) or r.solved_at(loose)
