import hashlib
import json

import pytest

from bayesbench import __version__
from bayesbench.cli import CliError, main, parse_filters, resolve_seed

FAST = ["--chains", "2", "--warmup", "200", "--iters", "200"]

TINY = {
    "algorithms": ["DifferentialEvolution", "PSO", "RandomSearch1"],
    "benchmarks": ["sphere6d", "zakharov2d"],
    "noise_levels": [0.0, 3.0],
    "budgets_per_dim": [20, 100],
    "repetitions": 3,
    "master_seed": 11,
    "timing": "off",
}


def digest(path):
    return hashlib.sha256(path.read_bytes()).hexdigest()


def tree(path):
    return {p.relative_to(path).as_posix(): p.read_bytes() for p in sorted(path.rglob("*")) if p.is_file()}


@pytest.fixture(autouse=True)
def no_env_seed(monkeypatch):
    monkeypatch.delenv("BAYESBENCH_SEED", raising=False)


@pytest.fixture(scope="module")
def work(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli")
    (root / "tiny.json").write_text(json.dumps(TINY))
    assert main(["bench", "--config", str(root / "tiny.json"), "--out", str(root / "data.csv"), "--jobs", "1"]) == 0
    return root


@pytest.fixture(scope="module")
def bt_fit(work):
    out = work / "fit_bt"
    code = main(["fit", "bradley_terry", str(work / "data.csv"), "--out", str(out), "--seed", "3", "--jobs", "1"]
                + FAST)
    assert code in (0, 3)
    return out


@pytest.fixture(scope="module")
def binomial_fit(work):
    out = work / "fit_bin"
    code = main(["fit", "binomial", str(work / "data.csv"), "--epsilon", "1.0", "--out", str(out), "--seed", "3",
                 "--jobs", "1"] + FAST)
    assert code in (0, 3)
    return out


@pytest.fixture(scope="module")
def cox_fit(work):
    out = work / "fit_cox"
    code = main(["fit", "cox", str(work / "data.csv"), "--epsilon", "1.0", "--out", str(out), "--seed", "3",
                 "--jobs", "1"] + FAST)
    assert code in (0, 3)
    return out


# -- seeds and flags -----------------------------------------------------------


def test_seed_flag_wins_over_environment(monkeypatch):
    monkeypatch.setenv("BAYESBENCH_SEED", "9")
    assert resolve_seed(4) == 4
    assert resolve_seed(None) == 9
    monkeypatch.delenv("BAYESBENCH_SEED")
    assert resolve_seed(None, fallback=5) == 5


def test_non_integer_environment_seed_is_a_validation_error(monkeypatch, work, tmp_path):
    monkeypatch.setenv("BAYESBENCH_SEED", "abc")
    with pytest.raises(CliError) as err:
        resolve_seed(None)
    assert err.value.code == 2
    assert main(["bench", "--config", str(work / "tiny.json"), "--out", str(tmp_path / "x.csv")]) == 2


def test_filters_accumulate_and_split_commas():
    assert parse_filters(["noise=0", "algorithm=PSO,RandomSearch1", "algorithm=CMAES"]) == {
        "noise": ["0"],
        "algorithm": ["PSO", "RandomSearch1", "CMAES"],
    }
    with pytest.raises(CliError):
        parse_filters(["noise"])


def test_version_flag(capsys):
    with pytest.raises(SystemExit) as err:
        main(["--version"])
    assert err.value.code == 0
    assert __version__ in capsys.readouterr().out


# -- bench ---------------------------------------------------------------------


def test_bench_writes_csv_and_manifest(work):
    manifest = json.loads((work / "data.csv.manifest.json").read_text())
    assert manifest["rows"] == 3 * 2 * 2 * 2 * 3
    assert manifest["seed"] == 11
    assert manifest["sha256"] == digest(work / "data.csv")
    assert {"numpy", "scipy", "python", "bayesbench"} <= set(manifest["versions"])
    assert "elapsed_seconds" in manifest


def test_bench_rerun_is_byte_identical(work, tmp_path):
    out = tmp_path / "again.csv"
    assert main(["bench", "--config", str(work / "tiny.json"), "--out", str(out), "--jobs", "1"]) == 0
    assert digest(out) == digest(work / "data.csv")


def test_bench_refuses_to_overwrite_without_force(work, tmp_path, capsys):
    out = tmp_path / "d.csv"
    out.write_text("keep me")
    assert main(["bench", "--config", str(work / "tiny.json"), "--out", str(out)]) == 4
    assert out.read_text() == "keep me"
    assert "--force" in capsys.readouterr().err
    assert main(["bench", "--config", str(work / "tiny.json"), "--out", str(out), "--force", "--jobs", "1"]) == 0
    assert digest(out) == digest(work / "data.csv")


def test_environment_seed_reaches_bench(monkeypatch, work, tmp_path):
    monkeypatch.setenv("BAYESBENCH_SEED", "77")
    assert main(["bench", "--config", str(work / "tiny.json"), "--out", str(tmp_path / "e.csv"), "--jobs", "1"]) == 0
    assert json.loads((tmp_path / "e.csv.manifest.json").read_text())["seed"] == 77
    assert main(["bench", "--config", str(work / "tiny.json"), "--out", str(tmp_path / "f.csv"), "--seed", "11",
                 "--jobs", "1"]) == 0
    assert digest(tmp_path / "f.csv") == digest(work / "data.csv")
    assert digest(tmp_path / "e.csv") != digest(work / "data.csv")


def test_bench_invalid_config_names_the_field(tmp_path, capsys):
    bad = dict(TINY, algorithms=["PSO", "Hillclimb"])
    (tmp_path / "bad.json").write_text(json.dumps(bad))
    assert main(["bench", "--config", str(tmp_path / "bad.json"), "--out", str(tmp_path / "o.csv")]) == 2
    assert "config.algorithms[1]" in capsys.readouterr().err
    assert not (tmp_path / "o.csv").exists()


def test_bench_malformed_json_is_a_validation_error(tmp_path):
    (tmp_path / "bad.json").write_text("{not json")
    assert main(["bench", "--config", str(tmp_path / "bad.json"), "--out", str(tmp_path / "o.csv")]) == 2


def test_bench_missing_config_file_is_an_io_error(tmp_path):
    assert main(["bench", "--config", str(tmp_path / "nope.json"), "--out", str(tmp_path / "o.csv")]) == 4


def test_bench_requires_config(tmp_path):
    assert main(["bench", "--out", str(tmp_path / "o.csv")]) == 2


# -- fit -----------------------------------------------------------------------


def test_fit_rejects_a_single_chain(work, tmp_path, capsys):
    code = main(["fit", "bradley_terry", str(work / "data.csv"), "--chains", "1", "--out", str(tmp_path / "f")])
    assert code == 2
    assert "2 chains" in capsys.readouterr().err


@pytest.mark.parametrize("argv, needle", [
    (["fit", "no_such_model"], "unknown model"),
    (["fit", "binomial"], "success threshold"),
    (["fit"], "model name"),
])
def test_fit_validation_errors(work, tmp_path, capsys, argv, needle):
    argv = argv[:2] + ([str(work / "data.csv")] if len(argv) > 1 else []) + ["--out", str(tmp_path / "f")]
    assert main(argv) == 2
    assert needle in capsys.readouterr().err


def test_fit_missing_dataset_is_an_io_error(tmp_path):
    assert main(["fit", "bradley_terry", str(tmp_path / "absent.csv"), "--out", str(tmp_path / "f")] + FAST) == 4


def test_fit_writes_all_artifacts(binomial_fit):
    for name in ("draws.csv", "diagnostics.json", "request.json", "summary.csv", "summary.md"):
        assert (binomial_fit / name).exists(), name
    header = (binomial_fit / "summary.csv").read_text().splitlines()[0].split(",")
    assert header == ["Parameter", "Mean", "HPD low", "HPD high", "OR", "OR HPD low", "OR HPD high"]
    diag = json.loads((binomial_fit / "diagnostics.json").read_text())
    assert {"max_rhat", "min_ess", "divergences", "converged"} <= set(diag)


def test_cox_fit_has_hazard_table(cox_fit):
    header = (cox_fit / "hazard.csv").read_text().splitlines()[0].split(",")
    assert header[:3] == ["Algorithm", "Baseline hazard", "Avg FEval"]
    assert "Hazard Ratio" in header
    summary = (cox_fit / "summary.csv").read_text()
    assert "HR" in summary.splitlines()[0]


def test_fit_refuses_to_overwrite(work, binomial_fit):
    code = main(["fit", "binomial", str(work / "data.csv"), "--epsilon", "1.0", "--out", str(binomial_fit)] + FAST)
    assert code == 4


def test_unconverged_fit_exits_3_and_keeps_diagnostics(work, tmp_path):
    out = tmp_path / "short"
    code = main(["fit", "bradley_terry", str(work / "data.csv"), "--chains", "2", "--warmup", "2", "--iters", "50",
                 "--out", str(out), "--seed", "1", "--jobs", "1"])
    assert code == 3
    diag = json.loads((out / "diagnostics.json").read_text())
    assert diag["converged"] is False
    assert (out / "draws.csv").exists()


def test_fit_config_file_and_flags_merge(work, tmp_path):
    request = {"model": "bradley_terry", "dataset": str(work / "data.csv"), "filters": {"noise": [0.0]},
               "sampler": {"chains": 2, "warmup": 100, "iterations": 100}, "seed": 5}
    (tmp_path / "req.json").write_text(json.dumps(request))
    out = tmp_path / "f"
    code = main(["fit", "--config", str(tmp_path / "req.json"), "--iters", "150", "--out", str(out), "--jobs", "1"])
    assert code in (0, 3)
    saved = json.loads((out / "request.json").read_text())
    assert saved["sampler"] == {"chains": 2, "warmup": 100, "iterations": 150}
    assert saved["seed"] == 5
    assert saved["filters"] == {"noise": [0.0]}


def test_fit_is_deterministic_given_seed(work, bt_fit, tmp_path):
    out = tmp_path / "again"
    main(["fit", "bradley_terry", str(work / "data.csv"), "--out", str(out), "--seed", "3", "--jobs", "1"] + FAST)
    for name in ("draws.csv", "summary.csv", "summary.md"):
        assert (out / name).read_bytes() == (bt_fit / name).read_bytes()


# -- downstream subcommands ----------------------------------------------------


def test_diagnose_prints_rhat_table(bt_fit, capsys, tmp_path):
    code = main(["diagnose", str(bt_fit), "--out", str(tmp_path / "diag.json")])
    text = capsys.readouterr().out
    assert code in (0, 3)
    assert "R-hat" in text and "a_alg[PSO]" in text
    assert json.loads((tmp_path / "diag.json").read_text())["max_rhat"] > 0


def test_diagnose_missing_fit_is_an_io_error(tmp_path):
    assert main(["diagnose", str(tmp_path)]) == 4


def test_summarize_writes_tables(binomial_fit, tmp_path, capsys):
    assert main(["summarize", str(binomial_fit), "--out", str(tmp_path / "s")]) == 0
    assert (tmp_path / "s" / "summary.csv").read_bytes() == (binomial_fit / "summary.csv").read_bytes()
    assert "| Parameter | Mean | HPD low | HPD high | OR |" in capsys.readouterr().out


def test_rank_needs_paired_fit(binomial_fit, capsys):
    assert main(["rank", str(binomial_fit)]) == 2
    assert "paired-comparison" in capsys.readouterr().err


def test_rank_table_is_seeded(bt_fit, tmp_path, capsys):
    assert main(["rank", str(bt_fit), "--seed", "2", "--samples", "200", "--out", str(tmp_path / "a")]) == 0
    assert main(["rank", str(bt_fit), "--seed", "2", "--samples", "200", "--out", str(tmp_path / "b")]) == 0
    assert (tmp_path / "a" / "ranks.csv").read_bytes() == (tmp_path / "b" / "ranks.csv").read_bytes()
    header = (tmp_path / "a" / "ranks.csv").read_text().splitlines()[0]
    assert header.startswith("Algorithm")


def test_ppc_writes_table_and_figure(binomial_fit, tmp_path):
    assert main(["ppc", str(binomial_fit), "--reps", "50", "--out", str(tmp_path / "p")]) == 0
    assert (tmp_path / "p" / "ppc.svg").read_text().lstrip().startswith("<?xml")
    assert (tmp_path / "p" / "ppc.csv").exists()


def test_sensitivity_writes_variant_summary(work, tmp_path):
    out = tmp_path / "sens"
    code = main(["sensitivity", "bradley_terry", str(work / "data.csv"), "--multipliers", "1,2", "--out", str(out),
                 "--jobs", "1"] + FAST)
    assert code in (0, 3)
    variants = json.loads((out / "variants.json").read_text())
    assert variants["multipliers"] == [1.0, 2.0]
    assert code == (3 if variants["flagged"] else 0)
    assert "Max shift" in (out / "sensitivity.csv").read_text()


def test_sensitivity_rejects_bad_multipliers(work, tmp_path):
    code = main(["sensitivity", "bradley_terry", str(work / "data.csv"), "--multipliers", "1,two",
                 "--out", str(tmp_path / "s")])
    assert code == 2


# -- report --------------------------------------------------------------------


def test_bt_report_has_rank_table_and_figures(bt_fit, tmp_path):
    out = tmp_path / "r"
    assert main(["report", str(bt_fit), "--out", str(out)]) == 0
    text = (out / "report.md").read_text()
    assert "## Ranks" in text and "## Parameter summary" in text
    for fig in ("trace.svg", "density.svg", "ranks.svg"):
        assert (out / fig).exists()
        assert f"({fig})" in text


def test_cox_report_has_hazard_table(cox_fit, tmp_path):
    out = tmp_path / "r"
    assert main(["report", str(cox_fit), "--out", str(out)]) == 0
    text = (out / "report.md").read_text()
    assert "## Average FEval and hazard ratio" in text
    assert "| Algorithm | Baseline hazard | Avg FEval |" in text


def test_report_regeneration_is_idempotent(bt_fit, tmp_path):
    out = tmp_path / "r"
    assert main(["report", str(bt_fit), "--out", str(out)]) == 0
    first = tree(out)
    assert main(["report", str(bt_fit), "--out", str(out)]) == 4
    assert main(["report", str(bt_fit), "--out", str(out), "--force"]) == 0
    assert tree(out) == first


def test_report_names_missing_artifact(bt_fit, tmp_path, capsys):
    partial = tmp_path / "partial"
    partial.mkdir()
    (partial / "request.json").write_bytes((bt_fit / "request.json").read_bytes())
    assert main(["report", str(partial), "--out", str(tmp_path / "r")]) == 4
    assert "draws.csv" in capsys.readouterr().err
