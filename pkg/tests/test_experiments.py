import json
import math
from dataclasses import replace
from fractions import Fraction

import numpy as np
import pytest

from genslate.core import ConfigError, Slate, Statement
from genslate.experiments.cli import main
from genslate.experiments.config import DEFAULTS, config_hash, load_config, prepare_run_dir
from genslate.experiments.evaluation import (UtilityTable, assign_by_utility, evaluate_llm_slates,
                                             paired_p_value, vote_validation)
from genslate.experiments.report import CURVE_COLUMNS, emit_report, read_report, render_csv
from genslate.experiments.sweep import (ErrorSetting, SweepSpec, bottom_share_mean, run_error_sweep,
                                        run_instance, run_param_scan)
from genslate.llm.mock import planted_descriptions

SMALL = SweepSpec(num_instances=3, n=20, B=5, num_issues=3, opinion_count=3)


# ---------------------------------------------------------------- evaluation

def _planted_table(U):
    U = np.asarray(U, dtype=float)
    return UtilityTable(U.shape[0], lambda i, s: U[i, s.id])


def test_identical_slates_p_one():
    assert paired_p_value([1, 2, 3], [1, 2, 3]) == 1.0
    assert paired_p_value([2, 3, 4], [1, 2, 3]) == 0.0
    with pytest.raises(ValueError):
        paired_p_value([1], [1, 2])


def test_mean_and_q1_on_planted_matrix():
    U = [[6, 1], [5, 1], [1, 4], [1, 3]]
    st = [Statement(0, "a", 2), Statement(1, "b", 2)]
    slate = Slate(st)
    table = _planted_table(U)
    rep = evaluate_llm_slates({"prose": (slate, {0: 0, 1: 0, 2: 1, 3: 1}), "other": (slate, None)},
                              4, 4, table, st, rng=0)
    held = [6, 5, 4, 3]
    for m in ("prose", "other"):
        assert rep.methods[m].mean == pytest.approx(np.mean(held))
        assert rep.methods[m].q1 == pytest.approx(np.percentile(held, 25))
        assert rep.methods[m].violation_rate == 0.0
    assert rep.methods["other"].p_value == 1.0
    assert [r["method"] for r in rep.rows()] == ["prose", "other"]


def test_unassigned_agents_count_as_one():
    st = [Statement(0, "a", 2)]
    table = _planted_table([[6], [6], [6], [6]])
    rep = evaluate_llm_slates({"prose": (Slate(st), {0: 0, 1: 0})}, 4, 4, table, [], rng=0)
    assert rep.methods["prose"].mean == pytest.approx((6 + 6 + 1 + 1) / 4)
    assert math.isnan(rep.methods["prose"].violation_rate)


def test_zero_shot_budget_fallback():
    # three statements of cost 3 cannot be balanced for B=4, but can under their own cost
    st = [Statement(k, f"s{k}", 3) for k in range(3)]
    U = np.eye(3) * 5 + 1
    assignment, budget = assign_by_utility(Slate(st), _planted_table(U), 3, 4)
    assert budget == 9 and assignment == {0: 0, 1: 1, 2: 2}
    with pytest.raises(ValueError):
        assign_by_utility(Slate(), _planted_table(U), 3, 4)


def test_reference_must_exist():
    with pytest.raises(ValueError):
        evaluate_llm_slates({}, 1, 1, _planted_table([[1]]), [])


def test_utility_table_batches_columns():
    calls = []

    def column(sts):
        calls.append(len(sts))
        return [[float(i + s.id) for s in sts] for i in range(3)]

    t = UtilityTable(3, None, column)
    st = [Statement(0, "x", 1), Statement(1, "y", 1)]
    assert t.matrix(st) == [[0, 1], [1, 2], [2, 3]]
    t.matrix(st)
    assert calls == [2]


# ---------------------------------------------------------------- votes

def _votes(k_agents, up_score, down_score):
    votes = [(a, [f"u{a}{j}" for j in range(5)], [f"d{a}{j}" for j in range(5)]) for a in range(k_agents)]
    f = lambda a, s: up_score(a) if s[0] == "u" else down_score(a)
    return votes, f


def test_votes_perfect_oracles():
    votes, f = _votes(10, lambda a: 1 + a % 3, lambda a: -1)
    res = vote_validation(votes, [f, f])
    assert res.fractions == [1.0, 1.0] and res.pearson_r == pytest.approx(1.0) and res.kappa == 1.0
    lo, hi = res.intervals[0]
    assert lo == pytest.approx(0.025 ** 0.1, abs=1e-9) and hi == 1.0


def test_votes_independent_coin_flips():
    rng = np.random.default_rng(0)
    m = 2000
    da, db = rng.choice([-1.0, 1.0], m), rng.choice([-1.0, 1.0], m)
    votes = [(a, ["u"] * 5, ["d"] * 5) for a in range(m)]
    fa = lambda a, s: da[a] if s == "u" else 0.0
    fb = lambda a, s: db[a] if s == "u" else 0.0
    res = vote_validation(votes, [fa, fb])
    assert abs(res.pearson_r) < 0.1 and abs(res.kappa) < 0.1
    assert abs(res.fractions[0] - 0.5) < 0.05


def test_votes_skip_with_warning(caplog):
    votes, f = _votes(3, lambda a: 2, lambda a: 1)
    votes.append((99, ["u"], ["d"] * 5))
    with caplog.at_level("WARNING"):
        res = vote_validation(votes, [f, f])
    assert res.skipped == [99] and res.agents == 3 and "99" in caplog.text
    with pytest.raises(ValueError):
        vote_validation(votes[-1:], [f, f])


# ---------------------------------------------------------------- reports / config

def test_empty_report_is_header_only(tmp_path):
    path = emit_report([], tmp_path, "curves", CURVE_COLUMNS)
    assert path.read_text().strip() == ",".join(CURVE_COLUMNS)
    assert read_report(path) == []


def test_report_round_trip(tmp_path):
    rows = [{"setting_id": 0, "variant": "fast", "b": 1, "mean_max_d": 0.1 + 0.2, "n_seeds": 3}]
    path = emit_report(rows, tmp_path, "curves", CURVE_COLUMNS)
    assert read_report(path) == rows
    with pytest.raises((KeyError, ValueError)):
        render_csv([{"b": 1}], CURVE_COLUMNS)


def test_config_load_and_hash(tmp_path):
    assert load_config() == DEFAULTS
    p = tmp_path / "c.yaml"
    p.write_text("env:\n  n: 30\n")
    cfg = load_config(p)
    assert cfg["env"]["n"] == 30 and cfg["env"]["B"] == 15
    assert config_hash(cfg) != config_hash(DEFAULTS)
    p.write_text("bogus: 1\n")
    with pytest.raises(ConfigError):
        load_config(p)
    run = prepare_run_dir(tmp_path / "r", "sweep", cfg, {"base_seed": 0})
    man = json.loads((run / "manifest.json").read_text())
    assert man["config_hash"] == config_hash(cfg) and "numpy" in man["versions"]


# ---------------------------------------------------------------- sweep

def test_bottom_share_mean():
    assert bottom_share_mean(list(range(20))) == 0.5
    assert bottom_share_mean([3, 1, 2]) == 1.0


def test_sweep_order_invariant():
    res = run_error_sweep(SMALL)
    st = SMALL.settings[0]
    rev = [run_instance(SMALL, st, v, i) for i in reversed(range(SMALL.num_instances)) for v in SMALL.variants]
    for v in SMALL.variants:
        a = sorted((r.seed, r.mean_utility, r.curve[0]) for r in res.select(st, v))
        b = sorted((r.seed, r.mean_utility, r.curve[0]) for r in rev if r.variant == v)
        assert a == b
    assert len(res.summary()) == 3 and len(res.curves()) == 3 * len(SMALL.bs)


def test_exact_scan_matches_sweep():
    res = run_error_sweep(replace(SMALL, variants=("complex",)))
    scan = run_param_scan("mu_gamma", [1], SMALL, "complex")
    assert scan.points[0]["mean"] == pytest.approx(res.mean_max_d(ErrorSetting(), "complex", 0))


def test_beta_scan_trend():
    spec = replace(SMALL, num_instances=6)
    pts = run_param_scan("beta", [0, 4], spec).points
    assert pts[0]["metric"] == "max_b" and pts[0]["mean"] <= pts[1]["mean"]


@pytest.mark.parametrize("param,value", [("beta", -1), ("beta", 0.5), ("delta", -1), ("mu_gamma", 0), ("size", 1)])
def test_scan_rejects_bad_values(param, value):
    with pytest.raises(ValueError):
        run_param_scan(param, [value], SMALL)


def test_sweep_spec_validation():
    with pytest.raises(ValueError):
        SweepSpec(num_instances=0)
    with pytest.raises(ValueError):
        SweepSpec(variants=("fast", "slow"))


# ---------------------------------------------------------------- CLI

@pytest.fixture
def small_config(tmp_path):
    p = tmp_path / "cfg.yaml"
    p.write_text("env: {n: 20, B: 5, num_issues: 3, opinion_count: 3}\n")
    return str(p)


def test_cli_sweep_and_scan(tmp_path, small_config, capsys):
    out = tmp_path / "sweep"
    assert main(["--config", small_config, "sweep", "--instances", "2", "--levels", "0,1",
                 "--out", str(out)]) == 0
    rows = read_report(out / "summary.csv")
    assert len(rows) == 6 and {r["variant"] for r in rows} == {"uniform", "fast", "complex"}
    assert (out / "curves.csv").exists() and (out / "manifest.json").exists()
    assert main(["--config", small_config, "scan", "--param", "delta", "--values", "0,1/2",
                 "--instances", "2", "--out", str(tmp_path / "scan")]) == 0
    assert len(read_report(tmp_path / "scan" / "scan.csv")) == 2


def test_cli_errors(tmp_path, capsys):
    assert main(["--config", str(tmp_path / "missing.yaml"), "sweep", "--out", str(tmp_path)]) == 2
    assert "genslate: error:" in capsys.readouterr().err
    with pytest.raises(SystemExit):
        main(["frobnicate"])


def test_cli_prose_pipeline(tmp_path, capsys):
    blocks = [[3, ["rent", "zoning", "buses"]], [2, ["parks", "trees"]]]
    (tmp_path / "blocks.json").write_text(json.dumps(blocks))
    agents = tmp_path / "agents.jsonl"
    agents.write_text("".join(json.dumps({"id": i, "description": d}) + "\n"
                              for i, d in enumerate(planted_descriptions(blocks))))
    llm = ["--backend", "mock", "--mock-blocks", str(tmp_path / "blocks.json"),
           "--cache", str(tmp_path / "cache.jsonl"), "--mode", "record", "--min-length", "0"]
    run = tmp_path / "run"
    assert main(["prose", "run", "--agents", str(agents), "--budget", "5", "--out", str(run), *llm]) == 0
    doc = json.loads((run / "slate.json").read_text())
    assert sorted(s["text"] for s in doc["slate"]) == ["parks trees", "rent zoning buses"]
    assert (run / "trace.jsonl").read_text().strip()
    ev = tmp_path / "eval"
    assert main(["eval", "--agents", str(agents), "--prose-run", str(run), "--budget", "5",
                 "--baselines", "zero_shot,unit_cost", "--out", str(ev), *llm]) == 0
    rows = {r["method"]: r for r in read_report(ev / "eval.csv")}
    assert rows["prose"]["mean"] == 6.0 and rows["prose"]["violation_rate"] == 0.0
    assert set(rows) == {"prose", "zero_shot", "unit_cost"}
    man = json.loads((ev / "manifest.json").read_text())
    assert man["arguments"]["baselines"] == "zero_shot,unit_cost"
    # replay needs no backend
    replay = ["--cache", str(tmp_path / "cache.jsonl"), "--mode", "replay", "--min-length", "0"]
    assert main(["prose", "run", "--agents", str(agents), "--budget", "5", "--out", str(tmp_path / "r2"),
                 *replay]) == 0
    assert json.loads((tmp_path / "r2" / "slate.json").read_text())["slate"] == doc["slate"]


def test_cli_validate_votes(tmp_path, capsys):
    blocks = [[2, ["rent", "zoning"]], [2, ["parks", "trees"]]]
    (tmp_path / "blocks.json").write_text(json.dumps(blocks))
    descs = planted_descriptions(blocks)
    own = ["rent zoning", "rent", "zoning", "zoning rent", "rent rent"]
    other = ["parks trees", "parks", "trees", "trees parks", "parks parks"]
    with (tmp_path / "votes.jsonl").open("w") as fh:
        for a, d in enumerate(descs):
            up, down = (own, other) if a < 2 else (other, own)
            fh.write(json.dumps({"agent": a, "description": d, "up": up, "down": down}) + "\n")
    assert main(["validate-votes", "--votes", str(tmp_path / "votes.jsonl"), "--out", str(tmp_path / "v"),
                 "--backend", "mock", "--mock-blocks", str(tmp_path / "blocks.json"),
                 "--cache", str(tmp_path / "c.jsonl")]) == 0
    doc = json.loads((tmp_path / "v" / "votes.json").read_text())
    assert doc["fractions"] == [1.0, 1.0] and doc["agents"] == 4


def test_cli_ingest(tmp_path, capsys):
    from pathlib import Path

    fix = Path(__file__).parent / "fixtures"
    out = tmp_path / "agents.jsonl"
    assert main(["ingest", "drug_review", str(fix / "drug_reviews.tsv"), "--drug", "Phentermine",
                 "--out", str(out)]) == 0
    assert len(out.read_text().splitlines()) == 80
    assert main(["ingest", "polis", str(fix / "bowling_green_agents.jsonl"), "--out", str(out)]) == 0
    assert "41 agents" in capsys.readouterr().out
