import csv
import json
from pathlib import Path

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mls_forge.domain import STRATEGIES, FitnessMapParams, RuleConfig, Strategy, StrategyMix
from mls_forge.errors import ConfigError
from mls_forge.game import RANDOM_PAIRS, PairingPolicy
from mls_forge.io.cli import main
from mls_forge.io.config import parse_scenario, serialize_scenario
from mls_forge.io.output import PRICE_COLUMNS, write_run
from mls_forge.io.sweep import apply_param
from mls_forge.orchestrator import Scenario, run_scenario

ROOT = Path(__file__).resolve().parent.parent

MINIMAL = """
[scenario]
seed = 3
generations = 5

[groups]
count = 2
size = 4

[rules.0]
kind = "baseline"
"""


def test_minimal_file_gets_defaults():
    s = parse_scenario(MINIMAL)
    assert (s.seed, s.generations, s.n_groups, s.group_size) == (3, 5, 2, 4)
    assert s.ai_fraction == 0.5 and s.rounds == 10
    assert s.imitation_rate == 0.1 and s.mutation_rate == 0.01
    assert s.fitness_params == FitnessMapParams()
    assert s.initial_human == StrategyMix()


def test_negative_lambda_names_key():
    text = MINIMAL + '\n[rules.4]\nkind = "graduated_sanctions"\nlambda = -1\n'
    with pytest.raises(ConfigError) as info:
        parse_scenario(text)
    assert info.value.key == "rules.4.lambda"


def test_non_pd_matrix_rejected():
    with pytest.raises(ConfigError, match="not a Prisoner's Dilemma"):
        parse_scenario(MINIMAL + "\n[game]\nreward = 1.0\npunishment = 1.0\n")


@pytest.mark.parametrize("patch, key", [
    ('\n[learning]\nimitation_rate = 1.5\n', "learning.imitation_rate"),
    ('\n[rules.1]\nkind = "magic"\n', "rules.1.kind"),
    ('\n[groups2]\ncount = 1\n', "groups2"),
])
def test_bad_values_name_their_key(patch, key):
    with pytest.raises(ConfigError) as info:
        parse_scenario(MINIMAL + patch)
    assert info.value.key.startswith(key)


def test_missing_required_key():
    with pytest.raises(ConfigError) as info:
        parse_scenario(MINIMAL.replace("seed = 3\n", ""))
    assert info.value.key == "scenario.seed"


mixes = st.lists(st.integers(0, 8), min_size=4, max_size=4).filter(any).map(
    lambda c: StrategyMix(tuple(x / sum(c) for x in c)))


@settings(max_examples=60, deadline=None)
@given(seed=st.integers(0, 2**63), lam=st.floats(0.01, 5), decay=st.floats(0, 1),
       cost=st.floats(0, 2), mix=mixes, rate=st.floats(0, 1), dt=st.floats(0.001, 0.5),
       phi=st.floats(0, 1), pairing=st.sampled_from([PairingPolicy(), PairingPolicy(RANDOM_PAIRS, 3)]))
def test_round_trip(seed, lam, decay, cost, mix, rate, dt, phi, pairing):
    rules = (RuleConfig.baseline(id=0, name="plain"),
             RuleConfig.graduated(id=5, severity=lam, decay=decay, cost=cost),
             RuleConfig.norm_seeded(id=9, strategy=Strategy.WIN_STAY_LOSE_SHIFT,
                                    seeding_fraction=phi))
    s = Scenario(seed=seed, rules=rules, generations=3, initial_human=mix,
                 imitation_rate=rate, dt=dt, pairing=pairing,
                 fitness_params=FitnessMapParams(0.3, 0.7, -1.0))
    assert parse_scenario(serialize_scenario(s)) == s


def test_price_csv_columns(tmp_path):
    s = parse_scenario(MINIMAL)
    write_run(run_scenario(s), s, tmp_path)
    with open(tmp_path / "price.csv") as fh:
        header = next(csv.reader(fh))
    assert tuple(header) == PRICE_COLUMNS
    assert PRICE_COLUMNS == ("generation", "between_group", "within_human", "within_ai",
                             "cross_h_ai", "cross_ai_h", "delta_pi_bar", "lhs",
                             "residual_two_term", "residual_five_term")


def test_manifest_reproduces_run(tmp_path):
    s = parse_scenario(MINIMAL)
    write_run(run_scenario(s), s, tmp_path / "a")
    manifest = json.loads((tmp_path / "a" / "manifest.json").read_text())
    again = parse_scenario(manifest["scenario"])
    assert again == s
    write_run(run_scenario(again), again, tmp_path / "b")
    for name in manifest["files"]:
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_sweep_parameter_aliases():
    doc = {"rules": {"0": {"kind": "graduated_sanctions", "lambda": 1.0},
                     "1": {"kind": "baseline"}},
           "learning": {}}
    out = apply_param(doc, "lambda", 0.3)
    assert out["rules"]["0"]["lambda"] == 0.3 and "lambda" not in out["rules"]["1"]
    assert doc["rules"]["0"]["lambda"] == 1.0
    assert apply_param(doc, "lambda", 0.0)["rules"]["0"] == {"kind": "baseline"}
    assert apply_param(doc, "imitation_rate", 0.5)["learning"]["imitation_rate"] == 0.5
    assert apply_param(doc, "rules.1.cost", 2)["rules"]["1"]["cost"] == 2.0
    with pytest.raises(ConfigError):
        apply_param(doc, "seeding_fraction", 0.5)
    with pytest.raises(ConfigError):
        apply_param(doc, "generations", 2.5)


# --- command line ---------------------------------------------------------------

def write(tmp_path, text, name="s.toml"):
    path = tmp_path / name
    path.write_text(text)
    return str(path)


def test_cli_run_twice_identical(tmp_path):
    cfg = write(tmp_path, MINIMAL)
    assert main(["run", "--config", cfg, "--out", str(tmp_path / "a"), "--snapshots"]) == 0
    assert main(["run", "--config", cfg, "--out", str(tmp_path / "b"), "--snapshots"]) == 0
    files = sorted(p.relative_to(tmp_path / "a") for p in (tmp_path / "a").rglob("*.csv"))
    assert files
    for f in files:
        assert (tmp_path / "a" / f).read_bytes() == (tmp_path / "b" / f).read_bytes()


def test_cli_decompose(tmp_path, capsys):
    cfg = write(tmp_path, MINIMAL)
    main(["run", "--config", cfg, "--out", str(tmp_path / "r"), "--snapshots"])
    capsys.readouterr()
    snaps = tmp_path / "r" / "snapshots"
    code = main(["decompose", "--before", str(snaps / "gen_00001.csv"),
                 "--after", str(snaps / "gen_00002.csv"),
                 "--weights", str(snaps / "weights_00001.csv")])
    assert code == 0
    report = json.loads(capsys.readouterr().out)
    with open(tmp_path / "r" / "price.csv") as fh:
        row = list(csv.DictReader(fh))[1]
    assert row["generation"] == "2"
    for key in ("between_group", "cross_h_ai", "lhs", "residual_two_term"):
        assert float(row[key]) == report[key]


def test_cli_equilibrium_baseline(capsys):
    assert main(["equilibrium", "--rule", "baseline"]) == 0
    out = json.loads(capsys.readouterr().out)
    assert out["converged"] and out["audit_passed"]
    assert out["profile"]["human"][Strategy.ALL_D.value] == 1.0


def test_cli_equilibrium_from_config(tmp_path, capsys):
    cfg = write(tmp_path, MINIMAL + '\n[rules.3]\nkind = "graduated_sanctions"\nlambda = 2\n'
                'name = "strict"\n')
    assert main(["equilibrium", "--rule", "strict", "--config", cfg]) == 0
    assert json.loads(capsys.readouterr().out)["pi_human"] == pytest.approx(-1)


def test_cli_nonconvergence_exit_code(capsys):
    assert main(["equilibrium", "--rule", "baseline", "--max-iters", "1"]) == 2


def test_cli_config_error_exit_code(tmp_path, capsys):
    cfg = write(tmp_path, MINIMAL.replace("size = 4", "size = 1"))
    assert main(["run", "--config", cfg, "--out", str(tmp_path / "o")]) == 1
    assert "groups.size" in capsys.readouterr().err
    assert main(["run", "--config", str(tmp_path / "nope.toml"), "--out", "x"]) == 1


def test_cli_run_nonconvergence_exit_code(tmp_path):
    cfg = write(tmp_path, MINIMAL + '\n[evolution]\nmode = "equilibrium"\nmax_iters = 1\n')
    assert main(["run", "--config", cfg, "--out", str(tmp_path / "o")]) == 2


def test_cli_sweep(tmp_path, monkeypatch):
    monkeypatch.setenv("MLS_FORGE_THREADS", "1")
    text = MINIMAL.replace('kind = "baseline"', 'kind = "graduated_sanctions"\nlambda = 1.0')
    cfg = write(tmp_path, text)
    assert main(["sweep", "--config", cfg, "--param", "lambda", "--from", "0", "--to", "2",
                 "--steps", "3", "--out", str(tmp_path / "sw")]) == 0
    with open(tmp_path / "sw" / "sweep.csv") as fh:
        rows = list(csv.DictReader(fh))
    assert [float(r["value"]) for r in rows] == [0.0, 1.0, 2.0]
    assert set(rows[0]) == {"value", "final_cooperation_share", "final_mean_pi", "mean_V",
                            "freq_rule_0"}


def test_shipped_scenarios_parse():
    for path in sorted((ROOT / "scenarios").glob("*.toml")):
        parse_scenario(path.read_text())


def test_strategy_columns_in_timeseries(tmp_path):
    s = parse_scenario(MINIMAL)
    write_run(run_scenario(s), s, tmp_path)
    with open(tmp_path / "timeseries.csv") as fh:
        header = next(csv.reader(fh))
    assert [h for h in header if h.startswith("count_")] == [f"count_{x.value}" for x in STRATEGIES]
