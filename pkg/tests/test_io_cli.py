import json

import pytest

from causalgames import (
    GameFileError,
    export_dot,
    FixObject,
    TabularCPD,
    apply_primitive,
    games_equal,
    parse_game,
    serialize_game,
)
from causalgames.cli import main, resolve_game

FIXTURES = ("job_market", "effortville", "prisoners_dilemma", "stackelberg")


# -- game files -------------------------------------------------------------------


def test_fixture_round_trips():
    for name in FIXTURES:
        game = resolve_game(name)
        text = serialize_game(game)
        again = parse_game(text, f"roundtrip:{name}")
        assert games_equal(game, again)


def test_unknown_keys_rejected():
    text = serialize_game(resolve_game("prisoners_dilemma"))
    with pytest.raises(GameFileError, match="unknown key"):
        parse_game(text + "\nflavour: spicy\n")


def test_bad_row_sum_rejected():
    text = """
agents: 1
variables:
  - name: X
    kind: chance
    domain: [a, b]
  - name: D1
    kind: decision
    agent: 1
    domain: [u, v]
  - name: U1
    kind: utility
    agent: 1
    domain: [0, 1]
    parents: [D1]
cpds:
  X:
    "": [0.5, 0.4]
  U1:
    "u": 0
    "v": 1
"""
    with pytest.raises(GameFileError, match="sums to"):
        parse_game(text)


def test_yaml_error_carries_position(tmp_path):
    bad = tmp_path / "bad.game.yaml"
    bad.write_text("agents: [unclosed\n")
    from causalgames import load_game

    with pytest.raises(GameFileError) as err:
        load_game(str(bad))
    assert "line" in str(err.value)


def test_scenario_unfix_round_trip(tmp_path, prisoners):
    game_path = tmp_path / "pd.game.yaml"
    game_path.write_text(serialize_game(prisoners))
    scenario = tmp_path / "s.scenario.yaml"
    scenario.write_text(
        """
game: pd.game.yaml
interventions:
  - label: force
    kind: fix_object
    target: D1
    value: C
  - label: undo
    kind: unfix
    of: force
query: "forall ne: E[1] >= -2"
"""
    )
    from causalgames import apply_all, load_scenario

    loaded = load_scenario(str(scenario))
    final = apply_all(loaded.game, [c for _, c in loaded.interventions])
    assert games_equal(final, prisoners)


# -- DOT export --------------------------------------------------------------------


def test_dot_mechanised_edge_set(job_market):
    text = export_dot(job_market, "mechanised")
    for src, dst in (
        ("THETA_T", "PI_D1"),
        ("THETA_U1", "PI_D1"),
        ("PI_D2", "PI_D1"),
        ("THETA_T", "PI_D2"),
        ("THETA_U2", "PI_D2"),
        ("PI_D1", "PI_D2"),
    ):
        assert f'"{src}" -> "{dst}"' in text
    assert text.count("PI_D1\" -> \"PI_D2") == 1


def test_dot_after_hard_fix(job_market):
    fixed = apply_primitive(
        job_market,
        FixObject("D1", (), TabularCPD.delta("D1", "g", job_market.domain("D1"))),
    )
    text = export_dot(fixed, "mechanised")
    assert '"PI_D1" -> "PI_D2"' not in text
    assert '"PI_D2" -> "PI_D1"' in text
    assert '"THETA_T" -> "PI_D2"' in text
    assert '"PI_D1" -> "D1"' not in text


def test_dot_empty_game_is_header_only():
    from causalgames import CausalGame

    empty = CausalGame(0, (), {}, {})
    assert export_dot(empty, "object") == "digraph G {\n}\n"


def test_dot_deterministic(job_market):
    assert export_dot(job_market, "mechanised") == export_dot(
        job_market, "mechanised"
    )


# -- CLI ---------------------------------------------------------------------------


def run_cli(capsys, *argv):
    code = main(list(argv))
    captured = capsys.readouterr()
    return code, captured.out, captured.err


def test_cli_solve_dilemma(capsys):
    code, out, _ = run_cli(capsys, "solve", "prisoners_dilemma")
    assert code == 0
    assert "1 pure rational outcome(s):" in out
    assert "EU=(-2.0, -2.0)" in out


def test_cli_solve_json_golden(capsys):
    code, out, _ = run_cli(capsys, "--json", "solve", "prisoners_dilemma")
    assert code == 0
    payload = json.loads(out)
    assert payload == {
        "schema": "causalgames/1",
        "command": "solve",
        "outcomes": [
            {
                "rules": {
                    "D1": {"": [0.0, 1.0]},
                    "D2": {"": [0.0, 1.0]},
                },
                "payoffs": [-2.0, -2.0],
            }
        ],
    }


def test_cli_commit(capsys):
    code, out, _ = run_cli(capsys, "commit", "stackelberg", "--leader", "1")
    assert code == 0
    assert "0.666666666667" in out
    assert "3.666666666667" in out


def test_cli_commit_json(capsys):
    code, out, _ = run_cli(
        capsys, "--json", "commit", "stackelberg", "--leader", "1"
    )
    payload = json.loads(out)
    assert payload["leader_payoff"] == pytest.approx(11 / 3, abs=1e-9)
    assert payload["rule"][""][0] == pytest.approx(2 / 3, abs=1e-9)


def test_cli_min_set(capsys):
    code, out, _ = run_cli(
        capsys, "min-set", "job_market", "--from", "PI_D1", "--to", "PI_D2"
    )
    assert code == 0
    assert out.strip() == "{D1}"


def test_cli_validate_ok_and_failure(capsys, tmp_path):
    code, out, _ = run_cli(capsys, "validate", "job_market")
    assert code == 0 and "ok" in out
    bad = tmp_path / "bad.game.yaml"
    bad.write_text("agents: 1\nvariables: []\ncpds: {}\nnope: 1\n")
    code, out, err = run_cli(capsys, "validate", str(bad))
    assert code == 1
    assert "unknown key" in err


def test_cli_queries_reproduce_reference_values(capsys):
    for scenario, expected in (
        ("commitment_revealed", "3.0"),
        ("commitment_private", "2.0"),
        ("reward_hidden", "-4.5"),
        ("reward_reversed", "-4.5"),
        ("effortville_policy", "True"),
    ):
        code, out, _ = run_cli(capsys, "query", scenario)
        assert code == 0
        assert f"verdict: {expected}" in out


def test_cli_query_seed_stable(capsys):
    _, out1, _ = run_cli(capsys, "--json", "query", "reward_hidden", "--seed", "11")
    _, out2, _ = run_cli(capsys, "--json", "query", "reward_hidden", "--seed", "11")
    assert out1 == out2


def test_cli_side_effects_and_invariant(capsys, tmp_path):
    scenario = tmp_path / "hide.scenario.yaml"
    game = resolve_game("job_market")
    (tmp_path / "jm.game.yaml").write_text(serialize_game(game))
    scenario.write_text(
        """
game: jm.game.yaml
interventions:
  - label: hide
    kind: del_edge
    from: D1
    to: D2
"""
    )
    code, out, _ = run_cli(capsys, "side-effects", str(scenario))
    assert code == 0
    assert "removed: PI_D1 -> PI_D2" in out
    code, out, _ = run_cli(capsys, "invariant", str(scenario))
    assert code == 0
    assert "incentive invariant: False" in out


def test_cli_intervene_round_trip(capsys, tmp_path):
    (tmp_path / "jm.game.yaml").write_text(
        serialize_game(resolve_game("job_market"))
    )
    scenario = tmp_path / "env.scenario.yaml"
    scenario.write_text(
        """
game: jm.game.yaml
interventions:
  - label: env
    kind: fix_mechanism
    target: THETA_T
    value: h
"""
    )
    code, out, _ = run_cli(capsys, "intervene", str(scenario))
    assert code == 0
    reparsed = parse_game(out)
    assert reparsed.cpds["T"].row(()) == (1.0, 0.0)


def test_cli_mech_graph(capsys):
    code, out, _ = run_cli(capsys, "mech-graph", "job_market")
    assert code == 0
    assert out.startswith("digraph G {")


def test_cli_exit_codes(capsys):
    code, _, err = run_cli(capsys, "solve", "no_such_game")
    assert code == 1
    assert "error:" in err
    code, _, _ = run_cli(capsys, "frobnicate")
    assert code == 2
    code, _, _ = run_cli(capsys)
    assert code == 2
