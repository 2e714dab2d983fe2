import json
import os
import subprocess
import sys

import pytest

from porthos import cat, prog
from porthos.cli import main
from conftest import needs_solver

SCHEMA = {
    "program": str, "sourceModel": str, "targetModel": str, "verdict": str, "executed": list, "rf": list,
    "co": list, "values": dict, "state": dict, "violated": list, "cycle": list,
}


def run(capsys, *argv):
    code = main(list(argv))
    out, err = capsys.readouterr()
    return code, out, err


@needs_solver
def test_check_iriw_tso_power(capsys, tmp_path):
    dot, js = tmp_path / "w.dot", tmp_path / "w.json"
    code, out, _ = run(capsys, "check", "-p", "iriw", "-s", "tso", "-t", "power", "--dot", str(dot), "--json", str(js))
    assert code == 1 and "NotPortable" in out
    assert dot.read_text().startswith("digraph")
    data = json.loads(js.read_text())
    assert list(data) == list(SCHEMA)
    for k, t in SCHEMA.items():
        assert isinstance(data[k], t), k
    assert data["violated"] == ["tso"] and len(data["cycle"]) >= 4


@needs_solver
@pytest.mark.parametrize("src, tgt, expect", [("tso", "tso", 0), ("sc", "tso", 0), ("tso", "power", 1)])
def test_check_exit_codes_iriw(capsys, src, tgt, expect):
    assert run(capsys, "check", "-p", "iriw", "-s", src, "-t", tgt)[0] == expect


@needs_solver
def test_check_sb_with_oracle(capsys):
    code, out, _ = run(capsys, "check", "-p", "sb", "-s", "sc", "-t", "tso", "--oracle")
    assert code == 1 and "oracle: NotPortable" in out


@needs_solver
def test_check_state(capsys):
    code, out, _ = run(capsys, "check", "-p", "iriw0", "-s", "tso", "-t", "power", "--state")
    assert code == 1 and "StateReachable after 1 reachability query" in out


@needs_solver
def test_check_emit_smt(capsys, tmp_path):
    f = tmp_path / "q.smt2"
    run(capsys, "check", "-p", "sb", "-s", "sc", "-t", "tso", "--emit-smt", str(f))
    assert f.read_text().startswith("(set-logic")


def test_check_unknown_on_timeout(capsys):
    slow = f"{sys.executable} -c 'import time; time.sleep(5)' {{file}}"
    code, out, _ = run(capsys, "check", "-p", "sb", "-s", "sc", "-t", "tso", "--solver", slow, "--timeout", "0.3")
    assert code == 3 and "Unknown" in out


def test_solver_env_var(capsys, monkeypatch):
    monkeypatch.setenv("PORTHOS_SOLVER", "no-such-solver {file}")
    code, _, err = run(capsys, "check", "-p", "sb", "-s", "sc", "-t", "tso")
    assert code == 2 and "no-such-solver" in err


def test_missing_program(capsys):
    code, _, err = run(capsys, "check", "-p", "nowhere.lit", "-s", "sc", "-t", "tso")
    assert code == 2 and "error" in err


def test_bad_model(capsys):
    assert run(capsys, "check", "-p", "sb", "-s", "arm9", "-t", "tso")[0] == 2


def test_usage_error():
    with pytest.raises(SystemExit) as exc:
        main(["check", "-p", "sb"])
    assert exc.value.code == 2


def test_cat_file_model(capsys, tmp_path):
    f = tmp_path / "weak.cat"
    f.write_text("model weak\nacyclic poloc | com as uniproc\n")
    assert run(capsys, "oracle", "-p", "sb", "-s", "sc", "-t", str(f))[0] == 1


@needs_solver
@pytest.mark.parametrize("model, expect", [("tso", 0), ("sc", 1)])
def test_reach_sb(capsys, model, expect):
    code, out, _ = run(capsys, "reach", "-p", "sb", "-m", model, "--assert", "r0=0 /\\ r1=0")
    assert code == expect


@needs_solver
def test_reach_tautology(capsys):
    assert run(capsys, "reach", "-p", "sb", "-m", "sc", "--assert", "x = x")[0] == 0


def test_reach_parse_error(capsys):
    assert run(capsys, "reach", "-p", "sb", "-m", "sc", "--assert", "r0 = = 1")[0] == 2


def test_oracle_states(capsys):
    code, out, _ = run(capsys, "oracle", "-p", "sb", "-m", "sc", "--states")
    assert code == 0 and "3 distinct final states" in out


def test_oracle_portability(capsys):
    assert run(capsys, "oracle", "-p", "iriw", "-s", "tso", "-t", "power")[0] == 1
    assert run(capsys, "oracle", "-p", "iriw0", "-s", "tso", "-t", "power", "--states")[0] == 0


def test_gen_forall_parses(capsys):
    code, out, _ = run(capsys, "gen", "forall", "--psi", "x1", "--np", "sb")
    assert code == 0
    assert prog.validate(prog.parse_program(out)) == []


def test_gen_state_parses(capsys, tmp_path):
    f = tmp_path / "s.lit"
    assert run(capsys, "gen", "state", "--psi", "x1 = y1", "--forall", "x1", "--exists", "y1", "-o", str(f))[0] == 0
    assert prog.validate(prog.parse_program(f.read_text())) == []


def test_gen_bad_formula(capsys):
    assert run(capsys, "gen", "forall", "--psi", "x1 &", "--np", "sb")[0] == 2


def test_models(capsys):
    code, out, _ = run(capsys, "models", "list")
    assert out.split() == list(cat.BUILTIN_MODELS)
    code, out, _ = run(capsys, "models", "print", "tso")
    assert "acyclic rfe | co | fr | (po \\ W*R) | mfence as tso" in out
    assert cat.parse_cat(out).axioms == cat.builtin_model("tso").axioms


@needs_solver
def test_console_script():
    env = dict(os.environ)
    proc = subprocess.run([sys.executable, "-m", "porthos.cli", "check", "-p", "sb", "-s", "sc", "-t", "tso"],
                          capture_output=True, text=True, env=env)
    assert proc.returncode == 1 and "NotPortable" in proc.stdout
