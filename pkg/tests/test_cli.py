import io
import json

import pytest

from asyncsl import cli
from asyncsl.codesem import CodeSemantics
from asyncsl.export import to_dot, to_json
from asyncsl.machine import ModelConfig, StatelessModel
from asyncsl.parse import parse_program

from conftest import CORPUS

TINY = ["--vars", "x", "--values", "2", "--locations", "1"]
AFF = '(Aff :pre "own(1, x) && 1 == 1" :post "own(1, x) && x == 1" :code "x := 1")'


def run(*argv):
    buf = io.StringIO()
    code = cli.main(list(argv), out=buf)
    return code, buf.getvalue()


def test_check_valid_proof(tmp_path):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"vars": ["x", "y"], "values": [0, 1, 2], "locations": [0], "loop_bound": 4}))
    code, out = run("check", "x := 2", "--proof", str(CORPUS / "aff.proof"), "--config", str(cfg))
    assert code == cli.EXIT_PASS
    assert "derivation: valid" in out and "1-soundness: PASS" in out and "2-soundness: PASS" in out


def test_check_invalid_proof():
    bad = '(Aff :pre "own(1, x) && 2 == 2" :post "own(1, x) && x == 3" :code "x := 2")'
    code, out = run("check", "x := 2", "--proof", bad, *TINY, "--values", "0..2")
    assert code == cli.EXIT_FAIL
    assert "INVALID" in out


def test_race_exit_codes():
    code, out = run("race", "x := 1 || x := 2", "--pre", "own(1, x)", *TINY)
    assert code == cli.EXIT_FAIL and "data race" in out
    code, out = run("race", "x := 1 ; x := 2", "--pre", "own(1, x)", *TINY)
    assert code == cli.EXIT_PASS and "no data races" in out


def test_race_json():
    code, out = run("race", "x := 1 || x := 2", "--pre", "own(1, x)", "--json", *TINY)
    doc = json.loads(out)
    assert code == cli.EXIT_FAIL and doc["ok"] is False
    assert doc["races"][0]["instructions"] in (["x := 1", "x := 2"], ["x := 2", "x := 1"])
    assert "τ" in out


def test_truncated_loop_exit_code():
    code, out = run("race", str(CORPUS / "spin.prog"), "--pre", "emp", *TINY)
    assert code == cli.EXIT_TRUNCATED
    assert "loop unrolling hit the bound" in out


@pytest.mark.parametrize("argv, fragment", [
    (["race", "x := ", "--pre", "emp"], "parse error"),
    (["race", "z := 1", "--pre", "emp"], "outside the configuration"),
    (["race", "x := 1", "--pre", "emp", "--locations", "0"], "is empty"),
    (["race", "x := 1", "--pre", "emp", "--values", "a..b"], "bad values"),
    (["race", "x := 1", "--pre", "emp", "--config", "/nonexistent.json"], "cannot read config"),
    (["graph", "x := 1", "--which", "sep"], "needs --proof"),
    (["check", "x := 3", "--proof", AFF], "the proof is about"),
    (["bogus"], ""),
])
def test_input_errors(argv, fragment, capsys):
    code, _ = run(*argv)
    assert code == cli.EXIT_INPUT
    assert fragment in capsys.readouterr().err


def test_graph_and_model_exports():
    code, out = run("graph", "x := 1", "--which", "l", "--emit", "json", *TINY)
    doc = json.loads(out)
    assert code == cli.EXIT_PASS and doc["initial"] and doc["edges"]
    code, out = run("graph", "x := 1", "--which", "sep", "--proof", AFF, "--emit", "dot", *TINY)
    assert code == cli.EXIT_PASS and out.startswith("digraph")
    code, out = run("model", "--which", "l", "--locks", "r", *TINY)
    assert code == cli.EXIT_PASS and len(json.loads(out)["nodes"]) == 3


def test_export_matches_graph():
    cfg = ModelConfig(vars=("x",), values=(0, 1), locations=(0,))
    c = parse_program("x := 1 || x := 0")
    G = CodeSemantics.for_program(c, cfg, "L").sem(c)
    doc = json.loads(to_json(G))
    g = G.graph
    assert len(doc["nodes"]) == len(g.node_labels) and len(doc["edges"]) == len(g.src)
    assert len(doc["tiles"]) == len(list(g.tiles()))
    assert {e["pol"] for e in doc["edges"]} == {"C", "F"}
    assert sorted(doc["initial"]) == sorted(G.initial)
    dot = to_dot(G)
    assert dot.count(" -> ") == len(g.src)
    M = StatelessModel(cfg, ("r",))
    mdoc = json.loads(to_json(M))
    assert all(e["pol"] is None for e in mdoc["edges"])
    assert mdoc["tiles"]
