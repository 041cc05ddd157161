import functools
from pathlib import Path

import pytest

from asyncsl.machine import ModelConfig
from asyncsl.parse import parse_program, parse_proof
from asyncsl.proofs import build_chi

CORPUS = Path(__file__).resolve().parent.parent / "corpus"
CFG = ModelConfig(vars=("x", "y"), values=(0, 1, 2, 3), locations=(0, 1), loop_bound=8)

# one line per acceptance criterion, printed at the end of the run
ACCEPTANCE: dict = {}


def corpus_programs() -> dict:
    return {p.stem: parse_program(p.read_text(), p.name) for p in sorted(CORPUS.glob("*.prog"))}


def corpus_proof_names() -> list:
    return [p.stem for p in sorted(CORPUS.glob("*.proof"))]


@functools.lru_cache(maxsize=None)
def proof(name: str):
    path = CORPUS / f"{name}.proof"
    return parse_proof(path.read_text(), path.name)


@functools.lru_cache(maxsize=None)
def bundle(name: str):
    return build_chi(proof(name), CFG)


@pytest.fixture
def cfg():
    return CFG


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(ACCEPTANCE):
        ok, msg = ACCEPTANCE[k]
        terminalreporter.write_line(f"[{'PASS' if ok else 'FAIL'}] criterion {k}: {msg}")
