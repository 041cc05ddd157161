"""Check separation logic derivations and find data races over finite domains.

Exit codes: 0 pass, 2 a check failed, 3 loop unrolling was truncated,
4 input error.
"""
from __future__ import annotations

import argparse
import json
import logging
import os
import sys
import time

from .codesem import CodeSemantics, program_alphabet
from .export import to_dot, to_json
from .machine import ModelConfig, StatefulModel, StatelessModel
from .parse import ParseError, format_program, parse_formula, parse_program, parse_proof
from .proofs import ProofSemantics, build_chi, check_derivation
from .soundness import check_1_soundness, check_2_soundness, check_soundness

EXIT_PASS, EXIT_FAIL, EXIT_TRUNCATED, EXIT_INPUT = 0, 2, 3, 4
EXIT_HELP = "exit codes: 0 pass, 2 a check failed, 3 loop unrolling was truncated, 4 input error"

log = logging.getLogger("asyncsl")


class InputError(Exception):
    pass


def _int_list(text: str, what: str) -> tuple:
    text = text.strip()
    try:
        if ".." in text:
            lo, hi = text.split("..")
            out = tuple(range(int(lo), int(hi) + 1))
        elif "," in text:
            out = tuple(int(t) for t in text.split(",") if t.strip())
        else:
            out = tuple(range(int(text)))
    except ValueError:
        raise InputError(f"bad {what} {text!r}: use N, LO..HI or a comma list") from None
    if not out:
        raise InputError(f"{what} {text!r} is empty (N means 0..N-1)")
    return out


def _names(text: str) -> tuple:
    return tuple(t.strip() for t in text.split(",") if t.strip())


def build_config(args) -> ModelConfig:
    kw = {}
    if args.config:
        try:
            with open(args.config) as fh:
                raw = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise InputError(f"cannot read config {args.config}: {exc}") from None
        unknown = set(raw) - {"vars", "values", "locations", "locks", "loop_bound"}
        if unknown:
            raise InputError(f"unknown config keys: {', '.join(sorted(unknown))}")
        kw.update(raw)
    if args.vars:
        kw["vars"] = _names(args.vars)
    if args.values:
        kw["values"] = _int_list(args.values, "values")
    if args.locations:
        kw["locations"] = _int_list(args.locations, "locations")
    if args.locks is not None:
        kw["locks"] = _names(args.locks)
    if args.loop_bound is not None:
        kw["loop_bound"] = args.loop_bound
    try:
        return ModelConfig(**kw)
    except (TypeError, ValueError) as exc:
        raise InputError(f"bad configuration: {exc}") from None


def _read(arg: str) -> tuple[str, str]:
    """File contents, or the argument itself when it names no file."""
    if os.path.isfile(arg):
        with open(arg) as fh:
            return fh.read(), arg
    return arg, "<arg>"


def _program(arg: str, cfg: ModelConfig):
    text, src = _read(arg)
    c = parse_program(text, src)
    from .codesem import program_vars
    extra = program_vars(c) - set(cfg.vars)
    if extra:
        raise InputError(f"program uses variables outside the configuration: {', '.join(sorted(extra))}")
    return c


def cmd_check(args, cfg: ModelConfig, out) -> int:
    c = _program(args.program, cfg)
    text, src = _read(args.proof)
    d = parse_proof(text, src)
    if d.code != c:
        raise InputError(f"the proof is about `{format_program(d.code)}`, not `{format_program(c)}`")
    t0 = time.time()
    rep = check_derivation(d, cfg)
    print(f"derivation: {'valid' if rep.ok else 'INVALID'} ({rep.checked} rule instances)", file=out)
    if rep.extensions:
        print(f"  extension rules used: {', '.join(rep.extensions)}", file=out)
    if not rep.ok:
        print(rep.summary(20 if args.verbose else 5), file=out)
        return EXIT_FAIL
    if d.ctx:
        print("  note: non-empty resource context; results are outside the closed-program theorem", file=out)
    b = build_chi(d, cfg)
    log.info("semantics built in %.1fs: proof %r, code %r", time.time() - t0, b.sep, b.code_s)
    limit = 20 if args.verbose else 3
    r1 = check_1_soundness(b, cfg)
    r2 = check_2_soundness(b, cfg)
    print(r1.text(limit), file=out)
    print(r2.text(limit), file=out)
    if not (r1.ok and r2.ok):
        return EXIT_FAIL
    return EXIT_TRUNCATED if b.code_s.truncated else EXIT_PASS


def cmd_race(args, cfg: ModelConfig, out) -> int:
    c = _program(args.program, cfg)
    P = parse_formula(args.pre, "--pre")
    rep = check_soundness(c, P, cfg)
    print(rep.to_json() if args.json else rep.text(50 if args.verbose else 10), file=out)
    if not rep.ok:
        return EXIT_FAIL
    return EXIT_TRUNCATED if rep.truncated else EXIT_PASS


def cmd_graph(args, cfg: ModelConfig, out) -> int:
    c = _program(args.program, cfg)
    if args.which == "sep":
        if not args.proof:
            raise InputError("--which sep needs --proof")
        text, src = _read(args.proof)
        d = parse_proof(text, src)
        if d.code != c:
            raise InputError("the proof is about a different program")
        G = ProofSemantics(cfg, c).sem(d)
    else:
        S = CodeSemantics(cfg, args.which.upper(), program_alphabet(c, cfg))
        G = S.sem(c)
    print(to_dot(G) if args.emit == "dot" else to_json(G), file=out)
    return EXIT_TRUNCATED if G.truncated else EXIT_PASS


def cmd_model(args, cfg: ModelConfig, out) -> int:
    if args.which == "s":
        alphabet = None
        if args.program:
            alphabet = program_alphabet(_program(args.program, cfg), cfg)
        M = StatefulModel(cfg, alphabet, cfg.locks)
    else:
        M = StatelessModel(cfg, cfg.locks)
    print(to_dot(M) if args.emit == "dot" else to_json(M), file=out)
    return EXIT_PASS


def make_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON file with vars, values, locations, locks, loop_bound")
    common.add_argument("--vars", help="comma-separated variable names")
    common.add_argument("--values", help="value domain: N, LO..HI or a comma list")
    common.add_argument("--locations", help="heap locations: N, LO..HI or a comma list")
    common.add_argument("--locks", help="comma-separated resource names")
    common.add_argument("--loop-bound", type=int, dest="loop_bound", help="maximal number of loop unrollings")
    common.add_argument("-v", "--verbose", action="store_true")

    p = argparse.ArgumentParser(prog="asyncsl", description=__doc__.splitlines()[0],
                                epilog=EXIT_HELP)
    sub = p.add_subparsers(dest="cmd", required=True)
    s = sub.add_parser("check", parents=[common], help="check a derivation and its soundness properties")
    s.add_argument("program")
    s.add_argument("--proof", required=True)
    s = sub.add_parser("race", parents=[common], help="report data races from a precondition")
    s.add_argument("program")
    s.add_argument("--pre", required=True)
    s.add_argument("--json", action="store_true")
    s = sub.add_parser("graph", parents=[common], help="export the semantics of a program or proof")
    s.add_argument("program")
    s.add_argument("--which", choices=["s", "l", "sep"], default="s")
    s.add_argument("--emit", choices=["dot", "json"], default="dot")
    s.add_argument("--proof")
    s = sub.add_parser("model", parents=[common], help="export a machine model")
    s.add_argument("--which", choices=["s", "l"], default="l")
    s.add_argument("--emit", choices=["dot", "json"], default="json")
    s.add_argument("--program", help="restrict the instructions to those of this program")
    return p


COMMANDS = {"check": cmd_check, "race": cmd_race, "graph": cmd_graph, "model": cmd_model}


def main(argv=None, out=None) -> int:
    out = out or sys.stdout
    parser = make_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_PASS if exc.code == 0 else EXIT_INPUT
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(name)s: %(message)s", stream=sys.stderr)
    try:
        cfg = build_config(args)
        return COMMANDS[args.cmd](args, cfg, out)
    except ParseError as exc:
        print(f"parse error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except (InputError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
