"""``fm`` command line: validate, sim, render, fmt, demo signature.

Exit codes: 0 success, 1 validation errors, 2 parse error, 3 usage error,
4 simulation error.
"""

from __future__ import annotations

import argparse
import os
import sys
import tempfile

from . import toypki
from .core import FMError, Ruleset, errors, validate
from .dsl import ParseError, SerializeError, parse, serialize
from .render import Level, RenderError, RenderOptions, render_dot
from .sim import ScenarioError, SimulationError, parse_scenario, simulate

OK, INVALID, PARSE, USAGE, SIMULATION = 0, 1, 2, 3, 4


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _err(*parts):
    print(*parts, file=sys.stderr)


def _read(path: str) -> str:
    try:
        with open(path, encoding="utf-8") as f:
            return f.read()
    except (OSError, UnicodeDecodeError) as exc:
        raise UsageError(f"cannot read {path}: {exc}") from None


def write_atomic(path: str, text: str):
    """Write *text* next to *path* and rename over it, so failures leave no partial file."""
    directory = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".fm-", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="\n") as f:
            f.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _emit(text: str, out_path):
    if out_path:
        write_atomic(out_path, text)
    else:
        sys.stdout.write(text)


def _load_model(path, ruleset="strict"):
    """Parse and validate; returns (model, exit_code or None)."""
    text = _read(path)
    try:
        model = parse(text, ruleset)
    except ParseError as exc:
        _err(f"{path}:{exc.span.line}:{exc.span.column}: parse error: expected "
             f"{' or '.join(exc.expected)}, found {exc.found}")
        return None, PARSE
    diags = validate(model)
    for d in diags:
        _err(d.format(path))
    if errors(diags):
        return model, INVALID
    return model, None


def cmd_validate(args) -> int:
    _, code = _load_model(args.model, args.ruleset)
    return OK if code is None else code


def cmd_sim(args) -> int:
    model, code = _load_model(args.model, args.ruleset)
    if code is not None:
        return code
    text = _read(args.scenario)
    try:
        scenario = parse_scenario(text)
    except ScenarioError as exc:
        _err(f"{args.scenario}: {exc}")
        return PARSE
    try:
        scenario.check(model)
        log = simulate(model, scenario)
    except ScenarioError as exc:
        _err(f"{args.scenario}: {exc}")
        return SIMULATION
    except SimulationError as exc:
        _err(f"simulation error: {exc} ({len(exc.log.events)} events logged)")
        return SIMULATION
    _emit(log.to_tsv(), args.out)
    return OK


def cmd_render(args) -> int:
    model, code = _load_model(args.model, args.ruleset)
    if code is not None:
        return code
    opts = RenderOptions(Level(args.level), args.show_annotations, args.rankdir)
    try:
        dot = render_dot(model, opts)
    except RenderError as exc:
        _err(str(exc))
        return INVALID
    _emit(dot, args.out)
    return OK


def cmd_fmt(args) -> int:
    text = _read(args.model)
    try:
        model = parse(text)
    except ParseError as exc:
        _err(f"{args.model}:{exc.span.line}:{exc.span.column}: parse error: expected "
             f"{' or '.join(exc.expected)}, found {exc.found}")
        return PARSE
    try:
        canonical = serialize(model)
    except SerializeError as exc:
        _err(f"{args.model}: {exc}")
        return INVALID
    if canonical != text:
        write_atomic(args.model, canonical)
    return OK


def cmd_demo_signature(args) -> int:
    try:
        toypki.ascii_hash(args.message)
        if args.tamper is not None:
            toypki.ascii_hash(args.tamper)
    except toypki.NonAsciiError as exc:
        raise UsageError(str(exc)) from None
    kp = toypki.keygen(args.seed)
    print(f"message: {args.message}")
    print(f"hash: {_chain(args.message)}")
    print(f"keys: private d={kp.private} public e={kp.public} modulus M={kp.modulus}")
    signed = toypki.sign_message(args.message, kp)
    print(f"cipher: {signed.appended_cipher}")
    print(f"transmitted: {signed.body} [{signed.appended_cipher}]")
    print(f"decrypted with public key: {toypki.toy_decrypt(signed.appended_cipher, kp.public, kp.modulus)}")
    print(f"verdict: {toypki.verify_message(signed, kp.public_key)}")
    if args.tamper is not None:
        forged = toypki.tamper_message(signed, args.tamper)
        print(f"tampered: {forged.body}")
        print(f"tampered hash: {_chain(forged.body)}")
        print(f"tampered verdict: {toypki.verify_message(forged, kp.public_key)}")
    return OK


def _chain(message: str) -> str:
    terms = toypki.hash_terms(message)
    if not terms:
        return "0"
    return " + ".join(map(str, terms)) + f" = {sum(terms)}"


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="fm", description="Flow machine modeling toolkit.")
    sub = p.add_subparsers(dest="command", parser_class=_Parser)
    sub.required = True

    def model_cmd(name, help, func):
        sp = sub.add_parser(name, help=help)
        sp.add_argument("model", help=".fm model file")
        sp.add_argument("--ruleset", choices=[r.value for r in Ruleset], default="strict")
        sp.set_defaults(func=func)
        return sp

    model_cmd("validate", "check a model and print diagnostics", cmd_validate)

    sp = model_cmd("sim", "simulate a scenario and write the TSV event log", cmd_sim)
    sp.add_argument("--scenario", required=True, help=".fms scenario file")
    sp.add_argument("--out", help="output file (default: standard output)")

    sp = model_cmd("render", "write a DOT diagram", cmd_render)
    sp.add_argument("--level", choices=[l.value for l in Level], default="full")
    sp.add_argument("--rankdir", choices=["LR", "TB"], default="LR")
    sp.add_argument("--show-annotations", action="store_true")
    sp.add_argument("--out", help="output file (default: standard output)")

    sp = sub.add_parser("fmt", help="rewrite a model file in canonical form")
    sp.add_argument("model")
    sp.set_defaults(func=cmd_fmt)

    demo = sub.add_parser("demo", help="worked examples")
    demo_sub = demo.add_subparsers(dest="demo", parser_class=_Parser)
    demo_sub.required = True
    sp = demo_sub.add_parser("signature", help="hash, sign and verify a message")
    sp.add_argument("--message", required=True)
    sp.add_argument("--tamper", help="replacement body to verify against the original signature")
    sp.add_argument("--seed", type=int, default=0, help="key generation seed")
    sp.set_defaults(func=cmd_demo_signature)
    return p


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
        return args.func(args)
    except UsageError as exc:
        _err(f"fm: {exc}")
        return USAGE
    except FMError as exc:
        _err(f"fm: {exc}")
        return SIMULATION


if __name__ == "__main__":
    sys.exit(main())
