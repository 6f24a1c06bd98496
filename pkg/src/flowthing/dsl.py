"""Textual ``.fm`` syntax: a recursive-descent parser and the canonical formatter.

Grammar::

    model   := decl* ;
    decl    := sphere | flow | trigger ;
    sphere  := "sphere" IDENT "{" (sphere | machine | note)* "}" ;
    machine := "machine" IDENT "of" IDENT "{" "stages" ":" stage ("," stage)* note* "}" ;
    flow    := "flow" path "->" path ("when" STRING)? ;
    trigger := "trigger" path "->" path ("when" STRING)? ;
    note    := "note" STRING ;
    path    := IDENT ("." IDENT)* "." stage ;

``#`` starts a comment running to end of line. Comments are not kept, so
formatting a file drops them; use ``note`` for text that must survive.
"""

from __future__ import annotations

import re
from dataclasses import dataclass

from .core import (
    STAGE_NAMES,
    Endpoint,
    FlowArc,
    FMError,
    Machine,
    Model,
    Ruleset,
    SourceSpan,
    Sphere,
    StageKind,
    TriggerArc,
    errors,
    validate,
)

KEYWORDS = frozenset({"sphere", "machine", "of", "stages", "flow", "trigger", "when", "note"}) | STAGE_NAMES

IDENT_RE = re.compile(r"[A-Za-z_][A-Za-z0-9_-]*")


class ParseError(FMError):
    def __init__(self, span: SourceSpan, expected: list[str], found: str):
        self.span = span
        self.expected = list(expected) or ["<anything>"]
        self.found = found
        super().__init__(
            f"{span.line}:{span.column}: expected {' or '.join(self.expected)}, found {found}"
        )


class SerializeError(FMError):
    pass


@dataclass(frozen=True)
class Token:
    kind: str  # "ident", "kw", "string", "punct", "eof"
    text: str  # raw source text
    value: str  # decoded value (strings unescaped)
    line: int
    column: int
    offset: int

    @property
    def span(self) -> SourceSpan:
        return SourceSpan(self.line, self.column, len(self.text))

    def describe(self) -> str:
        if self.kind == "eof":
            return "end of input"
        return repr(self.text)


_PUNCT = ("->", "{", "}", ":", ",", ".")


def tokenize(text: str) -> list[Token]:
    text = text.replace("\r\n", "\n").replace("\r", "\n")
    toks: list[Token] = []
    i, line, col = 0, 1, 1
    n = len(text)
    while i < n:
        c = text[i]
        if c == "\n":
            i, line, col = i + 1, line + 1, 1
            continue
        if c in " \t":
            i, col = i + 1, col + 1
            continue
        if c == "#":
            while i < n and text[i] != "\n":
                i, col = i + 1, col + 1
            continue
        if c == '"':
            j = i + 1
            chars = []
            while True:
                if j >= n or text[j] == "\n":
                    raise ParseError(SourceSpan(line, col, j - i), ['closing \'"\''],
                                     "end of line" if j < n else "end of input")
                if text[j] == "\\":
                    nxt = text[j + 1] if j + 1 < n else ""
                    if nxt not in ('"', "\\"):
                        raise ParseError(SourceSpan(line, col + (j - i), 2), ['\\"', "\\\\"],
                                         repr("\\" + nxt))
                    chars.append(nxt)
                    j += 2
                    continue
                if text[j] == '"':
                    j += 1
                    break
                chars.append(text[j])
                j += 1
            toks.append(Token("string", text[i:j], "".join(chars), line, col, i))
            col += j - i
            i = j
            continue
        m = IDENT_RE.match(text, i)
        if m:
            word = m.group()
            toks.append(Token("kw" if word in KEYWORDS else "ident", word, word, line, col, i))
            col += len(word)
            i = m.end()
            continue
        for p in _PUNCT:
            if text.startswith(p, i):
                toks.append(Token("punct", p, p, line, col, i))
                col += len(p)
                i += len(p)
                break
        else:
            raise ParseError(SourceSpan(line, col, 1), ["declaration"], repr(c))
    toks.append(Token("eof", "", "", line, col, n))
    return toks


class _Parser:
    def __init__(self, text: str, ruleset: Ruleset):
        self.toks = tokenize(text)
        self.pos = 0
        self.ruleset = ruleset

    @property
    def tok(self) -> Token:
        return self.toks[self.pos]

    def fail(self, expected):
        raise ParseError(self.tok.span, expected, self.tok.describe())

    def is_(self, text) -> bool:
        return self.tok.kind in ("kw", "punct") and self.tok.text == text

    def expect(self, text) -> Token:
        if not self.is_(text):
            self.fail([repr(text)])
        t = self.tok
        self.pos += 1
        return t

    def ident(self, what="identifier") -> Token:
        if self.tok.kind != "ident":
            self.fail([what])
        t = self.tok
        self.pos += 1
        return t

    def string(self) -> str:
        if self.tok.kind != "string":
            self.fail(["string"])
        t = self.tok
        self.pos += 1
        return t.value

    def stage(self) -> StageKind:
        if self.tok.kind == "kw" and self.tok.text in STAGE_NAMES:
            t = self.tok
            self.pos += 1
            return StageKind(t.text)
        self.fail(["stage name"])

    def model(self) -> Model:
        roots, flows, triggers = [], [], []
        while self.tok.kind != "eof":
            if self.is_("sphere"):
                roots.append(self.sphere())
            elif self.is_("flow") or self.is_("trigger"):
                arc = self.arc()
                (flows if isinstance(arc, FlowArc) else triggers).append(arc)
            else:
                self.fail(["'sphere'", "'flow'", "'trigger'"])
        return Model(tuple(roots), tuple(flows), tuple(triggers), self.ruleset)

    def sphere(self) -> Sphere:
        start = self.expect("sphere")
        name = self.ident("sphere name").text
        self.expect("{")
        children, machines, notes = [], [], []
        while not self.is_("}"):
            if self.is_("sphere"):
                children.append(self.sphere())
            elif self.is_("machine"):
                machines.append(self.machine())
            elif self.is_("note"):
                self.pos += 1
                notes.append(self.string())
            else:
                self.fail(["'}'", "'sphere'", "'machine'", "'note'"])
        self.pos += 1
        return Sphere(name, tuple(children), tuple(machines), tuple(notes),
                      SourceSpan(start.line, start.column, len("sphere")))

    def machine(self) -> Machine:
        start = self.expect("machine")
        name = self.ident("machine name").text
        self.expect("of")
        thing = self.ident("thing type").text
        self.expect("{")
        self.expect("stages")
        self.expect(":")
        stages = [self.stage()]
        while self.is_(","):
            self.pos += 1
            stages.append(self.stage())
        notes = []
        while self.is_("note"):
            self.pos += 1
            notes.append(self.string())
        if not self.is_("}"):
            self.fail(["','", "'note'", "'}'"])
        self.pos += 1
        return Machine(name, thing, tuple(stages), tuple(notes),
                       SourceSpan(start.line, start.column, len("machine")))

    def path(self) -> Endpoint:
        parts = [self.ident("path segment").text]
        self.expect(".")
        while self.tok.kind == "ident":
            parts.append(self.tok.text)
            self.pos += 1
            self.expect(".")
        return Endpoint(tuple(parts), self.stage())

    def arc(self):
        start = self.tok
        self.pos += 1
        src = self.path()
        self.expect("->")
        dst = self.path()
        guard = None
        if self.is_("when"):
            self.pos += 1
            guard = self.string()
        end = self.toks[self.pos - 1]
        length = end.offset + len(end.text) - start.offset
        span = SourceSpan(start.line, start.column, length)
        cls = FlowArc if start.text == "flow" else TriggerArc
        return cls(src, dst, guard, span)


def parse(text: str, ruleset: Ruleset | str = Ruleset.STRICT) -> Model:
    """Parse ``.fm`` source into a Model; raises ParseError on the first problem."""
    return _Parser(text, Ruleset(ruleset)).model()


def quote(s: str) -> str:
    return '"' + s.replace("\\", "\\\\").replace('"', '\\"') + '"'


def _check_string(s: str, where: str):
    if "\n" in s or "\r" in s:
        raise SerializeError(f"{where}: string contains a line break")


def _check_name(name: str, where: str):
    if not IDENT_RE.fullmatch(name) or name in KEYWORDS:
        raise SerializeError(f"{where}: {name!r} is not a valid identifier")


def serialize(model: Model) -> str:
    """Render *model* in canonical form.

    Two-space indentation, one declaration per line. Inside a sphere the
    notes come first, then machines, then subspheres. Flows follow all
    spheres and triggers follow flows, each group set off by a blank line.
    """
    broken = [d for d in errors(validate(model)) if d.code in ("FM-E001", "FM-E006")]
    if broken:
        d = broken[0]
        raise SerializeError(f"cannot serialize, {d.code} at {d.path}: {d.message}")

    out: list[str] = []

    def emit_sphere(s: Sphere, depth: int, prefix: str):
        pad = "  " * depth
        where = prefix + s.name
        _check_name(s.name, where)
        out.append(f"{pad}sphere {s.name} {{")
        for note in s.annotations:
            _check_string(note, where)
            out.append(f"{pad}  note {quote(note)}")
        for m in s.machines:
            mwhere = f"{where}.{m.name}"
            _check_name(m.name, mwhere)
            _check_name(m.thing_type, mwhere)
            if not m.stages:
                raise SerializeError(f"{mwhere}: machine has no stages")
            out.append(f"{pad}  machine {m.name} of {m.thing_type} {{")
            out.append(f"{pad}    stages: {', '.join(k.value for k in m.stages)}")
            for note in m.annotations:
                _check_string(note, mwhere)
                out.append(f"{pad}    note {quote(note)}")
            out.append(f"{pad}  }}")
        for child in s.children:
            emit_sphere(child, depth + 1, where + ".")
        out.append(f"{pad}}}")

    for root in model.roots:
        emit_sphere(root, 0, "")

    for keyword, arcs in (("flow", model.flows), ("trigger", model.triggers)):
        if arcs and out:
            out.append("")
        for arc in arcs:
            line = f"{keyword} {arc.src} -> {arc.dst}"
            if arc.guard is not None:
                _check_string(arc.guard, line)
                line += f" when {quote(arc.guard)}"
            out.append(line)

    return "\n".join(out) + "\n" if out else ""
