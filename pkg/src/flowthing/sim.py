"""Deterministic token simulation over a validated model.

Execution rules:

* A token entering a stage stays there for the stage latency (default 1)
  and then exits. Each exit is one simulation step.
* At exit the bound handler (if any) runs, then outgoing flow arcs route
  the token and trigger arcs fire.
* Guarded flow arcs leaving a stage need exactly one true guard. Unguarded
  arcs are all taken, and every copy after the first gets a fresh id.
* A guard label may be prefixed with ``!`` to negate it. Each distinct
  label is evaluated once per step, consuming one scenario decision.
* A trigger starts a new token (of the target machine's thing type) at its
  target stage. The new token copies the source token's attributes.
* A transfer stage faces both ways. A token that came in from another
  machine (or was injected there) follows only intra-machine arcs. One
  that came from inside the machine follows only inter-machine arcs.
* A token with nowhere to go retires.
* Pending exits are ordered by (time, token id, arc declaration order).
"""

from __future__ import annotations

import enum
import heapq
import re
from dataclasses import dataclass, field
from typing import Optional, Union

from . import toypki
from .core import Endpoint, FMError, Model, StageKind, errors, resolve, validate, ResolveError

Scalar = Union[int, str]


class SimulationError(FMError):
    def __init__(self, message: str, log: "EventLog"):
        super().__init__(message)
        self.log = log


class Nontermination(SimulationError):
    pass


class ScenarioError(FMError):
    def __init__(self, message: str, line: Optional[int] = None):
        super().__init__(f"line {line}: {message}" if line else message)
        self.line = line


class EventKind(str, enum.Enum):
    INJECT = "inject"
    ENTER = "enter"
    EXIT = "exit"
    TRIGGER_FIRED = "trigger_fired"
    GUARD_EVAL = "guard_eval"
    RETIRE = "retire"
    HANDLER_APPLIED = "handler_applied"


@dataclass
class Token:
    id: int
    thing_type: str
    at: Endpoint
    attrs: dict = field(default_factory=dict)
    born_at: int = 0
    inbound: bool = False


@dataclass(frozen=True)
class Event:
    time: int
    token_id: int
    thing_type: str
    endpoint: Endpoint
    kind: EventKind
    detail: str = ""


@dataclass
class EventLog:
    events: list[Event] = field(default_factory=list)
    verdicts: dict[str, Scalar] = field(default_factory=dict)
    # final state of every token, keyed by id; not part of the TSV
    tokens: dict[int, Token] = field(default_factory=dict)

    HEADER = "time\ttoken_id\tthing_type\tendpoint\tkind\tdetail"

    def to_tsv(self) -> str:
        lines = [self.HEADER]
        for e in self.events:
            lines.append(f"{e.time}\t{e.token_id}\t{e.thing_type}\t{e.endpoint}\t{e.kind.value}\t"
                         + _clean(e.detail))
        for key in sorted(self.verdicts):
            lines.append(f"verdict\t{key}\t{_clean(str(self.verdicts[key]))}")
        return "\n".join(lines) + "\n"

    def final_time(self) -> int:
        return self.events[-1].time if self.events else 0

    def of_kind(self, kind) -> list[Event]:
        kind = EventKind(kind)
        return [e for e in self.events if e.kind is kind]


def _clean(text: str) -> str:
    return text.replace("\t", " ").replace("\n", " ")


@dataclass(frozen=True)
class Injection:
    time: int
    thing_type: str
    endpoint: Endpoint
    attrs: tuple[tuple[str, Scalar], ...] = ()
    count: int = 1


@dataclass(frozen=True)
class HandlerBinding:
    name: str
    args: tuple[str, ...] = ()

    def __str__(self):
        return f"{self.name}({', '.join(self.args)})" if self.args else self.name


@dataclass
class Scenario:
    injections: list[Injection] = field(default_factory=list)
    decisions: dict[str, list[bool]] = field(default_factory=dict)
    latencies: dict[Endpoint, int] = field(default_factory=dict)
    handlers: dict[Endpoint, HandlerBinding] = field(default_factory=dict)
    max_steps: int = 10000

    def check(self, model: Model):
        """Raise ScenarioError unless every endpoint resolves and injections are legal."""
        def res(ep: Endpoint, what):
            try:
                resolve(model, str(ep))
            except ResolveError as exc:
                raise ScenarioError(f"{what}: {exc}") from None

        for inj in self.injections:
            res(inj.endpoint, "inject")
            if inj.endpoint.stage not in (StageKind.CREATE, StageKind.TRANSFER):
                raise ScenarioError(
                    f"inject at {inj.endpoint}: things enter only at create or transfer stages")
            if inj.count < 1 or inj.time < 0:
                raise ScenarioError(f"inject at {inj.endpoint}: count must be >= 1, time >= 0")
        for ep, d in self.latencies.items():
            res(ep, "latency")
            if d < 1:
                raise ScenarioError(f"latency for {ep} must be positive, got {d}")
        for ep, binding in self.handlers.items():
            res(ep, "handle")
            if binding.name not in toypki.HANDLERS:
                raise ScenarioError(f"unknown handler {binding.name!r} at {ep}")
        if self.max_steps < 1:
            raise ScenarioError("maxsteps must be positive")


def split_guard(label: str) -> tuple[str, bool]:
    label = label.strip()
    if label.startswith("!"):
        return label[1:].strip(), True
    return label, False


class State:
    """A running simulation. Use :func:`step` or :meth:`run` to advance it."""

    def __init__(self, model: Model, scenario: Scenario):
        self.model = model
        self.scenario = scenario
        self.machines = model.machine_index()
        self.log = EventLog()
        self.queue: list[tuple] = []
        self.tokens: dict[int, Token] = {}
        self.next_id = 1
        self.steps = 0
        self.decision_pos: dict[str, int] = {}
        self.pools: dict[Endpoint, dict] = {}
        self.flows_from: dict[Endpoint, list[tuple[int, object]]] = {}
        for i, arc in enumerate(model.flows):
            self.flows_from.setdefault(arc.src, []).append((i, arc))
        self.triggers_from: dict[Endpoint, list[tuple[int, object]]] = {}
        for i, arc in enumerate(model.triggers):
            self.triggers_from.setdefault(arc.src, []).append((len(model.flows) + i, arc))

        order = sorted(range(len(scenario.injections)), key=lambda i: scenario.injections[i].time)
        for i in order:
            inj = scenario.injections[i]
            for _ in range(inj.count):
                tok = self._new_token(inj.thing_type, inj.endpoint, dict(inj.attrs), inj.time)
                tok.inbound = inj.endpoint.stage is StageKind.TRANSFER
                heapq.heappush(self.queue, (inj.time, tok.id, -1, "inject"))

    @property
    def running(self) -> bool:
        return bool(self.queue)

    def _new_token(self, thing_type, at, attrs, now) -> Token:
        tok = Token(self.next_id, thing_type, at, attrs, now)
        self.next_id += 1
        self.tokens[tok.id] = tok
        self.log.tokens[tok.id] = tok
        return tok

    def _emit(self, time, tok: Token, kind, detail="", at=None):
        self.log.events.append(Event(time, tok.id, tok.thing_type, at or tok.at,
                                     EventKind(kind), detail))

    def _latency(self, ep) -> int:
        return self.scenario.latencies.get(ep, 1)

    def _enter(self, tok: Token, ep: Endpoint, now: int, order: int, detail=""):
        tok.at = ep
        self._emit(now, tok, EventKind.ENTER, detail)
        heapq.heappush(self.queue, (now + self._latency(ep), tok.id, order, "exit"))

    def _fail(self, exc_type, message):
        raise exc_type(message, self.log)

    def _decide(self, label: str, now: int, tok: Token, cache: dict) -> bool:
        base, negated = split_guard(label)
        if base not in cache:
            pos = self.decision_pos.get(base, 0)
            values = self.scenario.decisions.get(base, [])
            if pos >= len(values):
                self._fail(SimulationError,
                           f"guard {base!r} has no decision left (used {pos}) at {tok.at}")
            cache[base] = values[pos]
            self.decision_pos[base] = pos + 1
            self._emit(now, tok, EventKind.GUARD_EVAL, f"{base}={'true' if values[pos] else 'false'}")
        return cache[base] != negated

    def step(self) -> "State":
        if not self.queue:
            raise FMError("simulation has no pending work")
        if self.steps >= self.scenario.max_steps:
            self._fail(Nontermination,
                       f"exceeded maxsteps={self.scenario.max_steps} with "
                       f"{len(self.queue)} pending token(s)")
        self.steps += 1
        now, tid, order, what = heapq.heappop(self.queue)
        tok = self.tokens[tid]
        if what == "inject":
            self._emit(now, tok, EventKind.INJECT)
            self._enter(tok, tok.at, now, order)
            return self

        ep = tok.at
        binding = self.scenario.handlers.get(ep)
        if binding is not None:
            if binding.name == "combine":
                if not self._combine(tok, binding, now):
                    return self
            else:
                try:
                    toypki.HANDLERS[binding.name](tok.attrs, binding.args, self.log.verdicts)
                except toypki.HandlerError as exc:
                    self._fail(SimulationError, f"handler {binding} at {ep} failed: {exc}")
                self._emit(now, tok, EventKind.HANDLER_APPLIED, str(binding))
        self._emit(now, tok, EventKind.EXIT)

        cache: dict[str, bool] = {}
        flows = self.flows_from.get(ep, [])
        if ep.stage is StageKind.TRANSFER:
            inward = tok.inbound
            flows = [(i, a) for i, a in flows if (a.dst.machine_path == ep.machine_path) == inward]

        guarded = [(i, a) for i, a in flows if a.guard is not None]
        chosen = [(i, a) for i, a in flows if a.guard is None]
        if guarded:
            true_arcs = [(i, a) for i, a in guarded if self._decide(a.guard, now, tok, cache)]
            if len(true_arcs) != 1:
                self._fail(SimulationError,
                           f"branching at {ep}: {len(true_arcs)} guards true, need exactly one")
            chosen = sorted(chosen + true_arcs, key=lambda t: t[0])

        for n, (i, arc) in enumerate(chosen):
            if n == 0:
                target, detail = tok, ""
            else:
                target = self._new_token(tok.thing_type, ep, dict(tok.attrs), now)
                detail = f"copy of {tok.id}"
            target.inbound = arc.dst.machine_path != ep.machine_path
            self._enter(target, arc.dst, now, i, detail)

        for i, arc in self.triggers_from.get(ep, []):
            if arc.guard is not None and not self._decide(arc.guard, now, tok, cache):
                continue
            machine = self.machines[arc.dst.machine_path]
            born = self._new_token(machine.thing_type, arc.dst, dict(tok.attrs), now)
            self._emit(now, born, EventKind.TRIGGER_FIRED, f"from {tok.id} at {ep}")
            self._enter(born, arc.dst, now, i)

        if not chosen:
            self._emit(now, tok, EventKind.RETIRE)
        return self

    def _combine(self, tok: Token, binding: HandlerBinding, now: int) -> bool:
        """Join tokens at this stage until the required keys are all present.

        Tokens that arrive before the join completes hand over their
        attributes and retire. The token that completes it continues with
        the merged attributes as the machine's thing type.
        """
        ep = tok.at
        pool = self.pools.setdefault(ep, {})
        merged = dict(pool)
        merged.update(tok.attrs)
        try:
            ready = toypki.combine_ready(merged, binding.args)
        except toypki.HandlerError as exc:
            self._fail(SimulationError, f"handler {binding} at {ep} failed: {exc}")
        if not ready:
            pool.update(tok.attrs)
            self._emit(now, tok, EventKind.EXIT)
            self._emit(now, tok, EventKind.RETIRE, f"held for {binding}")
            return False
        del self.pools[ep]
        tok.attrs = merged
        tok.thing_type = self.machines[ep.machine_path].thing_type
        self._emit(now, tok, EventKind.HANDLER_APPLIED, str(binding))
        return True

    def run(self) -> EventLog:
        while self.queue:
            self.step()
        return self.log


def step(state: State) -> State:
    """Process exactly the earliest pending entry of *state*."""
    return state.step()


def start(model: Model, scenario: Scenario, check: bool = True) -> State:
    if check:
        errs = errors(validate(model))
        if errs:
            raise FMError(f"model has {len(errs)} validation error(s); first: {errs[0].message}")
        scenario.check(model)
    return State(model, scenario)


def simulate(model: Model, scenario: Scenario) -> EventLog:
    """Run *scenario* on *model* to completion and return the event log.

    Raises SimulationError (carrying the partial log) when a guard runs out
    of decisions or a branch is ambiguous, and Nontermination when the run
    needs more than ``scenario.max_steps`` steps.
    """
    return start(model, scenario).run()


# -- .fms scenario files ------------------------------------------------------

_VALUE_RE = re.compile(r'\s*([A-Za-z_][A-Za-z0-9_-]*)\s*=\s*("(?:[^"\\]|\\.)*"|[^,\s]+)\s*(,|$)')


def _value(raw: str) -> Scalar:
    if raw.startswith('"'):
        return re.sub(r'\\(.)', r'\1', raw[1:-1])
    if re.fullmatch(r"-?\d+", raw):
        return int(raw)
    return raw


def _endpoint(text: str, lineno: int) -> Endpoint:
    try:
        return Endpoint.parse(text)
    except ValueError as exc:
        raise ScenarioError(str(exc), lineno) from None


def _int_arg(text: str, what: str, lineno: int) -> int:
    if not re.fullmatch(r"-?\d+", text):
        raise ScenarioError(f"{what} must be an integer, got {text!r}", lineno)
    return int(text)


def parse_scenario(text: str) -> Scenario:
    """Parse the line-based ``.fms`` format.

    ::

        inject <count> <ThingType> at <path> time <t> [with k=v (, k=v)*]
        decide <guard-label> = <true|false> (, <true|false>)*
        latency <path> = <d>
        handle <path> with <handler-name>[(arg-key (, arg-key)*)]
        maxsteps <n>
    """
    sc = Scenario()
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = _strip_comment(raw).strip()
        if not line:
            continue
        word = line.split(None, 1)[0]
        if word == "inject":
            m = re.fullmatch(r"inject\s+(\S+)\s+(\S+)\s+at\s+(\S+)\s+time\s+(\S+)(?:\s+with\s+(.*))?", line)
            if not m:
                raise ScenarioError("expected: inject <count> <ThingType> at <path> time <t> [with k=v, ...]", lineno)
            count = _int_arg(m.group(1), "count", lineno)
            attrs = _parse_attrs(m.group(5), lineno) if m.group(5) else ()
            sc.injections.append(Injection(_int_arg(m.group(4), "time", lineno), m.group(2),
                                           _endpoint(m.group(3), lineno), attrs, count))
        elif word == "decide":
            m = re.fullmatch(r"decide\s+([^\s=]+)\s*=\s*(.+)", line)
            if not m:
                raise ScenarioError("expected: decide <label> = <true|false>, ...", lineno)
            values = [v.strip() for v in m.group(2).split(",")]
            if any(v not in ("true", "false") for v in values):
                raise ScenarioError("decisions must be true or false", lineno)
            sc.decisions.setdefault(m.group(1), []).extend(v == "true" for v in values)
        elif word == "latency":
            m = re.fullmatch(r"latency\s+(\S+)\s*=\s*(\S+)", line)
            if not m:
                raise ScenarioError("expected: latency <path> = <d>", lineno)
            sc.latencies[_endpoint(m.group(1), lineno)] = _int_arg(m.group(2), "latency", lineno)
        elif word == "handle":
            m = re.fullmatch(r"handle\s+(\S+)\s+with\s+([A-Za-z][A-Za-z0-9_-]*)\s*(?:\((.*)\))?", line)
            if not m:
                raise ScenarioError("expected: handle <path> with <handler>[(key, ...)]", lineno)
            args = tuple(a.strip() for a in m.group(3).split(",")) if m.group(3) else ()
            if any(not a for a in args):
                raise ScenarioError("empty handler argument", lineno)
            sc.handlers[_endpoint(m.group(1), lineno)] = HandlerBinding(m.group(2), args)
        elif word == "maxsteps":
            m = re.fullmatch(r"maxsteps\s+(\S+)", line)
            if not m:
                raise ScenarioError("expected: maxsteps <n>", lineno)
            sc.max_steps = _int_arg(m.group(1), "maxsteps", lineno)
        else:
            raise ScenarioError(f"unknown directive {word!r}", lineno)
    return sc


def _strip_comment(line: str) -> str:
    in_str = False
    for i, c in enumerate(line):
        if c == '"' and (i == 0 or line[i - 1] != "\\"):
            in_str = not in_str
        elif c == "#" and not in_str:
            return line[:i]
    return line


def _parse_attrs(text: str, lineno: int) -> tuple[tuple[str, Scalar], ...]:
    out = []
    pos = 0
    text = text.strip()
    while pos < len(text):
        m = _VALUE_RE.match(text, pos)
        if not m:
            raise ScenarioError(f"bad attribute list near {text[pos:pos + 20]!r}", lineno)
        out.append((m.group(1), _value(m.group(2))))
        pos = m.end()
        if m.group(3) == "" and pos < len(text):
            raise ScenarioError("attributes must be separated by commas", lineno)
    return tuple(out)


def format_scenario(sc: Scenario) -> str:
    """Write *sc* back out in ``.fms`` form."""
    def val(v):
        if isinstance(v, int):
            return str(v)
        if re.fullmatch(r"[^\s,\"#=]+", v) and not re.fullmatch(r"-?\d+", v):
            return v
        return '"' + v.replace("\\", "\\\\").replace('"', '\\"') + '"'

    lines = []
    for inj in sc.injections:
        line = f"inject {inj.count} {inj.thing_type} at {inj.endpoint} time {inj.time}"
        if inj.attrs:
            line += " with " + ", ".join(f"{k}={val(v)}" for k, v in inj.attrs)
        lines.append(line)
    for label, values in sc.decisions.items():
        lines.append(f"decide {label} = " + ", ".join("true" if v else "false" for v in values))
    for ep, d in sc.latencies.items():
        lines.append(f"latency {ep} = {d}")
    for ep, b in sc.handlers.items():
        lines.append(f"handle {ep} with {b.name}" + (f"({', '.join(b.args)})" if b.args else ""))
    if sc.max_steps != 10000:
        lines.append(f"maxsteps {sc.max_steps}")
    return "\n".join(lines) + ("\n" if lines else "")
