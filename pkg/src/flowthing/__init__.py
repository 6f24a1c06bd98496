"""Flow machine (FM) modeling toolkit: parse, validate, simulate and render FM models."""

from .core import (
    Diagnostic,
    Endpoint,
    FlowArc,
    Machine,
    Model,
    Ruleset,
    Severity,
    SourceSpan,
    Sphere,
    StageKind,
    TriggerArc,
    legal_successor,
    resolve,
    validate,
)
from .dsl import ParseError, parse, serialize
from .render import RenderOptions, render_dot, simplify
from .sim import EventLog, Scenario, parse_scenario, simulate

__all__ = [
    "Diagnostic", "Endpoint", "EventLog", "FlowArc", "Machine", "Model", "ParseError",
    "RenderOptions", "Ruleset", "Scenario", "Severity", "SourceSpan", "Sphere", "StageKind",
    "TriggerArc", "legal_successor", "parse", "parse_scenario", "render_dot", "resolve",
    "serialize", "simplify", "simulate", "validate",
]
