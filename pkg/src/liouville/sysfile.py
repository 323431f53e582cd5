"""Loading and validation of the line-oriented system-file format.

The format has four sections.  Keys and values are separated by the first
``=`` on the line; blank lines and lines starting with ``#`` are skipped.

    [system]
    name = vortices3
    dimension = 3
    weights = 1, 1, -2          # optional, canonical weights 1 if omitted
    seed = 42                   # optional
    non_invariant = F           # optional comma list of control members
    param.g = 1                 # optional expression parameter bindings
    hamiltonian = <expression>

    [invariants]
    P1 = <expression>           # order is preserved
    ...

    [chart]                     # optional
    h_dim = 1
    param.omega = 1             # optional chart parameters
    residual_1 = w^2 + lam^2 - 2*h_1
    bracket_1 = -8, 8           # or: loop_1 = l, w; l, w; ...
    branch_1 = -1               # optional, default +1

    [probes]                    # optional
    point = 0.5, 1 | -0.25, 2   # q values | p values

Errors carry the offending line number.
"""
from __future__ import annotations

import os
from dataclasses import dataclass

from .expr import EvalPoint, ParseError, parse
from .symplectic import SymplecticStructure
from .algebra import InvariantSet
from .action_angle import ChartDegree, SeparableChart
from .catalog import SystemDefinition

__all__ = ["SystemFileError", "load_system_file", "loads_system"]

_SECTIONS = ("system", "invariants", "chart", "probes")


class SystemFileError(Exception):
    def __init__(self, message: str, line: int | None = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


@dataclass
class _Entry:
    key: str
    value: str
    line: int


def _split_sections(text: str) -> dict[str, list[_Entry]]:
    sections: dict[str, list[_Entry]] = {}
    current: str | None = None
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if line.startswith("[") and line.endswith("]"):
            name = line[1:-1].strip().lower()
            if name not in _SECTIONS:
                raise SystemFileError(f"unknown section [{name}]", lineno)
            if name in sections:
                raise SystemFileError(f"duplicate section [{name}]", lineno)
            sections[name] = []
            current = name
            continue
        if current is None:
            raise SystemFileError("content before the first section", lineno)
        if "=" not in line:
            raise SystemFileError("expected key = value", lineno)
        key, _, value = line.partition("=")
        sections[current].append(_Entry(key.strip(), value.strip(), lineno))
    if "system" not in sections:
        raise SystemFileError("missing [system] section")
    if "invariants" not in sections or not sections["invariants"]:
        raise SystemFileError("missing or empty [invariants] section")
    return sections


def _float(text: str, line: int, what: str) -> float:
    try:
        return float(text)
    except ValueError:
        raise SystemFileError(f"bad {what}: {text!r}", line) from None


def _float_list(text: str, line: int, what: str) -> list[float]:
    items = [s.strip() for s in text.split(",")]
    if any(not s for s in items):
        raise SystemFileError(f"bad {what}: {text!r}", line)
    return [_float(s, line, what) for s in items]


def _parse_expr(text: str, dimension: int, line: int):
    try:
        return parse(text, dimension)
    except ParseError as exc:
        raise SystemFileError(f"bad expression: {exc}", line) from None


def _unique(entries: list[_Entry], section: str) -> dict[str, _Entry]:
    out: dict[str, _Entry] = {}
    for e in entries:
        if e.key in out:
            raise SystemFileError(
                f"duplicate key {e.key!r} in [{section}]", e.line)
        out[e.key] = e
    return out


def _build_chart(entries: list[_Entry]) -> SeparableChart:
    table = _unique(entries, "chart")
    if "h_dim" not in table:
        raise SystemFileError("chart needs h_dim",
                              entries[0].line if entries else None)
    e = table.pop("h_dim")
    try:
        h_dim = int(e.value)
    except ValueError:
        raise SystemFileError(f"bad h_dim: {e.value!r}", e.line) from None
    params = {}
    residuals: dict[int, _Entry] = {}
    brackets: dict[int, _Entry] = {}
    loops: dict[int, _Entry] = {}
    branches: dict[int, _Entry] = {}
    for key, e in table.items():
        if key.startswith("param."):
            params[key[6:]] = _float(e.value, e.line, "chart parameter")
            continue
        for prefix, store in (("residual_", residuals), ("bracket_", brackets),
                              ("loop_", loops), ("branch_", branches)):
            if key.startswith(prefix):
                try:
                    j = int(key[len(prefix):])
                except ValueError:
                    raise SystemFileError(
                        f"bad degree index in {key!r}", e.line) from None
                store[j] = e
                break
        else:
            raise SystemFileError(f"unknown chart key {key!r}", e.line)
    if not residuals:
        raise SystemFileError("chart needs residual_1")
    n = max(residuals)
    degrees = []
    for j in range(1, n + 1):
        if j not in residuals:
            raise SystemFileError(f"chart is missing residual_{j}")
        e = residuals[j]
        residual = _parse_expr(e.value, 0, e.line)
        bracket = loop = None
        if j in brackets:
            vals = _float_list(brackets[j].value, brackets[j].line, "bracket")
            if len(vals) != 2:
                raise SystemFileError("bracket needs two values",
                                      brackets[j].line)
            bracket = (vals[0], vals[1])
        if j in loops:
            pts = []
            for chunk in loops[j].value.split(";"):
                pair = _float_list(chunk, loops[j].line, "loop point")
                if len(pair) != 2:
                    raise SystemFileError("loop points are lam, w pairs",
                                          loops[j].line)
                pts.append((pair[0], pair[1]))
            loop = tuple(pts)
        sign = 1
        if j in branches:
            text = branches[j].value
            if text not in ("1", "-1", "+1"):
                raise SystemFileError(f"branch must be 1 or -1, got {text!r}",
                                      branches[j].line)
            sign = int(text)
        try:
            degrees.append(ChartDegree(residual, bracket=bracket, loop=loop,
                                       branch_sign=sign))
        except ValueError as exc:
            raise SystemFileError(f"degree {j}: {exc}", e.line) from None
    extra = set(brackets) | set(loops) | set(branches)
    extra -= set(range(1, n + 1))
    if extra:
        raise SystemFileError(
            f"chart cycle keys without residual: {sorted(extra)}")
    try:
        return SeparableChart(tuple(degrees), h_dim=h_dim, params=params)
    except ValueError as exc:
        raise SystemFileError(f"bad chart: {exc}") from None


def loads_system(text: str, name_hint: str = "system") -> SystemDefinition:
    """Parse system-file text into a fully bound SystemDefinition."""
    sections = _split_sections(text)
    table = _unique(sections["system"], "system")
    params: dict[str, float] = {}
    for key in list(table):
        if key.startswith("param."):
            e = table.pop(key)
            params[key[6:]] = _float(e.value, e.line, "parameter")
    known = {"name", "dimension", "weights", "seed", "non_invariant",
             "hamiltonian"}
    for key, e in table.items():
        if key not in known:
            raise SystemFileError(f"unknown [system] key {key!r}", e.line)
    if "dimension" not in table:
        raise SystemFileError("[system] needs dimension")
    e = table["dimension"]
    try:
        n = int(e.value)
    except ValueError:
        raise SystemFileError(f"bad dimension: {e.value!r}", e.line) from None
    if n < 1:
        raise SystemFileError("dimension must be positive", e.line)
    if "weights" in table:
        e = table["weights"]
        weights = _float_list(e.value, e.line, "weights")
        if len(weights) != n:
            raise SystemFileError(
                f"expected {n} weights, got {len(weights)}", e.line)
        try:
            structure = SymplecticStructure(n, tuple(weights))
        except ValueError as exc:
            raise SystemFileError(str(exc), e.line) from None
    else:
        structure = SymplecticStructure.canonical(n)
    seed = 42
    if "seed" in table:
        e = table["seed"]
        try:
            seed = int(e.value)
        except ValueError:
            raise SystemFileError(f"bad seed: {e.value!r}", e.line) from None
    name = table["name"].value if "name" in table else name_hint
    if "hamiltonian" not in table:
        raise SystemFileError("[system] needs hamiltonian")
    e = table["hamiltonian"]
    hamiltonian = _parse_expr(e.value, n, e.line)
    names = []
    exprs = []
    for entry in sections["invariants"]:
        if entry.key in names:
            raise SystemFileError(
                f"duplicate invariant {entry.key!r}", entry.line)
        names.append(entry.key)
        exprs.append(_parse_expr(entry.value, n, entry.line))
    non_invariant: frozenset = frozenset()
    if "non_invariant" in table:
        e = table["non_invariant"]
        flagged = [s.strip() for s in e.value.split(",") if s.strip()]
        unknown = set(flagged) - set(names)
        if unknown:
            raise SystemFileError(
                f"non_invariant names not in [invariants]: {sorted(unknown)}",
                e.line)
        non_invariant = frozenset(flagged)
    try:
        invariants = InvariantSet(structure, tuple(names), tuple(exprs),
                                  params=dict(params))
    except ValueError as exc:
        raise SystemFileError(str(exc)) from None
    chart = None
    if "chart" in sections:
        chart = _build_chart(sections["chart"])
    probes = []
    for entry in sections.get("probes", []):
        if entry.key != "point":
            raise SystemFileError(
                f"unknown [probes] key {entry.key!r}", entry.line)
        if "|" not in entry.value:
            raise SystemFileError(
                "probe points are written q1, .. | p1, ..", entry.line)
        q_text, _, p_text = entry.value.partition("|")
        qs = _float_list(q_text, entry.line, "probe point")
        ps = _float_list(p_text, entry.line, "probe point")
        if len(qs) != n or len(ps) != n:
            raise SystemFileError(
                f"probe point needs {n} q and {n} p values", entry.line)
        probes.append(EvalPoint(tuple(qs), tuple(ps), dict(params)))
    return SystemDefinition(
        name=name, structure=structure, hamiltonian=hamiltonian,
        invariants=invariants, parameter_values=dict(params), seed=seed,
        chart=chart, non_invariant=non_invariant,
        suggested_probes=tuple(probes),
        description=f"loaded system {name!r}")


def load_system_file(path: str) -> SystemDefinition:
    """Read and parse a system file; errors carry line numbers."""
    with open(path, "r", encoding="utf-8") as fh:
        text = fh.read()
    stem = os.path.splitext(os.path.basename(path))[0]
    return loads_system(text, name_hint=stem)
