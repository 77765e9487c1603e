"""Minimal G-code dialect: planning, emission, parsing, and measurement.

Six commands only: G0 (rapid), G1 (linear+extrude), G21, G90, G28, M2.
Positioning and extrusion are absolute; numbers are emitted with exactly
5 decimal places, and the planner quantizes to the same grid so emitted
programs reparse to equal values.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass

from .slicer import LayerPlan, contour_perimeter

log = logging.getLogger(__name__)


class GCodeError(ValueError):
    """Malformed G-code text or an invalid program.  `line` is 1-based."""

    def __init__(self, message: str, line: int | None = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


@dataclass(frozen=True)
class RapidMove:
    x: float | None = None
    y: float | None = None
    z: float | None = None


@dataclass(frozen=True)
class LinearMove:
    x: float | None = None
    y: float | None = None
    z: float | None = None
    e: float | None = None
    f: float | None = None


@dataclass(frozen=True)
class UseMillimeters:
    pass


@dataclass(frozen=True)
class AbsolutePositioning:
    pass


@dataclass(frozen=True)
class Home:
    pass


@dataclass(frozen=True)
class ProgramEnd:
    pass


Command = RapidMove | LinearMove | UseMillimeters | AbsolutePositioning | Home | ProgramEnd

PROLOGUE: tuple[Command, ...] = (UseMillimeters(), AbsolutePositioning(), Home())


@dataclass(frozen=True)
class GCodeProgram:
    commands: tuple[Command, ...]


@dataclass(frozen=True)
class ToolpathParams:
    feed_rate: float = 1800.0       # mm/min for extruding moves
    travel_rate: float = 3000.0     # mm/min, carried in the plan config only
    extrusion_per_mm: float = 0.05  # filament mm per toolpath mm

    def __post_init__(self) -> None:
        for name in ("feed_rate", "travel_rate", "extrusion_per_mm"):
            if not (getattr(self, name) > 0.0):
                raise ValueError(f"{name} must be > 0")


def check_program(prog: GCodeProgram) -> None:
    """Raise GCodeError unless the program satisfies its invariants."""
    cmds = prog.commands
    if len(cmds) < 4 or cmds[:3] != PROLOGUE:
        raise GCodeError("program must begin with G21, G90, G28")
    if not isinstance(cmds[-1], ProgramEnd):
        raise GCodeError("program must end with M2")
    if any(isinstance(c, ProgramEnd) for c in cmds[:-1]):
        raise GCodeError("M2 before end of program")
    last_e = 0.0
    for i, c in enumerate(cmds):
        if isinstance(c, (RapidMove, LinearMove)):
            for name in _FIELD_ORDER[type(c)]:
                v = getattr(c, name)
                if v is not None and not math.isfinite(v):
                    raise GCodeError(f"command {i}: non-finite {name.upper()} value")
        if isinstance(c, LinearMove):
            if c.f is not None and not (c.f > 0.0):
                raise GCodeError(f"command {i}: feed rate must be > 0")
            if c.e is not None:
                if c.e < last_e:
                    raise GCodeError(f"command {i}: extrusion decreased")
                last_e = c.e


def _q(v: float) -> float:
    # quantize to the dialect's 5-decimal grid
    return round(v, 5)


def plan_toolpath(layers: list[LayerPlan], p: ToolpathParams) -> GCodeProgram:
    """Perimeter toolpath: one rapid per contour, one extruding move per edge.

    Open contours are skipped with a logged warning.  All emitted values are
    quantized to 5 decimals, so the planned program reparses identically
    from its own text emission.
    """
    cmds: list[Command] = list(PROLOGUE)
    e_total = 0.0
    feed = _q(p.feed_rate)
    for layer in layers:
        z = _q(layer.z)
        for ci, contour in enumerate(layer.contours):
            if not contour.closed:
                log.warning("skipping open contour %d on layer %d", ci, layer.index)
                continue
            pts = [(_q(x), _q(y)) for x, y in contour.vertices]
            cmds.append(RapidMove(x=pts[0][0], y=pts[0][1], z=z))
            prev = pts[0]
            for nxt in pts[1:] + [pts[0]]:
                e_total += math.hypot(nxt[0] - prev[0], nxt[1] - prev[1]) * p.extrusion_per_mm
                cmds.append(LinearMove(x=nxt[0], y=nxt[1], e=_q(e_total), f=feed))
                prev = nxt
    cmds.append(ProgramEnd())
    return GCodeProgram(tuple(cmds))


_FIELD_ORDER = {
    RapidMove: ("x", "y", "z"),
    LinearMove: ("x", "y", "z", "e", "f"),
}
_PLAIN_WORDS = {
    UseMillimeters: "G21",
    AbsolutePositioning: "G90",
    Home: "G28",
    ProgramEnd: "M2",
}


def emit_text(prog: GCodeProgram) -> bytes:
    """Render to ASCII text, LF line endings, 5 decimal places."""
    lines = []
    for c in prog.commands:
        kind = type(c)
        if kind in _PLAIN_WORDS:
            lines.append(_PLAIN_WORDS[kind])
            continue
        word = "G0" if isinstance(c, RapidMove) else "G1"
        parts = [word]
        for name in _FIELD_ORDER[kind]:
            v = getattr(c, name)
            if v is not None:
                parts.append(f"{name.upper()}{v:.5f}")
        lines.append(" ".join(parts))
    return ("\n".join(lines) + "\n").encode("ascii")


def _parse_number(token: str, line_no: int) -> float:
    body = token[1:]
    try:
        value = float(body)
    except ValueError:
        raise GCodeError(f"malformed number {body!r} in word {token!r}", line_no) from None
    if not math.isfinite(value):
        raise GCodeError(f"non-finite number {body!r} in word {token!r}", line_no)
    return value


_MOVE_LETTERS = {"G0": ("X", "Y", "Z"), "G1": ("X", "Y", "Z", "E", "F")}


def _parse_line(line: str, line_no: int) -> Command | None:
    code = line.split(";", 1)[0].strip()
    if not code:
        return None
    tokens = code.split()
    head = tokens[0].upper()
    if len(head) < 2 or head[0] not in "GM":
        raise GCodeError(f"unknown word {tokens[0]!r}", line_no)
    try:
        number = int(head[1:])
    except ValueError:
        raise GCodeError(f"malformed number {head[1:]!r} in word {tokens[0]!r}", line_no) from None
    head = f"{head[0]}{number}"

    if head in ("G21", "G90", "G28", "M2"):
        if len(tokens) > 1:
            raise GCodeError(f"{head} takes no arguments", line_no)
        return {
            "G21": UseMillimeters(),
            "G90": AbsolutePositioning(),
            "G28": Home(),
            "M2": ProgramEnd(),
        }[head]
    if head not in _MOVE_LETTERS:
        raise GCodeError(f"unknown G/M code {tokens[0]!r}", line_no)

    allowed = _MOVE_LETTERS[head]
    fields: dict[str, float] = {}
    for token in tokens[1:]:
        letter = token[0].upper()
        if letter not in allowed:
            raise GCodeError(f"unknown word {token!r} for {head}", line_no)
        if letter.lower() in fields:
            raise GCodeError(f"duplicate word {letter} on one line", line_no)
        fields[letter.lower()] = _parse_number(token, line_no)
    if head == "G0":
        return RapidMove(**fields)
    return LinearMove(**fields)


def parse_text(data: bytes) -> GCodeProgram:
    """Parse dialect text: one command per line, ';' comments ignored."""
    try:
        text = data.decode("utf-8")
    except UnicodeDecodeError as exc:
        raise GCodeError(f"not valid UTF-8 text: {exc}") from None
    cmds = []
    for i, raw in enumerate(text.splitlines()):
        cmd = _parse_line(raw, i + 1)
        if cmd is not None:
            cmds.append(cmd)
    return GCodeProgram(tuple(cmds))


@dataclass(frozen=True)
class PathLength:
    travel_mm: float
    extruded_mm: float


def path_length(prog: GCodeProgram) -> PathLength:
    """Euclidean travel (G0) and extruded (G1) distances from the origin."""
    x = y = z = 0.0
    travel = extruded = 0.0
    for c in prog.commands:
        if isinstance(c, Home):
            x = y = z = 0.0
        elif isinstance(c, (RapidMove, LinearMove)):
            nx = c.x if c.x is not None else x
            ny = c.y if c.y is not None else y
            nz = c.z if c.z is not None else z
            d = math.sqrt((nx - x) ** 2 + (ny - y) ** 2 + (nz - z) ** 2)
            if isinstance(c, RapidMove):
                travel += d
            else:
                extruded += d
            x, y, z = nx, ny, nz
    return PathLength(travel_mm=travel, extruded_mm=extruded)


@dataclass(frozen=True)
class ProgramLayer:
    index: int
    z: float
    extruded_mm: float


def program_layers(prog: GCodeProgram) -> list[ProgramLayer]:
    """Split a program into print layers.

    A move command that changes the current z starts a new layer; extruding
    distance before the first z change (the planner emits none) is ignored.
    """
    x = y = z = 0.0
    layers: list[ProgramLayer] = []
    current: list[float] | None = None  # [z, extruded]
    for c in prog.commands:
        if isinstance(c, Home):
            x = y = z = 0.0
        elif isinstance(c, (RapidMove, LinearMove)):
            nx = c.x if c.x is not None else x
            ny = c.y if c.y is not None else y
            nz = c.z if c.z is not None else z
            if nz != z:
                if current is not None:
                    layers.append(ProgramLayer(len(layers), current[0], current[1]))
                current = [nz, 0.0]
            if isinstance(c, LinearMove) and current is not None:
                current[1] += math.sqrt((nx - x) ** 2 + (ny - y) ** 2 + (nz - z) ** 2)
            x, y, z = nx, ny, nz
    if current is not None:
        layers.append(ProgramLayer(len(layers), current[0], current[1]))
    return layers


@dataclass(frozen=True)
class ScannedLayer:
    index: int
    z: float
    extruded_mm: float
    start_offset: int  # byte offset of the layer's first command line
    end_offset: int    # byte offset just past the layer's last move line


def scan_text_layers(text: bytes) -> list[ScannedLayer]:
    """Tolerant byte-offset layer scan of dialect text.

    Unparseable lines are skipped; parseable move lines drive the same
    z-change layer rule as program_layers.  Used by the printer simulator to
    attribute stream damage and partial deliveries to layers.
    """
    x = y = z = 0.0
    layers: list[ScannedLayer] = []
    current: list | None = None  # [z, extruded, start_offset, end_offset]
    offset = 0
    for raw in text.splitlines(keepends=True):
        stripped = raw.decode("utf-8", errors="replace").rstrip("\r\n")
        try:
            cmd = _parse_line(stripped, 0)
        except GCodeError:
            cmd = None
        if isinstance(cmd, Home):
            x = y = z = 0.0
        elif isinstance(cmd, (RapidMove, LinearMove)):
            nx = cmd.x if cmd.x is not None else x
            ny = cmd.y if cmd.y is not None else y
            nz = cmd.z if cmd.z is not None else z
            if nz != z:
                if current is not None:
                    layers.append(ScannedLayer(len(layers), *current))
                current = [nz, 0.0, offset, offset + len(raw)]
            if current is not None:
                current[3] = offset + len(raw)
                if isinstance(cmd, LinearMove):
                    current[1] += math.sqrt((nx - x) ** 2 + (ny - y) ** 2 + (nz - z) ** 2)
            x, y, z = nx, ny, nz
        offset += len(raw)
    if current is not None:
        layers.append(ScannedLayer(len(layers), *current))
    return layers


def count_records(text: bytes) -> int:
    """Command-bearing line count: lines that are not blank or comment-only.

    For well-formed dialect text this equals the parsed command count; it is
    the record definition used when wrapping toolpaths in an integrity
    envelope, so the printer can cross-check the declared count.
    """
    count = 0
    for raw in text.decode("utf-8", errors="replace").splitlines():
        if raw.split(";", 1)[0].strip():
            count += 1
    return count


def intended_perimeters(layers: list[LayerPlan]) -> list[float]:
    """Per-layer closed-contour perimeter sums for layers the planner prints."""
    sums = [
        sum(contour_perimeter(c) for c in lp.contours if c.closed)
        for lp in layers
    ]
    return [s for s in sums if s > 0.0]
