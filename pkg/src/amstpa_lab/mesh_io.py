"""STL mesh parsing, emission, and validation.

Supports both ASCII and binary STL with bit-exact binary round-trips.
Coordinates are millimeters, stored as 64-bit floats in memory; binary STL
carries 32-bit floats on the wire (widened on parse, rounded on emit).
"""

from __future__ import annotations

import logging
import math
import struct
from dataclasses import dataclass
from enum import Enum

log = logging.getLogger(__name__)

BINARY_HEADER = b"amstpa-lab".ljust(80, b"\x00")
_RECORD = struct.Struct("<12fH")
_COUNT = struct.Struct("<I")


class StlError(ValueError):
    """Malformed STL input.  `line` is 1-based for ASCII, None for binary."""

    def __init__(self, message: str, line: int | None = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class Encoding(Enum):
    ASCII = "ascii"
    BINARY = "binary"


@dataclass(frozen=True)
class Vec3:
    x: float
    y: float
    z: float

    def __sub__(self, other: "Vec3") -> "Vec3":
        return Vec3(self.x - other.x, self.y - other.y, self.z - other.z)

    def dot(self, other: "Vec3") -> float:
        return self.x * other.x + self.y * other.y + self.z * other.z

    def cross(self, other: "Vec3") -> "Vec3":
        return Vec3(
            self.y * other.z - self.z * other.y,
            self.z * other.x - self.x * other.z,
            self.x * other.y - self.y * other.x,
        )

    def norm(self) -> float:
        return math.sqrt(self.dot(self))

    def is_finite(self) -> bool:
        return math.isfinite(self.x) and math.isfinite(self.y) and math.isfinite(self.z)


@dataclass(frozen=True)
class Facet:
    normal: Vec3
    v0: Vec3
    v1: Vec3
    v2: Vec3

    @property
    def vertices(self) -> tuple[Vec3, Vec3, Vec3]:
        return (self.v0, self.v1, self.v2)

    def computed_normal(self) -> Vec3:
        """Right-hand-rule normal of (v0, v1, v2), unnormalized."""
        return (self.v1 - self.v0).cross(self.v2 - self.v0)

    def area(self) -> float:
        return 0.5 * self.computed_normal().norm()


@dataclass(frozen=True)
class TriangleMesh:
    facets: tuple[Facet, ...]
    source_encoding: Encoding = Encoding.ASCII


@dataclass(frozen=True)
class MeshReport:
    facet_count: int
    degenerate_facets: tuple[int, ...]
    nonmanifold_edges: int
    inverted_normals: tuple[int, ...]
    bbox_min: Vec3
    bbox_max: Vec3
    watertight: bool

    def is_clean(self) -> bool:
        return (
            self.watertight
            and not self.degenerate_facets
            and not self.inverted_normals
        )


def _parse_float(token: str, line: int) -> float:
    try:
        return float(token)
    except ValueError:
        raise StlError(f"unparseable float {token!r}", line) from None


def parse_stl_ascii(data: bytes) -> TriangleMesh:
    """Parse ASCII STL.  Keywords are matched case-insensitively.

    Raises StlError with a 1-based line number on malformed keyword
    sequences, loops without exactly 3 vertices, or bad floats.
    """
    try:
        text = data.decode("utf-8")
    except UnicodeDecodeError as exc:
        raise StlError(f"not valid UTF-8 text: {exc}") from None

    # (line_no, tokens) for each non-blank line
    lines = [
        (i + 1, raw.split())
        for i, raw in enumerate(text.splitlines())
        if raw.strip()
    ]
    if not lines:
        raise StlError("empty input, expected 'solid'", 1)

    pos = 0

    def peek_kw() -> str:
        return lines[pos][1][0].lower() if pos < len(lines) else ""

    line_no, tokens = lines[pos]
    if tokens[0].lower() != "solid":
        raise StlError(f"expected 'solid', got {tokens[0]!r}", line_no)
    pos += 1

    facets: list[Facet] = []
    while pos < len(lines):
        line_no, tokens = lines[pos]
        kw = tokens[0].lower()
        if kw == "endsolid":
            pos += 1
            break
        if kw != "facet":
            raise StlError(f"expected 'facet' or 'endsolid', got {tokens[0]!r}", line_no)
        if len(tokens) != 5 or tokens[1].lower() != "normal":
            raise StlError("expected 'facet normal nx ny nz'", line_no)
        normal = Vec3(*(_parse_float(t, line_no) for t in tokens[2:5]))
        pos += 1

        line_no, tokens = lines[pos] if pos < len(lines) else (line_no, [""])
        if [t.lower() for t in tokens] != ["outer", "loop"]:
            raise StlError("expected 'outer loop'", line_no)
        pos += 1

        verts: list[Vec3] = []
        while pos < len(lines) and peek_kw() == "vertex":
            line_no, tokens = lines[pos]
            if len(tokens) != 4:
                raise StlError("expected 'vertex x y z'", line_no)
            verts.append(Vec3(*(_parse_float(t, line_no) for t in tokens[1:4])))
            pos += 1
        if len(verts) != 3:
            where = lines[pos][0] if pos < len(lines) else line_no
            raise StlError(f"loop has {len(verts)} vertices, expected 3", where)

        line_no, tokens = lines[pos] if pos < len(lines) else (line_no, [""])
        if tokens[0].lower() != "endloop":
            raise StlError(f"expected 'endloop', got {tokens[0]!r}", line_no)
        pos += 1
        line_no, tokens = lines[pos] if pos < len(lines) else (line_no, [""])
        if tokens[0].lower() != "endfacet":
            raise StlError(f"expected 'endfacet', got {tokens[0]!r}", line_no)
        pos += 1
        facets.append(Facet(normal, verts[0], verts[1], verts[2]))
    else:
        raise StlError("missing 'endsolid'", lines[-1][0])

    if pos < len(lines):
        raise StlError("content after 'endsolid'", lines[pos][0])
    return TriangleMesh(tuple(facets), Encoding.ASCII)


def parse_stl_binary(data: bytes) -> TriangleMesh:
    """Parse binary STL: 80-byte header, uint32 LE count, 50-byte records.

    The declared record count must account for the file length exactly.
    """
    if len(data) < 84:
        raise StlError(f"binary STL needs at least 84 bytes, got {len(data)}")
    (count,) = _COUNT.unpack_from(data, 80)
    expected = 84 + 50 * count
    if len(data) != expected:
        raise StlError(
            f"truncated or oversized binary STL: {count} facets declared, "
            f"expected {expected} bytes, got {len(data)}"
        )
    facets = []
    for i in range(count):
        values = _RECORD.unpack_from(data, 84 + 50 * i)
        facets.append(
            Facet(
                Vec3(*values[0:3]),
                Vec3(*values[3:6]),
                Vec3(*values[6:9]),
                Vec3(*values[9:12]),
            )
        )
    return TriangleMesh(tuple(facets), Encoding.BINARY)


def parse_stl(data: bytes) -> TriangleMesh:
    """Auto-detect encoding.

    Files that open with 'solid' are tried as ASCII first; if that fails
    they are retried as binary (a common real-world malformation), with the
    fallback logged.
    """
    if data.lstrip()[:5].lower() == b"solid":
        try:
            return parse_stl_ascii(data)
        except StlError as ascii_err:
            try:
                mesh = parse_stl_binary(data)
            except StlError:
                raise ascii_err from None
            log.warning(
                "input starts with 'solid' but is not valid ASCII STL (%s); "
                "parsed as binary instead",
                ascii_err,
            )
            return mesh
    return parse_stl_binary(data)


def _require_finite(mesh: TriangleMesh) -> None:
    for i, f in enumerate(mesh.facets):
        if not (f.normal.is_finite() and all(v.is_finite() for v in f.vertices)):
            raise ValueError(f"facet {i} has a non-finite coordinate")


def emit_stl_binary(mesh: TriangleMesh) -> bytes:
    """Emit binary STL with the fixed 80-byte header and zero attributes."""
    _require_finite(mesh)
    out = bytearray(BINARY_HEADER)
    out += _COUNT.pack(len(mesh.facets))
    for i, f in enumerate(mesh.facets):
        try:
            out += _RECORD.pack(
                f.normal.x, f.normal.y, f.normal.z,
                f.v0.x, f.v0.y, f.v0.z,
                f.v1.x, f.v1.y, f.v1.z,
                f.v2.x, f.v2.y, f.v2.z,
                0,
            )
        except OverflowError:
            raise ValueError(f"facet {i} has a coordinate beyond 32-bit float range") from None
    return bytes(out)


def emit_stl_ascii(mesh: TriangleMesh, precision: int = 6) -> bytes:
    """Emit ASCII STL using lowercase scientific notation.

    `precision` is the number of digits after the decimal point; 17 is
    enough to round-trip any 64-bit float exactly.  Exponents are emitted
    with the platform-standard 2-digit width.
    """
    _require_finite(mesh)
    if precision < 0:
        raise ValueError("precision must be >= 0")

    def fmt(v: Vec3) -> str:
        return f"{v.x:.{precision}e} {v.y:.{precision}e} {v.z:.{precision}e}"

    parts = ["solid amstpa-lab\n"]
    for f in mesh.facets:
        parts.append(f"facet normal {fmt(f.normal)}\n")
        parts.append("  outer loop\n")
        for v in f.vertices:
            parts.append(f"    vertex {fmt(v)}\n")
        parts.append("  endloop\n")
        parts.append("endfacet\n")
    parts.append("endsolid amstpa-lab\n")
    return "".join(parts).encode("ascii")


def _vertex_key(v: Vec3) -> bytes:
    # exact bit-pattern identity, deliberately stricter than epsilon snapping
    return struct.pack("<3d", v.x, v.y, v.z)


def validate_mesh(mesh: TriangleMesh, area_tol: float = 1e-12) -> MeshReport:
    """Produce a validation report; never raises.

    Degenerate facets have area < area_tol (mm^2).  Manifoldness counts
    undirected edges (on bit-identical vertices) not shared by exactly two
    facets.  Inverted facets have a stored normal opposing the computed
    right-hand-rule normal.
    """
    degenerate: list[int] = []
    inverted: list[int] = []
    edge_count: dict[tuple[bytes, bytes], int] = {}

    xs: list[float] = []
    ys: list[float] = []
    zs: list[float] = []
    for i, f in enumerate(mesh.facets):
        computed = f.computed_normal()
        area = 0.5 * computed.norm()
        if area < area_tol:
            degenerate.append(i)
        if computed.norm() > 0.0 and f.normal.dot(computed) < 0.0:
            inverted.append(i)
        keys = [_vertex_key(v) for v in f.vertices]
        for a, b in ((0, 1), (1, 2), (2, 0)):
            edge = (min(keys[a], keys[b]), max(keys[a], keys[b]))
            edge_count[edge] = edge_count.get(edge, 0) + 1
        for v in f.vertices:
            xs.append(v.x)
            ys.append(v.y)
            zs.append(v.z)

    nonmanifold = sum(1 for c in edge_count.values() if c != 2)
    if xs:
        bbox_min = Vec3(min(xs), min(ys), min(zs))
        bbox_max = Vec3(max(xs), max(ys), max(zs))
    else:
        bbox_min = bbox_max = Vec3(0.0, 0.0, 0.0)
    return MeshReport(
        facet_count=len(mesh.facets),
        degenerate_facets=tuple(degenerate),
        nonmanifold_edges=nonmanifold,
        inverted_normals=tuple(inverted),
        bbox_min=bbox_min,
        bbox_max=bbox_max,
        watertight=(nonmanifold == 0 and len(mesh.facets) > 0),
    )
