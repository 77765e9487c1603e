"""Control-structure modeling and mechanical hazard-candidate enumeration.

A control structure is a set of typed components joined by typed paths.
Hazard candidates are produced by applying a fixed four-phrase guide set to
every component and every path: control paths take the real-time control
set, feedback paths the sensor set, and resource paths (and all components)
the non-real-time set.  Candidates cross-link into a 25-entry mitigation
catalog through a documented rule table.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from enum import Enum


class ModelError(ValueError):
    """Invalid control-structure model file or value."""


class ComponentKind(Enum):
    CONTROLLER = "Controller"
    HUMAN_OPERATOR = "HumanOperator"
    ACTUATOR = "Actuator"
    SENSOR = "Sensor"
    CONTROLLED_PROCESS = "ControlledProcess"
    DISPLAY = "Display"
    CONTROL_INPUT = "ControlInput"
    REPOSITORY = "Repository"
    NETWORK_LINK = "NetworkLink"
    CAD_CAM_STATION = "CadCamStation"
    SLICER_STATION = "SlicerStation"
    PRINTER = "Printer"


class Subsystem(Enum):
    CAD_CAM = "CadCam"
    REPOSITORY = "Repository"
    PRINTING = "Printing"
    CROSS_CUTTING = "CrossCutting"


class PathKind(Enum):
    CONTROL = "Control"
    FEEDBACK = "Feedback"
    RESOURCE = "Resource"


@dataclass(frozen=True)
class Component:
    id: str
    name: str
    kind: ComponentKind
    subsystem: Subsystem


@dataclass(frozen=True)
class Path:
    id: str
    source: str
    target: str
    kind: PathKind
    label: str


@dataclass(frozen=True)
class ControlStructure:
    name: str
    components: tuple[Component, ...] = field(default_factory=tuple)
    paths: tuple[Path, ...] = field(default_factory=tuple)

    def component_by_id(self, cid: str) -> Component:
        for c in self.components:
            if c.id == cid:
                return c
        raise KeyError(cid)

    def path_by_id(self, pid: str) -> Path:
        for p in self.paths:
            if p.id == pid:
                return p
        raise KeyError(pid)


class PhraseSetId(Enum):
    REAL_TIME_CONTROL = "RealTimeControl"
    REAL_TIME_SENSOR = "RealTimeSensor"
    NON_REAL_TIME = "NonRealTime"


PHRASE_SETS: dict[PhraseSetId, tuple[str, str, str, str]] = {
    PhraseSetId.REAL_TIME_CONTROL: (
        "A control action required for safety is not provided or is not followed.",
        "An unsafe control action is provided that leads to a hazard.",
        "A potentially safe control action is provided too late, or out of sequence.",
        "A safe control action is stopped too soon or applied too long.",
    ),
    PhraseSetId.REAL_TIME_SENSOR: (
        "A sensor reading required for safety is not provided or is not followed.",
        "A sensor reading is provided that leads to a hazard.",
        "A sensor reading is provided too late, or out of sequence.",
        "A sensor reading is stopped too soon or applied too long.",
    ),
    PhraseSetId.NON_REAL_TIME: (
        "A resource or action required for correct operation is not provided or is not followed.",
        "An incorrect resource or action is provided that leads to a hazard/risk.",
        "A potentially correct resource or action is provided too late, or out of sequence.",
        "A correct resource or control action is stopped too soon or applied too long.",
    ),
}

PATH_PHRASE_SET: dict[PathKind, PhraseSetId] = {
    PathKind.CONTROL: PhraseSetId.REAL_TIME_CONTROL,
    PathKind.FEEDBACK: PhraseSetId.REAL_TIME_SENSOR,
    PathKind.RESOURCE: PhraseSetId.NON_REAL_TIME,
}


@dataclass(frozen=True)
class CandidateHazard:
    subject_kind: str  # "Component" | "Path"
    subject_id: str
    phrase_set: PhraseSetId
    phrase_index: int  # 1..4
    generated_text: str
    mitigation_ids: tuple[int, ...] = field(default_factory=tuple)


@dataclass(frozen=True)
class Mitigation:
    id: int
    text: str
    executable: bool


@dataclass(frozen=True)
class MitigationCatalog:
    entries: tuple[Mitigation, ...]

    def by_id(self, mid: int) -> Mitigation:
        return self.entries[mid - 1]


MITIGATION_TEXTS: tuple[str, ...] = (
    "Assuring the network protocol used for AM is TCP/IP and not UDP which does not "
    "guarantee error free transmissions. UDP is commonly used for voice over IP and "
    "video transmissions.",
    "Assuring 3D printer buffer size is large enough to hold the entire print image so "
    "that error free receipt of a print image can be assured before printing starts. "
    "Otherwise a part may have to be scrapped before it is completely printed if there "
    "is a transmission error occurring in later transmissions.",
    "Assuring that networks used for AM have a high Quality of Service [delay, delay "
    "variation (jitter), bandwidth, and packet loss parameters]. Dropped packets could "
    "slow the printing process consequently cause the quality degradation of the "
    "printed part.",
    "Assuring that 3D printer software can detect a transmission error from the network "
    "software so it does not attempt to print data that is corrupted.",
    "Assuring application level data has an integrity check (EDC/ECC codes, word count).",
    "Assuring repositories containing design data are encrypted and backed up offsite "
    "automatically on a regular basis.",
    "Assure repositories tightly control access to part files and provide file "
    "configuration management.",
    "Assuring any transmission of design data is encrypted.",
    "Assuring 3D software and supporting software, especially open source software, has "
    "been checked for Trojans, worms, viruses, and other types of malware.",
    "Dedicating enterprise networks used for AM and air-gap them to the internet.",
    "Being cautious about using any commercial 3D printing software that has not had "
    "time to mature with a wide distribution of users over many months. Refrain from "
    "being an early adopter of new software used for production parts. This applies to "
    "updates as well.",
    "Assuring that AM software has been subjected to static code analysis to identify "
    "and remove structural errors that hackers could exploit.",
    "Assuring AM software and supporting libraries have been scanned for known "
    "vulnerabilities.",
    "Assuring AM software has only verified I/O operations that are intentional.",
    "Assuring AM software has been subjected to dynamic code analysis to measure test "
    "coverage and memory management.",
    "Choosing fiber optic physical networks for AM over copper cables or wifi because "
    "of fiber's immunity to EMI/EMC and radio wave interference.",
    "Conducting an end to end (CAD/CAM, Repository, Slicers, 3D printer Software, data "
    "formats) system analysis of AM system components to assure that ranges, "
    "resolutions, accuracies, engineering units, and formatting options are compatible "
    "and adequate.",
    "Assuring adequate training has been conducted for users of the AM system (CAD/CAM, "
    "Repository, 3D Printers and Software)",
    "Assuring software upgrades are evaluated on a test platform before committing to a "
    "production system.",
    "Developing an end to end system test object that can be printed and verified prior "
    "to using the AM system for a production run.",
    "Assuring calibration and mechanical alignment of the 3D printer is conducted on "
    "recommended intervals or more frequently if required.",
    "Keeping audio recording devices, including cell phones, out of the 3D printer "
    "area, some 3D printer mechanical mechanisms generate acoustical noise that is "
    "unique for each printing action and can be reproduced if recorded.",
    "Keeping appropriate fire suppression equipment in close proximity to the printer "
    "area.",
    "Assuring transient suppression and auxiliary or battery power back up exists for "
    "3D printer.",
    "Assuring 3D printer power can be shut off from a master power switch a safe "
    "distance from the printer.",
)

EXECUTABLE_MITIGATIONS = frozenset({1, 2, 3, 4, 5})


def builtin_catalog() -> MitigationCatalog:
    return MitigationCatalog(
        tuple(
            Mitigation(i + 1, text, (i + 1) in EXECUTABLE_MITIGATIONS)
            for i, text in enumerate(MITIGATION_TEXTS)
        )
    )


# ---------------------------------------------------------------------------
# Mitigation rule table.  Keys are (subject class, phrase index); component
# subjects key on their ComponentKind, path subjects on a label/kind class.
# The table is this artifact's construction (documented in the README).
# ---------------------------------------------------------------------------

COMPONENT_MITIGATIONS: dict[ComponentKind, tuple[int, ...]] = {
    ComponentKind.CONTROLLER: (12, 13, 15, 19),
    ComponentKind.HUMAN_OPERATOR: (18,),
    ComponentKind.ACTUATOR: (21,),
    ComponentKind.SENSOR: (17, 21),
    ComponentKind.CONTROLLED_PROCESS: (20, 21),
    ComponentKind.DISPLAY: (18,),
    ComponentKind.CONTROL_INPUT: (18,),
    ComponentKind.REPOSITORY: (6, 7, 8),
    ComponentKind.NETWORK_LINK: (1, 3, 4, 5, 16),
    ComponentKind.CAD_CAM_STATION: (9, 11, 12, 13, 14, 15),
    ComponentKind.SLICER_STATION: (9, 11, 12, 13, 14, 15, 17),
    ComponentKind.PRINTER: (2, 4, 5, 20, 21, 24, 25),
}

_FILE_LABEL_WORDS = ("file", "stl", "gcode", "g-code", "payload", "toolpath", "model", "design", "job")


class PathClass(Enum):
    FILE_FLOW = "file_flow"
    COMMAND_FLOW = "command_flow"
    STATUS_FLOW = "status_flow"
    GENERIC_RESOURCE = "generic_resource"


def classify_path(path: Path) -> PathClass:
    label = path.label.lower()
    if any(word in label for word in _FILE_LABEL_WORDS):
        return PathClass.FILE_FLOW
    if path.kind is PathKind.CONTROL:
        return PathClass.COMMAND_FLOW
    if path.kind is PathKind.FEEDBACK:
        return PathClass.STATUS_FLOW
    return PathClass.GENERIC_RESOURCE


PATH_MITIGATIONS: dict[tuple[PathClass, int], tuple[int, ...]] = {
    # file flows: transit integrity everywhere, plus per-phrase emphases
    (PathClass.FILE_FLOW, 1): (1, 3, 4, 5, 8),
    (PathClass.FILE_FLOW, 2): (1, 4, 5, 8, 9, 17),
    (PathClass.FILE_FLOW, 3): (1, 2, 3, 4, 5, 8),
    (PathClass.FILE_FLOW, 4): (1, 2, 4, 5, 8),
    # operator/command flows: procedure and compatibility concerns
    (PathClass.COMMAND_FLOW, 1): (18,),
    (PathClass.COMMAND_FLOW, 2): (17, 18),
    (PathClass.COMMAND_FLOW, 3): (18,),
    (PathClass.COMMAND_FLOW, 4): (18,),
    # status/feedback flows
    (PathClass.STATUS_FLOW, 1): (18, 20),
    (PathClass.STATUS_FLOW, 2): (18, 20),
    (PathClass.STATUS_FLOW, 3): (18, 20),
    (PathClass.STATUS_FLOW, 4): (18, 20),
    # other resources
    (PathClass.GENERIC_RESOURCE, 1): (17,),
    (PathClass.GENERIC_RESOURCE, 2): (17,),
    (PathClass.GENERIC_RESOURCE, 3): (17,),
    (PathClass.GENERIC_RESOURCE, 4): (17,),
}


# ---------------------------------------------------------------------------
# Model I/O
# ---------------------------------------------------------------------------


def _parse_enum(cls, raw, what: str, where: str):
    try:
        return cls(raw)
    except ValueError:
        valid = ", ".join(sorted(e.value for e in cls))
        raise ModelError(f"{where}: unknown {what} {raw!r} (expected one of: {valid})") from None


def load_model(text: bytes) -> ControlStructure:
    """Load and validate a JSON control-structure model.

    Syntax errors report the JSON line/column; structural errors report the
    offending id and its position in the file.
    """
    try:
        doc = json.loads(text.decode("utf-8"))
    except UnicodeDecodeError as exc:
        raise ModelError(f"model file is not UTF-8: {exc}") from None
    except json.JSONDecodeError as exc:
        raise ModelError(f"model file is not valid JSON: {exc}") from None
    if not isinstance(doc, dict):
        raise ModelError("model file must be a JSON object")
    name = doc.get("name")
    if not isinstance(name, str):
        raise ModelError("model 'name' must be a string")

    components = []
    seen_c: set[str] = set()
    for i, raw in enumerate(doc.get("components", [])):
        where = f"components[{i}]"
        if not isinstance(raw, dict):
            raise ModelError(f"{where}: must be an object")
        cid = raw.get("id")
        if not isinstance(cid, str) or not cid:
            raise ModelError(f"{where}: component id must be a non-empty string")
        if cid in seen_c:
            raise ModelError(f"{where}: duplicate component id {cid!r}")
        seen_c.add(cid)
        cname = raw.get("name")
        if not isinstance(cname, str):
            raise ModelError(f"{where} (id={cid!r}): 'name' must be a string")
        kind = _parse_enum(ComponentKind, raw.get("kind"), "component kind", f"{where} (id={cid!r})")
        subsystem = _parse_enum(Subsystem, raw.get("subsystem"), "subsystem", f"{where} (id={cid!r})")
        components.append(Component(cid, cname, kind, subsystem))

    paths = []
    seen_p: set[str] = set()
    for i, raw in enumerate(doc.get("paths", [])):
        where = f"paths[{i}]"
        if not isinstance(raw, dict):
            raise ModelError(f"{where}: must be an object")
        pid = raw.get("id")
        if not isinstance(pid, str) or not pid:
            raise ModelError(f"{where}: path id must be a non-empty string")
        if pid in seen_p:
            raise ModelError(f"{where}: duplicate path id {pid!r}")
        seen_p.add(pid)
        kind = _parse_enum(PathKind, raw.get("kind"), "path kind", f"{where} (id={pid!r})")
        label = raw.get("label")
        if not isinstance(label, str):
            raise ModelError(f"{where} (id={pid!r}): 'label' must be a string")
        source, target = raw.get("source"), raw.get("target")
        for endpoint, role in ((source, "source"), (target, "target")):
            if not isinstance(endpoint, str) or endpoint not in seen_c:
                raise ModelError(
                    f"{where} (id={pid!r}): {role} {endpoint!r} does not name a component"
                )
        if source == target:
            raise ModelError(f"{where} (id={pid!r}): self-loop paths are not allowed")
        paths.append(Path(pid, source, target, kind, label))

    return ControlStructure(name, tuple(components), tuple(paths))


def emit_model(cs: ControlStructure) -> bytes:
    doc = {
        "name": cs.name,
        "components": [
            {"id": c.id, "name": c.name, "kind": c.kind.value, "subsystem": c.subsystem.value}
            for c in cs.components
        ],
        "paths": [
            {"id": p.id, "source": p.source, "target": p.target,
             "kind": p.kind.value, "label": p.label}
            for p in cs.paths
        ],
    }
    return (json.dumps(doc, indent=2) + "\n").encode("utf-8")


def builtin_am_reference_model() -> ControlStructure:
    """The shipped AM toolchain model: CAD/CAM, repository, and printing
    subsystems joined by file, command, and feedback flows."""
    c = Component
    p = Path
    return ControlStructure(
        name="am-toolchain-reference",
        components=(
            c("operator", "Operator", ComponentKind.HUMAN_OPERATOR, Subsystem.CROSS_CUTTING),
            c("console", "Operator console", ComponentKind.CONTROL_INPUT, Subsystem.CROSS_CUTTING),
            c("status_display", "Status display", ComponentKind.DISPLAY, Subsystem.CROSS_CUTTING),
            c("cad_station", "CAD/CAM workstation", ComponentKind.CAD_CAM_STATION, Subsystem.CAD_CAM),
            c("slicer_station", "Slicer workstation", ComponentKind.SLICER_STATION, Subsystem.CAD_CAM),
            c("design_repo", "Design repository", ComponentKind.REPOSITORY, Subsystem.REPOSITORY),
            c("upload_link", "CAD-to-repository network link", ComponentKind.NETWORK_LINK,
              Subsystem.CROSS_CUTTING),
            c("print_link", "Repository-to-printer network link", ComponentKind.NETWORK_LINK,
              Subsystem.PRINTING),
            c("printer", "3D printer", ComponentKind.PRINTER, Subsystem.PRINTING),
        ),
        paths=(
            p("op_console", "operator", "console", PathKind.CONTROL, "operator commands"),
            p("console_cad", "console", "cad_station", PathKind.CONTROL, "design and job commands"),
            p("cad_slicer", "cad_station", "slicer_station", PathKind.RESOURCE, "STL model file"),
            p("slicer_upload", "slicer_station", "upload_link", PathKind.RESOURCE,
              "sliced toolpath file"),
            p("upload_repo", "upload_link", "design_repo", PathKind.RESOURCE, "stored job file"),
            p("repo_printlink", "design_repo", "print_link", PathKind.RESOURCE,
              "released job file"),
            p("printlink_printer", "print_link", "printer", PathKind.RESOURCE,
              "job payload packets"),
            p("console_printer", "console", "printer", PathKind.CONTROL,
              "print start and stop commands"),
            p("printer_display", "printer", "status_display", PathKind.FEEDBACK,
              "printer status and sensor readings"),
            p("repo_display", "design_repo", "status_display", PathKind.FEEDBACK,
              "repository audit events"),
            p("display_operator", "status_display", "operator", PathKind.FEEDBACK,
              "job progress display"),
        ),
    )


# ---------------------------------------------------------------------------
# Enumeration
# ---------------------------------------------------------------------------


def enumerate_candidates(cs: ControlStructure) -> list[CandidateHazard]:
    """Apply the guide phrases to every component, then every path.

    Yields exactly 4 * (len(components) + len(paths)) candidates, in
    declaration order with phrase_index ascending within each subject.
    """
    out: list[CandidateHazard] = []
    for comp in cs.components:
        phrases = PHRASE_SETS[PhraseSetId.NON_REAL_TIME]
        for idx, phrase in enumerate(phrases, start=1):
            out.append(
                CandidateHazard(
                    subject_kind="Component",
                    subject_id=comp.id,
                    phrase_set=PhraseSetId.NON_REAL_TIME,
                    phrase_index=idx,
                    generated_text=f"Component '{comp.name}' [{comp.kind.value}]: {phrase}",
                )
            )
    for path in cs.paths:
        set_id = PATH_PHRASE_SET[path.kind]
        phrases = PHRASE_SETS[set_id]
        src = cs.component_by_id(path.source)
        dst = cs.component_by_id(path.target)
        for idx, phrase in enumerate(phrases, start=1):
            out.append(
                CandidateHazard(
                    subject_kind="Path",
                    subject_id=path.id,
                    phrase_set=set_id,
                    phrase_index=idx,
                    generated_text=(
                        f"Path '{path.label}' ({src.name} -> {dst.name}): {phrase}"
                    ),
                )
            )
    return out


def attach_mitigations(
    hazards: list[CandidateHazard],
    catalog: MitigationCatalog,
    cs: ControlStructure,
) -> list[CandidateHazard]:
    """Fill mitigation_ids from the rule table; unmatched subjects get ()."""
    if len(catalog.entries) != 25:
        raise ValueError("catalog must have exactly 25 entries")
    out = []
    for hz in hazards:
        ids: tuple[int, ...] = ()
        if hz.subject_kind == "Component":
            try:
                comp = cs.component_by_id(hz.subject_id)
            except KeyError:
                comp = None
            if comp is not None:
                ids = COMPONENT_MITIGATIONS.get(comp.kind, ())
        else:
            try:
                path = cs.path_by_id(hz.subject_id)
            except KeyError:
                path = None
            if path is not None:
                ids = PATH_MITIGATIONS.get((classify_path(path), hz.phrase_index), ())
        out.append(replace(hz, mitigation_ids=tuple(sorted(ids))))
    return out


def candidates_to_dict(cs: ControlStructure, hazards: list[CandidateHazard]) -> dict:
    return {
        "model": cs.name,
        "component_count": len(cs.components),
        "path_count": len(cs.paths),
        "candidate_count": len(hazards),
        "candidates": [
            {
                "subject_kind": hz.subject_kind,
                "subject_id": hz.subject_id,
                "phrase_set": hz.phrase_set.value,
                "phrase_index": hz.phrase_index,
                "text": hz.generated_text,
                "mitigation_ids": list(hz.mitigation_ids),
            }
            for hz in hazards
        ],
    }


def candidates_to_text(cs: ControlStructure, hazards: list[CandidateHazard]) -> str:
    lines = [
        f"Hazard candidates for model '{cs.name}' "
        f"({len(cs.components)} components, {len(cs.paths)} paths)",
        "",
    ]
    for i, hz in enumerate(hazards, start=1):
        mit = ",".join(str(m) for m in hz.mitigation_ids) or "-"
        lines.append(
            f"{i:4d}. [{hz.phrase_set.value}#{hz.phrase_index}] {hz.generated_text} "
            f"(mitigations: {mit})"
        )
    lines.append("")
    lines.append(f"total: {len(hazards)} candidates")
    return "\n".join(lines) + "\n"
