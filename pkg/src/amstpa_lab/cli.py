"""Command-line interface.

Subcommands: stpa, stl, slice, gcode, simulate, campaign, report.
Exit codes: 0 success, 1 validation findings, 2 usage or parse errors.
Output paths accept "-" for standard output; files are written only after
the full output is rendered, so failures leave no partial files.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys

from . import shapes
from .faultlab import (
    CampaignResult,
    FaultSpec,
    FaultStage,
    FaultKind,
    MitigationEvidence,
    PipelineConfig,
    bit_flip_specs,
    run_campaign,
    run_demo_campaign,
)
from .gcode import (
    GCodeError,
    ToolpathParams,
    emit_text,
    path_length,
    plan_toolpath,
)
from .integrity import wrap
from .mesh_io import StlError, parse_stl, validate_mesh
from .netsim import ChannelParams, TransferMode
from .printer_sim import (
    JobStatus,
    PrinterConfig,
    PrintPolicy,
    PrinterTechnology,
    geometry_diff,
    outcome_to_dict,
    run_job,
    trace_to_dict,
)
from .report import build_report, render_json, render_markdown
from .slicer import SliceParams, layers_from_dict, layers_to_dict, slice_mesh
from .stpa_core import (
    ModelError,
    attach_mitigations,
    builtin_am_reference_model,
    builtin_catalog,
    candidates_to_dict,
    candidates_to_text,
    enumerate_candidates,
    load_model,
)

log = logging.getLogger(__name__)

BUILTIN_MESHES = {
    "cube": lambda: shapes.box(),
    "tetrahedron": shapes.corner_tetrahedron,
    "octahedron": shapes.octahedron,
}


class CliError(Exception):
    """Usage-level failure; maps to exit code 2."""


def _read_file(path: str) -> bytes:
    try:
        with open(path, "rb") as fh:
            return fh.read()
    except OSError as exc:
        raise CliError(f"cannot read {path}: {exc}") from None


def _write_output(path: str, data: str | bytes) -> None:
    if isinstance(data, str):
        data = data.encode("utf-8")
    if path == "-":
        out = sys.stdout
        if hasattr(out, "buffer"):
            out.buffer.write(data)
            out.flush()
        else:  # redirected stdout (tests) may be text-only
            out.write(data.decode("utf-8"))
        return
    try:
        with open(path, "wb") as fh:
            fh.write(data)
    except OSError as exc:
        raise CliError(f"cannot write {path}: {exc}") from None


def _dump_json(doc: dict) -> str:
    return json.dumps(doc, indent=2) + "\n"


def _load_mesh_file(path: str):
    data = _read_file(path)
    try:
        return parse_stl(data)
    except StlError as exc:
        raise CliError(f"{path}: {exc}") from None


def _parse_channel(spec: str) -> ChannelParams:
    keys = {
        "loss": "loss_prob",
        "latency": "latency_ms",
        "jitter": "jitter_ms",
        "bw": "bandwidth_bytes_per_s",
        "seed": "seed",
    }
    kwargs: dict = {}
    if spec:
        for item in spec.split(","):
            if "=" not in item:
                raise CliError(f"channel parameter {item!r} is not key=value")
            key, _, raw = item.partition("=")
            key = key.strip()
            if key not in keys:
                raise CliError(f"unknown channel parameter {key!r} (use {'/'.join(keys)})")
            field = keys[key]
            kwargs[field] = int(raw) if field == "seed" else float(raw)
    try:
        return ChannelParams(**kwargs)
    except ValueError as exc:
        raise CliError(f"bad channel parameters: {exc}") from None


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------


def _cmd_stpa(args) -> int:
    if args.builtin_am:
        cs = builtin_am_reference_model()
    elif args.model:
        try:
            cs = load_model(_read_file(args.model))
        except ModelError as exc:
            print(f"error: {exc}", file=sys.stderr)
            return 2
    else:
        raise CliError("stpa needs --model FILE or --builtin-am")
    hazards = attach_mitigations(enumerate_candidates(cs), builtin_catalog(), cs)
    fmt = args.format or ("txt" if args.out.endswith(".txt") else "json")
    if fmt == "txt":
        _write_output(args.out, candidates_to_text(cs, hazards))
    else:
        _write_output(args.out, _dump_json(candidates_to_dict(cs, hazards)))
    return 0


def _cmd_stl(args) -> int:
    data = _read_file(args.file)
    try:
        mesh = parse_stl(data)
    except StlError as exc:
        print(f"error: {args.file}: {exc}", file=sys.stderr)
        return 2
    report = validate_mesh(mesh, area_tol=args.area_tol)
    doc = {
        "file": args.file,
        "encoding": mesh.source_encoding.value,
        "facet_count": report.facet_count,
        "degenerate_facets": list(report.degenerate_facets),
        "nonmanifold_edges": report.nonmanifold_edges,
        "inverted_normals": list(report.inverted_normals),
        "bbox_min": [report.bbox_min.x, report.bbox_min.y, report.bbox_min.z],
        "bbox_max": [report.bbox_max.x, report.bbox_max.y, report.bbox_max.z],
        "watertight": report.watertight,
    }
    _write_output(args.out, _dump_json(doc))
    return 0 if report.is_clean() else 1


def _cmd_slice(args) -> int:
    mesh = _load_mesh_file(args.file)
    try:
        params = SliceParams(layer_height=args.layer_height, snap_eps=args.snap_eps)
    except ValueError as exc:
        raise CliError(str(exc)) from None
    layers = slice_mesh(mesh, params)
    _write_output(args.out, _dump_json(layers_to_dict(layers, args.layer_height)))
    return 0


def _toolpath_params(args) -> ToolpathParams:
    try:
        return ToolpathParams(
            feed_rate=args.feed_rate,
            travel_rate=args.travel_rate,
            extrusion_per_mm=args.extrusion_per_mm,
        )
    except ValueError as exc:
        raise CliError(str(exc)) from None


def _cmd_gcode(args) -> int:
    if args.action != "plan":
        raise CliError(f"unknown gcode action {args.action!r} (expected 'plan')")
    try:
        doc = json.loads(_read_file(args.layers).decode("utf-8"))
        layers = layers_from_dict(doc)
    except (ValueError, KeyError, TypeError) as exc:
        print(f"error: {args.layers}: not a layers file: {exc}", file=sys.stderr)
        return 2
    prog = plan_toolpath(layers, _toolpath_params(args))
    _write_output(args.out, emit_text(prog))
    return 0


def _cmd_simulate(args) -> int:
    mesh = _load_mesh_file(args.mesh)
    try:
        params = SliceParams(layer_height=args.layer_height)
    except ValueError as exc:
        raise CliError(str(exc)) from None
    layers = slice_mesh(mesh, params)
    prog = plan_toolpath(layers, _toolpath_params(args))
    text = emit_text(prog)
    enveloped = not args.no_envelope
    payload = wrap(text, len(prog.commands), with_ecc=args.ecc) if enveloped else text

    channel = _parse_channel(args.channel)
    mode = TransferMode.RELIABLE_ORDERED if args.mode == "reliable" else TransferMode.BEST_EFFORT
    policy = PrintPolicy.FULL_IMAGE if args.policy == "fullimage" else PrintPolicy.STREAMING
    try:
        cfg = PrinterConfig(
            buffer_capacity=args.buffer,
            policy=policy,
            technology=PrinterTechnology(args.technology),
            nominal_layer_time_ms=args.layer_time_ms,
        )
    except ValueError as exc:
        raise CliError(str(exc)) from None

    outcome, trace = run_job(
        payload, cfg, channel, mode, packet_size=args.packet_size, enveloped=enveloped
    )
    lengths = path_length(prog)
    gd = geometry_diff(layers, trace)
    doc = {
        "mesh": args.mesh,
        "layers": len(layers),
        "program_commands": len(prog.commands),
        "planned_extrusion_mm": lengths.extruded_mm,
        "payload_bytes": len(payload),
        "mode": mode.value,
        "policy": policy.value,
        "outcome": outcome_to_dict(outcome),
        "trace": trace_to_dict(trace),
        "geometry_diff": {
            "max_extrusion_error_mm": gd.max_extrusion_error_mm,
            "layers_missing": gd.layers_missing,
        },
    }
    _write_output(args.out, _dump_json(doc))
    return 0 if outcome.status is JobStatus.COMPLETED else 1


def _campaign_config(doc: dict) -> tuple[PipelineConfig, list[FaultSpec] | None, bool, object]:
    mesh_spec = doc.get("mesh", {"builtin": "cube"})
    if "builtin" in mesh_spec:
        name = mesh_spec["builtin"]
        if name not in BUILTIN_MESHES:
            raise CliError(f"unknown builtin mesh {name!r} (use {'/'.join(BUILTIN_MESHES)})")
        base_mesh = BUILTIN_MESHES[name]()
    elif "path" in mesh_spec:
        base_mesh = _load_mesh_file(mesh_spec["path"])
    else:
        raise CliError("campaign config 'mesh' needs 'builtin' or 'path'")

    try:
        slice_doc = doc.get("slice", {})
        slice_params = SliceParams(
            layer_height=float(slice_doc.get("layer_height", 0.25)),
            snap_eps=float(slice_doc.get("snap_eps", 1e-7)),
        )
        tp_doc = doc.get("toolpath", {})
        toolpath = ToolpathParams(
            feed_rate=float(tp_doc.get("feed_rate", 1800.0)),
            travel_rate=float(tp_doc.get("travel_rate", 3000.0)),
            extrusion_per_mm=float(tp_doc.get("extrusion_per_mm", 0.05)),
        )
        ch_doc = doc.get("channel", {})
        channel = ChannelParams(
            latency_ms=float(ch_doc.get("latency_ms", 1.0)),
            jitter_ms=float(ch_doc.get("jitter_ms", 0.0)),
            bandwidth_bytes_per_s=float(ch_doc.get("bandwidth_bytes_per_s", 125000.0)),
            loss_prob=float(ch_doc.get("loss_prob", 0.0)),
            seed=int(ch_doc.get("seed", 1)),
        )
        pr_doc = doc.get("printer", {})
        printer = PrinterConfig(
            buffer_capacity=int(pr_doc.get("buffer_capacity", 1 << 20)),
            policy=PrintPolicy(pr_doc.get("policy", "fullimage")),
            technology=PrinterTechnology(pr_doc.get("technology", "material_extrusion")),
            nominal_layer_time_ms=pr_doc.get("nominal_layer_time_ms"),
        )
        cfg = PipelineConfig(
            slice_params=slice_params,
            toolpath=toolpath,
            channel=channel,
            printer=printer,
            mode=TransferMode(doc.get("mode", "reliable")),
            packet_size=int(doc.get("packet_size", 256)),
            enveloped=bool(doc.get("envelope", True)),
            ecc=bool(doc.get("ecc", False)),
            geometry_tol_mm=float(doc.get("geometry_tol_mm", 1e-6)),
            campaign_seed=int(doc.get("seed", 0)),
        )
    except ValueError as exc:
        raise CliError(f"bad campaign config: {exc}") from None

    specs: list[FaultSpec] | None = None
    if "faults" in doc:
        try:
            specs = [FaultSpec.from_dict(d) for d in doc["faults"]]
        except (KeyError, ValueError) as exc:
            raise CliError(f"bad fault spec: {exc}") from None
    elif "generate" in doc:
        gen = doc["generate"]
        try:
            kind = FaultKind(gen.get("kind", "bit_flip"))
            stage = FaultStage(gen.get("stage", "in_transit"))
            count = int(gen.get("count", 100))
        except ValueError as exc:
            raise CliError(f"bad generate block: {exc}") from None
        if kind is not FaultKind.BIT_FLIP:
            raise CliError("generate currently supports kind 'bit_flip' only")
        specs = bit_flip_specs(count, stage, cfg.campaign_seed)
    return cfg, specs, bool(doc.get("demo", False)), base_mesh


def _cmd_campaign(args) -> int:
    try:
        doc = json.loads(_read_file(args.config).decode("utf-8"))
    except ValueError as exc:
        print(f"error: {args.config}: not valid JSON: {exc}", file=sys.stderr)
        return 2
    cfg, specs, demo, base_mesh = _campaign_config(doc)
    if demo:
        result = run_demo_campaign(
            cfg,
            base_mesh,
            corruption_count=int(doc.get("generate", {}).get("count", 200)),
        )
        _write_output(args.out, _dump_json(result.to_dict()))
        return 0
    if specs is None:
        raise CliError("campaign config needs 'faults', 'generate', or 'demo': true")
    result = run_campaign(cfg, specs, base_mesh)
    _write_output(args.out, _dump_json(result.to_dict()))
    return 0


def _cmd_report(args) -> int:
    hazards = None
    campaign = None
    evidence = None
    for path in args.inputs or []:
        try:
            doc = json.loads(_read_file(path).decode("utf-8"))
        except ValueError as exc:
            print(f"error: {path}: not valid JSON: {exc}", file=sys.stderr)
            return 2
        if not isinstance(doc, dict):
            print(f"error: {path}: not a known artifact", file=sys.stderr)
            return 2
        if "candidates" in doc:
            hazards = doc
        elif "campaign" in doc and "evidence" in doc:
            campaign = CampaignResult.from_dict(doc["campaign"])
            evidence = MitigationEvidence.from_dict(doc["evidence"])
        elif "histogram" in doc:
            campaign = CampaignResult.from_dict(doc)
        else:
            print(f"error: {path}: not a known artifact", file=sys.stderr)
            return 2
    doc = build_report(hazards=hazards, campaign=campaign, evidence=evidence)
    fmt = args.format or ("md" if args.out.endswith(".md") else "json")
    _write_output(args.out, render_markdown(doc) if fmt == "md" else render_json(doc))
    return 0


# ---------------------------------------------------------------------------
# parser
# ---------------------------------------------------------------------------


def _add_toolpath_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--feed-rate", type=float, default=1800.0, help="extrusion feed, mm/min")
    p.add_argument("--travel-rate", type=float, default=3000.0, help="travel feed, mm/min")
    p.add_argument("--extrusion-per-mm", type=float, default=0.05,
                   help="filament mm per toolpath mm")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="amstpa",
        description="Deterministic AM toolchain lab: STPA hazard enumeration, "
        "STL/slice/G-code pipeline, integrity envelopes, channel and printer "
        "simulation, and fault-injection campaigns.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("stpa", help="enumerate hazard candidates for a control structure")
    p.add_argument("--model", help="control-structure model JSON")
    p.add_argument("--builtin-am", action="store_true", help="use the bundled AM model")
    p.add_argument("--out", default="-", help="output path (.json or .txt), - for stdout")
    p.add_argument("--format", choices=["json", "txt"], help="override format sniffing")
    p.set_defaults(func=_cmd_stpa)

    p = sub.add_parser("stl", help="STL utilities")
    p.add_argument("action", choices=["validate"], help="what to do")
    p.add_argument("file", help="STL file (ASCII or binary)")
    p.add_argument("--area-tol", type=float, default=1e-12, help="degenerate-facet area, mm^2")
    p.add_argument("--out", default="-", help="report output path, - for stdout")
    p.set_defaults(func=_cmd_stl)

    p = sub.add_parser("slice", help="slice a mesh into layer contours")
    p.add_argument("file", help="STL file")
    p.add_argument("--layer-height", type=float, required=True, help="layer height, mm")
    p.add_argument("--snap-eps", type=float, default=1e-7, help="contour chaining tolerance, mm")
    p.add_argument("--out", default="-", help="layers JSON output, - for stdout")
    p.set_defaults(func=_cmd_slice)

    p = sub.add_parser("gcode", help="toolpath planning")
    p.add_argument("action", choices=["plan"], help="what to do")
    p.add_argument("layers", help="layers JSON from the slice command")
    _add_toolpath_flags(p)
    p.add_argument("--out", default="-", help="G-code output path, - for stdout")
    p.set_defaults(func=_cmd_gcode)

    p = sub.add_parser("simulate", help="end-to-end transfer and print simulation")
    p.add_argument("--mesh", required=True, help="STL file")
    p.add_argument("--layer-height", type=float, default=0.25)
    _add_toolpath_flags(p)
    p.add_argument("--channel", default="",
                   help="loss=P,latency=L,jitter=J,bw=B,seed=S (defaults: lossless)")
    p.add_argument("--mode", choices=["reliable", "besteffort"], default="reliable")
    p.add_argument("--policy", choices=["fullimage", "streaming"], default="fullimage")
    p.add_argument("--buffer", type=int, default=1 << 20, help="printer buffer, bytes")
    p.add_argument("--packet-size", type=int, default=256)
    p.add_argument("--technology", default="material_extrusion",
                   choices=[t.value for t in PrinterTechnology])
    p.add_argument("--layer-time-ms", type=float, default=None)
    p.add_argument("--no-envelope", action="store_true", help="send raw G-code text")
    p.add_argument("--ecc", action="store_true", help="add SECDED check bytes")
    p.add_argument("--out", default="-", help="result JSON, - for stdout")
    p.set_defaults(func=_cmd_simulate)

    p = sub.add_parser("campaign", help="run a fault-injection campaign")
    p.add_argument("--config", required=True, help="campaign config JSON")
    p.add_argument("--out", default="-", help="result JSON, - for stdout")
    p.set_defaults(func=_cmd_campaign)

    p = sub.add_parser("report", help="render the assurance report")
    p.add_argument("--inputs", nargs="*", default=[],
                   help="prior artifacts: hazards JSON and/or campaign JSON")
    p.add_argument("--out", default="-", help="output path (.json or .md), - for stdout")
    p.add_argument("--format", choices=["json", "md"], help="override format sniffing")
    p.set_defaults(func=_cmd_report)

    return parser


def main(argv: list[str] | None = None) -> int:
    logging.basicConfig(stream=sys.stderr, level=logging.WARNING, format="%(message)s")
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 2 if exc.code not in (0, None) else int(exc.code or 0)
    try:
        return args.func(args)
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (StlError, GCodeError, ModelError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
