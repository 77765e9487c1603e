"""Printer firmware state machine: receive, verify, and print toolpaths.

Two buffering policies contrast the receive-then-print discipline:

* FULL_IMAGE: the whole job is received and its envelope verified before
  any layer is printed, so corrupt jobs are rejected with nothing wasted.
* STREAMING: commands are consumed as packets arrive and the envelope can
  only be checked at end-of-stream, so damage discovered late scraps a
  partially printed part.

Streaming damage is attributed to the layer containing the first corrupted
byte (prologue bytes count toward the first layer, trailer bytes toward the
last); this deliberately simple model makes the reject-early vs scrap-late
contrast measurable.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum

from . import integrity
from .gcode import (
    GCodeError,
    GCodeProgram,
    ScannedLayer,
    check_program,
    intended_perimeters,
    parse_text,
    program_layers,
    scan_text_layers,
)
from .netsim import ChannelDownError, ChannelParams, TransferMode, transfer
from .slicer import LayerPlan


class PrinterTechnology(Enum):
    BINDER_JETTING = "binder_jetting"
    DIRECTED_ENERGY_DEPOSITION = "directed_energy_deposition"
    MATERIAL_EXTRUSION = "material_extrusion"
    MATERIAL_JETTING = "material_jetting"
    POWDER_BED_FUSION = "powder_bed_fusion"
    SHEET_LAMINATION = "sheet_lamination"
    VAT_PHOTOPOLYMERIZATION = "vat_photopolymerization"


# metadata-grade defaults; technology carries no algorithmic meaning
DEFAULT_LAYER_TIME_MS: dict[PrinterTechnology, float] = {
    PrinterTechnology.BINDER_JETTING: 9_000.0,
    PrinterTechnology.DIRECTED_ENERGY_DEPOSITION: 15_000.0,
    PrinterTechnology.MATERIAL_EXTRUSION: 12_000.0,
    PrinterTechnology.MATERIAL_JETTING: 10_000.0,
    PrinterTechnology.POWDER_BED_FUSION: 20_000.0,
    PrinterTechnology.SHEET_LAMINATION: 7_000.0,
    PrinterTechnology.VAT_PHOTOPOLYMERIZATION: 8_000.0,
}


class PrintPolicy(Enum):
    FULL_IMAGE = "fullimage"
    STREAMING = "streaming"


@dataclass(frozen=True)
class PrinterConfig:
    buffer_capacity: int
    policy: PrintPolicy
    technology: PrinterTechnology = PrinterTechnology.MATERIAL_EXTRUSION
    nominal_layer_time_ms: float | None = None

    def __post_init__(self) -> None:
        if not (self.buffer_capacity > 0):
            raise ValueError("buffer_capacity must be > 0")
        if self.nominal_layer_time_ms is None:
            object.__setattr__(
                self, "nominal_layer_time_ms", DEFAULT_LAYER_TIME_MS[self.technology]
            )


class JobStatus(Enum):
    COMPLETED = "completed"
    REJECTED_BEFORE_PRINT = "rejected_before_print"
    SCRAPPED_MID_PRINT = "scrapped_mid_print"


class FailReason(Enum):
    BUFFER_TOO_SMALL = "buffer_too_small"
    INTEGRITY_FAILURE = "integrity_failure"
    PARSE_FAILURE = "parse_failure"
    CHANNEL_DOWN = "channel_down"


@dataclass(frozen=True)
class JobOutcome:
    status: JobStatus
    layers_printed: int = 0
    reason: FailReason | None = None


@dataclass(frozen=True)
class LayerRecord:
    index: int
    z: float
    extruded_mm: float


@dataclass(frozen=True)
class PrintTrace:
    layers: tuple[LayerRecord, ...] = field(default_factory=tuple)
    time_ms: float = 0.0
    integrity_corrected_bits: int = 0


def _first_diff(a: bytes, b: bytes) -> int | None:
    n = min(len(a), len(b))
    for i in range(n):
        if a[i] != b[i]:
            return i
    if len(a) != len(b):
        return n
    return None


def _layer_starts(scanned: list[ScannedLayer], total_len: int) -> list[tuple[int, int]]:
    """Inclusive byte ranges per layer; prologue/trailer attach to first/last."""
    ranges = []
    for i, lay in enumerate(scanned):
        start = 0 if i == 0 else lay.start_offset
        end = scanned[i + 1].start_offset if i + 1 < len(scanned) else total_len
        ranges.append((start, end))
    return ranges


def _layer_containing(scanned: list[ScannedLayer], total_len: int, offset: int) -> int:
    for i, (start, end) in enumerate(_layer_starts(scanned, total_len)):
        if start <= offset < end:
            return i
    return max(0, len(scanned) - 1)


def _layers_completed(scanned: list[ScannedLayer], prefix_len: int) -> int:
    # a layer counts as printed once its last move line has fully arrived
    return sum(1 for lay in scanned if lay.end_offset <= prefix_len)


def _trace_layers(scanned: list[ScannedLayer], count: int) -> tuple[LayerRecord, ...]:
    return tuple(LayerRecord(s.index, s.z, s.extruded_mm) for s in scanned[:count])


def _streaming_parse(payload: bytes) -> tuple[GCodeProgram | None, GCodeError | None]:
    """Parse as a stream would: report the first offending line, if any."""
    try:
        prog = parse_text(payload)
        check_program(prog)
        return prog, None
    except GCodeError as err:
        return None, err


def _line_start_offset(payload: bytes, line_no: int | None) -> int:
    if line_no is None or line_no <= 1:
        return 0
    offset = 0
    for i, raw in enumerate(payload.splitlines(keepends=True), start=1):
        if i == line_no:
            return offset
        offset += len(raw)
    return len(payload)


def _completed_trace(
    prog: GCodeProgram, elapsed_ms: float, layer_time: float, corrected: int
) -> tuple[JobOutcome, PrintTrace]:
    layers = program_layers(prog)
    records = tuple(LayerRecord(pl.index, pl.z, pl.extruded_mm) for pl in layers)
    trace = PrintTrace(
        layers=records,
        time_ms=elapsed_ms + len(records) * layer_time,
        integrity_corrected_bits=corrected,
    )
    return JobOutcome(JobStatus.COMPLETED, layers_printed=len(records)), trace


def run_job(
    wrapped_toolpath: bytes,
    cfg: PrinterConfig,
    ch: ChannelParams,
    mode: TransferMode,
    packet_size: int = 256,
    enveloped: bool = True,
    reference: bytes | None = None,
) -> tuple[JobOutcome, PrintTrace]:
    """Send a job over the channel and simulate the printer's handling.

    `wrapped_toolpath` is what the sender transmits (an AMI1 envelope over
    G-code text unless enveloped=False, in which case raw G-code text).
    `reference` is the pristine copy used to attribute stream damage to a
    layer; it defaults to the transmitted bytes themselves.
    """
    layer_time = float(cfg.nominal_layer_time_ms or 0.0)
    if cfg.policy is PrintPolicy.FULL_IMAGE:
        return _run_full_image(wrapped_toolpath, cfg, ch, mode, packet_size, enveloped, layer_time)

    if reference is None:
        reference = wrapped_toolpath
    header_size = integrity.HEADER_SIZE if enveloped else 0
    if enveloped:
        try:
            ref_env = integrity.read_header(reference)
            ref_payload = reference[header_size : header_size + ref_env.payload_len]
        except ValueError:
            ref_payload = reference[header_size:]
    else:
        ref_payload = reference
    return _run_streaming(
        wrapped_toolpath, cfg, ch, mode, packet_size, enveloped, layer_time,
        reference, ref_payload, scan_text_layers(ref_payload), header_size,
    )


def _run_full_image(
    wrapped: bytes,
    cfg: PrinterConfig,
    ch: ChannelParams,
    mode: TransferMode,
    packet_size: int,
    enveloped: bool,
    layer_time: float,
) -> tuple[JobOutcome, PrintTrace]:
    try:
        tr = transfer(wrapped, ch, mode, packet_size)
    except ChannelDownError as err:
        return (
            JobOutcome(JobStatus.REJECTED_BEFORE_PRINT, reason=FailReason.CHANNEL_DOWN),
            PrintTrace(time_ms=err.result.elapsed_ms),
        )
    if len(tr.delivered) > cfg.buffer_capacity:
        return (
            JobOutcome(JobStatus.REJECTED_BEFORE_PRINT, reason=FailReason.BUFFER_TOO_SMALL),
            PrintTrace(time_ms=tr.elapsed_ms),
        )
    corrected = 0
    declared_records: int | None = None
    if enveloped:
        vr = integrity.verify(tr.delivered)
        if not vr.ok:
            return (
                JobOutcome(JobStatus.REJECTED_BEFORE_PRINT, reason=FailReason.INTEGRITY_FAILURE),
                PrintTrace(time_ms=tr.elapsed_ms),
            )
        payload = vr.payload or b""
        corrected = vr.corrected_bits
        declared_records = vr.record_count
    else:
        payload = tr.delivered
    prog, err = _streaming_parse(payload)
    if err is not None:
        return (
            JobOutcome(JobStatus.REJECTED_BEFORE_PRINT, reason=FailReason.PARSE_FAILURE),
            PrintTrace(time_ms=tr.elapsed_ms, integrity_corrected_bits=corrected),
        )
    assert prog is not None
    if declared_records is not None and declared_records != len(prog.commands):
        # the word-count leg of the integrity check
        return (
            JobOutcome(JobStatus.REJECTED_BEFORE_PRINT, reason=FailReason.INTEGRITY_FAILURE),
            PrintTrace(time_ms=tr.elapsed_ms, integrity_corrected_bits=corrected),
        )
    return _completed_trace(prog, tr.elapsed_ms, layer_time, corrected)


def _run_streaming(
    wrapped: bytes,
    cfg: PrinterConfig,
    ch: ChannelParams,
    mode: TransferMode,
    packet_size: int,
    enveloped: bool,
    layer_time: float,
    reference: bytes,
    ref_payload: bytes,
    scanned_ref: list[ScannedLayer],
    header_size: int,
) -> tuple[JobOutcome, PrintTrace]:
    ref_len = len(ref_payload)

    try:
        tr = transfer(wrapped, ch, mode, packet_size)
    except ChannelDownError as err:
        prefix_payload = max(0, len(err.result.delivered) - header_size)
        k = _layers_completed(scanned_ref, prefix_payload)
        if k == 0:
            return (
                JobOutcome(JobStatus.REJECTED_BEFORE_PRINT, reason=FailReason.CHANNEL_DOWN),
                PrintTrace(time_ms=err.result.elapsed_ms),
            )
        return (
            JobOutcome(JobStatus.SCRAPPED_MID_PRINT, layers_printed=k,
                       reason=FailReason.CHANNEL_DOWN),
            PrintTrace(
                layers=_trace_layers(scanned_ref, k),
                time_ms=err.result.elapsed_ms + k * layer_time,
            ),
        )

    delivered = tr.delivered
    corrected = 0
    if enveloped:
        # the header arrives first; an unrecognizable magic stops the job cold
        if delivered[:4] != integrity.MAGIC:
            return (
                JobOutcome(JobStatus.REJECTED_BEFORE_PRINT, reason=FailReason.INTEGRITY_FAILURE),
                PrintTrace(time_ms=tr.elapsed_ms),
            )
        vr = integrity.verify(delivered)
        if not vr.ok:
            # checkable only at end-of-stream: scrap at the damaged layer
            diff = _first_diff(delivered, reference)
            if diff is None or not (0 <= diff - header_size < ref_len):
                # header/ECC-tail damage or sender-side bad envelope: the
                # commands themselves all ran before the check failed
                k = len(scanned_ref)
            else:
                k = _layer_containing(scanned_ref, ref_len, diff - header_size)
            return (
                JobOutcome(JobStatus.SCRAPPED_MID_PRINT, layers_printed=k,
                           reason=FailReason.INTEGRITY_FAILURE),
                PrintTrace(
                    layers=_trace_layers(scanned_ref, k),
                    time_ms=tr.elapsed_ms + k * layer_time,
                ),
            )
        payload = vr.payload or b""
        corrected = vr.corrected_bits
    else:
        payload = delivered

    prog, err = _streaming_parse(payload)
    if err is None:
        assert prog is not None
        if enveloped and vr.record_count != len(prog.commands):
            # word count only checkable at end-of-stream: the whole part ran
            k = len(scanned_ref)
            return (
                JobOutcome(JobStatus.SCRAPPED_MID_PRINT, layers_printed=k,
                           reason=FailReason.INTEGRITY_FAILURE),
                PrintTrace(
                    layers=_trace_layers(scanned_ref, k),
                    time_ms=tr.elapsed_ms + k * layer_time,
                    integrity_corrected_bits=corrected,
                ),
            )
        return _completed_trace(prog, tr.elapsed_ms, layer_time, corrected)

    # the stream choked on a line mid-job; layers finished before it stand
    fail_off = _line_start_offset(payload, err.line)
    scanned_delivered = scan_text_layers(payload[:fail_off])
    k = _layers_completed(scanned_delivered, fail_off)
    if k == 0:
        return (
            JobOutcome(JobStatus.REJECTED_BEFORE_PRINT, reason=FailReason.PARSE_FAILURE),
            PrintTrace(time_ms=tr.elapsed_ms, integrity_corrected_bits=corrected),
        )
    return (
        JobOutcome(JobStatus.SCRAPPED_MID_PRINT, layers_printed=k, reason=FailReason.PARSE_FAILURE),
        PrintTrace(
            layers=_trace_layers(scanned_delivered, k),
            time_ms=tr.elapsed_ms + k * layer_time,
            integrity_corrected_bits=corrected,
        ),
    )


@dataclass(frozen=True)
class GeometryDiff:
    max_extrusion_error_mm: float
    layers_missing: int


def geometry_diff(intended: list[LayerPlan], trace: PrintTrace) -> GeometryDiff:
    """Compare printed extrusion against the intended layer plans.

    The intent is each layer's closed-contour perimeter sum (what the
    planner extrudes); layers are paired by position, and layers the
    printer never reached count as missing.
    """
    perimeters = intended_perimeters(intended)
    max_err = 0.0
    for perim, record in zip(perimeters, trace.layers):
        max_err = max(max_err, abs(record.extruded_mm - perim))
    return GeometryDiff(
        max_extrusion_error_mm=max_err,
        layers_missing=max(0, len(perimeters) - len(trace.layers)),
    )


def outcome_to_dict(outcome: JobOutcome) -> dict:
    return {
        "status": outcome.status.value,
        "layers_printed": outcome.layers_printed,
        "reason": outcome.reason.value if outcome.reason else None,
    }


def trace_to_dict(trace: PrintTrace) -> dict:
    return {
        "layers": [
            {"index": r.index, "z": r.z, "extruded_mm": r.extruded_mm} for r in trace.layers
        ],
        "time_ms": trace.time_ms,
        "integrity_corrected_bits": trace.integrity_corrected_bits,
    }
