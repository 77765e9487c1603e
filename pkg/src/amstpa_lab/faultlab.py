"""Seeded fault injection across the CAD -> slice -> transmit -> print pipeline.

Each campaign trial runs the full pipeline with one fault applied at its
stage and records the first stage that detects the damage.  Detection
stages partition trials: a fault corrected by ECC still counts as caught by
the integrity check, and a trial that completes with geometry matching the
intent counts as Undetected (whether the fault was harmless or missed).
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from enum import Enum

from .gcode import ToolpathParams, count_records, emit_text, plan_toolpath
from .integrity import wrap
from .mesh_io import (
    Facet,
    StlError,
    TriangleMesh,
    Vec3,
    emit_stl_binary,
    parse_stl,
    validate_mesh,
)
from .netsim import ChannelParams, TransferMode, splitmix64_next, transfer
from .printer_sim import (
    FailReason,
    JobStatus,
    PrinterConfig,
    PrintPolicy,
    geometry_diff,
    run_job,
)
from .slicer import SliceParams, slice_mesh

_MASK = (1 << 64) - 1
_GOLDEN = 0x9E3779B97F4A7C15


def _splitmix_at(seed: int, index: int) -> int:
    """index-th output of the SplitMix64 stream that starts at `seed`."""
    value, _ = splitmix64_next((seed + index * _GOLDEN) & _MASK)
    return value


class FaultKind(Enum):
    BIT_FLIP = "bit_flip"
    BYTE_SET = "byte_set"
    TRUNCATE = "truncate"
    SCALE_COORDS = "scale_coords"
    FLIP_NORMALS = "flip_normals"
    DROP_PACKETS = "drop_packets"


class FaultStage(Enum):
    AFTER_CAD = "after_cad"
    AFTER_SLICE = "after_slice"
    IN_TRANSIT = "in_transit"


_BYTE_KINDS = frozenset({FaultKind.BIT_FLIP, FaultKind.BYTE_SET, FaultKind.TRUNCATE})
_MESH_KINDS = frozenset({FaultKind.SCALE_COORDS, FaultKind.FLIP_NORMALS})


@dataclass(frozen=True)
class FaultSpec:
    kind: FaultKind
    stage: FaultStage
    offset: int | None = None    # bit index for BIT_FLIP, byte index for BYTE_SET
    value: int | None = None     # byte value for BYTE_SET
    new_len: int | None = None   # for TRUNCATE
    factor: float | None = None  # for SCALE_COORDS
    loss_prob: float | None = None  # for DROP_PACKETS
    seed: int = 0                # drives any field left unspecified

    def to_dict(self) -> dict:
        doc: dict = {"kind": self.kind.value, "stage": self.stage.value, "seed": self.seed}
        for name in ("offset", "value", "new_len", "factor", "loss_prob"):
            v = getattr(self, name)
            if v is not None:
                doc[name] = v
        return doc

    @classmethod
    def from_dict(cls, doc: dict) -> "FaultSpec":
        return cls(
            kind=FaultKind(doc["kind"]),
            stage=FaultStage(doc["stage"]),
            offset=doc.get("offset"),
            value=doc.get("value"),
            new_len=doc.get("new_len"),
            factor=doc.get("factor"),
            loss_prob=doc.get("loss_prob"),
            seed=int(doc.get("seed", 0)),
        )


def inject(target: bytes | TriangleMesh, spec: FaultSpec):
    """Apply exactly the specified mutation; deterministic given the spec.

    Unspecified offsets/values/lengths are derived from spec.seed, clamped
    to the target's size at application time.  A derived BYTE_SET value
    that matches the existing byte is complemented so the write corrupts.
    """
    if spec.kind in _MESH_KINDS:
        if not isinstance(target, TriangleMesh):
            raise TypeError(f"{spec.kind.value} applies to a mesh, not bytes")
        if spec.kind is FaultKind.FLIP_NORMALS:
            flipped = tuple(
                Facet(Vec3(-f.normal.x, -f.normal.y, -f.normal.z), f.v0, f.v1, f.v2)
                for f in target.facets
            )
            return TriangleMesh(flipped, target.source_encoding)
        factor = spec.factor
        if factor is None or not (factor > 0.0):
            raise ValueError("scale_coords requires factor > 0")

        def scale(v: Vec3) -> Vec3:
            return Vec3(v.x * factor, v.y * factor, v.z * factor)

        scaled = tuple(
            Facet(f.normal, scale(f.v0), scale(f.v1), scale(f.v2)) for f in target.facets
        )
        return TriangleMesh(scaled, target.source_encoding)

    if spec.kind is FaultKind.DROP_PACKETS:
        raise ValueError("drop_packets is applied through the channel parameters, not inject()")
    if not isinstance(target, (bytes, bytearray)):
        raise TypeError(f"{spec.kind.value} applies to bytes, not {type(target).__name__}")
    data = bytearray(target)
    if not data:
        raise ValueError("cannot inject into an empty byte string")

    if spec.kind is FaultKind.BIT_FLIP:
        limit = len(data) * 8
        offset = spec.offset if spec.offset is not None else _splitmix_at(spec.seed, 0) % limit
        if not (0 <= offset < limit):
            raise ValueError(f"bit offset {offset} out of range for {len(data)} bytes")
        data[offset // 8] ^= 1 << (offset % 8)
        return bytes(data)

    if spec.kind is FaultKind.BYTE_SET:
        offset = spec.offset if spec.offset is not None else _splitmix_at(spec.seed, 0) % len(data)
        if not (0 <= offset < len(data)):
            raise ValueError(f"byte offset {offset} out of range for {len(data)} bytes")
        if spec.value is not None:
            value = spec.value
            if not (0 <= value <= 255):
                raise ValueError("byte value must be within 0..255")
        else:
            value = _splitmix_at(spec.seed, 1) % 256
            if value == data[offset]:
                value ^= 0xFF
        data[offset] = value
        return bytes(data)

    # TRUNCATE
    new_len = spec.new_len if spec.new_len is not None else _splitmix_at(spec.seed, 0) % len(data)
    if not (0 <= new_len <= len(data)):
        raise ValueError(f"new length {new_len} out of range for {len(data)} bytes")
    return bytes(data[:new_len])


class DetectionStage(Enum):
    PARSE_ERROR = "parse_error"
    MESH_VALIDATION = "mesh_validation"
    INTEGRITY_VERIFY = "integrity_verify"
    PRINTER_OUTCOME = "printer_outcome"
    GEOMETRY_DIFF = "geometry_diff"
    UNDETECTED = "undetected"


@dataclass(frozen=True)
class CampaignResult:
    trials: int
    histogram: dict[DetectionStage, int]
    undetected_trials: tuple[FaultSpec, ...]

    def count(self, stage: DetectionStage) -> int:
        return self.histogram.get(stage, 0)

    def to_dict(self) -> dict:
        return {
            "trials": self.trials,
            "histogram": {stage.value: n for stage, n in self.histogram.items()},
            "undetected_trials": [spec.to_dict() for spec in self.undetected_trials],
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "CampaignResult":
        return cls(
            trials=int(doc["trials"]),
            histogram={DetectionStage(k): int(v) for k, v in doc["histogram"].items()},
            undetected_trials=tuple(FaultSpec.from_dict(d) for d in doc["undetected_trials"]),
        )


@dataclass(frozen=True)
class PipelineConfig:
    slice_params: SliceParams
    toolpath: ToolpathParams
    channel: ChannelParams
    printer: PrinterConfig
    mode: TransferMode = TransferMode.RELIABLE_ORDERED
    packet_size: int = 256
    enveloped: bool = True
    ecc: bool = False
    geometry_tol_mm: float = 1e-6
    campaign_seed: int = 0


@dataclass(frozen=True)
class _Pristine:
    mesh: TriangleMesh
    stl: bytes
    layers: list
    text: bytes
    sent: bytes  # wrapped envelope, or raw text when not enveloped


def _prepare(cfg: PipelineConfig, base_mesh: TriangleMesh) -> _Pristine:
    stl = emit_stl_binary(base_mesh)
    layers = slice_mesh(base_mesh, cfg.slice_params)
    program = plan_toolpath(layers, cfg.toolpath)
    text = emit_text(program)
    return _Pristine(base_mesh, stl, layers, text, _wrap_stage(cfg, text))


def _wrap_stage(cfg: PipelineConfig, text: bytes) -> bytes:
    if not cfg.enveloped:
        return text
    return wrap(text, count_records(text), with_ecc=cfg.ecc)


def _run_trial(
    cfg: PipelineConfig,
    spec: FaultSpec,
    pristine: _Pristine,
    channel: ChannelParams,
):
    """One pipeline pass; returns (stage, outcome, trace)."""
    sent = pristine.sent
    reference = pristine.sent
    intended = pristine.layers

    if spec.stage is FaultStage.AFTER_CAD:
        if spec.kind in _MESH_KINDS:
            stl_bytes = emit_stl_binary(inject(pristine.mesh, spec))
        else:
            stl_bytes = inject(pristine.stl, spec)
        try:
            mesh = parse_stl(stl_bytes)
        except StlError:
            return DetectionStage.PARSE_ERROR, None, None
        if not validate_mesh(mesh).is_clean():
            return DetectionStage.MESH_VALIDATION, None, None
        layers = slice_mesh(mesh, cfg.slice_params)
        text = emit_text(plan_toolpath(layers, cfg.toolpath))
        sent = reference = _wrap_stage(cfg, text)
    elif spec.stage is FaultStage.AFTER_SLICE:
        text = inject(pristine.text, spec)
        sent = reference = _wrap_stage(cfg, text)
    else:  # IN_TRANSIT
        if spec.kind is FaultKind.DROP_PACKETS:
            if spec.loss_prob is None or not (0.0 <= spec.loss_prob <= 1.0):
                raise ValueError("drop_packets requires loss_prob within [0, 1]")
            channel = replace(channel, loss_prob=spec.loss_prob)
        else:
            sent = inject(pristine.sent, spec)

    outcome, trace = run_job(
        sent,
        cfg.printer,
        channel,
        cfg.mode,
        packet_size=cfg.packet_size,
        enveloped=cfg.enveloped,
        reference=reference,
    )
    if outcome.reason is FailReason.INTEGRITY_FAILURE or trace.integrity_corrected_bits > 0:
        return DetectionStage.INTEGRITY_VERIFY, outcome, trace
    if outcome.status is not JobStatus.COMPLETED:
        return DetectionStage.PRINTER_OUTCOME, outcome, trace
    gd = geometry_diff(intended, trace)
    if gd.layers_missing > 0 or gd.max_extrusion_error_mm > cfg.geometry_tol_mm:
        return DetectionStage.GEOMETRY_DIFF, outcome, trace
    return DetectionStage.UNDETECTED, outcome, trace


def run_campaign(
    cfg: PipelineConfig,
    specs: list[FaultSpec],
    base_mesh: TriangleMesh,
) -> CampaignResult:
    """Run every fault spec through the pipeline and tally detection stages.

    Trial RNG streams derive from (campaign_seed, trial index), so replays
    and concurrent evaluation produce identical results.
    """
    pristine = _prepare(cfg, base_mesh)
    histogram: dict[DetectionStage, int] = {}
    undetected: list[FaultSpec] = []
    for i, spec in enumerate(specs):
        channel = replace(cfg.channel, seed=_splitmix_at(cfg.campaign_seed, i))
        stage, _, _ = _run_trial(cfg, spec, pristine, channel)
        histogram[stage] = histogram.get(stage, 0) + 1
        if stage is DetectionStage.UNDETECTED:
            undetected.append(spec)
    return CampaignResult(
        trials=len(specs),
        histogram=histogram,
        undetected_trials=tuple(undetected),
    )


def bit_flip_specs(count: int, stage: FaultStage, seed: int) -> list[FaultSpec]:
    """Single-bit (single-byte) corruptions at seed-derived offsets."""
    return [
        FaultSpec(kind=FaultKind.BIT_FLIP, stage=stage, seed=_splitmix_at(seed, j))
        for j in range(count)
    ]


# ---------------------------------------------------------------------------
# Demonstration campaign: evidence for the executable mitigations 1..5
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class MitigationEvidence:
    reliable_loss_prob: float
    reliable_intact_under_loss: bool
    lossless_elapsed_ms: float
    lossy_elapsed_ms: float
    lossy_packets_lost: int
    fullimage_trials: int
    fullimage_rejected_integrity: int
    fullimage_scrapped: int
    fullimage_corrupt_printed_layers: int
    streaming_scrapped: int
    streaming_scrapped_with_layers: int
    envelope_undetected: int
    raw_trials: int
    raw_late_detections: int

    def to_dict(self) -> dict:
        return {
            "reliable_loss_prob": self.reliable_loss_prob,
            "reliable_intact_under_loss": self.reliable_intact_under_loss,
            "lossless_elapsed_ms": self.lossless_elapsed_ms,
            "lossy_elapsed_ms": self.lossy_elapsed_ms,
            "lossy_packets_lost": self.lossy_packets_lost,
            "fullimage_trials": self.fullimage_trials,
            "fullimage_rejected_integrity": self.fullimage_rejected_integrity,
            "fullimage_scrapped": self.fullimage_scrapped,
            "fullimage_corrupt_printed_layers": self.fullimage_corrupt_printed_layers,
            "streaming_scrapped": self.streaming_scrapped,
            "streaming_scrapped_with_layers": self.streaming_scrapped_with_layers,
            "envelope_undetected": self.envelope_undetected,
            "raw_trials": self.raw_trials,
            "raw_late_detections": self.raw_late_detections,
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "MitigationEvidence":
        return cls(**{k: doc[k] for k in cls.__dataclass_fields__})


@dataclass(frozen=True)
class DemoResult:
    campaign: CampaignResult
    evidence: MitigationEvidence

    def to_dict(self) -> dict:
        return {"campaign": self.campaign.to_dict(), "evidence": self.evidence.to_dict()}


_LATE_STAGES = frozenset(
    {DetectionStage.PRINTER_OUTCOME, DetectionStage.GEOMETRY_DIFF, DetectionStage.UNDETECTED}
)


def run_demo_campaign(
    cfg: PipelineConfig,
    base_mesh: TriangleMesh,
    corruption_count: int = 200,
    reliable_loss_prob: float = 0.1,
) -> DemoResult:
    """Exercise the executable mitigations and collect the evidence.

    Runs the same in-transit corruption set under full-image and streaming
    policies (buffering contrast), reruns it with the envelope stripped
    (integrity-check necessity), and probes the channel with and without
    loss under reliable transfer (protocol and QoS evidence).
    """
    if not cfg.enveloped:
        raise ValueError("the demonstration campaign needs the envelope enabled")
    specs = bit_flip_specs(corruption_count, FaultStage.IN_TRANSIT, cfg.campaign_seed)

    full_cfg = replace(
        cfg, printer=replace(cfg.printer, policy=PrintPolicy.FULL_IMAGE)
    )
    stream_cfg = replace(
        cfg, printer=replace(cfg.printer, policy=PrintPolicy.STREAMING)
    )
    raw_cfg = replace(full_cfg, enveloped=False)

    # full image + envelope, tracking outcomes for the buffering contrast
    pristine = _prepare(full_cfg, base_mesh)
    histogram: dict[DetectionStage, int] = {}
    undetected: list[FaultSpec] = []
    full_scrapped = 0
    full_corrupt_layers = 0
    full_rejected_integrity = 0
    for i, spec in enumerate(specs):
        channel = replace(full_cfg.channel, seed=_splitmix_at(full_cfg.campaign_seed, i))
        stage, outcome, _ = _run_trial(full_cfg, spec, pristine, channel)
        histogram[stage] = histogram.get(stage, 0) + 1
        if stage is DetectionStage.UNDETECTED:
            undetected.append(spec)
        if outcome is not None:
            if outcome.status is JobStatus.SCRAPPED_MID_PRINT:
                full_scrapped += 1
            if outcome.status is not JobStatus.COMPLETED:
                full_corrupt_layers += outcome.layers_printed
        if outcome is not None and outcome.reason is FailReason.INTEGRITY_FAILURE:
            full_rejected_integrity += 1
    campaign = CampaignResult(len(specs), histogram, tuple(undetected))

    # streaming + envelope: same corruptions scrap partially printed parts
    pristine_s = _prepare(stream_cfg, base_mesh)
    stream_scrapped = 0
    stream_scrapped_with_layers = 0
    for i, spec in enumerate(specs):
        channel = replace(stream_cfg.channel, seed=_splitmix_at(stream_cfg.campaign_seed, i))
        _, outcome, _ = _run_trial(stream_cfg, spec, pristine_s, channel)
        if outcome is not None and outcome.status is JobStatus.SCRAPPED_MID_PRINT:
            stream_scrapped += 1
            if outcome.layers_printed > 0:
                stream_scrapped_with_layers += 1

    # envelope stripped: the printer consumes raw text, detection moves late
    pristine_r = _prepare(raw_cfg, base_mesh)
    raw_late = 0
    for i, spec in enumerate(specs):
        channel = replace(raw_cfg.channel, seed=_splitmix_at(raw_cfg.campaign_seed, i))
        stage, _, _ = _run_trial(raw_cfg, spec, pristine_r, channel)
        if stage in _LATE_STAGES:
            raw_late += 1

    # channel probes: reliable transfer under loss, QoS cost of loss.
    # Several derived seeds so a lossy channel reliably shows losses.
    probe_packet = max(16, min(cfg.packet_size, 64))
    lossless_ms = lossy_ms = 0.0
    lossy_lost = 0
    all_intact = True
    for j in range(16):
        probe_seed = _splitmix_at(cfg.campaign_seed ^ 0x51CE, j)
        lossless = transfer(
            pristine.sent,
            replace(cfg.channel, loss_prob=0.0, seed=probe_seed),
            TransferMode.RELIABLE_ORDERED,
            probe_packet,
        )
        lossy = transfer(
            pristine.sent,
            replace(cfg.channel, loss_prob=reliable_loss_prob, seed=probe_seed),
            TransferMode.RELIABLE_ORDERED,
            probe_packet,
        )
        lossless_ms += lossless.elapsed_ms
        lossy_ms += lossy.elapsed_ms
        lossy_lost += lossy.packets_lost
        all_intact = all_intact and lossy.intact

    evidence = MitigationEvidence(
        reliable_loss_prob=reliable_loss_prob,
        reliable_intact_under_loss=all_intact,
        lossless_elapsed_ms=lossless_ms,
        lossy_elapsed_ms=lossy_ms,
        lossy_packets_lost=lossy_lost,
        fullimage_trials=len(specs),
        fullimage_rejected_integrity=full_rejected_integrity,
        fullimage_scrapped=full_scrapped,
        fullimage_corrupt_printed_layers=full_corrupt_layers,
        streaming_scrapped=stream_scrapped,
        streaming_scrapped_with_layers=stream_scrapped_with_layers,
        envelope_undetected=campaign.count(DetectionStage.UNDETECTED),
        raw_trials=len(specs),
        raw_late_detections=raw_late,
    )
    return DemoResult(campaign=campaign, evidence=evidence)
