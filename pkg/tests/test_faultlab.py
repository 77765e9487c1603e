import json
from dataclasses import replace

import pytest

from amstpa_lab.faultlab import (
    CampaignResult,
    DetectionStage,
    FaultKind,
    FaultSpec,
    FaultStage,
    PipelineConfig,
    bit_flip_specs,
    inject,
    run_campaign,
    run_demo_campaign,
)
from amstpa_lab.gcode import ToolpathParams
from amstpa_lab.mesh_io import validate_mesh
from amstpa_lab.netsim import ChannelParams, TransferMode
from amstpa_lab.printer_sim import PrinterConfig, PrintPolicy
from amstpa_lab.slicer import SliceParams


def pipeline(policy=PrintPolicy.FULL_IMAGE, enveloped=True, ecc=False, seed=0, loss=0.0):
    return PipelineConfig(
        slice_params=SliceParams(layer_height=0.25),
        toolpath=ToolpathParams(),
        channel=ChannelParams(latency_ms=1.0, bandwidth_bytes_per_s=125_000.0, loss_prob=loss),
        printer=PrinterConfig(
            buffer_capacity=1 << 20, policy=policy, nominal_layer_time_ms=1000.0
        ),
        mode=TransferMode.RELIABLE_ORDERED,
        enveloped=enveloped,
        ecc=ecc,
        campaign_seed=seed,
    )


class TestInject:
    def test_bit_flip_involution(self):
        spec = FaultSpec(FaultKind.BIT_FLIP, FaultStage.IN_TRANSIT, offset=13)
        data = b"hello world"
        assert inject(inject(data, spec), spec) == data

    def test_bit_flip_offset_out_of_range(self):
        spec = FaultSpec(FaultKind.BIT_FLIP, FaultStage.IN_TRANSIT, offset=6 * 8)
        with pytest.raises(ValueError, match="out of range"):
            inject(b"abcdef", spec)

    def test_bit_flip_derived_offset_deterministic(self):
        spec = FaultSpec(FaultKind.BIT_FLIP, FaultStage.IN_TRANSIT, seed=99)
        assert inject(b"payload", spec) == inject(b"payload", spec)

    def test_byte_set(self):
        spec = FaultSpec(FaultKind.BYTE_SET, FaultStage.IN_TRANSIT, offset=2, value=0x7F)
        assert inject(b"abcdef", spec) == b"ab\x7fdef"

    def test_byte_set_derived_value_always_corrupts(self):
        for seed in range(40):
            spec = FaultSpec(FaultKind.BYTE_SET, FaultStage.IN_TRANSIT, seed=seed)
            data = bytes(64)
            assert inject(data, spec) != data

    def test_truncate(self):
        spec = FaultSpec(FaultKind.TRUNCATE, FaultStage.IN_TRANSIT, new_len=3)
        assert inject(b"abcdef", spec) == b"abc"

    def test_scale_identity(self, cube):
        spec = FaultSpec(FaultKind.SCALE_COORDS, FaultStage.AFTER_CAD, factor=1.0)
        assert inject(cube, spec) == cube

    def test_scale_requires_positive_factor(self, cube):
        spec = FaultSpec(FaultKind.SCALE_COORDS, FaultStage.AFTER_CAD, factor=0.0)
        with pytest.raises(ValueError, match="factor"):
            inject(cube, spec)

    def test_flip_normals_all_inverted(self, cube):
        flipped = inject(cube, FaultSpec(FaultKind.FLIP_NORMALS, FaultStage.AFTER_CAD))
        report = validate_mesh(flipped)
        assert len(report.inverted_normals) == 12

    def test_kind_target_mismatch(self, cube):
        with pytest.raises(TypeError):
            inject(b"bytes", FaultSpec(FaultKind.FLIP_NORMALS, FaultStage.AFTER_CAD))
        with pytest.raises(TypeError):
            inject(cube, FaultSpec(FaultKind.BIT_FLIP, FaultStage.AFTER_CAD, offset=0))

    def test_drop_packets_not_injectable(self):
        spec = FaultSpec(FaultKind.DROP_PACKETS, FaultStage.IN_TRANSIT, loss_prob=0.5)
        with pytest.raises(ValueError, match="channel"):
            inject(b"abc", spec)

    def test_spec_json_round_trip(self):
        specs = [
            FaultSpec(FaultKind.BIT_FLIP, FaultStage.IN_TRANSIT, offset=7, seed=3),
            FaultSpec(FaultKind.SCALE_COORDS, FaultStage.AFTER_CAD, factor=1.001),
            FaultSpec(FaultKind.DROP_PACKETS, FaultStage.IN_TRANSIT, loss_prob=0.25),
        ]
        for spec in specs:
            blob = json.dumps(spec.to_dict())
            assert FaultSpec.from_dict(json.loads(blob)) == spec


class TestCampaign:
    def test_empty_specs(self, cube):
        result = run_campaign(pipeline(), [], cube)
        assert result.trials == 0
        assert result.histogram == {}
        assert result.undetected_trials == ()

    def test_1000_bit_flips_all_caught_by_integrity(self, cube):
        specs = bit_flip_specs(1000, FaultStage.IN_TRANSIT, seed=202)
        result = run_campaign(pipeline(seed=11), specs, cube)
        assert result.trials == 1000
        assert result.histogram == {DetectionStage.INTEGRITY_VERIFY: 1000}
        assert result.undetected_trials == ()

    def test_envelope_disabled_lets_faults_past_integrity(self, cube):
        specs = bit_flip_specs(200, FaultStage.IN_TRANSIT, seed=202)
        with_envelope = run_campaign(pipeline(seed=11), specs, cube)
        without = run_campaign(pipeline(enveloped=False, seed=11), specs, cube)
        late = (
            without.count(DetectionStage.PRINTER_OUTCOME)
            + without.count(DetectionStage.GEOMETRY_DIFF)
            + without.count(DetectionStage.UNDETECTED)
        )
        assert late == 200
        assert without.count(DetectionStage.INTEGRITY_VERIFY) == 0
        assert without.count(DetectionStage.UNDETECTED) + without.count(
            DetectionStage.PRINTER_OUTCOME
        ) > 0
        assert (
            with_envelope.count(DetectionStage.UNDETECTED)
            == 0
            <= without.count(DetectionStage.UNDETECTED)
        )

    def test_scale_coords_detected_by_geometry_only(self, cube):
        spec = FaultSpec(FaultKind.SCALE_COORDS, FaultStage.AFTER_CAD, factor=1.001)
        result = run_campaign(pipeline(), [spec], cube)
        assert result.histogram == {DetectionStage.GEOMETRY_DIFF: 1}

    def test_flip_normals_detected_by_mesh_validation(self, cube):
        spec = FaultSpec(FaultKind.FLIP_NORMALS, FaultStage.AFTER_CAD)
        result = run_campaign(pipeline(), [spec], cube)
        assert result.histogram == {DetectionStage.MESH_VALIDATION: 1}

    def test_truncated_stl_is_parse_error(self, cube):
        spec = FaultSpec(FaultKind.TRUNCATE, FaultStage.AFTER_CAD, new_len=100)
        result = run_campaign(pipeline(), [spec], cube)
        assert result.histogram == {DetectionStage.PARSE_ERROR: 1}

    def test_after_slice_faults_pass_integrity(self, cube):
        # the envelope is built after the fault, so the CRC cannot flag it
        specs = bit_flip_specs(100, FaultStage.AFTER_SLICE, seed=5)
        result = run_campaign(pipeline(seed=3), specs, cube)
        assert result.count(DetectionStage.INTEGRITY_VERIFY) == 0
        assert sum(result.histogram.values()) == 100

    def test_drop_packets_reliable_recovers(self, cube):
        spec = FaultSpec(FaultKind.DROP_PACKETS, FaultStage.IN_TRANSIT, loss_prob=0.3)
        result = run_campaign(pipeline(), [spec], cube)
        assert result.histogram == {DetectionStage.UNDETECTED: 1}

    def test_drop_packets_besteffort_detected(self, cube):
        cfg = replace(pipeline(), mode=TransferMode.BEST_EFFORT)
        spec = FaultSpec(FaultKind.DROP_PACKETS, FaultStage.IN_TRANSIT, loss_prob=0.9)
        result = run_campaign(cfg, [spec], cube)
        assert result.count(DetectionStage.INTEGRITY_VERIFY) == 1

    def test_replay_determinism(self, cube):
        specs = bit_flip_specs(64, FaultStage.IN_TRANSIT, seed=8) + [
            FaultSpec(FaultKind.SCALE_COORDS, FaultStage.AFTER_CAD, factor=0.999),
            FaultSpec(FaultKind.TRUNCATE, FaultStage.IN_TRANSIT, seed=4),
        ]
        a = run_campaign(pipeline(seed=21), specs, cube)
        b = run_campaign(pipeline(seed=21), specs, cube)
        assert a == b

    def test_histogram_sums_to_trials(self, cube):
        specs = bit_flip_specs(40, FaultStage.IN_TRANSIT, seed=6) + bit_flip_specs(
            40, FaultStage.AFTER_SLICE, seed=7
        )
        result = run_campaign(pipeline(seed=2), specs, cube)
        assert sum(result.histogram.values()) == result.trials == 80

    def test_result_json_round_trip(self, cube):
        specs = bit_flip_specs(10, FaultStage.IN_TRANSIT, seed=1)
        result = run_campaign(pipeline(enveloped=False, seed=9), specs, cube)
        blob = json.dumps(result.to_dict())
        assert CampaignResult.from_dict(json.loads(blob)) == result

    def test_ecc_corrections_attributed_to_integrity(self, cube):
        specs = bit_flip_specs(100, FaultStage.IN_TRANSIT, seed=31)
        result = run_campaign(pipeline(ecc=True, seed=13), specs, cube)
        assert result.count(DetectionStage.UNDETECTED) == 0
        assert result.count(DetectionStage.INTEGRITY_VERIFY) == 100


@pytest.fixture(scope="module")
def demo(cube):
    return run_demo_campaign(pipeline(seed=42), cube, corruption_count=120)


class TestDemoCampaign:
    def test_envelope_catches_everything(self, demo):
        assert demo.campaign.histogram == {DetectionStage.INTEGRITY_VERIFY: 120}
        assert demo.evidence.envelope_undetected == 0

    def test_buffering_contrast(self, demo):
        ev = demo.evidence
        assert ev.fullimage_scrapped == 0
        assert ev.fullimage_corrupt_printed_layers == 0
        assert ev.streaming_scrapped_with_layers >= 1

    def test_raw_pipeline_detects_late(self, demo):
        assert demo.evidence.raw_late_detections >= 1

    def test_channel_evidence(self, demo):
        ev = demo.evidence
        assert ev.reliable_intact_under_loss
        assert ev.lossy_packets_lost > 0
        assert ev.lossy_elapsed_ms > ev.lossless_elapsed_ms

    def test_json_round_trip(self, demo):
        doc = json.loads(json.dumps(demo.to_dict()))
        assert CampaignResult.from_dict(doc["campaign"]) == demo.campaign

    def test_requires_envelope(self, cube):
        with pytest.raises(ValueError, match="envelope"):
            run_demo_campaign(pipeline(enveloped=False), cube)
