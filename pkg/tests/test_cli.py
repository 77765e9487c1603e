import io
import json
import subprocess
import sys
from contextlib import redirect_stdout

import pytest

from amstpa_lab.cli import main
from amstpa_lab.mesh_io import TriangleMesh, emit_stl_binary


@pytest.fixture()
def cube_file(tmp_path, cube):
    path = tmp_path / "cube.stl"
    path.write_bytes(emit_stl_binary(cube))
    return path


def run_cli(argv):
    buffer = io.StringIO()
    with redirect_stdout(buffer):
        code = main([str(a) for a in argv])
    return code, buffer.getvalue()


class TestStpaCommand:
    def test_builtin_to_stdout(self):
        code, out = run_cli(["stpa", "--builtin-am", "--out", "-"])
        assert code == 0
        doc = json.loads(out)
        assert doc["candidate_count"] == 4 * (doc["component_count"] + doc["path_count"])

    def test_byte_identical_across_runs(self, tmp_path):
        outputs = []
        for name in ("a.json", "b.json"):
            path = tmp_path / name
            assert run_cli(["stpa", "--builtin-am", "--out", path])[0] == 0
            outputs.append(path.read_bytes())
        assert outputs[0] == outputs[1]

    def test_text_format(self, tmp_path):
        path = tmp_path / "hazards.txt"
        assert run_cli(["stpa", "--builtin-am", "--out", path])[0] == 0
        assert "total: 80 candidates" in path.read_text()

    def test_model_file(self, tmp_path):
        model = {
            "name": "tiny",
            "components": [
                {"id": "a", "name": "A", "kind": "Printer", "subsystem": "Printing"}
            ],
            "paths": [],
        }
        path = tmp_path / "model.json"
        path.write_text(json.dumps(model))
        code, out = run_cli(["stpa", "--model", path, "--out", "-"])
        assert code == 0
        assert json.loads(out)["candidate_count"] == 4

    def test_bad_model_exits_2(self, tmp_path):
        path = tmp_path / "bad.json"
        path.write_text("{nope")
        assert run_cli(["stpa", "--model", path, "--out", "-"])[0] == 2

    def test_missing_source_exits_2(self):
        assert run_cli(["stpa", "--out", "-"])[0] == 2


class TestStlCommand:
    def test_clean_cube(self, cube_file):
        code, out = run_cli(["stl", "validate", cube_file])
        assert code == 0
        doc = json.loads(out)
        assert doc["watertight"] is True
        assert doc["facet_count"] == 12

    def test_broken_mesh_exits_1(self, tmp_path, cube):
        broken = TriangleMesh(cube.facets[1:], cube.source_encoding)
        path = tmp_path / "broken.stl"
        path.write_bytes(emit_stl_binary(broken))
        code, out = run_cli(["stl", "validate", path])
        assert code == 1
        assert json.loads(out)["nonmanifold_edges"] == 3

    def test_unparseable_exits_2(self, tmp_path):
        path = tmp_path / "junk.stl"
        path.write_bytes(b"not an stl at all")
        assert run_cli(["stl", "validate", path])[0] == 2

    def test_missing_file_exits_2(self):
        assert run_cli(["stl", "validate", "/no/such/file.stl"])[0] == 2


class TestSliceAndGcode:
    def test_slice_then_plan(self, tmp_path, cube_file):
        layers = tmp_path / "layers.json"
        code, _ = run_cli(["slice", cube_file, "--layer-height", "0.25", "--out", layers])
        assert code == 0
        doc = json.loads(layers.read_text())
        assert len(doc["layers"]) == 4

        job = tmp_path / "job.gcode"
        code, _ = run_cli(["gcode", "plan", layers, "--out", job])
        assert code == 0
        text = job.read_text()
        assert text.startswith("G21\nG90\nG28\n")
        assert text.endswith("M2\n")
        assert text.count("G1 ") == 16

    def test_bad_layer_height_exits_2(self, cube_file):
        assert run_cli(["slice", cube_file, "--layer-height", "-1"])[0] == 2

    def test_gcode_rejects_non_layer_file(self, tmp_path, cube_file):
        assert run_cli(["gcode", "plan", cube_file, "--out", "-"])[0] == 2

    def test_no_partial_output_on_error(self, tmp_path, cube_file):
        out = tmp_path / "never.json"
        code, _ = run_cli(["gcode", "plan", cube_file, "--out", out])
        assert code == 2
        assert not out.exists()


class TestSimulate:
    def test_lossless_completes(self, cube_file):
        code, out = run_cli(
            [
                "simulate", "--mesh", cube_file,
                "--channel", "loss=0,latency=1,jitter=0,bw=125000,seed=5",
                "--mode", "reliable", "--policy", "fullimage", "--buffer", "1048576",
            ]
        )
        assert code == 0
        doc = json.loads(out)
        assert doc["outcome"] == {"status": "completed", "layers_printed": 4, "reason": None}
        assert doc["planned_extrusion_mm"] == pytest.approx(16.0, abs=1e-9)
        assert doc["geometry_diff"] == {"max_extrusion_error_mm": 0.0, "layers_missing": 0}

    def test_small_buffer_rejects_and_exits_1(self, cube_file):
        code, out = run_cli(
            ["simulate", "--mesh", cube_file, "--policy", "fullimage", "--buffer", "64"]
        )
        assert code == 1
        assert json.loads(out)["outcome"]["reason"] == "buffer_too_small"

    def test_streaming_besteffort_lossy_exits_1(self, cube_file):
        code, out = run_cli(
            [
                "simulate", "--mesh", cube_file, "--channel", "loss=0.4,seed=9",
                "--mode", "besteffort", "--policy", "streaming",
            ]
        )
        assert code == 1
        assert json.loads(out)["outcome"]["status"] in (
            "scrapped_mid_print", "rejected_before_print"
        )

    def test_bad_channel_spec_exits_2(self, cube_file):
        assert run_cli(["simulate", "--mesh", cube_file, "--channel", "zap=1"])[0] == 2


class TestCampaignAndReport:
    def test_generated_campaign(self, tmp_path):
        config = tmp_path / "config.json"
        config.write_text(
            json.dumps(
                {
                    "seed": 7,
                    "mesh": {"builtin": "cube"},
                    "generate": {"kind": "bit_flip", "count": 50, "stage": "in_transit"},
                }
            )
        )
        code, out = run_cli(["campaign", "--config", config])
        assert code == 0
        doc = json.loads(out)
        assert doc["trials"] == 50
        assert doc["histogram"] == {"integrity_verify": 50}

    def test_explicit_faults(self, tmp_path):
        config = tmp_path / "config.json"
        config.write_text(
            json.dumps(
                {
                    "mesh": {"builtin": "cube"},
                    "faults": [
                        {"kind": "scale_coords", "stage": "after_cad", "factor": 1.001},
                        {"kind": "flip_normals", "stage": "after_cad"},
                    ],
                }
            )
        )
        code, out = run_cli(["campaign", "--config", config])
        assert code == 0
        doc = json.loads(out)
        assert doc["histogram"] == {"geometry_diff": 1, "mesh_validation": 1}

    def test_demo_campaign_feeds_report(self, tmp_path):
        config = tmp_path / "config.json"
        config.write_text(
            json.dumps(
                {"seed": 42, "mesh": {"builtin": "cube"}, "demo": True,
                 "generate": {"count": 80}}
            )
        )
        campaign_out = tmp_path / "campaign.json"
        assert run_cli(["campaign", "--config", config, "--out", campaign_out])[0] == 0

        hazards_out = tmp_path / "hazards.json"
        assert run_cli(["stpa", "--builtin-am", "--out", hazards_out])[0] == 0

        report_md = tmp_path / "report.md"
        code, _ = run_cli(
            ["report", "--inputs", hazards_out, campaign_out, "--out", report_md]
        )
        assert code == 0
        text = report_md.read_text()
        for mid in range(1, 6):
            assert f"| {mid} | Demonstrated |" in text
        assert "| 6 | CatalogOnly |" in text

        report_json = tmp_path / "report.json"
        code, _ = run_cli(
            ["report", "--inputs", hazards_out, campaign_out, "--out", report_json]
        )
        doc = json.loads(report_json.read_text())
        demonstrated = [m["id"] for m in doc["mitigations"] if m["status"] == "Demonstrated"]
        assert demonstrated == [1, 2, 3, 4, 5]

    def test_empty_report(self):
        code, out = run_cli(["report", "--out", "-", "--format", "json"])
        assert code == 0
        doc = json.loads(out)
        assert doc["hazards"] is None
        assert len(doc["mitigations"]) == 25

    def test_unknown_input_artifact_exits_2(self, tmp_path):
        bogus = tmp_path / "bogus.json"
        bogus.write_text('{"what": 1}')
        assert run_cli(["report", "--inputs", bogus, "--out", "-"])[0] == 2

    def test_missing_campaign_spec_exits_2(self, tmp_path):
        config = tmp_path / "config.json"
        config.write_text(json.dumps({"mesh": {"builtin": "cube"}}))
        assert run_cli(["campaign", "--config", config])[0] == 2


class TestUsage:
    def test_unknown_subcommand_exits_2(self, capsys):
        assert main(["frobnicate"]) == 2
        capsys.readouterr()

    def test_module_entry_point(self, cube_file):
        proc = subprocess.run(
            [sys.executable, "-m", "amstpa_lab", "stl", "validate", str(cube_file)],
            capture_output=True,
            text=True,
        )
        assert proc.returncode == 0
        assert json.loads(proc.stdout)["watertight"] is True
