import pytest
from hypothesis import HealthCheck, settings

from amstpa_lab import shapes
from amstpa_lab.gcode import ToolpathParams, emit_text, plan_toolpath
from amstpa_lab.integrity import wrap
from amstpa_lab.netsim import ChannelParams
from amstpa_lab.slicer import SliceParams, slice_mesh

settings.register_profile(
    "suite", max_examples=50, deadline=None, suppress_health_check=[HealthCheck.too_slow]
)
settings.load_profile("suite")


@pytest.fixture(scope="session")
def cube():
    return shapes.box()


@pytest.fixture(scope="session")
def cube_layers(cube):
    return slice_mesh(cube, SliceParams(layer_height=0.25))


@pytest.fixture(scope="session")
def cube_program(cube_layers):
    return plan_toolpath(cube_layers, ToolpathParams())


@pytest.fixture(scope="session")
def cube_text(cube_program):
    return emit_text(cube_program)


@pytest.fixture(scope="session")
def cube_wrapped(cube_program, cube_text):
    return wrap(cube_text, len(cube_program.commands))


@pytest.fixture()
def lossless_channel():
    return ChannelParams(latency_ms=1.0, bandwidth_bytes_per_s=125_000.0, loss_prob=0.0, seed=5)
