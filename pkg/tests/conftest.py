import os

import pytest
from hypothesis import HealthCheck, settings

settings.register_profile(
    "default", deadline=None, max_examples=60, suppress_health_check=[HealthCheck.too_slow]
)
settings.register_profile("ci", deadline=None, max_examples=200, suppress_health_check=[HealthCheck.too_slow])
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))

# lighter grid for the FDTD scene tests; the acceptance suite runs the default
SCENE_RESOLUTION = 40.0


@pytest.fixture(scope="session")
def device():
    from qdchip.device import bundled_device

    return bundled_device()


@pytest.fixture(scope="session")
def facet_store(tmp_path_factory):
    from qdchip.scenes import ReferenceStore

    return ReferenceStore(tmp_path_factory.mktemp("facet-refs"))


def write_light_pipeline(directory, *, alpha_override=None, dipole_offset=0.0, hbt_duration=3000.0):
    """Pipeline config with a single-wavelength FDTD scene on the coarse test
    grid and a short cross-correlation run; other stages use bundled files."""
    from pathlib import Path

    import qdchip

    data = Path(qdchip.__file__).parent / "data"
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    (d / "scene.toml").write_text(
        'scene = "beta"\nwavelength_nm = 910.0\nwavelengths_nm = [910.0]\n'
        f"resolution = {SCENE_RESOLUTION}\ndipole_offset_um = {dipole_offset}\n"
    )
    hbt = (data / "hbt.toml").read_text().split("[targets]")[0]
    hbt = hbt.replace("duration_s = 200000.0", f"duration_s = {hbt_duration}")
    (d / "hbt.toml").write_text(hbt)
    loss = f'data = "{data / "loss_scan.csv"}"\narms = ["a"]\ndistance_um = 915.0\n'
    if alpha_override is not None:
        loss += f"alpha_override = {alpha_override}\n"
    (d / "loss.toml").write_text(loss)
    (d / "pipeline.toml").write_text(
        f"""seed = 7
wavelength_nm = 910.0
qd_distance_um = 915.0

[stages]
coupler = "{data / 'coupler.toml'}"
fdtd = "scene.toml"
fit_loss = "loss.toml"
budget = "{data / 'device_chain.toml'}"
hbt = "hbt.toml"

[targets]
fifty_fifty_length_um = [88.875, 148.125]
overall_efficiency = [1.4e-5, 2.8e-5]
"""
    )
    return d / "pipeline.toml"


# one line per acceptance criterion, repeated in the terminal summary
ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
