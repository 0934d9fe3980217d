import numpy as np
import pytest

from touchreplay.core import DeviceProfile, load_profile


@pytest.fixture(scope="session")
def nexus5():
    return load_profile("nexus5")


@pytest.fixture(scope="session")
def small():
    # small screen keeps unit tests fast; radius 12 gives 24 px templates
    return DeviceProfile.generated("small", 240, 320, 12)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def pytest_terminal_summary(terminalreporter):
    lines = []
    for key in ("passed", "failed", "error"):
        for rep in terminalreporter.stats.get(key, []):
            props = dict(getattr(rep, "user_properties", []))
            if "criterion" in props and rep.when == "call":
                lines.append((props["criterion"], "PASS" if rep.passed else "FAIL", props.get("measured", "")))
    if lines:
        terminalreporter.section("acceptance criteria")
        for name, verdict, measured in sorted(lines):
            terminalreporter.write_line(f"{verdict}  {name}  {measured}")
