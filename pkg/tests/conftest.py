import numpy as np
import pytest

from nowa import operator as op
from nowa import optics
from nowa.io import SecretKey
from nowa.scenes import scene_set


@pytest.fixture(scope="session")
def cfg():
    return optics.OpticalConfig()


@pytest.fixture(scope="session")
def default_psf(cfg):
    return optics.compute_psf(optics.default_mask(), cfg)


@pytest.fixture(scope="session")
def otf(default_psf):
    return op.build_operator(default_psf, (3, 256, 256))


@pytest.fixture(scope="session")
def hardened_otf(default_psf):
    return op.build_operator(default_psf, (3, 256, 256), band=op.JPEG_BAND)


@pytest.fixture(scope="session")
def zero_psf(cfg):
    return optics.compute_psf(optics.ZernikeCoeffs.zeros(), cfg)


@pytest.fixture(scope="session")
def key():
    return SecretKey(bytes(range(32)))


@pytest.fixture(scope="session")
def zero_key():
    return SecretKey(bytes(32))


@pytest.fixture(scope="session")
def scenes20():
    return scene_set(20, 1234)


def delta_psf(channels=3, k=64):
    d = np.zeros((channels, k, k))
    d[:, k // 2, k // 2] = 1.0
    return optics.Psf(d, 1.0)


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


def pytest_terminal_summary(terminalreporter):
    """One PASS/FAIL line per acceptance criterion, with measured values."""
    lines = []
    for outcome in ("passed", "failed", "error"):
        for rep in terminalreporter.stats.get(outcome, []):
            nodeid = getattr(rep, "nodeid", "")
            if "test_acceptance.py::test_criterion_" not in nodeid or rep.when not in ("call", "setup"):
                continue
            if rep.when == "setup" and outcome == "passed":
                continue
            name = nodeid.split("::")[-1].removeprefix("test_criterion_")
            measured = dict(getattr(rep, "user_properties", [])).get("measured", "")
            lines.append((name, "PASS" if outcome == "passed" else "FAIL", measured))
    if not lines:
        return
    terminalreporter.section("acceptance criteria")
    for name, verdict, measured in sorted(lines):
        terminalreporter.write_line(f"{verdict}  criterion {name}  {measured}".rstrip())
