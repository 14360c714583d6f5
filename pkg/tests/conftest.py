import numpy as np
import pytest

from laser_vfl.data import synth_classification
from laser_vfl.model import Arch, init_params


@pytest.fixture
def small_ds():
    return synth_classification(40, K=4, widths=[3, 2, 4, 3], C=3, seed=7)


@pytest.fixture
def small_arch(small_ds):
    return Arch(small_ds.widths, small_ds.n_classes, d_rep=4, hidden=(5,))


@pytest.fixture
def laser_params(small_arch):
    params = init_params("laser", small_arch, seed=3)
    # nonzero biases so bias gradients are exercised
    rng = np.random.default_rng(0)
    for name, t in params.tensors.items():
        if name.endswith(".b"):
            params.tensors[name] = 0.1 * rng.standard_normal(t.shape)
    return params


_ACCEPTANCE = []


def pytest_runtest_logreport(report):
    if report.when == "call":
        _ACCEPTANCE.extend(v for k, v in report.user_properties if k == "acceptance")


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for _, line in sorted(_ACCEPTANCE):
            terminalreporter.write_line(line)


def pytest_configure(config):
    config.addinivalue_line("markers", "acceptance: end-to-end acceptance criteria")
