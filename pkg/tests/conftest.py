import numpy as np
import pytest

from mdc_dstm import stbc
from mdc_dstm.constellation import closed_form_m4, named_constellation


@pytest.fixture(scope="session")
def code4():
    return stbc.mdc_map(stbc.alamouti_set())


@pytest.fixture(scope="session")
def code8():
    return stbc.mdc_map(stbc.ostbc_rate34_4tx())


@pytest.fixture(scope="session")
def m1():
    return closed_form_m4()


@pytest.fixture(scope="session")
def m2():
    return named_constellation("M2")


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def crandn(rng, *shape):
    return (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) / np.sqrt(2)


# the rate-1 4Tx MDC codeword written out symbol by symbol
def eq10_matrix(c):
    r, i = np.real(c), np.imag(c)
    return 0.5 * np.array([
        [r[0] + 1j * r[2], -r[1] + 1j * r[3], -i[0] + 1j * i[2], i[1] + 1j * i[3]],
        [r[1] + 1j * r[3], r[0] - 1j * r[2], -i[1] + 1j * i[3], -i[0] - 1j * i[2]],
        [-i[0] + 1j * i[2], i[1] + 1j * i[3], r[0] + 1j * r[2], -r[1] + 1j * r[3]],
        [-i[1] + 1j * i[3], -i[0] - 1j * i[2], r[1] + 1j * r[3], r[0] - 1j * r[2]],
    ])


# one summary line per acceptance criterion, filled in by test_acceptance.py
ACCEPTANCE = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.write_sep("=", "acceptance criteria")
        for line in sorted(ACCEPTANCE, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
