import functools

import pytest

from hardyheat.specfun import DEFAULT_PRECISION
from hardyheat.spectrum import build_spectrum, derive_params

ACCEPTANCE_LINES = []


@functools.lru_cache(maxsize=None)
def spectrum_for(mu: str, K: int, bits: int = 256):
    from hardyheat.specfun import Precision

    p = DEFAULT_PRECISION if bits == 256 else Precision(bits)
    return build_spectrum(derive_params(mu, p), K, p)


@pytest.fixture(scope="session")
def spectra():
    return spectrum_for


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
