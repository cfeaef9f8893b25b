import pytest

from ctgn import kernels


@pytest.fixture(scope="session", autouse=True)
def warm_kernels():
    # JIT-compile every kernel up front so no test pays compile time inside
    # its own runtime budget.
    kernels.warmup()
