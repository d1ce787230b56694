import numpy as np
import pytest

from hsskit.compress import CompressionConfig, compress_nonsymmetric, compress_symmetric
from hsskit.source import KernelSpec, kernel_accessor, synthetic_hss_accessor


def rel_err(A, B):
    return np.linalg.norm(A - B) / np.linalg.norm(B)


@pytest.fixture
def rng():
    return np.random.default_rng(20240901)


@pytest.fixture(scope="session")
def factorizations():
    """Named compressed factorizations used by several modules."""
    out = {}
    acc, _ = synthetic_hss_accessor(3, 3, 16, seed=11)
    out["synthetic_sym"] = compress_symmetric(acc, CompressionConfig(rank=3, max_leaf=16, seed=1))
    acc, _ = synthetic_hss_accessor(2, 4, 8, seed=12, symmetric=False)
    out["synthetic_nonsym"] = compress_nonsymmetric(acc, CompressionConfig(rank=2, max_leaf=8, seed=2))
    acc = kernel_accessor(KernelSpec.uniform("log", 300))
    out["log_tol"] = compress_symmetric(acc, CompressionConfig(tol=1e-9, relative=True, max_leaf=20))
    acc = kernel_accessor(KernelSpec.uniform("exp", 200))
    out["exp_nonsym_path"] = compress_nonsymmetric(acc, CompressionConfig(rank=4, max_leaf=25))
    return out


def pytest_terminal_summary(terminalreporter):
    acceptance = __import__("sys").modules.get("test_acceptance")
    if acceptance is None or not acceptance.RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(acceptance.RESULTS):
        terminalreporter.write_line(acceptance.RESULTS[number])
