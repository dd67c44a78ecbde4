import numpy as np
import pytest

from critmc.rules import builtin_rule


@pytest.fixture(scope="session")
def er():
    return builtin_rule("erdos-renyi")


@pytest.fixture(scope="session")
def bf():
    return builtin_rule("bohman-frieze")


def tv_distance(a, b):
    """Total variation distance between two empirical laws (lists of hashables)."""
    from collections import Counter

    ca, cb = Counter(a), Counter(b)
    na, nb = len(a), len(b)
    return 0.5 * sum(abs(ca[k] / na - cb[k] / nb) for k in set(ca) | set(cb))


def poisson_tv(samples, mean):
    from scipy.stats import poisson

    samples = np.asarray(samples)
    kmax = int(samples.max()) + 1
    emp = np.bincount(samples, minlength=kmax + 1) / len(samples)
    pmf = poisson.pmf(np.arange(kmax + 1), mean)
    tail = 1.0 - pmf.sum()
    return 0.5 * (np.abs(emp - pmf).sum() + tail)


@pytest.fixture(scope="session")
def limit_reference_10k():
    from critmc.experiments import run_limit_reference

    return run_limit_reference([0.0], 10_000, step=1e-3, horizon=15.0, seed=314, top_k=5)


_ACCEPTANCE = {}


@pytest.fixture
def criterion(request):
    """Record one acceptance line: ``criterion(number, passed, detail)``."""

    def record(number, passed, detail=""):
        _ACCEPTANCE[number] = (bool(passed), detail)
        print(f"criterion {number}: {'PASS' if passed else 'FAIL'} {detail}")
        return passed

    return record


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(_ACCEPTANCE):
        ok, detail = _ACCEPTANCE[k]
        terminalreporter.write_line(f"criterion {k:>2}: {'PASS' if ok else 'FAIL'}  {detail}")
