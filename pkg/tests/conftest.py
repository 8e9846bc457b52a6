import numpy as np
import pytest

from puac.datagen import standard_benchmark


def central_difference(f, params, h=1e-6):
    """Central finite-difference gradient of scalar ``f`` at flat ``params``."""
    params = np.asarray(params, dtype=np.float64)
    grad = np.empty_like(params)
    for i in range(params.size):
        up = params.copy()
        dn = params.copy()
        up[i] += h
        dn[i] -= h
        grad[i] = (f(up) - f(dn)) / (2 * h)
    return grad


def rel_error(a, b):
    a, b = np.asarray(a), np.asarray(b)
    return float(np.max(np.abs(a - b)) / max(1e-8, float(np.max(np.abs(a))), float(np.max(np.abs(b)))))


@pytest.fixture(scope="session")
def small_benchmark():
    """Standard benchmark geometry with 300 samples per bag and 900 test points."""
    from puac.datagen import sample_puac

    return sample_puac(standard_benchmark(n_bag=300, n_test=900, seed=11))


ACCEPTANCE_LINES: list[str] = []


def record_criterion(number: int, title: str, ok: bool, detail: str) -> None:
    """Remember one acceptance verdict; all verdicts are printed at the end of the run."""
    line = f"[{'PASS' if ok else 'FAIL'}] criterion {number:>2} {title}: {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[2])):
            terminalreporter.write_line(line)
