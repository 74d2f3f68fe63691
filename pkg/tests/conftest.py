import numpy as np
import pytest

from blnm.net import ArchitectureSpec, build


REFERENCE_SPEC = dict(n_par=7, n_layers=7, n_neurons=19, n_states=10, n_physical=9, disentanglement=2)


@pytest.fixture
def reference_spec():
    return ArchitectureSpec(**REFERENCE_SPEC)


@pytest.fixture
def small_spec():
    return ArchitectureSpec(n_par=3, n_layers=2, n_neurons=4, n_states=3, n_physical=2,
                            disentanglement=1)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def random_batch(spec, n, rng):
    t = rng.uniform(0, 1, n)
    theta = rng.uniform(-1, 1, (n, spec.n_par))
    y = rng.uniform(-1, 1, (n, spec.n_physical))
    return t, theta, y


@pytest.fixture
def small_net(small_spec):
    return build(small_spec, seed=7)


# acceptance criteria register here; the summary prints one line per criterion
ACCEPTANCE = {}
N_CRITERIA = 10


def report_criterion(number, title, passed, detail):
    ACCEPTANCE[number] = (title, bool(passed), detail)
    print(f"criterion {number:2d} {'PASS' if passed else 'FAIL'}  {title}: {detail}")


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.write_sep("=", "acceptance criteria")
    for number in range(1, N_CRITERIA + 1):
        title, passed, detail = ACCEPTANCE.get(number, ("", False, "not reached"))
        terminalreporter.write_line(
            f"criterion {number:2d} {'PASS' if passed else 'FAIL'}  {title}: {detail}")
