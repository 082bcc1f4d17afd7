import numpy as np
import pytest

from mmwave_assoc.allocation import Association, Direct, Relayed
from mmwave_assoc.channel import RateMatrix


def random_rates(rng, m, n, k, p_zero=0.0, low=0.2, high=8.0):
    """Random rate matrix; each entry is zero with probability ``p_zero``."""
    def draw(shape):
        a = rng.uniform(low, high, size=shape)
        return np.where(rng.random(shape) < p_zero, 0.0, a)
    return RateMatrix(draw((m, n)), draw((m, k)), draw((n, k)))


def random_association(rng, m, n, k, p_relay=0.5):
    relays = [int(rng.integers(k)) for _ in range(n)]
    free = list(range(n))
    rng.shuffle(free)
    clients = []
    for _ in range(m):
        if free and rng.random() < p_relay:
            j = free.pop()
            clients.append(Relayed(j, relays[j]))
        else:
            clients.append(Direct(int(rng.integers(k))))
    return Association(tuple(clients), tuple(relays), k)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


# one line per acceptance criterion, printed after the test session
ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
