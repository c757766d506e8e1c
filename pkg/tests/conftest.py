import math
import sys

import numpy as np
import pytest

from vecset import SimParams, VectorSet


def naive_cosine(a, b):
    """Scalar-loop cosine used as an independent reference."""
    dot = sum(float(x) * float(y) for x, y in zip(a, b))
    na = math.sqrt(sum(float(x) ** 2 for x in a))
    nb = math.sqrt(sum(float(y) ** 2 for y in b))
    return max(-1.0, min(1.0, dot / (na * nb)))


def naive_similarity(A, V, w_max, w_avg):
    ps = [naive_cosine(a, v) for a in A.members for v in V.members]
    return (w_max * max(ps) + w_avg * sum(ps) / len(ps)) / (w_max + w_avg)


def naive_top_u(A, database, u, w_max=1.0, w_avg=1.0):
    scored = [(naive_similarity(A, V, w_max, w_avg), V.id) for V in database]
    scored.sort(key=lambda t: (-t[0], t[1]))
    return scored[:u]


def random_sets(rng, count, dim, cards, start_id=0):
    """``count`` random Gaussian sets; ``cards`` is an int or an inclusive (lo, hi) range."""
    out = []
    for s in range(count):
        card = cards if isinstance(cards, int) else int(rng.integers(cards[0], cards[1] + 1))
        out.append(VectorSet(start_id + s, rng.standard_normal((card, dim))))
    return out


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def unit_params():
    return SimParams(1.0, 1.0, 2, 2)


def pytest_terminal_summary(terminalreporter):
    """Repeat the acceptance verdicts at the end of the run, one line each."""
    mod = sys.modules.get("test_acceptance")
    lines = getattr(mod, "RESULTS", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for key in sorted(lines):
            terminalreporter.write_line(lines[key])
