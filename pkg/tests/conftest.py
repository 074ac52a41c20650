import os
import sys

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from nlneumann import Params, build_mesh, build_quad_table

sys.path.insert(0, os.path.dirname(__file__))

settings.register_profile("default", deadline=None, max_examples=25,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))

_TABLES = {}


def table_for(p, s, n_interior=8, R=1.0, n_exterior=2, omega=(0.0, 1.0), **kw):
    """Session-wide cache of quadrature tables; building one costs up to a second."""
    key = (p, s, n_interior, R, n_exterior, omega, tuple(sorted(kw.items())))
    if key not in _TABLES:
        mesh = build_mesh(omega, n_interior, R, n_exterior)
        _TABLES[key] = build_quad_table(mesh, Params(p, s, **kw))
    return _TABLES[key]


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


# criterion number -> "PASS/FAIL ..." line, filled by test_acceptance
ACCEPTANCE = {}


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for k in sorted(ACCEPTANCE):
            terminalreporter.write_line(ACCEPTANCE[k])
