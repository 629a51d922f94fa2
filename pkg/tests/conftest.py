import math
import warnings

import pytest

from repeller.construction import Params, build_scales
from repeller.inverse import build_tree
from repeller.xnum import XComplex


def mid_annulus_point(sc, k, theta):
    """Point at the log-radius midpoint of A_k."""
    return XComplex.from_polar(0.5 * (sc.log2_r(k) + sc.log2_s(k)), theta)


@pytest.fixture(scope="session")
def p2000():
    return Params(C=2000.0, N=3)


@pytest.fixture(scope="session")
def sc2000(p2000):
    return build_scales(p2000)


@pytest.fixture(scope="session")
def p2000n5():
    return Params(C=2000.0, N=5)


@pytest.fixture(scope="session")
def sc2000n5(p2000n5):
    return build_scales(p2000n5)


@pytest.fixture(scope="session")
def tree5(p2000, sc2000):
    return build_tree(p2000, sc2000, mid_annulus_point(sc2000, 1, 0.7), 5)


@pytest.fixture(scope="session")
def tree5_alt(p2000, sc2000):
    return build_tree(p2000, sc2000, XComplex.from_complex(3 + 2j), 5)


@pytest.fixture(scope="session")
def tree5_big_c():
    p = Params(C=1e5, N=3)
    sc = build_scales(p)
    return build_tree(p, sc, mid_annulus_point(sc, 1, 0.7), 5)


@pytest.fixture(scope="session")
def tree3(p2000, sc2000):
    return build_tree(p2000, sc2000, XComplex.from_complex(1.0), 3)


@pytest.fixture
def quiet():
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        yield


# acceptance results: criterion number -> list of (part, passed, detail)
ACCEPTANCE = {}
ACCEPTANCE_TITLES = {
    1: "inequality suite",
    2: "preimage counting",
    3: "pressure ceiling",
    4: "dimension bounds",
    5: "escape certification",
    6: "covering decay",
    7: "numerics",
    8: "determinism",
}


def record(criterion, part, passed, detail=""):
    ACCEPTANCE.setdefault(criterion, []).append((part, bool(passed), detail))
    return passed


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n, title in ACCEPTANCE_TITLES.items():
        parts = ACCEPTANCE.get(n)
        if not parts:
            terminalreporter.write_line(f"criterion {n} ({title}): NOT RUN")
            continue
        status = "PASS" if all(ok for _, ok, _ in parts) else "FAIL"
        detail = "; ".join(f"{part} {'ok' if ok else 'FAILED'}{': ' + d if d else ''}" for part, ok, d in parts)
        terminalreporter.write_line(f"criterion {n} ({title}): {status} | {detail}")
