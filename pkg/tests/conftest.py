import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from lexrank.catalog import rulebook_from_specs

settings.register_profile("default", deadline=None, suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


def random_specs(rng, n_rules, dim, kinds=("quad", "halfspace", "ball", "box")):
    """Random catalog rule specs; hinge rules centred near the origin."""
    specs = []
    for _ in range(n_rules):
        kind = kinds[rng.integers(len(kinds))]
        if kind == "quad":
            specs.append({"kind": "quad", "center": rng.normal(size=dim).tolist()})
        elif kind == "halfspace":
            n = rng.normal(size=dim)
            specs.append({"kind": "halfspace", "normal": (n / np.linalg.norm(n)).tolist(), "offset": float(rng.normal())})
        elif kind == "ball":
            specs.append({"kind": "ball", "center": rng.normal(size=dim).tolist(), "radius": float(rng.uniform(0.2, 1.0))})
        else:
            specs.append(
                {"kind": "box", "center": rng.normal(size=dim).tolist(), "half_widths": rng.uniform(0.1, 0.8, size=dim).tolist()}
            )
    return specs


def random_rulebook(rng, n_rules, dim, **kw):
    return rulebook_from_specs(random_specs(rng, n_rules, dim, **kw), dim, bounds=[[-3.0, 3.0]] * dim)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


_ACCEPTANCE = {}


def record_acceptance(n: int, ok: bool, detail: str) -> None:
    _ACCEPTANCE[n] = f"criterion {n}: {'PASS' if ok else 'FAIL'}  {detail}"


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for n in sorted(_ACCEPTANCE):
            terminalreporter.write_line(_ACCEPTANCE[n])
