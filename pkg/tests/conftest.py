import numpy as np
import pytest
from PIL import Image

from glassfrac.mesh_gen import ParticleSet, build_neighbor_index, triangulate
from glassfrac.stress_sim import ImpactSpec

# Five particles: one ahead of the impact vector, one further on at 36.87
# degrees, two slightly behind and off-axis.
FIXTURE_POINTS = [(2.0, 2.0), (3.0, 2.0), (3.8, 2.6), (1.8, 3.0), (1.8, 1.0)]


@pytest.fixture
def five_node():
    ps = ParticleSet(np.array(FIXTURE_POINTS), 6.0, 5.0)
    mesh = triangulate(ps)
    idx = build_neighbor_index(ps)
    impact = ImpactSpec(
        (2.0, 2.0), force=500.0, impact_vector=(1.0, 0.0),
        critical_stress=300.0, safety_factor=1.0, stop_threshold=400.0,
    )
    return ps, mesh, idx, impact


@pytest.fixture
def image_dir(tmp_path):
    """Three small RGB images with distinct content."""
    d = tmp_path / "imgs"
    d.mkdir()
    rng = np.random.default_rng(3)
    for name in ("b.png", "a.png", "c.png"):
        arr = rng.integers(0, 256, size=(60, 120, 3), dtype=np.uint8)
        Image.fromarray(arr).save(d / name)
    return d


# --- acceptance reporting: one PASS/FAIL line per criterion -----------------

_CRITERIA: dict[int, dict] = {}


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    mark = item.get_closest_marker("criterion")
    if mark is None or not (rep.when == "call" or rep.failed):
        return
    number, title = mark.args
    entry = _CRITERIA.setdefault(number, {"title": title, "ok": True, "detail": []})
    entry["ok"] = entry["ok"] and rep.passed
    entry["detail"] += [str(v) for k, v in item.user_properties if k == "detail"]


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.write_sep("=", "acceptance criteria")
    for number in sorted(_CRITERIA):
        e = _CRITERIA[number]
        detail = "; ".join(dict.fromkeys(e["detail"]))
        status = "PASS" if e["ok"] else "FAIL"
        terminalreporter.write_line(f"{status} {number:>2}. {e['title']}" + (f" [{detail}]" if detail else ""))
