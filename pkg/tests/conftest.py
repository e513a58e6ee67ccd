import json

import pytest

from openbilliards.geometry import balls_scene, equilateral_scene, scene_to_dict

ACCEPTANCE_LINES: list[str] = []


@pytest.fixture(scope="session")
def eq_scene():
    return equilateral_scene()


@pytest.fixture(scope="session")
def two_ball():
    return balls_scene([(0, 0), (10, 0)], 1.0)


@pytest.fixture(scope="session")
def sym_scene():
    return balls_scene([(0, 5), (-3, 0), (3, 0)], 0.1)


@pytest.fixture(scope="session")
def scene_dir(tmp_path_factory, eq_scene, two_ball, sym_scene):
    d = tmp_path_factory.mktemp("scenes")
    scenes = {
        "eq.json": eq_scene,
        "two.json": two_ball,
        "sym.json": sym_scene,
        "eclipse.json": balls_scene([(0, 0), (4, 0), (2, 0.5)], 1.0),
        "tight.json": balls_scene([(0, 5), (-1.25, 0), (1.25, 0)], 0.1),
        "four.json": balls_scene([(0, 0, 0, 0), (10, 0, 0, 0), (0, 10, 0, 0), (0, 0, 10, 0)], 1.0),
    }
    for name, sc in scenes.items():
        (d / name).write_text(json.dumps(scene_to_dict(sc)))
    (d / "broken.json").write_text('{"dimension": 2,\n "obstacles": [\n')
    (d / "badfield.json").write_text('{"dimension": 2, "obstacles": [{"kind": "ball", "centre": [0, 0], "radii": [1]}]}')
    return d


@pytest.fixture
def acceptance():
    def record(number: int, ok: bool, detail: str):
        line = f"ACCEPTANCE {number:2d}: {'PASS' if ok else 'FAIL'}  {detail}"
        print(line)
        ACCEPTANCE_LINES.append(line)
        assert ok, line

    return record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
