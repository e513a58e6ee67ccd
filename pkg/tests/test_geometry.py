import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from openbilliards.errors import NonConvergence, SceneError, Violation
from openbilliards.geometry import (
    Obstacle,
    Scene,
    balls_scene,
    check_disjoint,
    check_no_eclipse,
    enclosing_radius,
    equilateral_scene,
    level,
    load_scene,
    outward_normal,
    project_to_boundary,
    reflect,
    scene_from_dict,
    scene_to_dict,
    support,
    unit_directions,
    validate_scene,
)

coord = st.floats(-5, 5, allow_nan=False)
vec2 = st.tuples(coord, coord).map(np.array)


def test_level_examples():
    ball = Obstacle.ball((0, 0), 1)
    assert level(ball, (1, 0)) == 0
    assert level(ball, (2, 0)) == pytest.approx(1)
    assert level(Obstacle.ellipsoid((0, 0), (2, 1)), (2, 0)) == pytest.approx(0, abs=1e-15)


def test_ellipsoid_level_reduces_to_ball():
    e = Obstacle.ellipsoid((1, 2), (3, 3))
    b = Obstacle.ball((1, 2), 3)
    for x in [(5, 5), (1, 2.5), (-4, 0)]:
        assert level(e, x) == pytest.approx(level(b, x))


def test_project_ball_examples():
    bp = project_to_boundary(Obstacle.ball((0, 0), 1), (3, 0))
    assert np.allclose(bp.position, (1, 0))
    assert np.allclose(bp.outward_normal, (1, 0))
    bp = project_to_boundary(Obstacle.ball((1, 1), 0.5), (1, 3))
    assert np.allclose(bp.position, (1, 1.5))


def test_project_ellipse_matches_dense_sample():
    # oracle: nearest of 2e6 boundary samples of the ellipse x^2/4 + y^2 = 1
    ell = Obstacle.ellipsoid((0, 0), (2, 1))
    x = np.array([3.0, 0.1])
    bp = project_to_boundary(ell, x)
    assert np.allclose(bp.position, (1.99889094, 0.03329787), atol=1e-5)
    t = np.linspace(0, 2 * np.pi, 200_001)
    samples = np.column_stack([2 * np.cos(t), np.sin(t)])
    assert np.linalg.norm(x - bp.position) <= np.linalg.norm(samples - x, axis=1).min() + 1e-12
    # the offset is along the normal
    d = (x - bp.position) / np.linalg.norm(x - bp.position)
    assert np.allclose(d, bp.outward_normal, atol=1e-9)


def test_project_center_fails():
    with pytest.raises(NonConvergence):
        project_to_boundary(Obstacle.ball((0, 0), 1), (0, 0))


@settings(max_examples=60, deadline=None)
@given(
    st.tuples(st.floats(0.3, 3), st.floats(0.3, 3), st.floats(0.3, 3)),
    st.tuples(st.floats(-6, 6), st.floats(-6, 6), st.floats(-6, 6)),
)
def test_projection_lands_on_surface(radii, x):
    x = np.array(x)
    if np.linalg.norm(x) < 1e-3:
        return
    ell = Obstacle.ellipsoid((0, 0, 0), radii)
    bp = project_to_boundary(ell, x)
    assert abs(level(ell, bp.position)) < 1e-10
    off = x - bp.position
    if np.linalg.norm(off) > 1e-6:
        # first-order optimality: x - q is parallel to the normal
        cross = off - np.dot(off, bp.outward_normal) * bp.outward_normal
        assert np.linalg.norm(cross) < 1e-7 * max(1.0, np.linalg.norm(off))


def test_reflect_examples():
    assert np.allclose(reflect((1, 0), (-1, 0)), (-1, 0))
    assert np.allclose(reflect((1, 0), (0, 1)), (1, 0))
    r = math.sqrt(2) / 2
    assert np.allclose(reflect((r, -r), (0, 1)), (r, r))


@given(vec2, st.floats(0, 2 * np.pi))
def test_reflect_is_isometric_involution(v, theta):
    n = np.array([np.cos(theta), np.sin(theta)])
    w = reflect(v, n)
    assert np.linalg.norm(w) == pytest.approx(np.linalg.norm(v), abs=1e-12)
    assert np.allclose(reflect(w, n), v, atol=1e-12)
    assert np.dot(w, n) == pytest.approx(-np.dot(v, n), abs=1e-12)


def test_outward_normal_ellipse_axis():
    ell = Obstacle.ellipsoid((0, 0), (2, 1))
    assert np.allclose(outward_normal(ell, (0, 1)), (0, 1))


def test_support_of_ball():
    ball = Obstacle.ball((1, 2), 0.5)
    assert support(ball, np.array([1.0, 0.0])) == pytest.approx(1.5)


def test_no_eclipse_equilateral_passes(eq_scene):
    rep = check_no_eclipse(eq_scene)
    assert rep.passed and not rep.approximate
    # centre-to-segment distance is 5*sqrt(3), minus two radii
    assert rep.min_clearance == pytest.approx(5 * math.sqrt(3) - 2)


def test_no_eclipse_failing_triple():
    sc = balls_scene([(0, 0), (4, 0), (2, 0.5)], 1.0)
    with pytest.raises(Violation) as exc:
        check_no_eclipse(sc)
    assert (1, 2, 3) in exc.value.triples


def test_no_eclipse_needs_three(two_ball):
    with pytest.raises(SceneError):
        check_no_eclipse(two_ball)


def test_no_eclipse_with_ellipsoids_is_flagged_approximate():
    sc = Scene(
        (
            Obstacle.ellipsoid((0, 6), (1.5, 0.7)),
            Obstacle.ellipsoid((-5, -3), (0.8, 1.2)),
            Obstacle.ball((5, -3), 1.0),
        )
    )
    rep = validate_scene(sc)
    assert rep.passed and rep.approximate


def test_overlapping_pair_detected():
    sc = balls_scene([(0, 0), (1.5, 0), (0, 10)], 1.0)
    assert check_disjoint(sc)[0][:2] == (1, 2)
    with pytest.raises(SceneError):
        validate_scene(sc)


def test_enclosing_radius_examples(eq_scene):
    assert enclosing_radius(Scene((Obstacle.ball((3, 4), 1),))) == pytest.approx(6)
    assert balls_scene([(-1, 0), (1, 0)], 0.5).enclosing_radius == pytest.approx(1.5)
    # oracle: largest norm over 1e4 boundary samples per obstacle
    rng = np.random.default_rng(0)
    sampled = max(
        np.linalg.norm(c + np.column_stack([np.cos(a), np.sin(a)]), axis=1).max()
        for c, a in zip(eq_scene.centers, rng.uniform(0, 2 * np.pi, (3, 10_000)))
    )
    assert eq_scene.enclosing_radius == pytest.approx(10 / math.sqrt(3) + 1)
    assert 0 <= eq_scene.enclosing_radius - sampled < 1e-6


def test_invalid_obstacles_rejected():
    with pytest.raises(SceneError):
        Obstacle.ball((0, 0), -1)
    with pytest.raises(SceneError):
        Obstacle.ellipsoid((0, 0), (1, 2, 3))
    with pytest.raises(SceneError):
        Obstacle("cube", (0, 0), (1,))
    with pytest.raises(SceneError):
        Scene((Obstacle.ball((0, 0), 1), Obstacle.ball((0, 0, 5), 1)))


def test_scene_is_one_based(eq_scene):
    assert eq_scene[1] is eq_scene.obstacles[0]
    assert eq_scene.s == 3 and eq_scene.dim == 2


def test_large_scene_warns():
    with pytest.warns(UserWarning):
        balls_scene([(0, 0), (5000, 0), (0, 5000)], 1.0)


def test_scene_round_trip(eq_scene, tmp_path):
    sc = Scene((Obstacle.ellipsoid((0, 6), (1.5, 0.7)), *eq_scene.obstacles[1:]))
    assert scene_from_dict(json.loads(json.dumps(scene_to_dict(sc)))) == sc
    p = tmp_path / "s.json"
    p.write_text(json.dumps(scene_to_dict(eq_scene)))
    assert load_scene(p) == eq_scene


def test_load_scene_diagnostics(scene_dir):
    with pytest.raises(SceneError, match="line"):
        load_scene(scene_dir / "broken.json")
    with pytest.raises(SceneError, match=r"obstacles\[0\].*centre"):
        load_scene(scene_dir / "badfield.json")
    with pytest.raises(SceneError, match="dimension"):
        scene_from_dict({"dimension": "two", "obstacles": []})


def test_rotated_scene_keeps_clearances(eq_scene):
    c, s = np.cos(0.7), np.sin(0.7)
    rot = eq_scene.transformed(np.array([[c, -s], [s, c]]))
    assert check_no_eclipse(rot).min_clearance == pytest.approx(check_no_eclipse(eq_scene).min_clearance)


def test_unit_directions_deterministic():
    a = unit_directions(3, 256, seed=4)
    assert np.allclose(np.linalg.norm(a, axis=1), 1)
    assert np.array_equal(a, unit_directions(3, 256, seed=4))
    d2 = unit_directions(2, 8)
    assert np.allclose(np.linalg.norm(d2, axis=1), 1)


def test_project_interior_point_on_long_axis():
    # inside the ellipse on its long axis the nearest boundary point leaves the axis
    ell = Obstacle.ellipsoid((0, 0), (2, 1))
    x = np.array([0.5, 0.0])
    bp = project_to_boundary(ell, x)
    t = np.linspace(0, 2 * np.pi, 200_001)
    samples = np.column_stack([2 * np.cos(t), np.sin(t)])
    best = np.linalg.norm(samples - x, axis=1).min()
    assert np.linalg.norm(x - bp.position) == pytest.approx(best, abs=1e-9)
    assert bp.position[0] == pytest.approx(2 / 3)
