"""Obstacle scenes: balls and axis-aligned ellipsoids in R^N.

Every obstacle is described through an implicit level function (negative
inside, zero on the boundary) and through its support function, which is
what the disjointness and no-eclipse checks operate on.
"""

from __future__ import annotations

import itertools
import json
import math
import warnings
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np
from scipy.optimize import minimize
from scipy.stats import qmc

from .errors import EclipseUndecidable, NonConvergence, SceneError, Violation

BALL = "ball"
ELLIPSOID = "ellipsoid"

CLEARANCE_MIN = 1e-6
ECLIPSE_TOL = 1e-6
LARGE_SCENE_WARN = 1e3


@dataclass(frozen=True)
class Obstacle:
    kind: str
    center: tuple[float, ...]
    radii: tuple[float, ...]

    def __post_init__(self):
        object.__setattr__(self, "center", tuple(float(c) for c in self.center))
        object.__setattr__(self, "radii", tuple(float(r) for r in self.radii))
        if self.kind not in (BALL, ELLIPSOID):
            raise SceneError(f"unknown obstacle kind {self.kind!r}")
        if len(self.center) < 2:
            raise SceneError("obstacle center must have at least 2 coordinates")
        expected = 1 if self.kind == BALL else len(self.center)
        if len(self.radii) != expected:
            raise SceneError(
                f"{self.kind} in R^{len(self.center)} needs {expected} radii, got {len(self.radii)}"
            )
        if not all(r > 0 and math.isfinite(r) for r in self.radii):
            raise SceneError("radii must be finite and strictly positive")
        if not all(math.isfinite(c) for c in self.center):
            raise SceneError("center coordinates must be finite")

    @classmethod
    def ball(cls, center: Sequence[float], radius: float) -> Obstacle:
        return cls(BALL, tuple(center), (radius,))

    @classmethod
    def ellipsoid(cls, center: Sequence[float], radii: Sequence[float]) -> Obstacle:
        return cls(ELLIPSOID, tuple(center), tuple(radii))

    @property
    def dim(self) -> int:
        return len(self.center)

    @cached_property
    def c(self) -> np.ndarray:
        return np.array(self.center)

    @cached_property
    def axes(self) -> np.ndarray:
        """Semi-axis lengths as a length-N vector (constant for balls)."""
        if self.kind == BALL:
            return np.full(self.dim, self.radii[0])
        return np.array(self.radii)

    @property
    def diameter(self) -> float:
        return 2.0 * max(self.radii)

    def point(self, u: np.ndarray) -> np.ndarray:
        """Boundary point c + diag(axes) u for a unit vector u."""
        return self.c + self.axes * u

    def normal_from_param(self, u: np.ndarray) -> np.ndarray:
        n = u / self.axes
        return n / np.linalg.norm(n, axis=-1, keepdims=True)


@dataclass(frozen=True)
class BoundaryPoint:
    obstacle_index: int
    position: np.ndarray = field(compare=False)
    outward_normal: np.ndarray = field(compare=False)


def level(obstacle: Obstacle, x) -> float:
    """Implicit function of the obstacle: < 0 inside, 0 on the boundary, > 0 outside.

    Balls use the signed distance. Ellipsoids use the scaled radial gauge
    min(a) * (|(x - c)/a| - 1), which reduces to the ball formula when all
    semi-axes agree.
    """
    y = np.asarray(x, dtype=float) - obstacle.c
    if obstacle.kind == BALL:
        return float(np.linalg.norm(y) - obstacle.radii[0])
    a = obstacle.axes
    return float(a.min() * (np.linalg.norm(y / a) - 1.0))


def level_gradient(obstacle: Obstacle, x) -> np.ndarray:
    y = np.asarray(x, dtype=float) - obstacle.c
    if obstacle.kind == BALL:
        return y / np.linalg.norm(y)
    a = obstacle.axes
    z = y / a
    return a.min() * (z / a) / np.linalg.norm(z)


def outward_normal(obstacle: Obstacle, x) -> np.ndarray:
    g = level_gradient(obstacle, x)
    return g / np.linalg.norm(g)


def support(obstacle: Obstacle, u: np.ndarray) -> np.ndarray:
    """Support function h(u) = max over the obstacle of <u, x>; u may be (..., N)."""
    u = np.asarray(u, dtype=float)
    return u @ obstacle.c + np.linalg.norm(u * obstacle.axes, axis=-1)


def _ellipsoid_projection(y: np.ndarray, a: np.ndarray, max_iter: int = 100) -> np.ndarray:
    # Closest point q = a^2 y / (a^2 + t) where F(t) = sum (a y / (a^2 + t))^2 - 1 = 0.
    a2 = a * a
    ay = a * y

    def F(t):
        return float(np.sum((ay / (a2 + t)) ** 2) - 1.0)

    def dF(t):
        return float(-2.0 * np.sum(ay**2 / (a2 + t) ** 3))

    lo = -float(a2.min())
    hi = math.sqrt(len(a)) * float(a.max()) * float(np.linalg.norm(y)) + float(a2.max())
    if F(hi) > 0:
        raise NonConvergence("ellipsoid projection: could not bracket the multiplier")
    short = a2 <= a2.min() * (1.0 + 1e-12)
    rest = ~short
    q_rest = a2[rest] * y[rest] / (a2[rest] + lo)
    fill = 1.0 - float(np.sum((q_rest / a[rest]) ** 2))
    if fill >= 0 and np.all(np.abs(y[short]) <= 1e-12 * a[short]) or F(lo * (1.0 - 1e-12)) < 0:
        # interior point near the shortest axis: the multiplier sits at -min(a^2)
        # and the shortest-axis components take up the slack
        q = np.empty_like(y)
        q[rest] = q_rest
        ys = y[short]
        w = ys / np.linalg.norm(ys) if np.linalg.norm(ys) > 0 else np.eye(len(ys))[0]
        q[short] = a[short] * w * math.sqrt(max(fill, 0.0))
        return q
    t = 0.0 if F(0.0) >= 0 else 0.5 * lo
    for _ in range(max_iter):
        f = F(t)
        if abs(f) < 1e-15:
            return a2 * y / (a2 + t)
        if f > 0:
            lo = max(lo, t)
        else:
            hi = min(hi, t)
        d = dF(t)
        t_new = t - f / d if d != 0 else 0.5 * (lo + hi)
        if not (lo < t_new < hi):
            t_new = 0.5 * (lo + hi)
        if abs(t_new - t) <= 1e-16 * max(1.0, abs(t)):
            return a2 * y / (a2 + t_new)
        t = t_new
    raise NonConvergence("ellipsoid projection did not converge in 100 iterations")


def project_to_boundary(obstacle: Obstacle, x, index: int = 0) -> BoundaryPoint:
    """Nearest boundary point to x (radial for balls, multiplier Newton for ellipsoids)."""
    y = np.asarray(x, dtype=float) - obstacle.c
    if np.linalg.norm(y) < 1e-12 * max(obstacle.radii):
        raise NonConvergence("cannot project the obstacle center onto its boundary")
    if obstacle.kind == BALL:
        pos = obstacle.c + obstacle.radii[0] * y / np.linalg.norm(y)
    else:
        q = _ellipsoid_projection(y, obstacle.axes)
        # re-normalize onto the surface to remove the last rounding residue
        u = q / obstacle.axes
        u /= np.linalg.norm(u)
        pos = obstacle.point(u)
    return BoundaryPoint(index, pos, outward_normal(obstacle, pos))


def reflect(v, normal) -> np.ndarray:
    """Specular reflection v - 2<v, n> n."""
    v = np.asarray(v, dtype=float)
    n = np.asarray(normal, dtype=float)
    return v - 2.0 * np.sum(v * n, axis=-1, keepdims=True) * n


@dataclass(frozen=True)
class Scene:
    """Ordered obstacles K_1..K_s (1-based in all user-facing output)."""

    obstacles: tuple[Obstacle, ...]

    def __post_init__(self):
        obs = tuple(self.obstacles)
        object.__setattr__(self, "obstacles", obs)
        if not obs:
            raise SceneError("scene has no obstacles")
        dims = {o.dim for o in obs}
        if len(dims) != 1:
            raise SceneError(f"obstacles live in different dimensions {sorted(dims)}")
        if self.enclosing_radius > LARGE_SCENE_WARN:
            warnings.warn(
                f"enclosing radius {self.enclosing_radius:g} exceeds {LARGE_SCENE_WARN:g}; "
                "absolute tolerances assume O(1)-O(10) scenes",
                stacklevel=2,
            )

    @property
    def s(self) -> int:
        return len(self.obstacles)

    @property
    def dim(self) -> int:
        return self.obstacles[0].dim

    def __getitem__(self, symbol: int) -> Obstacle:
        """Obstacle for a 1-based symbol."""
        return self.obstacles[symbol - 1]

    @cached_property
    def enclosing_radius(self) -> float:
        return enclosing_radius(self)

    @cached_property
    def centers(self) -> np.ndarray:
        return np.array([o.center for o in self.obstacles])

    @cached_property
    def axes(self) -> np.ndarray:
        return np.array([o.axes for o in self.obstacles])

    def transformed(self, rotation: np.ndarray) -> Scene:
        """Rigidly rotated copy; only valid for balls (ellipsoids are axis-aligned)."""
        if any(o.kind != BALL for o in self.obstacles):
            raise SceneError("rotation of axis-aligned ellipsoids is not representable")
        return Scene(tuple(Obstacle.ball(rotation @ o.c, o.radii[0]) for o in self.obstacles))

    def scaled(self, factor: float) -> Scene:
        """Copy with all centers scaled by `factor`, radii unchanged."""
        return Scene(
            tuple(Obstacle(o.kind, tuple(factor * o.c), o.radii) for o in self.obstacles)
        )


def enclosing_radius(scene: Scene) -> float:
    return max(float(np.linalg.norm(o.c)) + max(o.radii) for o in scene.obstacles)


def sample_boundary(obstacle: Obstacle, n: int, rng: np.random.Generator) -> np.ndarray:
    u = rng.standard_normal((n, obstacle.dim))
    u /= np.linalg.norm(u, axis=1, keepdims=True)
    return obstacle.point(u)


# ---------------------------------------------------------------- validation


def unit_directions(dim: int, count: int, seed: int = 0) -> np.ndarray:
    """Deterministic, well-spread unit vectors (uniform angles in 2D, Sobol otherwise)."""
    if dim == 2:
        theta = (np.arange(count) + 0.5) * (2.0 * np.pi / count)
        return np.column_stack([np.cos(theta), np.sin(theta)])
    sampler = qmc.Sobol(d=dim, scramble=True, seed=seed)
    m = max(1, math.ceil(math.log2(count)))
    pts = sampler.random_base2(m)[:count]
    from scipy.stats import norm

    g = norm.ppf(np.clip(pts, 1e-12, 1 - 1e-12))
    return g / np.linalg.norm(g, axis=1, keepdims=True)


def _best_separation(h_left, h_right, dim: int, samples: int = 1024) -> float:
    """max over unit u of  -h_right(-u) - h_left(u)  (sampled, then locally refined)."""
    dirs = unit_directions(dim, samples)
    vals = -h_right(-dirs) - h_left(dirs)
    best = int(np.argmax(vals))

    def neg(w):
        u = w / np.linalg.norm(w)
        return float(h_left(u) + h_right(-u))

    res = minimize(neg, dirs[best], method="Nelder-Mead", options={"xatol": 1e-12, "fatol": 1e-14})
    return max(float(vals[best]), -float(res.fun))


def pair_clearance(a: Obstacle, b: Obstacle) -> float:
    """Distance between two disjoint obstacles (negative when they overlap, balls exact)."""
    if a.kind == BALL and b.kind == BALL:
        return float(np.linalg.norm(a.c - b.c) - a.radii[0] - b.radii[0])
    return _best_separation(lambda u: support(a, u), lambda u: support(b, u), a.dim)


def check_disjoint(scene: Scene) -> list[tuple[int, int, float]]:
    """Pairs (i, j, clearance) with clearance below the rejection threshold."""
    bad = []
    for i, j in itertools.combinations(range(scene.s), 2):
        gap = pair_clearance(scene.obstacles[i], scene.obstacles[j])
        if gap < CLEARANCE_MIN:
            bad.append((i + 1, j + 1, gap))
    return bad


def _segment_distance(p, a, b) -> float:
    ab = b - a
    t = np.clip(np.dot(p - a, ab) / np.dot(ab, ab), 0.0, 1.0)
    return float(np.linalg.norm(p - (a + t * ab)))


@dataclass
class EclipseReport:
    passed: bool
    approximate: bool
    min_clearance: float
    clearances: dict = field(default_factory=dict)
    failing: list = field(default_factory=list)


def triple_clearance(scene: Scene, i: int, j: int, k: int) -> tuple[float, bool]:
    """Clearance between conv(K_i u K_j) and K_k (0-based), plus an 'approximate' flag."""
    oi, oj, ok = scene.obstacles[i], scene.obstacles[j], scene.obstacles[k]
    if oi.kind == BALL and oj.kind == BALL and ok.kind == BALL:
        d = _segment_distance(ok.c, oi.c, oj.c)
        return d - ok.radii[0] - max(oi.radii[0], oj.radii[0]), False

    def h_hull(u):
        return np.maximum(support(oi, u), support(oj, u))

    return _best_separation(h_hull, lambda u: support(ok, u), scene.dim), True


def check_no_eclipse(scene: Scene) -> EclipseReport:
    """Certify that no obstacle meets the convex hull of any two others.

    All-ball triples use the capsule bound (exact and slightly conservative);
    triples involving an ellipsoid use a sampled support-function separation.
    Raises Violation listing every failing triple.
    """
    if scene.s < 3:
        raise SceneError(f"no-eclipse check needs s >= 3 obstacles, scene has {scene.s}")
    report = EclipseReport(True, False, math.inf)
    undecided = []
    for i, j in itertools.combinations(range(scene.s), 2):
        for k in range(scene.s):
            if k in (i, j):
                continue
            gap, approx = triple_clearance(scene, i, j, k)
            key = (i + 1, j + 1, k + 1)
            report.clearances[key] = gap
            report.approximate |= approx
            report.min_clearance = min(report.min_clearance, gap)
            if approx and abs(gap) <= ECLIPSE_TOL:
                undecided.append(key)
            elif gap <= 0:
                report.failing.append(key)
    if report.failing:
        report.passed = False
        raise Violation(report.failing)
    if undecided:
        raise EclipseUndecidable(undecided, min(abs(report.clearances[t]) for t in undecided))
    return report


def validate_scene(scene: Scene) -> EclipseReport:
    """Full validity gate: s >= 3, pairwise clearance, no-eclipse."""
    bad = check_disjoint(scene)
    if bad:
        i, j, gap = bad[0]
        raise SceneError(f"obstacles {i} and {j} are not disjoint (clearance {gap:.3g})")
    return check_no_eclipse(scene)


# ------------------------------------------------------------- scene files

_TOP_FIELDS = {"dimension", "obstacles"}
_OBSTACLE_FIELDS = {"kind", "center", "radii"}


def scene_from_dict(data: dict) -> Scene:
    if not isinstance(data, dict):
        raise SceneError("scene document must be a JSON object")
    unknown = set(data) - _TOP_FIELDS
    if unknown:
        raise SceneError(f"unknown top-level field(s): {sorted(unknown)}")
    missing = _TOP_FIELDS - set(data)
    if missing:
        raise SceneError(f"missing field(s): {sorted(missing)}")
    dim = data["dimension"]
    if not isinstance(dim, int) or isinstance(dim, bool) or dim < 2:
        raise SceneError("field 'dimension' must be an integer >= 2")
    if not isinstance(data["obstacles"], list):
        raise SceneError("field 'obstacles' must be an array")
    obstacles = []
    for n, item in enumerate(data["obstacles"]):
        where = f"obstacles[{n}]"
        if not isinstance(item, dict):
            raise SceneError(f"{where}: expected an object")
        unknown = set(item) - _OBSTACLE_FIELDS
        if unknown:
            raise SceneError(f"{where}: unknown field(s) {sorted(unknown)}")
        missing = _OBSTACLE_FIELDS - set(item)
        if missing:
            raise SceneError(f"{where}: missing field(s) {sorted(missing)}")
        center, radii = item["center"], item["radii"]
        for name, arr in (("center", center), ("radii", radii)):
            if not isinstance(arr, list) or not all(
                isinstance(v, (int, float)) and not isinstance(v, bool) for v in arr
            ):
                raise SceneError(f"{where}.{name}: expected an array of numbers")
        if len(center) != dim:
            raise SceneError(f"{where}.center: expected {dim} coordinates, got {len(center)}")
        try:
            obstacles.append(Obstacle(item["kind"], tuple(center), tuple(radii)))
        except SceneError as exc:
            raise SceneError(f"{where}: {exc}") from None
    return Scene(tuple(obstacles))


def scene_to_dict(scene: Scene) -> dict:
    return {
        "dimension": scene.dim,
        "obstacles": [
            {"kind": o.kind, "center": list(o.center), "radii": list(o.radii)}
            for o in scene.obstacles
        ],
    }


def load_scene(path: str | Path) -> Scene:
    text = Path(path).read_text(encoding="utf-8")
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise SceneError(f"{path}: line {exc.lineno} column {exc.colno}: {exc.msg}") from None
    return scene_from_dict(data)


# ------------------------------------------------------------ stock scenes


def equilateral_scene(side: float = 10.0, radius: float = 1.0) -> Scene:
    """Three equal balls on an equilateral triangle centred at the origin."""
    circum = side / math.sqrt(3.0)
    angles = [math.pi / 2 + 2 * math.pi * k / 3 for k in range(3)]
    return Scene(
        tuple(Obstacle.ball((circum * math.cos(t), circum * math.sin(t)), radius) for t in angles)
    )


def balls_scene(centers: Iterable[Sequence[float]], radius: float) -> Scene:
    return Scene(tuple(Obstacle.ball(c, radius) for c in centers))
