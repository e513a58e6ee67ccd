"""Rotation vectors, Birkhoff averages and convex approximations of the rotation set.

Two independent routes to the rotation set are provided:

* ``approximate_G`` collects rotation vectors of all periodic codes up to a
  period bound (each one a solved closed chain);
* ``cycle_rotation_set`` tabulates a locally constant observable on blocks
  of length 2m+1 and averages it over every simple cycle of the block graph,
  which yields that observable's rotation set exactly.
"""

from __future__ import annotations

import itertools
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import networkx as nx
import numpy as np

from .errors import BilliardError, BudgetExceeded, CycleBudgetExceeded, GraphNotStronglyConnected
from .geometry import Scene, unit_directions
from .orbit_solver import DEFAULT_TOL, solve_periodic, window_point
from .symbolic import BlockAlphabet, PeriodicCode, enumerate_periodic, format_code

DEDUP_TOL = 1e-9
DEFAULT_DIRECTIONS = 4096
EDGE_BUDGET = 100_000
CYCLE_BUDGET = 1_000_000


@dataclass(frozen=True)
class RotationVector:
    value: np.ndarray = field(compare=False)
    source: str
    detail: str = ""


@dataclass
class RotationSetApprox:
    """A finite vertex cloud standing in for its convex hull."""

    vertices: np.ndarray
    generator: str
    labels: list = field(default_factory=list)

    def __post_init__(self):
        self.vertices = np.atleast_2d(np.asarray(self.vertices, dtype=float))

    def __len__(self):
        return len(self.vertices)

    @property
    def dim(self) -> int:
        return self.vertices.shape[1]

    def support(self, directions: np.ndarray) -> np.ndarray:
        """h(u) = max over vertices of <u, v>, for each row u."""
        return (np.atleast_2d(directions) @ self.vertices.T).max(axis=1)


def periodic_stream(code: PeriodicCode) -> Iterable[int]:
    return itertools.cycle(code.block)


def rotation_of_periodic(scene: Scene, code: PeriodicCode, tol: float = DEFAULT_TOL) -> RotationVector:
    """Mean of the reflection points over one period."""
    chain = solve_periodic(scene, code, tol=tol)
    return RotationVector(chain.mean(), "periodic", format_code(code))


def birkhoff_average(
    scene: Scene,
    symbols: Iterable[int],
    n: int,
    window: int,
    truncate_start: bool = False,
    tol: float = DEFAULT_TOL,
) -> RotationVector:
    """(1/n) * sum of windowed observable values along the first n shifts.

    By default the i-th term is centred at stream position i + window, so the
    stream must supply n + 2*window symbols. With ``truncate_start`` the i-th
    term is centred at position i and its left window is cut at the start of
    the stream (n + window symbols needed).
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    need = n + window if truncate_start else n + 2 * window
    seq = tuple(itertools.islice(iter(symbols), need))
    if len(seq) < need:
        raise ValueError(f"stream supplied {len(seq)} symbols, {need} needed")
    total = np.zeros(scene.dim)
    for i in range(n):
        if truncate_start:
            lo = max(0, i - window)
            total += window_point(scene, seq[lo : i + window + 1], i - lo, tol)
        else:
            total += window_point(scene, seq[i : i + 2 * window + 1], window, tol)
    return RotationVector(total / n, "birkhoff", f"n={n} window={window}")


def _dedup(points: Sequence[np.ndarray], labels: Sequence[str], tol: float = DEDUP_TOL):
    kept: list[np.ndarray] = []
    kept_labels = []
    for p, lab in zip(points, labels):
        if kept and np.min(np.max(np.abs(np.array(kept) - p), axis=1)) <= tol:
            continue
        kept.append(p)
        kept_labels.append(lab)
    return np.array(kept), kept_labels


def periodic_rotation_vectors(
    scene: Scene,
    max_period: int,
    tol: float = DEFAULT_TOL,
    threads: int = 1,
    symbols: Sequence[int] | None = None,
):
    """(code, rotation vector or None) in canonical enumeration order."""
    codes = list(enumerate_periodic(scene.s, max_period))
    if symbols is not None:
        allowed = set(symbols)
        codes = [c for c in codes if set(c.block) <= allowed]

    def one(code):
        try:
            return rotation_of_periodic(scene, code, tol).value
        except BilliardError as exc:
            warnings.warn(f"solve failed for {format_code(code)}: {exc}", stacklevel=3)
            return None

    if threads > 1:
        with ThreadPoolExecutor(threads) as pool:
            values = list(pool.map(one, codes))
    else:
        values = [one(c) for c in codes]
    return list(zip(codes, values))


def approximate_G(
    scene: Scene,
    max_period: int,
    tol: float = DEFAULT_TOL,
    threads: int = 1,
    symbols: Sequence[int] | None = None,
) -> RotationSetApprox:
    """Rotation vectors of every periodic code up to `max_period`, deduplicated."""
    if max_period < 2:
        raise ValueError("max_period must be >= 2")
    pairs = [(c, v) for c, v in periodic_rotation_vectors(scene, max_period, tol, threads, symbols) if v is not None]
    if not pairs:
        raise BilliardError("no periodic code could be solved")
    verts, labels = _dedup([v for _, v in pairs], [format_code(c) for c, _ in pairs])
    return RotationSetApprox(verts, f"periodic max_period={max_period}", labels)


def hausdorff(a: RotationSetApprox, b: RotationSetApprox, directions: int = DEFAULT_DIRECTIONS, seed: int = 0) -> float:
    """Sup-norm gap of the two support functions over deterministic directions."""
    if len(a) == 0 or len(b) == 0:
        raise ValueError("vertex clouds must be nonempty")
    if directions < 100:
        raise ValueError("use at least 100 directions")
    if a.dim != b.dim:
        raise ValueError("dimension mismatch")
    u = unit_directions(a.dim, directions, seed)
    return float(np.max(np.abs(a.support(u) - b.support(u))))


# -------------------------------------------------------------- cycle oracle


@dataclass
class EdgeObservable:
    """Windowed observable tabulated on all admissible blocks of length 2m+1."""

    m: int
    alphabet: BlockAlphabet
    table: np.ndarray

    def value(self, block: Sequence[int]) -> np.ndarray:
        return self.table[self.alphabet.id(block)]

    def periodic_average(self, code: PeriodicCode) -> np.ndarray:
        """Rotation vector of `code` for this locally constant observable."""
        L = 2 * self.m + 1
        ids = [self.alphabet.id(code.window(i - self.m, L)) for i in range(code.period)]
        return self.table[ids].mean(axis=0)


def build_edge_observable(
    scene: Scene, m: int, budget: int = EDGE_BUDGET, tol: float = DEFAULT_TOL
) -> EdgeObservable:
    if m < 1:
        raise ValueError("m must be >= 1")
    count = scene.s * (scene.s - 1) ** (2 * m)
    if count > budget:
        raise BudgetExceeded(f"{count} blocks of length {2 * m + 1} exceed budget {budget}")
    alphabet = BlockAlphabet(scene.s, 2 * m + 1)
    table = np.array([window_point(scene, b, m, tol) for b in alphabet.blocks])
    return EdgeObservable(m, alphabet, table)


def block_graph(edge_obs: EdgeObservable, symbols: Sequence[int] | None = None) -> nx.DiGraph:
    """Blocks as nodes, an edge wherever the length-2m suffix equals the next prefix."""
    alpha = edge_obs.alphabet
    allowed = set(symbols) if symbols is not None else None
    keep = [i for i, b in enumerate(alpha.blocks) if allowed is None or set(b) <= allowed]
    keep_set = set(keep)
    g = nx.DiGraph()
    g.add_nodes_from(keep)
    for a in keep:
        for b in alpha.successors(a):
            if b in keep_set:
                g.add_edge(a, b)
    return g


def cycle_rotation_set(
    edge_obs: EdgeObservable,
    max_cycles: int = CYCLE_BUDGET,
    symbols: Sequence[int] | None = None,
) -> RotationSetApprox:
    """Averages of the tabulated observable over every simple cycle of the block graph."""
    g = block_graph(edge_obs, symbols)
    if g.number_of_nodes() == 0 or not nx.is_strongly_connected(g):
        raise GraphNotStronglyConnected("block graph is not strongly connected")
    points, labels = [], []
    for count, cycle in enumerate(nx.simple_cycles(g), start=1):
        if count > max_cycles:
            raise CycleBudgetExceeded(f"more than {max_cycles} simple cycles")
        points.append(edge_obs.table[cycle].mean(axis=0))
        labels.append(len(cycle))
    # order-independent reduction: sort before deduplicating
    order = np.lexsort(np.array(points).T[::-1])
    verts, labs = _dedup([points[i] for i in order], [f"cycle len {labels[i]}" for i in order])
    return RotationSetApprox(verts, f"cycle oracle m={edge_obs.m}", labs)


def observable_periodic_hull(
    edge_obs: EdgeObservable, max_period: int, symbols: Sequence[int] | None = None
) -> RotationSetApprox:
    """Brute-force counterpart of the cycle oracle: periodic averages of the same table."""
    s = edge_obs.alphabet.s
    allowed = set(symbols) if symbols is not None else None
    pts, labels = [], []
    for code in enumerate_periodic(s, max_period):
        if allowed is not None and not set(code.block) <= allowed:
            continue
        pts.append(edge_obs.periodic_average(code))
        labels.append(format_code(code))
    verts, labs = _dedup(pts, labels)
    return RotationSetApprox(verts, f"observable periodic max_period={max_period}", labs)
