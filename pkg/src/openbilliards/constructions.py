"""Periodic codes built to approximate given rotation vectors, with error budgets.

Each construction returns a `BudgetedCode`: the periodic code plus a named
breakdown of the a-priori error bound. Bounds use the scene's enclosing
radius R and its measured shadowing rate delta, so they are empirical
wherever delta enters. Passing ``verify=True`` solves the resulting orbit
and records the actual deviation from the target.

The module also holds the three-obstacle sequence whose Birkhoff averages
oscillate between two separated cluster points.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterator, Sequence

import numpy as np

from .errors import (
    BudgetUnsatisfiable,
    NoValidJ,
    SeamImpossible,
    SpecViolation,
    WordTooShort,
)
from .geometry import Scene
from .orbit_solver import DEFAULT_TOL, measured_shadowing, window_point
from .rotation import rotation_of_periodic
from .symbolic import PeriodicCode, validate_cyclic, validate_word


@dataclass
class BudgetedCode:
    code: PeriodicCode
    budget_terms: dict
    target: np.ndarray | None = None
    measured_error: float | None = None
    empirical: bool = True
    info: dict = field(default_factory=dict)

    def __post_init__(self):
        if any(v < 0 for v in self.budget_terms.values()):
            raise ValueError("budget terms must be nonnegative")

    @property
    def predicted_error(self) -> float:
        return float(sum(self.budget_terms.values()))

    @property
    def within_budget(self) -> bool | None:
        if self.measured_error is None:
            return None
        return self.measured_error <= self.predicted_error


def _delta(scene: Scene, delta: float | None) -> float:
    return measured_shadowing(scene).delta if delta is None else float(delta)


def seam_symbol(s: int, avoid: Sequence[int]) -> int:
    """Smallest symbol of {1..s} not in `avoid`."""
    for x in range(1, s + 1):
        if x not in avoid:
            return x
    raise NoValidJ(f"no symbol in 1..{s} avoids {sorted(set(avoid))}")


def check_parameters(R: float, delta: float, p: int, l: int, eps: float) -> None:
    """Raise unless 5R/p < eps/3 and delta^l < eps/3."""
    if p < 1 or l < 1:
        raise BudgetUnsatisfiable("p and l must be positive integers")
    if not 5 * R / p < eps / 3:
        raise BudgetUnsatisfiable(f"5R/p = {5 * R / p:.4g} is not below eps/3 = {eps / 3:.4g}")
    if not delta**l < eps / 3:
        raise BudgetUnsatisfiable(f"delta^l = {delta**l:.4g} is not below eps/3 = {eps / 3:.4g}")


def smallest_parameters(R: float, delta: float, eps: float) -> tuple[int, int]:
    """Smallest p and l with 5R/p < eps/3 and delta^l < eps/3."""
    if eps <= 0:
        raise BudgetUnsatisfiable("eps must be positive")
    p = math.floor(15 * R / eps) + 1
    if delta >= 1:
        raise BudgetUnsatisfiable("delta must lie in (0, 1)")
    l = 1
    while not delta**l < eps / 3:
        l += 1
    return p, l


# ------------------------------------------------------------ block repeat


def repeat_block(
    code: PeriodicCode,
    p: int,
    l: int,
    scene: Scene,
    eps: float | None = None,
    delta: float | None = None,
    verify: bool = False,
    tol: float = DEFAULT_TOL,
) -> BudgetedCode:
    """p*l copies of the block followed by one seam symbol j (period p*l*n + 1).

    The rotation vector moves by at most 5R/p + 2 delta^l.
    """
    validate_cyclic(code, scene.s)
    if scene.s < 3:
        raise NoValidJ("a seam symbol needs at least three obstacles")
    if p < 1 or l < 1:
        raise BudgetUnsatisfiable("p and l must be positive integers")
    R = scene.enclosing_radius
    d = _delta(scene, delta)
    if eps is not None:
        check_parameters(R, d, p, l, eps)
    j = seam_symbol(scene.s, (code.block[-1], code.block[0]))
    new = PeriodicCode(code.block * (p * l) + (j,))
    validate_cyclic(new, scene.s)
    out = BudgetedCode(new, {"ends": 5 * R / p, "shadowing": 2 * d**l}, info={"j": j, "p": p, "l": l})
    if verify:
        out.target = rotation_of_periodic(scene, code, tol).value
        got = rotation_of_periodic(scene, new, tol).value
        out.measured_error = float(np.linalg.norm(got - out.target))
    return out


# ----------------------------------------------------- convex combinations


def rational_weights(weights: Sequence[float], bound: float) -> tuple[tuple[int, ...], int]:
    """Positive integers s_i with |s_i/m - t_i| <= bound, m = sum s_i as small as possible.

    Each candidate m is apportioned by largest remainders.
    """
    t = [Fraction(w).limit_denominator(10**12) for w in weights]
    k = len(t)
    bnd = Fraction(bound)
    m = k
    while True:
        raw = [ti * m for ti in t]
        s = [max(1, math.floor(r)) for r in raw]
        while sum(s) < m:
            i = max(range(k), key=lambda i: (raw[i] - s[i], -i))
            s[i] += 1
        while sum(s) > m:
            cands = [i for i in range(k) if s[i] > 1]
            if not cands:
                break
            i = min(cands, key=lambda i: (raw[i] - s[i], i))
            s[i] -= 1
        if sum(s) == m and all(abs(Fraction(si, m) - ti) <= bnd for si, ti in zip(s, t)):
            return tuple(s), m
        m += 1


def convex_combination_code(
    codes: Sequence[PeriodicCode],
    weights: Sequence[float],
    eps: float,
    scene: Scene,
    p: int | None = None,
    l: int | None = None,
    delta: float | None = None,
    verify: bool = False,
    tol: float = DEFAULT_TOL,
) -> BudgetedCode:
    """Periodic code whose rotation vector approximates sum t_i * rho(code_i).

    Block i is code i repeated p*s_i*L/n_i times (L = l * n_1 * ... * n_k);
    where two blocks meet with equal symbols, the last symbol of the earlier
    block is replaced by the smallest symbol avoiding both neighbours.
    """
    codes = [validate_cyclic(c, scene.s) for c in codes]
    k = len(codes)
    if k == 0 or len(weights) != k:
        raise ValueError("need one positive weight per code")
    if any(not w > 0 for w in weights):
        raise ValueError("weights must be strictly positive")
    if abs(sum(weights) - 1.0) > 1e-9:
        raise ValueError("weights must sum to 1")
    if scene.s < 3:
        raise SeamImpossible("seams need at least three obstacles")
    R = scene.enclosing_radius
    d = _delta(scene, delta)
    if p is None or l is None:
        p0, l0 = smallest_parameters(R, d, eps)
        p = p0 if p is None else p
        l = l0 if l is None else l
    check_parameters(R, d, p, l, eps)
    s_int, m = rational_weights(weights, eps / (3 * k * R))
    L = l * math.prod(c.period for c in codes)
    blocks = [list(c.block * (p * si * L // c.period)) for c, si in zip(codes, s_int)]
    seams = []
    for i in range(k):
        nxt = blocks[(i + 1) % k][0]
        if blocks[i][-1] == nxt:
            blocks[i][-1] = seam_symbol(scene.s, (blocks[i][-2], nxt))
            seams.append(i)
    new = PeriodicCode(tuple(itertools.chain.from_iterable(blocks)))
    validate_cyclic(new, scene.s)
    rounding = sum(abs(si / m - float(ti)) for si, ti in zip(s_int, weights))
    terms = {
        "repetition": 5 * R / p + 2 * d**l,
        "mixing": 4 * R / p + 2 * d**L,
        "weights": R * rounding,
    }
    out = BudgetedCode(
        new, terms, info={"s": s_int, "m": m, "p": p, "l": l, "L": L, "seams": seams}
    )
    if verify:
        rhos = np.array([rotation_of_periodic(scene, c, tol).value for c in codes])
        out.target = np.asarray(weights) @ rhos
        got = rotation_of_periodic(scene, new, tol).value
        out.measured_error = float(np.linalg.norm(got - out.target))
    return out


# ------------------------------------------------------------ periodize


def periodize_prefix(
    word: Sequence[int],
    scene: Scene,
    eps: float | None = None,
    n: int | None = None,
    p: int | None = None,
    l: int | None = None,
    tail: float | None = None,
    delta: float | None = None,
    target=None,
    tol: float = DEFAULT_TOL,
) -> BudgetedCode:
    """Close the first n = p*l symbols of `word` into a periodic block.

    If the prefix ends with its first symbol, the next symbol of `word` is
    appended so the block wraps admissibly. Without explicit (p, l) the
    factorization of n with the smallest l meeting the parameter rule for
    `eps` is used. `tail` bounds how far the length-n Birkhoff average of
    the source sits from its rotation vector (eps/3 when omitted).
    With `target` given, the orbit is solved and its deviation recorded.
    """
    word = validate_word(word, scene.s)
    R = scene.enclosing_radius
    d = _delta(scene, delta)
    if p is not None and l is not None:
        n = p * l
        if eps is not None:
            check_parameters(R, d, p, l, eps)
    else:
        if eps is None:
            raise BudgetUnsatisfiable("either (p, l) or eps is required")
        n = len(word) if n is None else n
        for cand in range(1, n + 1):
            if n % cand:
                continue
            try:
                check_parameters(R, d, n // cand, cand, eps)
            except BudgetUnsatisfiable:
                continue
            p, l = n // cand, cand
            break
        else:
            raise BudgetUnsatisfiable(f"no split n = p*l of n = {n} meets the parameter rule")
    if len(word) < n:
        raise WordTooShort(f"word has {len(word)} symbols, prefix needs {n}")
    block = word[:n]
    if block[-1] == block[0]:
        if len(word) < n + 1:
            raise WordTooShort("seam clash needs one symbol beyond the prefix")
        block = word[: n + 1]
    code = validate_cyclic(PeriodicCode(block), scene.s)
    if tail is None:
        tail = eps / 3 if eps is not None else 0.0
    out = BudgetedCode(
        code,
        {"birkhoff_tail": tail, "ends": 4 * R / p, "shadowing": 2 * d**l},
        info={"n": n, "p": p, "l": l, "extended": len(block) > n},
    )
    if target is not None:
        out.target = np.asarray(target, dtype=float)
        got = rotation_of_periodic(scene, code, tol).value
        out.measured_error = float(np.linalg.norm(got - out.target))
    return out


# ------------------------------------------------------ divergent example


def example51_block(k: int) -> tuple[int, ...]:
    """2^(2k) symbols alternating 1,2 followed by 2^(2k+1) alternating 1,3."""
    return (1, 2) * 2 ** (2 * k - 1) + (1, 3) * 2 ** (2 * k)


def example51_symbols(start_k: int = 1) -> Iterator[int]:
    """The infinite one-sided stream B_1 B_2 B_3 ..."""
    for k in itertools.count(start_k):
        yield from example51_block(k)


@dataclass
class Example51Stream:
    symbols: tuple[int, ...]
    # (k, n_k, hat n_k): end of the (1,2) part of B_k, and end of B_k
    checkpoints: list


def example51_generator(k_max: int) -> Example51Stream:
    if k_max < 2:
        raise ValueError("k_max must be >= 2")
    symbols = tuple(itertools.chain.from_iterable(example51_block(k) for k in range(1, k_max + 1)))
    checkpoints = []
    total = 0
    for k in range(1, k_max + 1):
        checkpoints.append((k, total + 2 ** (2 * k), total + len(example51_block(k))))
        total += len(example51_block(k))
    return Example51Stream(symbols, checkpoints)


def closed_form_counts(k: int) -> dict:
    """Counts of symbols 1, 2, 3 among the first n_k symbols, as integers."""
    n_k = 4 * (2 ** (2 * k - 1) - 1)
    p2 = Fraction(2, 3) * (4**k - 1)
    p3 = Fraction(4, 3) * (4 ** (k - 1) - 1)
    return {"n": n_k, 1: Fraction(n_k, 2), 2: p2, 3: p3}


@dataclass
class DivergentSequenceSpec:
    anchors: np.ndarray
    epsilon: float
    scene: Scene

    @classmethod
    def from_scene(cls, scene: Scene, epsilon: float) -> DivergentSequenceSpec:
        """Anchors are the obstacle centres."""
        return cls(scene.centers.copy(), float(epsilon), scene)

    def validate(self) -> None:
        a1, a2, a3 = (np.asarray(a, dtype=float) for a in self.anchors)
        eps = self.epsilon
        if self.scene.s != 3:
            raise SpecViolation("s = 3", f"the construction needs exactly 3 obstacles, got {self.scene.s}")
        if not np.linalg.norm(a2 - a3) > 12 * eps:
            raise SpecViolation("‖a2−a3‖ > 12ε")
        if not np.linalg.norm(a1 - a2) > 2 * eps:
            raise SpecViolation("‖a1−a2‖ > 2ε")
        if not np.linalg.norm(a1 - a3) > 2 * eps:
            raise SpecViolation("‖a1−a3‖ > 2ε")
        u = (a3 - a2) / np.linalg.norm(a3 - a2)
        off = (a1 - a2) - np.dot(a1 - a2, u) * u
        if not np.linalg.norm(off) > 2 * eps:
            raise SpecViolation("dist(a1, line(a2, a3)) > 2ε")
        for i, ob in enumerate(self.scene.obstacles, start=1):
            if ob.diameter > eps:
                raise SpecViolation(f"diam(K{i}) ≤ ε")
            # an anchor inside K_i keeps every boundary point within the diameter
            if np.linalg.norm((self.anchors[i - 1] - ob.c) / ob.axes) > 1:
                raise SpecViolation(f"a{i} ∈ K{i}")

    @property
    def targets(self) -> tuple[np.ndarray, np.ndarray]:
        a1, a2, a3 = (np.asarray(a, dtype=float) for a in self.anchors)
        return a1 / 2 + a2 / 3 + a3 / 6, a1 / 2 + a2 / 6 + a3 / 3


@dataclass
class DivergenceReport:
    rows: list
    target_n: np.ndarray
    target_hat: np.ndarray
    epsilon: float
    window: int

    @property
    def separation(self) -> float:
        return float(np.linalg.norm(self.target_n - self.target_hat))

    @property
    def last(self) -> dict:
        return self.rows[-1]

    @property
    def near_n(self) -> bool:
        return self.last["dist_n"] <= self.epsilon

    @property
    def near_hat(self) -> bool:
        return self.last["dist_hat"] <= self.epsilon

    @property
    def separated(self) -> bool:
        return self.separation > 2 * self.epsilon

    @property
    def distinct_limit_points(self) -> bool:
        return self.near_n and self.near_hat and self.separated


def example51_divergence(
    spec: DivergentSequenceSpec, k_max: int, window: int = 6, tol: float = DEFAULT_TOL
) -> DivergenceReport:
    """Birkhoff averages of the example stream at both checkpoint families.

    Terms near the start of the one-sided stream use a window cut at the
    stream edge; the stream is extended by one block for right context.
    """
    if k_max < 3:
        raise ValueError("k_max must be >= 3")
    spec.validate()
    scene = spec.scene
    stream = example51_generator(k_max)
    need = stream.checkpoints[-1][2]
    seq = stream.symbols + example51_block(k_max + 1)[:window]
    terms = np.empty((need, scene.dim))
    for i in range(need):
        lo = max(0, i - window)
        terms[i] = window_point(scene, seq[lo : i + window + 1], i - lo, tol)
    csum = np.cumsum(terms, axis=0)
    t_n, t_hat = spec.targets
    rows = []
    for k, n_k, nh_k in stream.checkpoints:
        b_n = csum[n_k - 1] / n_k
        b_hat = csum[nh_k - 1] / nh_k
        rows.append(
            {
                "k": k,
                "n_k": n_k,
                "b_n": b_n,
                "n_hat_k": nh_k,
                "b_hat": b_hat,
                "dist_n": float(np.linalg.norm(b_n - t_n)),
                "dist_hat": float(np.linalg.norm(b_hat - t_hat)),
            }
        )
    return DivergenceReport(rows, t_n, t_hat, spec.epsilon, window)
