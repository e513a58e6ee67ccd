"""Billiard trajectories for symbolic codes, found by minimizing broken-geodesic length.

Vertex i of a chain lives on the boundary of obstacle K_{word[i]} and is
parametrized as ``x_i = c_i + a_i * u_i`` with ``u_i`` on the unit sphere.
Total length is minimized by damped Newton steps in tangent-plane charts of
the spheres; the Hessian is block tridiagonal (cyclic for closed chains), so
long periodic codes are solved with a sparse factorization.

At a minimizer the length gradient vanishes tangentially at each vertex,
which is exactly the law of reflection; the reported residual measures it
directly as ``|reflect(v_in, normal) - v_out|``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Callable, Sequence

import mpmath
import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import DegenerateSegment, NonConvergence, PoorFit, WordError
from .geometry import BALL, Scene, project_to_boundary, reflect
from .symbolic import PeriodicCode, Word, validate_cyclic, validate_word

DEFAULT_TOL = 1e-10
DEFAULT_MAX_ITER = 10_000
MIN_SEGMENT = 1e-9
_DENSE_LIMIT = 400


@dataclass
class SolveReport:
    iterations: int
    final_residual: float
    converged: bool
    length: float


@dataclass
class ReflectionChain:
    word: Word
    points: np.ndarray
    normals: np.ndarray
    closed: bool
    reflection_residual: float
    length: float
    report: SolveReport
    params: np.ndarray = field(repr=False)

    def __len__(self):
        return len(self.word)

    def mean(self) -> np.ndarray:
        return self.points.mean(axis=0)


# -------------------------------------------------------------- derivatives


def _tangent_basis(U):
    """Orthonormal bases of the tangent planes u^perp, shape (n, N, N-1).

    Columns 2..N of the Householder reflector mapping e_1 to -sign(u_0) u.
    Works for float and mpmath object arrays alike.
    """
    n, N = U.shape
    sgn = np.where(U[:, 0] >= 0, 1, -1)
    V = U.copy()
    V[:, 0] = V[:, 0] + sgn
    vv = (V * V).sum(axis=1)
    H = np.eye(N)[None, :, :] - 2 * V[:, :, None] * V[:, None, :] / vv[:, None, None]
    return H[:, :, 1:]


def _segments(X, closed):
    if closed:
        return np.roll(X, -1, axis=0) - X
    return X[1:] - X[:-1]


def _length(C, A, U, closed, sqrt):
    D = _segments(C + A * U, closed)
    return sqrt((D * D).sum(axis=1)).sum()


def _terms(C, A, U, closed, sqrt):
    """Length, chart gradient (n, k) and Hessian blocks of the chain."""
    n, N = U.shape
    X = C + A * U
    D = _segments(X, closed)
    d = sqrt((D * D).sum(axis=1))
    E = D / d[:, None]
    length = d.sum()
    if closed:
        gX = np.roll(E, 1, axis=0) - E
        heads = np.arange(n)
        tails = (heads + 1) % n
    else:
        gX = X * 0
        gX[:-1] = gX[:-1] - E
        gX[1:] = gX[1:] + E
        heads = np.arange(n - 1)
        tails = heads + 1
    T = _tangent_basis(U)
    J = A[:, :, None] * T
    Jt = np.transpose(J, (0, 2, 1))
    grad = (Jt @ gX[:, :, None])[:, :, 0]
    P = (np.eye(N)[None] - E[:, :, None] * E[:, None, :]) / d[:, None, None]
    HX = np.zeros((n, N, N), dtype=P.dtype) if P.dtype != object else np.zeros((n, N, N)) * P[0, 0, 0]
    np.add.at(HX, heads, P)
    np.add.at(HX, tails, P)
    curv = -(gX * A * U).sum(axis=1)
    diag = Jt @ HX @ J + curv[:, None, None] * np.eye(N - 1)[None]
    off = -(Jt[heads] @ P @ J[tails])
    return length, grad, diag, off, heads, tails, T, E, d


def _residuals(A, U, E, closed):
    """Per-vertex stationarity defect: reflection law inside, normal exit at free ends."""
    nrm = U / A
    nrm = nrm / np.sqrt((nrm * nrm).sum(axis=1))[:, None]
    if closed:
        v_in = np.roll(E, 1, axis=0)
        r = reflect(v_in, nrm) - E
        return np.linalg.norm(r, axis=1), nrm
    r_int = reflect(E[:-1], nrm[1:-1]) - E[1:]
    out = np.empty(len(U))
    out[1:-1] = np.linalg.norm(r_int, axis=1)
    out[0] = np.linalg.norm(E[0] - nrm[0])
    out[-1] = np.linalg.norm(E[-1] + nrm[-1])
    return out, nrm


def _assemble(diag, off, heads, tails, mu):
    n, k, _ = diag.shape
    size = n * k
    if size <= _DENSE_LIMIT:
        H = np.zeros((size, size))
        for i in range(n):
            H[i * k : (i + 1) * k, i * k : (i + 1) * k] += diag[i]
        for b, (a, c) in enumerate(zip(heads, tails)):
            H[a * k : (a + 1) * k, c * k : (c + 1) * k] += off[b]
            H[c * k : (c + 1) * k, a * k : (a + 1) * k] += off[b].T
        H[np.diag_indices(size)] += mu
        return H
    r = np.arange(k)
    bi, bj = np.meshgrid(r, r, indexing="ij")
    rows = [(np.arange(n)[:, None, None] * k + bi).ravel()]
    cols = [(np.arange(n)[:, None, None] * k + bj).ravel()]
    vals = [diag.ravel()]
    rows.append((heads[:, None, None] * k + bi).ravel())
    cols.append((tails[:, None, None] * k + bj).ravel())
    vals.append(off.ravel())
    rows.append((tails[:, None, None] * k + bj).ravel())
    cols.append((heads[:, None, None] * k + bi).ravel())
    vals.append(off.ravel())
    H = sp.coo_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(size, size)
    ).tocsc()
    if mu:
        H = H + mu * sp.identity(size, format="csc")
    return H


def _solve_linear(H, g):
    if isinstance(H, np.ndarray):
        return np.linalg.solve(H, g)
    return spla.spsolve(H, g)


def _retract(U, T, step):
    W = U + (T @ step[:, :, None])[:, :, 0]
    return W / np.sqrt((W * W).sum(axis=1))[:, None]


# ------------------------------------------------------------------- solver


def _setup(scene: Scene, word: Word):
    idx = np.array(word) - 1
    return scene.centers[idx], scene.axes[idx]


def _initial_params(scene: Scene, word: Word, closed: bool) -> np.ndarray:
    """Project the midpoint of the neighbouring obstacle centres onto each boundary."""
    n = len(word)
    centers = scene.centers
    U = np.empty((n, scene.dim))
    for i, sym in enumerate(word):
        if closed:
            nb = [word[i - 1], word[(i + 1) % n]]
        else:
            nb = [word[j] for j in (i - 1, i + 1) if 0 <= j < n]
        target = centers[np.array(nb) - 1].mean(axis=0)
        ob = scene[sym]
        if ob.kind == BALL:
            y = target - ob.c
            U[i] = y / np.linalg.norm(y)
        else:
            pos = project_to_boundary(ob, target).position
            u = (pos - ob.c) / ob.axes
            U[i] = u / np.linalg.norm(u)
    return U


def _params_from_points(scene: Scene, word: Word, points) -> np.ndarray:
    U = np.empty((len(word), scene.dim))
    for i, sym in enumerate(word):
        ob = scene[sym]
        y = (np.asarray(points[i], dtype=float) - ob.c) / ob.axes
        nrm = np.linalg.norm(y)
        if nrm == 0:
            raise NonConvergence("initial point coincides with an obstacle center")
        U[i] = y / nrm
    return U


def _newton(C, A, U, closed, tol, max_iter):
    sqrt = np.sqrt
    mu = 0.0
    best = math.inf
    stall = 0
    it = 0
    res = math.inf
    for it in range(1, max_iter + 1):
        length, grad, diag, off, heads, tails, T, E, d = _terms(C, A, U, closed, sqrt)
        if d.min() < MIN_SEGMENT:
            raise DegenerateSegment(f"segment of length {d.min():.3g} in chain")
        r, _ = _residuals(A, U, E, closed)
        res = float(r.max())
        if res <= tol:
            return U, SolveReport(it - 1, res, True, float(length))
        if res < best * 0.5:
            best, stall = res, 0
        else:
            stall += 1
            if res < 1e-6 and stall > 8:
                break
        g = grad.ravel()
        while True:
            try:
                step = -_solve_linear(_assemble(diag, off, heads, tails, mu), g)
                ok = np.all(np.isfinite(step)) and g @ step < 0
            except (np.linalg.LinAlgError, RuntimeError):
                ok = False
            if ok:
                break
            mu = max(4 * mu, 1e-6 * (1 + float(np.abs(diag).max())))
            if mu > 1e12:
                raise NonConvergence("Hessian regularization failed")
        step = step.reshape(grad.shape)
        if res < 1e-6:
            U = _retract(U, T, step)
            mu = 0.0
            continue
        t = 1.0
        slope = float(g @ step.ravel())
        while t > 1e-12:
            Un = _retract(U, T, t * step)
            if _length(C, A, Un, closed, sqrt) <= length + 1e-4 * t * slope:
                break
            t *= 0.5
        else:
            mu = max(4 * mu, 1e-3)
            continue
        U = Un
        mu = mu * 0.25 if t == 1.0 else mu
    report = SolveReport(it, res, False, float(_length(C, A, U, closed, sqrt)))
    raise NonConvergence(
        f"solver stopped after {it} iterations with residual {res:.3g} > tol {tol:.3g}", report
    )


def _chain(scene, word, U, closed, report):
    C, A = _setup(scene, word)
    X = C + A * U
    E = _segments(X, closed)
    d = np.linalg.norm(E, axis=1)
    if d.min() < MIN_SEGMENT:
        raise DegenerateSegment(f"segment of length {d.min():.3g} in chain")
    E = E / d[:, None]
    r, nrm = _residuals(A, U, E, closed)
    interior = r if closed else r[1:-1]
    return ReflectionChain(
        word=word,
        points=X,
        normals=nrm,
        closed=closed,
        reflection_residual=float(interior.max()) if len(interior) else 0.0,
        length=float(d.sum()),
        report=report,
        params=U,
    )


def solve_periodic(
    scene: Scene,
    code: PeriodicCode,
    tol: float = DEFAULT_TOL,
    max_iter: int = DEFAULT_MAX_ITER,
    init=None,
) -> ReflectionChain:
    """Closed reflection chain x_0..x_{p-1} realizing a periodic code.

    `init` optionally supplies starting points (one per symbol); they are
    mapped radially onto the coded boundaries.
    """
    validate_cyclic(code, scene.s)
    word = code.block
    U = _initial_params(scene, word, True) if init is None else _params_from_points(scene, word, init)
    C, A = _setup(scene, word)
    U, report = _newton(C, A, U, True, tol, max_iter)
    return _chain(scene, word, U, True, report)


def solve_open(
    scene: Scene,
    word: Sequence[int],
    tol: float = DEFAULT_TOL,
    max_iter: int = DEFAULT_MAX_ITER,
    init=None,
) -> ReflectionChain:
    """Open chain of minimal length with every vertex free on its coded boundary.

    Interior vertices satisfy the reflection law; the two end vertices sit
    where the end segments leave along the outward normal.
    """
    word = validate_word(word, scene.s)
    if len(word) < 2:
        raise WordError("open chains need at least two symbols")
    U = _initial_params(scene, word, False) if init is None else _params_from_points(scene, word, init)
    C, A = _setup(scene, word)
    U, report = _newton(C, A, U, False, tol, max_iter)
    return _chain(scene, word, U, False, report)


# ------------------------------------------------------ high precision path

_mp_sqrt = np.frompyfunc(mpmath.sqrt, 1, 1)


def refine_high_precision(scene: Scene, chain: ReflectionChain, dps: int = 60, steps: int = 3):
    """Polish a solved chain with Newton steps in `dps`-digit arithmetic.

    Returns the vertex coordinates as an object array of mpf values. Used where
    differences between chains fall below double-precision resolution.
    """
    with mpmath.workdps(dps):
        C, A = _setup(scene, chain.word)
        Cm = np.vectorize(mpmath.mpf, otypes=[object])(C)
        Am = np.vectorize(mpmath.mpf, otypes=[object])(A)
        U = np.vectorize(mpmath.mpf, otypes=[object])(chain.params)
        U = U / _mp_sqrt((U * U).sum(axis=1))[:, None]
        for _ in range(steps):
            _, grad, diag, off, heads, tails, T, _, _ = _terms(Cm, Am, U, chain.closed, _mp_sqrt)
            n, k, _ = diag.shape
            H = mpmath.zeros(n * k, n * k)
            for i in range(n):
                for a in range(k):
                    for b in range(k):
                        H[i * k + a, i * k + b] += diag[i, a, b]
            for e, (p, q) in enumerate(zip(heads, tails)):
                for a in range(k):
                    for b in range(k):
                        H[p * k + a, q * k + b] += off[e, a, b]
                        H[q * k + b, p * k + a] += off[e, a, b]
            g = mpmath.matrix([-x for x in grad.ravel()])
            step = mpmath.lu_solve(H, g)
            step = np.array([step[i] for i in range(n * k)], dtype=object).reshape(n, k)
            U = _retract(U, T, step)
        return Cm + Am * U


# ---------------------------------------------------------------- observable


@lru_cache(maxsize=500_000)
def _window_point(scene: Scene, block: Word, index: int, tol: float) -> np.ndarray:
    p = solve_open(scene, block, tol=tol).points[index].copy()
    p.setflags(write=False)
    return p


def window_point(scene: Scene, block: Sequence[int], index: int, tol: float = DEFAULT_TOL):
    """Reflection point `index` of the open chain for `block` (memoized)."""
    return _window_point(scene, tuple(int(x) for x in block), int(index), float(tol))


def observable_phi(
    scene: Scene,
    word: Sequence[int],
    window: int,
    center: int | None = None,
    tol: float = DEFAULT_TOL,
) -> np.ndarray:
    """Approximate reflection point at `center` using the 2*window+1 symbols around it.

    The error against the exact bi-infinite trajectory is of order C*delta^window.
    `center` defaults to the middle of `word`.
    """
    word = tuple(word)
    if window < 1:
        raise ValueError("window must be >= 1")
    if center is None:
        center = len(word) // 2
    lo, hi = center - window, center + window + 1
    if lo < 0 or hi > len(word):
        raise WordError(
            f"window {window} around index {center} exceeds word of length {len(word)}"
        )
    return window_point(scene, word[lo:hi], window, tol)


# ---------------------------------------------------------------- shadowing


@dataclass
class ShadowingFit:
    C: float
    delta: float
    fit_r2: float
    half_lengths: np.ndarray = field(repr=False)
    displacements: np.ndarray = field(repr=False)

    def __iter__(self):
        return iter((self.C, self.delta, self.fit_r2))


def _random_word(rng, s, length):
    w = [int(rng.integers(1, s + 1))]
    while len(w) < length:
        x = int(rng.integers(1, s))
        w.append(x if x < w[-1] else x + 1)
    return tuple(w)


def _other_symbol(rng, s, avoid):
    choices = [x for x in range(1, s + 1) if x not in avoid]
    return int(choices[rng.integers(len(choices))])


def estimate_shadowing(
    scene: Scene,
    trials: int = 10,
    max_m: int = 24,
    min_m: int = 8,
    seed: int = 0,
    tol: float = 1e-12,
    dps: int = 60,
    min_r2: float = 0.9,
) -> ShadowingFit:
    """Measure the exponential insensitivity of chain interiors to their ends.

    For each even chain length m in [min_m, max_m], `trials` random words are
    solved twice, with the two end symbols swapped for other admissible
    symbols. The largest midpoint displacement per m is regressed in log scale
    against m/2: delta = exp(slope), C = exp(intercept). Chains are polished
    in extended precision so displacements far below 1e-16 stay measurable.
    """
    if trials < 10:
        raise ValueError("trials must be >= 10")
    if max_m < 8:
        raise ValueError("max_m must be >= 8")
    if scene.s < 3:
        raise ValueError("changing end obstacles needs s >= 3")
    rng = np.random.default_rng(seed)
    ms = [m for m in range(min_m, max_m + 1) if m % 2 == 0]
    envelope = []
    for m in ms:
        worst = 0.0
        for _ in range(trials):
            w = _random_word(rng, scene.s, m + 1)
            alt = list(w)
            alt[0] = _other_symbol(rng, scene.s, {w[0], w[1]})
            alt[-1] = _other_symbol(rng, scene.s, {w[-1], w[-2]})
            pa = refine_high_precision(scene, solve_open(scene, w, tol=tol), dps)
            pb = refine_high_precision(scene, solve_open(scene, alt, tol=tol), dps)
            diff = pa[m // 2] - pb[m // 2]
            with mpmath.workdps(dps):
                dist = float(mpmath.sqrt(sum(x * x for x in diff)))
            worst = max(worst, dist)
        envelope.append(worst)
    x = np.array(ms, dtype=float) / 2
    y = np.log(np.array(envelope))
    slope, intercept = np.polyfit(x, y, 1)
    pred = slope * x + intercept
    r2 = 1.0 - float(np.sum((y - pred) ** 2) / np.sum((y - y.mean()) ** 2))
    fit = ShadowingFit(float(math.exp(intercept)), float(math.exp(slope)), r2, x, np.array(envelope))
    if r2 < min_r2:
        raise PoorFit(f"log-linear fit r^2 = {r2:.3f} < {min_r2}", fit.C, fit.delta, r2)
    if not fit.delta < 1:
        raise PoorFit(f"fitted delta = {fit.delta:.3g} is not below 1", fit.C, fit.delta, r2)
    return fit


@lru_cache(maxsize=64)
def measured_shadowing(scene: Scene, seed: int = 0) -> ShadowingFit:
    """Shadowing constants of a scene, measured once and cached."""
    return estimate_shadowing(scene, seed=seed)
