"""Command-line front end.

Exit codes: 0 success, 1 domain failure (validation or assertion), 2 usage
or parse error. With ``--out DIR`` every command writes its CSV files and a
``manifest.json`` into DIR; otherwise the main table goes to stdout.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import io
import json
import os
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .constructions import (
    DivergentSequenceSpec,
    convex_combination_code,
    example51_divergence,
    periodize_prefix,
    repeat_block,
)
from .errors import BilliardError, SceneError, Violation, WordError
from .geometry import check_disjoint, check_no_eclipse, load_scene
from .orbit_solver import DEFAULT_TOL, estimate_shadowing, solve_periodic
from .rotation import (
    approximate_G,
    build_edge_observable,
    cycle_rotation_set,
    hausdorff,
    observable_periodic_hull,
    periodic_stream,
)
from .symbolic import format_code, parse_code, parse_word, validate_cyclic

SCENE_DIR_ENV = "BILLIARD_SCENE_DIR"


class UsageError(Exception):
    pass


def fmt(x) -> str:
    return format(float(x), ".17g")


def resolve_scene_path(name: str) -> Path:
    p = Path(name)
    if p.exists():
        return p
    for d in os.environ.get(SCENE_DIR_ENV, "").split(os.pathsep):
        if d and (Path(d) / name).exists():
            return Path(d) / name
    raise UsageError(f"scene file not found: {name}")


def _load(args):
    path = resolve_scene_path(args.scene)
    try:
        scene = load_scene(path)
    except SceneError as exc:
        raise UsageError(str(exc)) from None
    args.scene_digest = hashlib.sha256(path.read_bytes()).hexdigest()
    return scene


def _code(text, scene):
    try:
        return validate_cyclic(parse_code(text), scene.s)
    except WordError as exc:
        raise UsageError(f"bad code {text!r}: {exc}") from None


class Output:
    """Collects named CSV tables; writes them (plus a manifest) to --out or stdout."""

    def __init__(self, args):
        self.args = args
        self.tables: dict[str, str] = {}
        self.extra: dict[str, str] = {}

    def table(self, name, header, rows):
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)
        self.tables[name] = buf.getvalue()

    def file(self, name, text):
        self.extra[name] = text

    def flush(self):
        out = self.args.out
        if out is None:
            for text in self.tables.values():
                sys.stdout.write(text)
            return
        d = Path(out)
        d.mkdir(parents=True, exist_ok=True)
        for name, text in {**self.tables, **self.extra}.items():
            (d / name).write_text(text, encoding="utf-8")
        (d / "manifest.json").write_text(json.dumps(manifest(self.args), indent=2, sort_keys=True) + "\n")


def manifest(args) -> dict:
    params = {
        k: v
        for k, v in sorted(vars(args).items())
        if k not in ("func", "out", "scene_digest", "command")
    }
    return {
        "command": args.command,
        "scene_digest": getattr(args, "scene_digest", None),
        "parameters": params,
        "seed": args.seed,
        "version": __version__,
    }


def _vec_cols(prefix, dim):
    return [f"{prefix}{i}" for i in range(dim)]


# ------------------------------------------------------------------ commands


def cmd_check(args) -> int:
    scene = _load(args)
    ok = True
    print(f"dimension\t{scene.dim}")
    if scene.s >= 3:
        print(f"obstacles\tPASS\ts={scene.s}")
    else:
        print(f"obstacles\tFAIL\ts={scene.s} < 3")
        ok = False
    bad = check_disjoint(scene)
    if bad:
        ok = False
        for i, j, gap in bad:
            print(f"disjoint\tFAIL\t({i},{j})\tclearance={fmt(gap)}")
    else:
        print("disjoint\tPASS")
    if scene.s >= 3 and not bad:
        try:
            rep = check_no_eclipse(scene)
            kind = "approximate" if rep.approximate else "exact"
            print(f"no-eclipse\tPASS\t{kind}\tmin_clearance={fmt(rep.min_clearance)}")
        except Violation as exc:
            ok = False
            for t in exc.triples:
                print(f"no-eclipse\tFAIL\t({t[0]},{t[1]},{t[2]})")
        except BilliardError as exc:
            ok = False
            print(f"no-eclipse\tFAIL\t{exc}")
    print(f"enclosing_radius\t{fmt(scene.enclosing_radius)}")
    return 0 if ok else 1


def cmd_orbit(args) -> int:
    scene = _load(args)
    code = _code(args.code, scene)
    chain = solve_periodic(scene, code, tol=args.tol, max_iter=args.max_iter)
    rho = chain.mean()
    out = Output(args)
    rows = [
        [format_code(code), i, *map(fmt, x), fmt(chain.reflection_residual), fmt(chain.length)]
        for i, x in enumerate(chain.points)
    ]
    rows.append([format_code(code), "rotation", *map(fmt, rho), fmt(chain.reflection_residual), fmt(chain.length)])
    out.table("orbit.csv", ["code", "vertex", *_vec_cols("x", scene.dim), "residual", "length"], rows)
    out.flush()
    return 0


def cmd_rotset(args) -> int:
    scene = _load(args)
    if args.max_period < 2:
        raise UsageError("--max-period must be >= 2")
    sets = {P: approximate_G(scene, P, args.tol, args.threads) for P in range(2, args.max_period + 1)}
    final = sets[args.max_period]
    print("max_period\tvertices\thausdorff_to_previous", file=sys.stderr)
    conv_rows = []
    for P, g in sets.items():
        h = hausdorff(g, sets[P - 1], args.directions) if P > 2 else float("nan")
        conv_rows.append([P, len(g), fmt(h)])
        print(f"{P}\t{len(g)}\t{fmt(h)}", file=sys.stderr)
    out = Output(args)
    out.table(
        "vertices.csv",
        ["label", *_vec_cols("x", scene.dim)],
        [[lab, *map(fmt, v)] for lab, v in zip(final.labels, final.vertices)],
    )
    if args.out is not None:
        from .geometry import unit_directions

        u = unit_directions(scene.dim, args.directions, args.seed)
        h = final.support(u)
        out.table(
            "support.csv",
            [*_vec_cols("u", scene.dim), "h"],
            [[*map(fmt, ui), fmt(hi)] for ui, hi in zip(u, h)],
        )
        out.table("convergence.csv", ["max_period", "vertices", "hausdorff_to_previous"], conv_rows)
        if scene.dim in (2, 3):
            plot = {
                "dimension": scene.dim,
                "projection_plane": list(range(scene.dim)) if scene.dim == 2 else [[0, 1], [0, 2], [1, 2]],
                "vertices": [[float(x) for x in v] for v in final.vertices],
                "obstacle_centers": scene.centers.tolist(),
            }
            out.file("plot.json", json.dumps(plot, indent=1) + "\n")
        else:
            print(f"plot data skipped: dimension {scene.dim} > 3", file=sys.stderr)
    out.flush()
    return 0


def _budget_table(out, name, b, dim):
    rows = [["code", format_code(b.code) if b.code.period <= 64 else f"{b.code.period}:(...)"]]
    rows.append(["period", b.code.period])
    for k, v in b.budget_terms.items():
        rows.append([f"budget_{k}", fmt(v)])
    rows.append(["predicted_error", fmt(b.predicted_error)])
    if b.measured_error is not None:
        rows.append(["measured_error", fmt(b.measured_error)])
        rows.append(["within_budget", b.within_budget])
    out.table(name, ["field", "value"], rows)


def cmd_lemma_repeat(args) -> int:
    scene = _load(args)
    code = _code(args.code, scene)
    b = repeat_block(code, args.p, args.l, scene, eps=args.eps, verify=True, tol=args.tol)
    out = Output(args)
    _budget_table(out, "lemma_repeat.csv", b, scene.dim)
    out.flush()
    return 0 if b.within_budget else 1


def cmd_lemma_convex(args) -> int:
    scene = _load(args)
    codes = [_code(c, scene) for c in args.codes]
    if len(args.weights) != len(codes):
        raise UsageError("give one weight per code")
    try:
        b = convex_combination_code(codes, args.weights, args.eps, scene, p=args.p, l=args.l, verify=True, tol=args.tol)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    out = Output(args)
    _budget_table(out, "lemma_convex.csv", b, scene.dim)
    out.flush()
    return 0 if b.within_budget else 1


def cmd_lemma_periodize(args) -> int:
    scene = _load(args)
    source = _code(args.source, scene)
    n = args.n
    it = periodic_stream(source)
    word = tuple(next(it) for _ in range(n + 1))
    target = solve_periodic(scene, source, tol=args.tol).mean()
    q = source.period
    tail = 2 * (n % q) * scene.enclosing_radius / n
    b = periodize_prefix(word, scene, eps=args.eps, n=n, p=args.p, l=args.l, tail=tail, target=target, tol=args.tol)
    out = Output(args)
    _budget_table(out, "lemma_periodize.csv", b, scene.dim)
    out.flush()
    return 0 if b.within_budget else 1


def cmd_shadowing(args) -> int:
    scene = _load(args)
    fit = estimate_shadowing(scene, trials=args.trials, max_m=args.max_m, seed=args.seed)
    out = Output(args)
    rows = [[fmt(x), fmt(y)] for x, y in zip(fit.half_lengths, fit.displacements)]
    out.table("shadowing.csv", ["half_length", "max_midpoint_displacement"], rows)
    out.flush()
    print(f"C={fmt(fit.C)} delta={fmt(fit.delta)} r2={fmt(fit.fit_r2)}", file=sys.stderr)
    return 0


def cmd_example51(args) -> int:
    if args.k_max < 3:
        raise UsageError("--k-max must be >= 3")
    scene = _load(args)
    eps = args.epsilon if args.epsilon is not None else max(o.diameter for o in scene.obstacles)
    spec = DivergentSequenceSpec.from_scene(scene, eps)
    rep = example51_divergence(spec, args.k_max, args.window, tol=args.tol)
    d = scene.dim
    rows = [
        [r["k"], r["n_k"], *map(fmt, r["b_n"]), r["n_hat_k"], *map(fmt, r["b_hat"]), fmt(r["dist_n"]), fmt(r["dist_hat"])]
        for r in rep.rows
    ]
    out = Output(args)
    out.table(
        "example51.csv",
        ["k", "n_k", *_vec_cols("b_n", d), "n_hat_k", *_vec_cols("b_hat", d), "dist_n", "dist_hat"],
        rows,
    )
    out.flush()
    verdict = "two distinct limit points" if rep.distinct_limit_points else "inconclusive"
    print(
        f"verdict: {verdict}; targets {[fmt(x) for x in rep.target_n]} / {[fmt(x) for x in rep.target_hat]}; "
        f"distances {fmt(rep.last['dist_n'])} / {fmt(rep.last['dist_hat'])}; "
        f"separation {fmt(rep.separation)} > 2ε={fmt(2 * eps)}: {rep.separated}",
        file=sys.stderr,
    )
    return 0 if rep.distinct_limit_points else 1


def cmd_oracle_compare(args) -> int:
    scene = _load(args)
    edge = build_edge_observable(scene, args.m, tol=args.tol)
    cyc = cycle_rotation_set(edge)
    per_obs = observable_periodic_hull(edge, args.max_period)
    per_phi = approximate_G(scene, args.max_period, args.tol, args.threads)
    rows = [
        ["cycle_vertices", len(cyc)],
        ["observable_periodic_vertices", len(per_obs)],
        ["hausdorff_cycle_vs_observable_periodic", fmt(hausdorff(cyc, per_obs, args.directions))],
        ["hausdorff_cycle_vs_orbit_periodic", fmt(hausdorff(cyc, per_phi, args.directions))],
    ]
    out = Output(args)
    out.table("oracle_compare.csv", ["field", "value"], rows)
    out.flush()
    return 0


# -------------------------------------------------------------------- parser


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--tol", type=float, default=DEFAULT_TOL, help="solver residual tolerance")
    common.add_argument("--max-iter", type=int, default=10_000)
    common.add_argument("--seed", type=int, default=0)
    common.add_argument("--threads", type=int, default=1)
    common.add_argument("--out", default=None, help="output directory (CSV + manifest)")

    parser = argparse.ArgumentParser(prog="openbilliards", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name, func, help_):
        p = sub.add_parser(name, parents=[common], help=help_)
        p.add_argument("scene", help="scene JSON (searched in $BILLIARD_SCENE_DIR too)")
        p.set_defaults(func=func)
        return p

    add("check", cmd_check, "validate a scene")
    p = add("orbit", cmd_orbit, "solve one periodic orbit")
    p.add_argument("code", help="periodic code, e.g. '3:(1,2,3)'")
    p = add("rotset", cmd_rotset, "periodic rotation-vector hull")
    p.add_argument("--max-period", type=int, default=6)
    p.add_argument("--directions", type=int, default=4096)
    p = add("lemma-repeat", cmd_lemma_repeat, "block-repetition construction")
    p.add_argument("code")
    p.add_argument("--p", type=int, required=True)
    p.add_argument("--l", type=int, required=True)
    p.add_argument("--eps", type=float, default=None)
    p = add("lemma-convex", cmd_lemma_convex, "convex-combination construction")
    p.add_argument("codes", nargs="+")
    p.add_argument("--weights", type=float, nargs="+", required=True)
    p.add_argument("--eps", type=float, required=True)
    p.add_argument("--p", type=int, default=None)
    p.add_argument("--l", type=int, default=None)
    p = add("lemma-periodize", cmd_lemma_periodize, "periodize a prefix of a periodic source")
    p.add_argument("source", help="periodic source code whose prefix is closed up")
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--eps", type=float, default=None)
    p.add_argument("--p", type=int, default=None)
    p.add_argument("--l", type=int, default=None)
    p = add("shadowing", cmd_shadowing, "measure shadowing constants C, delta")
    p.add_argument("--trials", type=int, default=10)
    p.add_argument("--max-m", type=int, default=24)
    p = add("example51", cmd_example51, "divergent Birkhoff averages")
    p.add_argument("--k-max", type=int, default=5)
    p.add_argument("--window", type=int, default=6)
    p.add_argument("--epsilon", type=float, default=None)
    p = add("oracle-compare", cmd_oracle_compare, "cycle oracle vs periodic hull")
    p.add_argument("--m", type=int, default=1)
    p.add_argument("--max-period", type=int, default=10)
    p.add_argument("--directions", type=int, default=4096)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except BilliardError as exc:
        print(f"failure: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
