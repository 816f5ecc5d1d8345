"""Command-line interface: precompute, metric, plan and selftest.

Exit codes: 0 success, 2 input error, 3 numerical error (1 for a failed
selftest).
"""
from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from pathlib import Path

from . import shapes
from .bem import MaterialParams, precompute_maps
from .cache import CacheData, check_settings, mesh_hash, read_cache, write_cache
from .config import RunConfig
from .errors import InputError, NumericalError, ParseError, StressGraspError
from .geom import compute_moments, contacts_from_json, load_mesh, poisson_disk_contacts
from .metrics import MetricProblem, ensure_seed_set, q_lower_bound
from .planner import SubsetEvaluator, branch_and_bound, exhaustive_plan

log = logging.getLogger("stressgrasp")

EXIT_OK, EXIT_FAIL, EXIT_INPUT, EXIT_NUMERIC = 0, 1, 2, 3


# --------------------------------------------------------------------------
# helpers


def resolve_mesh(spec: str):
    """A mesh file (OBJ/OFF) or a built-in shape `builtin:NAME[:ARG]`.

    Built-ins: icosphere:LEVEL, box:DIVISIONS, dumbbell:M.
    """
    if not spec.startswith("builtin:"):
        return load_mesh(spec)
    parts = spec.split(":")[1:]
    name, arg = parts[0], (parts[1] if len(parts) > 1 else None)
    try:
        if name == "icosphere":
            return shapes.icosphere(int(arg or 3))
        if name == "box":
            return shapes.box(divisions=int(arg or 4))
        if name == "dumbbell":
            return shapes.asymmetric_dumbbell(int(arg or 4))
    except ValueError as exc:
        raise ParseError(f"bad built-in mesh {spec!r}: {exc}") from exc
    raise ParseError(f"unknown built-in mesh {name!r} (icosphere, box, dumbbell)")


def load_config(args) -> RunConfig:
    cfg = RunConfig.load(args.config) if getattr(args, "config", None) else RunConfig()
    overrides = {}
    for key in ("eps", "seed"):
        val = getattr(args, key, None)
        if val is not None:
            overrides[key] = val
    if getattr(args, "count", None) is not None:
        overrides["N" if args.command == "precompute" else "C"] = args.count
    return cfg.replace(**overrides) if overrides else cfg


def parse_selection(text: str | None, N: int) -> list[int]:
    if text is None:
        return list(range(N))
    text = text.strip()
    if not text:
        return []
    try:
        sel = sorted({int(t) for t in text.split(",") if t.strip()})
    except ValueError as exc:
        raise InputError(f"--select expects comma-separated indices, got {text!r}") from exc
    bad = [i for i in sel if not 0 <= i < N]
    if bad:
        raise InputError(f"--select indices {bad} out of range for N={N}")
    return sel


def build_problem(data: CacheData, cfg: RunConfig, kind: str) -> MetricProblem:
    material = MaterialParams(data.material.mu, data.material.lam, cfg.sigma_max)
    return MetricProblem(
        kind,
        data.contacts,
        data.moments,
        friction=cfg.friction(),
        metric=cfg.metric(),
        material=material,
        stress_maps=data.maps,
    )


def open_cache(path, cfg: RunConfig) -> CacheData:
    data = read_cache(path)
    check_settings(data, cfg.map_hash(), str(path))
    return data


def emit(obj) -> None:
    json.dump(obj, sys.stdout, indent=1)
    sys.stdout.write("\n")


# --------------------------------------------------------------------------
# commands


def cmd_precompute(args) -> int:
    cfg = load_config(args)
    if not args.mesh or not args.cache:
        raise InputError("precompute needs --mesh and --cache")
    mesh = resolve_mesh(args.mesh)
    if args.contacts:
        try:
            text = Path(args.contacts).read_text()
        except OSError as exc:
            raise ParseError(f"{args.contacts}: {exc}") from exc
        contacts = contacts_from_json(text, mesh)
    else:
        contacts = poisson_disk_contacts(mesh, cfg.N, seed=cfg.seed)
    moments = compute_moments(mesh)
    maps = precompute_maps(mesh, cfg.material(), contacts, contact_radius=cfg.contact_radius)
    data = CacheData(
        material=cfg.material(),
        contact_radius=cfg.contact_radius,
        moments=moments,
        contacts=contacts,
        maps=maps,
        n_vertices=mesh.n_vertices,
        mesh_sha=mesh_hash(mesh),
        map_sha=bytes.fromhex(cfg.map_hash()),
        config_sha=bytes.fromhex(cfg.hash()),
    )
    sha = write_cache(args.cache, data)
    emit(
        {
            "cache": str(args.cache),
            "cache_sha256": sha,
            "bytes": Path(args.cache).stat().st_size,
            "K": mesh.n_triangles,
            "V": mesh.n_vertices,
            "N": len(contacts),
            "config": cfg.to_dict(),
        }
    )
    return EXIT_OK


def write_trace_csv(path, trace) -> Path:
    path = Path(path)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["iteration", "lower_bound", "support_objective", "upper_bound"])
        for row in trace:
            w.writerow([int(row[0])] + [repr(float(v)) for v in row[1:]])
    return path


def cmd_metric(args) -> int:
    cfg = load_config(args)
    if not args.cache:
        raise InputError("metric needs --cache")
    data = open_cache(args.cache, cfg)
    sel = parse_selection(args.select, data.N)
    problem = build_problem(data, cfg, args.kind).restrict(sel)
    if sel:
        ensure_seed_set(problem, cfg.S_count, cfg.K_seed_size, cfg.seed)
    rep = q_lower_bound(problem, cfg.eps, max_expansions=cfg.max_expansions, D_init=cfg.D_init)
    out = rep.to_dict()
    out.update({"selection": sel, "eps": cfg.eps, "config": cfg.to_dict(), "cache_sha256": data.file_sha})
    if args.csv:
        write_trace_csv(args.csv, rep.trace)
        from .plotting import plot_convergence, png_path

        plot_convergence(rep.trace, png_path(args.csv), title=f"{args.kind} on contacts {sel}")
        out["csv"] = str(args.csv)
        out["png"] = str(png_path(args.csv))
    emit(out)
    return EXIT_OK


def cmd_plan(args) -> int:
    cfg = load_config(args)
    if not args.cache:
        raise InputError("plan needs --cache")
    data = open_cache(args.cache, cfg)
    if cfg.C > data.N:
        raise InputError(f"cannot select C={cfg.C} of N={data.N} candidates")
    problem = build_problem(data, cfg, args.kind)
    ensure_seed_set(problem, cfg.S_count, cfg.K_seed_size, cfg.seed)
    ev = SubsetEvaluator(problem, cfg.eps, seed=cfg.seed, max_expansions=cfg.max_expansions, bound_method=cfg.bound_method)
    plan = branch_and_bound(problem, cfg.C, budget=cfg.budget, evaluator=ev, eps=cfg.eps)
    out = plan.to_dict()
    if args.oracle:
        ref = exhaustive_plan(problem, cfg.C, evaluator=SubsetEvaluator(problem, cfg.eps, max_expansions=cfg.max_expansions))
        out["oracle"] = {"indices": list(ref.selection), "Q": ref.Q}
        out["oracle_match"] = tuple(ref.selection) == tuple(plan.selection) and abs(ref.Q - plan.Q) <= 1e-6 * abs(ref.Q) + 1e-15
    out.update({"config": cfg.to_dict(), "cache_sha256": data.file_sha})
    if args.csv:
        path = Path(args.csv)
        with path.open("w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["index", "x", "y", "z", "nx", "ny", "nz", "triangle", "selected"])
            for c in data.contacts:
                w.writerow([c.index, *map(repr, map(float, c.position)), *map(repr, map(float, c.normal)), c.triangle, int(c.index in plan.selection)])
        from .plotting import plot_candidates, png_path

        plot_candidates([c.position for c in data.contacts], [c.normal for c in data.contacts], plan.selection, png_path(path),
                        title=f"{args.kind} plan, Q = {plan.Q:.4g}")
        out["csv"] = str(path)
        out["png"] = str(png_path(path))
    emit(out)
    status = "certified optimal" if plan.optimal else "budget exhausted, not certified"
    print(
        f"selected {list(plan.selection)} of {data.N} candidates: {args.kind} Q = {plan.Q:.6g} "
        f"(upper {plan.upper:.6g}, {status}; {plan.expansions} expansions, {plan.pruned} prunes, "
        f"{plan.wall_time:.1f} s)",
        file=sys.stderr,
    )
    return EXIT_OK


def cmd_selftest(args) -> int:
    from .acceptance import run_suite

    results = run_suite(args.level, echo=True)
    return EXIT_OK if all(r.passed for r in results) else EXIT_FAIL


# --------------------------------------------------------------------------
# entry point


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="stressgrasp", description="Stress-bounded grasp quality tools.")
    p.add_argument("--verbose", "-v", action="store_true", help="debug logging to stderr")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, cache=True):
        sp.add_argument("--config", help="RunConfig JSON file")
        if cache:
            sp.add_argument("--cache", help="FGBM stress-map cache")
        sp.add_argument("--seed", type=int, help="random seed (overrides config)")
        sp.add_argument("--verbose", "-v", action="store_true", default=argparse.SUPPRESS)

    sp = sub.add_parser("precompute", help="assemble the stress maps of a mesh and its candidate contacts")
    common(sp)
    sp.add_argument("--mesh", help="OBJ/OFF file or builtin:icosphere:L | builtin:box:D | builtin:dumbbell:M")
    sp.add_argument("--contacts", help="contact JSON (default: sample N by Poisson-disk)")
    sp.add_argument("--count", "-N", type=int, help="number of sampled candidates (overrides config N)")
    sp.set_defaults(func=cmd_precompute)

    sp = sub.add_parser("metric", help="evaluate a grasp metric on a subset of the cached contacts")
    common(sp)
    sp.add_argument("--kind", choices=["qsm", "q1"], default="qsm")
    sp.add_argument("--select", help="comma-separated contact indices (default: all)")
    sp.add_argument("--eps", type=float, help="relative stopping tolerance (default 0.001)")
    sp.add_argument("--csv", help="write the per-iteration bounds here, with a PNG plot beside it")
    sp.set_defaults(func=cmd_metric)

    sp = sub.add_parser("plan", help="select C contacts maximizing the metric (branch and bound)")
    common(sp)
    sp.add_argument("--kind", choices=["qsm", "q1"], default="qsm")
    sp.add_argument("--count", "-C", type=int, help="number of contacts to select (overrides config C)")
    sp.add_argument("--eps", type=float, help="relative stopping tolerance of each evaluation")
    sp.add_argument("--oracle", action="store_true", help="also run exhaustive enumeration and compare")
    sp.add_argument("--csv", help="write the candidate table here, with a PNG plot beside it")
    sp.set_defaults(func=cmd_plan)

    sp = sub.add_parser("selftest", help="run the acceptance suite")
    sp.add_argument("--level", choices=["fast", "full"], default="fast")
    sp.add_argument("--verbose", "-v", action="store_true", default=argparse.SUPPRESS)
    sp.set_defaults(func=cmd_selftest)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except InputError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except NumericalError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except StressGraspError as exc:  # pragma: no cover - every error derives from the two above
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (ValueError, IndexError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
