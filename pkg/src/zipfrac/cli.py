"""Command-line front end driven by a JSON run configuration.

Exit codes: 0 success, 1 a check failed, 2 configuration error, 3 memory budget
exceeded, 4 no admissible scaling, 5 unsupported setting.
"""

from __future__ import annotations

import argparse
import json
import logging
import math
import sys
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np

from . import __version__
from .bernstein import (BernsteinSpec, bernstein_basis, bernstein_extrema, bernstein_sup_error,
                        verify_lipschitz)
from .dimension import dimension_report, required_level
from .errors import ConfigError, ZipfracError
from .fractal import (DEFAULT_BUDGET, BaseFunction, FractalConfig, ScalingField, build_surface,
                      germ_scaling, multilinear_field, perturbation_bound, rb_iterates,
                      residual_check, sup_gap)
from .germ import GermFunction, TabulatedGrid, builtin, lift_tabulated
from .grid import Partition, Signature, build_affine_maps, check_join
from .io import read_grid_csv, write_grid_csv, write_json
from .shape import (DominatesFunction, DominatesSurfaceOf, IncreasingAlong, NonNegative,
                    ShapeReport, combine, dominance_interval, monotone_interval, pick_scaling,
                    positivity_interval, verify_shape)

log = logging.getLogger("zipfrac")

DEFAULT_TOLERANCES = {
    "interpolation": 1e-12,
    "residual": 1e-10,
    "match": 1e-10,
    "bound": 1e-9,
    "verify": 1e-9,
    "lipschitz": 1e-9,
    "gradient": 1e-6,
    "contraction": 1e-6,
}


@dataclass
class Run:
    """Validated inputs for one invocation."""

    raw: dict
    partition: Partition
    signature: Signature
    alpha: ScalingField
    germ: GermFunction
    base: BaseFunction
    data: TabulatedGrid | None
    level: int
    seed: int
    grid_per_axis: int
    budget: int
    out_dir: Path
    tolerances: dict = field(default_factory=dict)
    base_dir: Path = Path(".")

    def config(self, alpha: ScalingField | None = None, germ: GermFunction | None = None,
               base: BaseFunction | None = None) -> FractalConfig:
        return FractalConfig(self.partition, self.signature, alpha or self.alpha,
                             germ or self.germ, base or self.base)

    def section(self, name: str) -> dict:
        sec = self.raw.get(name, {})
        if not isinstance(sec, dict):
            raise ConfigError(f"{name} must be an object", key=name)
        return sec

    def output(self, name: str, default: str) -> Path:
        return self.out_dir / self.section("outputs").get(name, default)


def _require(cond: bool, message: str, key: str):
    if not cond:
        raise ConfigError(message, key=key)


def parse_partition(cfg: dict) -> Partition | None:
    dom = cfg.get("domain")
    if dom is None:
        return None
    axes = dom.get("axes") if isinstance(dom, dict) else None
    _require(isinstance(axes, list) and axes, "domain.axes must be a non-empty list", "domain.axes")
    nodes = []
    for k, ax in enumerate(axes):
        key = f"domain.axes[{k}]"
        _require(isinstance(ax, dict), "axis entry must be an object", key)
        if "nodes" in ax:
            try:
                nodes.append(np.array([_number(v, f"{key}.nodes") for v in ax["nodes"]], dtype=float))
            except TypeError:
                raise ConfigError("nodes must be a list of numbers", key=f"{key}.nodes")
        else:
            n = ax.get("N")
            _require(isinstance(n, int) and n >= 2, "uniform axis needs integer N >= 2", f"{key}.N")
            lo, hi = float(ax.get("min", 0.0)), float(ax.get("max", 1.0))
            _require(hi > lo, "max must exceed min", key)
            nodes.append(np.linspace(lo, hi, n + 1))
    return Partition(tuple(nodes))


def _number(v, key: str) -> float:
    """Numbers or simple fractions such as "2/3"."""
    if isinstance(v, (int, float)) and not isinstance(v, bool):
        return float(v)
    if isinstance(v, str) and "/" in v:
        a, b = v.split("/", 1)
        try:
            return float(a) / float(b)
        except ValueError:
            pass
    raise ConfigError(f"expected a number, got {v!r}", key=key)


def parse_germ_spec(spec, partition: Partition, key: str, base_dir: Path):
    """Return (germ, tabulated data or None)."""
    _require(isinstance(spec, dict), "germ spec must be an object", key)
    if "builtin" in spec:
        params = spec.get("params", {})
        _require(isinstance(params, dict), "params must be an object", f"{key}.params")
        g = builtin(spec["builtin"], partition, **params)
        if "holder" in spec or "lipschitz" in spec:
            g = GermFunction(name=g.name, fn=g.fn, lower=g.lower, upper=g.upper, grad=g.grad,
                             holder=float(spec.get("holder", g.holder)),
                             lipschitz=spec.get("lipschitz", g.lipschitz), convex=g.convex,
                             params=g.params)
        return g, None
    if "csv" in spec:
        data = read_grid_csv(base_dir / spec["csv"])
    elif "data" in spec:
        data = TabulatedGrid(partition, np.asarray(spec["data"], dtype=float))
    else:
        raise ConfigError("germ needs one of builtin, csv, data", key=key)
    return lift_tabulated(data), data


def parse_scaling(spec, partition: Partition) -> ScalingField:
    _require(isinstance(spec, dict), "scaling must be an object", "scaling")
    if "constant" in spec:
        return ScalingField.global_constant(_number(spec["constant"], "scaling.constant"))
    if "per_cell" in spec:
        return ScalingField.per_cell(spec["per_cell"])
    if "pullback" in spec:
        pb = spec["pullback"]
        _require(isinstance(pb, dict), "pullback must be an object", "scaling.pullback")
        if "node_values" in pb:
            vals = np.asarray(pb["node_values"], dtype=float)
            try:
                field_fn = multilinear_field(partition, vals)
            except ConfigError as exc:
                raise ConfigError(str(exc), key="scaling.pullback.node_values") from exc
            return ScalingField.pullback(field_fn, partition, name="node-values")
        if "builtin" in pb:
            return germ_scaling(pb["builtin"], partition, float(pb.get("scale", 1.0)), **pb.get("params", {}))
        raise ConfigError("pullback needs node_values or builtin", key="scaling.pullback")
    raise ConfigError("scaling needs one of constant, pullback, per_cell", key="scaling")


def parse_base(spec, germ: GermFunction, partition: Partition, base_dir: Path) -> BaseFunction:
    if spec is None:
        spec = {"bernstein": [1] * partition.m}
    _require(isinstance(spec, dict), "base must be an object", "base")
    if "bernstein" in spec:
        n = spec["bernstein"]
        n = [n] * partition.m if isinstance(n, int) else n
        _require(isinstance(n, list) and all(isinstance(v, int) for v in n),
                 "bernstein needs an integer degree vector", "base.bernstein")
        return BaseFunction.bernstein(germ, n)
    if "user" in spec:
        g, _ = parse_germ_spec(spec["user"], partition, "base.user", base_dir)
        return BaseFunction.user(g)
    raise ConfigError("base needs bernstein or user", key="base")


def load_config(path: str) -> tuple[dict, Path]:
    p = Path(path)
    if not p.exists():
        try:
            ref = resources.files("zipfrac") / "recipes" / f"{path}.json"
            if ref.is_file():
                return json.loads(ref.read_text()), Path(".")
        except (ModuleNotFoundError, FileNotFoundError):
            pass
        raise ConfigError(f"config file {path} not found", key="--config")
    try:
        return json.loads(p.read_text()), p.parent
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc})", key="--config") from exc


def build_run(cfg: dict, base_dir: Path, out_dir: Path, seed: int | None = None,
              level: int | None = None) -> Run:
    _require(isinstance(cfg, dict), "config must be a JSON object", "$")
    partition = parse_partition(cfg)
    germ_spec = cfg.get("germ")
    _require(germ_spec is not None, "germ is required", "germ")
    if partition is None:
        _require(isinstance(germ_spec, dict) and "csv" in germ_spec,
                 "domain is required unless the germ comes from a CSV file", "domain")
        partition = read_grid_csv(base_dir / germ_spec["csv"]).partition
    germ, data = parse_germ_spec(germ_spec, partition, "germ", base_dir)
    if data is not None:
        same = data.partition.m == partition.m and all(
            a.shape == b.shape and np.allclose(a, b, rtol=0, atol=1e-12)
            for a, b in zip(data.partition.nodes, partition.nodes))
        _require(same, "CSV nodes do not match the configured domain", "germ.csv")
        partition = data.partition
    sig = cfg.get("signature", [0] * partition.m)
    _require(isinstance(sig, list), "signature must be a list of bits", "signature")
    signature = Signature(tuple(sig))
    _require(signature.m == partition.m, f"signature needs {partition.m} bits", "signature")
    alpha = parse_scaling(cfg.get("scaling", {"constant": 0.0}), partition)
    base = parse_base(cfg.get("base"), germ, partition, base_dir)
    tolerances = dict(DEFAULT_TOLERANCES)
    tol_cfg = cfg.get("tolerances", {})
    _require(isinstance(tol_cfg, dict), "tolerances must be an object", "tolerances")
    for k, v in tol_cfg.items():
        _require(k in DEFAULT_TOLERANCES, f"unknown tolerance {k!r}", f"tolerances.{k}")
        tolerances[k] = _number(v, f"tolerances.{k}")
    lvl = cfg.get("level", 4) if level is None else level
    _require(isinstance(lvl, int) and lvl >= 0, "level must be a nonnegative integer", "level")
    sd = cfg.get("seed", 0) if seed is None else seed
    _require(isinstance(sd, int), "seed must be an integer", "seed")
    gpa = cfg.get("grid_per_axis", 129)
    _require(isinstance(gpa, int) and gpa >= 33, "grid_per_axis must be an integer >= 33", "grid_per_axis")
    budget = cfg.get("budget", DEFAULT_BUDGET)
    _require(isinstance(budget, int) and budget > 0, "budget must be a positive integer", "budget")
    return Run(cfg, partition, signature, alpha, germ, base, data, lvl, sd, gpa, budget, out_dir,
               tolerances, base_dir)


def _surface_summary(run: Run, surface) -> dict:
    config = surface.config
    tol = run.tolerances
    err = float(np.max(np.abs(surface.values - surface.germ_values())))
    bound = perturbation_bound(config, run.grid_per_axis, extra_axes=surface.axes)
    resid = residual_check(surface)
    nodes = run.data.values if run.data is not None else config.germ.on_grid(config.partition.nodes)
    interp = float(np.max(np.abs(surface.node_values() - nodes)))
    checks = {
        "bound_check": err <= bound + tol["bound"],
        "residual_check": resid <= tol["residual"],
        "interpolation_check": interp <= tol["interpolation"],
        "boundary_check": surface.boundary_mismatch <= tol["match"],
    }
    return {
        "level": surface.level,
        "shape": list(surface.shape),
        "count": int(surface.values.size),
        "germ": config.germ.name,
        "base": config.base.describe(),
        "alpha": config.alpha.describe(),
        "signature": list(config.signature.bits),
        "sup_error": err,
        "perturbation_bound": bound,
        "residual": resid,
        "boundary_mismatch": surface.boundary_mismatch,
        "interpolation_error": interp,
        **checks,
        "pass": all(checks.values()),
    }


def cmd_build(run: Run, command: str = "build") -> tuple[int, dict]:
    if command == "interp" and run.data is None:
        raise ConfigError("interp needs tabulated germ data (csv or data)", key="germ")
    surface = build_surface(run.config(), run.level, run.budget, run.tolerances["match"])
    summary = {"command": command, **_surface_summary(run, surface)}
    write_grid_csv(run.output("surface_csv", "surface.csv"), surface.axes, surface.values)
    write_json(run.output("summary_json", "summary.json"), summary)
    return (0 if summary["pass"] else 1), summary


def cmd_bernstein(run: Run) -> tuple[int, dict]:
    _require(run.base.tag == "bernstein", "bernstein command needs base.bernstein", "base")
    spec = run.base.evaluator
    axes = spec.sample_axes(run.grid_per_axis)
    write_grid_csv(run.output("bernstein_csv", "bernstein.csv"), axes, spec.on_grid(axes))
    lo, hi = bernstein_extrema(spec, run.grid_per_axis)
    summary = {"command": "bernstein", "degrees": list(spec.degrees), "min": lo, "max": hi,
               "sup_error": bernstein_sup_error(spec, run.grid_per_axis),
               "grid_per_axis": run.grid_per_axis}
    write_json(run.output("summary_json", "bernstein.json"), summary)
    return 0, summary


def cmd_convergence(run: Run) -> tuple[int, dict]:
    sec = run.section("convergence")
    n_list = sec.get("n_list", [3, 5, 10, 20])
    _require(isinstance(n_list, list) and n_list, "n_list must be a non-empty list", "convergence.n_list")
    rows = []
    a = run.alpha.norm
    for n in n_list:
        degrees = [n] * run.partition.m if isinstance(n, int) else list(n)
        base = BaseFunction.bernstein(run.germ, degrees)
        surface = build_surface(run.config(base=base), run.level, run.budget, run.tolerances["match"])
        b_err = sup_gap(surface.config, run.grid_per_axis, extra_axes=surface.axes)
        s_err = float(np.max(np.abs(surface.values - surface.germ_values())))
        bound = a / (1 - a) * b_err
        rows.append({"n": degrees, "bernstein_error": b_err, "surface_error": s_err, "bound": bound,
                     "ok": s_err <= bound + run.tolerances["bound"]})
    shrinking = rows[-1]["bernstein_error"] < rows[0]["bernstein_error"] or rows[0]["bernstein_error"] == 0
    summary = {"command": "convergence", "alpha": run.alpha.describe(), "level": run.level,
               "rows": rows, "bernstein_error_shrinks": shrinking,
               "pass": all(r["ok"] for r in rows)}
    write_json(run.output("convergence_json", "convergence.json"), summary)
    return (0 if summary["pass"] else 1), summary


def _degrees_from_base(run: Run):
    _require(run.base.tag == "bernstein", "shape workflows need base.bernstein", "base")
    return run.base.degrees


def cmd_shape(run: Run) -> tuple[int, dict]:
    sec = run.section("shape")
    prop = sec.get("property")
    strategy = sec.get("strategy", "max_constant")
    level = sec.get("level", run.level)
    n = _degrees_from_base(run)
    maps = build_affine_maps(run.partition, run.signature)
    tol = run.tolerances["verify"]
    if prop == "positivity":
        C_n = sec.get("C_n")
        intervals = positivity_interval(run.germ, maps, n, None if C_n is None else float(C_n), run.grid_per_axis)
    elif prop in ("dominance", "dominance_pairwise"):
        _require("g" in sec, "dominance needs shape.g", "shape.g")
        g, _ = parse_germ_spec(sec["g"], run.partition, "shape.g", run.base_dir)
        intervals = dominance_interval(run.germ, g, maps, n, run.grid_per_axis,
                                       pairwise=prop == "dominance_pairwise")
    elif prop == "monotone":
        axes = sec.get("axis", list(range(1, run.partition.m + 1)))
        axes = [axes] if isinstance(axes, int) else axes
        _require(all(isinstance(l, int) and 1 <= l <= run.partition.m for l in axes),
                 "axis must be 1-based axis numbers", "shape.axis")
        intervals = combine(*(monotone_interval(run.germ, maps, n, l - 1, run.grid_per_axis) for l in axes))
    else:
        raise ConfigError("shape.property must be positivity, dominance, dominance_pairwise or monotone",
                          key="shape.property")
    alpha = pick_scaling(intervals, strategy, run.partition, nonzero=bool(sec.get("nonzero", False)))
    surface = build_surface(run.config(alpha=alpha), level, run.budget, run.tolerances["match"])
    if prop == "positivity":
        report = verify_shape(surface, NonNegative(), tol, intervals)
    elif prop == "dominance":
        report = verify_shape(surface, DominatesFunction(g), tol, intervals)
    elif prop == "dominance_pairwise":
        g_surface = build_surface(run.config(alpha=alpha, germ=g, base=BaseFunction.bernstein(g, n)),
                                  level, run.budget, run.tolerances["match"])
        report = verify_shape(surface, DominatesSurfaceOf(g_surface), tol, intervals)
    else:
        parts = [verify_shape(surface, IncreasingAlong(l - 1), tol, intervals) for l in axes]
        worst = min(parts, key=lambda r: r.worst_violation)
        report = ShapeReport("monotone", worst.worst_violation, worst.location,
                             all(p.passed for p in parts), intervals, alpha.describe(), surface.level)
    out = report.to_json()
    out["property"] = prop
    out["strategy"] = strategy
    write_json(run.output("shape_json", "shape.json"), out)
    return (0 if report.passed else 1), out


def cmd_dim(run: Run) -> tuple[int, dict]:
    sec = run.section("dim")
    r_range = sec.get("r_range", run.raw.get("r_range", [2, 6]))
    _require(isinstance(r_range, list) and len(r_range) == 2 and r_range[1] - r_range[0] >= 2,
             "r_range must be [r_min, r_max] with r_max - r_min >= 2", "r_range")
    oversample = sec.get("oversample", 4)
    level = sec.get("level")
    if level is None:
        level = required_level(run.partition, r_range[1], oversample)
    xi1 = float(sec.get("xi1", run.germ.holder or 1.0))
    xi2 = sec.get("xi2")
    if xi2 is None:
        # a Bernstein base inherits the germ's Hölder exponent
        ev = run.base.evaluator
        xi2 = xi1 if run.base.tag == "bernstein" else float(getattr(ev, "holder", None) or xi1)
    surface = build_surface(run.config(), level, run.budget, run.tolerances["match"])
    report = dimension_report(surface, xi1, float(xi2), tuple(r_range))
    out = {"command": "dim", "level": level, **report.to_json()}
    write_json(run.output("dimension_json", "dimension.json"), out)
    return (0 if report.passed else 1), out


def _suite_bernstein(run: Run, rng) -> tuple[bool, str]:
    if run.base.tag != "bernstein":
        return True, "skipped (user base)"
    spec = run.base.evaluator
    P = 1000
    X = spec.lower + rng.random((P, spec.m)) * (spec.upper - spec.lower)
    unity = 0.0
    for k, n in enumerate(spec.degrees):
        unity = max(unity, float(np.max(np.abs(bernstein_basis(n, spec._scaled(k, X[:, k])).sum(axis=1) - 1))))
    corners = run.partition.corners()
    corner_err = float(np.max(np.abs(spec(corners) - run.germ(corners))))
    deriv = 0.0
    inner = spec.lower + (0.1 + 0.8 * rng.random((50, spec.m))) * (spec.upper - spec.lower)
    for l in range(spec.m):
        h = 1e-6 * (spec.upper[l] - spec.lower[l])
        e = np.zeros(spec.m)
        e[l] = h
        fd = (spec(inner + e) - spec(inner - e)) / (2 * h)
        ex = spec.partial(inner, l)
        deriv = max(deriv, float(np.max(np.abs(fd - ex) / np.maximum(1.0, np.abs(ex)))))
    ok = unity <= 1e-12 and corner_err == 0.0 and deriv <= run.tolerances["gradient"]
    return ok, f"unity={unity:.2e} corners={corner_err:.2e} dB/dx={deriv:.2e}"


def cmd_verify(run: Run) -> tuple[int, dict]:
    sec = run.section("verify")
    rng = np.random.default_rng(run.seed)
    tol = run.tolerances
    config = run.config()
    surface = build_surface(config, run.level, run.budget, tol["match"])
    corrupt = sec.get("corrupt")
    if corrupt is not None:
        _require(isinstance(corrupt, dict), "corrupt must be an object", "verify.corrupt")
        vals = surface.values.copy()
        idx = int(corrupt.get("index", vals.size // 2))
        _require(0 <= idx < vals.size, "corrupt.index out of range", "verify.corrupt.index")
        vals.ravel()[idx] += float(corrupt.get("delta", 0.1))
        surface = surface.with_values(vals)
    results = {}
    join = check_join(config.maps)
    results["join"] = (join.ok, f"max residual={max(float(r.max(initial=0)) for r in join.residuals):.2e}")
    nodes = run.data.values if run.data is not None else run.germ.on_grid(run.partition.nodes)
    interp = float(np.max(np.abs(surface.node_values() - nodes)))
    results["interpolation"] = (interp <= tol["interpolation"], f"max error={interp:.2e}")
    resid = residual_check(surface)
    results["residual"] = (resid <= tol["residual"], f"max residual={resid:.2e}")
    results["boundary"] = (surface.boundary_mismatch <= tol["match"],
                           f"max mismatch={surface.boundary_mismatch:.2e}")
    err = float(np.max(np.abs(surface.values - surface.germ_values())))
    bound = perturbation_bound(config, run.grid_per_axis, extra_axes=surface.axes)
    results["perturbation"] = (err <= bound + tol["bound"], f"sup error={err:.3e} bound={bound:.3e}")
    results["bernstein"] = _suite_bernstein(run, rng)
    A, beta = run.germ.lipschitz, run.germ.holder
    if run.base.tag == "bernstein" and A is not None and beta is not None:
        rep = verify_lipschitz(run.base.evaluator, A, beta, int(sec.get("lipschitz_trials", 10_000)),
                               run.seed, tol["lipschitz"])
        results["lipschitz"] = (rep.passed, f"A={A:.4g} max ratio={rep.max_ratio:.4g}")
    else:
        results["lipschitz"] = (True, "skipped (no Hölder metadata)")
    if run.level >= 1 and corrupt is None:
        diffs = rb_iterates(surface, run.level + 3)
        ratios = [b / a for a, b in zip(diffs, diffs[1:]) if a > 1e-14]
        worst = max(ratios, default=0.0)
        results["rb_contraction"] = (worst <= run.alpha.norm + tol["contraction"],
                                     f"worst ratio={worst:.4g} norm={run.alpha.norm:.4g}")
    selected = sec.get("suites")
    if selected is not None:
        unknown = [s for s in selected if s not in results]
        _require(not unknown, f"unknown suites {unknown}; known: {sorted(results)}", "verify.suites")
        results = {k: v for k, v in results.items() if k in selected}
    table = [{"suite": k, "pass": bool(ok), "detail": detail} for k, (ok, detail) in results.items()]
    out = {"command": "verify", "level": run.level, "suites": table,
           "pass": all(r["pass"] for r in table)}
    write_json(run.output("verify_json", "verify.json"), out)
    return (0 if out["pass"] else 1), out


def _print_verify_table(out: dict, stream):
    width = max(len(r["suite"]) for r in out["suites"])
    for r in out["suites"]:
        stream.write(f"{r['suite']:<{width}}  {'PASS' if r['pass'] else 'FAIL'}  {r['detail']}\n")


COMMANDS = {
    "build": lambda run: cmd_build(run, "build"),
    "interp": lambda run: cmd_build(run, "interp"),
    "bernstein": cmd_bernstein,
    "convergence": cmd_convergence,
    "shape": cmd_shape,
    "dim": cmd_dim,
    "verify": cmd_verify,
}


def make_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="zipfrac", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", required=True, help="JSON run configuration or shipped recipe name")
    common.add_argument("--out-dir", default=".", help="directory for output files")
    common.add_argument("--seed", type=int, default=None, help="override the config seed")
    common.add_argument("--level", type=int, default=None, help="override the refinement level")
    common.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        sub.add_parser(name, parents=[common])
    return parser


def main(argv=None) -> int:
    args = make_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg, base_dir = load_config(args.config)
        run = build_run(cfg, base_dir, Path(args.out_dir), args.seed, args.level)
        code, out = COMMANDS[args.command](run)
    except ZipfracError as exc:
        err = {"error": type(exc).__name__, "exit_code": exc.exit_code, "key": exc.key, "message": str(exc)}
        for attr in ("count", "budget", "blocking"):
            if hasattr(exc, attr):
                err[attr] = getattr(exc, attr)
        sys.stderr.write(json.dumps(err) + "\n")
        return exc.exit_code
    if args.command == "verify":
        _print_verify_table(out, sys.stdout)
    else:
        sys.stdout.write(json.dumps(out, indent=2) + "\n")
    return code


if __name__ == "__main__":
    sys.exit(main())
