"""``opticroute`` command-line entry point.

Every command reads one JSON config; ``--seed``, ``--out`` and ``--grid-h``
override individual keys.  Exit status is 0 on success, 2 for configuration
errors and 3 for numerical failures.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import costmodels as cm
from . import microsim as ms
from .eikonal import DiskSource, PointSource, PolygonSource, extract_wavefronts, solve, trace_descent_ray
from .errors import ConfigError, OpticrouteError
from .expr import Expression
from .field import (
    FieldKind,
    GridSpec,
    ScalarField2D,
    Trajectory,
    line_integral,
    max_abs_coordinate,
    mean_abs_coordinate,
    read_field_csv,
    write_field_csv,
    write_polylines_csv,
    write_trajectory_csv,
)
from .raytrace import shoot
from .svg import PALETTE, Figure

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERIC = 3

COMMANDS = ("cost-field", "eikonal", "route", "compare", "hopstats")
ROUTE_LABELS = {"min_hop": "R1", "constant": "R2", "energy": "R3", "bandwidth": "R4", "tabulated": "RT"}


class ArtifactError(Exception):
    """Wraps a failure with the label of the artifact being produced."""

    def __init__(self, label: str, exc: BaseException):
        super().__init__(f"[{label}] {exc}")
        self.label = label
        self.cause = exc

    def __reduce__(self):
        return (ArtifactError, (self.label, self.cause))


def _stage(label: str, fn, *args, **kwargs):
    try:
        return fn(*args, **kwargs)
    except ArtifactError:
        raise
    except (OpticrouteError, ValueError, ArithmeticError) as exc:
        raise ArtifactError(label, exc) from exc


# -- configuration ----------------------------------------------------------------

@dataclass
class ExperimentConfig:
    domain: GridSpec
    density: ScalarField2D
    cost_models: list
    source: object | None
    A: tuple | None
    B: tuple | None
    seeds: list
    output_dir: Path
    options: dict = field(default_factory=dict)


def _point(value, key: str) -> tuple[float, float]:
    try:
        x, y = (float(v) for v in value)
    except (TypeError, ValueError):
        raise ConfigError(f"{key}: expected [x, y], got {value!r}") from None
    if not (math.isfinite(x) and math.isfinite(y)):
        raise ConfigError(f"{key}: coordinates must be finite")
    return (x, y)


def _number(cfg: dict, key: str, default=None, positive: bool = False) -> float:
    if key not in cfg:
        if default is None:
            raise ConfigError(f"missing required key {key!r}")
        return default
    try:
        v = float(cfg[key])
    except (TypeError, ValueError):
        raise ConfigError(f"{key}: expected a number, got {cfg[key]!r}") from None
    if not math.isfinite(v) or (positive and not v > 0):
        raise ConfigError(f"{key}: expected a positive finite number, got {cfg[key]!r}")
    return v


def _domain(cfg: dict) -> GridSpec:
    d = cfg.get("domain")
    if not isinstance(d, dict):
        raise ConfigError("domain: expected an object with x_min, x_max, y_min, y_max, h")
    h = _number(d, "h", positive=True)
    try:
        if "nx" in d:
            return GridSpec(_number(d, "x_min"), _number(d, "y_min"), int(d["nx"]), int(d["ny"]), h)
        return GridSpec.from_extent(_number(d, "x_min"), _number(d, "x_max"), _number(d, "y_min"), _number(d, "y_max"), h)
    except OpticrouteError as exc:
        raise ConfigError(f"domain: {exc}") from None


def _density(cfg: dict, base: Path, h_override: float | None):
    d = cfg.get("density")
    if not isinstance(d, dict):
        raise ConfigError("density: expected {\"expression\": ...} or {\"csv_path\": ...}")
    if "csv_path" in d:
        path = (base / d["csv_path"]).resolve()
        if not path.exists():
            raise ConfigError(f"density.csv_path: file {path} does not exist")
        try:
            dens = read_field_csv(path)
        except (OSError, ValueError, KeyError) as exc:
            raise ConfigError(f"density.csv_path: {exc}") from None
        if h_override is not None and h_override != dens.spec.h:
            s = dens.spec
            spec = GridSpec.from_extent(s.x_min, s.x_max, s.y_min, s.y_max, h_override)
            X, Y = spec.mesh()
            pts = np.column_stack([np.minimum(X.ravel(), s.x_max), np.minimum(Y.ravel(), s.y_max)])
            dens = ScalarField2D(spec, dens.sample_many(pts).reshape(spec.shape), FieldKind.DENSITY)
        return dens.spec, dens
    if "expression" not in d:
        raise ConfigError("density: needs 'expression' or 'csv_path'")
    spec = _domain(cfg)
    expr = Expression(d["expression"])
    vals = expr(*spec.mesh())
    if not np.all(np.isfinite(vals)) or not np.all(vals > 0):
        raise ConfigError(f"density.expression {d['expression']!r} is not strictly positive on the domain")
    return spec, ScalarField2D(spec, vals, FieldKind.DENSITY)


def _cost_models(cfg: dict) -> list:
    raw = cfg.get("cost_models")
    if raw is None:
        raw = [cfg.get("cost_model", {"type": "bandwidth"})]
    if not isinstance(raw, list) or not raw:
        raise ConfigError("cost_models: expected a non-empty list")
    out = []
    for k, m in enumerate(raw):
        if not isinstance(m, dict):
            raise ConfigError(f"cost_models[{k}]: expected an object")
        m = dict(m)
        label = m.pop("label", None)
        try:
            model = cm.cost_model_from_dict(m)
        except (OpticrouteError, ValueError, TypeError) as exc:
            raise ConfigError(f"cost_models[{k}]: {exc}") from None
        out.append((label or ROUTE_LABELS.get(model.name, model.name), model))
    return out


def _source(cfg: dict):
    s = cfg.get("source")
    if s is None:
        return None
    if not isinstance(s, dict):
        raise ConfigError("source: expected an object")
    kind = str(s.get("type", "point")).lower()
    try:
        if kind == "point":
            return PointSource(_point(s.get("point"), "source.point"))
        if kind == "disk":
            return DiskSource(_point(s.get("center"), "source.center"), _number(s, "radius", positive=True))
        if kind == "polygon":
            return PolygonSource(np.asarray(s.get("vertices"), dtype=np.float64))
    except (OpticrouteError, ValueError, TypeError) as exc:
        raise ConfigError(f"source: {exc}") from None
    raise ConfigError(f"source.type: unknown source type {kind!r}")


def load_config(path, *, seed: int | None = None, out: str | None = None, grid_h: float | None = None) -> ExperimentConfig:
    path = Path(path)
    try:
        cfg = json.loads(path.read_text(encoding="utf-8"))
    except FileNotFoundError:
        raise ConfigError(f"config file {path} not found") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config file {path}: invalid JSON ({exc.msg} at line {exc.lineno})") from None
    if not isinstance(cfg, dict):
        raise ConfigError("config root must be a JSON object")
    base = path.parent
    if grid_h is not None:
        if not (grid_h > 0 and math.isfinite(grid_h)):
            raise ConfigError(f"--grid-h must be positive, got {grid_h}")
        if isinstance(cfg.get("domain"), dict):
            cfg["domain"] = dict(cfg["domain"], h=grid_h)
    spec, density = _density(cfg, base, grid_h)
    seeds = cfg.get("seeds", [0])
    if seed is not None:
        seeds = [seed]
    if not isinstance(seeds, list) or not seeds or not all(isinstance(s, int) and s >= 0 for s in seeds):
        raise ConfigError("seeds: expected a non-empty list of nonnegative integers")
    out_dir = Path(out) if out is not None else Path(os.path.normpath(base / cfg.get("output_dir", "out")))
    src = _source(cfg)
    A = _point(cfg["A"], "A") if "A" in cfg else None
    B = _point(cfg["B"], "B") if "B" in cfg else None
    for P, key in ((A, "A"), (B, "B")):
        if P is not None and not spec.contains(P[0], P[1], spec.h):
            raise ConfigError(f"{key}: point {P} is not inside the domain (at least h from the edge)")
    if src is not None:
        try:
            src.check_inside(spec)
        except OpticrouteError as exc:
            raise ConfigError(f"source: {exc}") from None
    return ExperimentConfig(spec, density, _cost_models(cfg), src, A, B, seeds, out_dir, cfg)


def _require(value, key: str, command: str):
    if value is None:
        raise ConfigError(f"{command} needs '{key}' in the config")
    return value


def thread_count() -> int:
    raw = os.environ.get("OPTICROUTE_THREADS", "").strip()
    if not raw:
        return os.cpu_count() or 1
    try:
        n = int(raw)
    except ValueError:
        raise ConfigError(f"OPTICROUTE_THREADS must be a positive integer, got {raw!r}") from None
    if n < 1:
        raise ConfigError(f"OPTICROUTE_THREADS must be a positive integer, got {raw!r}")
    return n


def _mc_opts(cfg: ExperimentConfig) -> dict:
    return {
        "n_trials": int(cfg.options.get("mc_trials", cm.MIN_ENERGY_TRIALS)),
        "seed": int(cfg.options.get("mc_seed", cfg.seeds[0])),
    }


def _cost_field(cfg: ExperimentConfig, label: str, model):
    """Cost field for ``model``; energy models get their table built once here."""
    if isinstance(model, cm.Energy) and model.table is None:
        lam = cfg.density.values
        model = _stage(label, model.build_table, float(lam.min()), float(lam.max()), **_mc_opts(cfg))
    return model, _stage(label, cm.build_cost_field, cfg.density, model)


def _suffix(cfg: ExperimentConfig, label: str) -> str:
    return "" if len(cfg.cost_models) == 1 else f"_{label}"


def _write_json(obj, path: Path):
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(json.dumps(obj, indent=2, sort_keys=True) + "\n")


# -- commands ---------------------------------------------------------------------

def cmd_cost_field(cfg: ExperimentConfig) -> list[Path]:
    out = cfg.output_dir
    written = []
    for label, model in cfg.cost_models:
        suffix = _suffix(cfg, label)
        model, cost = _cost_field(cfg, f"cost_field{suffix}", model)
        written.append(write_field_csv(cost, out / f"cost_field{suffix}.csv"))
        if isinstance(model, cm.Energy):
            written.append(model.table.write_csv(out / f"energy_table{suffix}.csv"))
        fig = Figure.for_field(cost, title=f"cost function ({model.name})")
        fig.heatmap(cost)
        written.append(fig.save(out / f"cost_field{suffix}.svg"))
    return written


def _ray_starts(cfg: ExperimentConfig, sol) -> list[tuple[float, float]]:
    spec = cfg.domain
    if "ray_starts" in cfg.options:
        return [_point(p, f"ray_starts[{k}]") for k, p in enumerate(cfg.options["ray_starts"])]
    fan = cfg.options.get("ray_fan", {})
    count = int(fan.get("count", 16))
    src = cfg.source
    center = getattr(src, "center", None) or getattr(src, "point", None)
    if center is None:
        center = tuple(np.asarray(src.vertices).mean(axis=0))
    center = _point(fan.get("center", center), "ray_fan.center")
    radius = float(fan.get("radius", 0.45 * min(spec.x_max - spec.x_min, spec.y_max - spec.y_min)))
    starts = []
    for k in range(count):
        t = 2.0 * math.pi * k / count
        p = (center[0] + radius * math.cos(t), center[1] + radius * math.sin(t))
        if spec.contains(p[0], p[1], 2 * spec.h) and sol.S.sample(p) > 0:
            starts.append(p)
    return starts


def cmd_eikonal(cfg: ExperimentConfig) -> list[Path]:
    out = cfg.output_dir
    src = _require(cfg.source, "source", "eikonal")
    written = []
    for label, model in cfg.cost_models:
        suffix = _suffix(cfg, label)
        model, cost = _cost_field(cfg, f"cost_field{suffix}", model)
        sol = _stage(f"eikonal{suffix}", solve, cost, src, int(cfg.options.get("fmm_order", 2)))
        written.append(write_field_csv(sol.S, out / f"eikonal{suffix}.csv"))
        s_max = float(sol.S.values.max())
        if "levels" in cfg.options:
            levels = [float(v) for v in cfg.options["levels"]]
        else:
            n = int(cfg.options.get("n_levels", 10))
            levels = [s_max * (k + 1) / (n + 1) for k in range(n)]
        fronts = _stage(f"wavefronts{suffix}", extract_wavefronts, sol, levels)
        flat = [line for group in fronts for line in group]
        written.append(write_polylines_csv(flat, out / f"wavefronts{suffix}.csv"))
        rays = [_stage(f"ray{suffix}_{k}", trace_descent_ray, sol, p) for k, p in enumerate(_ray_starts(cfg, sol))]
        written.append(write_polylines_csv([r.points for r in rays], out / f"rays{suffix}.csv"))
        fig = Figure.for_field(cost, title=f"wavefronts and rays ({model.name})")
        fig.heatmap(cfg.density)
        for k, line in enumerate(flat):
            fig.polyline(line, PALETTE[0], "wavefronts" if k == 0 else None, width=1.0)
        for k, r in enumerate(rays):
            fig.polyline(r.points, PALETTE[1], "rays" if k == 0 else None, width=1.0)
        written.append(fig.save(out / f"eikonal{suffix}.svg"))
    return written


def _route_for(cost: ScalarField2D, A, B, method: str) -> Trajectory:
    if method == "shoot":
        return shoot(cost, A, B)
    if method == "descent":
        return trace_descent_ray(solve(cost, PointSource(A)), B)
    raise ConfigError(f"route.method: expected 'descent' or 'shoot', got {method!r}")


def cmd_route(cfg: ExperimentConfig) -> list[Path]:
    out = cfg.output_dir
    A = _require(cfg.A, "A", "route")
    B = _require(cfg.B, "B", "route")
    method = str(cfg.options.get("method", "descent"))
    fig = Figure.for_field(cfg.density, title="optimal routes")
    fig.heatmap(cfg.density)
    summary = {}
    written = []
    for k, (label, model) in enumerate(cfg.cost_models):
        model, cost = _cost_field(cfg, f"cost_field_{label}", model)
        traj = _stage(f"route_{label}", _route_for, cost, A, B, method)
        straight = Trajectory.from_points([A, B])
        line_integral(cost, straight)
        written.append(write_trajectory_csv(traj, out / f"route_{label}.csv", cost))
        summary[label] = {
            "model": model.to_dict(),
            "optical_length": traj.optical_length,
            "straight_line_cost": straight.optical_length,
            "arc_length": traj.arc_length,
            "mean_abs_x": mean_abs_coordinate(traj),
            "max_abs_x": max_abs_coordinate(traj),
        }
        fig.polyline(traj.points, PALETTE[k % len(PALETTE)], label)
    fig.marker(A, "A")
    fig.marker(B, "B")
    summary["_meta"] = {"A": list(A), "B": list(B), "method": method, "grid": cfg.domain.to_dict()}
    _write_json(summary, out / "routes.json")
    written.append(out / "routes.json")
    written.append(fig.save(out / "routes.svg"))
    return written


def _hop_cost(cfg: ExperimentConfig) -> ms.HopCostKind:
    try:
        return ms.hop_cost_from_dict(cfg.options.get("hop_cost", {"type": "quadratic"}))
    except OpticrouteError as exc:
        raise ConfigError(f"hop_cost: {exc}") from None


def _compare_one(args):
    cfg, cost, hop, seed = args
    out = cfg.output_dir
    net = _stage(f"network_seed{seed}", ms.sample_network, cfg.density, seed)
    rule = str(cfg.options.get("rule", "B"))
    max_edge = cfg.options.get("max_edge")
    rep = _stage(f"compare_seed{seed}", ms.compare, net, cost, hop, cfg.A, cfg.B, rule=rule, max_edge=max_edge)
    rep.metadata["model"] = cfg.cost_models[0][1].to_dict()
    net.write_csv(out / f"network_seed{seed}.csv")
    rep.write_json(out / f"compare_seed{seed}.json")
    for name, traj in rep.trajectories.items():
        write_trajectory_csv(traj, out / f"{name}_seed{seed}.csv", cost)
    for name, route in rep.routes.items():
        route.write_csv(out / f"{name}_seed{seed}.csv")
    return seed, rep


def cmd_compare(cfg: ExperimentConfig) -> list[Path]:
    out = cfg.output_dir
    _require(cfg.A, "A", "compare")
    _require(cfg.B, "B", "compare")
    hop = _hop_cost(cfg)
    label, model = cfg.cost_models[0]
    model, cost = _cost_field(cfg, "cost_field", model)
    jobs = [(cfg, cost, hop, s) for s in cfg.seeds]
    workers = min(thread_count(), len(jobs))
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_compare_one, jobs))
    else:
        results = [_compare_one(j) for j in jobs]
    rows = ["seed," + ",".join(ms.ARTIFACTS) + ",complete"]
    for seed, rep in results:
        rows.append(f"{seed}," + ",".join(repr(float(rep.costs[a])) for a in ms.ARTIFACTS) + f",{int(rep.complete)}")
    summary = out / "compare_summary.csv"
    with open(summary, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("\n".join(rows) + "\n")
    seed, rep = results[0]
    fig = Figure.for_field(cfg.density, title=f"routes compared (seed {seed})")
    fig.heatmap(cfg.density)
    fig.scatter(ms.NetworkRealization.read_csv(out / f"network_seed{seed}.csv").nodes, "#999999", 0.8)
    paths = {**{k: v.points for k, v in rep.trajectories.items()}, **{k: v.points for k, v in rep.routes.items()}}
    for k, name in enumerate(ms.ARTIFACTS):
        fig.polyline(paths[name], PALETTE[k], f"({ms.ARTIFACT_LETTERS[name]}) {name}: {rep.costs[name]:.0f}")
    fig.marker(cfg.A, "A")
    fig.marker(cfg.B, "B")
    return [summary, fig.save(out / "compare.svg")]


def _lambda_grid(cfg: ExperimentConfig) -> np.ndarray:
    raw = cfg.options.get("lambdas", {"min": 0.01, "max": 1.0, "count": 8})
    if isinstance(raw, dict):
        lo, hi = _number(raw, "min", positive=True), _number(raw, "max", positive=True)
        n = int(raw.get("count", 8))
        if hi < lo or n < 1:
            raise ConfigError("lambdas: need min <= max and count >= 1")
        return np.geomspace(lo, hi, n)
    lams = np.asarray(raw, dtype=np.float64)
    if lams.ndim != 1 or len(lams) == 0 or not np.all(lams > 0):
        raise ConfigError("lambdas: expected a list of positive densities")
    return lams


def cmd_hopstats(cfg: ExperimentConfig) -> list[Path]:
    out = cfg.output_dir
    hop = _hop_cost(cfg)
    lams = _lambda_grid(cfg)
    default_n = 100_000 if isinstance(hop, ms.QuadraticHop) else cm.MIN_ENERGY_TRIALS
    n = int(cfg.options.get("n_trials", default_n))
    seed = cfg.seeds[0]
    stats = [_stage(f"hopstats_lambda{lam:g}", ms.hop_stats_mc, float(lam), hop, n, seed) for lam in lams]
    cols = (
        "mean_progress", "se_progress", "mean_cost", "se_cost", "mean_ratio", "se_ratio",
        "cost_per_meter", "se_cost_per_meter", "n_trials", "n_enlarged",
    )
    path = out / "hopstats.csv"
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("lambda," + ",".join(cols) + "\n")
        for lam, s in zip(lams, stats):
            fh.write(repr(float(lam)) + "," + ",".join(repr(getattr(s, c)) for c in cols) + "\n")
    table = cm.EnergyTable(
        lams.copy(),
        np.array([s.cost_per_meter for s in stats]),
        np.array([s.se_cost_per_meter for s in stats]),
    )
    table_path = table.write_csv(out / "energy_table.csv")
    anchor = _stage("hopstats_anchor", ms.hop_stats_mc, cm.ANCHOR_DENSITY, hop, n, seed).cost_per_meter
    loglam = np.log10(lams)
    curves = {
        f"Monte Carlo ({hop.name})": table.cost / anchor,
        "bandwidth": np.sqrt(cm.ANCHOR_DENSITY / lams),
        "nominal": np.ones_like(lams),
        "min_hop": np.sqrt(lams / cm.ANCHOR_DENSITY),
    }
    top = max(float(np.max(c)) for c in curves.values())
    x0, x1 = float(loglam.min()), float(loglam.max())
    if x1 == x0:
        x0, x1 = x0 - 0.5, x1 + 0.5
    fig = Figure(x0, x1, 0.0, max(top, 1.0) * 1.05, title="normalised cost vs log10 density")
    for k, (name, vals) in enumerate(curves.items()):
        fig.polyline(np.column_stack([loglam, vals]), PALETTE[k], name)
    return [path, table_path, fig.save(out / "hopstats.svg")]


HANDLERS = {
    "cost-field": cmd_cost_field,
    "eikonal": cmd_eikonal,
    "route": cmd_route,
    "compare": cmd_compare,
    "hopstats": cmd_hopstats,
}


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="opticroute", description="Cost fields, eikonal routes and network simulations.")
    p.add_argument("command", choices=COMMANDS)
    p.add_argument("--config", required=True, help="JSON experiment configuration")
    p.add_argument("--seed", type=int, help="run a single seed instead of the config's seed list")
    p.add_argument("--out", help="output directory (overrides output_dir)")
    p.add_argument("--grid-h", type=float, dest="grid_h", help="grid spacing (overrides domain.h)")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.seed is not None and args.seed < 0:
            raise ConfigError("--seed must be nonnegative")
        cfg = load_config(args.config, seed=args.seed, out=args.out, grid_h=args.grid_h)
        thread_count()
        cfg.output_dir.mkdir(parents=True, exist_ok=True)
        written = HANDLERS[args.command](cfg)
    except ConfigError as exc:
        print(f"opticroute: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except ArtifactError as exc:
        if isinstance(exc.cause, ConfigError):
            print(f"opticroute: config error {exc}", file=sys.stderr)
            return EXIT_CONFIG
        print(f"opticroute: numeric error {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except OSError as exc:
        print(f"opticroute: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    for path in written:
        print(path)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
