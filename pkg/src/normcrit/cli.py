"""Command-line front end: configuration, dispatch and result files.

Exit status is 0 when the command converged (or its check is satisfied),
2 when it ran but did not converge, and 1 on usage or configuration errors.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import os
import sys
from dataclasses import dataclass, field

import numpy as np

from . import asymptotics, bubbles, mountain
from .functional import StatePair, gn_estimate
from .minsolve import SolveResult, SolverOptions, solve_local_min
from .params import ParamError, ProblemParams, derive_constants, level_bound_gap, validate
from .radial import DEFAULT_M, DEFAULT_R, GRADINGS, RadialField, build_grid, write_pair_csv
from .serialize import SCHEMA_VERSION, dumps, write_json

COMMANDS = ("constants", "solve-min", "solve-mp", "level-bound", "bubble-orders", "sweep", "gn-estimate")


class ConfigError(ValueError):
    pass


class UsageError(ValueError):
    pass


@dataclass
class GridSpec:
    N: int = 3
    R: float = 0.0
    M: int = DEFAULT_M
    grading: str = "graded"


@dataclass
class LevelBoundSpec:
    n_list: list = field(default_factory=lambda: [16, 64, 256, 1024, 4096, 8192])
    t_min: float = 0.05
    t_max: float = 4.0
    t_count: int = 64
    component: str | None = None


@dataclass
class SweepSpec:
    ks: list = field(default_factory=lambda: [3, 4, 5, 6, 7, 8])
    nu_list: list | None = None
    warm_start: bool = True
    cold_controls: bool = True
    mountain: bool = True


@dataclass
class GnSpec:
    trials: int = 6
    iters: int = 400


@dataclass
class OutputSpec:
    fields_csv: str | None = None
    curve_prefix: str | None = None


@dataclass
class RunSpec:
    params: ProblemParams
    grid: GridSpec
    solver: SolverOptions = field(default_factory=SolverOptions)
    mountain: mountain.MountainOptions = field(default_factory=mountain.MountainOptions)
    level_bound: LevelBoundSpec = field(default_factory=LevelBoundSpec)
    sweep: SweepSpec = field(default_factory=SweepSpec)
    gn: GnSpec = field(default_factory=GnSpec)
    nu_fraction: float | None = None
    C_gn: float | None = None
    seed: int = 0
    outputs: OutputSpec = field(default_factory=OutputSpec)

    def to_dict(self) -> dict:
        d = {"schema": SCHEMA_VERSION}
        for f in dataclasses.fields(self):
            val = getattr(self, f.name)
            d[f.name] = dataclasses.asdict(val) if dataclasses.is_dataclass(val) else val
        d["mountain"]["paths"] = list(d["mountain"]["paths"])
        if self.nu_fraction is not None:
            # nu is derived from the fraction; writing both would not load back
            del d["params"]["nu"]
        return d


_SECTIONS = {
    "params": ProblemParams,
    "grid": GridSpec,
    "solver": SolverOptions,
    "mountain": mountain.MountainOptions,
    "level_bound": LevelBoundSpec,
    "sweep": SweepSpec,
    "gn": GnSpec,
    "outputs": OutputSpec,
}
_SCALARS = {"schema", "nu_fraction", "C_gn", "seed"}


def _is_number(x) -> bool:
    return isinstance(x, (int, float)) and not isinstance(x, bool)


def _coerce(section: str, key: str, default, value):
    where = f"{section}.{key}"
    if value is None:
        return None
    if isinstance(default, bool):
        if not isinstance(value, bool):
            raise ConfigError(f"{where}: expected true or false")
        return value
    if isinstance(default, int):
        if not (_is_number(value) and float(value).is_integer()):
            raise ConfigError(f"{where}: expected an integer")
        return int(value)
    if isinstance(default, float):
        if not _is_number(value):
            raise ConfigError(f"{where}: expected a number")
        return float(value)
    if isinstance(default, tuple):
        if not isinstance(value, list):
            raise ConfigError(f"{where}: expected a list")
        return tuple(value)
    return value


def _section(name: str, raw) -> object:
    cls = _SECTIONS[name]
    if not isinstance(raw, dict):
        raise ConfigError(f"{name}: expected an object")
    names = {f.name for f in dataclasses.fields(cls)}
    unknown = sorted(set(raw) - names)
    if unknown:
        raise ConfigError(f"{name}.{unknown[0]}: unknown key")
    base = cls() if name not in ("params",) else ProblemParams()
    kw = {}
    for key, value in raw.items():
        kw[key] = _coerce(name, key, getattr(base, key), value)
    return dataclasses.replace(base, **kw)


def spec_from_dict(raw: dict) -> RunSpec:
    if not isinstance(raw, dict):
        raise ConfigError("top level must be an object")
    unknown = sorted(set(raw) - set(_SECTIONS) - _SCALARS)
    if unknown:
        raise ConfigError(f"{unknown[0]}: unknown key")
    schema = raw.get("schema", SCHEMA_VERSION)
    if schema != SCHEMA_VERSION:
        raise ConfigError(f"schema: unsupported version {schema!r}")
    parts = {name: _section(name, raw.get(name, {})) for name in _SECTIONS}
    p = parts["params"]
    grid_raw = raw.get("grid", {})
    g = parts["grid"]
    if "N" not in grid_raw:
        g = dataclasses.replace(g, N=p.N)
    elif g.N != p.N:
        raise ConfigError("grid.N: does not match params.N")
    if g.N not in DEFAULT_R:
        raise ConfigError(f"grid.N: unsupported dimension {g.N}")
    if not g.R:
        g = dataclasses.replace(g, R=DEFAULT_R[g.N])
    if g.grading not in GRADINGS:
        raise ConfigError(f"grid.grading: must be one of {GRADINGS}")
    if g.M < 16:
        raise ConfigError("grid.M: must be at least 16")
    try:
        validate(p)
    except ParamError as exc:
        raise ConfigError(f"params.{exc.key}: {exc}") from None
    nu_fraction = raw.get("nu_fraction")
    if nu_fraction is not None:
        if not _is_number(nu_fraction) or not 0 < nu_fraction:
            raise ConfigError("nu_fraction: expected a positive number")
        if "nu" in raw.get("params", {}):
            raise ConfigError("nu_fraction: give either params.nu or nu_fraction")
        nu_fraction = float(nu_fraction)
    C_gn = raw.get("C_gn")
    if C_gn is not None and not (_is_number(C_gn) and C_gn > 0):
        raise ConfigError("C_gn: expected a positive number")
    seed = raw.get("seed", 0)
    if not (_is_number(seed) and float(seed).is_integer()):
        raise ConfigError("seed: expected an integer")
    nl = parts["sweep"].nu_list
    if nl is not None and not (isinstance(nl, list) and nl and all(_is_number(x) and x > 0 for x in nl)):
        raise ConfigError("sweep.nu_list: expected a list of positive numbers")
    m = parts["mountain"]
    if m.component not in (None, "u", "v"):
        raise ConfigError("mountain.component: must be null, 'u' or 'v'")
    lb = parts["level_bound"]
    if lb.component not in (None, "u", "v"):
        raise ConfigError("level_bound.component: must be null, 'u' or 'v'")
    return RunSpec(
        params=p,
        grid=g,
        solver=parts["solver"],
        mountain=m,
        level_bound=lb,
        sweep=parts["sweep"],
        gn=parts["gn"],
        nu_fraction=nu_fraction,
        C_gn=None if C_gn is None else float(C_gn),
        seed=int(seed),
        outputs=parts["outputs"],
    )


def load_config(path) -> RunSpec:
    """Parse and validate a JSON run configuration, filling defaults."""
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"{path}: {exc.strerror}") from None
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}:{exc.lineno}:{exc.colno}: {exc.msg}") from None
    return spec_from_dict(raw)


# ---------------------------------------------------------------------------
# resolution of derived inputs


def _grid(spec: RunSpec):
    g = spec.grid
    return build_grid(g.N, g.R, g.M, g.grading)


def _resolve(spec: RunSpec, grid=None):
    """Effective ``(params, C_gn)``; estimates ``C_gn`` when it is not given."""
    C = spec.C_gn
    if C is None:
        grid = grid or _grid(spec)
        C = gn_estimate(grid, spec.params.alpha, spec.params.beta, spec.gn.trials, spec.seed, spec.gn.iters)
    p = spec.params
    if spec.nu_fraction is not None:
        # the threshold does not depend on nu, so any admissible placeholder works
        nb = derive_constants(p.replace(nu=0.0), C).nu_bar0
        p = p.replace(nu=spec.nu_fraction * nb)
    return p, C


def _header(spec: RunSpec, command: str, p: ProblemParams | None = None, C: float | None = None) -> dict:
    out = {"schema": SCHEMA_VERSION, "command": command, "spec": spec.to_dict()}
    if p is not None:
        out["effective"] = {"params": p.to_dict(), "C_gn": C}
    return out


def _state_dict(s: StatePair) -> dict:
    return {"r": s.grid.nodes, "u": s.u.values, "v": s.v.values}


def _result_dict(res: SolveResult) -> dict:
    d = res.summary()
    d["multipliers_pohozaev"] = res.diagnostics.get("multipliers_pohozaev")
    diag = {k: v for k, v in res.diagnostics.items() if k not in ("history",)}
    d["diagnostics"] = _jsonable(diag)
    d["state"] = _state_dict(res.state)
    return d


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, (bool, int, float, str, np.floating, np.integer, np.bool_)) or obj is None:
        return obj
    return str(obj)


def _load_min(path):
    try:
        with open(path, encoding="utf-8") as fh:
            data = json.load(fh)
    except OSError as exc:
        raise UsageError(f"{path}: {exc.strerror}") from None
    except json.JSONDecodeError as exc:
        raise UsageError(f"{path}:{exc.lineno}:{exc.colno}: {exc.msg}") from None
    if data.get("command") != "solve-min":
        raise UsageError(f"{path}: not a solve-min result")
    spec = spec_from_dict(data["spec"])
    eff = data["effective"]
    p = ProblemParams(**eff["params"])
    C = float(eff["C_gn"])
    grid = _grid(spec)
    res = data["result"]
    st = res["state"]
    if len(st["u"]) != grid.M or not np.array_equal(np.asarray(st["r"], float), grid.nodes):
        raise UsageError(f"{path}: stored state does not match its grid")
    state = StatePair(RadialField(grid, np.asarray(st["u"], float)), RadialField(grid, np.asarray(st["v"], float)), p)
    c = derive_constants(p, C)
    from .functional import MultiplierPair

    sol = SolveResult(
        state=state,
        level=float(res["level"]),
        multipliers=MultiplierPair(float(res["lambda1"]), float(res["lambda2"])),
        grad_residual=float(res["grad_residual"]),
        poho_residual=float(res["poho_residual"]),
        kinetic=float(res["kinetic"]),
        iterations=int(res["iterations"]),
        converged=bool(res["converged"]),
        constants=c,
    )
    return spec, p, C, grid, sol


def _int_list(text: str) -> list:
    try:
        vals = [int(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise UsageError(f"expected a comma-separated list of integers, got {text!r}") from None
    if not vals:
        raise UsageError("empty list")
    return vals


def _jobs(args) -> int:
    env = os.environ.get("NORMCRIT_JOBS")
    val = env if env else args.jobs
    try:
        n = int(val)
    except (TypeError, ValueError):
        raise UsageError(f"jobs must be an integer, got {val!r}") from None
    if n < 1:
        raise UsageError("jobs must be at least 1")
    return n


def _emit(out_path, payload) -> None:
    if out_path:
        write_json(out_path, payload)
    else:
        sys.stdout.write(dumps(payload))


# ---------------------------------------------------------------------------
# commands


def cmd_constants(spec: RunSpec, args) -> int:
    p, C = _resolve(spec)
    c = derive_constants(p, C)
    payload = _header(spec, "constants", p, C)
    payload["constants"] = c.to_dict()
    payload["level_bound_gap"] = level_bound_gap(p)
    _emit(args.out, payload)
    return 0


def cmd_gn_estimate(spec: RunSpec, args) -> int:
    grid = _grid(spec)
    C = gn_estimate(grid, spec.params.alpha, spec.params.beta, spec.gn.trials, spec.seed, spec.gn.iters)
    payload = _header(spec, "gn-estimate")
    payload["C_gn"] = C
    payload["grid"] = grid.describe()
    _emit(args.out, payload)
    return 0


def cmd_solve_min(spec: RunSpec, args) -> int:
    grid = _grid(spec)
    p, C = _resolve(spec, grid)
    c = derive_constants(p, C)
    res = solve_local_min(p, grid, c, spec.solver)
    payload = _header(spec, "solve-min", p, C)
    payload["constants"] = c.to_dict()
    payload["result"] = _result_dict(res)
    _emit(args.out, payload)
    if spec.outputs.fields_csv:
        write_pair_csv(spec.outputs.fields_csv, res.state.u, res.state.v)
    return 0 if res.converged else 2


def cmd_solve_mp(spec: RunSpec | None, args) -> int:
    if not args.min:
        raise UsageError("solve-mp needs --min with a solve-min result")
    mspec, p, C, grid, mres = _load_min(args.min)
    if spec is None:
        spec = mspec
    elif spec.params != mspec.params or spec.grid != mspec.grid or spec.nu_fraction != mspec.nu_fraction:
        raise UsageError("config and minimiser disagree on params or grid")
    if not mres.converged:
        raise UsageError("the stored minimiser did not converge")
    c = derive_constants(p, C)
    res = mountain.solve_mountain_pass(p, mres, grid, c, spec.mountain)
    payload = _header(spec, "solve-mp", p, C)
    payload["constants"] = c.to_dict()
    payload["min_level"] = mres.level
    payload["bound"] = mres.level + level_bound_gap(p)
    payload["result"] = _result_dict(res)
    _emit(args.out, payload)
    if spec.outputs.fields_csv:
        write_pair_csv(spec.outputs.fields_csv, res.state.u, res.state.v)
    return 0 if res.converged else 2


def cmd_level_bound(spec: RunSpec | None, args) -> int:
    if not args.min:
        raise UsageError("level-bound needs --min with a solve-min result")
    mspec, p, C, grid, mres = _load_min(args.min)
    spec = spec or mspec
    lb = spec.level_bound
    n_list = _int_list(args.n) if args.n else list(lb.n_list)
    ts = mountain.default_t_grid(lb.t_count, lb.t_min, lb.t_max)
    reports = mountain.level_bound_check(mres, n_list, ts, lb.component, jobs=_jobs(args))
    payload = _header(spec, "level-bound", p, C)
    payload["min_level"] = mres.level
    payload["reports"] = [r.to_dict() for r in reports]
    _emit(args.out, payload)
    prefix = spec.outputs.curve_prefix
    if prefix:
        for n in n_list:
            if bubbles.core_nodes(grid, n) < 8:
                continue
            curve = mountain.level_bound_curve(mres, n, ts, lb.component)
            with open(f"{prefix}_n{n}.csv", "w", encoding="utf-8") as fh:
                fh.write("t,H\n")
                for t, h in curve:
                    fh.write(f"{t:.17g},{h:.17g}\n")
    largest = max(reports, key=lambda r: r.n)
    return 0 if largest.satisfied else 2


def cmd_bubble_orders(spec: RunSpec, args) -> int:
    n_list = _int_list(args.n) if args.n else [4, 8, 16, 32, 64]
    grid = _grid(spec)
    res = bubbles.bubble_norm_orders(grid, n_list)
    payload = _header(spec, "bubble-orders")
    payload["orders"] = res
    _emit(args.out, payload)
    N = grid.N
    ok = (
        abs(res["grad_slope"] + (N - 2)) <= 0.15 * (N - 2)
        and abs(res["crit_slope"] + N) <= 0.15 * N
        and res["mass_ratio_spread"] < 2.0
    )
    return 0 if ok else 2


def cmd_sweep(spec: RunSpec, args) -> int:
    if not args.out:
        raise UsageError("sweep needs --out for the CSV table")
    grid = _grid(spec)
    p, C = _resolve(spec, grid)
    sw = spec.sweep
    if sw.nu_list:
        nus = [float(x) for x in sw.nu_list]
    else:
        nb = derive_constants(p.replace(nu=0.0), C).nu_bar0
        nus = asymptotics.default_nu_list(nb, sw.ks)
    opts = asymptotics.SweepOptions(
        C_gn=C,
        warm_start=sw.warm_start,
        cold_controls=sw.cold_controls,
        mountain=sw.mountain,
        solver=spec.solver,
        mp=spec.mountain,
        jobs=_jobs(args),
    )
    records = asymptotics.sweep(p, nus, grid, opts)
    asymptotics.write_sweep_csv(args.out, records)
    payload = _header(spec, "sweep", p, C)
    payload["grid"] = grid.describe()
    payload["exponents"] = asymptotics.sweep_exponents(records)
    payload["records"] = [_jsonable(r.to_dict()) for r in records]
    write_json(args.out + ".json", payload)
    ok = all(r.converged_min and (r.converged_mp or not sw.mountain) for r in records)
    return 0 if ok else 2


_HANDLERS = {
    "constants": cmd_constants,
    "gn-estimate": cmd_gn_estimate,
    "solve-min": cmd_solve_min,
    "solve-mp": cmd_solve_mp,
    "level-bound": cmd_level_bound,
    "bubble-orders": cmd_bubble_orders,
    "sweep": cmd_sweep,
}


def run(command: str, spec: RunSpec | None, args=None) -> int:
    """Execute ``command`` and return its exit status."""
    if command not in _HANDLERS:
        raise UsageError(f"unknown command {command!r}")
    args = args or argparse.Namespace(out=None, min=None, n=None, jobs=1)
    if spec is None and command not in ("solve-mp", "level-bound"):
        spec = spec_from_dict({})
    return _HANDLERS[command](spec, args)


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _parser() -> argparse.ArgumentParser:
    ap = _Parser(prog="normcrit", description="Normalized solutions of a coupled critical system.")
    sub = ap.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        sp = sub.add_parser(name)
        sp.add_argument("--config", help="JSON run configuration")
        sp.add_argument("--out", help="output file (stdout when omitted)")
        sp.add_argument("--jobs", default=1, help="worker threads (NORMCRIT_JOBS overrides)")
        if name in ("solve-mp", "level-bound"):
            sp.add_argument("--min", help="result file of solve-min")
        if name in ("level-bound", "bubble-orders"):
            sp.add_argument("--n", help="comma-separated bubble parameters")
    return ap


def main(argv=None) -> int:
    try:
        args = _parser().parse_args(argv)
        for attr in ("min", "n"):
            if not hasattr(args, attr):
                setattr(args, attr, None)
        spec = load_config(args.config) if args.config else None
        _jobs(args)
        return run(args.command, spec, args)
    except (ConfigError, UsageError) as exc:
        print(f"normcrit: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
