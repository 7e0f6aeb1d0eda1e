"""Command line driver.

Subcommands: ``run``, ``study``, ``constants`` and ``verify``.  Runs are
configured by an INI file; see README.md for the keys.  Exit codes: 0 on
success, 2 on configuration errors, 3 on numerical failures.
"""

from __future__ import annotations

import argparse
import configparser
import sys
from pathlib import Path

from . import problems
from .bounds import N_INT
from .constants import constants_csv
from .elasticity import ElasticModel, LoadSet, pressure, solve
from .equilibration import build_admissible, verify_admissibility
from .errors import NumericalError
from .homothetic import CIRCLE, N_ARC
from .mesh import MeshFormatError, MeshTopologyError, load_mesh
from .pipeline import StageError, adjoint_mesh_for, convergence_study, run, study_csv
from .problems import Problem, elements_near, nearest_node
from .qoi import MeanStress, PointDisplacement, StressIntensityFactor, extractor_loads

EXIT_OK, EXIT_CONFIG, EXIT_NUMERICAL = 0, 2, 3


class ConfigError(Exception):
    """Invalid configuration; ``field`` names the offending key."""

    def __init__(self, field: str, message: str):
        super().__init__(f"[{field}] {message}")
        self.field = field


class RunConfig:
    """Parsed run configuration.

    Attributes:
        problem: The reference problem with its quantity and family.
        adjoint: Adjoint mesh policy (``"same"``, a refinement count or a mesh).
        overkill_levels: Refinements for the reference value, or None.
        n_int: Trapezoid nodes of the correction integral.
        n_arc: Angular Gauss points per arc piece.
        out_dir: Output directory, or None for standard output.
    """

    def __init__(self, problem, adjoint, overkill_levels, n_int, n_arc, out_dir):
        self.problem = problem
        self.adjoint = adjoint
        self.overkill_levels = overkill_levels
        self.n_int = n_int
        self.n_arc = n_arc
        self.out_dir = out_dir


def _get(cp, section, key, conv=str, default=None, required=False):
    field = f"{section}.{key}"
    if not cp.has_option(section, key):
        if required:
            raise ConfigError(field, "missing")
        return default
    raw = cp.get(section, key).strip()
    try:
        return conv(raw)
    except (ValueError, TypeError) as exc:
        raise ConfigError(field, f"invalid value {raw!r}: {exc}") from None


def _vector(raw: str, n: int = 2) -> tuple:
    vals = tuple(float(v) for v in raw.replace(";", ",").split(","))
    if len(vals) != n:
        raise ValueError(f"expected {n} comma-separated numbers")
    return vals


def _ints(raw: str) -> tuple:
    vals = tuple(int(v) for v in raw.replace(";", ",").split(",") if v.strip())
    if not vals:
        raise ValueError("empty list")
    return vals


def _positive_int(raw: str) -> int:
    v = int(raw)
    if v < 1:
        raise ValueError("must be at least 1")
    return v


def _lam_bar(raw: str):
    return "optimize" if raw.lower() == "optimize" else float(raw)


def _resolve(base: Path, raw: str) -> Path:
    p = Path(raw)
    return p if p.is_absolute() else base / p


def _builtin(cp) -> Problem:
    name = _get(cp, "problem", "builtin")
    factory = problems.BUILTINS.get(name)
    if factory is None:
        raise ConfigError("problem.builtin", f"unknown problem {name!r}; choose from {sorted(problems.BUILTINS)}")
    kwargs = {}
    for key in cp.options("problem"):
        if key == "builtin":
            continue
        raw = cp.get("problem", key).strip()
        try:
            kwargs[key] = int(raw)
        except ValueError:
            kwargs[key] = raw
    try:
        return factory(**kwargs)
    except TypeError as exc:
        raise ConfigError("problem", f"unsupported parameter: {exc}") from None
    except ValueError as exc:
        raise ConfigError("problem", str(exc)) from None


def _loads(cp) -> LoadSet:
    loads = LoadSet(body_force={}, tractions={}, dirichlet={})
    if not cp.has_section("loads"):
        raise ConfigError("loads", "missing section")
    for key in cp.options("loads"):
        kind, _, tag = key.partition(".")
        if not tag:
            raise ConfigError(f"loads.{key}", "expected <kind>.<tag>")
        if kind == "dirichlet":
            loads.dirichlet[tag] = _get(cp, "loads", key, _vector)
        elif kind == "traction":
            loads.tractions[tag] = _get(cp, "loads", key, _vector)
        elif kind == "pressure":
            loads.tractions[tag] = pressure(_get(cp, "loads", key, float))
        elif kind == "body":
            loads.body_force[tag] = _get(cp, "loads", key, _vector)
        else:
            raise ConfigError(f"loads.{key}", f"unknown load kind {kind!r}")
    if not loads.dirichlet:
        raise ConfigError("loads", "at least one dirichlet.<tag> entry is required")
    return loads


def _qoi(cp, mesh):
    kind = _get(cp, "qoi", "kind", required=True)
    if kind == "mean_stress":
        comp = _get(cp, "qoi", "component", default="xx")
        if cp.has_option("qoi", "elements"):
            els = _get(cp, "qoi", "elements", _ints)
        else:
            c = _get(cp, "qoi", "center", _vector, required=True)
            els = elements_near(mesh, c, _get(cp, "qoi", "radius", float, required=True))
        try:
            return MeanStress(tuple(els), comp)
        except ValueError as exc:
            raise ConfigError("qoi", str(exc)) from None
    if kind == "point_displacement":
        comp = _get(cp, "qoi", "component", default="x")
        if cp.has_option("qoi", "node"):
            node = _get(cp, "qoi", "node", int)
        else:
            node = nearest_node(mesh, _get(cp, "qoi", "point", _vector, required=True))
        try:
            return PointDisplacement(node, comp)
        except ValueError as exc:
            raise ConfigError("qoi", str(exc)) from None
    if kind == "sif":
        try:
            return StressIntensityFactor(
                _get(cp, "qoi", "tip", _vector, required=True),
                _get(cp, "qoi", "direction", _vector, default=(1.0, 0.0)),
                _get(cp, "qoi", "r_inner", float, required=True),
                _get(cp, "qoi", "r_outer", float, required=True),
            )
        except ValueError as exc:
            raise ConfigError("qoi", str(exc)) from None
    raise ConfigError("qoi.kind", f"unknown kind {kind!r}")


def _explicit(cp, base: Path) -> Problem:
    path = _get(cp, "mesh", "path", required=True)
    try:
        mesh = load_mesh(_resolve(base, path))
    except FileNotFoundError:
        raise ConfigError("mesh.path", f"file not found: {path}") from None
    except (MeshFormatError, MeshTopologyError) as exc:
        raise ConfigError("mesh.path", str(exc)) from None
    try:
        model = ElasticModel(
            _get(cp, "model", "E", float, required=True), _get(cp, "model", "nu", float, required=True),
            _get(cp, "model", "assumption", default="plane_stress"),
        )
    except ValueError as exc:
        raise ConfigError("model", str(exc)) from None
    loads = _loads(cp)
    q = _qoi(cp, mesh)
    center = _get(cp, "family", "center", _vector, required=True)
    lam = _get(cp, "family", "lambda", float, required=True)
    return Problem("config", mesh, model, loads, q, center, lam,
                   shape=_get(cp, "family", "shape", default=CIRCLE),
                   crack_direction=_get(cp, "family", "crack_direction", _vector, default=(-1.0, 0.0)))


def load_config(path: str | Path) -> RunConfig:
    """Parse and validate a configuration file.

    Relative paths inside the file are resolved against its directory.

    Raises:
        ConfigError: Missing file, unknown keys or invalid values.
    """
    path = Path(path)
    if not path.is_file():
        raise ConfigError("config", f"file not found: {path}")
    cp = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#",))
    cp.optionxform = str
    try:
        cp.read(path)
    except configparser.Error as exc:
        raise ConfigError("config", str(exc).splitlines()[0]) from None
    base = path.resolve().parent
    problem = _builtin(cp) if cp.has_section("problem") else _explicit(cp, base)

    for key, conv in (("lambda", float), ("lambda_bar", _lam_bar), ("center", _vector)):
        if cp.has_option("family", key) and cp.has_section("problem"):
            attr = {"lambda": "lam", "lambda_bar": "lam_bar", "center": "center"}[key]
            setattr(problem, attr, _get(cp, "family", key, conv))
    if not cp.has_section("problem"):
        problem.lam_bar = _get(cp, "family", "lambda_bar", _lam_bar, default="optimize")
    if problem.lam <= 0:
        raise ConfigError("family.lambda", "must be positive")
    if problem.lam_bar != "optimize" and problem.lam_bar < problem.lam:
        raise ConfigError("family.lambda_bar", "must not be smaller than lambda")

    raw = _get(cp, "adjoint", "mesh", default="same")
    if raw == "same":
        adjoint = "same"
    elif raw.startswith("refine:"):
        try:
            adjoint = _positive_int(raw.split(":", 1)[1])
        except ValueError as exc:
            raise ConfigError("adjoint.mesh", str(exc)) from None
    else:
        try:
            adjoint = load_mesh(_resolve(base, raw))
        except FileNotFoundError:
            raise ConfigError("adjoint.mesh", f"file not found: {raw}") from None
        except (MeshFormatError, MeshTopologyError) as exc:
            raise ConfigError("adjoint.mesh", str(exc)) from None
    overkill = _get(cp, "reference", "overkill_levels", _positive_int)
    n_int = _get(cp, "integration", "n_int", _positive_int, default=N_INT)
    if n_int < 2:
        raise ConfigError("integration.n_int", "must be at least 2")
    n_arc = _get(cp, "integration", "n_arc", _positive_int, default=N_ARC)
    out = _get(cp, "output", "dir")
    return RunConfig(problem, adjoint, overkill, n_int, n_arc, _resolve(base, out) if out else None)


def _emit(text: str, out_dir: Path | None, name: str):
    if out_dir is None:
        sys.stdout.write(text)
        return
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / name).write_text(text)
    print(f"wrote {out_dir / name}")


def cmd_run(cfg: RunConfig, out: Path | None) -> int:
    res = run(cfg.problem, cfg.adjoint, cfg.overkill_levels, n_int=cfg.n_int, n_arc=cfg.n_arc)
    _emit(res.report.to_csv(), out, "bounds.csv")
    return EXIT_OK


def cmd_study(cfg: RunConfig, levels, out: Path | None) -> int:
    rows = convergence_study(cfg.problem, levels, overkill_levels=cfg.overkill_levels, n_int=cfg.n_int,
                             n_arc=cfg.n_arc)
    _emit(study_csv(rows), out, "study.csv")
    return EXIT_OK


def cmd_verify(cfg: RunConfig) -> int:
    p = cfg.problem
    loads = p.loads_for(p.mesh)
    ref_load = loads.discretize(p.mesh)
    fem = solve(p.mesh, p.model, ref_load)
    ref = build_admissible(p.mesh, p.model, ref_load, fem)
    adj_mesh = adjoint_mesh_for(p.mesh, cfg.adjoint)
    ext = extractor_loads(p.qoi, p.mesh, p.model)
    ext.dirichlet = {t: (0.0, 0.0) for t in loads.dirichlet}
    adj_load = ext.discretize(p.mesh).transfer(adj_mesh)
    adj = build_admissible(adj_mesh, p.model, adj_load, solve(adj_mesh, p.model, adj_load))
    ok = True
    for name, adm in (("reference", ref), ("adjoint", adj)):
        rep = verify_admissibility(adm)
        print(f"{name}: {rep}")
        ok &= rep.passed
    return EXIT_OK if ok else EXIT_NUMERICAL


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="crebounds", description="Guaranteed bounds of quantities of interest.")
    sub = ap.add_subparsers(dest="command", required=True)
    r = sub.add_parser("run", help="compute the three bound families")
    r.add_argument("--config", required=True)
    r.add_argument("--out", help="output directory (default: from config, else stdout)")
    s = sub.add_parser("study", help="bounds for several adjoint refinement levels")
    s.add_argument("--config", required=True)
    s.add_argument("--levels", default="0,1,2")
    s.add_argument("--out")
    c = sub.add_parser("constants", help="print the shape constants table")
    c.add_argument("--nu", type=float, default=0.3)
    v = sub.add_parser("verify", help="admissibility report of both equilibrated fields")
    v.add_argument("--config", required=True)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "constants":
            sys.stdout.write(constants_csv(args.nu))
            return EXIT_OK
        cfg = load_config(args.config)
        out = Path(args.out) if getattr(args, "out", None) else cfg.out_dir
        if args.command == "run":
            return cmd_run(cfg, out)
        if args.command == "study":
            try:
                levels = [int(v) for v in args.levels.split(",")]
            except ValueError:
                raise ConfigError("levels", f"invalid level list {args.levels!r}") from None
            if not levels or min(levels) < 0:
                raise ConfigError("levels", "levels must be non-negative integers")
            return cmd_study(cfg, levels, out)
        return cmd_verify(cfg)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except StageError as exc:
        if isinstance(exc.cause, NumericalError):
            print(f"numerical failure: {exc}", file=sys.stderr)
            return EXIT_NUMERICAL
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except NumericalError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except ValueError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
