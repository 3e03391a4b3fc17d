"""Experiment runner.

A run is described by an INI file (flat ``key = value`` pairs under section
headers)::

    [run]
    task = solve-balanced
    seed = 0

    [model]
    kind = p1            ; p1 | toric
    m = 3
    resolution = 12
    polytope = P2        ; toric only: named polytope or vertex file

    [solver]
    method = fixed-point
    tol = 1e-8
    max_iters = 200
    damping = 0
    init = random        ; identity | random | path to a form JSON
    init_norm = 0.5

Other sections: ``[slope]`` (generator, schedule, tol), ``[soliton]`` (g and
its parameters), ``[coupled]`` (degrees, generators), ``[delta]`` (polytope,
m_min, m_max, bound) and ``[certify]`` (form, tol). Every option has a
default, so ``quantding slope`` runs without a config file.

Exit codes: 0 success, 1 input error, 2 solver non-convergence,
3 validation failure.
"""

from __future__ import annotations

import argparse
import configparser
import csv
import hashlib
import io
import json
import sys
from pathlib import Path

import numpy as np
from threadpoolctl import threadpool_limits

from . import __version__
from .bergman import GeodesicGenerator, fs_data
from .coupled import build_coupled_p1, coupled_moment_residuals, coupled_quantised_ding, coupled_slope, solve_coupled_balanced
from .delta import delta_m_toric, filtration_dims, orders
from .hermitian import gauge_normalize, random_hermitian
from .invariants import InvariantConfig, check_invariants, results_to_dict
from .io import dumps, generator_from_json, hermitian_to_json, load_generator, load_hermitian
from .model import build_p1_model, build_toric_model
from .polytope import NAMED_POLYTOPES, PolytopeError, ReflexivePolytope
from .slopes import GAP_TOL, SlopeError, f_invariant
from .soliton import GFunction, dgna_slope, g_moment_residual, quantised_ding_g, solve_g_balanced, weight_decomposition
from .solver import CONVERGED, SolverConfig, SolverError, certify, solve_balanced

TASKS = (
    "solve-balanced",
    "certify",
    "slope",
    "soliton-solve",
    "coupled-solve",
    "coupled-slope",
    "delta-toric",
    "check-invariants",
)

EXIT_OK, EXIT_INPUT, EXIT_NONCONVERGED, EXIT_VALIDATION = 0, 1, 2, 3


class InputError(ValueError):
    """Bad configuration or input file."""


# ---------------------------------------------------------------------------
# configuration


class Config:
    """Parsed INI data with typed getters that record every value they hand out.

    The recorded values (defaults included) form the ``config`` block of the
    report and feed the config hash, so two runs with equal effective settings
    hash equally.
    """

    def __init__(self, parser: configparser.ConfigParser, base: Path):
        self.parser = parser
        self.base = base
        self.used: dict = {}

    @classmethod
    def load(cls, path=None, overrides=()):
        cp = configparser.ConfigParser(inline_comment_prefixes=(";", "#"))
        base = Path.cwd()
        if path is not None:
            path = Path(path)
            if not path.is_file():
                raise InputError(f"config file {path} does not exist")
            cp.read(path)
            base = path.parent
        for item in overrides:
            key, sep, value = item.partition("=")
            sec, dot, opt = key.strip().partition(".")
            if not sep or not dot:
                raise InputError(f"override {item!r} is not of the form section.key=value")
            if not cp.has_section(sec):
                cp.add_section(sec)
            cp.set(sec, opt, value.strip())
        return cls(cp, base)

    def _raw(self, sec, key, default):
        if self.parser.has_option(sec, key):
            return self.parser.get(sec, key)
        return default

    def get(self, sec, key, default=None, kind=str):
        raw = self._raw(sec, key, default)
        try:
            val = None if raw is None else (kind(raw) if kind is not bool else _bool(raw))
        except (TypeError, ValueError) as exc:
            raise InputError(f"[{sec}] {key} = {raw!r}: {exc}") from None
        self.used[f"{sec}.{key}"] = val
        return val

    def path(self, sec, key, default=None):
        raw = self.get(sec, key, default)
        if raw is None:
            return None
        p = Path(raw)
        return p if p.is_absolute() else self.base / p

    def set(self, sec, key, value):
        if not self.parser.has_section(sec):
            self.parser.add_section(sec)
        self.parser.set(sec, key, str(value))

    def digest(self) -> str:
        return hashlib.sha256(json.dumps(self.used, sort_keys=True, default=str).encode()).hexdigest()


def _bool(s) -> bool:
    if isinstance(s, bool):
        return s
    s = str(s).strip().lower()
    if s in ("1", "true", "yes", "on"):
        return True
    if s in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {s!r}")


def _floats(s) -> list[float]:
    return [float(x) for x in str(s).replace(",", " ").split()]


def _ints(s) -> list[int]:
    return [int(x) for x in str(s).replace(",", " ").split()]


# ---------------------------------------------------------------------------
# inputs


def load_polytope(spec: str, base: Path) -> ReflexivePolytope:
    if spec in NAMED_POLYTOPES:
        return NAMED_POLYTOPES[spec]()
    p = Path(spec)
    p = p if p.is_absolute() else base / p
    if not p.is_file():
        raise InputError(f"polytope {spec!r} is neither a named polytope nor a file")
    return ReflexivePolytope.from_file(p)


def build_model(cfg: Config):
    kind = cfg.get("model", "kind", "p1")
    m = cfg.get("model", "m", 3, int)
    if kind == "p1":
        res = cfg.get("model", "resolution", 2 * m + 6, int)
        return build_p1_model(m, res)
    if kind == "toric":
        P = load_polytope(cfg.get("model", "polytope", "P2"), cfg.base)
        res = cfg.get("model", "resolution", None, int)
        trunc = cfg.get("model", "truncation", None, float)
        return build_toric_model(P, m, resolution=res, truncation=trunc)
    raise InputError(f"unknown model kind {kind!r} (expected p1 or toric)")


def solver_config(cfg: Config) -> SolverConfig:
    return SolverConfig(
        method=cfg.get("solver", "method", "fixed-point"),
        max_iters=cfg.get("solver", "max_iters", 200, int),
        residual_tol=cfg.get("solver", "tol", 1e-8, float),
        step_size=cfg.get("solver", "step_size", 0.5, float),
        damping=cfg.get("solver", "damping", 0.0, float),
        gauge=cfg.get("solver", "gauge", True, bool),
        seed=cfg.get("run", "seed", 0, int),
        torus_reduce=cfg.get("solver", "torus_reduce", False, bool),
    )


def _rng(cfg: Config, tag: int) -> np.random.Generator:
    seed = cfg.get("run", "seed", 0, int)
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(tag,)))


def initial_form(cfg: Config, N: int, rng, sec="solver", diagonal=False):
    init = cfg.get(sec, "init", "identity")
    norm = cfg.get(sec, "init_norm", 0.5, float)
    if init == "identity":
        return np.eye(N, dtype=complex)
    if init == "random":
        if diagonal:
            return np.diag(np.exp(norm * rng.uniform(-1, 1, N))).astype(complex)
        return np.eye(N) + random_hermitian(rng, N, norm)
    p = cfg.path(sec, "init")
    if not p.is_file():
        raise InputError(f"initial form {p} does not exist")
    H = load_hermitian(p)
    if H.shape != (N, N):
        raise InputError(f"initial form has size {H.shape[0]}, model has N = {N}")
    return H


def parse_generator(spec: str, N: int, base: Path) -> GeodesicGenerator:
    """``identity[:c]``, ``diag:a,b,...``, ``random[:scale]`` or a JSON file path."""
    spec = spec.strip()
    if spec.startswith("identity"):
        c = float(spec.split(":", 1)[1]) if ":" in spec else 1.0
        return GeodesicGenerator(c * np.eye(N))
    if spec.startswith("diag:"):
        vals = _floats(spec[5:])
        if len(vals) != N:
            raise InputError(f"diagonal generator has {len(vals)} entries, expected {N}")
        return GeodesicGenerator.diagonal(vals, integral=all(float(v).is_integer() for v in vals))
    p = Path(spec)
    p = p if p.is_absolute() else base / p
    if not p.is_file():
        raise InputError(f"generator {spec!r} is not a recognised form or file")
    gen = load_generator(p)
    if gen.N != N:
        raise InputError(f"generator has size {gen.N}, expected {N}")
    return gen


def _generator(cfg, sec, key, N, rng, default):
    spec = cfg.get(sec, key, default)
    if spec.startswith("random"):
        scale = float(spec.split(":", 1)[1]) if ":" in spec else 0.5
        return GeodesicGenerator(random_hermitian(rng, N, scale))
    return parse_generator(spec, N, cfg.base)


def g_function(cfg: Config) -> GFunction:
    kind = cfg.get("soliton", "g", "constant")
    if kind == "constant":
        return GFunction.make("constant", c=cfg.get("soliton", "c", 1.0, float))
    if kind == "affine":
        return GFunction.make("affine", a=cfg.get("soliton", "a", 1.0, float), b=_floats(cfg.get("soliton", "b", "0")))
    if kind == "exponential":
        return GFunction.make(
            "exponential", b=_floats(cfg.get("soliton", "b", "1")), shift=_floats(cfg.get("soliton", "shift", "1"))
        )
    if kind == "quadratic":
        return GFunction.make(
            "quadratic",
            a=cfg.get("soliton", "a", 1.0, float),
            c=cfg.get("soliton", "c", 0.5, float),
            center=_floats(cfg.get("soliton", "center", "1")),
        )
    if kind == "tabulated":
        return GFunction.make("tabulated", x=_floats(cfg.get("soliton", "x")), y=_floats(cfg.get("soliton", "y")))
    raise InputError(f"unknown g kind {kind!r}")


# ---------------------------------------------------------------------------
# tasks; each returns (exit code, result dict, {filename: text})


def _csv(header, rows) -> str:
    buf = io.StringIO()
    wr = csv.writer(buf, lineterminator="\n")
    wr.writerow(header)
    for r in rows:
        wr.writerow(r)
    return buf.getvalue()


def _solve_payload(res, extra=None):
    H, trace, status = res
    out = {
        "status": status,
        "converged": status == CONVERGED,
        "iterations": len(trace) - 1,
        "residual": trace.residual[-1],
        "ding": trace.ding[-1],
        "oscillation": trace.oscillation[-1],
    }
    out.update(extra or {})
    return out


def task_solve_balanced(cfg, model):
    scfg = solver_config(cfg)
    H0 = initial_form(cfg, model.N, _rng(cfg, 1), diagonal=scfg.torus_reduce)
    res = solve_balanced(model, H0, scfg)
    out = _solve_payload(res)
    if not scfg.torus_reduce:
        out["certificate"] = certify(model, res.H, tol=cfg.get("certify", "tol", 1e-6, float)).to_dict()
    out["form"] = hermitian_to_json(res.H)
    code = EXIT_OK if res.status == CONVERGED else EXIT_NONCONVERGED
    return code, out, {"trace.csv": res.trace.to_csv()}


def task_certify(cfg, model):
    p = cfg.path("certify", "form")
    H = np.eye(model.N, dtype=complex) if p is None else load_hermitian(p)
    if H.shape != (model.N, model.N):
        raise InputError(f"form has size {H.shape[0]}, model has N = {model.N}")
    cert = certify(model, H, tol=cfg.get("certify", "tol", 1e-8, float))
    rows = [[k, repr(v)] for k, v in cert.to_dict().items() if k not in ("tol", "balanced")]
    return (EXIT_OK if cert.balanced else EXIT_VALIDATION), cert.to_dict(), {"trace.csv": _csv(["certificate", "residual"], rows)}


def _schedule(cfg, sec="slope"):
    raw = cfg.get(sec, "schedule", "auto")
    return None if raw == "auto" else _floats(raw)


def task_slope(cfg, model):
    gen = _generator(cfg, "slope", "generator", model.N, _rng(cfg, 2), "identity")
    tol = cfg.get("slope", "tol", GAP_TOL, float)
    rep = f_invariant(model, gen, schedule=_schedule(cfg), tol=tol)
    out = rep.to_dict()
    out.pop("samples")
    out["generator"] = hermitian_to_json(gen.A)
    samples = rep.samples_csv()
    trace = _csv(["t", "dL_dt", "dE_dt", "volume_ratio"], [[repr(s.t), repr(s.dL), repr(s.dE), repr(s.volume_ratio)] for s in rep.samples])
    return EXIT_OK, out, {"slope_samples.csv": samples, "trace.csv": trace}


def task_soliton_solve(cfg, model):
    g = g_function(cfg)
    dec = weight_decomposition(model, cfg.get("soliton", "rank", None, int))
    scfg = solver_config(cfg)
    H0 = initial_form(cfg, model.N, _rng(cfg, 3), diagonal=True)
    res = solve_g_balanced(model, g, dec, H0, scfg)
    extra = {
        "g": {"kind": g.kind, "params": [list(p) for p in g.params]},
        "g_residual": g_moment_residual(model, res.H, g, dec)[1],
        "ding_g": quantised_ding_g(model, res.H, g, dec),
        "form": hermitian_to_json(res.H),
    }
    gen_spec = cfg.get("soliton", "generator", None)
    if gen_spec is not None:
        gen = parse_generator(gen_spec, model.N, cfg.base)
        val, gap = dgna_slope(model, gen, g, dec, _schedule(cfg, "soliton"))
        extra["dgna_slope"], extra["dgna_gap"] = val, gap
    code = EXIT_OK if res.status == CONVERGED else EXIT_NONCONVERGED
    return code, _solve_payload(res, extra), {"trace.csv": res.trace.to_csv()}


def _coupled_model(cfg):
    degrees = tuple(_ints(cfg.get("coupled", "degrees", "1 1")))
    m = cfg.get("model", "m", 2, int)
    res = cfg.get("model", "resolution", 2 * m + 6, int)
    return build_coupled_p1(degrees, m, res)


def task_coupled_solve(cfg, _model):
    cm = _coupled_model(cfg)
    rng = _rng(cfg, 4)
    forms = [initial_form(cfg, n, rng) for n in cm.sizes]
    res = solve_coupled_balanced(cm, forms, solver_config(cfg))
    _, norms = coupled_moment_residuals(cm, res.H)
    extra = {
        "degrees": list(cm.degrees),
        "factor_residuals": [{"factor": i, "residual": r} for i, r in enumerate(norms)],
        "coupled_ding": coupled_quantised_ding(cm, res.H),
        "forms": [hermitian_to_json(H) for H in res.H],
    }
    code = EXIT_OK if res.status == CONVERGED else EXIT_NONCONVERGED
    return code, _solve_payload(res, extra), {"trace.csv": res.trace.to_csv()}


def task_coupled_slope(cfg, _model):
    cm = _coupled_model(cfg)
    specs = [s for s in cfg.get("coupled", "generators", ";".join(["identity:0"] * cm.k)).split(";") if s.strip()]
    if len(specs) != cm.k:
        raise InputError(f"need {cm.k} generators separated by ';', got {len(specs)}")
    rng = _rng(cfg, 5)
    gens = []
    for n, s in zip(cm.sizes, specs):
        if s.strip().startswith("random"):
            scale = float(s.split(":", 1)[1]) if ":" in s else 0.5
            gens.append(GeodesicGenerator(random_hermitian(rng, n, scale)))
        else:
            gens.append(parse_generator(s, n, cfg.base))
    rep = coupled_slope(cm, gens, schedule=_schedule(cfg, "coupled"), tol=cfg.get("coupled", "tol", GAP_TOL, float))
    out = rep.to_dict()
    out.pop("samples")
    out["factor_trace_terms"] = [{"factor": i, "trace_term": v} for i, v in enumerate(rep.trace_terms)]
    text = _csv(["t", "dL_dt"], [[repr(t), repr(v)] for t, v in rep.samples])
    return EXIT_OK, out, {"slope_samples.csv": text, "trace.csv": text}


def task_delta_toric(cfg, _model):
    P = load_polytope(cfg.get("delta", "polytope", "P1"), cfg.base)
    lo = cfg.get("delta", "m_min", 1, int)
    hi = cfg.get("delta", "m_max", 6, int)
    bound = cfg.get("delta", "bound", 3, int)
    if not 1 <= lo <= hi:
        raise InputError("need 1 <= m_min <= m_max")
    rows, per_m, identity_ok = [], [], True
    for m in range(lo, hi + 1):
        res = delta_m_toric(P, m, bound=bound)
        per_m.append(res.to_dict())
        for v, A, S, ratio, _cone in res.rows:
            identity_ok &= sum(orders(P, m, v)) == sum(filtration_dims(P, m, v))
            rows.append([m, " ".join(map(str, v)), str(A), str(S), str(ratio)])
    out = {
        "polytope": [list(v) for v in P.vertices],
        "bound": bound,
        "results": per_m,
        "filtration_identity": bool(identity_ok),
    }
    code = EXIT_OK if identity_ok else EXIT_VALIDATION
    text = _csv(["m", "v", "A", "S_m", "ratio"], rows)
    return code, out, {"delta.csv": text, "trace.csv": text}


def task_check_invariants(cfg, _model):
    icfg = InvariantConfig(
        m=cfg.get("model", "m", 3, int),
        resolution=cfg.get("model", "resolution", None, int),
        samples=cfg.get("invariants", "samples", 5, int),
        seed=cfg.get("run", "seed", 0, int),
    )
    results = check_invariants(icfg)
    out = results_to_dict(results)
    text = _csv(["check", "passed", "residual", "tolerance"], [[r.name, r.passed, repr(r.residual), repr(r.tolerance)] for r in results])
    return (EXIT_OK if out["all_passed"] else EXIT_VALIDATION), out, {"trace.csv": text}


HANDLERS = {
    "solve-balanced": (task_solve_balanced, True),
    "certify": (task_certify, True),
    "slope": (task_slope, True),
    "soliton-solve": (task_soliton_solve, True),
    "coupled-solve": (task_coupled_solve, False),
    "coupled-slope": (task_coupled_slope, False),
    "delta-toric": (task_delta_toric, False),
    "check-invariants": (task_check_invariants, False),
}


def _json_safe(obj):
    """Fractions and numpy scalars to plain JSON values."""
    if isinstance(obj, dict):
        return {str(k): _json_safe(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_json_safe(v) for v in obj]
    if isinstance(obj, (np.floating, np.integer, np.bool_)):
        return obj.item()
    if isinstance(obj, complex):
        return [obj.real, obj.imag]
    return obj


def run(cfg: Config, out_dir: Path) -> int:
    """Execute the configured task, write artifacts and return the exit code."""
    task = cfg.get("run", "task", None)
    if task not in HANDLERS:
        raise InputError(f"unknown task {task!r}; choose from {', '.join(TASKS)}")
    handler, needs_model = HANDLERS[task]
    model = build_model(cfg) if needs_model else None
    code, result, files = handler(cfg, model)
    report = {
        "task": task,
        "version": __version__,
        "exit_code": code,
        "config": cfg.used,
        "config_hash": cfg.digest(),
        "seed": cfg.get("run", "seed", 0, int),
        "quadrature": model.summary() if model is not None else None,
        "tolerances": {
            "residual_tol": cfg.used.get("solver.tol"),
            "slope_gap_tol": GAP_TOL,
            "certify_tol": cfg.used.get("certify.tol"),
        },
        "result": result,
    }
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / "report.json").write_text(dumps(_json_safe(report)))
    for name, text in files.items():
        (out_dir / name).write_text(text)
    return code


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="quantding", description="Balanced metrics, quantised Ding slopes and toric delta_m.")
    ap.add_argument("task_name", nargs="?", choices=TASKS, help="task to run (same as --task)")
    ap.add_argument("--config", help="INI configuration file")
    ap.add_argument("--task", choices=TASKS, help="override [run] task")
    ap.add_argument("--out", default="out", help="output directory (default: ./out)")
    ap.add_argument("--seed", type=int, help="override [run] seed")
    ap.add_argument("--threads", type=int, help="cap BLAS threads")
    ap.add_argument("--set", action="append", default=[], metavar="SEC.KEY=VALUE", help="override a config entry")
    d = ap.add_argument_group("delta-toric shortcuts")
    d.add_argument("--polytope", help="named polytope (P1, P2, P1xP1, Bl1P2) or vertex file")
    d.add_argument("--m-range", help="level range like 1-6")
    d.add_argument("--bound", type=int, help="candidate sup-norm bound B")
    ap.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = Config.load(args.config, args.set)
        task = args.task or args.task_name
        if task:
            cfg.set("run", "task", task)
        if args.seed is not None:
            cfg.set("run", "seed", args.seed)
        if args.polytope:
            cfg.set("delta", "polytope", args.polytope)
        if args.m_range:
            lo, _, hi = args.m_range.partition("-")
            cfg.set("delta", "m_min", lo)
            cfg.set("delta", "m_max", hi or lo)
        if args.bound is not None:
            cfg.set("delta", "bound", args.bound)
        with threadpool_limits(limits=args.threads):
            code = run(cfg, Path(args.out))
    except (InputError, PolytopeError, FileNotFoundError, json.JSONDecodeError, KeyError) as exc:
        print(f"quantding: input error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except ValueError as exc:
        print(f"quantding: input error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except SolverError as exc:
        print(f"quantding: solver failed: {exc}", file=sys.stderr)
        return EXIT_NONCONVERGED
    except SlopeError as exc:
        print(f"quantding: validation failed: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    print(f"quantding: {cfg.used.get('run.task')} finished with exit code {code}; report in {args.out}/report.json")
    return code
