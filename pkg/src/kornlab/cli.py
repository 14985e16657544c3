"""Command-line driver: ``kornlab <command> [flags]``.

Exit status: 0 all checks pass, 1 a check was violated, 2 usage error,
3 a solver did not converge.  Settings come from built-in defaults, then an
optional ``key = value`` file (``--config``), then explicit flags.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, fields, replace
from fractions import Fraction

import numpy as np

from . import __version__, constants, diffops, verify
from .errors import GeometryError, KornlabError, NonConvergenceError, ParameterError
from .field import Bump, Trig, generate, random_field, random_matrix_field
from .geometry import Box, Cusp, Transformed, named_shape, rasterize_shape

EXIT_OK, EXIT_VIOLATION, EXIT_USAGE, EXIT_NONCONVERGENCE = 0, 1, 2, 3
CSV_SCHEMA = "kornlab-csv/1"
JSON_SCHEMA = "kornlab-json/1"
OUTPUT_ENV = "KORNLAB_OUTPUT_DIR"
COMMANDS = ("identities", "korn", "pk", "verify", "sweep", "info")


class UsageError(ParameterError):
    pass


# ---------------------------------------------------------------------------
# configuration


def _parse_h(text: str) -> float:
    try:
        h = float(Fraction(text.strip()))
    except (ValueError, ZeroDivisionError) as exc:
        raise UsageError(f"bad grid spacing {text!r}") from exc
    if not 0 < h <= 1:
        raise UsageError(f"grid spacing must be in (0, 1], got {text!r}")
    return h


def _floats(text: str) -> tuple:
    try:
        return tuple(float(t) for t in text.split(",") if t.strip())
    except ValueError as exc:
        raise UsageError(f"bad number list {text!r}") from exc


def _bool(text: str) -> bool:
    t = text.strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise UsageError(f"bad boolean {text!r}")


@dataclass(frozen=True)
class RunConfig:
    """Every setting of a run.  ``canonical()`` text parses back to an equal config."""

    command: str = "info"
    shape: str = "square"
    dim: int = 2
    scale: float = 1.0
    h: tuple = (1 / 16,)
    p: tuple = (2.0,)
    family: str = "dual"
    mode: str = "first"
    weighted: bool = False
    seed: int = 0
    count: int = 20
    tol: float = 1e-8
    threshold: float = 1e-12
    restarts: int = 8
    suite: str = "quick"
    vary: str = "p"
    start: float = 1.1
    stop: float = 4.0
    steps: int = 12
    jobs: int = 1
    N: int = 3
    diam: float = 1.0
    format: str = "csv"
    output: str = ""

    def canonical(self) -> str:
        lines = []
        for f in sorted(fields(self), key=lambda f: f.name):
            v = getattr(self, f.name)
            if isinstance(v, tuple):
                v = ",".join(repr(float(x)) for x in v)
            elif isinstance(v, bool):
                v = "true" if v else "false"
            elif isinstance(v, float):
                v = repr(v)
            lines.append(f"{f.name} = {v}")
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str, base: "RunConfig | None" = None) -> "RunConfig":
        kv = {}
        for n, line in enumerate(text.splitlines(), 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise UsageError(f"config line {n}: expected key = value")
            k, v = (s.strip() for s in line.split("=", 1))
            kv[k] = v
        return (base or cls()).updated(kv)

    def updated(self, kv: dict) -> "RunConfig":
        types = {f.name: f.type for f in fields(self)}
        out = {}
        for k, v in kv.items():
            if k not in types:
                raise UsageError(f"unknown config key {k!r}")
            if not isinstance(v, str):
                out[k] = v
                continue
            t = types[k]
            if k == "h":
                out[k] = tuple(_parse_h(s) for s in v.split(",") if s.strip())
            elif t == "tuple":
                out[k] = _floats(v)
            elif t == "bool":
                out[k] = _bool(v)
            elif t == "int":
                try:
                    out[k] = int(v)
                except ValueError as exc:
                    raise UsageError(f"{k} must be an integer, got {v!r}") from exc
            elif t == "float":
                try:
                    out[k] = float(Fraction(v)) if "/" in v else float(v)
                except (ValueError, ZeroDivisionError) as exc:
                    raise UsageError(f"{k} must be a number, got {v!r}") from exc
            else:
                out[k] = v
        cfg = replace(self, **out)
        cfg.validate()
        return cfg

    def validate(self):
        if self.command not in COMMANDS:
            raise UsageError(f"unknown command {self.command!r}")
        if self.format not in ("csv", "json"):
            raise UsageError("format must be csv or json")
        if self.mode not in constants.MODES:
            raise UsageError(f"mode must be one of {constants.MODES}")
        if not self.h or not self.p:
            raise UsageError("need at least one grid spacing and one exponent")
        if any(q < 1 for q in self.p):
            raise UsageError("exponents must be >= 1")
        if self.dim not in (1, 2, 3):
            raise UsageError("dim must be 1, 2 or 3")
        if self.jobs < 1 or self.count < 0 or self.steps < 1 or self.restarts < 1:
            raise UsageError("jobs, steps and restarts must be positive")
        try:
            diffops.family(self.family)
        except ParameterError as exc:
            raise UsageError(str(exc)) from exc


# ---------------------------------------------------------------------------
# output


def _table(records: list[dict]) -> tuple[list[str], list[list]]:
    cols = []
    for r in records:
        for k in r:
            if k not in cols:
                cols.append(k)
    return cols, [[r.get(c, "") for c in cols] for r in records]


def _fmt(v):
    if isinstance(v, float):
        return repr(v)
    if v is None:
        return ""
    return v


def render(records: list[dict], cfg: RunConfig) -> str:
    if cfg.format == "json":
        doc = {"schema": JSON_SCHEMA, "command": cfg.command, "records": records}
        return json.dumps(doc, indent=2, sort_keys=True, default=_json_default) + "\n"
    buf = io.StringIO()
    buf.write(f"# {CSV_SCHEMA} command={cfg.command}\n")
    cols, rows = _table(records)
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(cols)
    for row in rows:
        w.writerow([_fmt(v) for v in row])
    return buf.getvalue()


def _json_default(o):
    if isinstance(o, (np.floating, np.integer)):
        return o.item()
    if isinstance(o, np.bool_):
        return bool(o)
    raise TypeError(f"cannot serialize {type(o).__name__}")


def output_path(cfg: RunConfig) -> str | None:
    if cfg.output == "-":
        return None
    if cfg.output:
        return cfg.output
    d = os.environ.get(OUTPUT_ENV)
    if d:
        return os.path.join(d, f"{cfg.command}.{cfg.format}")
    return None


def emit(records: list[dict], cfg: RunConfig, out=None):
    text = render(records, cfg)
    path = output_path(cfg)
    if path is None:
        (out or sys.stdout).write(text)
        return None
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(text)
    return path


# ---------------------------------------------------------------------------
# commands


def _mask(cfg: RunConfig, h: float, shape: str | None = None, scale: float | None = None):
    s = named_shape(shape or cfg.shape, cfg.dim)
    sc = cfg.scale if scale is None else scale
    if sc != 1.0:
        s = Transformed(s, sc, (0.0,) * s.dim)
    return rasterize_shape(s, h * sc)


def cmd_identities(cfg: RunConfig, out=None) -> int:
    """Hodge, Korn-identity, curl and adjointness residuals on seeded noise.

    Under the dual family the operator identities use its forward half.  The
    adjointness defect uses the dual pair unless the centered family, which
    is also skew-adjoint, was requested.
    """
    fam = diffops.family(cfg.family)
    uni = fam if fam.uniform else diffops.FORWARD
    adj = fam if fam.name in ("dual", "centered") else diffops.DUAL
    records, ok = [], True
    for h in cfg.h:
        mask = _mask(cfg, h)
        worst = {}
        for s in range(cfg.seed, cfg.seed + cfg.count):
            u = random_field(mask, s, compact=True)
            for k, v in diffops.identity_residuals(u, uni).items():
                if v is not None:
                    worst[k] = max(worst.get(k, 0.0), v)
            if mask.dim == 3:
                worst["curl"] = max(worst.get("curl", 0.0), diffops.curl_identity_residual(u, uni))
            phi = random_matrix_field(mask, 10_000 + s, compact=True)
            d = diffops.adjointness_defect(u, phi, adj)
            worst["adjointness"] = max(worst.get("adjointness", 0.0), d)
        for k in sorted(worst):
            thr = cfg.threshold if k != "adjointness" else min(cfg.threshold, 1e-13)
            passed = worst[k] <= thr
            ok &= passed
            records.append({"identity": k, "family": (adj if k == "adjointness" else uni).name,
                            "h": h, "residual": worst[k], "threshold": thr, "pass": passed})
    emit(records, cfg, out)
    return EXIT_OK if ok else EXIT_VIOLATION


def _estimate(mask, p, mode, cfg):
    fam = diffops.family(cfg.family)
    if p == 2 and mode == "first":
        return constants.korn_first_p2(mask, fam, tol=cfg.tol, seed=cfg.seed)
    if p == 2 and mode == "second":
        return constants.korn_second_p2(mask, fam, tol=cfg.tol, seed=cfg.seed)
    if mode.startswith("pk"):
        return constants.poincare_korn_best(mask, p, weighted=(mode == "pk-weighted"), fam=fam,
                                            tol=cfg.tol, seed=cfg.seed, restarts=cfg.restarts)
    return constants.korn_general_p(mask, p, mode, fam, restarts=cfg.restarts, seed=cfg.seed)


def cmd_korn(cfg: RunConfig, out=None) -> int:
    """Korn constants for every (h, p) pair."""
    records = []
    for h in cfg.h:
        mask = _mask(cfg, h)
        for p in cfg.p:
            est = _estimate(mask, p, cfg.mode, cfg)
            records.append(est.to_record(cfg.shape))
    emit(records, cfg, out)
    return EXIT_OK


def cmd_pk(cfg: RunConfig, out=None) -> int:
    """Best Poincare-Korn constants, checked against the explicit bound."""
    records, ok = [], True
    fam = diffops.family(cfg.family)
    for h in cfg.h:
        mask = _mask(cfg, h)
        for p in cfg.p:
            est = constants.poincare_korn_best(mask, p, weighted=cfg.weighted, fam=fam, tol=cfg.tol,
                                               seed=cfg.seed, restarts=cfg.restarts)
            bound = est.meta["explicit_bound"]
            passed = est.value <= bound
            ok &= passed
            records.append(dict(est.to_record(cfg.shape), bound=bound, **{"pass": passed}))
    emit(records, cfg, out)
    return EXIT_OK if ok else EXIT_VIOLATION


def _verify_plan(cfg: RunConfig):
    if cfg.suite == "acceptance":
        return dict(pk_h=1 / 32, pk_seeds=500, pk_ps=(1.0, 1.5, 2.0, 3.0), shapes=("square", "ball"),
                    bd_hs=(1 / 64, 1 / 128), bd_seeds=200, fund_ps=(1.5, 2.0, 3.0))
    if cfg.suite == "quick":
        return dict(pk_h=cfg.h[0], pk_seeds=cfg.count, pk_ps=cfg.p, shapes=(cfg.shape,),
                    bd_hs=cfg.h, bd_seeds=cfg.count, fund_ps=cfg.p)
    raise UsageError(f"unknown suite {cfg.suite!r}; expected quick or acceptance")


def cmd_verify(cfg: RunConfig, out=None) -> int:
    """Inequality corpus, boundary inequality, trace bound and the fundrel study."""
    plan = _verify_plan(cfg)
    records, failures = [], []
    for shape in plan["shapes"]:
        mask = _mask(cfg, plan["pk_h"], shape=shape, scale=1.0)
        specs = [Bump(seed=s) for s in range(cfg.seed, cfg.seed + plan["pk_seeds"])]
        res = verify.run_corpus(["pk-weighted", "pk-bounded", "div-trace"], specs, [mask], plan["pk_ps"])
        failures += res.failures
        for name, d in sorted(res.summary().items()):
            records.append({"check": name, "shape": shape, "h": mask.h, "count": d["count"],
                            "failed": d["failed"], "max_ratio": d["max_ratio"], "pass": d["failed"] == 0})
    box = "square" if cfg.suite == "acceptance" or cfg.shape in ("square", "cube", "box", "segment") else cfg.shape
    for h in plan["bd_hs"]:
        mask = _mask(cfg, h, shape=box, scale=1.0)
        specs = [Trig(seed=s) for s in range(cfg.seed, cfg.seed + plan["bd_seeds"])]
        res = verify.run_corpus(["pk-boundary"], specs, [mask], plan["pk_ps"])
        failures += res.failures
        d = res.summary()["pk-boundary"]
        records.append({"check": "pk-boundary", "shape": box, "h": h, "count": d["count"],
                        "failed": d["failed"], "max_ratio": d["max_ratio"], "pass": d["failed"] == 0})
    fund_shape = plan["shapes"][0]
    for p in plan["fund_ps"]:
        rec = verify.check_fundrel(
            lambda h: generate(Bump(seed=cfg.seed), _mask(cfg, h, shape=fund_shape, scale=1.0)), p)
        records.append({"check": "fundrel", "shape": fund_shape, "h": min(rec.hs), "count": len(rec.hs),
                        "failed": int(not rec.passed), "max_ratio": rec.slope, "pass": rec.passed})
    ok = all(r["pass"] for r in records)
    emit(records, cfg, out)
    if failures:
        path = output_path(cfg)
        dossier = os.path.join(os.path.dirname(os.path.abspath(path)) if path else os.getcwd(),
                               "verify-failures.json")
        with open(dossier, "w", encoding="utf-8") as fh:
            fh.write(verify.CorpusResult([], failures).dossier())
    return EXIT_OK if ok else EXIT_VIOLATION


def _sweep_cells(cfg: RunConfig) -> list[dict]:
    vals = np.linspace(cfg.start, cfg.stop, cfg.steps).tolist() if cfg.steps > 1 else [cfg.start]
    if cfg.vary not in ("p", "cusp", "aspect"):
        raise UsageError(f"cannot vary {cfg.vary!r}; expected p, cusp or aspect")
    return [{"cell": i, "vary": cfg.vary, "param": float(v)} for i, v in enumerate(vals)]


def _sweep_mask(cfg: RunConfig, cell: dict, h: float):
    if cell["vary"] == "cusp":
        return rasterize_shape(Cusp(cell["param"], 1.0, cfg.dim), h)
    if cell["vary"] == "aspect":
        hi = (float(cell["param"]),) + (1.0,) * (cfg.dim - 1)
        return rasterize_shape(Box((0.0,) * cfg.dim, hi), h)
    return _mask(cfg, h)


def _run_cell(args):
    cfg, cell = args
    h = cfg.h[0]
    p = cell["param"] if cell["vary"] == "p" else cfg.p[0]
    try:
        est = _estimate(_sweep_mask(cfg, cell, h), p, cfg.mode, cfg)
        value, bd, res, seed = est.value, est.bound_direction, est.residual, est.seed
        status = "ok"
    except NonConvergenceError:
        value, bd, res, seed, status = math.nan, "", math.nan, cfg.seed, "nonconvergence"
    return dict(cell, shape=cfg.shape if cell["vary"] == "p" else cell["vary"], p=p, mode=cfg.mode,
                h=h, value=value, boundDirection=bd, residual=res, seed=seed, status=status)


def cmd_sweep(cfg: RunConfig, out=None) -> int:
    """Exploratory parameter sweep; one CSV row per cell, no pass/fail."""
    cells = _sweep_cells(cfg)
    work = [(cfg, c) for c in cells]
    if cfg.jobs > 1 and len(cells) > 1:
        with ProcessPoolExecutor(max_workers=cfg.jobs) as pool:
            rows = list(pool.map(_run_cell, work))
    else:
        rows = [_run_cell(w) for w in work]
    rows.sort(key=lambda r: r["cell"])
    emit(rows, cfg, out)
    return EXIT_OK


def cmd_info(cfg: RunConfig, out=None) -> int:
    """Explicit constants for each exponent at the configured (N, diam)."""
    records = []
    for p in cfg.p:
        try:
            c = constants.paper_constants(p, cfg.N, cfg.diam)
        except ParameterError as exc:
            raise UsageError(str(exc)) from exc
        records.append(c.to_dict())
    if cfg.format == "csv" and not output_path(cfg):
        stream = out or sys.stdout
        for r in records:
            for k in ("p", "N", "diam", "C_pN", "kappa_Omega", "kappa_boundary"):
                stream.write(f"{k} = {r[k]!r}\n")
        return EXIT_OK
    emit(records, cfg, out)
    return EXIT_OK


HANDLERS = {"identities": cmd_identities, "korn": cmd_korn, "pk": cmd_pk,
            "verify": cmd_verify, "sweep": cmd_sweep, "info": cmd_info}


# ---------------------------------------------------------------------------
# argument parsing


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(message)


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    g = common.add_argument_group("common")
    g.add_argument("--config", help="key = value settings file; flags override it")
    g.add_argument("--shape", help="square, ball, annulus, lshape or cusp")
    g.add_argument("--dim", type=int)
    g.add_argument("--scale", help="dilate shape and grid together")
    g.add_argument("--h", help="grid spacing, e.g. 1/32 or 0.03125")
    g.add_argument("--refine", help="comma list of 1/h values, e.g. 16,32,64")
    g.add_argument("--p", help="exponent or comma list")
    g.add_argument("--family", help="forward, backward, centered or dual")
    g.add_argument("--mode", help="first, second, pk-plain or pk-weighted")
    g.add_argument("--weighted", action="store_const", const="true")
    g.add_argument("--seed")
    g.add_argument("--count", help="number of seeded fields")
    g.add_argument("--tol", help="eigensolver tolerance")
    g.add_argument("--threshold", help="identity residual threshold")
    g.add_argument("--restarts")
    g.add_argument("--format", choices=("csv", "json"))
    g.add_argument("--output", help="output file, '-' for stdout")
    g.add_argument("--print-config", action="store_true", help="print the canonical config and exit")

    parser = _Parser(prog="kornlab", description="Discrete Korn and Poincare-Korn constants.")
    parser.add_argument("--version", action="version", version=f"kornlab {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    for name in ("identities", "korn", "pk", "info"):
        sub.add_parser(name, parents=[common], help=HANDLERS[name].__doc__.splitlines()[0])
    v = sub.add_parser("verify", parents=[common], help=cmd_verify.__doc__)
    v.add_argument("--suite", help="quick or acceptance")
    s = sub.add_parser("sweep", parents=[common], help=cmd_sweep.__doc__.splitlines()[0])
    s.add_argument("--vary", help="p, cusp or aspect")
    s.add_argument("--from", dest="start")
    s.add_argument("--to", dest="stop")
    s.add_argument("--steps")
    s.add_argument("--jobs")
    sub.choices["info"].add_argument("--N")
    sub.choices["info"].add_argument("--diam")
    return parser


def config_from_args(argv) -> tuple[RunConfig, bool]:
    ns = build_parser().parse_args(argv)
    cfg = RunConfig(command=ns.command)
    if ns.config:
        try:
            with open(ns.config, encoding="utf-8") as fh:
                text = fh.read()
        except OSError as exc:
            raise UsageError(f"cannot read config: {exc}") from exc
        cfg = RunConfig.from_text(text, cfg)
        cfg = replace(cfg, command=ns.command)
    kv = {}
    for k, v in vars(ns).items():
        if k in ("command", "config", "print_config", "refine") or v is None:
            continue
        kv[k] = v
    if ns.refine:
        try:
            kv["h"] = ",".join(f"1/{int(n)}" for n in ns.refine.split(",") if n.strip())
        except ValueError as exc:
            raise UsageError(f"bad refinement list {ns.refine!r}") from exc
    return cfg.updated(kv), ns.print_config


def main(argv=None, out=None) -> int:
    try:
        cfg, show = config_from_args(sys.argv[1:] if argv is None else argv)
        if show:
            (out or sys.stdout).write(cfg.canonical())
            return EXIT_OK
        return HANDLERS[cfg.command](cfg, out)
    except NonConvergenceError as exc:
        print(f"kornlab: solver did not converge: {exc}", file=sys.stderr)
        return EXIT_NONCONVERGENCE
    except (ParameterError, GeometryError) as exc:
        print(f"kornlab: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except KornlabError as exc:
        print(f"kornlab: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
