"""Inequality and identity checks on discrete fields.

Each check evaluates both sides of an inequality with the same node-sum
quadrature and returns a :class:`VerificationReport`; :func:`run_corpus`
sweeps checks over seeded generator corpora.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field

import numpy as np

from . import diffops
from .constants import paper_constants
from .errors import ContractError, ParameterError
from .field import VectorField, generate, lp_norm, spec_from_dict, spec_to_dict
from .geometry import DomainMask, boundary_weights, diameter

DIV_TRACE_TOL = 1e-13


@dataclass
class VerificationReport:
    check_name: str
    lhs: float
    rhs: float
    ratio: float
    constant_source: str
    constant_value: float
    passed: bool
    h: float
    p: float | None = None
    slack: float = 0.0
    acceptance: bool = True
    provenance: dict = field(default_factory=dict)
    meta: dict = field(default_factory=dict)

    @property
    def seed(self):
        return self.provenance.get("seed")

    def to_record(self) -> dict:
        return {
            "checkName": self.check_name,
            "seed": self.seed,
            "h": self.h,
            "p": self.p,
            "lhs": self.lhs,
            "rhs": self.rhs,
            "ratio": self.ratio,
            "pass": self.passed,
        }


def _ratio(lhs: float, rhs: float) -> float:
    if rhs > 0:
        return lhs / rhs
    return 0.0 if lhs == 0 else math.inf


def _report(name, u, lhs, rhs, source, const, p, slack=0.0, acceptance=True, **meta):
    r = _ratio(lhs, rhs)
    return VerificationReport(
        check_name=name, lhs=lhs, rhs=rhs, ratio=r, constant_source=source,
        constant_value=const, passed=r <= 1 + slack, h=u.mask.h, p=p, slack=slack,
        acceptance=acceptance, provenance=dict(u.provenance), meta=meta,
    )


def _require_compact(u: VectorField, name: str):
    if not u.is_compact():
        raise ContractError(f"{name} needs a field vanishing on the mask boundary")


def _check_p(p):
    if not p >= 1:
        raise ParameterError(f"p must be >= 1, got {p}")


def _distance(mask: DomainMask, x0) -> np.ndarray:
    x = mask.grid.coords()
    c = np.zeros(mask.dim) if x0 is None else np.asarray(x0, dtype=float)
    return np.sqrt(np.sum((x - c) ** 2, axis=-1))


def check_pk_weighted(u: VectorField, p: float, x0=None, fam=diffops.DUAL) -> VerificationReport:
    """``int |u|^p <= C^p int |x - x0|^p |sym grad u|^p``; no slack."""
    _check_p(p)
    _require_compact(u, "check_pk_weighted")
    c = paper_constants(p, u.dim, 1.0).C_pN
    lhs = lp_norm(u, p) ** p
    rhs = c**p * lp_norm(diffops.sym_grad(u, fam), p, weight=_distance(u.mask, x0) ** p) ** p
    return _report("pk-weighted", u, lhs, rhs, "paper-formula", c, p)


def check_pk_bounded(u: VectorField, p: float, diam: float | None = None, fam=diffops.DUAL) -> VerificationReport:
    """``int |u|^p <= kappa^p int |sym grad u|^p`` with ``kappa = diam C``.

    ``diam`` defaults to the diameter of the mask's non-exterior nodes.
    """
    _check_p(p)
    _require_compact(u, "check_pk_bounded")
    d = diameter(u.mask) if diam is None else float(diam)
    kappa = paper_constants(p, u.dim, d).kappa_Omega
    lhs = lp_norm(u, p) ** p
    rhs = kappa**p * lp_norm(diffops.sym_grad(u, fam), p) ** p
    return _report("pk-bounded", u, lhs, rhs, "paper-formula", kappa, p, diam=d)


def boundary_slack(h: float) -> float:
    """Boundary quadrature allowance: 2% at h = 1/64, linear in h."""
    return 1.28 * h


def check_pk_boundary(u: VectorField, p: float, fam=diffops.DUAL, slack: float | None = None) -> VerificationReport:
    """``int |u|^p <= kappa^p int |sym grad u|^p + kappa_b int_boundary |u|^p``.

    Works for any field; only box masks, whose staircase surface measure is
    exact, count towards acceptance.
    """
    _check_p(p)
    mask = u.mask
    C = paper_constants(p, u.dim, diameter(mask))
    w, info = boundary_weights(mask)
    lhs = lp_norm(u, p) ** p
    bulk = C.kappa_Omega**p * lp_norm(diffops.sym_grad(u, fam), p) ** p
    surf = C.kappa_boundary * float(np.sum(w * u.pointwise_norm() ** p))
    s = boundary_slack(mask.h) if slack is None else slack
    return _report("pk-boundary", u, lhs, bulk + surf, "paper-formula", C.kappa_Omega, p,
                   slack=s, acceptance=bool(info["exact"]), bulk=bulk, surface=surf,
                   kappa_boundary=C.kappa_boundary)


def check_div_trace_bound(u: VectorField, fam=diffops.FORWARD) -> VerificationReport:
    """Pointwise ``|div u| <= sqrt(N) |sym grad u|`` for a single uniform family.

    Passes when the largest excess is at most ``1e-13`` times
    ``max(1, sup sqrt(N)|sym grad u|)``.
    """
    fam = diffops.family(fam).resolve(u)
    div = np.abs(diffops.div_vec(u, fam))[u.mask.inside]
    bound = math.sqrt(u.dim) * diffops.sym_grad(u, fam).pointwise_norm()[u.mask.inside]
    excess = float(np.max(div - bound, initial=0.0))
    scale = max(1.0, float(np.max(bound, initial=0.0)))
    lhs, rhs = float(np.max(div, initial=0.0)), float(np.max(bound, initial=0.0))
    return VerificationReport(
        check_name="div-trace", lhs=lhs, rhs=rhs, ratio=_ratio(lhs, rhs),
        constant_source="paper-formula", constant_value=math.sqrt(u.dim),
        passed=excess <= DIV_TRACE_TOL * scale, h=u.mask.h, provenance=dict(u.provenance),
        meta={"excess": excess},
    )


# ---------------------------------------------------------------------------
# the regularized pointwise relation behind the weighted inequality


def _div(F: np.ndarray, mask: DomainMask, kind: str, ghost: str) -> np.ndarray:
    return sum(diffops.partial(F[..., k], mask, k, kind, ghost) for k in range(mask.dim))


def fundrel_terms(u: VectorField, p: float, eps: float, fam=diffops.CENTERED) -> dict:
    """Integrated sides of the regularized relation, ``u_eps = (u, eps)``.

    Left: ``(N/p + |u|^2/|u_eps|^2)|u_eps|^p``.  Right: the symmetric-gradient
    term, ``-(u.x) div(|u_eps|^(p-2) u)`` and two pure divergences.  The
    divergence of a compact field uses zero ghosts (it telescopes to zero);
    ``div(|u_eps|^p x)`` does not vanish at the boundary and uses one-sided
    stencils on the mask.

    The default centered family is second-order consistent and still
    telescopes exactly; the forward/backward pair is only first order.
    """
    if not eps > 0:
        raise ParameterError(f"eps must be positive, got {eps}")
    _check_p(p)
    _require_compact(u, "check_fundrel")
    mask = u.mask
    n = u.dim
    kind = diffops.family(fam).div_kind
    x = mask.grid.coords()
    uu = u.values
    sq = np.sum(uu * uu, axis=-1)
    ne = np.sqrt(sq + eps * eps)
    lhs = (n / p + sq / ne**2) * ne**p
    S = diffops.sym_grad(u, fam).values
    Sx = np.einsum("...ij,...j->...i", S, x)
    t_sym = -2.0 * ne ** (p - 2) * np.sum(uu * Sx, axis=-1)
    ux = np.sum(uu * x, axis=-1)
    t_div = -ux * _div(ne[..., None] ** (p - 2) * uu, mask, kind, "zero")
    t_rad = _div(ne[..., None] ** p * x, mask, kind, "one-sided") / p
    t_tel = _div(ne[..., None] ** (p - 2) * ux[..., None] * uu, mask, kind, "zero")
    # fields live on the non-exterior nodes only
    for arr in (lhs, t_sym, t_div, t_rad, t_tel):
        arr[~mask.inside] = 0.0
    hN = mask.grid.cell_volume
    out = {k: float(np.sum(v) * hN) for k, v in
           dict(lhs=lhs, sym=t_sym, div=t_div, radial=t_rad, telescoping=t_tel).items()}
    out["rhs"] = out["sym"] + out["div"] + out["radial"] + out["telescoping"]
    return out


@dataclass
class ConvergenceRecord:
    check_name: str
    p: float
    eps: float
    hs: list
    residuals: list
    slope: float
    passed: bool
    terms: list = field(default_factory=list)

    def to_record(self) -> dict:
        return asdict(self)


def _slope(hs, res) -> float:
    hs, res = np.asarray(hs, float), np.asarray(res, float)
    if np.all(res <= 1e-15 * max(1.0, float(np.max(np.abs(hs))))):
        return math.inf
    res = np.maximum(res, 1e-300)
    return float(np.polyfit(np.log(hs), np.log(res), 1)[0])


def check_fundrel(field_at, p: float, hs=(1 / 16, 1 / 32, 1 / 64), eps: float | None = None,
                  eps_rel: float = 1e-3, fam=diffops.CENTERED, min_slope: float = 1.0) -> ConvergenceRecord:
    """Refinement study of the integrated relation.

    ``field_at(h)`` returns the same continuum field sampled at spacing ``h``.
    ``eps`` defaults to ``eps_rel * max|u|`` on the coarsest grid and is then
    held fixed.  The residual is ``|lhs - rhs| / |lhs|``; the study passes when
    its log-log slope against ``h`` is at least ``min_slope``.
    """
    res, terms = [], []
    for i, h in enumerate(hs):
        u = field_at(h)
        if eps is None:
            eps = eps_rel * float(np.max(u.pointwise_norm()))
            if eps == 0:
                eps = eps_rel
        t = fundrel_terms(u, p, eps, fam)
        res.append(abs(t["lhs"] - t["rhs"]) / abs(t["lhs"]))
        terms.append(dict(t, h=h))
    s = _slope(hs, res)
    return ConvergenceRecord("fundrel", float(p), float(eps), list(hs), res, s, s >= min_slope, terms)


# ---------------------------------------------------------------------------
# corpus driver

CHECKS = {
    "pk-weighted": check_pk_weighted,
    "pk-bounded": check_pk_bounded,
    "pk-boundary": check_pk_boundary,
    "div-trace": lambda u, p: check_div_trace_bound(u),
}
COMPACT = {"pk-weighted": True, "pk-bounded": True, "pk-boundary": False, "div-trace": False}


@dataclass
class CorpusResult:
    reports: list
    failures: list

    @property
    def status(self) -> int:
        return 1 if self.failures else 0

    def summary(self) -> dict:
        by = {}
        for r in self.reports:
            d = by.setdefault(r.check_name, {"count": 0, "failed": 0, "max_ratio": 0.0})
            d["count"] += 1
            d["failed"] += int(r.acceptance and not r.passed)
            d["max_ratio"] = max(d["max_ratio"], r.ratio)
        return by

    def dossier(self) -> str:
        """JSON listing every failing acceptance report with its generator spec."""
        rows = [dict(r.to_record(), provenance=r.provenance, meta=r.meta) for r in self.failures]
        return json.dumps({"failures": rows, "summary": self.summary()}, indent=2, sort_keys=True,
                          default=float)


def run_corpus(checks, corpus, masks, ps, compact=None) -> CorpusResult:
    """Run every (mask, spec, p, check) cell in that nested order.

    ``corpus`` holds generator specs (or their dicts); compactly supported
    samples are used for checks that require them.  A report counts as a
    failure only when it is acceptance-tagged and fails.
    """
    reports, failures = [], []
    specs = [spec_from_dict(s) if isinstance(s, dict) else s for s in corpus]
    for mask in masks:
        for spec in specs:
            cache = {}
            for p in ps:
                for name in checks:
                    if name not in CHECKS:
                        raise ParameterError(f"unknown check {name!r}")
                    want = COMPACT[name] if compact is None else compact
                    if want not in cache:
                        cache[want] = generate(spec, mask, compact_support=want)
                    u = cache[want]
                    r = CHECKS[name](u, p)
                    r.provenance.setdefault("spec", spec_to_dict(spec))
                    reports.append(r)
                    if r.acceptance and not r.passed:
                        failures.append(r)
    return CorpusResult(reports, failures)
