"""Korn and Poincare-Korn constants on a rasterized domain.

p = 2 constants are extreme eigenvalues of Gram-matrix pencils and are sharp
for the grid.  For other exponents the discrete quotient is maximized by a
preconditioned gradient ascent on a smoothed quotient, which only certifies a
lower bound for the grid constant; ``bound_direction`` records which case a
:class:`KornEstimate` belongs to.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from . import diffops, kernels, linsolve
from .errors import NonConvergenceError, OptimizationStallError, ParameterError
from .field import RandomFourier, VectorField, generate
from .geometry import DomainMask, GridSpec, diameter

MODES = ("first", "second", "pk-plain", "pk-weighted")


@dataclass(frozen=True)
class PaperConstants:
    p: float
    N: int
    diam: float
    C_pN: float
    kappa_Omega: float
    kappa_boundary: float

    def to_dict(self) -> dict:
        return {
            "p": self.p, "N": self.N, "diam": self.diam, "C_pN": self.C_pN,
            "kappa_Omega": self.kappa_Omega, "kappa_boundary": self.kappa_boundary,
        }


def paper_constants(p: float, N: int, diam: float) -> PaperConstants:
    """Explicit Poincare-Korn constants.

    ``C = (2 + |p - 2| + sqrt(N)) p / (p + N)``, ``kappa = diam C`` and
    ``kappa_boundary = p (p + 1) / (p + N) diam``.  Valid, not optimal.
    """
    if not p >= 1:
        raise ParameterError(f"p must be >= 1, got {p}")
    if N not in (1, 2, 3):
        raise ParameterError(f"N must be 1, 2 or 3, got {N}")
    if not diam > 0:
        raise ParameterError(f"diam must be positive, got {diam}")
    c = (2 + abs(p - 2) + math.sqrt(N)) * p / (p + N)
    return PaperConstants(
        float(p), int(N), float(diam), c, diam * c, p * (p + 1) / (p + N) * diam
    )


@dataclass
class KornEstimate:
    value: float
    p: float
    mode: str
    bound_direction: str  # "sharp-eigen" or "lower-bound"
    grid: GridSpec
    residual: float
    maximizer: VectorField | None = None
    seed: int = 0
    iterations: int = 0
    meta: dict = field(default_factory=dict)

    def to_record(self, shape: str = "") -> dict:
        return {
            "shape": shape or self.meta.get("shape", ""),
            "p": self.p,
            "mode": self.mode,
            "h": self.grid.h,
            "value": self.value,
            "boundDirection": self.bound_direction,
            "residual": self.residual,
            "seed": self.seed,
        }


def _pencil_first(mask, fam):
    G = linsolve.assemble("grad", mask, fam, "zero-boundary")
    S = linsolve.assemble("sym_grad", mask, fam, "zero-boundary")
    return linsolve.gram(G, mask), linsolve.gram(S, mask)


def _pencil_second(mask, fam):
    G = linsolve.assemble("grad", mask, fam, "free")
    S = linsolve.assemble("sym_grad", mask, fam, "free")
    M = linsolve.assemble("mass", mask, fam, "free").matrix
    A = linsolve.SparseOperator((M + linsolve.gram(G, mask).matrix).tocsr(), True, "M+GtG")
    B = linsolve.SparseOperator((M + linsolve.gram(S, mask).matrix).tocsr(), True, "M+StS")
    return A, B


def _eigen_estimate(res, mode, mask, bc, seed, value=None, **meta):
    dofs = linsolve.dof_map(mask, bc)
    return KornEstimate(
        value=res.value if value is None else value,
        p=2.0,
        mode=mode,
        bound_direction="sharp-eigen",
        grid=mask.grid,
        residual=res.residual,
        maximizer=dofs.to_field(res.vector),
        seed=seed,
        iterations=res.iterations,
        meta=dict(meta, eigenvalue=res.value),
    )


def korn_first_p2(mask: DomainMask, fam=diffops.DUAL, tol: float = linsolve.EIG_TOL, seed: int = 0) -> KornEstimate:
    """Largest ``lam`` of ``G^T G x = lam S^T S x`` over compactly supported DOFs."""
    A, B = _pencil_first(mask, fam)
    res = linsolve.gen_eig_max(A, B, tol=tol, seed=seed)
    return _eigen_estimate(res, "first", mask, "zero-boundary", seed)


def korn_second_p2(mask: DomainMask, fam=diffops.DUAL, tol: float = linsolve.EIG_TOL, seed: int = 0) -> KornEstimate:
    """Largest ``lam`` of ``(M + G^T G) x = lam (M + S^T S) x`` with free boundary DOFs."""
    A, B = _pencil_second(mask, fam)
    res = linsolve.gen_eig_max(A, B, tol=tol, seed=seed)
    return _eigen_estimate(res, "second", mask, "free", seed)


def _weight(mask: DomainMask, p: float, x0) -> np.ndarray:
    x = mask.grid.coords()
    c = np.zeros(mask.dim) if x0 is None else np.asarray(x0, dtype=float)
    return np.sqrt(np.sum((x - c) ** 2, axis=-1)) ** p


def poincare_korn_best(mask: DomainMask, p: float = 2.0, weighted: bool = False, fam=diffops.DUAL,
                       tol: float = linsolve.EIG_TOL, seed: int = 0, x0=None, **opts) -> KornEstimate:
    """Best discrete constant of the (weighted) Poincare-Korn inequality.

    For ``p = 2`` this is ``mu^(-1/2)`` with ``mu`` the smallest eigenvalue of
    ``S^T W S x = mu M x`` (``W`` = ``|x - x0|^2`` when weighted, identity
    otherwise).  Other exponents go through :func:`korn_general_p`.
    ``meta['explicit_bound']`` holds the explicit constant the value must not
    exceed.
    """
    C = paper_constants(p, mask.dim, max(diameter(mask), 1e-300))
    bound = C.C_pN if weighted else C.kappa_Omega
    mode = "pk-weighted" if weighted else "pk-plain"
    if p != 2:
        est = korn_general_p(mask, p, mode, fam, x0=x0, seed=seed, **opts)
        est.meta["explicit_bound"] = bound
        return est
    S = linsolve.assemble("sym_grad", mask, fam, "zero-boundary")
    A = linsolve.gram(S, mask, weight=_weight(mask, 2.0, x0) if weighted else None)
    M = linsolve.assemble("mass", mask, fam, "zero-boundary")
    res = linsolve.gen_eig_min(A, M, tol=tol, seed=seed)
    if not res.value > 0:
        raise NonConvergenceError("smallest Poincare-Korn eigenvalue is not positive")
    return _eigen_estimate(res, mode, mask, "zero-boundary", seed, value=res.value ** -0.5,
                           explicit_bound=bound)


# ---------------------------------------------------------------------------
# general exponent


class _Quotient:
    """Smoothed numerator/denominator of a mode, evaluated on DOF vectors."""

    def __init__(self, mask, p, mode, fam, x0=None):
        if mode not in MODES:
            raise ParameterError(f"mode must be one of {MODES}, got {mode!r}")
        self.mask, self.p, self.mode = mask, float(p), mode
        self.bc = "free" if mode == "second" else "zero-boundary"
        self.dofs = linsolve.dof_map(mask, self.bc)
        self.n = mask.dim
        self.hN = mask.grid.cell_volume
        self.G = linsolve.grad_matrix(mask, fam, self.bc)
        self.S = linsolve.sym_grad_matrix(mask, fam, self.bc)
        self.ones_rows = np.ones(mask.n_inside)
        self.ones_dofs = np.ones(self.dofs.n_nodes)
        self.w_rows = _weight(mask, p, x0)[mask.inside] if mode == "pk-weighted" else self.ones_rows
        # p = 2 Gram of the denominator; used as the ascent metric
        if mode == "first":
            P = self.S.T @ self.S
        elif mode == "second":
            P = self.S.T @ self.S + sp.identity(self.dofs.size)
        elif mode == "pk-weighted":
            w2 = np.repeat(_weight(mask, 2.0, x0)[mask.inside], self.n * self.n)
            P = self.S.T @ sp.diags(w2) @ self.S
        else:
            P = self.S.T @ self.S
        self.metric = sp.csr_matrix(P)

    def _term(self, M, x, w, eps, rows):
        y = (M @ x if M is not None else x).reshape(rows, -1)
        e, coef = kernels.smoothed_power(y, w, self.p, eps)
        g = (coef[:, None] * y).reshape(-1)
        return e * self.hN, (M.T @ g if M is not None else g) * self.hN

    def parts(self, x, eps):
        rows = self.mask.n_inside
        nd = self.dofs.n_nodes
        if self.mode == "first":
            num = self._term(self.G, x, self.ones_rows, eps, rows)
            den = self._term(self.S, x, self.ones_rows, eps, rows)
        elif self.mode == "second":
            mu = self._term(None, x, self.ones_dofs, eps, nd)
            ng = self._term(self.G, x, self.ones_rows, eps, rows)
            ds = self._term(self.S, x, self.ones_rows, eps, rows)
            num = (mu[0] + ng[0], mu[1] + ng[1])
            den = (mu[0] + ds[0], mu[1] + ds[1])
        else:
            num = self._term(None, x, self.ones_dofs, eps, nd)
            den = self._term(self.S, x, self.w_rows, eps, rows)
        return num, den

    def objective(self, x, eps):
        (n, gn), (d, gd) = self.parts(x, eps)
        if n <= 0 or d <= 0:
            return -math.inf, np.zeros_like(x)
        return math.log(n) - math.log(d), gn / n - gd / d

    def exact(self, x) -> float:
        (n, _), (d, _) = self.parts(x, 0.0)
        return n / d if d > 0 else math.inf

    def value_from_quotient(self, q: float) -> float:
        return q ** (1.0 / self.p) if self.mode.startswith("pk") else q


def evaluate_quotient(u: VectorField, p: float, mode: str, fam=diffops.DUAL, x0=None) -> float:
    """Exact (unsmoothed) discrete quotient of ``u``, in the units of ``KornEstimate.value``."""
    q = _Quotient(u.mask, p, mode, fam, x0)
    return q.value_from_quotient(q.exact(q.dofs.from_field(u)))


def _start_vector(q: _Quotient, seed: int) -> np.ndarray:
    spec = RandomFourier(seed=seed, decay=2.0, modes=3)
    u = generate(spec, q.mask, compact_support=(q.bc == "zero-boundary"))
    x = q.dofs.from_field(u)
    if not np.any(x):
        x = np.random.default_rng(seed).standard_normal(q.dofs.size)
    return x / np.max(np.abs(x))


def _ascend(q: _Quotient, x, eps, max_iter, solve, ftol=1e-13):
    f, g = q.objective(x, eps)
    step = 1.0
    accepted = 0
    d_prev = g_prev = None
    for _ in range(max_iter):
        d = solve(g)
        if d_prev is not None:
            # Polak-Ribiere in the metric of the preconditioner, restarted when not ascending
            beta = max(0.0, float(g @ (d - d_prev)) / max(float(g_prev @ d_prev), 1e-300))
            d = d + beta * d_prev
        slope = float(g @ d)
        if slope <= 0:
            d = solve(g)
            slope = float(g @ d)
        if slope <= 0 or not np.isfinite(slope):
            break
        scale = np.max(np.abs(x)) / max(np.max(np.abs(d)), 1e-300)
        t = step * scale
        improved = False
        for _ in range(40):
            xn = x + t * d
            fn, gn = q.objective(xn, eps)
            if fn >= f + 1e-4 * t * slope:
                improved = True
                break
            t *= 0.5
        if not improved:
            break
        accepted += 1
        done = fn - f <= ftol * max(1.0, abs(f))
        xn = xn / np.max(np.abs(xn))
        fn, gn = q.objective(xn, eps)
        d_prev, g_prev = d, g
        x, f, g = xn, fn, gn
        step = min(2.0 * t / scale, 1e3)
        if done:
            break
    return x, f, accepted


def korn_general_p(mask: DomainMask, p: float, mode: str = "first", fam=diffops.DUAL, *,
                   eps_smooth: float = 1e-6, restarts: int = 8, max_iter: int = 400,
                   continuation: int = 3, seed: int = 0, x0=None) -> KornEstimate:
    """Maximize the discrete Korn (or Poincare-Korn) quotient for exponent ``p``.

    ``|.|^p`` is replaced by ``(|.|^2 + eps^2)^(p/2)`` with
    ``eps = eps_smooth * max|u|``, halved ``continuation`` times.  Ascent
    directions are gradients preconditioned by the p = 2 Gram matrix of the
    denominator and combined Polak-Ribiere style; steps are found by
    backtracking.  Restarts use seeds ``seed, seed + 1, ...``; the best exact
    quotient wins, ties going to the lowest seed.
    """
    if not p > 1 and mode in ("first", "second"):
        raise ParameterError(f"Korn quotients need p > 1, got {p}")
    if not p >= 1:
        raise ParameterError(f"p must be >= 1, got {p}")
    q = _Quotient(mask, p, mode, fam, x0)
    n = q.dofs.size
    diag = q.metric.diagonal()
    shift = 1e-12 * float(diag.max()) if diag.size else 0.0
    metric = (q.metric + shift * sp.identity(n)).tocsr()

    def solve(g):
        try:
            return linsolve.cg_solve(metric, g, tol=1e-6, maxiter=10 * n)
        except NonConvergenceError as exc:
            return exc.best

    best = None
    failures = 0
    for r in range(restarts):
        s = seed + r
        x = _start_vector(q, s)
        eps = eps_smooth
        total = 0
        for _ in range(continuation + 1):
            x, _, acc = _ascend(q, x, eps, max_iter, solve)
            total += acc
            eps *= 0.5
        if total == 0:
            failures += 1
            continue
        val = q.exact(x)
        if best is None or val > best[0]:
            best = (val, s, x, total)
    if best is None:
        x = _start_vector(q, seed)
        raise OptimizationStallError(
            f"all {restarts} restarts failed their line search", best=q.dofs.to_field(x)
        )
    val, s, x, total = best
    return KornEstimate(
        value=q.value_from_quotient(val),
        p=float(p),
        mode=mode,
        bound_direction="lower-bound",
        grid=mask.grid,
        residual=0.0,
        maximizer=q.dofs.to_field(x),
        seed=s,
        iterations=total,
        meta={"quotient": val, "failed_restarts": failures, "eps_smooth": eps_smooth},
    )
