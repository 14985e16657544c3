"""Finite-difference versions of the gradient/divergence calculus.

Every first-derivative stencil is a three-point stencil

    (D_k f)(x) = a(x) f(x + h e_k) + b(x) f(x) + c(x) f(x - h e_k),

whose coefficient arrays are produced by :func:`stencil`.  The same arrays
are used by :mod:`kornlab.linsolve` to assemble sparse matrices, so matrix
products and array operators agree up to rounding.

Families
--------
``forward``, ``backward``, ``centered``
    One stencil for every first derivative.  Difference operators of one
    family commute, which makes the pointwise Hodge-type identities exact
    (``centered`` uses the compact backward-of-forward Laplacian and is only
    second-order consistent with its own ``grad div``).
``dual``
    Forward differences for gradients, backward differences for the
    divergence of matrix fields.  This pairing is the exact discrete
    integration by parts on zero-extended fields.

Ghost policies
--------------
``zero``
    Values off the grid are zero; used for compactly supported fields, for
    which it coincides with extension by zero.
``one-sided``
    Near the mask boundary the stencil falls back to the one-sided difference
    that stays on non-exterior nodes; exterior nodes get zero.
``auto`` (default) picks ``zero`` for compactly supported inputs.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .errors import ContractError, DimensionError, ParameterError
from .field import MatrixField, VectorField, integrate, lp_norm
from .geometry import DomainMask

KINDS = ("forward", "backward", "centered")
GHOSTS = ("zero", "one-sided", "auto")
_ADJOINT = {"forward": "backward", "backward": "forward", "centered": "centered"}


@dataclass(frozen=True)
class StencilFamily:
    name: str
    ghost: str = "auto"

    def __post_init__(self):
        if self.name not in KINDS + ("dual",):
            raise ParameterError(f"unknown stencil family {self.name!r}")
        if self.ghost not in GHOSTS:
            raise ParameterError(f"unknown ghost policy {self.ghost!r}")

    @property
    def grad_kind(self) -> str:
        return "forward" if self.name == "dual" else self.name

    @property
    def div_kind(self) -> str:
        return "backward" if self.name == "dual" else self.name

    @property
    def uniform(self) -> bool:
        return self.name != "dual"

    def laplacian_kinds(self) -> tuple[str, str]:
        """(inner, outer) first-derivative kinds composing the Laplacian."""
        if self.name in ("dual", "centered"):
            return "forward", "backward"
        return self.name, self.name

    def resolve(self, f) -> "StencilFamily":
        if self.ghost != "auto":
            return self
        return replace(self, ghost="zero" if f.is_compact() else "one-sided")


FORWARD = StencilFamily("forward")
BACKWARD = StencilFamily("backward")
CENTERED = StencilFamily("centered")
DUAL = StencilFamily("dual")


def family(name, ghost: str = "auto") -> StencilFamily:
    if isinstance(name, StencilFamily):
        return name
    aliases = {"dual-pair": "dual", "uniform-forward": "forward", "uniform-backward": "backward"}
    return StencilFamily(aliases.get(name, name), ghost)


# ---------------------------------------------------------------------------
# stencils


def _shift(arr: np.ndarray, axis: int, step: int) -> np.ndarray:
    """``out[x] = arr[x + step e_axis]`` with zeros off the grid."""
    out = np.zeros_like(arr)
    n = arr.shape[axis]
    src = [slice(None)] * arr.ndim
    dst = [slice(None)] * arr.ndim
    if step > 0:
        src[axis], dst[axis] = slice(step, n), slice(0, n - step)
    else:
        src[axis], dst[axis] = slice(0, n + step), slice(-step, n)
    out[tuple(dst)] = arr[tuple(src)]
    return out


def stencil(mask: DomainMask, axis: int, kind: str, ghost: str):
    """Coefficient arrays ``(a, b, c)`` of the three-point stencil on the grid."""
    if kind not in KINDS:
        raise ParameterError(f"unknown stencil kind {kind!r}")
    h = mask.h
    shape = mask.grid.shape
    a = np.zeros(shape)
    b = np.zeros(shape)
    c = np.zeros(shape)
    if ghost == "zero":
        if kind == "forward":
            a[...], b[...] = 1 / h, -1 / h
        elif kind == "backward":
            b[...], c[...] = 1 / h, -1 / h
        else:
            a[...], c[...] = 0.5 / h, -0.5 / h
        return a, b, c
    if ghost != "one-sided":
        raise ParameterError(f"ghost policy must be resolved, got {ghost!r}")
    avail = mask.inside
    plus = avail & _shift(avail, axis, 1)
    minus = avail & _shift(avail, axis, -1)
    if kind == "forward":
        fwd, bwd, cen = plus, minus & ~plus, np.zeros_like(plus)
    elif kind == "backward":
        fwd, bwd, cen = plus & ~minus, minus, np.zeros_like(plus)
    else:
        cen = plus & minus
        fwd, bwd = plus & ~minus, minus & ~plus
    a[fwd], b[fwd] = 1 / h, -1 / h
    b[bwd], c[bwd] = 1 / h, -1 / h
    a[cen], c[cen] = 0.5 / h, -0.5 / h
    return a, b, c


def partial(f: np.ndarray, mask: DomainMask, axis: int, kind: str, ghost: str) -> np.ndarray:
    """First difference of a grid array along ``axis``; trailing axes are components."""
    a, b, c = stencil(mask, axis, kind, ghost)
    extra = f.ndim - mask.dim
    sl = (Ellipsis,) + (None,) * extra
    return a[sl] * _shift(f, axis, 1) + b[sl] * f + c[sl] * _shift(f, axis, -1)


# ---------------------------------------------------------------------------
# operators


def _fam(fam, f) -> StencilFamily:
    return family(fam).resolve(f)


def grad(u: VectorField, fam=DUAL) -> MatrixField:
    """``(grad u)[i, j] = D_i u_j``: column j is the gradient of component j."""
    fam = _fam(fam, u)
    n = u.dim
    out = np.empty(u.mask.grid.shape + (n, n))
    for i in range(n):
        out[..., i, :] = partial(u.values, u.mask, i, fam.grad_kind, fam.ghost)
    return MatrixField(u.mask, out)


def grad_transpose(u: VectorField, fam=DUAL) -> MatrixField:
    return grad(u, fam).T


def sym_grad(u: VectorField, fam=DUAL) -> MatrixField:
    g = grad(u, fam).values
    return MatrixField(u.mask, 0.5 * (g + np.swapaxes(g, -1, -2)))


def skw_grad(u: VectorField, fam=DUAL) -> MatrixField:
    g = grad(u, fam).values
    return MatrixField(u.mask, 0.5 * (g - np.swapaxes(g, -1, -2)))


def div_vec(u: VectorField, fam=DUAL) -> np.ndarray:
    """Trace of ``grad(u, fam)``."""
    fam = _fam(fam, u)
    return sum(
        partial(u.values[..., i], u.mask, i, fam.grad_kind, fam.ghost) for i in range(u.dim)
    )


def grad_scalar(phi: np.ndarray, mask: DomainMask, fam: StencilFamily) -> VectorField:
    """Gradient of a scalar grid function; ``fam`` must have a resolved ghost policy."""
    vals = np.stack(
        [partial(phi, mask, k, fam.grad_kind, fam.ghost) for k in range(mask.dim)], axis=-1
    )
    return VectorField(mask, vals)


def div_mat(phi: MatrixField, fam=DUAL) -> VectorField:
    """Divergence applied to the columns: ``(div Phi)_i = sum_k D_k Phi[k, i]``."""
    fam = _fam(fam, phi)
    out = sum(
        partial(phi.values[..., k, :], phi.mask, k, fam.div_kind, fam.ghost)
        for k in range(phi.dim)
    )
    return VectorField(phi.mask, out)


def div_sym(phi: MatrixField, fam=DUAL) -> VectorField:
    fam = _fam(fam, phi)
    return div_mat(MatrixField(phi.mask, 0.5 * (phi.values + np.swapaxes(phi.values, -1, -2))), fam)


def div_skw(phi: MatrixField, fam=DUAL) -> VectorField:
    fam = _fam(fam, phi)
    return div_mat(MatrixField(phi.mask, 0.5 * (phi.values - np.swapaxes(phi.values, -1, -2))), fam)


def laplacian(u: VectorField, fam=DUAL) -> VectorField:
    """Componentwise Laplacian ``sum_k D_k^outer D_k^inner u`` (see ``laplacian_kinds``)."""
    fam = _fam(fam, u)
    inner, outer = fam.laplacian_kinds()
    out = np.zeros_like(u.values)
    for k in range(u.dim):
        first = partial(u.values, u.mask, k, inner, fam.ghost)
        out += partial(first, u.mask, k, outer, fam.ghost)
    return VectorField(u.mask, out)


def curl3(u: VectorField, fam=DUAL) -> VectorField:
    if u.dim != 3:
        raise DimensionError("curl3 is defined for N = 3 only")
    fam = _fam(fam, u)
    g = grad(u, fam).values  # g[..., i, j] = D_i u_j
    out = np.stack(
        [g[..., 1, 2] - g[..., 2, 1], g[..., 2, 0] - g[..., 0, 2], g[..., 0, 1] - g[..., 1, 0]],
        axis=-1,
    )
    return VectorField(u.mask, out)


# ---------------------------------------------------------------------------
# identity and adjointness residuals


def adjointness_defect(u: VectorField, phi: MatrixField, fam=DUAL) -> float:
    """Relative defect of ``sum grad u : Phi = - sum u . div Phi``.

    Normalized by ``|grad u| |Phi| + |u| |div Phi|`` (discrete L2 norms);
    zero when either field vanishes.
    """
    if not (u.is_compact() and phi.is_compact()):
        raise ContractError("adjointness_defect needs compactly supported u and Phi")
    fam = family(fam).resolve(u)
    g = grad(u, fam)
    d = div_mat(phi, fam)
    lhs = float(np.sum(g.values * phi.values)) * u.mask.grid.cell_volume
    rhs = float(np.sum(u.values * d.values)) * u.mask.grid.cell_volume
    scale = lp_norm(g, 2) * lp_norm(phi, 2) + lp_norm(u, 2) * lp_norm(d, 2)
    if scale == 0:
        return 0.0
    return abs(lhs + rhs) / scale


def korn_identity_div(u: VectorField, fam=DUAL) -> np.ndarray:
    """Divergence that closes the discrete Korn identity for ``fam``'s gradient.

    It is the trace of the gradient taken with the adjoint stencil (backward
    for a forward gradient), i.e. the divergence of the dual pair.
    """
    fam = _fam(fam, u)
    kind = _ADJOINT[fam.grad_kind]
    return sum(partial(u.values[..., i], u.mask, i, kind, fam.ghost) for i in range(u.dim))


def korn_identity_residual(u: VectorField, fam=DUAL) -> float:
    """``|int |sym grad u|^2 - 1/2 int |grad u|^2 - 1/2 int (div u)^2| / int |grad u|^2``."""
    fam = _fam(fam, u)
    g = grad(u, fam)
    s = MatrixField(u.mask, 0.5 * (g.values + np.swapaxes(g.values, -1, -2)))
    d = korn_identity_div(u, fam)
    gg = lp_norm(g, 2) ** 2
    if gg == 0:
        return 0.0
    res = lp_norm(s, 2) ** 2 - 0.5 * gg - 0.5 * integrate(u.mask, d**2)
    return abs(res) / gg


def _sup(v: np.ndarray) -> float:
    return float(np.max(np.abs(v), initial=0.0))


def hodge_terms(u: VectorField, fam=FORWARD) -> dict:
    """Laplacian, ``grad div u``, ``-2 div_skw grad_skw u`` and ``-2 div_sym grad_sym u``."""
    fam = _fam(fam, u)
    lap = laplacian(u, fam).values
    gd = grad_scalar(div_vec(u, fam), u.mask, fam).values
    skw = -2 * div_skw(skw_grad(u, fam), fam).values
    sym = -2 * div_sym(sym_grad(u, fam), fam).values
    return {"laplacian": lap, "grad_div": gd, "skw": skw, "sym": sym}


def identity_residuals(u: VectorField, fam=FORWARD) -> dict:
    """Residuals of the two Hodge-type identities and of the Korn identity.

    ``hodge_skw``: ``-lap u + grad div u - 2 div_skw grad_skw u``;
    ``hodge_sym``: ``-lap u - grad div u - 2 div_sym grad_sym u``
    (right-hand sides moved over); both as sup norms relative to the largest
    term.  ``korn`` is :func:`korn_identity_residual`, or ``None`` when ``u``
    is not compactly supported.
    """
    fam = family(fam)
    if not fam.uniform:
        raise ParameterError("identity residuals are defined for a single uniform family")
    fam = fam.resolve(u)
    t = hodge_terms(u, fam)
    scale = max(_sup(t["laplacian"]), _sup(t["grad_div"]), _sup(t["skw"]), _sup(t["sym"]))
    inside = u.mask.inside if fam.ghost == "one-sided" else np.ones(u.mask.grid.shape, bool)
    r_skw = (-t["laplacian"] + t["grad_div"] - t["skw"])[inside]
    r_sym = (-t["laplacian"] - t["grad_div"] - t["sym"])[inside]
    out = {
        "hodge_skw": _sup(r_skw) / scale if scale else 0.0,
        "hodge_sym": _sup(r_sym) / scale if scale else 0.0,
        "korn": korn_identity_residual(u, fam) if u.is_compact() else None,
    }
    return out


def curl_identity_residual(u: VectorField, fam=FORWARD) -> float:
    """``|curl curl u + 2 div_skw grad_skw u|_inf`` relative to the larger term (N = 3)."""
    fam = family(fam).resolve(u)
    cc = curl3(curl3(u, fam), fam).values
    skw = -2 * div_skw(skw_grad(u, fam), fam).values
    scale = max(_sup(cc), _sup(skw))
    return _sup(cc - skw) / scale if scale else 0.0


def div_trace_gap(u: VectorField, fam=FORWARD) -> float:
    """``max over nodes of |div u| - sqrt(N) |sym grad u|`` (non-positive in exact arithmetic)."""
    fam = _fam(fam, u)
    d = div_vec(u, fam)
    s = sym_grad(u, fam).pointwise_norm()
    gap = np.abs(d) - math.sqrt(u.dim) * s
    return float(np.max(gap[u.mask.inside]))
