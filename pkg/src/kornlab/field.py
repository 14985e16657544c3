"""Vector and matrix grid functions, their norms, and a seeded test-field corpus.

Fields store values on the full grid (exterior nodes hold zeros).  Matrix
entries follow ``values[..., i, j] = Phi e_j . e_i``, so the gradient of a
vector field has the gradients of the components as its columns.
"""

from __future__ import annotations

import csv
import itertools
import json
from dataclasses import dataclass, field as dc_field

import numpy as np

from .errors import ContractError, GeometryError, MaskMismatchError, ParameterError
from .geometry import DomainMask, embed_mask


@dataclass(frozen=True, eq=False)
class VectorField:
    mask: DomainMask
    values: np.ndarray
    provenance: dict = dc_field(default_factory=dict)

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=float)
        expected = self.mask.grid.shape + (self.mask.dim,)
        if vals.shape != expected:
            raise ParameterError(f"vector field values must have shape {expected}, got {vals.shape}")
        if not np.all(np.isfinite(vals)):
            raise ParameterError("field values must be finite")
        object.__setattr__(self, "values", vals)

    @property
    def dim(self) -> int:
        return self.mask.dim

    def is_compact(self) -> bool:
        """True when the field vanishes on every boundary and exterior node."""
        return not np.any(self.values[~self.mask.interior])

    def __mul__(self, c: float) -> "VectorField":
        return VectorField(self.mask, c * self.values, dict(self.provenance))

    __rmul__ = __mul__

    def __add__(self, other: "VectorField") -> "VectorField":
        _check_same_mask(self, other)
        return VectorField(self.mask, self.values + other.values)

    def pointwise_norm(self) -> np.ndarray:
        return np.sqrt(np.sum(self.values**2, axis=-1))


@dataclass(frozen=True, eq=False)
class MatrixField:
    mask: DomainMask
    values: np.ndarray

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=float)
        n = self.mask.dim
        expected = self.mask.grid.shape + (n, n)
        if vals.shape != expected:
            raise ParameterError(f"matrix field values must have shape {expected}, got {vals.shape}")
        if not np.all(np.isfinite(vals)):
            raise ParameterError("field values must be finite")
        object.__setattr__(self, "values", vals)

    @property
    def dim(self) -> int:
        return self.mask.dim

    @property
    def T(self) -> "MatrixField":
        return MatrixField(self.mask, np.swapaxes(self.values, -1, -2))

    def is_compact(self) -> bool:
        return not np.any(self.values[~self.mask.interior])

    def __mul__(self, c: float) -> "MatrixField":
        return MatrixField(self.mask, c * self.values)

    __rmul__ = __mul__

    def __add__(self, other: "MatrixField") -> "MatrixField":
        _check_same_mask(self, other)
        return MatrixField(self.mask, self.values + other.values)

    def __sub__(self, other: "MatrixField") -> "MatrixField":
        _check_same_mask(self, other)
        return MatrixField(self.mask, self.values - other.values)

    def pointwise_norm(self) -> np.ndarray:
        """Frobenius norm at every node."""
        return np.sqrt(np.sum(self.values**2, axis=(-1, -2)))

    def trace(self) -> np.ndarray:
        return np.trace(self.values, axis1=-2, axis2=-1)


def _check_same_mask(f, g):
    if f.mask is not g.mask and not f.mask.same_as(g.mask):
        raise MaskMismatchError("fields live on different masks")


def constant_matrix_field(mask: DomainMask, matrix) -> MatrixField:
    m = np.asarray(matrix, dtype=float)
    vals = np.zeros(mask.grid.shape + m.shape)
    vals[mask.inside] = m
    return MatrixField(mask, vals)


def zero_field(mask: DomainMask) -> VectorField:
    return VectorField(mask, np.zeros(mask.grid.shape + (mask.dim,)), {"kind": "zero"})


def _pointwise(f) -> np.ndarray:
    if isinstance(f, MatrixField):
        return f.pointwise_norm()
    if isinstance(f, VectorField):
        return f.pointwise_norm()
    return np.abs(np.asarray(f, dtype=float))


def lp_norm(f, p: float, weight=None) -> float:
    """``(sum_nodes w |f|^p h^N)^(1/p)`` over the non-exterior nodes.

    ``f`` may be a VectorField, a MatrixField (Frobenius norm) or a scalar
    array on the grid of ``weight``'s mask; ``weight`` is an optional
    non-negative array on the grid.
    """
    if not p >= 1:
        raise ParameterError(f"p must be >= 1, got {p}")
    mask = f.mask
    mag = _pointwise(f)[mask.inside]
    if weight is not None:
        w = np.asarray(weight, dtype=float)
        w = np.broadcast_to(w, mask.grid.shape)[mask.inside]
        if np.any(w < 0):
            raise ParameterError("weight must be non-negative")
    else:
        w = 1.0
    return float(np.sum(w * mag**p) * mask.grid.cell_volume) ** (1.0 / p)


def integrate(mask: DomainMask, g: np.ndarray) -> float:
    """Node-sum quadrature of a scalar grid function over the non-exterior nodes."""
    return float(np.sum(np.asarray(g)[mask.inside]) * mask.grid.cell_volume)


def inner(f: MatrixField, g: MatrixField) -> float:
    """Integrated Frobenius pairing ``sum_nodes tr(f^T g) h^N``."""
    _check_same_mask(f, g)
    prod = np.sum(f.values * g.values, axis=(-1, -2))
    return integrate(f.mask, prod)


def inner_vec(u: VectorField, v: VectorField) -> float:
    _check_same_mask(u, v)
    return integrate(u.mask, np.sum(u.values * v.values, axis=-1))


# ---------------------------------------------------------------------------
# generators


def _rng(seed: int) -> np.random.Generator:
    return np.random.default_rng(np.uint64(seed % 2**64))


@dataclass(frozen=True)
class Bump:
    """Seeded random vector polynomial times the polynomial bump of a box.

    The profile ``(1 - t^2)^power`` extended by zero is ``C^(power-1)``.
    """

    seed: int = 0
    degree: int = 2
    lo: tuple | None = None
    hi: tuple | None = None
    power: int = 3
    kind = "bump"

    def __post_init__(self):
        if self.power < 1:
            raise ParameterError("bump power must be at least 1")


@dataclass(frozen=True)
class Trig:
    """``u_i = a_i sin(pi k.x + phi_i)``; ``k`` is drawn from the seed when omitted."""

    seed: int = 0
    frequency: tuple | None = None
    kind = "trig"

    def __post_init__(self):
        if self.frequency is not None and any(k == 0 for k in self.frequency):
            raise ParameterError("trig frequencies must be nonzero")


@dataclass(frozen=True)
class RandomFourier:
    """Cosine sum with amplitudes decaying like ``|k|^(-decay)``."""

    seed: int = 0
    decay: float = 2.0
    modes: int = 3
    kind = "fourier"

    def __post_init__(self):
        if not self.decay > 1:
            raise ParameterError(f"decay rate must exceed 1, got {self.decay}")
        if self.modes < 1:
            raise ParameterError("need at least one Fourier mode")


@dataclass(frozen=True)
class Rigid:
    """``u(x) = a + W x`` with ``W`` skew-symmetric."""

    a: tuple
    W: tuple
    kind = "rigid"

    def __post_init__(self):
        W = np.asarray(self.W, dtype=float)
        a = np.asarray(self.a, dtype=float)
        if W.ndim != 2 or W.shape != (a.size, a.size):
            raise ParameterError("W must be a square matrix matching a")
        if np.max(np.abs(W + W.T), initial=0.0) > 1e-14 * max(1.0, np.max(np.abs(W))):
            raise ParameterError("W must be skew-symmetric")


@dataclass(frozen=True)
class Polynomial:
    """Seeded random vector polynomial of total degree <= 3."""

    seed: int = 0
    degree: int = 2
    kind = "polynomial"

    def __post_init__(self):
        if not 0 <= self.degree <= 3:
            raise ParameterError("polynomial degree must be in 0..3")


GeneratorSpec = Bump | Trig | RandomFourier | Rigid | Polynomial

_SPEC_TYPES = {cls.kind: cls for cls in (Bump, Trig, RandomFourier, Rigid, Polynomial)}


def spec_to_dict(spec) -> dict:
    d = {"kind": spec.kind}
    for name in spec.__dataclass_fields__:
        v = getattr(spec, name)
        if isinstance(v, (tuple, np.ndarray)):
            v = np.asarray(v).tolist()
        d[name] = v
    return d


def spec_from_dict(d: dict):
    d = dict(d)
    kind = d.pop("kind")
    if kind not in _SPEC_TYPES:
        raise ParameterError(f"unknown generator kind {kind!r}")
    for key in ("lo", "hi", "frequency", "a"):
        if d.get(key) is not None:
            d[key] = tuple(d[key])
    if "W" in d:
        d["W"] = tuple(tuple(row) for row in d["W"])
    return _SPEC_TYPES[kind](**d)


def rot90_rigid(dim: int = 2) -> Rigid:
    W = np.zeros((dim, dim))
    W[0, 1], W[1, 0] = -1.0, 1.0
    return Rigid((0.0,) * dim, tuple(map(tuple, W)))


def _monomials(dim: int, degree: int):
    return [e for d in range(degree + 1) for e in itertools.product(range(d + 1), repeat=dim) if sum(e) == d]


def _poly_values(x: np.ndarray, coeffs: np.ndarray, exps) -> np.ndarray:
    out = np.zeros(x.shape[:-1] + (coeffs.shape[1],))
    for c, e in zip(coeffs, exps):
        mono = np.prod([x[..., k] ** ek for k, ek in enumerate(e)], axis=0)
        out += mono[..., None] * c
    return out


def default_support_box(mask: DomainMask) -> tuple[tuple, tuple]:
    """A box whose strictly-inside nodes are all interior nodes.

    Uses the bounding box of the non-exterior nodes when it qualifies (boxes),
    else the largest node-centered cube found with a chessboard distance
    transform of the interior.
    """
    from scipy.ndimage import distance_transform_cdt

    grid = mask.grid
    idx = np.argwhere(mask.inside)
    lo_i, hi_i = idx.min(axis=0), idx.max(axis=0)
    if _box_ok(mask, lo_i, hi_i):
        return _box_coords(grid, lo_i, hi_i)
    dist = distance_transform_cdt(np.pad(mask.interior, 1), metric="chessboard")
    dist = dist[tuple(slice(1, -1) for _ in range(mask.dim))]
    best = int(dist.max())
    center = np.array(np.unravel_index(int(np.argmax(dist)), dist.shape))
    return _box_coords(grid, center - best, center + best)


def _box_ok(mask, lo_i, hi_i) -> bool:
    sl = tuple(slice(a + 1, b) for a, b in zip(lo_i, hi_i))
    block = mask.interior[sl]
    return block.size > 0 and bool(np.all(block))


def _box_coords(grid, lo_i, hi_i):
    lo = tuple(o + grid.h * int(i) for o, i in zip(grid.origin, lo_i))
    hi = tuple(o + grid.h * int(i) for o, i in zip(grid.origin, hi_i))
    return lo, hi


def bump_profile(x: np.ndarray, lo, hi, power: int = 3) -> np.ndarray:
    """``prod_k (1 - t_k^2)^power`` on the box, zero outside; ``t_k`` maps the box to [-1, 1]."""
    lo = np.asarray(lo, dtype=float)
    hi = np.asarray(hi, dtype=float)
    t = (2 * x - (lo + hi)) / (hi - lo)
    factors = np.where(np.abs(t) < 1, (1 - t**2) ** power, 0.0)
    return np.prod(factors, axis=-1)


def _check_support(mask: DomainMask, lo, hi):
    grid = mask.grid
    x = grid.coords()
    lo_a, hi_a = np.asarray(lo), np.asarray(hi)
    strictly = np.all((x > lo_a + 1e-12 * grid.h) & (x < hi_a - 1e-12 * grid.h), axis=-1)
    if not np.any(strictly):
        raise GeometryError("support box contains no grid node")
    if np.any(strictly & ~mask.interior):
        raise GeometryError("support box is not inside the mask interior")


def _raw_values(spec, mask: DomainMask, x: np.ndarray) -> np.ndarray:
    n = mask.dim
    if isinstance(spec, Rigid):
        a = np.asarray(spec.a, dtype=float)
        W = np.asarray(spec.W, dtype=float)
        if a.size != n:
            raise ParameterError("rigid motion dimension does not match the mask")
        return a + x @ W.T
    if isinstance(spec, Polynomial):
        exps = _monomials(n, spec.degree)
        coeffs = _rng(spec.seed).standard_normal((len(exps), n))
        return _poly_values(x, coeffs, exps)
    if isinstance(spec, Trig):
        rng = _rng(spec.seed)
        if spec.frequency is None:
            k = rng.integers(1, 4, size=n) * rng.choice([-1, 1], size=n)
        else:
            k = np.asarray(spec.frequency, dtype=float)
            if k.size != n:
                raise ParameterError("frequency dimension does not match the mask")
        amp = rng.standard_normal(n)
        phase = rng.uniform(0, 2 * np.pi, n)
        arg = np.pi * (x @ k)
        return amp * np.sin(arg[..., None] + phase)
    if isinstance(spec, RandomFourier):
        rng = _rng(spec.seed)
        out = np.zeros(x.shape[:-1] + (n,))
        for k in itertools.product(range(spec.modes + 1), repeat=n):
            kk = np.asarray(k, dtype=float)
            norm = float(np.linalg.norm(kk))
            if norm == 0:
                continue
            amp = rng.standard_normal(n) * norm ** (-spec.decay)
            phase = rng.uniform(0, 2 * np.pi, n)
            out += amp * np.cos(np.pi * (x @ kk)[..., None] + phase)
        return out
    if isinstance(spec, Bump):
        exps = _monomials(n, spec.degree)
        coeffs = _rng(spec.seed).standard_normal((len(exps), n))
        lo, hi = _bump_box(spec, mask)
        center = (np.asarray(lo) + np.asarray(hi)) / 2
        half = (np.asarray(hi) - np.asarray(lo)) / 2
        return _poly_values((x - center) / half, coeffs, exps) * bump_profile(x, lo, hi, spec.power)[..., None]
    raise ParameterError(f"unknown generator spec {spec!r}")


def _bump_box(spec: Bump, mask: DomainMask):
    if spec.lo is None or spec.hi is None:
        return default_support_box(mask)
    _check_support(mask, spec.lo, spec.hi)
    return tuple(spec.lo), tuple(spec.hi)


def generate(spec, mask: DomainMask, compact_support: bool = False, support=None) -> VectorField:
    """Evaluate a generator spec on the mask.

    With ``compact_support`` the field is multiplied by the bump of
    ``support`` (default: :func:`default_support_box`) and set to zero on
    every non-interior node.  Bump specs are always compactly supported.
    """
    x = mask.grid.coords()
    values = _raw_values(spec, mask, x)
    if compact_support and not isinstance(spec, Bump):
        if support is None:
            lo, hi = default_support_box(mask)
        else:
            lo, hi = support
            _check_support(mask, lo, hi)
        values = values * bump_profile(x, lo, hi)[..., None]
    if compact_support or isinstance(spec, Bump):
        values[~mask.interior] = 0.0
    else:
        values[~mask.inside] = 0.0
    prov = spec_to_dict(spec)
    prov["compact"] = bool(compact_support or isinstance(spec, Bump))
    return VectorField(mask, values, prov)


def random_field(mask: DomainMask, seed: int, compact: bool = False) -> VectorField:
    """White-noise field (not smooth); used for algebraic identity checks."""
    vals = _rng(seed).standard_normal(mask.grid.shape + (mask.dim,))
    vals[~(mask.interior if compact else mask.inside)] = 0.0
    return VectorField(mask, vals, {"kind": "noise", "seed": seed, "compact": compact})


def random_matrix_field(mask: DomainMask, seed: int, compact: bool = False) -> MatrixField:
    n = mask.dim
    vals = _rng(seed).standard_normal(mask.grid.shape + (n, n))
    vals[~(mask.interior if compact else mask.inside)] = 0.0
    return MatrixField(mask, vals)


def extend_by_zero(u: VectorField, big_grid) -> VectorField:
    """Embed a compactly supported field into a larger aligned grid."""
    if not u.is_compact():
        raise ContractError("only compactly supported fields can be extended by zero")
    big_mask, offset = embed_mask(u.mask, big_grid)
    vals = np.zeros(big_grid.shape + (u.dim,))
    sl = tuple(slice(k, k + n) for k, n in zip(offset, u.mask.grid.shape))
    vals[sl] = u.values
    return VectorField(big_mask, vals, dict(u.provenance))


def field_to_csv(f, fh) -> None:
    """Coordinates and components of the non-exterior nodes."""
    mask = f.mask
    n = mask.dim
    writer = csv.writer(fh, lineterminator="\n")
    comps = (
        [f"u{i}" for i in range(n)]
        if isinstance(f, VectorField)
        else [f"phi{i}{j}" for i in range(n) for j in range(n)]
    )
    writer.writerow([f"x{k}" for k in range(n)] + comps)
    coords = mask.grid.coords()[mask.inside]
    vals = f.values[mask.inside].reshape(len(coords), -1)
    for xyz, v in zip(coords, vals):
        writer.writerow([repr(float(c)) for c in xyz] + [repr(float(c)) for c in v])


def field_to_json(f) -> str:
    mask = f.mask
    return json.dumps(
        {
            "grid": mask.grid.to_dict(),
            "kind": "vector" if isinstance(f, VectorField) else "matrix",
            "nodes": np.argwhere(mask.inside).tolist(),
            "values": f.values[mask.inside].tolist(),
            "provenance": getattr(f, "provenance", {}),
        },
        sort_keys=True,
    )


def corpus(kind: str, count: int, start: int = 0, **kwargs) -> list:
    """``count`` consecutive seeds of one generator kind."""
    cls = _SPEC_TYPES.get(kind)
    if cls is None or cls is Rigid:
        raise ParameterError(f"no seeded corpus for generator kind {kind!r}")
    return [cls(seed=start + s, **kwargs) for s in range(count)]


def sup_norm(u: VectorField) -> float:
    return float(np.max(u.pointwise_norm(), initial=0.0))

