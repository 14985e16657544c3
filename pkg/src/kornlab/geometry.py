"""Parametric domains, node-centered grids and rasterized masks.

A domain is described by a small tree of shape descriptors (boxes, balls,
annuli, L-shapes, cusps, dilated/translated shapes and boolean
combinations).  :func:`rasterize` samples the membership predicate of a
descriptor at the nodes of a uniform :class:`GridSpec` and classifies every
node as exterior, boundary or interior.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.spatial import ConvexHull, QhullError
from scipy.spatial.distance import pdist

from .errors import DegenerateDomainError, GeometryError, ParameterError

EXTERIOR = 0
BOUNDARY = 1
INTERIOR = 2

#: Upper bound on the number of grid nodes (all axes together).
MAX_NODES = 20_000_000

_REL_TOL = 1e-12


def _vec(values, name="point") -> tuple[float, ...]:
    if np.isscalar(values):
        values = (values,)
    out = tuple(float(v) for v in values)
    if not out or not all(math.isfinite(v) for v in out):
        raise ParameterError(f"{name} must be a non-empty finite vector, got {values!r}")
    return out


# ---------------------------------------------------------------------------
# grids


@dataclass(frozen=True)
class GridSpec:
    """Uniform node-centered grid ``origin + h * index``."""

    h: float
    origin: tuple[float, ...]
    shape: tuple[int, ...]

    def __post_init__(self):
        object.__setattr__(self, "origin", _vec(self.origin, "origin"))
        object.__setattr__(self, "shape", tuple(int(n) for n in self.shape))
        if not (self.h > 0 and math.isfinite(self.h)):
            raise GeometryError(f"grid spacing must be positive, got {self.h}")
        if len(self.origin) != len(self.shape):
            raise GeometryError("origin and shape disagree on the dimension")
        if self.dim not in (1, 2, 3):
            raise GeometryError(f"dimension must be 1, 2 or 3, got {self.dim}")
        if min(self.shape) < 2:
            raise GeometryError("a grid needs at least 2 nodes per axis")
        if self.size > MAX_NODES:
            raise GeometryError(f"{self.size} nodes exceed the cap of {MAX_NODES}")

    @property
    def dim(self) -> int:
        return len(self.shape)

    @property
    def size(self) -> int:
        return math.prod(self.shape)

    @property
    def upper(self) -> tuple[float, ...]:
        return tuple(o + self.h * (n - 1) for o, n in zip(self.origin, self.shape))

    @property
    def cell_volume(self) -> float:
        return self.h**self.dim

    def axes(self) -> list[np.ndarray]:
        return [o + self.h * np.arange(n) for o, n in zip(self.origin, self.shape)]

    def coords(self) -> np.ndarray:
        """Node coordinates, shape ``(*self.shape, dim)``."""
        return np.stack(np.meshgrid(*self.axes(), indexing="ij"), axis=-1)

    def scaled(self, s: float) -> "GridSpec":
        return GridSpec(self.h * s, tuple(o * s for o in self.origin), self.shape)

    def to_dict(self) -> dict:
        return {"h": self.h, "origin": list(self.origin), "shape": list(self.shape)}

    @classmethod
    def covering(cls, shape: "Shape", h: float, pad: int = 0) -> "GridSpec":
        """Smallest grid with spacing ``h`` whose first node sits at the
        lower corner of the shape's bounding box (minus ``pad`` nodes)."""
        if not h > 0:
            raise GeometryError(f"grid spacing must be positive, got {h}")
        lo, hi = shape.bounds()
        origin = tuple(l - pad * h for l in lo)
        counts = tuple(
            int(math.ceil((b - a) / h - 1e-9)) + 1 + 2 * pad for a, b in zip(lo, hi)
        )
        return cls(h, origin, tuple(max(c, 2) for c in counts))


# ---------------------------------------------------------------------------
# shape descriptors


class Shape:
    """Base class of shape descriptors.

    Subclasses implement ``contains`` (vectorized over the last axis),
    ``bounds`` and ``to_dict``.  ``volume`` returns the analytic volume when
    it is known and ``None`` otherwise.
    """

    kind = "shape"
    dim: int

    def contains(self, x: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def bounds(self) -> tuple[tuple[float, ...], tuple[float, ...]]:
        raise NotImplementedError

    def volume(self) -> float | None:
        return None

    def to_dict(self) -> dict:
        raise NotImplementedError

    def scaled(self, s: float, translation=None) -> "Transformed":
        t = translation if translation is not None else (0.0,) * self.dim
        return Transformed(self, s, t)

    # boolean sugar
    def __or__(self, other):
        return BooleanShape("union", self, other)

    def __and__(self, other):
        return BooleanShape("intersection", self, other)

    def __sub__(self, other):
        return BooleanShape("difference", self, other)


def _scale_of(lo, hi) -> float:
    return max(max(abs(v) for v in lo + hi), max(b - a for a, b in zip(lo, hi)), 1e-300)


@dataclass(frozen=True, eq=True)
class Box(Shape):
    lo: tuple[float, ...]
    hi: tuple[float, ...]
    kind = "box"

    def __post_init__(self):
        object.__setattr__(self, "lo", _vec(self.lo, "lo"))
        object.__setattr__(self, "hi", _vec(self.hi, "hi"))
        if len(self.lo) != len(self.hi):
            raise ParameterError("box corners disagree on the dimension")
        if any(b <= a for a, b in zip(self.lo, self.hi)):
            raise ParameterError(f"box needs lo < hi on every axis, got {self.lo}, {self.hi}")

    @property
    def dim(self):
        return len(self.lo)

    def contains(self, x):
        tol = _REL_TOL * _scale_of(self.lo, self.hi)
        lo = np.asarray(self.lo) - tol
        hi = np.asarray(self.hi) + tol
        return np.all((x >= lo) & (x <= hi), axis=-1)

    def bounds(self):
        return self.lo, self.hi

    def volume(self):
        return math.prod(b - a for a, b in zip(self.lo, self.hi))

    def to_dict(self):
        return {"kind": self.kind, "lo": list(self.lo), "hi": list(self.hi)}


def unit_box(dim: int = 2) -> Box:
    return Box((0.0,) * dim, (1.0,) * dim)


def _ball_volume(dim: int, r: float) -> float:
    return math.pi ** (dim / 2) / math.gamma(dim / 2 + 1) * r**dim


@dataclass(frozen=True, eq=True)
class Ball(Shape):
    center: tuple[float, ...]
    radius: float
    kind = "ball"

    def __post_init__(self):
        object.__setattr__(self, "center", _vec(self.center, "center"))
        if not self.radius >= 0:
            raise ParameterError(f"radius must be non-negative, got {self.radius}")

    @property
    def dim(self):
        return len(self.center)

    def contains(self, x):
        d2 = np.sum((x - np.asarray(self.center)) ** 2, axis=-1)
        return d2 <= self.radius**2 * (1 + _REL_TOL)

    def bounds(self):
        return (
            tuple(c - self.radius for c in self.center),
            tuple(c + self.radius for c in self.center),
        )

    def volume(self):
        return _ball_volume(self.dim, self.radius)

    def to_dict(self):
        return {"kind": self.kind, "center": list(self.center), "radius": self.radius}


@dataclass(frozen=True, eq=True)
class Annulus(Shape):
    center: tuple[float, ...]
    r_inner: float
    r_outer: float
    kind = "annulus"

    def __post_init__(self):
        object.__setattr__(self, "center", _vec(self.center, "center"))
        if not 0 < self.r_inner < self.r_outer:
            raise ParameterError(
                f"annulus needs 0 < r_inner < r_outer, got {self.r_inner}, {self.r_outer}"
            )

    @property
    def dim(self):
        return len(self.center)

    def contains(self, x):
        d2 = np.sum((x - np.asarray(self.center)) ** 2, axis=-1)
        return (d2 <= self.r_outer**2 * (1 + _REL_TOL)) & (
            d2 >= self.r_inner**2 * (1 - _REL_TOL)
        )

    def bounds(self):
        r = self.r_outer
        return tuple(c - r for c in self.center), tuple(c + r for c in self.center)

    def volume(self):
        return _ball_volume(self.dim, self.r_outer) - _ball_volume(self.dim, self.r_inner)

    def to_dict(self):
        return {
            "kind": self.kind,
            "center": list(self.center),
            "r_inner": self.r_inner,
            "r_outer": self.r_outer,
        }


@dataclass(frozen=True, eq=True)
class LShape(Shape):
    """``corner + [0, size]^N`` minus the notch ``[arm, size]^2 x [0, size]^(N-2)``."""

    corner: tuple[float, ...]
    size: float
    arm: float
    kind = "lshape"

    def __post_init__(self):
        object.__setattr__(self, "corner", _vec(self.corner, "corner"))
        if len(self.corner) < 2:
            raise ParameterError("an L-shape needs dimension 2 or 3")
        if not 0 < self.arm < self.size:
            raise ParameterError(f"L-shape needs 0 < arm < size, got {self.arm}, {self.size}")

    @property
    def dim(self):
        return len(self.corner)

    def contains(self, x):
        y = x - np.asarray(self.corner)
        tol = _REL_TOL * max(self.size, max(abs(c) for c in self.corner))
        in_box = np.all((y >= -tol) & (y <= self.size + tol), axis=-1)
        notch = (y[..., 0] > self.arm + tol) & (y[..., 1] > self.arm + tol)
        return in_box & ~notch

    def bounds(self):
        return self.corner, tuple(c + self.size for c in self.corner)

    def volume(self):
        return (self.size**2 - (self.size - self.arm) ** 2) * self.size ** (self.dim - 2)

    def to_dict(self):
        return {"kind": self.kind, "corner": list(self.corner), "size": self.size, "arm": self.arm}


@dataclass(frozen=True, eq=True)
class Cusp(Shape):
    """Outward cusp ``{0 <= x_1 <= length, |x_rest| <= x_1**alpha}`` with tip at the origin.

    Only meant for exploratory sweeps.
    """

    alpha: float
    length: float
    dim: int = 2
    kind = "cusp"

    def __post_init__(self):
        if not self.alpha > 1:
            raise ParameterError(f"cusp exponent must exceed 1, got {self.alpha}")
        if not self.length > 0:
            raise ParameterError(f"cusp length must be positive, got {self.length}")
        if self.dim not in (2, 3):
            raise ParameterError("cusps exist in dimension 2 or 3")

    def contains(self, x):
        t = x[..., 0]
        rest = np.sqrt(np.sum(x[..., 1:] ** 2, axis=-1))
        tol = _REL_TOL * max(self.length, 1.0)
        tt = np.clip(t, 0.0, None)
        return (t >= -tol) & (t <= self.length + tol) & (rest <= tt**self.alpha + tol)

    def bounds(self):
        w = self.length**self.alpha
        return (0.0,) + (-w,) * (self.dim - 1), (self.length,) + (w,) * (self.dim - 1)

    def volume(self):
        a, L = self.alpha, self.length
        if self.dim == 2:
            return 2 * L ** (a + 1) / (a + 1)
        return math.pi * L ** (2 * a + 1) / (2 * a + 1)

    def to_dict(self):
        return {"kind": self.kind, "alpha": self.alpha, "length": self.length, "dim": self.dim}


@dataclass(frozen=True, eq=True)
class Transformed(Shape):
    """``scale * base + translation``."""

    base: Shape
    scale: float
    translation: tuple[float, ...]
    kind = "transformed"

    def __post_init__(self):
        object.__setattr__(self, "translation", _vec(self.translation, "translation"))
        if not self.scale > 0:
            raise ParameterError(f"scale must be positive, got {self.scale}")
        if len(self.translation) != self.base.dim:
            raise ParameterError("translation and base shape disagree on the dimension")

    @property
    def dim(self):
        return self.base.dim

    def contains(self, x):
        return self.base.contains((x - np.asarray(self.translation)) / self.scale)

    def bounds(self):
        lo, hi = self.base.bounds()
        t = self.translation
        return (
            tuple(self.scale * a + b for a, b in zip(lo, t)),
            tuple(self.scale * a + b for a, b in zip(hi, t)),
        )

    def volume(self):
        v = self.base.volume()
        return None if v is None else v * self.scale**self.dim

    def to_dict(self):
        return {
            "kind": self.kind,
            "base": self.base.to_dict(),
            "scale": self.scale,
            "translation": list(self.translation),
        }


_BOOLEAN_OPS = ("union", "intersection", "difference")


@dataclass(frozen=True, eq=True)
class BooleanShape(Shape):
    op: str
    a: Shape
    b: Shape
    kind = "boolean"

    def __post_init__(self):
        if self.op not in _BOOLEAN_OPS:
            raise ParameterError(f"unknown boolean op {self.op!r}")
        if self.a.dim != self.b.dim:
            raise ParameterError("boolean operands disagree on the dimension")

    @property
    def dim(self):
        return self.a.dim

    def contains(self, x):
        ia, ib = self.a.contains(x), self.b.contains(x)
        if self.op == "union":
            return ia | ib
        if self.op == "intersection":
            return ia & ib
        return ia & ~ib

    def bounds(self):
        (la, ha), (lb, hb) = self.a.bounds(), self.b.bounds()
        if self.op == "union":
            return tuple(map(min, la, lb)), tuple(map(max, ha, hb))
        if self.op == "intersection":
            return tuple(map(max, la, lb)), tuple(map(min, ha, hb))
        return la, ha

    def to_dict(self):
        return {"kind": self.kind, "op": self.op, "a": self.a.to_dict(), "b": self.b.to_dict()}


def shape_from_dict(d: dict) -> Shape:
    kind = d.get("kind")
    if kind == "box":
        return Box(d["lo"], d["hi"])
    if kind == "ball":
        return Ball(d["center"], float(d["radius"]))
    if kind == "annulus":
        return Annulus(d["center"], float(d["r_inner"]), float(d["r_outer"]))
    if kind == "lshape":
        return LShape(d["corner"], float(d["size"]), float(d["arm"]))
    if kind == "cusp":
        return Cusp(float(d["alpha"]), float(d["length"]), int(d.get("dim", 2)))
    if kind == "transformed":
        return Transformed(shape_from_dict(d["base"]), float(d["scale"]), d["translation"])
    if kind == "boolean":
        return BooleanShape(d["op"], shape_from_dict(d["a"]), shape_from_dict(d["b"]))
    raise ParameterError(f"unknown shape kind {kind!r}")


def shape_to_json(shape: Shape) -> str:
    return json.dumps(shape.to_dict(), sort_keys=True)


def shape_from_json(text: str) -> Shape:
    return shape_from_dict(json.loads(text))


def _flatten(d: dict, prefix: str = "") -> list[tuple[str, str]]:
    out = []
    for key, value in d.items():
        name = f"{prefix}{key}"
        if isinstance(value, dict):
            out.extend(_flatten(value, name + "."))
        elif isinstance(value, (list, tuple)):
            out.append((name, ",".join(repr(float(v)) for v in value)))
        else:
            out.append((name, str(value)))
    return out


def shape_to_kv(shape: Shape) -> str:
    """Plain-text ``key = value`` form; nested shapes use dotted keys."""
    return "\n".join(f"{k} = {v}" for k, v in _flatten(shape.to_dict())) + "\n"


_LIST_KEYS = {"lo", "hi", "center", "corner", "translation"}


def shape_from_kv(text: str) -> Shape:
    root: dict = {}
    for raw in text.splitlines():
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ParameterError(f"malformed shape line {raw!r}")
        key, value = (s.strip() for s in line.split("=", 1))
        *path, leaf = key.split(".")
        node = root
        for part in path:
            node = node.setdefault(part, {})
        if leaf in _LIST_KEYS:
            node[leaf] = [float(v) for v in value.split(",")]
        else:
            node[leaf] = value
    return shape_from_dict(root)


_NAMED = ("square", "cube", "segment", "ball", "annulus", "lshape", "cusp")


def named_shape(name: str, dim: int = 2) -> Shape:
    """The suite shapes used by the command line and the acceptance tests."""
    if name in ("square", "cube", "segment", "box"):
        return unit_box(dim)
    if name == "ball":
        return Ball((0.0,) * dim, 1.0)
    if name == "annulus":
        return Annulus((0.0,) * dim, 0.4, 1.0)
    if name == "lshape":
        return LShape((0.0,) * dim, 1.0, 0.5)
    if name == "cusp":
        return Cusp(1.5, 1.0, dim)
    raise ParameterError(f"unknown shape name {name!r}; expected one of {_NAMED}")


# ---------------------------------------------------------------------------
# masks


@dataclass(frozen=True, eq=False)
class DomainMask:
    """Per-node classification of a grid into exterior/boundary/interior."""

    grid: GridSpec
    labels: np.ndarray
    shape: Shape | None = None
    meta: dict = field(default_factory=dict)

    @property
    def dim(self) -> int:
        return self.grid.dim

    @property
    def h(self) -> float:
        return self.grid.h

    @property
    def inside(self) -> np.ndarray:
        return self.labels != EXTERIOR

    @property
    def interior(self) -> np.ndarray:
        return self.labels == INTERIOR

    @property
    def boundary(self) -> np.ndarray:
        return self.labels == BOUNDARY

    @property
    def n_interior(self) -> int:
        return int(np.count_nonzero(self.interior))

    @property
    def n_inside(self) -> int:
        return int(np.count_nonzero(self.inside))

    def same_as(self, other: "DomainMask") -> bool:
        return self.grid == other.grid and np.array_equal(self.labels, other.labels)

    def is_box(self) -> bool:
        s = self.shape
        while isinstance(s, Transformed):
            s = s.base
        if isinstance(s, Box):
            return True
        return s is None and bool(np.all(self.inside))


def classify(inside: np.ndarray) -> np.ndarray:
    """Labels from a membership array: inside nodes with an outside or
    out-of-grid axis neighbor are boundary nodes."""
    inside = np.asarray(inside, dtype=bool)
    exposed = np.zeros_like(inside)
    padded = np.pad(inside, 1, constant_values=False)
    core = tuple(slice(1, -1) for _ in range(inside.ndim))
    for axis in range(inside.ndim):
        for step in (-1, 1):
            sl = list(core)
            sl[axis] = slice(1 + step, padded.shape[axis] - 1 + step)
            exposed |= ~padded[tuple(sl)]
    labels = np.full(inside.shape, EXTERIOR, dtype=np.int8)
    labels[inside] = INTERIOR
    labels[inside & exposed] = BOUNDARY
    return labels


def mask_from_inside(grid: GridSpec, inside: np.ndarray, shape: Shape | None = None) -> DomainMask:
    labels = classify(inside)
    if not np.any(labels == INTERIOR):
        raise DegenerateDomainError("the domain has no interior node on this grid")
    return DomainMask(grid, labels, shape)


def rasterize(shape: Shape, grid: GridSpec) -> DomainMask:
    """Sample ``shape.contains`` at the grid nodes and classify them."""
    if shape.dim != grid.dim:
        raise GeometryError(f"shape is {shape.dim}-D but grid is {grid.dim}-D")
    lo, hi = shape.bounds()
    glo, ghi = grid.origin, grid.upper
    tol = 1e-9 * grid.h
    for a, b, ga, gb in zip(lo, hi, glo, ghi):
        if a < ga - tol or b > gb + tol:
            raise GeometryError(
                f"shape bounds {lo}..{hi} exceed the grid extent {glo}..{ghi}"
            )
    inside = shape.contains(grid.coords())
    return mask_from_inside(grid, inside, shape)


def rasterize_shape(shape: Shape, h: float, pad: int = 0) -> DomainMask:
    """Rasterize on the covering grid of ``shape`` (see :meth:`GridSpec.covering`)."""
    return rasterize(shape, GridSpec.covering(shape, h, pad))


def diameter(mask: DomainMask) -> float:
    """Largest distance between two non-exterior nodes."""
    pts = mask.grid.coords()[mask.inside]
    if len(pts) < 2:
        return 0.0
    if mask.dim == 1:
        return float(pts.max() - pts.min())
    try:
        pts = pts[ConvexHull(pts).vertices]
    except QhullError:
        pass  # flat point sets: fall back to all pairs
    return float(pdist(pts).max())


def boundary_weights(mask: DomainMask) -> tuple[np.ndarray, dict]:
    """Staircase surface weights: ``h**(N-1)`` per exposed face.

    A face is exposed when the axis neighbor is exterior or off the grid.
    Returns the per-node weight array and metadata; ``metadata['exact']`` is
    true only for axis-aligned boxes.
    """
    inside = mask.inside
    padded = np.pad(inside, 1, constant_values=False)
    core = tuple(slice(1, -1) for _ in range(inside.ndim))
    faces = np.zeros(inside.shape, dtype=np.int64)
    for axis in range(inside.ndim):
        for step in (-1, 1):
            sl = list(core)
            sl[axis] = slice(1 + step, padded.shape[axis] - 1 + step)
            faces += ~padded[tuple(sl)]
    faces[~inside] = 0
    weights = faces * mask.h ** (mask.dim - 1)
    meta = {
        "exact": mask.is_box(),
        "quadrature": "box-faces" if mask.is_box() else "staircase",
        "faces": int(faces.sum()),
    }
    return weights.astype(float), meta


def volume_estimate(mask: DomainMask, nodes: str = "interior") -> float:
    count = mask.n_interior if nodes == "interior" else mask.n_inside
    return count * mask.grid.cell_volume


def mask_to_csv(mask: DomainMask, fh) -> None:
    """Write node coordinates and labels (0 exterior, 1 boundary, 2 interior)."""
    writer = csv.writer(fh, lineterminator="\n")
    names = [f"x{k}" for k in range(mask.dim)]
    writer.writerow(names + ["label"])
    coords = mask.grid.coords().reshape(-1, mask.dim)
    for xyz, lab in zip(coords, mask.labels.ravel()):
        writer.writerow([repr(float(c)) for c in xyz] + [int(lab)])


def embed_mask(mask: DomainMask, big: GridSpec) -> tuple[DomainMask, tuple[int, ...]]:
    """Place ``mask`` into the larger grid ``big`` (same spacing, aligned nodes).

    Returns the embedded mask and the index offset of ``mask.grid`` inside ``big``.
    """
    if not math.isclose(big.h, mask.h, rel_tol=1e-12):
        raise GeometryError("embedding requires equal spacing")
    offset = []
    for o_small, o_big, n_small, n_big in zip(mask.grid.origin, big.origin, mask.grid.shape, big.shape):
        k = (o_small - o_big) / big.h
        ki = int(round(k))
        if abs(k - ki) > 1e-9 or ki < 0 or ki + n_small > n_big:
            raise GeometryError("grids are not aligned or the small grid does not fit")
        offset.append(ki)
    inside = np.zeros(big.shape, dtype=bool)
    sl = tuple(slice(k, k + n) for k, n in zip(offset, mask.grid.shape))
    inside[sl] = mask.inside
    return DomainMask(big, classify(inside), mask.shape), tuple(offset)


def box_grid(lo: Sequence[float], hi: Sequence[float], h: float) -> GridSpec:
    return GridSpec.covering(Box(tuple(lo), tuple(hi)), h)
