"""Sparse operator assembly, conjugate gradients and a generalized eigensolver.

Degrees of freedom are ordered lexicographically by node (C order over the
grid, restricted to the DOF nodes) and then by component.  With
``bc="zero-boundary"`` the DOF nodes are the interior nodes and the
stencils use the zero ghost policy; with ``bc="free"`` every non-exterior
node carries DOFs and boundary stencils are one-sided.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp

from . import diffops
from .errors import GeometryError, NonConvergenceError, ParameterError
from .field import VectorField
from .geometry import DomainMask

BCS = ("zero-boundary", "free")

EIG_TOL = 1e-8
CG_TOL = 1e-10

#: Cap on stored nonzeros of one assembled operator.
MAX_NNZ = 50_000_000


@dataclass(frozen=True, eq=False)
class SparseOperator:
    matrix: sp.csr_matrix
    symmetric: bool = False
    name: str = ""
    meta: dict = field(default_factory=dict)

    @property
    def shape(self):
        return self.matrix.shape

    def __matmul__(self, x):
        return self.matrix @ x

    def dot(self, x):
        return self.matrix @ x

    def diagonal(self):
        return self.matrix.diagonal()

    def to_coordinate_text(self) -> str:
        """Debug dump, one ``row col value`` triple per line (0-based)."""
        coo = self.matrix.tocoo()
        lines = [f"{int(r)} {int(c)} {float(v)!r}" for r, c, v in zip(coo.row, coo.col, coo.data)]
        return "\n".join([f"% {self.shape[0]} {self.shape[1]} {coo.nnz}"] + lines) + "\n"


def _as_matrix(A):
    if isinstance(A, SparseOperator):
        return A.matrix
    return A


def spot_check_symmetric(A, samples: int = 64, seed: int = 0) -> bool:
    """Compare ``A[i, j]`` with ``A[j, i]`` on random stored entries."""
    M = sp.csr_matrix(_as_matrix(A))
    coo = M.tocoo()
    if coo.nnz == 0:
        return True
    rng = np.random.default_rng(seed)
    pick = rng.integers(0, coo.nnz, size=min(samples, coo.nnz))
    rows, cols = coo.row[pick], coo.col[pick]
    return bool(np.array_equal(np.asarray(M[rows, cols]).ravel(), np.asarray(M[cols, rows]).ravel()))


# ---------------------------------------------------------------------------
# DOF layout


@dataclass(frozen=True, eq=False)
class DofMap:
    mask: DomainMask
    bc: str
    nodes: np.ndarray  # boolean array of DOF nodes
    index: np.ndarray  # node -> rank among DOF nodes, -1 elsewhere

    @property
    def n_nodes(self) -> int:
        return int(np.count_nonzero(self.nodes))

    @property
    def size(self) -> int:
        return self.n_nodes * self.mask.dim

    @property
    def ghost(self) -> str:
        return "zero" if self.bc == "zero-boundary" else "one-sided"

    def to_field(self, x: np.ndarray) -> VectorField:
        n = self.mask.dim
        vals = np.zeros(self.mask.grid.shape + (n,))
        vals[self.nodes] = np.asarray(x).reshape(-1, n)
        return VectorField(self.mask, vals)

    def from_field(self, u: VectorField) -> np.ndarray:
        return u.values[self.nodes].reshape(-1).copy()


def dof_map(mask: DomainMask, bc: str) -> DofMap:
    if bc not in BCS:
        raise ParameterError(f"bc must be one of {BCS}, got {bc!r}")
    nodes = mask.interior if bc == "zero-boundary" else mask.inside
    index = np.full(mask.grid.shape, -1, dtype=np.int64)
    index[nodes] = np.arange(int(np.count_nonzero(nodes)))
    return DofMap(mask, bc, nodes, index)


def _row_map(mask: DomainMask):
    """Rows of gradient-type operators: every non-exterior node."""
    rows = mask.inside
    index = np.full(mask.grid.shape, -1, dtype=np.int64)
    index[rows] = np.arange(int(np.count_nonzero(rows)))
    return rows, index


def derivative_matrix(mask: DomainMask, axis: int, kind: str, dofs: DofMap) -> sp.csr_matrix:
    """Scalar difference operator from DOF nodes to row nodes (non-exterior nodes)."""
    a, b, c = diffops.stencil(mask, axis, kind, dofs.ghost)
    rows_mask, row_index = _row_map(mask)
    r_list, c_list, v_list = [], [], []
    for step, coef in ((1, a), (0, b), (-1, c)):
        # source node = row node + step * e_axis
        src_index = diffops._shift(dofs.index + 1, axis, step) - 1 if step else dofs.index
        sel = rows_mask & (coef != 0) & (src_index >= 0)
        r_list.append(row_index[sel])
        c_list.append(src_index[sel])
        v_list.append(coef[sel])
    n_rows = int(np.count_nonzero(rows_mask))
    return sp.csr_matrix(
        (np.concatenate(v_list), (np.concatenate(r_list), np.concatenate(c_list))),
        shape=(n_rows, dofs.n_nodes),
    )


def _check_size(mask: DomainMask, dofs: DofMap):
    n = mask.dim
    est = int(np.count_nonzero(mask.inside)) * n * n * 3 * n
    if est > MAX_NNZ:
        raise GeometryError(f"operator would store about {est} nonzeros (cap {MAX_NNZ})")


def grad_matrix(mask: DomainMask, fam=diffops.DUAL, bc: str = "zero-boundary") -> sp.csr_matrix:
    """Rows ``(node, i, j)`` -> ``D_i u_j``; columns ``(dof node, component)``."""
    fam = diffops.family(fam)
    dofs = dof_map(mask, bc)
    _check_size(mask, dofs)
    n = mask.dim
    blocks = []
    eye = sp.identity(n, format="csr")
    for i in range(n):
        D = derivative_matrix(mask, i, fam.grad_kind, dofs)
        blocks.append((i, sp.kron(D, eye, format="csr")))
    n_rows = blocks[0][1].shape[0] // n
    G = sp.vstack([blk for _, blk in blocks], format="csr")
    # G currently orders rows as (i, r, j); permute to (r, i, j)
    order = np.arange(n * n_rows * n).reshape(n, n_rows, n).transpose(1, 0, 2).ravel()
    return G[order]


def sym_grad_matrix(mask: DomainMask, fam=diffops.DUAL, bc: str = "zero-boundary") -> sp.csr_matrix:
    G = grad_matrix(mask, fam, bc)
    n = mask.dim
    n_rows = G.shape[0] // (n * n)
    transpose = np.arange(n_rows * n * n).reshape(n_rows, n, n).transpose(0, 2, 1).ravel()
    return (0.5 * (G + G[transpose])).tocsr()


def assemble(op: str, mask: DomainMask, fam=diffops.DUAL, bc: str = "zero-boundary") -> SparseOperator:
    """Assemble ``grad``, ``sym_grad`` or ``mass`` on the DOF space of ``bc``.

    ``grad`` and ``sym_grad`` map DOFs to matrix-field rows; ``mass`` is the
    quadrature ``h^N I`` on the DOFs.
    """
    dofs = dof_map(mask, bc)
    if op == "grad":
        M = grad_matrix(mask, fam, bc)
    elif op == "sym_grad":
        M = sym_grad_matrix(mask, fam, bc)
    elif op == "mass":
        M = mask.grid.cell_volume * sp.identity(dofs.size, format="csr")
    else:
        raise ParameterError(f"unknown operator {op!r}")
    return SparseOperator(M.tocsr(), symmetric=(op == "mass"), name=op, meta={"bc": bc, "dofs": dofs.size})


def gram(D: SparseOperator | sp.spmatrix, mask: DomainMask, weight=None) -> SparseOperator:
    """``h^N D^T W D`` with ``W`` an optional per-row-node weight (repeated over entries)."""
    M = _as_matrix(D)
    h_n = mask.grid.cell_volume
    if weight is None:
        G = h_n * (M.T @ M)
    else:
        w = np.asarray(weight, dtype=float)[mask.inside]
        reps = M.shape[0] // w.size
        W = sp.diags(np.repeat(w, reps))
        G = h_n * (M.T @ W @ M)
    G = sp.csr_matrix(G)
    # symmetrize exactly; D^T D products can differ in the last bit
    G = (0.5 * (G + G.T)).tocsr()
    G.sum_duplicates()
    G.sort_indices()
    op = SparseOperator(G, symmetric=True, name="gram")
    if not spot_check_symmetric(op):
        raise ParameterError("assembled Gram matrix failed the symmetry spot check")
    return op


# ---------------------------------------------------------------------------
# conjugate gradients


@dataclass
class CGInfo:
    iterations: int = 0
    residual: float = 0.0


def cg_solve(A, b, tol: float = CG_TOL, maxiter: int | None = None, x0=None,
             jacobi: bool = True, info: CGInfo | None = None) -> np.ndarray:
    """Jacobi-preconditioned conjugate gradients for SPD ``A``.

    ``b`` may be a matrix, whose columns are solved independently in one
    sweep.  Stops when every column reaches ``|b - A x| <= tol |b|``;
    raises :class:`NonConvergenceError` after ``maxiter`` (default ``10 n``)
    iterations.
    """
    M = _as_matrix(A)
    matvec = M.__matmul__ if not callable(M) else M
    b = np.asarray(b, dtype=float)
    vector = b.ndim == 1
    B = b[:, None] if vector else b
    n = B.shape[0]
    maxiter = 10 * n if maxiter is None else maxiter
    if jacobi and hasattr(M, "diagonal"):
        d = np.asarray(M.diagonal(), dtype=float)
        dinv = np.where(d > 0, 1.0 / np.where(d > 0, d, 1.0), 1.0)[:, None]
    else:
        dinv = np.ones((n, 1))
    X = np.zeros_like(B) if x0 is None else np.array(x0, dtype=float).reshape(B.shape)
    R = B - matvec(X) if x0 is not None else B.copy()
    bnorm = np.linalg.norm(B, axis=0)
    target = tol * np.where(bnorm > 0, bnorm, 1.0)
    Z = dinv * R
    P = Z.copy()
    rz = np.sum(R * Z, axis=0)
    rnorm = np.linalg.norm(R, axis=0)
    it = 0
    while np.any(rnorm > target):
        if it >= maxiter:
            if info is not None:
                info.iterations, info.residual = it, float(np.max(rnorm / np.where(bnorm > 0, bnorm, 1)))
            raise NonConvergenceError(
                f"CG did not reach tol={tol} in {maxiter} iterations",
                best=X[:, 0] if vector else X, iterations=it,
            )
        active = rnorm > target
        AP = matvec(P)
        pap = np.sum(P * AP, axis=0)
        alpha = np.where(active & (pap > 0), rz / np.where(pap > 0, pap, 1.0), 0.0)
        X += alpha * P
        R -= alpha * AP
        Z = dinv * R
        rz_new = np.sum(R * Z, axis=0)
        beta = np.where(active & (rz != 0), rz_new / np.where(rz != 0, rz, 1.0), 0.0)
        P = Z + beta * P
        rz = rz_new
        rnorm = np.linalg.norm(R, axis=0)
        it += 1
    if info is not None:
        info.iterations = it
        info.residual = float(np.max(rnorm / np.where(bnorm > 0, bnorm, 1.0)))
    return X[:, 0] if vector else X


# ---------------------------------------------------------------------------
# generalized symmetric eigenproblems


@dataclass
class EigenResult:
    value: float
    vector: np.ndarray
    residual: float
    iterations: int
    history: list = field(default_factory=list)


def relative_residual(A, B, x, lam) -> float:
    """``|A x - lam B x| / (|A x| + |lam| |B x|)``."""
    Ax = _as_matrix(A) @ x
    Bx = _as_matrix(B) @ x
    denom = np.linalg.norm(Ax) + abs(lam) * np.linalg.norm(Bx)
    return float(np.linalg.norm(Ax - lam * Bx) / denom) if denom > 0 else 0.0


def _nested_cg(A, tol: float, maxiter: int):
    M = _as_matrix(A)

    def apply(R):
        try:
            return cg_solve(M, R, tol=tol, maxiter=maxiter)
        except NonConvergenceError as exc:
            return exc.best  # an inexact preconditioner is still a preconditioner

    return apply


def _b_orthonormal_basis(S, BS, AS, drop: float = 1e-10, passes: int = 2):
    """B-orthonormalize the columns of ``S`` (SVQB), dropping dependent directions."""
    for _ in range(passes):
        S, BS, AS = _svqb(S, BS, AS, drop)
    return S, BS, AS


def _svqb(S, BS, AS, drop):
    G = S.T @ BS
    G = 0.5 * (G + G.T)
    d = np.sqrt(np.clip(np.diag(G), 1e-300, None))
    Gs = G / d[:, None] / d[None, :]
    lam, V = np.linalg.eigh(Gs)
    keep = lam > drop * lam.max()
    C = (V[:, keep] / np.sqrt(lam[keep])) / d[:, None]
    return S @ C, BS @ C, AS @ C


def _lobpcg(A, B, largest: bool, tol: float, seed: int, block: int | None,
            maxiter: int | None, precond, x0=None) -> EigenResult:
    Am, Bm = _as_matrix(A), _as_matrix(B)
    n = Am.shape[0]
    if Am.shape != (n, n) or Bm.shape != (n, n):
        raise ParameterError("A and B must be square and of equal size")
    k = block if block is not None else 4
    k = max(1, min(k, n // 3 if n >= 3 else 1))
    maxiter = 10 * n if maxiter is None else maxiter
    rng = np.random.default_rng(seed)
    X = rng.standard_normal((n, k))
    if x0 is not None:
        X[:, 0] = np.asarray(x0, dtype=float)
    AX, BX = Am @ X, Bm @ X
    X, BX, AX = _b_orthonormal_basis(X, BX, AX)
    P = None
    history = []
    sign = -1.0 if largest else 1.0
    it = 0
    while True:
        H = X.T @ AX
        H = 0.5 * (H + H.T)
        theta, Y = np.linalg.eigh(sign * H)
        theta = sign * theta
        Y = Y[:, :k]
        theta = theta[:k]
        X = X @ Y
        # recompute products every step: carried updates drift once the basis
        # becomes ill-conditioned near convergence
        AX, BX = Am @ X, Bm @ X
        R = AX - BX * theta
        denom = np.linalg.norm(AX, axis=0) + np.abs(theta) * np.linalg.norm(BX, axis=0)
        res = np.linalg.norm(R, axis=0) / np.where(denom > 0, denom, 1.0)
        history.append(float(theta[0]))
        if res[0] <= tol:
            break
        if it >= maxiter:
            raise NonConvergenceError(
                f"eigensolver did not reach tol={tol} in {maxiter} iterations",
                best=EigenResult(float(theta[0]), X[:, 0].copy(), float(res[0]), it, history),
                iterations=it,
            )
        W = precond(R) if precond is not None else R.copy()
        # an accurate preconditioner returns nearly span(X); remove that part first
        for _ in range(2):
            W = W - X @ (BX.T @ W)
        AW, BW = Am @ W, Bm @ W
        if P is None:
            S, BS, AS = np.hstack([X, W]), np.hstack([BX, BW]), np.hstack([AX, AW])
        else:
            AP, BP = Am @ P, Bm @ P
            S, BS, AS = np.hstack([X, W, P]), np.hstack([BX, BW, BP]), np.hstack([AX, AW, AP])
        Q, BQ, AQ = _b_orthonormal_basis(S, BS, AS)
        H = Q.T @ AQ
        H = 0.5 * (H + H.T)
        mu, Z = np.linalg.eigh(sign * H)
        Z = Z[:, :k]
        Xn, AXn, BXn = Q @ Z, AQ @ Z, BQ @ Z
        P = Xn - X @ (X.T @ BXn)
        X, AX, BX = Xn, AXn, BXn
        X, BX, AX = _b_orthonormal_basis(X, BX, AX)
        it += 1
    x = X[:, 0].copy()
    lam = float((x @ (Am @ x)) / (x @ (Bm @ x)))
    return EigenResult(lam, x, relative_residual(Am, Bm, x, lam), it, history)


def gen_eig_max(A, B, tol: float = EIG_TOL, seed: int = 0, block: int | None = None,
                maxiter: int | None = None, inner_tol: float = 1e-4, x0=None) -> EigenResult:
    """Largest ``lam`` with ``A x = lam B x`` (A symmetric PSD, B SPD).

    Block LOBPCG iteration for ``B^{-1} A`` in which the action of ``B^{-1}``
    is approximated by a nested Jacobi-CG solve with tolerance ``inner_tol``.
    """
    n = _as_matrix(B).shape[0]
    precond = _nested_cg(B, inner_tol, 10 * n)
    return _lobpcg(A, B, True, tol, seed, block, maxiter, precond, x0)


def gen_eig_min(A, B, tol: float = EIG_TOL, seed: int = 0, block: int | None = None,
                maxiter: int | None = None, inner_tol: float = 1e-4, x0=None) -> EigenResult:
    """Smallest ``lam`` with ``A x = lam B x`` (A, B SPD), preconditioned by nested CG on ``A``."""
    n = _as_matrix(A).shape[0]
    precond = _nested_cg(A, inner_tol, 10 * n)
    return _lobpcg(A, B, False, tol, seed, block, maxiter, precond, x0)


def dense_gen_eig(A, B) -> np.ndarray:
    """All eigenvalues of the pencil by dense factorization (test oracle)."""
    Ad = _as_matrix(A)
    Bd = _as_matrix(B)
    Ad = Ad.toarray() if sp.issparse(Ad) else np.asarray(Ad)
    Bd = Bd.toarray() if sp.issparse(Bd) else np.asarray(Bd)
    return sla.eigh(Ad, Bd, eigvals_only=True)


def is_psd(A, samples: int = 100, seed: int = 0, tol: float = 1e-12) -> bool:
    M = _as_matrix(A)
    rng = np.random.default_rng(seed)
    for _ in range(samples):
        x = rng.standard_normal(M.shape[0])
        if x @ (M @ x) < -tol * (x @ x):
            return False
    return True


def condition_hint(A) -> float:
    d = _as_matrix(A).diagonal()
    return float(d.max() / d.min()) if d.min() > 0 else math.inf
