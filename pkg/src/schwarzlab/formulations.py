"""Solvable systems: augmented local operators, the dual interface system,
primal recovery, pseudo-energy bookkeeping, the one-step reflection, and the
sign-regularized one-sided jump method.

The dual system is the interface fixed-point equation
(I - X^T S) lambda = d with the scattering operator
S = -I + 2 alpha M T (A + alpha T^T M T)^{-1} T^T under side-equal
impedance; the general side-unequal form replaces 2M by (M + X^T M X).
Every scattering application costs one augmented solve per subdomain.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse

from .decomp import Decomposition
from .facets import Facet, FacetSystem, build_bilateral
from .linalg import DenseFactorization, SingularMatrixError, factorize, gmres
from .traces import (ExchangeOperator, ImpedanceOperator, TraceOperator,
                     build_exchange, build_impedance, build_trace)

__all__ = [
    "AugmentedLocal",
    "DualSystem",
    "FetiH",
    "augmented_factorize",
    "build_dual_system",
    "exceptional_exchange",
    "exceptional_system",
    "fetih_build",
    "fetih_solve",
    "twin_scalar",
    "TwinScalar",
]


class AugmentedLocal:
    """Per-subdomain factorizations of A_i + alpha * T_i^T M_i T_i."""

    def __init__(self, blocks: list[np.ndarray], offsets: np.ndarray, alpha: complex):
        self.alpha = complex(alpha)
        self.offsets = offsets
        self.matrices = blocks
        self.factors: list[DenseFactorization] = []
        for i, block in enumerate(blocks):
            try:
                self.factors.append(factorize(block))
            except SingularMatrixError as exc:
                raise SingularMatrixError(
                    f"augmented operator of subdomain {i} is singular; the "
                    f"augmented-invertibility assumption fails there") from exc

    @classmethod
    def build(cls, decomp: Decomposition, trace: TraceOperator,
              impedance: ImpedanceOperator, alpha: complex) -> "AugmentedLocal":
        blocks = []
        for i in range(decomp.n_sub):
            A_i = decomp.local_A(i).toarray()
            r0, r1 = trace.row_offsets[i], trace.row_offsets[i + 1]
            c0, c1 = decomp.offsets[i], decomp.offsets[i + 1]
            T_i = trace.matrix[r0:r1, c0:c1].toarray()
            M_i = impedance.subdomain_block(i)
            blocks.append(A_i + alpha * (T_i.T @ (M_i @ T_i)))
        return cls(blocks, decomp.offsets, alpha)

    def apply_inv(self, g) -> np.ndarray:
        """Blockwise solve of the augmented system on the product space."""
        g = np.asarray(g, dtype=np.complex128)
        out = np.empty_like(g)
        for i, fac in enumerate(self.factors):
            a, b = self.offsets[i], self.offsets[i + 1]
            out[a:b] = fac.solve(g[a:b])
        return out


def augmented_factorize(decomp: Decomposition, trace: TraceOperator,
                        impedance: ImpedanceOperator, alpha: complex) -> AugmentedLocal:
    """Factor the augmented subdomain operators; fails on singular blocks."""
    if alpha not in (1.0 + 0.0j, 1j):
        alpha = complex(alpha)
    return AugmentedLocal.build(decomp, trace, impedance, alpha)


class DualSystem:
    """The interface equation (I - X^T S) lambda = d and its building blocks."""

    def __init__(self, decomp: Decomposition, aug: AugmentedLocal,
                 T: scipy.sparse.csr_array, M: np.ndarray, X: np.ndarray,
                 alpha: complex, f: np.ndarray, a4: bool = True,
                 trace: TraceOperator | None = None,
                 system: FacetSystem | None = None,
                 impedance: ImpedanceOperator | None = None):
        self.decomp = decomp
        self.aug = aug
        self.T = T
        self.M = np.asarray(M)
        self.X = np.asarray(X)
        self.alpha = complex(alpha)
        self.f = np.asarray(f, dtype=np.complex128)
        self.a4 = bool(a4)
        self.trace = trace
        self.system = system
        self.impedance = impedance
        self.dim = T.shape[0]
        self._M_fac = factorize(self.M) if self.dim else None
        self._A_csr = decomp.A_blockdiag()
        if not a4:
            self._M_eff = self.M + self.X.T @ self.M @ self.X
        else:
            self._M_eff = None

    # -- norms -------------------------------------------------------------

    def norm_Minv(self, lam) -> float:
        if self.dim == 0:
            return 0.0
        value = float(np.vdot(lam, self._M_fac.solve(np.asarray(lam, np.complex128))).real)
        return float(np.sqrt(max(value, 0.0)))

    # -- operator applications --------------------------------------------

    def apply_S(self, lam) -> np.ndarray:
        lam = np.asarray(lam, dtype=np.complex128)
        v = self.aug.apply_inv(self.T.T @ lam)
        if self.a4:
            return -lam + 2.0 * self.alpha * (self.M @ (self.T @ v))
        return -lam + self.alpha * (self._M_eff @ (self.T @ v))

    def apply_K(self, lam) -> np.ndarray:
        """K = I - X^T S."""
        return np.asarray(lam, np.complex128) - self.X.T @ self.apply_S(lam)

    def rhs_d(self) -> np.ndarray:
        v = self.aug.apply_inv(self.f)
        if self.a4:
            return 2.0 * self.alpha * (self.X.T @ (self.M @ (self.T @ v)))
        return self.alpha * (self.X.T @ (self._M_eff @ (self.T @ v)))

    def primal_recover(self, lam) -> np.ndarray:
        """u = (A + alpha T^T M T)^{-1} (f + T^T lambda)."""
        return self.aug.apply_inv(self.f + self.T.T @ np.asarray(lam, np.complex128))

    # -- diagnostics -------------------------------------------------------

    def pseudo_energy(self, lam) -> tuple[float, float, float]:
        """Return (|S lam|^2_{M^-1} + 4p, |lam|^2_{M^-1}, p).

        p is the subdomain loss Re<A v, conj(v)> (coercive, alpha = 1) or
        Im<A v, conj(v)> (wave, alpha = i) with v the augmented solve of
        T^T lam; the two sides agree identically, which is what makes the
        scattering operator non-expansive.
        """
        lam = np.asarray(lam, dtype=np.complex128)
        v = self.aug.apply_inv(self.T.T @ lam)
        quad = complex(np.vdot(v, self._A_csr @ v))
        p = quad.imag if self.alpha == 1j else quad.real
        s = self.apply_S(lam)
        lhs = self.norm_Minv(s) ** 2 + 4.0 * p
        rhs = self.norm_Minv(lam) ** 2
        return lhs, rhs, p

    def materialize_K(self) -> np.ndarray:
        """Dense I - X^T S via column-by-column application."""
        K = np.empty((self.dim, self.dim), dtype=np.complex128)
        e = np.zeros(self.dim, dtype=np.complex128)
        for j in range(self.dim):
            e[j] = 1.0
            K[:, j] = self.apply_K(e)
            e[j] = 0.0
        return K

    def solve_direct(self, deflate=None) -> np.ndarray:
        """Dense reference multiplier; minimum-norm when Z is nontrivial.

        `deflate` takes the redundancy basis; the least-squares solve already
        picks the minimum-norm solution, and the basis (if given) is used to
        project that representative onto the complement of Z in the M^-1
        metric so error histories are well defined.
        """
        K = self.materialize_K()
        d = self.rhs_d()
        lam, *_ = np.linalg.lstsq(K, d, rcond=None)
        if deflate is not None and deflate.shape[1] > 0:
            lam = self.deflate(lam, deflate)
        return lam

    def deflate(self, lam, basis) -> np.ndarray:
        """Remove redundancy components, orthogonally in the M^-1 metric."""
        if basis is None or basis.shape[1] == 0:
            return np.asarray(lam, np.complex128)
        Z = basis.astype(np.complex128)
        WZ = self._M_fac.solve(Z)
        gram = Z.conj().T @ WZ
        coef = np.linalg.solve(gram, WZ.conj().T @ lam)
        return np.asarray(lam, np.complex128) - Z @ coef


def build_dual_system(decomp: Decomposition, trace: TraceOperator,
                      impedance: ImpedanceOperator, exchange: ExchangeOperator,
                      alpha: complex, a4: bool | None = None) -> DualSystem:
    """Assemble the dual system from interface operators."""
    aug = augmented_factorize(decomp, trace, impedance, alpha)
    if a4 is None:
        a4 = impedance.a4_compatible
    return DualSystem(decomp, aug, trace.matrix, impedance.matrix, exchange.matrix,
                      alpha, decomp.f_concat, a4=a4, trace=trace,
                      system=trace.system, impedance=impedance)


# -- exceptional one-step reflection ---------------------------------------


def exceptional_exchange(decomp: Decomposition) -> ExchangeOperator:
    """X = 2 R Ahat^{-1} R^T A - I on the full product space.

    Defined for the coercive regime (real symmetric positive definite
    operators); the whole product space acts as the trace space (T = I) and
    the impedance equals the operator itself (M = A).
    """
    problem = decomp.problem
    if problem.wave:
        raise ValueError("the one-step reflection needs the coercive regime "
                         "(real symmetric positive definite operators)")
    A = decomp.A_blockdiag().toarray().real
    R = decomp.R_stacked().csr.real
    Ahat_fac = factorize(problem.A_hat())
    RtA = R.T @ A
    X = 2.0 * (R @ Ahat_fac.solve(RtA.astype(np.complex128)).real) - np.eye(A.shape[0])
    return ExchangeOperator("exceptional", X, None)


def exceptional_system(decomp: Decomposition) -> DualSystem:
    """Dual system of the one-step configuration: T = I, M = A, alpha = 1.

    The scattering operator degenerates to zero, so one undamped update from
    lambda = 0 reproduces the restricted global solution exactly.
    """
    X = exceptional_exchange(decomp)
    n_u = decomp.offsets[-1]
    A = decomp.A_blockdiag().toarray().real
    T = scipy.sparse.identity(n_u, format="csr")
    blocks = [2.0 * decomp.local_A(i).toarray() for i in range(decomp.n_sub)]
    aug = AugmentedLocal(blocks, decomp.offsets, 1.0)
    return DualSystem(decomp, aug, T, A, X.matrix, 1.0, decomp.f_concat, a4=True)


# -- twin-scalar fixture ---------------------------------------------------


@dataclass(frozen=True)
class _ScalarProblem:
    """Synthetic global problem with a single dof shared by two subdomains."""

    a: tuple[float, float]
    f_hat: complex
    wave: bool = False

    @property
    def n(self) -> int:
        return 1

    @property
    def f(self) -> np.ndarray:
        return np.array([self.f_hat], dtype=np.complex128)

    def combine(self, A0, A1, A2):
        return A0 + A1 + A2

    def A_hat(self):
        from .linalg import SparseMatrix
        return SparseMatrix.from_dense([[self.a[0] + self.a[1]]])

    def direct_solve(self) -> np.ndarray:
        return np.array([self.f_hat / (self.a[0] + self.a[1])], dtype=np.complex128)


@dataclass(frozen=True)
class TwinScalar:
    """Hand-checkable two-subdomain scalar fixture.

    One global dof, A_i = [a_i], impedance m on both sides, swap exchange.
    Scattering block per side: (alpha*m - a_i) / (alpha*m + a_i).
    """

    decomp: Decomposition
    system: FacetSystem
    trace: TraceOperator
    impedance: ImpedanceOperator
    exchange: ExchangeOperator
    dual: DualSystem


def twin_scalar(a=(1.0, 1.0), m: float = 1.0, alpha: complex = 1.0,
                f=(1.0, 1.0)) -> TwinScalar:
    from .linalg import SparseMatrix

    problem = _ScalarProblem(a=(float(a[0]), float(a[1])),
                             f_hat=complex(f[0]) + complex(f[1]))
    zero = SparseMatrix.from_dense([[0.0]])
    local_parts = [
        {"A0": SparseMatrix.from_dense([[a[0]]]), "A1": zero, "A2": zero},
        {"A0": SparseMatrix.from_dense([[a[1]]]), "A1": zero, "A2": zero},
    ]
    decomp = Decomposition(problem, [[0], [0]], local_parts,
                           [[complex(f[0])], [complex(f[1])]])
    system = FacetSystem(variant="bilateral_max",
                         facets=(Facet(subdomains=(0, 1), dofs=(0,), kind="bilateral"),),
                         n_subdomains=2)
    trace = build_trace(system, decomp)
    impedance = build_impedance(trace, "scalar", m)
    exchange = build_exchange(trace, impedance, "swap")
    dual = build_dual_system(decomp, trace, impedance, exchange, complex(alpha))
    return TwinScalar(decomp=decomp, system=system, trace=trace,
                      impedance=impedance, exchange=exchange, dual=dual)


# -- sign-regularized one-sided jump method --------------------------------


@dataclass(frozen=True)
class FetiH:
    """Augmented operators, sign pattern, and one-sided signed jump."""

    decomp: Decomposition
    system: FacetSystem
    trace: TraceOperator
    signs: np.ndarray = field(repr=False)          # per-subdomain +-1
    tree_pairs: tuple = ()                         # selected adjacency edges
    perp_facets: tuple = ()                        # facet indices on tree edges
    aug: AugmentedLocal | None = None
    aug_terms: tuple = ()                          # per-subdomain sign terms
    facet_blocks: dict = field(default_factory=dict)  # shared M_F per facet
    B: scipy.sparse.csr_array | None = None        # one-sided signed jump of T
    f: np.ndarray | None = None

    @property
    def dim_multipliers(self) -> int:
        return self.B.shape[0]


def fetih_build(decomp: Decomposition, system: FacetSystem,
                impedance: ImpedanceOperator) -> FetiH:
    """Sign pattern, regularized operators, and jump for a bilateral system.

    A spanning tree of the subdomain adjacency graph fixes an alternating
    sign pattern; each tree facet contributes +-i sigma_i T_iF^T M_F T_iF to
    the two adjacent subdomains, which cancels exactly in the assembled sum.
    Requires loss-free local operators (no first-order loss part).
    """
    if not system.is_bilateral:
        raise ValueError("the one-sided jump method needs a bilateral facet system")
    for i in range(decomp.n_sub):
        if decomp.local_part(i, "A1").nnz and decomp.local_part(i, "A1").max_abs() > 0:
            raise ValueError("the one-sided jump method needs loss-free local "
                             "operators (zero first-order loss part)")
    trace = impedance.trace
    if trace.system is not system:
        raise ValueError("impedance was built for a different facet system")

    pairs = sorted({tuple(sorted(F.subdomains)) for F in system.facets})
    nodes = range(decomp.n_sub)
    # Kruskal spanning tree in lexicographic edge order
    parent = {v: v for v in nodes}

    def find(v):
        while parent[v] != v:
            parent[v] = parent[parent[v]]
            v = parent[v]
        return v

    tree = []
    for a, b in pairs:
        ra, rb = find(a), find(b)
        if ra != rb:
            parent[ra] = rb
            tree.append((a, b))
    if len(tree) != decomp.n_sub - 1:
        raise ValueError("subdomain adjacency graph is disconnected")

    adj = {v: [] for v in nodes}
    for a, b in tree:
        adj[a].append(b)
        adj[b].append(a)
    signs = np.zeros(decomp.n_sub, dtype=np.int64)
    signs[0] = 1
    queue = [0]
    while queue:
        v = queue.pop(0)
        for w in adj[v]:
            if signs[w] == 0:
                signs[w] = -signs[v]
                queue.append(w)

    tree_set = set(tree)
    perp = tuple(fidx for fidx, F in enumerate(system.facets)
                 if tuple(sorted(F.subdomains)) in tree_set)

    blocks, terms = [], []
    for i in range(decomp.n_sub):
        base = decomp.local_A(i).toarray().astype(np.complex128)
        term = np.zeros_like(base)
        c0, c1 = decomp.offsets[i], decomp.offsets[i + 1]
        for fidx in perp:
            F = system.facets[fidx]
            if i not in F.subdomains:
                continue
            r0, r1 = trace.slot_range(i, fidx)
            T_iF = trace.matrix[r0:r1, c0:c1].toarray()
            term += 1j * signs[i] * (T_iF.T @ (impedance.facet_blocks[fidx] @ T_iF))
        blocks.append(base + term)
        terms.append(term)
    aug = AugmentedLocal(blocks, decomp.offsets, 1j)

    # one-sided signed jump over all facets: row (tau_iF - tau_jF), i > j
    trace_col = trace.matrix.indices  # one selected column per trace row
    b_rows, b_cols, b_data = [], [], []
    row = 0
    for fidx, F in enumerate(system.facets):
        j, i = sorted(F.subdomains)  # i > j
        for k in F.dofs:
            b_rows.extend((row, row))
            b_cols.extend((trace_col[trace.slot(i, fidx, k)],
                           trace_col[trace.slot(j, fidx, k)]))
            b_data.extend((1.0, -1.0))
            row += 1
    B = scipy.sparse.csr_array((b_data, (b_rows, b_cols)),
                               shape=(row, decomp.offsets[-1]))

    return FetiH(decomp=decomp, system=system, trace=trace, signs=signs,
                 tree_pairs=tuple(tree), perp_facets=perp, aug=aug,
                 aug_terms=tuple(terms), facet_blocks=dict(impedance.facet_blocks),
                 B=B, f=decomp.f_concat)


def fetih_solve(fetih: FetiH, tol: float = 1e-10,
                maxit: int | None = None):
    """Eliminate u from the saddle system and iterate on the multipliers.

    Solves B Atilde^{-1} B^T lambda = B Atilde^{-1} f with unweighted full
    GMRES, then recovers u = Atilde^{-1} (f - B^T lambda).
    Returns (u, lambda, residual history).
    """
    B = fetih.B
    aug = fetih.aug

    def apply(lam):
        return B @ aug.apply_inv(B.T @ lam)

    rhs = B @ aug.apply_inv(fetih.f)
    lam, history = gmres(apply, rhs, tol=tol, maxit=maxit)
    u = aug.apply_inv(fetih.f - B.T @ lam)
    return u, lam, history


def fetih_assembling_deviation(fetih: FetiH) -> float:
    """Max deviation of sum_i R_i^T Atilde_i R_i from the global operator.

    The sign-regularization terms cancel pairwise and exactly; the deviation
    is that of the underlying element-split assembly (zero by construction).
    """
    decomp = fetih.decomp
    trace = fetih.trace
    n = decomp.n
    # accumulate the sign terms facet by facet, the two sides back to back:
    # the identical +-i M_F values then cancel exactly
    term_total = np.zeros((n, n), dtype=np.complex128)
    for fidx in fetih.perp_facets:
        F = fetih.system.facets[fidx]
        dofs = np.asarray(F.dofs)
        M_F = fetih.facet_blocks[fidx]
        for i in F.subdomains:
            term_total[np.ix_(dofs, dofs)] += 1j * fetih.signs[i] * M_F
    dev_terms = float(np.max(np.abs(term_total))) if n else 0.0
    # the base operators re-accumulate bitwise to the decomposition's global
    summed, _ = decomp.accumulate_global()
    combined = decomp.problem.combine(summed["A0"].csr, summed["A1"].csr,
                                      summed["A2"].csr)
    diff = (combined - decomp.problem.A_hat().csr).tocoo()
    dev_base = float(np.max(np.abs(diff.data))) if diff.nnz else 0.0
    return max(dev_terms, dev_base)
