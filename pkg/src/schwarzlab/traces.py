"""Trace, impedance, exchange, and extension operators on the interface.

The compound trace operator T stacks, per subdomain, one zero-one selection
block per facet. The impedance M is a block-diagonal symmetric positive
definite weight. The exchange operator X is a real involution whose fixed
set is exactly the trace image of globally conforming functions; five
constructions are provided, from the plain two-sided swap to the general
M-orthogonal reflection around the single-valued interface space.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse

from .decomp import Decomposition
from .facets import FacetSystem
from .linalg import SparseMatrix, factorize

__all__ = [
    "TraceOperator",
    "ImpedanceOperator",
    "ExchangeOperator",
    "ExtensionOperator",
    "build_trace",
    "build_impedance",
    "build_exchange",
    "build_extension",
    "IMPEDANCE_VARIANTS",
    "EXCHANGE_VARIANTS",
]

IMPEDANCE_VARIANTS = ("scalar", "lumped_mass", "glob_block", "diagonal")
EXCHANGE_VARIANTS = ("swap", "multiplicity", "weighted", "glob_local", "global")


class TraceOperator:
    """Collective trace T = diag(T_i) for a facet system.

    Trace dofs are ordered subdomain-ascending; within a subdomain, facets
    are sorted by (sorted adjacency set, smallest dof); within a facet,
    dofs ascend. Each trace dof is the triple (subdomain, facet, global dof).
    """

    def __init__(self, system: FacetSystem, decomp: Decomposition):
        self.system = system
        self.decomp = decomp
        self.multiplicities = decomp.multiplicities

        slots = []
        facet_order: list[list[int]] = []
        for i in range(decomp.n_sub):
            fids = [idx for idx, F in enumerate(system.facets) if i in F.subdomains]
            fids.sort(key=lambda idx: (system.facets[idx].subdomains,
                                       min(system.facets[idx].dofs)))
            facet_order.append(fids)
            for fidx in fids:
                for k in system.facets[fidx].dofs:
                    slots.append((i, fidx, k))
        self.slots = tuple(slots)
        self.facet_order = facet_order
        self.dim_lambda = len(slots)
        self._slot_index = {s: t for t, s in enumerate(slots)}

        rows = np.arange(self.dim_lambda)
        cols = np.empty(self.dim_lambda, dtype=np.int64)
        local_index = [
            {int(k): l for l, k in enumerate(g)} for g in decomp.maps]
        for t, (i, fidx, k) in enumerate(slots):
            cols[t] = decomp.offsets[i] + local_index[i][k]
        self.matrix = scipy.sparse.csr_array(
            (np.ones(self.dim_lambda), (rows, cols)),
            shape=(self.dim_lambda, decomp.offsets[-1]))

        # row ranges per subdomain, for block-diagonal applications
        counts = [sum(len(system.facets[fidx].dofs) for fidx in fids)
                  for fids in facet_order]
        self.row_offsets = np.concatenate([[0], np.cumsum(counts)])

    def slot(self, i: int, fidx: int, k: int) -> int:
        return self._slot_index[(i, fidx, k)]

    def slot_range(self, i: int, fidx: int) -> tuple[int, int]:
        start = self.slot(i, fidx, self.system.facets[fidx].dofs[0])
        return start, start + len(self.system.facets[fidx].dofs)

    def apply(self, u) -> np.ndarray:
        return self.matrix @ np.asarray(u, dtype=np.complex128)

    def apply_T(self, lam) -> np.ndarray:
        return self.matrix.T @ np.asarray(lam, dtype=np.complex128)

    @property
    def surjective(self) -> bool:
        """True iff the rows of T are independent (each local dof used once)."""
        used = set()
        for i, _fidx, k in self.slots:
            if (i, k) in used:
                return False
            used.add((i, k))
        return True

    def to_sparse(self) -> SparseMatrix:
        return SparseMatrix.from_csr(self.matrix.astype(np.complex128))


def build_trace(system: FacetSystem, decomp: Decomposition) -> TraceOperator:
    return TraceOperator(system, decomp)


def _interface_edge_weights(trace: TraceOperator, sigma: float):
    """Per-facet lumped lengths and edge lists from facet-internal mesh edges.

    Every mesh edge joining two dofs of the same facet contributes half its
    length to each endpoint. Isolated dofs (for example a vertex glob) get a
    sigma * h_min fallback so the weight stays positive.
    """
    decomp = trace.decomp
    problem = decomp.problem
    mesh = problem.mesh
    dof_coords = mesh.coords[problem.free_nodes]
    # unique mesh edges between retained dofs
    edges = set()
    for tri in mesh.triangles:
        dofs = problem.dof_map[tri]
        for a in range(3):
            for b in range(a + 1, 3):
                if dofs[a] >= 0 and dofs[b] >= 0:
                    edges.add((min(dofs[a], dofs[b]), max(dofs[a], dofs[b])))
    h_min = min(float(np.linalg.norm(dof_coords[a] - dof_coords[b]))
                for a, b in edges) if edges else 1.0

    lumped = {}
    facet_edges = {}
    for fidx, F in enumerate(trace.system.facets):
        dset = set(F.dofs)
        weight = {k: 0.0 for k in F.dofs}
        internal = []
        for a, b in edges:
            if a in dset and b in dset:
                length = float(np.linalg.norm(dof_coords[a] - dof_coords[b]))
                weight[a] += 0.5 * length
                weight[b] += 0.5 * length
                internal.append((a, b, length))
        for k in F.dofs:
            if weight[k] == 0.0:
                weight[k] = h_min
        lumped[fidx] = {k: sigma * w for k, w in weight.items()}
        facet_edges[fidx] = internal
    return lumped, facet_edges, h_min


class ImpedanceOperator:
    """Block-diagonal SPD interface weight M = diag(M_i).

    The same block is used on every side of a facet, which is what makes
    the exchange an M-isometry (side-equal impedance).
    """

    def __init__(self, trace: TraceOperator, variant: str, sigma: float,
                 matrix: np.ndarray, facet_blocks: dict[int, np.ndarray]):
        self.trace = trace
        self.variant = variant
        self.sigma = sigma
        self.matrix = matrix                  # dense real (dim, dim)
        self.facet_blocks = facet_blocks      # facet index -> shared block
        self.a4_compatible = True             # construction is side-equal
        self._fac = factorize(matrix)
        self.is_diagonal = variant != "glob_block"

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]

    def apply(self, lam) -> np.ndarray:
        return self.matrix @ np.asarray(lam, dtype=np.complex128)

    def apply_inv(self, lam) -> np.ndarray:
        return self._fac.solve(np.asarray(lam, dtype=np.complex128))

    def norm_inv(self, lam) -> float:
        """The M^-1 norm of a dual trace vector."""
        value = float(np.vdot(lam, self.apply_inv(lam)).real)
        return float(np.sqrt(max(value, 0.0)))

    def norm(self, lam) -> float:
        value = float(np.vdot(lam, self.apply(lam)).real)
        return float(np.sqrt(max(value, 0.0)))

    def subdomain_block(self, i: int) -> np.ndarray:
        r0, r1 = self.trace.row_offsets[i], self.trace.row_offsets[i + 1]
        return self.matrix[r0:r1, r0:r1]


def build_impedance(trace: TraceOperator, variant: str, sigma: float,
                    weights=None) -> ImpedanceOperator:
    """Build the interface impedance M.

    scalar:      sigma * identity.
    lumped_mass: diagonal, sigma times the lumped facet-internal edge length.
    diagonal:    diagonal with caller-supplied per-dof positive weights
                 (shared by all sides of a facet); defaults to lumped_mass.
    glob_block:  consistent 1D mass over facet-internal edges (SPD block per
                 facet, identical on every side).
    """
    if variant not in IMPEDANCE_VARIANTS:
        raise ValueError(f"unknown impedance variant {variant!r}")
    if sigma <= 0.0:
        raise ValueError("sigma must be positive")
    dim = trace.dim_lambda
    M = np.zeros((dim, dim))
    facet_blocks: dict[int, np.ndarray] = {}

    if variant == "scalar":
        for fidx, F in enumerate(trace.system.facets):
            facet_blocks[fidx] = sigma * np.eye(len(F.dofs))
    else:
        lumped, facet_edges, h_min = _interface_edge_weights(trace, sigma)
        for fidx, F in enumerate(trace.system.facets):
            size = len(F.dofs)
            pos = {k: p for p, k in enumerate(F.dofs)}
            if variant in ("lumped_mass", "diagonal"):
                if variant == "diagonal" and weights is not None:
                    diag = np.array([float(weights[k]) for k in F.dofs])
                    if np.any(diag <= 0.0):
                        raise ValueError("diagonal weights must be positive")
                else:
                    diag = np.array([lumped[fidx][k] for k in F.dofs])
                facet_blocks[fidx] = np.diag(diag)
            else:  # glob_block: consistent 1D interface mass
                block = np.zeros((size, size))
                for a, b, length in facet_edges[fidx]:
                    pa, pb = pos[a], pos[b]
                    block[pa, pa] += sigma * length / 3.0
                    block[pb, pb] += sigma * length / 3.0
                    block[pa, pb] += sigma * length / 6.0
                    block[pb, pa] += sigma * length / 6.0
                for p in range(size):
                    if block[p, p] == 0.0:
                        block[p, p] = sigma * h_min
                eigs = np.linalg.eigvalsh(block)
                if eigs[0] <= 0.0:
                    raise ValueError(f"facet block {fidx} is not positive definite")
                facet_blocks[fidx] = block

    for fidx, F in enumerate(trace.system.facets):
        for i in F.subdomains:
            r0, r1 = trace.slot_range(i, fidx)
            M[r0:r1, r0:r1] = facet_blocks[fidx]
    return ImpedanceOperator(trace, variant, sigma, M, facet_blocks)


class ExchangeOperator:
    """Real involution X on the trace space."""

    def __init__(self, variant: str, matrix: np.ndarray, trace: TraceOperator | None):
        self.variant = variant
        self.matrix = matrix
        self.trace = trace

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]

    def apply(self, lam) -> np.ndarray:
        return self.matrix @ np.asarray(lam, dtype=np.complex128)

    def apply_T(self, tau) -> np.ndarray:
        return self.matrix.T @ np.asarray(tau, dtype=np.complex128)

    def projector(self) -> np.ndarray:
        """P = (I + X) / 2, the projection onto the fixed set of X."""
        return 0.5 * (np.eye(self.dim) + self.matrix)

    def involution_defect(self) -> float:
        return float(np.max(np.abs(self.matrix @ self.matrix - np.eye(self.dim))))


def _glob_slot_groups(trace: TraceOperator):
    """For each facet and dof: the trace slots of all sharing sides."""
    groups = []
    for fidx, F in enumerate(trace.system.facets):
        for k in F.dofs:
            groups.append([trace.slot(i, fidx, k) for i in F.subdomains])
    return groups


def build_exchange(trace: TraceOperator, impedance: ImpedanceOperator | None,
                   variant: str) -> ExchangeOperator:
    """Build the exchange operator X in one of five variants.

    swap exchanges the two sides of every bilateral facet. multiplicity,
    weighted, and glob_local reflect around per-facet averages (uniform,
    partition-of-unity weighted from the impedance diagonal, and local
    M-block weighted). global reflects around the single-valued interface
    space orthogonally in the M inner product; it requires a surjective
    trace and an SPD impedance.
    """
    if variant not in EXCHANGE_VARIANTS:
        raise ValueError(f"unknown exchange variant {variant!r}")
    system = trace.system
    dim = trace.dim_lambda
    X = np.zeros((dim, dim))

    if variant == "swap":
        if not system.is_bilateral:
            raise ValueError("swap exchange needs a bilateral facet system; "
                             "glob facets have no two-sided structure")
        for fidx, F in enumerate(system.facets):
            i, j = F.subdomains
            for k in F.dofs:
                X[trace.slot(i, fidx, k), trace.slot(j, fidx, k)] = 1.0
                X[trace.slot(j, fidx, k), trace.slot(i, fidx, k)] = 1.0
        return ExchangeOperator(variant, X, trace)

    if variant in ("multiplicity", "weighted"):
        if system.is_bilateral:
            raise ValueError(f"{variant} reflection needs a glob facet system")
        for group in _glob_slot_groups(trace):
            m = len(group)
            if variant == "multiplicity":
                w = np.full(m, 1.0 / m)
            else:
                if impedance is None or not impedance.is_diagonal:
                    raise ValueError("weighted reflection needs a diagonal impedance")
                diag = np.array([impedance.matrix[s, s] for s in group])
                w = diag / diag.sum()
            for a, sa in enumerate(group):
                for b, sb in enumerate(group):
                    X[sa, sb] = 2.0 * w[b] - (1.0 if a == b else 0.0)
        return ExchangeOperator(variant, X, trace)

    if variant == "glob_local":
        if system.is_bilateral:
            raise ValueError("glob-local reflection needs a glob facet system")
        if impedance is None:
            raise ValueError("glob-local reflection needs an impedance operator")
        for fidx, F in enumerate(system.facets):
            block = impedance.facet_blocks[fidx]
            m = len(F.subdomains)
            size = len(F.dofs)
            M_hat = m * block               # all sides share the same block
            E_side = np.linalg.solve(M_hat, block)   # = (1/m) I for equal blocks
            ranges = [trace.slot_range(i, fidx) for i in F.subdomains]
            for (a0, _a1) in ranges:
                for (b0, _b1) in ranges:
                    X[a0:a0 + size, b0:b0 + size] += 2.0 * E_side
                X[a0:a0 + size, a0:a0 + size] -= np.eye(size)
        return ExchangeOperator(variant, X, trace)

    # variant == "global": X = 2 R_L (R_L^T M R_L)^{-1} R_L^T M - I
    if impedance is None:
        raise ValueError("global reflection needs an impedance operator")
    if not trace.surjective:
        raise ValueError("global reflection needs a surjective trace "
                         "(each local interface dof selected exactly once)")
    R_L = _single_valued_embedding(trace)
    M = impedance.matrix
    gram = R_L.T @ M @ R_L
    X = 2.0 * (R_L @ np.linalg.solve(gram, R_L.T @ M)) - np.eye(dim)
    return ExchangeOperator(variant, X, trace)


def _single_valued_embedding(trace: TraceOperator) -> np.ndarray:
    """Incidence from the single-valued interface space into the trace space.

    One column per (facet, dof) pair; the column carries 1 on every sharing
    side's slot for that dof.
    """
    pairs = []
    for fidx, F in enumerate(trace.system.facets):
        for k in F.dofs:
            pairs.append((fidx, k))
    R_L = np.zeros((trace.dim_lambda, len(pairs)))
    for col, (fidx, k) in enumerate(pairs):
        for i in trace.system.facets[fidx].subdomains:
            R_L[trace.slot(i, fidx, k), col] = 1.0
    return R_L


@dataclass(frozen=True)
class ExtensionOperator:
    """E with T E = I: places each trace value at its unique local dof."""

    matrix: scipy.sparse.csr_array = field(repr=False)

    def apply(self, lam) -> np.ndarray:
        return self.matrix @ np.asarray(lam, dtype=np.complex128)

    def apply_T(self, g) -> np.ndarray:
        return self.matrix.T @ np.asarray(g, dtype=np.complex128)


def build_extension(trace: TraceOperator) -> ExtensionOperator:
    """E = T^T, valid exactly when the trace is surjective (T T^T = I).

    Bilateral systems with cross points (multiplicity > 2) select some local
    dof twice, the trace loses surjectivity, and no extension exists.
    """
    if not trace.surjective:
        raise ValueError("extension needs a surjective trace; bilateral systems "
                         "with cross points (multiplicity > 2) are rank-deficient")
    return ExtensionOperator(matrix=trace.matrix.T.tocsr())
