"""Coupled bulk-surface operators, relaxation-parameter handling, monitors.

The coupled phase-field/chemical-potential pair is discretized on the
product of bulk and surface nodal spaces.  Two relaxation parameters K and
L in [0, inf] control the boundary coupling: finite positive values add a
Robin penalty with weight 1/J, the value 0 switches to a constrained
product space (bulk trace tied to the surface field), and infinity
decouples the equations.  Vectors over the product space are stored as
``concat(bulk, surface)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import fem, linalg
from .fem import DofMap
from .linalg import SparseMatrix, block_assemble, spmv
from .mesh import Mesh, bulk_area, surface_length
from .potentials import Potential

INF = math.inf

# relative tolerance for detecting an exact violation of the
# mean-compatibility condition alpha*beta*|Omega| + |Gamma| != 0
_MEASURE_TOL = 1e-10


class ParameterError(ValueError):
    """Ill-posed relaxation/coupling parameter combination."""


def h_of(J: float) -> float:
    """Coupling weight: 1/J for finite positive J, exactly 0 at J in {0, inf}."""
    if J != J or J < 0:
        raise ParameterError(f"relaxation parameter must be >= 0 or inf, got {J}")
    if J == 0.0 or J == INF:
        return 0.0
    return 1.0 / J


@dataclass(frozen=True)
class ModelParams:
    """Physical and coupling parameters of the bulk-surface system.

    ``K`` couples the phase fields (bulk trace vs. ``alpha * psi + alpha2``),
    ``L`` the chemical potentials (``mu`` vs. ``beta * theta``); both live in
    [0, inf].  ``eps``/``delta``/``kappa`` set the interface widths, ``m_om``
    and ``m_ga`` the mobilities.
    """

    K: float
    L: float
    alpha: float = 1.0
    beta: float = 1.0
    alpha2: float = 0.0
    eps: float = 1.0
    delta: float = 1.0
    kappa: float = 1.0
    m_om: float = 1.0
    m_ga: float = 1.0

    def __post_init__(self):
        for name in ("eps", "delta", "kappa", "m_om", "m_ga"):
            if getattr(self, name) <= 0:
                raise ParameterError(f"{name} must be positive")
        for name in ("K", "L"):
            v = getattr(self, name)
            if v != v or v < 0:
                raise ParameterError(f"{name} must be in [0, inf]")
        if self.K == 0.0 and self.alpha == 0.0:
            raise ParameterError("K=0 with alpha=0 degenerates the constrained space")
        if 0.0 < self.K < INF and self.L == INF and self.alpha == 0.0:
            raise ParameterError("K in (0, inf) with L=inf requires alpha != 0")

    @property
    def h_K(self) -> float:
        return h_of(self.K)

    @property
    def h_L(self) -> float:
        return h_of(self.L)

    def in_proven_region(self) -> bool:
        """Whether (K, L) lies inside the proven-convergence parameter set.

        Excluded: K=inf for any L, and L=inf with K in {0, inf}.  Points
        outside are still simulated, just flagged.
        """
        if self.K == INF:
            return False
        if self.L == INF and self.K == 0.0:
            return False
        return True

    def check_measures(self, vol: float, per: float) -> None:
        """Validate the mean-compatibility condition against mesh measures.

        For K finite and L finite positive (and for K=L=0) the combination
        ``alpha*beta*|Omega| + |Gamma|`` must not vanish; otherwise the
        constrained means decouple and the step operator is singular.
        """
        needs = (self.K < INF and 0.0 < self.L < INF) or (self.K == 0.0 and self.L == 0.0)
        if not needs:
            return
        combo = self.alpha * self.beta * vol + per
        scale = abs(self.alpha * self.beta) * vol + per
        if abs(combo) <= _MEASURE_TOL * scale:
            raise ParameterError(
                f"alpha*beta*|Omega| + |Gamma| = {combo:.3e} vanishes; "
                "the coupled means are ill-posed for these parameters"
            )


@dataclass(frozen=True)
class DofLayout:
    """Sizes and slices of the packed (bulk | surface) product vector."""

    n_bulk: int
    n_surf: int

    @property
    def total(self) -> int:
        return self.n_bulk + self.n_surf

    def pack(self, bulk: np.ndarray, surf: np.ndarray) -> np.ndarray:
        return np.concatenate([bulk, surf])

    def split(self, w: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        return w[: self.n_bulk], w[self.n_bulk:]


@dataclass(eq=False)
class State:
    """Nodal fields of one time level: phase fields and chemical potentials."""

    u: np.ndarray
    psi: np.ndarray
    mu: np.ndarray
    theta: np.ndarray
    t: float

    def copy(self) -> "State":
        return State(self.u.copy(), self.psi.copy(), self.mu.copy(),
                     self.theta.copy(), self.t)


def robin_form(m: Mesh, d: DofMap, J: float, lam: float) -> SparseMatrix:
    """Penalty form ``h(J) * int_Gamma (lam*psi - phi)(lam*xi - zeta)``.

    Returns the (N+M) x (N+M) block matrix; exactly zero for J in {0, inf}.
    """
    hj = h_of(J)
    n, ms = d.n_bulk, d.n_surf
    if hj == 0.0:
        return SparseMatrix.zeros(n + ms, n + ms)
    mg = fem.surface_mass(m)
    tr = fem.trace_matrix(d)
    tmt = SparseMatrix.from_scipy(tr.to_scipy().T @ mg.to_scipy() @ tr.to_scipy())
    tm = SparseMatrix.from_scipy(tr.to_scipy().T @ mg.to_scipy())
    mt = SparseMatrix.from_scipy(mg.to_scipy() @ tr.to_scipy())
    return block_assemble(
        [[tmt, tm], [mt, mg]],
        weights=[[hj, -hj * lam], [-hj * lam, hj * lam**2]],
    )


def build_a_form(m: Mesh, d: DofMap, J: float, lam: float,
                 grad_weight_bulk: float, grad_weight_surf: float) -> SparseMatrix:
    """Weighted gradient form plus Robin penalty on the product space."""
    a_bulk = fem.bulk_stiffness(m)
    a_surf = fem.surface_stiffness(m)
    base = block_assemble(
        [[a_bulk, None], [None, a_surf]],
        weights=[[grad_weight_bulk, 0.0], [0.0, grad_weight_surf]],
    )
    rob = robin_form(m, d, J, lam)
    if rob.nnz == 0:
        return base
    return SparseMatrix.from_scipy(base.to_scipy() + rob.to_scipy())


def constraint_prolongation(d: DofMap, lam: float, offset: float = 0.0):
    """Prolongation from master DOFs onto the constrained product space.

    Masters are the interior bulk nodes followed by all surface nodes; the
    full vector is ``P @ masters + c`` with bulk boundary values equal to
    ``lam * psi + offset``.  For ``lam == 0`` the bulk boundary is pinned to
    the offset and the surface stays free.
    """
    n, ms = d.n_bulk, d.n_surf
    interior = np.setdiff1d(np.arange(n), d.surf_to_bulk, assume_unique=False)
    n_int = len(interior)
    n_master = n_int + ms

    rows = [interior]
    cols = [np.arange(n_int)]
    vals = [np.ones(n_int)]
    if lam != 0.0:
        rows.append(d.surf_to_bulk)
        cols.append(n_int + np.arange(ms))
        vals.append(np.full(ms, lam))
    rows.append(n + np.arange(ms))
    cols.append(n_int + np.arange(ms))
    vals.append(np.ones(ms))
    p = SparseMatrix.from_coo(n + ms, n_master,
                              np.concatenate(rows), np.concatenate(cols),
                              np.concatenate(vals))
    c = np.zeros(n + ms)
    if offset != 0.0:
        c[d.surf_to_bulk] = offset
    return p, c


@dataclass(eq=False)
class CoupledOperator:
    """Assembled operators of the coupled system on one mesh.

    ``A_K`` realizes the phase-field form (gradient weights ``eps`` and
    ``delta*kappa``, Robin weight ``h(K)``), ``A_L`` the potential form
    (weights ``m_om``/``m_ga``, Robin weight ``h(L)``).  ``P_K``/``P_L``
    are present iff the corresponding parameter is zero; ``c_K`` carries
    the affine constraint offset and ``affine_load2`` the constant Robin
    load that a nonzero offset induces for finite K.
    """

    mesh: Mesh
    dofmap: DofMap
    params: ModelParams
    layout: DofLayout
    M_bulk: SparseMatrix
    M_surf: SparseMatrix
    A_bulk: SparseMatrix
    A_surf: SparseMatrix
    M_blk: SparseMatrix
    A_K: SparseMatrix
    A_L: SparseMatrix
    P_K: SparseMatrix | None
    c_K: np.ndarray | None
    P_L: SparseMatrix | None
    affine_load2: np.ndarray | None
    vol: float
    per: float

    def __post_init__(self):
        # lumped masses: row sums, reused by every monitor evaluation
        self._lump_bulk = np.asarray(self.M_bulk.to_scipy().sum(axis=1)).ravel()
        self._lump_surf = np.asarray(self.M_surf.to_scipy().sum(axis=1)).ravel()

    # -- monitors ------------------------------------------------------

    def bulk_mass_of(self, u: np.ndarray) -> float:
        return float(self._lump_bulk @ u)

    def surf_mass_of(self, psi: np.ndarray) -> float:
        return float(self._lump_surf @ psi)

    def combined_mass(self, s: State, beta: float | None = None) -> float:
        """Conserved combination ``beta * int u + int psi`` (finite L)."""
        b = self.params.beta if beta is None else beta
        return b * self.bulk_mass_of(s.u) + self.surf_mass_of(s.psi)

    def energy(self, s: State, pot_bulk: Potential, pot_surf: Potential) -> float:
        """Gradient + potential + Robin-penalty free energy of a state.

        Nonlinear integrals use mass lumping (nodal quadrature); the Robin
        term honours the affine offset for finite K.
        """
        p = self.params
        e = 0.5 * p.eps * float(s.u @ spmv(self.A_bulk, s.u))
        e += float(self._lump_bulk @ pot_bulk.f(s.u)) / p.eps
        e += 0.5 * p.delta * p.kappa * float(s.psi @ spmv(self.A_surf, s.psi))
        e += float(self._lump_surf @ pot_surf.f(s.psi)) / p.delta
        if p.h_K != 0.0:
            w = p.alpha * s.psi - s.u[self.dofmap.surf_to_bulk] + p.alpha2
            e += 0.5 * p.h_K * float(w @ spmv(self.M_surf, w))
        return e

    def check_state(self, s: State, tol: float = 1e-12) -> None:
        """Verify the constraint invariants of a state (debug helper)."""
        p = self.params
        sb = self.dofmap.surf_to_bulk
        if p.K == 0.0:
            gap = np.max(np.abs(s.u[sb] - (p.alpha * s.psi + p.alpha2)))
            if gap > tol:
                raise AssertionError(f"K=0 constraint violated by {gap:.3e}")
        if p.L == 0.0:
            gap = np.max(np.abs(s.mu[sb] - p.beta * s.theta))
            if gap > tol:
                raise AssertionError(f"L=0 constraint violated by {gap:.3e}")


def build_coupled_operator(m: Mesh, d: DofMap, p: ModelParams) -> CoupledOperator:
    """Assemble mass and coupled gradient forms, constraints, and loads."""
    layout = DofLayout(d.n_bulk, d.n_surf)
    vol, per = bulk_area(m), surface_length(m)
    p.check_measures(vol, per)

    m_bulk = fem.bulk_mass(m)
    m_surf = fem.surface_mass(m)
    a_bulk = fem.bulk_stiffness(m)
    a_surf = fem.surface_stiffness(m)
    m_blk = block_assemble([[m_bulk, None], [None, m_surf]])

    a_k = build_a_form(m, d, p.K, p.alpha, p.eps, p.delta * p.kappa)
    a_l = build_a_form(m, d, p.L, p.beta, p.m_om, p.m_ga)

    p_k = c_k = p_l = None
    if p.K == 0.0:
        p_k, c_k = constraint_prolongation(d, p.alpha, p.alpha2)
    if p.L == 0.0:
        p_l, _ = constraint_prolongation(d, p.beta, 0.0)

    affine_load2 = None
    if p.h_K != 0.0 and p.alpha2 != 0.0:
        ones_s = np.ones(d.n_surf)
        mg1 = spmv(m_surf, ones_s)
        tr = fem.trace_matrix(d)
        vec = np.concatenate([-(tr.to_scipy().T @ mg1), p.alpha * mg1])
        affine_load2 = p.h_K * p.alpha2 * vec

    return CoupledOperator(
        mesh=m, dofmap=d, params=p, layout=layout,
        M_bulk=m_bulk, M_surf=m_surf, A_bulk=a_bulk, A_surf=a_surf,
        M_blk=m_blk, A_K=a_k, A_L=a_l,
        P_K=p_k, c_K=c_k, P_L=p_l, affine_load2=affine_load2,
        vol=vol, per=per,
    )
