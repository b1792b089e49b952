"""Linearly implicit multistep time integration of the coupled system.

The stiff linear part is treated implicitly, the potential derivatives
enter through extrapolated past values, so every step is a single linear
solve against a fixed, once-factored operator.  Orders 1 to 5 are
supported; order 6 is rejected because the multiplier-based stability
range ends at 5.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from .linalg import Factorization, SparseMatrix, factorize, spmv
from .potentials import Potential
from .system import CoupledOperator, State

MAX_ORDER = 5


@dataclass(frozen=True)
class BdfScheme:
    """Backward-difference derivative weights and extrapolation weights.

    ``delta`` has ``q+1`` entries (newest first); the discrete derivative
    at step ``n`` is ``(1/tau) * sum_j delta[j] * y[n-j]``.  ``gamma`` has
    ``q`` entries; the predictor is ``sum_j gamma[j] * y[n-1-j]``.
    """

    q: int
    delta: np.ndarray
    gamma: np.ndarray


def bdf_coefficients(q: int) -> BdfScheme:
    """Expand the generating polynomials of the order-q scheme exactly."""
    if not 1 <= q <= MAX_ORDER:
        raise ValueError(f"order must be in 1..{MAX_ORDER}, got {q}")
    delta = [Fraction(0)] * (q + 1)
    for ell in range(1, q + 1):
        for j in range(ell + 1):
            delta[j] += Fraction(1, ell) * math.comb(ell, j) * (-1) ** j
    gamma = [Fraction((-1) ** j * math.comb(q, j + 1)) for j in range(q)]
    return BdfScheme(q=q,
                     delta=np.array([float(d) for d in delta]),
                     gamma=np.array([float(g) for g in gamma]))


class HistoryError(RuntimeError):
    """History ring is incomplete or inconsistently spaced."""


class History:
    """Ring of the q most recent states with uniform spacing ``tau``."""

    def __init__(self, q: int, tau: float):
        if tau <= 0:
            raise ValueError("tau must be positive")
        self.q = q
        self.tau = tau
        self._states: list[State] = []

    def push(self, s: State) -> None:
        if self._states:
            gap = s.t - self._states[-1].t
            if abs(gap - self.tau) > 1e-9 * max(1.0, abs(s.t)):
                raise HistoryError(f"non-uniform step: gap {gap} vs tau {self.tau}")
        self._states.append(s)
        if len(self._states) > self.q:
            self._states.pop(0)

    @property
    def full(self) -> bool:
        return len(self._states) == self.q

    @property
    def latest(self) -> State:
        if not self._states:
            raise HistoryError("history is empty")
        return self._states[-1]

    def state(self, j: int) -> State:
        """State ``j`` steps behind the latest (j=0 is the latest)."""
        return self._states[-1 - j]

    def __len__(self) -> int:
        return len(self._states)

    def __iter__(self):
        return iter(self._states)


def extrapolate(h: History, scheme: BdfScheme) -> tuple[np.ndarray, np.ndarray]:
    """Order-q predictor of (u, psi) at the next time from the history ring."""
    if len(h) < scheme.q:
        raise HistoryError(f"need {scheme.q} states, have {len(h)}")
    u = scheme.gamma[0] * h.state(0).u
    psi = scheme.gamma[0] * h.state(0).psi
    for j in range(1, scheme.q):
        u = u + scheme.gamma[j] * h.state(j).u
        psi = psi + scheme.gamma[j] * h.state(j).psi
    return u, psi


# ---------------------------------------------------------------------------
# step operator


def _projected(p_left, a, p_right):
    """``P_left^T A P_right`` with ``None`` meaning identity."""
    s = a.to_scipy()
    if p_left is not None:
        s = p_left.to_scipy().T @ s
    if p_right is not None:
        s = s @ p_right.to_scipy()
    return s


def build_step_operator(op: CoupledOperator, scheme: BdfScheme, tau: float) -> Factorization:
    """Assemble and factorize the per-step saddle matrix.

    The matrix ``[[(delta_0/tau) M, A_L], [-A_K, M]]`` is reduced through
    the constraint prolongations (phase-field blocks and the second
    equation through ``P_K``; potential blocks and the first equation
    through ``P_L``) and LU-factored once per (mesh, tau, q, params).
    """
    if tau <= 0:
        raise ValueError("tau must be positive")
    op.params.check_measures(op.vol, op.per)
    import scipy.sparse as sp

    d0 = scheme.delta[0]
    b11 = (d0 / tau) * _projected(op.P_L, op.M_blk, op.P_K)
    b12 = _projected(op.P_L, op.A_L, op.P_L)
    b21 = -_projected(op.P_K, op.A_K, op.P_K)
    b22 = _projected(op.P_K, op.M_blk, op.P_L)
    s = sp.bmat([[b11, b12], [b21, b22]], format="csr")
    return factorize(SparseMatrix.from_scipy(s))


def _expand_state_vectors(op: CoupledOperator, x: np.ndarray, y: np.ndarray, t: float) -> State:
    w = spmv(op.P_K, x) if op.P_K is not None else x
    if op.c_K is not None:
        w = w + op.c_K
    v = spmv(op.P_L, y) if op.P_L is not None else y
    u, psi = op.layout.split(w)
    mu, theta = op.layout.split(v)
    return State(u=u, psi=psi, mu=mu, theta=theta, t=t)


def step(F: Factorization, op: CoupledOperator, scheme: BdfScheme, tau: float,
         h: History, pot_bulk: Potential, pot_surf: Potential,
         forcing: tuple[np.ndarray, np.ndarray] | None = None) -> State:
    """Advance the coupled system by one linear solve.

    ``forcing`` holds the two weak-form load vectors at the new time, each
    over the packed product space (manufactured-solution inhomogeneities);
    omit it for the homogeneous system.
    """
    if len(h) < scheme.q:
        raise HistoryError(f"need {scheme.q} states, have {len(h)}")
    p = op.params
    t_new = h.latest.t + tau

    # history part of the discrete time derivative
    hist = np.zeros(op.layout.total)
    for j in range(1, scheme.q + 1):
        s = h.state(j - 1)  # y^{n-j}
        hist += scheme.delta[j] * op.layout.pack(s.u, s.psi)
    r1 = -spmv(op.M_blk, hist) / tau
    if op.c_K is not None:
        r1 -= (scheme.delta[0] / tau) * spmv(op.M_blk, op.c_K)

    # extrapolated potential derivatives, nodally interpolated
    u_tilde, psi_tilde = extrapolate(h, scheme)
    g = op.layout.pack(pot_bulk.df(u_tilde) / p.eps, pot_surf.df(psi_tilde) / p.delta)
    r2 = spmv(op.M_blk, g)
    if op.affine_load2 is not None:
        r2 += op.affine_load2
    if op.c_K is not None:
        r2 += spmv(op.A_K, op.c_K)
    if forcing is not None:
        r1 = r1 + forcing[0]
        r2 = r2 + forcing[1]

    if op.P_L is not None:
        r1 = op.P_L.to_scipy().T @ r1
    if op.P_K is not None:
        r2 = op.P_K.to_scipy().T @ r2

    sol = F.solve(np.concatenate([r1, r2]))
    n_k = op.P_K.ncols if op.P_K is not None else op.layout.total
    return _expand_state_vectors(op, sol[:n_k], sol[n_k:], t_new)


# ---------------------------------------------------------------------------
# starting values


def initial_potentials(op: CoupledOperator, u0: np.ndarray, psi0: np.ndarray,
                       pot_bulk: Potential, pot_surf: Potential,
                       load2: np.ndarray | None = None) -> tuple[np.ndarray, np.ndarray]:
    """Consistent chemical potentials for given initial phase fields.

    Solves the constitutive (second) equation at t=0, posed and tested on
    the potential space, which is well-posed for every K, L combination.
    The result only seeds monitors; the stepping never consumes it.
    """
    p = op.params
    w = op.layout.pack(u0, psi0)
    g = op.layout.pack(pot_bulk.df(u0) / p.eps, pot_surf.df(psi0) / p.delta)
    rhs = spmv(op.A_K, w) + spmv(op.M_blk, g)
    if op.affine_load2 is not None:
        rhs += op.affine_load2
    if load2 is not None:
        rhs += load2
    if op.P_L is not None:
        plt = op.P_L.to_scipy().T
        reduced = factorize(SparseMatrix.from_scipy(plt @ op.M_blk.to_scipy() @ op.P_L.to_scipy()))
        y = reduced.solve(plt @ rhs)
        v = spmv(op.P_L, y)
    else:
        v = factorize(op.M_blk).solve(rhs)
    return op.layout.split(v)


def bootstrap(op: CoupledOperator, scheme: BdfScheme, tau: float, mode: str, *,
              exact=None, initial: tuple[np.ndarray, np.ndarray] | None = None,
              pot_bulk: Potential | None = None, pot_surf: Potential | None = None,
              forcing=None) -> History:
    """Produce the q starting values.

    ``mode="exact"`` interpolates an exact-solution object at the first q
    grid times; ``mode="bdf1_cascade"`` starts from nodal initial data and
    fills levels 1..q-1 with first-order steps of the same step size.
    ``forcing`` is a callable ``t -> (load1, load2)`` over the packed
    space, or ``None``.
    """
    h = History(scheme.q, tau)
    if mode == "exact":
        if exact is None:
            raise ValueError("exact mode requires an exact-solution object")
        pts_b = op.mesh.vertices
        pts_s = op.mesh.vertices[op.dofmap.surf_to_bulk]
        for i in range(scheme.q):
            t = i * tau
            h.push(State(u=exact.u(t, pts_b), psi=exact.psi(t, pts_s),
                         mu=exact.mu(t, pts_b), theta=exact.theta(t, pts_s), t=t))
        return h
    if mode != "bdf1_cascade":
        raise ValueError(f"unknown bootstrap mode {mode!r}")
    if initial is None or pot_bulk is None or pot_surf is None:
        raise ValueError("bdf1_cascade requires initial data and potentials")

    u0, psi0 = initial
    load2_0 = forcing(0.0)[1] if forcing is not None else None
    mu0, theta0 = initial_potentials(op, u0, psi0, pot_bulk, pot_surf, load2_0)
    h.push(State(u=np.asarray(u0, dtype=float), psi=np.asarray(psi0, dtype=float),
                 mu=mu0, theta=theta0, t=0.0))
    if scheme.q == 1:
        return h

    scheme1 = bdf_coefficients(1)
    f1 = build_step_operator(op, scheme1, tau)
    cascade = History(1, tau)
    cascade.push(h.latest)
    for i in range(1, scheme.q):
        t = i * tau
        loads = forcing(t) if forcing is not None else None
        s = step(f1, op, scheme1, tau, cascade, pot_bulk, pot_surf, loads)
        cascade.push(s)
        h.push(s)
    return h


# ---------------------------------------------------------------------------
# time loop


@dataclass(frozen=True)
class MonitorRow:
    step: int
    t: float
    mass_total: float
    mass_bulk: float
    mass_surf: float
    energy: float
    u_min: float
    u_max: float


@dataclass
class RunResult:
    monitors: list[MonitorRow]
    snapshots: dict[float, State]
    final: State
    history: History


def _monitor(op: CoupledOperator, s: State, pot_bulk, pot_surf, step_index: int) -> MonitorRow:
    mb = op.bulk_mass_of(s.u)
    ms = op.surf_mass_of(s.psi)
    return MonitorRow(
        step=step_index, t=s.t,
        mass_total=op.params.beta * mb + ms,
        mass_bulk=mb, mass_surf=ms,
        energy=op.energy(s, pot_bulk, pot_surf),
        u_min=float(s.u.min()), u_max=float(s.u.max()),
    )


def run(op: CoupledOperator, scheme: BdfScheme, tau: float, n_steps: int,
        history: History, pot_bulk: Potential, pot_surf: Potential, *,
        forcing=None, snapshot_times=(), on_step=None,
        step_operator: Factorization | None = None) -> RunResult:
    """Iterate the scheme, emitting one monitor row per time level.

    ``forcing`` is a callable ``t -> (load1, load2)`` or ``None``;
    ``on_step(state)`` is invoked for every newly computed state.
    Snapshots are recorded at the requested times (nearest step within
    ``tau/2``), including times covered by the starting values.
    """
    if not history.full:
        raise HistoryError("history must hold q starting values")
    F = step_operator if step_operator is not None else build_step_operator(op, scheme, tau)

    monitors: list[MonitorRow] = []
    snapshots: dict[float, State] = {}
    wanted = sorted(float(t) for t in snapshot_times)

    def consider_snapshot(s: State):
        for tw in wanted:
            if tw not in snapshots and abs(s.t - tw) <= 0.5 * tau:
                snapshots[tw] = s.copy()

    for s in history:
        monitors.append(_monitor(op, s, pot_bulk, pot_surf, round(s.t / tau)))
        consider_snapshot(s)

    state = history.latest
    for _ in range(n_steps):
        t_new = state.t + tau
        loads = forcing(t_new) if forcing is not None else None
        state = step(F, op, scheme, tau, history, pot_bulk, pot_surf, loads)
        history.push(state)
        monitors.append(_monitor(op, state, pot_bulk, pot_surf, round(state.t / tau)))
        consider_snapshot(state)
        if on_step is not None:
            on_step(state)
    return RunResult(monitors=monitors, snapshots=snapshots, final=state, history=history)
