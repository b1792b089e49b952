import math

import numpy as np
import pytest

from bscahn.fem import DofMap
from bscahn.linalg import to_dense
from bscahn.mesh import bulk_area, surface_length, unit_disk_mesh, unit_square_mesh
from bscahn.potentials import by_name, double_well
from bscahn.system import (CoupledOperator, ModelParams, ParameterError, State,
                           build_a_form, build_coupled_operator,
                           constraint_prolongation, h_of, robin_form)

import oracles


def small_setup(K=1.0, L=1.0, **kw):
    m = unit_square_mesh(3)
    d = DofMap.from_mesh(m)
    params = ModelParams(K=K, L=L, **kw)
    return m, d, build_coupled_operator(m, d, params)


class TestHof:
    def test_values(self):
        assert h_of(0.01) == pytest.approx(100.0, rel=1e-15)
        assert h_of(math.inf) == 0.0
        assert h_of(0.0) == 0.0

    def test_exact_zero_at_limits(self):
        assert h_of(math.inf) is not None and h_of(math.inf) == 0.0

    def test_negative_rejected(self):
        with pytest.raises(ParameterError):
            h_of(-1.0)


class TestModelParams:
    def test_rejects_degenerate_constraint(self):
        with pytest.raises(ParameterError):
            ModelParams(K=0.0, L=1.0, alpha=0.0)

    def test_rejects_zero_alpha_for_finite_K_decoupled_L(self):
        with pytest.raises(ParameterError):
            ModelParams(K=1.0, L=math.inf, alpha=0.0)

    def test_rejects_nonpositive_interface_widths(self):
        with pytest.raises(ParameterError):
            ModelParams(K=1.0, L=1.0, eps=0.0)

    def test_proven_region_flags(self):
        assert ModelParams(K=1.0, L=1.0).in_proven_region()
        assert ModelParams(K=0.0, L=0.0).in_proven_region()
        assert ModelParams(K=1.0, L=math.inf).in_proven_region()
        assert not ModelParams(K=math.inf, L=1.0).in_proven_region()
        assert not ModelParams(K=0.0, L=math.inf).in_proven_region()

    def test_measure_check(self):
        p = ModelParams(K=0.0, L=1.0, alpha=1.0, beta=-4.0)
        with pytest.raises(ParameterError):
            p.check_measures(1.0, 4.0)
        p.check_measures(1.0, 5.0)  # fine away from the degenerate combination


class TestRobinForm:
    def test_infinite_parameter_gives_zero_matrix(self):
        m = unit_square_mesh(2)
        d = DofMap.from_mesh(m)
        r = robin_form(m, d, math.inf, 1.0)
        assert r.nnz == 0

    def test_kernel_pair(self):
        m = unit_square_mesh(2)
        d = DofMap.from_mesh(m)
        lam, c = 2.5, 1.7
        r = robin_form(m, d, 0.5, lam).to_scipy()
        w = np.concatenate([np.full(d.n_bulk, lam * c), np.full(d.n_surf, c)])
        assert abs(w @ (r @ w)) <= 1e-12

    def test_quadratic_form_matches_analytic_edge_integrals(self):
        m = unit_square_mesh(2)
        d = DofMap.from_mesh(m)
        rng = np.random.default_rng(31)
        u = rng.normal(size=d.n_bulk)
        psi = rng.normal(size=d.n_surf)
        r = robin_form(m, d, 1.0, 1.0).to_scipy()
        w = np.concatenate([u, psi])
        # oracle: sum over edges of int (psi - u)^2 for linear data:
        # int_0^L (p + (q - p) s/L)^2 ds = L (p^2 + p q + q^2) / 3
        total = 0.0
        for s in range(d.n_surf):
            s1 = (s + 1) % d.n_surf
            p_ = psi[s] - u[d.surf_to_bulk[s]]
            q_ = psi[s1] - u[d.surf_to_bulk[s1]]
            a = m.vertices[d.surf_to_bulk[s]]
            b = m.vertices[d.surf_to_bulk[s1]]
            length = np.linalg.norm(b - a)
            total += length * (p_**2 + p_ * q_ + q_**2) / 3.0
        assert w @ (r @ w) == pytest.approx(total, rel=1e-12)

    def test_against_dense_oracle(self):
        m = unit_disk_mesh(0)
        d = DofMap.from_mesh(m)
        r = to_dense(robin_form(m, d, 0.5, 1.3))
        assert np.max(np.abs(r - oracles.dense_robin(m, d, 0.5, 1.3))) <= 1e-12


class TestAForm:
    def test_constant_pair_in_kernel(self):
        m = unit_square_mesh(3)
        d = DofMap.from_mesh(m)
        lam, c = -1.2, 0.8
        a = build_a_form(m, d, 2.0, lam, 1.5, 0.7).to_scipy()
        w = np.concatenate([np.full(d.n_bulk, lam * c), np.full(d.n_surf, c)])
        assert np.max(np.abs(a @ w)) <= 1e-12

    def test_decoupled_at_infinity(self):
        m = unit_square_mesh(2)
        d = DofMap.from_mesh(m)
        a = to_dense(build_a_form(m, d, math.inf, 1.0, 1.0, 1.0))
        assert np.max(np.abs(a[:d.n_bulk, d.n_bulk:])) == 0.0
        assert np.max(np.abs(a[d.n_bulk:, :d.n_bulk])) == 0.0

    def test_quadratic_form_linear_field(self):
        # pair (x1, trace x1): gradient term w_b * 1 + w_s * 2, Robin term zero
        m = unit_square_mesh(3)
        d = DofMap.from_mesh(m)
        w_b, w_s = 2.0, 3.0
        a = build_a_form(m, d, 1.0, 1.0, w_b, w_s).to_scipy()
        x1 = m.vertices[:, 0]
        w = np.concatenate([x1, x1[d.surf_to_bulk]])
        assert w @ (a @ w) == pytest.approx(w_b * 1.0 + w_s * 2.0, rel=1e-13)

    def test_symmetric_psd(self):
        m = unit_disk_mesh(0)
        d = DofMap.from_mesh(m)
        a = to_dense(build_a_form(m, d, 0.7, 1.4, 1.0, 2.0))
        assert np.max(np.abs(a - a.T)) <= 1e-14
        eigs = np.linalg.eigvalsh(a)
        assert eigs.min() >= -1e-12


class TestConstraintProlongation:
    def test_maps_masters_to_constrained_vector(self):
        m = unit_square_mesh(2)
        d = DofMap.from_mesh(m)
        p, c = constraint_prolongation(d, 1.0, 0.0)
        rng = np.random.default_rng(37)
        masters = rng.normal(size=p.ncols)
        w = p.to_scipy() @ masters + c
        u, psi = w[:d.n_bulk], w[d.n_bulk:]
        assert np.max(np.abs(u[d.surf_to_bulk] - psi)) == 0.0

    def test_affine_offset_reproduced(self):
        m = unit_square_mesh(2)
        d = DofMap.from_mesh(m)
        lam, off = 2.0, 0.3
        p, c = constraint_prolongation(d, lam, off)
        rng = np.random.default_rng(41)
        masters = rng.normal(size=p.ncols)
        w = p.to_scipy() @ masters + c
        u, psi = w[:d.n_bulk], w[d.n_bulk:]
        assert np.max(np.abs(u[d.surf_to_bulk] - (lam * psi + off))) <= 1e-15

    def test_lambda_zero_pins_boundary(self):
        m = unit_square_mesh(2)
        d = DofMap.from_mesh(m)
        p, c = constraint_prolongation(d, 0.0, 0.7)
        masters = np.arange(1.0, p.ncols + 1)
        w = p.to_scipy() @ masters + c
        assert np.allclose(w[:d.n_bulk][d.surf_to_bulk], 0.7, atol=1e-16)

    def test_reduced_quadratic_form_equals_constrained_evaluation(self):
        m = unit_disk_mesh(0)
        d = DofMap.from_mesh(m)
        assert m.n_nodes <= 50
        a = build_a_form(m, d, 0.0, 1.5, 1.0, 1.0)
        p, _ = constraint_prolongation(d, 1.5, 0.0)
        pd = to_dense(p)
        ad = to_dense(a)
        reduced = pd.T @ ad @ pd
        rng = np.random.default_rng(43)
        masters = rng.normal(size=p.ncols)
        w = pd @ masters
        assert masters @ reduced @ masters == pytest.approx(w @ ad @ w, rel=1e-12)

    def test_reduced_mass_spd(self):
        m, d, op = small_setup(K=0.0, L=1.0)
        pd = to_dense(op.P_K)
        md = to_dense(op.M_blk)
        np.linalg.cholesky(pd.T @ md @ pd)  # raises if not SPD


class TestMonitors:
    def test_combined_mass_constants(self):
        m, d, op = small_setup(K=1.0, L=1.0)
        s = State(u=np.ones(d.n_bulk), psi=np.ones(d.n_surf),
                  mu=np.zeros(d.n_bulk), theta=np.zeros(d.n_surf), t=0.0)
        assert op.combined_mass(s, beta=1.0) == pytest.approx(5.0, abs=1e-12)
        assert op.combined_mass(s, beta=0.0) == pytest.approx(4.0, abs=1e-12)

    def test_combined_mass_linear_field(self):
        m, d, op = small_setup()
        s = State(u=m.vertices[:, 0], psi=np.zeros(d.n_surf),
                  mu=np.zeros(d.n_bulk), theta=np.zeros(d.n_surf), t=0.0)
        assert op.combined_mass(s, beta=1.0) == pytest.approx(0.5, abs=1e-14)

    def test_energy_pure_phase_vanishes(self):
        m, d, op = small_setup(K=1.0, L=1.0, alpha=1.0)
        pot = double_well(0.25)
        s = State(u=np.ones(d.n_bulk), psi=np.ones(d.n_surf),
                  mu=np.zeros(d.n_bulk), theta=np.zeros(d.n_surf), t=0.0)
        assert abs(op.energy(s, pot, pot)) <= 1e-14

    def test_energy_constant_zero_state(self):
        m, d, op = small_setup(K=math.inf, L=1.0)
        pot = double_well(0.25)
        s = State(u=np.zeros(d.n_bulk), psi=np.zeros(d.n_surf),
                  mu=np.zeros(d.n_bulk), theta=np.zeros(d.n_surf), t=0.0)
        # potential value 1/4 over unit area plus 1/4 over perimeter 4
        assert op.energy(s, pot, pot) == pytest.approx(1.25, abs=1e-13)

    def test_droplet_initial_energy_regression(self):
        from bscahn.experiments import droplet_initial_data

        m = unit_square_mesh(32)
        d = DofMap.from_mesh(m)
        op = build_coupled_operator(
            m, d, ModelParams(K=1.0, L=1.0, eps=0.02, delta=0.02))
        pot = by_name("double_well_1_8")
        u0, psi0 = droplet_initial_data(m, d, eps=0.02)
        s = State(u=u0, psi=psi0, mu=np.zeros(d.n_bulk),
                  theta=np.zeros(d.n_surf), t=0.0)
        e = op.energy(s, pot, pot)
        assert e > 0.0
        assert np.isfinite(e)
        # regression pin (computed by this implementation)
        assert e == pytest.approx(2.0423139016619705, rel=1e-10)


class TestConstrainedReductionOracle:
    @pytest.mark.parametrize("make", [lambda: unit_square_mesh(3),
                                      lambda: unit_disk_mesh(0)])
    def test_reductions_match_dense(self, make):
        m = make()
        d = DofMap.from_mesh(m)
        op = build_coupled_operator(m, d, ModelParams(K=0.0, L=0.0, alpha=1.2,
                                                      beta=0.8))
        for mat, proj in ((op.A_K, op.P_K), (op.A_L, op.P_L)):
            pd = to_dense(proj)
            dense_reduced = pd.T @ to_dense(mat) @ pd
            sparse_reduced = (proj.to_scipy().T @ mat.to_scipy()
                              @ proj.to_scipy()).toarray()
            assert np.max(np.abs(dense_reduced - sparse_reduced)) <= 1e-12


class TestStateChecks:
    def test_check_state_flags_violation(self):
        m, d, op = small_setup(K=0.0, L=1.0)
        bad = State(u=np.ones(d.n_bulk), psi=np.zeros(d.n_surf),
                    mu=np.zeros(d.n_bulk), theta=np.zeros(d.n_surf), t=0.0)
        with pytest.raises(AssertionError):
            op.check_state(bad)
