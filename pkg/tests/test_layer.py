"""Half-space layer: transport operator, albedo data, reflection and boundary identities."""
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from frackix.errors import (ArgumentError, ConfigurationError, DegeneracyError, DomainError,
                            GeometryError, NumericalError, ValidationError)
from frackix.kinetic import ModelParams, TurnKernel
from frackix.layer import (HalfSpaceGrid, OrdinateSet, boundary_flux_w1,
                           boundary_operator_H, build_transport_operator, caputo_matrices,
                           curved_conservation_check, extract_albedo, flux_moment,
                           layer_constants, matching_residual, prompt_matrix, prompt_P,
                           recover_a0, reflection_R, solve_halfspace, strip_layer_mass,
                           theta_nullspace)


@pytest.fixture(scope="module")
def disc_setup():
    params = ModelParams(alpha=1.5, n=2)
    ords = OrdinateSet.double_gauss(16)
    op = build_transport_operator(params, ords, HalfSpaceGrid.graded(40.0),
                                  TurnKernel.vonmises(1.0))
    return params, ords, op, extract_albedo(op)


class TestGridAndOrdinates:
    def test_double_gauss(self):
        o = OrdinateSet.double_gauss(8)
        assert o.weights.sum() == pytest.approx(2 * math.pi, rel=1e-14)
        assert o.incoming.size == o.outgoing.size == 4
        np.testing.assert_array_equal(o.mirror_index()[o.mirror_index()], np.arange(8))
        with pytest.raises(ConfigurationError):
            OrdinateSet.double_gauss(7)

    def test_grazing_rejected(self):
        with pytest.raises(GeometryError):
            OrdinateSet(np.array([[1.0, 0.0], [0.0, 1.0]]), np.ones(2))

    def test_graded_grid(self):
        g = HalfSpaceGrid.graded(10.0)
        dr = np.diff(g.r)
        assert g.r[0] == 0 and g.r_max == 10.0
        assert dr[0] == pytest.approx(0.01)
        assert dr.max() <= 0.2 * 1.5
        with pytest.raises(ConfigurationError):
            HalfSpaceGrid(np.array([0.0, 1.0, 0.5]))


class TestCaputo:
    def test_beta_one_is_derivative(self):
        r = np.linspace(0, 1, 11) ** 2
        DL, DR = caputo_matrices(r, 1.0)
        f = 3 * r + 1
        np.testing.assert_allclose(DL[1:] @ f, 3.0, rtol=1e-12)
        np.testing.assert_allclose(DR[:-1] @ f, -3.0, rtol=1e-12)

    @given(st.floats(0.05, 0.95))
    def test_constants_and_linear_oracle(self, beta):
        r = np.linspace(0.0, 2.0, 41)
        DL, DR = caputo_matrices(r, beta)
        np.testing.assert_allclose(DL @ np.ones_like(r), 0.0, atol=1e-12)
        np.testing.assert_allclose(DR @ np.ones_like(r), 0.0, atol=1e-12)
        # the L1 scheme is exact for linear functions
        exact = r ** (1 - beta) / math.gamma(2 - beta)
        np.testing.assert_allclose(DL @ r, exact, atol=1e-12)

    def test_domain(self):
        with pytest.raises(DomainError):
            caputo_matrices(np.linspace(0, 1, 5), 0.0)


class TestTransportOperator:
    @pytest.mark.parametrize("alpha", [1.2, 1.5, 1.8])
    def test_constants_are_solutions(self, alpha):
        op = build_transport_operator(ModelParams(alpha=alpha, n=2), OrdinateSet.double_gauss(8),
                                      HalfSpaceGrid.graded(20.0))
        f = np.ones((op.grid.size, 8))
        assert np.abs(op.apply(f)).max() <= 1e-10
        sol = solve_halfspace(op, np.full(4, 2.5))
        assert sol.far_field == pytest.approx(2.5, abs=1e-12)
        assert np.abs(sol.remainder).max() <= 1e-10
        assert np.abs(flux_moment(sol)).max() <= 1e-12

    def test_isotropic_profiles_do_not_scatter(self):
        op = build_transport_operator(ModelParams(alpha=1.5, n=2), OrdinateSet.double_gauss(8),
                                      HalfSpaceGrid.graded(20.0), include_fractional=False)
        prof = np.exp(-op.grid.r)[:, None] * np.ones(8)
        resid = op.apply(prof)
        # only the streaming term remains: c0 mu times the cell slope
        slope = np.diff(np.exp(-op.grid.r)) / np.diff(op.grid.r)
        np.testing.assert_allclose(resid, slope[:, None] * op.ordinates.mu[None, :], atol=1e-12)

    def test_flux_moment_constant(self, disc_setup):
        _, ords, op, _ = disc_setup
        sol = solve_halfspace(op, np.cos(ords.angles[ords.incoming]) ** 3 + 0.2)
        fm = flux_moment(sol)
        assert fm.max() - fm.min() <= 1e-8

    def test_alpha_two_requires_coefficient(self):
        with pytest.raises(DomainError):
            build_transport_operator(ModelParams(alpha=2.0, n=2))

    def test_alpha_continuity_with_shared_coefficient(self):
        g = HalfSpaceGrid.graded(20.0)
        o = OrdinateSet.double_gauss(8)
        a = build_transport_operator(ModelParams(alpha=1.999, n=2), o, g, frac_coef=1.0).system
        b = build_transport_operator(ModelParams(alpha=2.0, n=2), o, g, frac_coef=1.0).system
        assert abs(a - b).max() <= 1e-2 * abs(b).max()

    def test_bad_inflow(self, disc_setup):
        with pytest.raises(ArgumentError):
            solve_halfspace(disc_setup[2], np.ones(3))


class TestAlbedo:
    def test_normalizations(self, disc_setup):
        _, ords, _, al = disc_setup
        assert al.W @ al.w_in == pytest.approx(1.0, abs=1e-8)
        np.testing.assert_allclose(al.w_in @ al.G0, 0.0, atol=1e-8)

    def test_mirror_symmetry_of_W(self, disc_setup):
        _, ords, _, al = disc_setup
        ang = ords.angles[ords.incoming]
        order = np.argsort(ang)
        np.testing.assert_allclose(al.W[order], al.W[order][::-1], atol=1e-10)

    def test_reflection_properties(self, disc_setup):
        _, ords, _, al = disc_setup
        inc, outg = ords.incoming, ords.outgoing
        np.testing.assert_allclose(reflection_R(al, np.ones(inc.size)), 1.0, atol=1e-8)
        rng = np.random.default_rng(0)
        for _ in range(100):
            l = rng.random(inc.size)
            lhs = (ords.mu[inc] * al.w_in) @ l
            rhs = (np.abs(ords.mu[outg]) * al.w_out) @ reflection_R(al, l)
            assert lhs == pytest.approx(rhs, abs=1e-8)
        # discrete adjoint of R maps |mu| on outgoing to mu on incoming
        adj = (al.R.T @ (np.abs(ords.mu[outg]) * al.w_out)) / al.w_in
        np.testing.assert_allclose(adj, ords.mu[inc], atol=1e-8)


class TestPromptReflection:
    @pytest.mark.parametrize("kernel", ["specular", "diffuse"])
    def test_conservation(self, kernel):
        ords = OrdinateSet.double_gauss(12)
        inc, outg = ords.incoming, ords.outgoing
        rng = np.random.default_rng(3)
        for _ in range(100):
            f = rng.random(outg.size)
            pf = prompt_P(ords, f, kernel)
            flux_in = (ords.mu[inc] * ords.weights[inc]) @ pf
            flux_out = (np.abs(ords.mu[outg]) * ords.weights[outg]) @ f
            assert abs(flux_in - flux_out) <= 1e-12

    def test_specular_is_mirror(self):
        ords = OrdinateSet.double_gauss(10)
        f = np.zeros(ords.size)
        f[ords.outgoing] = np.arange(ords.outgoing.size) + 1.0
        pf = prompt_P(ords, f[ords.outgoing])
        mirror = ords.mirror_index()
        np.testing.assert_allclose(pf, f[mirror[ords.incoming]], atol=1e-14)

    def test_nonconserving_kernel_rejected(self):
        ords = OrdinateSet.double_gauss(6)
        with pytest.raises(ValidationError):
            prompt_matrix(ords, np.full((3, 3), 5.0))


class TestTheta:
    @pytest.mark.parametrize("kernel", ["specular", "diffuse"])
    def test_null_vector(self, disc_setup, kernel):
        _, _, _, al = disc_setup
        th = theta_nullspace(al, kernel)
        assert th.residual <= 1e-10
        assert th.adjoint_residual <= 1e-10
        assert np.all(th.theta > 0)
        assert np.sum(al.W * th.theta * al.w_in) == pytest.approx(1.0, abs=1e-10)

    def test_a0_recovery(self, disc_setup):
        _, _, _, al = disc_setup
        th = theta_nullspace(al, "specular").theta
        a0, l0 = recover_a0(3.7, th, al)
        assert a0 == pytest.approx(3.7, abs=1e-10)
        assert np.sum(al.W * l0 * al.w_in) == pytest.approx(0.0, abs=1e-8)
        a0, l0 = recover_a0(0.0, th, al)
        assert a0 == 0.0 and not np.any(l0)

    def test_degenerate_reflection(self, disc_setup):
        _, _, _, al = disc_setup
        with pytest.raises(DegeneracyError):
            theta_nullspace(al, np.zeros((al.W.size, al.W.size)))


class TestBoundaryOperator:
    def test_no_bias_no_advection(self):
        h = boundary_operator_H(ModelParams(alpha=1.5, n=2), "specular",
                                OrdinateSet.double_gauss(16), [1.0, 0.0])
        assert h.advective == 0.0
        assert h.fractional < 0

    def test_specular_closed_forms(self):
        p = ModelParams(alpha=1.5, tau1=1.0, n=2)
        h = boundary_operator_H(p, "specular", OrdinateSet.double_gauss(32), [0.7, 0.2],
                                C_alpha=2.0, chi=0.5)
        assert h.advective == pytest.approx(math.pi * 0.5 * 0.7, rel=1e-10)
        assert h.fractional == pytest.approx(-2.0 * math.pi, rel=1e-10)

    def test_sign_against_fine_quadrature(self):
        p = ModelParams(alpha=1.5, tau1=1.0, n=2)
        coarse = boundary_operator_H(p, "diffuse", OrdinateSet.double_gauss(8), [1.0, 0.0])
        fine = boundary_operator_H(p, "diffuse", OrdinateSet.double_gauss(80), [1.0, 0.0])
        assert np.sign(coarse.advective) == np.sign(fine.advective)


class TestBoundaryFlux:
    def test_constant_profile(self):
        r = HalfSpaceGrid.graded(10.0).r
        np.testing.assert_allclose(boundary_flux_w1(np.full(r.size, 2.0), r,
                                                    ModelParams(alpha=1.5)), 0.0, atol=1e-12)

    @given(st.floats(-3, 3), st.floats(-3, 3))
    def test_linearity(self, a, b):
        r = np.linspace(0, 5, 60)
        p = ModelParams(alpha=1.4)
        u, v = np.exp(-r), np.cos(r)
        lhs = boundary_flux_w1(a * u + b * v, r, p)
        rhs = a * boundary_flux_w1(u, r, p) + b * boundary_flux_w1(v, r, p)
        np.testing.assert_allclose(lhs, rhs, atol=1e-12 * (1 + abs(a) + abs(b)) * 10)

    def test_refinement(self):
        p = ModelParams(alpha=1.5)
        coarse = np.linspace(0, 8, 401)
        fine = np.linspace(0, 8, 4001)
        wc = boundary_flux_w1(np.exp(-coarse), coarse, p)
        wf = boundary_flux_w1(np.exp(-fine), fine, p)[::10]
        assert np.abs(wc - wf)[5:].max() <= 1e-2

    def test_nu1_one(self):
        with pytest.raises(NumericalError):
            layer_constants(ModelParams(alpha=1.5), nu1=1.0)


class TestMatchingAndCurved:
    def test_matching_residual(self):
        t = np.linspace(0, 1, 11)
        assert matching_residual(t, 1 + 0 * t, 0.3 * t) == pytest.approx(0.3)
        with pytest.raises(ArgumentError):
            matching_residual([0, 1], [1, 1], [0, 0])

    def test_strip_mass(self):
        x = (np.arange(10) + 0.5) / 10
        assert strip_layer_mass(np.ones(10), x, 0.2, 1.0) == pytest.approx(0.4)

    def test_radial_field(self):
        w = lambda x: x / np.linalg.norm(x, axis=1, keepdims=True)
        assert curved_conservation_check(w, 0.2, 1.0).residual <= 1e-8

    def test_polynomial_field_and_refinement(self):
        w = lambda x: np.column_stack([x[:, 0] ** 3 - x[:, 1], x[:, 1] * x[:, 0] ** 2 + 1])
        assert curved_conservation_check(w, 0.3, 1.0, rule="gauss").residual <= 1e-8
        res = [curved_conservation_check(w, 0.3, 1.0, n_r=n, n_theta=64,
                                         rule="midpoint").residual for n in (8, 16, 32)]
        assert np.all(np.log2(np.array(res[:-1]) / np.array(res[1:])) >= 1.0)

    def test_strip_too_wide(self):
        with pytest.raises(GeometryError):
            curved_conservation_check(lambda x: x, 1.0, 1.0)
