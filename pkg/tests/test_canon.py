from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from qref.canon import (
    LinearCoordinateMap,
    LinearPhaseSpaceForm,
    cm_relative_map,
    commutator,
    conjugate_momenta,
    conjugate_positions,
    exact_transform_report,
    form_in_frame,
    gamma_mass,
    physical_momentum_matrix,
    relative_momentum_forms,
    relative_q_frame,
    relative_x_frame,
    transform_state,
)
from qref.errors import ContractError, DomainError, UnsupportedCaseError
from qref.packets import GaussianPacket, MassConfig, SuperposedState, normalize

masses_st = st.tuples(*[st.floats(0.05, 50.0)] * 3).map(MassConfig)


class TestCommutator:
    def test_canonical_pair(self):
        assert commutator(LinearPhaseSpaceForm.x(0, 2), LinearPhaseSpaceForm.p(0, 2)) == 1j
        assert commutator(LinearPhaseSpaceForm.x(0, 2), LinearPhaseSpaceForm.p(1, 2)) == 0

    def test_antisymmetric(self):
        f = LinearPhaseSpaceForm([1.0, 2.0], [0.5, -1.0])
        g = LinearPhaseSpaceForm([-3.0, 0.1], [2.0, 4.0])
        assert commutator(f, g) == -commutator(g, f)

    def test_length_mismatch(self):
        with pytest.raises(ContractError):
            commutator(LinearPhaseSpaceForm.x(0, 2), LinearPhaseSpaceForm.p(0, 3))


class TestCoordinateMaps:
    def test_cm_relative_rows(self):
        A = cm_relative_map(MassConfig((1.0, 2.0, 3.0))).position_matrix
        np.testing.assert_allclose(A, [[1 / 6, 2 / 6, 3 / 6], [-1, 1, 0], [-1, 0, 1]])
        assert np.linalg.det(A) == pytest.approx(1.0)

    @given(masses_st)
    def test_conjugate_momenta_biorthogonal(self, m):
        cmap = conjugate_momenta(cm_relative_map(m))
        np.testing.assert_allclose(cmap.position_matrix @ cmap.momentum_matrix.T, np.eye(3), atol=1e-12)
        assert cmap.is_symplectic()

    @given(masses_st)
    def test_physical_momenta_not_conjugate(self, m):
        # p_r2 fails to commute with x_r3 whenever the observer mass is finite
        x_r3 = LinearPhaseSpaceForm.position(cm_relative_map(m).position_matrix[2])
        p_r2 = relative_momentum_forms(m)[1]
        np.testing.assert_allclose(commutator(x_r3, p_r2), 1j * m.mu12 / m[0], rtol=1e-12)

    def test_q_r2_for_masses_123(self):
        m = MassConfig((1.0, 2.0, 3.0))
        assert gamma_mass(m) == pytest.approx(2.0)
        q = relative_q_frame(m)
        np.testing.assert_allclose(q.position_matrix[1], [-0.5, 2.0, -1.5], atol=1e-14)
        p_r2 = relative_momentum_forms(m)[1]
        q_r2 = LinearPhaseSpaceForm.position(q.position_matrix[1])
        assert commutator(q_r2, p_r2) == pytest.approx(1j, abs=1e-14)

    @given(masses_st)
    def test_q_set_canonical(self, m):
        q = conjugate_positions(physical_momentum_matrix(m))
        comm = np.array([[commutator(a, b) for b in q.momentum_forms()] for a in q.position_forms()])
        np.testing.assert_allclose(comm, 1j * np.eye(3), atol=1e-12)

    def test_singular_rejected(self):
        with pytest.raises(DomainError):
            LinearCoordinateMap(np.array([[1.0, 1.0], [2.0, 2.0]]))

    def test_false_canonical_flag_rejected(self):
        with pytest.raises((DomainError, ContractError)):
            LinearCoordinateMap(np.eye(2), 2 * np.eye(2), canonical=True)

    def test_form_in_frame_round_trip(self):
        m = MassConfig((1.0, 4.0))
        frame = relative_x_frame(m)
        p_r = relative_momentum_forms(m)[1]
        _, p_c = form_in_frame(p_r, frame)
        # the physical relative momentum of two bodies is conjugate to x_r
        np.testing.assert_allclose(p_c, [0.0, 1.0], atol=1e-15)


def lab_amplitude(g1, g2, masses, x_cm, x_r):
    Ai = cm_relative_map(masses).inverse_position
    x1 = Ai[0, 0] * x_cm + Ai[0, 1] * x_r
    x2 = Ai[1, 0] * x_cm + Ai[1, 1] * x_r
    return (g1(x1) * g2(x2)).real


class TestExactTransform:
    def test_equal_masses_equal_widths_product(self):
        r = exact_transform_report(GaussianPacket(-1, 0.3), GaussianPacket(1, 0.3), MassConfig((2.0, 2.0)))
        assert r.gamma_corr == 0.0
        assert r.is_product

    def test_reference_numbers(self):
        r = exact_transform_report(GaussianPacket(0, 1.0), GaussianPacket(0, 1.0), MassConfig((1.0, 2.0)))
        assert r.gamma_corr == pytest.approx(1 / 3, abs=1e-15)
        assert r.delta_c_sq == pytest.approx(0.5, abs=1e-15)
        assert r.delta_r_sq == pytest.approx(1.8, abs=1e-15)

    @pytest.mark.parametrize("m1,m2,s1,s2,a,b", [(1, 2, 1, 1, -0.3, 0.8), (3, 0.5, 0.2, 2.0, 1.0, -1.0), (1, 1, 0.1, 0.4, 0, 0)])
    def test_closed_form_matches_lab_product(self, m1, m2, s1, s2, a, b):
        masses = MassConfig((m1, m2))
        g1, g2 = GaussianPacket(a, s1), GaussianPacket(b, s2)
        r = exact_transform_report(g1, g2, masses)
        u = np.linspace(r.alpha - 4, r.alpha + 4, 512)
        v = np.linspace(r.beta - 6, r.beta + 6, 64)
        U, V = np.meshgrid(u, v, indexing="ij")
        np.testing.assert_allclose(r.amplitude(U, V), lab_amplitude(g1, g2, masses, U, V), atol=1e-12)

    def test_exact_mode_flags_correlation(self):
        state = SuperposedState.from_terms([1.0, 2.0], [(1.0, [GaussianPacket(0, 1.0), GaussianPacket(1, 1.0)])])
        res = transform_state(state, cm_relative_map(state.masses), mode="exact")
        assert res.correlated and len(res.reports) == 1 and not res.reports[0].is_product
        balanced = SuperposedState.from_terms([1.0, 2.0], [(1.0, [GaussianPacket(0, 1.0), GaussianPacket(1, 0.5)])])
        res = transform_state(balanced, cm_relative_map(balanced.masses), mode="exact")
        assert not res.correlated and res.reports[0].is_product

    def test_exact_mode_three_bodies_matches_pullback(self):
        m = MassConfig((1.0, 2.0, 3.0))
        state = SuperposedState.from_terms(
            m, [(1.0, [GaussianPacket(0.1, 0.4 + 0.1j, 0.3), GaussianPacket(-0.5, 0.2), GaussianPacket(0.7, 0.3, -1.0)])]
        )
        cmap = cm_relative_map(m)
        res = transform_state(state, cmap, mode="exact")
        assert res.correlated and res.reports == ()
        rng = np.random.default_rng(3)
        Y = rng.normal(size=(20, 3)) * 0.4
        X = Y @ cmap.inverse_position.T
        jac = abs(np.linalg.det(cmap.position_matrix)) ** -0.5
        np.testing.assert_allclose(res.state.wavefunction(Y), jac * state.wavefunction(X), rtol=1e-12, atol=1e-14)

    def test_complex_widths_unsupported(self):
        with pytest.raises(UnsupportedCaseError):
            exact_transform_report(GaussianPacket(0, 1 + 1j), GaussianPacket(0, 1.0), MassConfig((1.0, 1.0)))


class TestApproximateTransform:
    def test_balanced_product_is_exact(self):
        m = MassConfig((1.0, 3.0))
        g1, g2 = GaussianPacket(-0.4, 0.3, 1.0), GaussianPacket(0.9, 0.1, -0.5)
        lab = normalize(SuperposedState.from_terms(m, [(1.0, [g1, g2])]))
        rel = transform_state(lab, cm_relative_map(m))
        Ai = cm_relative_map(m).inverse_position
        X = np.random.default_rng(1).normal(size=(40, 2)) * 0.4
        x = X @ Ai.T
        np.testing.assert_allclose(rel.wavefunction(X), lab.wavefunction(x), atol=1e-12)

    def test_requires_lab_state(self):
        m = MassConfig((1.0, 3.0))
        lab = SuperposedState.from_terms(m, [(1.0, [GaussianPacket(0, 1.0)] * 2)])
        rel = transform_state(lab, relative_x_frame(m))
        with pytest.raises(ContractError):
            transform_state(rel, relative_x_frame(m))

    def test_q_frame_centres(self):
        m = MassConfig((1.0, 2.0, 3.0))
        lab = SuperposedState.from_terms(m, [(1.0, [GaussianPacket(c, 0.01) for c in (-0.5, 0.25, 2.0)])])
        q = transform_state(lab, relative_q_frame(m))
        centres = [g.centre for g in q.branches[0].packets]
        expected = relative_q_frame(m).position_matrix @ [-0.5, 0.25, 2.0]
        np.testing.assert_allclose(centres, expected, atol=1e-14)
        assert q.coordinate_tag == "cm-relative-q"
