import math

import numpy as np
import pytest

from cvrepeater import fock
from cvrepeater.errors import DisplacedState, ImprobableBranch


def lossy_epr(lam, tau, cutoff):
    s = fock.make_epr(lam, cutoff)
    s = fock.apply_loss(s, tau, 0)
    s = fock.apply_loss(s, tau, 1)
    return s.normalized()


class TestMakeEpr:
    def test_vacuum_limit(self):
        s = fock.make_epr(0.0, 4)
        assert s.weight == pytest.approx(1.0, abs=1e-14)
        assert s.tensor[0, 0, 0, 0] == pytest.approx(1.0)
        assert np.sum(np.abs(s.tensor)) == pytest.approx(1.0)

    def test_pair_amplitude(self):
        s = fock.make_epr(0.6, 4)
        assert s.tensor[1, 1, 1, 1].real == pytest.approx((1 - 0.36) * 0.36, abs=1e-15)

    def test_truncated_weight_is_geometric_partial_sum(self):
        s = fock.make_epr(0.6, 4)
        expected = 0.64 * sum(0.36**k for k in range(5))
        assert expected == pytest.approx(1 - 0.36**5)
        assert s.weight == pytest.approx(expected, abs=1e-14)

    def test_unphysical_squeezing_rejected(self):
        with pytest.raises(ValueError):
            fock.make_epr(1.0, 4)
        with pytest.raises(ValueError):
            fock.make_epr(-0.1, 4)
        with pytest.raises(ValueError):
            fock.make_epr(0.5, 0)


class TestApplyLoss:
    def test_identity_at_full_transmission(self):
        s = fock.make_epr(0.5, 5)
        out = fock.apply_loss(s, 1.0, 0)
        assert np.max(np.abs(out.tensor - s.tensor)) < 1e-14

    def test_single_photon_two_kraus_oracle(self):
        d = 5
        psi = np.zeros((d, d))
        psi[1, 0] = 1.0
        out = fock.apply_loss(fock.pure_state(psi, 4), 0.3, 0)
        assert out.tensor[0, 0, 0, 0].real == pytest.approx(0.7, abs=1e-14)
        assert out.tensor[1, 0, 1, 0].real == pytest.approx(0.3, abs=1e-14)

    def test_exactly_trace_preserving_on_truncated_space(self):
        s = fock.make_epr(0.6, 6)
        out = fock.apply_loss(s, 0.37, 1)
        assert out.weight == pytest.approx(s.weight, abs=1e-13)

    def test_symmetric_loss_covariance_matches_closed_form(self):
        s = lossy_epr(0.6, 0.5, 14)
        gamma = fock.second_moments(s)
        # C = 1 + tau(cosh2r - 1), S = tau sinh2r with lam = tanh r
        assert gamma[0, 0] == pytest.approx(1.5625, abs=1e-3)
        assert gamma[0, 2] == pytest.approx(0.9375, abs=1e-3)

    def test_domain_errors(self):
        s = fock.make_epr(0.2, 3)
        with pytest.raises(ValueError):
            fock.apply_loss(s, -0.1, 0)
        with pytest.raises(ValueError):
            fock.apply_loss(s, 1.2, 0)


class TestBSCoefficient:
    def test_vacuum_passthrough(self):
        for tau in (0.0, 0.3, 0.5, 1.0):
            assert fock.bs_coefficient(0, 0, 0, tau) == pytest.approx(1.0)

    def test_single_reflection_sign(self):
        tau = 0.37
        assert fock.bs_coefficient(0, 1, 0, tau) == pytest.approx(-math.sqrt(tau), abs=1e-15)

    def test_two_photon_interference_null(self):
        # balanced splitter on |1,1>: the coincidence amplitude cancels
        assert fock.bs_coefficient(1, 1, 0, 0.5) == pytest.approx(0.0, abs=1e-15)

    def test_transfer_out_of_range(self):
        with pytest.raises(ValueError):
            fock.bs_coefficient(1, 1, 2, 0.5)
        with pytest.raises(ValueError):
            fock.bs_coefficient(1, 1, -2, 0.5)

    @pytest.mark.parametrize("tau", [0.21, 0.5, 0.77])
    def test_block_orthogonality_all_sectors(self, tau):
        cutoff = 5
        for total in range(2 * cutoff + 1):
            ks = [k for k in range(total + 1)]
            block = np.zeros((len(ks), len(ks)))
            for j, k in enumerate(ks):
                l = total - k
                for i, ko in enumerate(ks):
                    t = k - ko
                    if -l <= t <= k:
                        block[i, j] = fock.bs_coefficient(k, l, t, tau)
            assert np.max(np.abs(block.T @ block - np.eye(len(ks)))) < 1e-12


class TestApplyBS:
    def test_identity_at_full_transmission(self):
        s = fock.make_epr(0.4, 5)
        out = fock.apply_bs(s, (0, 1), 1.0)
        # tau=1 gives alpha_{k,l|0} = (-1)^l on the diagonal: a parity phase,
        # so the density operator changes only where the parity differs
        assert out.weight == pytest.approx(s.weight, abs=1e-12)
        assert abs(out.tensor[1, 1, 1, 1] - s.tensor[1, 1, 1, 1]) < 1e-14

    def test_single_photon_split(self):
        d = 7
        psi = np.zeros((d, d))
        psi[1, 0] = 1.0
        out = fock.apply_bs(fock.pure_state(psi, 6), (0, 1), 0.5)
        amp = 1.0 / math.sqrt(2.0)
        assert out.tensor[1, 0, 1, 0].real == pytest.approx(amp**2, abs=1e-14)
        assert out.tensor[0, 1, 0, 1].real == pytest.approx(amp**2, abs=1e-14)
        assert out.tensor[1, 0, 0, 1].real == pytest.approx(amp**2, abs=1e-14)

    def test_involution_on_supported_sectors(self):
        # the coefficient convention makes the splitter self-inverse
        rng = np.random.default_rng(3)
        cutoff = 4
        d = cutoff + 1
        psi = rng.normal(size=(d, d))
        for k in range(d):
            for l in range(d):
                if k + l > cutoff:
                    psi[k, l] = 0.0
        psi /= np.linalg.norm(psi)
        s = fock.pure_state(psi, cutoff)
        out = fock.apply_bs(fock.apply_bs(s, (0, 1), 0.3), (0, 1), 0.3)
        assert np.max(np.abs(out.tensor - s.tensor)) < 1e-12

    def test_trace_preserved_within_sectors(self):
        rng = np.random.default_rng(4)
        cutoff = 4
        d = cutoff + 1
        m = rng.normal(size=(d * d, d * d))
        rho = m @ m.T
        t = rho.reshape(d, d, d, d)
        for k in range(d):
            for l in range(d):
                if k + l > cutoff:
                    t[k, l, :, :] = 0.0
                    t[:, :, k, l] = 0.0
        s = fock.state_from_matrix(t.reshape(d * d, d * d), 2, cutoff).normalized()
        out = fock.apply_bs(s, (0, 1), 0.71)
        assert abs(out.weight - 1.0) < 1e-12


class TestHerald:
    def test_vacuum_on_vacuum(self):
        s = fock.vacuum_state(2, 3)
        res = fock.herald(s, 1, fock.number_basis_vector(0, 4))
        assert res.p_succ == pytest.approx(1.0, abs=1e-14)
        assert res.state.tensor[0, 0] == pytest.approx(1.0)

    def test_single_photon_herald_on_epr(self):
        s = fock.make_epr(0.6, 16).normalized()
        res = fock.herald(s, 1, fock.number_basis_vector(1, 17))
        assert res.p_succ == pytest.approx(0.2304, abs=1e-6)
        assert res.state.tensor[1, 1].real == pytest.approx(1.0, abs=1e-12)

    def test_large_q_superposition_approaches_vacuum_projector(self):
        from cvrepeater.protocols import xi_vector

        s = fock.make_epr(0.5, 8).normalized()
        big_q = fock.herald(s, 1, xi_vector(1e3, 9))
        vac = fock.herald(s, 1, fock.number_basis_vector(0, 9))
        assert big_q.p_succ == pytest.approx(vac.p_succ, abs=1e-6)
        # residual coherences decay only as 1/q
        assert np.max(np.abs(big_q.state.tensor - vac.state.tensor)) < 2e-3

    def test_completeness_over_number_basis(self):
        rng = np.random.default_rng(5)
        d = 4
        m = rng.normal(size=(d * d, d * d)) + 1j * rng.normal(size=(d * d, d * d))
        rho = m @ m.conj().T
        s = fock.state_from_matrix(rho, 2, d - 1).normalized()
        total = sum(fock.herald(s, 0, fock.number_basis_vector(n, d)).p_succ
                    for n in range(d))
        assert total == pytest.approx(1.0, abs=1e-10)

    def test_improbable_branch(self):
        s = fock.vacuum_state(2, 3)
        with pytest.raises(ImprobableBranch):
            fock.herald(s, 0, fock.number_basis_vector(3, 4))

    def test_unit_norm_required(self):
        s = fock.vacuum_state(2, 3)
        with pytest.raises(ValueError):
            fock.herald(s, 0, np.array([0.5, 0.0, 0.0, 0.0]))


class TestSecondMoments:
    def test_vacuum_is_shot_noise_identity(self):
        gamma = fock.second_moments(fock.vacuum_state(2, 4))
        assert np.max(np.abs(gamma - np.eye(4))) < 1e-12

    def test_epr_covariance(self):
        gamma = fock.second_moments(fock.make_epr(0.6, 12).normalized())
        assert gamma[0, 0] == pytest.approx(2.125, abs=1e-3)
        assert gamma[1, 1] == pytest.approx(2.125, abs=1e-3)
        assert gamma[0, 2] == pytest.approx(1.875, abs=1e-3)
        assert gamma[1, 3] == pytest.approx(-1.875, abs=1e-3)

    def test_weak_symmetric_loss(self):
        lam = 0.1
        s = lossy_epr(lam, 0.013, 12)
        gamma = fock.second_moments(s)
        cosh2r = (1 + lam**2) / (1 - lam**2)
        assert gamma[0, 0] == pytest.approx(1 + 0.013 * (cosh2r - 1), abs=1e-4)

    def test_displaced_state_rejected(self):
        d = 5
        psi = np.zeros((d, d))
        psi[0, 0] = psi[1, 0] = 1 / math.sqrt(2)
        with pytest.raises(DisplacedState):
            fock.second_moments(fock.pure_state(psi, 4))


class TestExtractF1:
    def test_vacuum(self):
        f1 = fock.extract_f1(fock.vacuum_state(2, 3))
        assert (f1.vac, f1.one_right, f1.one_left, f1.pair_coherence, f1.pair) == \
            (1.0, 0.0, 0.0, 0.0, 0.0)

    def test_pure_epr_entries(self):
        f1 = fock.extract_f1(fock.make_epr(0.6, 8))
        assert f1.vac == pytest.approx(0.64, abs=1e-14)
        assert f1.pair_coherence == pytest.approx(0.64 * 0.6, abs=1e-14)
        assert f1.one_right == pytest.approx(0.0, abs=1e-15)

    def test_loss_preserves_pattern_and_symmetries(self):
        s = lossy_epr(0.5, 0.4, 8)
        f1 = fock.extract_f1(s)
        assert f1.off_pattern_max < 1e-12
        t = s.tensor
        d = s.dim
        # exchange symmetry, selection rule, and realness
        for k in range(d):
            for l in range(d):
                for a in range(d):
                    for b in range(d):
                        v = t[k, l, a, b]
                        assert abs(v - t[l, k, b, a]) < 1e-12
                        if k - a != l - b:
                            assert abs(v) < 1e-12
                        assert abs(v.imag) < 1e-12


class TestStateInvariants:
    def test_states_are_read_only(self):
        s = fock.make_epr(0.3, 4)
        with pytest.raises(ValueError):
            s.tensor[0, 0, 0, 0] = 1.0

    def test_hermiticity_and_positivity_preserved_by_ops(self):
        rng = np.random.default_rng(11)
        cutoff = 3
        d = cutoff + 1
        for _ in range(50):
            m = rng.normal(size=(d * d, d * d)) + 1j * rng.normal(size=(d * d, d * d))
            s = fock.state_from_matrix(m @ m.conj().T, 2, cutoff).normalized()
            s = fock.apply_loss(s, rng.uniform(0.1, 0.9), int(rng.integers(2)))
            s = fock.apply_bs(s, (0, 1), rng.uniform(0.1, 0.9))
            assert fock.hermiticity_defect(s) < 1e-10
            assert fock.min_eigenvalue_ratio(s) > -1e-10
