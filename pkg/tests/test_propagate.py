import numpy as np
import pytest
import scipy.linalg
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import SX, SZ, random_density, random_hermitian, rk4_lindblad
from robustgates.controls import ControlField, sample_initial_field
from robustgates.model import (
    LindbladChannel,
    LindbladSpec,
    chain_network,
    noise_network,
    pauli_basis,
    target_gate,
)
from robustgates.objectives import hamiltonian_problem, markovian_problem
from robustgates.propagate import (
    Generator,
    NotDiagonalizableError,
    SliceSpectrum,
    augmented_expm,
    divided_differences,
    evolution_gradient,
    finite_difference_gradient,
    propagate,
    slice_exp_and_derivative_augmented,
    slice_exp_and_derivative_spectral,
)


def closed_1q():
    return hamiltonian_problem(chain_network([1.0]), target_gate("hadamard", 1))


def markov_1q(rate=0.02, kind="dephasing-z"):
    return markovian_problem(chain_network([1.0]), LindbladSpec([LindbladChannel(kind, rate)]),
                             target_gate("hadamard", 1))


def markov_2q():
    return markovian_problem(chain_network([0.95, 1.05]),
                             LindbladSpec([LindbladChannel("spontaneous-emission", 0.05)]),
                             target_gate("cnot", 2))


def nm_1_1():
    return hamiltonian_problem(noise_network([1.0], [1 / (np.pi - 2.14)], 0.0, 0.02), target_gate("hadamard", 1))


def central_fd_of_final(gen, field, method, m, p, step=1e-6):
    v = field.values.copy()
    v[m, p] += step
    up = propagate(gen, ControlField(v, field.T), method).final
    v[m, p] -= 2 * step
    down = propagate(gen, ControlField(v, field.T), method).final
    return (up - down) / (2 * step)


class TestPropagate:
    def test_zero_drift_zero_field_is_identity(self):
        gen = Generator("hamiltonian", np.zeros((2, 2)), np.array([SX / 2]))
        X = propagate(gen, ControlField(np.zeros((1, 5)), 3.0)).final
        np.testing.assert_allclose(X, np.eye(2), atol=1e-15)

    def test_rabi_pi_pulse(self):
        T = 3.7
        gen = Generator("hamiltonian", np.zeros((2, 2)), np.array([SX / 2]))
        X = propagate(gen, ControlField(np.full((1, 10), np.pi / T), T)).final
        assert abs(abs(X[1, 0]) - 1) < 1e-10
        np.testing.assert_allclose(X, -1j * SX, atol=1e-12)

    @pytest.mark.parametrize("method", ["augmented", "spectral"])
    def test_dephasing_decay_matches_integration(self, method, rng):
        gamma, t = 0.05, 4.0
        prob = markovian_problem(chain_network([1.0]), LindbladSpec([LindbladChannel("dephasing-z", gamma)], "sqrt"),
                                 target_gate("identity", 1), method)
        X = prob.propagate(ControlField(np.zeros((2, 8)), t)).final
        b = pauli_basis(1)
        rho = random_density(2, rng)
        H0 = SZ / 2
        direct = rk4_lindblad(rho, H0, [np.sqrt(gamma) * SZ], t)
        np.testing.assert_allclose(X @ b.coefficients(rho), b.coefficients(direct), atol=1e-8)
        # the coherence magnitude shrinks by exp(-2 gamma t)
        r0, rt = b.coefficients(rho), X @ b.coefficients(rho)
        assert np.hypot(*rt[1:3]) / np.hypot(*r0[1:3]) == pytest.approx(np.exp(-2 * gamma * t), rel=1e-12)

    def test_forward_backward_consistency(self, rng):
        prob = nm_1_1()
        f = sample_initial_field(2, 9, 3.0, 1.0, 0)
        c = prob.propagate(f)
        np.testing.assert_array_equal(c.forward[0], np.eye(4))
        for p in range(10):
            np.testing.assert_allclose(c.backward[p] @ c.forward[p], c.final, atol=1e-13)

    def test_rejects_bad_fields(self):
        gen = closed_1q().generator
        with pytest.raises(ValueError, match="non-finite"):
            propagate(gen, ControlField([[np.nan, 0.0], [0.0, 0.0]], 1.0))
        with pytest.raises(ValueError, match="controls"):
            propagate(gen, ControlField(np.zeros((3, 2)), 1.0))

    def test_generator_dimension_mismatch(self):
        with pytest.raises(ValueError):
            Generator("hamiltonian", np.zeros((2, 2)), np.zeros((1, 3, 3)))

    @settings(max_examples=100, deadline=None)
    @given(seed=st.integers(0, 2**32 - 1), scale=st.sampled_from([0.1, 1.0, 10.0]))
    def test_unitarity(self, seed, scale):
        prob = nm_1_1()
        X = prob.propagate(sample_initial_field(2, 12, 3.0, scale, seed)).final
        np.testing.assert_allclose(X.conj().T @ X, np.eye(4), atol=1e-10)

    @settings(max_examples=100, deadline=None)
    @given(seed=st.integers(0, 2**32 - 1), scale=st.sampled_from([0.1, 1.0, 10.0]))
    def test_trace_preservation(self, seed, scale):
        prob = markov_1q(0.3, "spontaneous-emission")
        X = prob.propagate(sample_initial_field(2, 12, 5.0, scale, seed)).final
        r = np.random.default_rng(seed).normal(size=4)
        assert abs((X @ r)[0] - r[0]) < 1e-10
        np.testing.assert_allclose(X[0], [1, 0, 0, 0], atol=1e-10)

    @pytest.mark.parametrize("factory", [closed_1q, markov_1q, nm_1_1])
    def test_composition(self, factory):
        prob = factory()
        f = sample_initial_field(2, 20, 4.0, 1.0, 5)
        first = ControlField(f.values[:, :10], 2.0)
        second = ControlField(f.values[:, 10:], 2.0)
        whole = prob.propagate(f).final
        np.testing.assert_allclose(prob.propagate(second).final @ prob.propagate(first).final, whole, atol=1e-10)

    def test_markovian_spectral_matches_augmented(self):
        prob = markov_1q()
        f = sample_initial_field(2, 10, 5.0, 1.0, 2)
        a = propagate(prob.generator, f, "augmented")
        s = propagate(prob.generator, f, "spectral")
        assert s.method == "spectral"
        np.testing.assert_allclose(s.final, a.final, atol=1e-9)

    def test_spectral_falls_back_on_defective_generator(self):
        gen = Generator("markovian", np.array([[0.0, 1.0], [0.0, 0.0]]), np.array([[[0.0, 0.0], [0.0, 0.0]]]))
        c = propagate(gen, ControlField(np.zeros((1, 3)), 3.0), "spectral")
        assert c.method == "augmented"
        np.testing.assert_allclose(c.final, [[1, 3], [0, 1]], atol=1e-14)
        with pytest.raises(NotDiagonalizableError):
            SliceSpectrum.from_generators(gen.drift[None], 1.0)


class TestAugmented:
    def test_zero_direction(self, rng):
        A = rng.normal(size=(4, 4))
        E, L = augmented_expm(A, np.zeros((4, 4)))
        np.testing.assert_allclose(E, scipy.linalg.expm(A), atol=1e-13)
        assert np.all(L == 0)

    def test_zero_generator(self, rng):
        B = rng.normal(size=(4, 4))
        E, L = augmented_expm(np.zeros((4, 4)), B)
        np.testing.assert_allclose(E, np.eye(4), atol=1e-15)
        np.testing.assert_allclose(L, B, atol=1e-14)

    def test_matches_central_difference(self, rng):
        A, B = rng.normal(size=(4, 4)), rng.normal(size=(4, 4))
        eps = 1e-6
        fd = (scipy.linalg.expm(A + eps * B) - scipy.linalg.expm(A - eps * B)) / (2 * eps)
        _, L = augmented_expm(A, B)
        assert np.max(np.abs(L - fd)) / np.max(np.abs(fd)) < 1e-6

    def test_dt_scaling(self, rng):
        G, Gm = rng.normal(size=(3, 3)), rng.normal(size=(3, 3))
        dt, eps = 0.3, 1e-6
        E, L = slice_exp_and_derivative_augmented(G, Gm, dt)
        fd = (scipy.linalg.expm((G + eps * Gm) * dt) - scipy.linalg.expm((G - eps * Gm) * dt)) / (2 * eps)
        np.testing.assert_allclose(E, scipy.linalg.expm(G * dt), atol=1e-13)
        # with both blocks scaled by dt the corner block is d exp((G + e Gm) dt) / de
        assert np.max(np.abs(L - fd)) < 1e-8

    def test_shape_errors(self):
        with pytest.raises(ValueError):
            augmented_expm(np.zeros((2, 3)), np.zeros((2, 3)))
        with pytest.raises(ValueError):
            augmented_expm(np.zeros((2, 2)), np.zeros((3, 3)))


class TestSpectral:
    def test_commuting_control(self, rng):
        H, Hm, dt = SZ / 2 * 1.3, SZ / 2, 0.4
        U, dU = slice_exp_and_derivative_spectral(H, Hm[None], [0.7], dt)
        G = -1j * (H + 0.7 * Hm) * dt
        np.testing.assert_allclose(U, scipy.linalg.expm(G), atol=1e-14)
        np.testing.assert_allclose(dU[0], -1j * dt * Hm @ scipy.linalg.expm(G), atol=1e-14)

    def test_degenerate_limit(self, rng):
        Hm, dt = random_hermitian(3, rng), 0.25
        U, dU = slice_exp_and_derivative_spectral(np.zeros((3, 3)), Hm[None], [0.0], dt)
        np.testing.assert_allclose(U, np.eye(3), atol=1e-15)
        np.testing.assert_allclose(dU[0], -1j * dt * Hm, atol=1e-14)

    def test_matches_augmented_route(self, rng):
        for _ in range(10):
            H, Hm = random_hermitian(2, rng), np.array([random_hermitian(2, rng) for _ in range(2)])
            f, dt = rng.normal(size=2), rng.uniform(0.05, 2.0)
            U, dU = slice_exp_and_derivative_spectral(H, Hm, f, dt)
            G = -1j * (H + np.tensordot(f, Hm, axes=1))
            for m in range(2):
                E, L = slice_exp_and_derivative_augmented(G, -1j * Hm[m], dt)
                np.testing.assert_allclose(U, E, atol=1e-12)
                np.testing.assert_allclose(dU[m], L, atol=1e-10)

    def test_divided_differences_threshold(self):
        lam = np.array([0.3j, 0.3j + 1e-12, -1.0j])
        g = divided_differences(lam, 0.5)
        assert g[0, 1] == pytest.approx(0.5 * np.exp(0.5 * (0.6j + 1e-12) * 0.5), rel=1e-15)
        assert g[0, 2] == pytest.approx((np.exp(0.15j) - np.exp(-0.5j)) / 1.3j, rel=1e-13)

    def test_non_hermitian_rejected(self):
        with pytest.raises(NotDiagonalizableError):
            slice_exp_and_derivative_spectral(np.array([[0, 1], [0, 0]]), SX[None], [0.0], 1.0)


class TestEvolutionGradient:
    def test_single_slice_reduces_to_block(self):
        prob = closed_1q()
        f = ControlField([[0.4], [-0.2]], 1.5)
        c = prob.propagate(f)
        _, dU = slice_exp_and_derivative_spectral(prob.generator.drift, prob.generator.controls, [0.4, -0.2], 1.5)
        for m in range(2):
            np.testing.assert_allclose(evolution_gradient(c, m, 0), dU[m], atol=1e-14)

    @pytest.mark.parametrize("factory,method,tol", [
        (closed_1q, "spectral", 1e-6), (closed_1q, "augmented", 1e-6),
        (nm_1_1, "spectral", 1e-6), (markov_1q, "augmented", 1e-6), (markov_1q, "spectral", 1e-6),
        (markov_2q, "augmented", 1e-5),
    ])
    def test_matches_central_differences(self, factory, method, tol):
        prob = factory()
        M = prob.n_controls
        f = sample_initial_field(M, 6, 3.0, 1.0, 11)
        c = propagate(prob.generator, f, method)
        for m in range(M):
            for p in range(6):
                fd = central_fd_of_final(prob.generator, f, method, m, p)
                an = evolution_gradient(c, m, p)
                assert np.max(np.abs(an - fd)) / np.max(np.abs(fd)) < tol

    def test_contraction_matches_explicit_gradients(self, rng):
        for prob in (nm_1_1(), markov_1q()):
            f = sample_initial_field(2, 5, 2.0, 1.0, 3)
            c = prob.propagate(f)
            C = rng.normal(size=c.final.shape) + (1j * rng.normal(size=c.final.shape) if c.final.dtype.kind == "c" else 0)
            g = c.gradient_contraction(C)
            for m in range(2):
                for p in range(5):
                    direct = np.trace(C @ evolution_gradient(c, m, p)).real
                    assert g[m, p] == pytest.approx(direct, rel=1e-10, abs=1e-12)

    def test_index_errors(self):
        c = closed_1q().propagate(ControlField(np.zeros((2, 3)), 1.0))
        with pytest.raises(IndexError):
            evolution_gradient(c, 2, 0)
        with pytest.raises(IndexError):
            evolution_gradient(c, 0, 3)


class TestFiniteDifference:
    def test_linear_objective_exact(self, rng):
        c = rng.normal(size=(2, 4))
        f = ControlField(rng.normal(size=(2, 4)), 1.0)
        g = finite_difference_gradient(lambda fl: float(np.sum(c * fl.values)), f, 1e-6)
        np.testing.assert_allclose(g, c.ravel(), atol=1e-9)

    def test_first_order_accuracy(self, rng):
        f = ControlField(rng.normal(size=(1, 3)), 1.0)
        obj = lambda fl: float(np.sum(fl.values**2))
        exact = 2 * f.flat()
        e4 = np.max(np.abs(finite_difference_gradient(obj, f, 1e-4) - exact))
        e5 = np.max(np.abs(finite_difference_gradient(obj, f, 1e-5) - exact))
        assert 8 <= e4 / e5 <= 12

    def test_gate_objective_matches_analytic(self):
        prob = closed_1q()
        f = sample_initial_field(2, 25, 5.0, 0.1, 0)
        fd = finite_difference_gradient(prob.error, f, 1e-6)
        an = prob.evaluate(f).gradient
        assert np.max(np.abs(fd - an)) / np.max(np.abs(an)) < 1e-4

    def test_invalid(self):
        f = ControlField(np.zeros((1, 2)), 1.0)
        with pytest.raises(ValueError):
            finite_difference_gradient(lambda fl: 0.0, f, 0.0)
        with pytest.raises(ValueError):
            finite_difference_gradient(lambda fl: np.nan, f, 1e-6)
