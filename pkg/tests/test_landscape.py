import numpy as np
import pytest

from conftest import random_frame, random_function, random_orthogonal
from hermiflow import function_space as fs
from hermiflow import landscape as ls
from hermiflow.errors import (
    DimensionMismatch,
    InfeasibleN,
    OddDegreeWithReflection,
    UnsupportedTargetKind,
)


def rotation(theta):
    c, s = np.cos(theta), np.sin(theta)
    return np.array([[c, -s], [s, c]])


def stats_from_matrix(M):
    """SummaryStatistics for an explicit square correlation matrix."""
    V, lam, Uh = np.linalg.svd(M)
    return ls.SummaryStatistics(M=M, V=V, lam=lam, U=Uh.T, G=M @ M.T)


def retract(X):
    Q, R = np.linalg.qr(X)
    return Q * np.sign(np.diag(R))


class TestSummary:
    def test_same_frame(self, rng):
        W = random_frame(rng, 9, 3)
        assert np.allclose(ls.summary(W, W).lam, 1.0)

    def test_orthogonal_frames(self, rng):
        Ws = random_frame(rng, 9, 3)
        W = random_frame(rng, 9, 3)
        W = retract(W - Ws @ (Ws.T @ W))
        assert np.abs(ls.summary(Ws, W).lam).max() <= 1e-10

    def test_svd_consistency(self, rng):
        Ws, W = random_frame(rng, 12, 3), random_frame(rng, 12, 4)
        S = ls.summary(Ws, W)
        assert np.abs(S.M - (S.V * S.lam) @ S.U.T).max() <= 1e-10
        assert np.abs(S.G - (S.V * S.lam**2) @ S.V.T).max() <= 1e-10
        assert np.all(np.diff(S.lam) <= 1e-15)

    def test_sign_convention_deterministic(self, rng):
        Ws, W = random_frame(rng, 12, 3), random_frame(rng, 12, 3)
        S1, S2 = ls.summary(Ws, W), ls.summary(Ws, W)
        assert np.array_equal(S1.V, S2.V)
        for j in range(3):
            i = int(np.argmax(np.abs(S1.V[:, j])))
            assert S1.V[i, j] > 0

    def test_dimension_errors(self, rng):
        with pytest.raises(DimensionMismatch):
            ls.summary(random_frame(rng, 9, 3), random_frame(rng, 9, 2))


class TestGrassmannLoss:
    def test_full_alignment_gives_norm(self, rng):
        f = random_function(rng, 2, 4)
        t = ls.coefficient_target(f)
        S = stats_from_matrix(np.eye(2))
        assert ls.grassmann_loss(t, S) == pytest.approx(f.norm2())

    def test_zero_alignment_keeps_mean_only(self, rng):
        f = fs.from_coeffs(2, {(1, 0): 0.7, (0, 2): -0.4})
        t = ls.coefficient_target(f)
        S = stats_from_matrix(np.zeros((2, 2)))
        assert ls.grassmann_loss(t, S) == pytest.approx(0.0, abs=1e-14)

    def test_single_index_value(self):
        t = ls.coefficient_target(fs.basis(1, (2,)))
        S = stats_from_matrix(np.array([[0.5]]))
        assert ls.grassmann_loss(t, S) == pytest.approx(0.0625)

    def test_spectral_formula_oracle(self, rng):
        f = random_function(rng, 3, 4)
        t = ls.coefficient_target(f)
        Ws, W = random_frame(rng, 12, 3), random_frame(rng, 12, 3)
        S = ls.summary(Ws, W)
        g = fs.rotate(f, S.V.T)  # coefficients alpha_beta(V)
        oracle = sum(
            a * a * float(np.prod(S.lam ** (2 * np.array(b))))
            for b, a in g.coeffs.items()
        )
        assert ls.grassmann_loss(t, S) == pytest.approx(oracle, abs=1e-12)

    def test_quotient_invariance(self, rng):
        f = random_function(rng, 3, 4)
        t = ls.coefficient_target(f)
        Ws, W = random_frame(rng, 12, 3), random_frame(rng, 12, 4)
        R = random_orthogonal(rng, 4)
        l1 = ls.grassmann_loss(t, ls.summary(Ws, W))
        l2 = ls.grassmann_loss(t, ls.summary(Ws, W @ R))
        assert l1 == pytest.approx(l2, abs=1e-10)

    def test_pure_ridge_rejected(self, rng):
        t = ls.ridge_target([1.0], np.array([[1.0], [0.0]]), 3000)
        S = stats_from_matrix(np.eye(2))
        with pytest.raises(UnsupportedTargetKind):
            ls.grassmann_loss(t, S)


class TestGrassmannGradG:
    def test_linear_target(self, rng):
        t = ls.coefficient_target(fs.basis(2, (1, 0)))
        for _ in range(3):
            M = random_frame(rng, 2, 2) * rng.uniform(0.2, 0.9)
            bar = ls.grassmann_grad_G(t, stats_from_matrix(M))
            assert np.abs(bar - np.array([[1.0, 0.0], [0.0, 0.0]])).max() <= 1e-12

    def test_zero_matrix_high_exponent(self):
        t = ls.coefficient_target(fs.basis(2, (2, 0)))
        bar = ls.grassmann_grad_G(t, stats_from_matrix(np.zeros((2, 2))))
        assert np.abs(bar).max() <= 1e-14

    def test_finite_difference_match(self, rng):
        f = random_function(rng, 2, 4)
        t = ls.coefficient_target(f)
        h = 1e-5
        for _ in range(5):
            A = rng.normal(size=(2, 2))
            G = 0.3 * (A @ A.T) / np.linalg.norm(A @ A.T, 2) + 0.3 * np.eye(2)
            S = ls.SummaryStatistics(M=None, V=None, lam=None, U=None, G=G)
            bar = ls.grassmann_grad_G(t, S)
            for i in range(2):
                for j in range(i, 2):
                    E = np.zeros((2, 2))
                    E[i, j] = E[j, i] = 1.0
                    Sp = ls.SummaryStatistics(M=None, V=None, lam=None, U=None, G=G + h * E)
                    Sm = ls.SummaryStatistics(M=None, V=None, lam=None, U=None, G=G - h * E)
                    fd = (ls.grassmann_loss(t, Sp) - ls.grassmann_loss(t, Sm)) / (2 * h)
                    an = float((bar * E).sum())
                    assert abs(fd - an) <= 1e-6

    def test_psd_everywhere(self, rng):
        f = random_function(rng, 3, 5)
        t = ls.coefficient_target(f)
        for _ in range(10):
            Ws, W = random_frame(rng, 10, 3), random_frame(rng, 10, 3)
            bar = ls.grassmann_grad_G(t, ls.summary(Ws, W))
            assert np.linalg.eigvalsh(bar).min() >= -1e-10


class TestFlowFields:
    def test_grassmann_zero_at_optimum(self, rng):
        f = random_function(rng, 2, 4)
        t = ls.coefficient_target(f)
        Ws = random_frame(rng, 10, 2)
        assert np.abs(ls.grassmann_flow_field(t, Ws, Ws)).max() <= 1e-10

    def test_grassmann_fd_and_tangency(self, rng):
        f = random_function(rng, 3, 4)
        t = ls.coefficient_target(f)
        Ws = random_frame(rng, 10, 3)
        for _ in range(6):
            W = random_frame(rng, 10, 3)
            field = ls.grassmann_flow_field(t, Ws, W)
            assert np.abs(W.T @ field).max() <= 1e-10
            lossfn = lambda X: ls.grassmann_loss(t, ls.summary(Ws, X))
            H = rng.normal(size=W.shape)
            H = H - W @ (W.T @ H)
            h = 1e-6
            fd = (lossfn(retract(W + h * H)) - lossfn(retract(W - h * H))) / (2 * h)
            an = float(np.sum(field * H))
            assert abs(fd - an) <= 1e-5 * max(1.0, abs(fd))

    def test_constructed_saddle(self, rng):
        # W contains the first target direction and is orthogonal to the rest
        f = fs.basis(2, (2, 0)) + fs.basis(2, (0, 3))
        t = ls.coefficient_target(f)
        d = 10
        Ws = np.eye(d)[:, :2]
        W = np.zeros((d, 2))
        W[0, 0] = 1.0  # aligned with Wstar e1
        W[5, 1] = 1.0  # orthogonal to Wstar
        field = ls.grassmann_flow_field(t, Ws, W)
        assert np.abs(field).max() <= 1e-8

    def test_stiefel_fd_and_antisymmetry(self, rng):
        # the canonical-metric gradient pairs with tangents through
        # (I - W W^T / 2): dL[H] = tr(field^T (I - W W^T / 2) H)
        f = fs.from_coeffs(2, {(2, 0): 0.5, (0, 2): 0.5, (1, 1): 0.6, (0, 3): -0.4})
        t = ls.coefficient_target(f)
        Ws = random_frame(rng, 10, 2)
        for _ in range(6):
            W = random_frame(rng, 10, 2)
            field = ls.stiefel_flow_field(t, Ws, W)
            K = W.T @ field
            assert np.abs(K + K.T).max() <= 1e-10
            lossfn = lambda X: ls.planted_loss(t, ls.summary(Ws, X))
            H = rng.normal(size=W.shape)
            A = W.T @ H
            H = H - W @ ((A + A.T) / 2)
            h = 1e-6
            fd = (lossfn(retract(W + h * H)) - lossfn(retract(W - h * H))) / (2 * h)
            an = float(np.sum(field * ((np.eye(10) - 0.5 * W @ W.T) @ H)))
            assert abs(fd - an) <= 1e-5 * max(1.0, abs(fd))

    def test_stiefel_zero_at_optimum_radial(self, rng):
        r = 1.0 / np.sqrt(2.0)
        f = fs.from_coeffs(2, {(2, 0): r, (0, 2): r})
        t = ls.coefficient_target(f)
        Ws = random_frame(rng, 10, 2)
        assert np.abs(ls.stiefel_flow_field(t, Ws, Ws)).max() <= 1e-12


class TestPlantedLoss:
    def test_identity_ridge_sum(self):
        Z = np.array([2.0, 1.0, 1.0, 1.0, 1.0])
        dirs = ls.roots_of_unity(5)
        t = ls.ridge_target(Z, dirs, 8)
        S = stats_from_matrix(np.eye(2))
        expect = float(sum(
            Z[j] * Z[k] * (dirs[:, j] @ dirs[:, k]) ** 8
            for j in range(5) for k in range(5)
        ))
        assert ls.planted_loss(t, S) == pytest.approx(expect)

    def test_zero_matrix(self):
        t = ls.ridge_target([1.0, 1.0], ls.roots_of_unity(2), 3)
        S = stats_from_matrix(np.zeros((2, 2)))
        assert ls.planted_loss(t, S) == pytest.approx(0.0)

    def test_single_ridge_identity(self):
        t = ls.ridge_target([1.0], np.array([[1.0], [0.0]]), 7)
        assert ls.planted_loss(t, stats_from_matrix(np.eye(2))) == pytest.approx(1.0)

    def test_coeff_vs_ridge_paths(self, rng):
        # small-degree ridge target computed both ways
        for s in (2, 4, 8):
            th = rng.uniform(0, 2 * np.pi, size=3)
            dirs = np.vstack([np.cos(th), np.sin(th)])
            Z = rng.normal(size=3)
            t_ridge = ls.ridge_target(Z, dirs, s)
            f = fs.zero(2)
            for j in range(3):
                f = f + float(Z[j]) * fs.ridge_coeffs(dirs[:, j], s)
            t_coeff = ls.coefficient_target(f)
            M = rng.normal(size=(2, 2))
            M = 0.8 * M / np.linalg.norm(M, 2)
            S = stats_from_matrix(M)
            assert ls.planted_loss(t_ridge, S) == pytest.approx(
                ls.planted_loss(t_coeff, S), abs=1e-9
            )

    def test_mixed_decomposition(self, rng):
        r = 1.0 / np.sqrt(2.0)
        f = fs.from_coeffs(2, {(2, 0): r, (0, 2): r})
        Z = np.array([2.0, 1.0, 1.0, 1.0, 1.0])
        dirs = ls.roots_of_unity(5)
        eps = 1e-3
        t_mixed = ls.mixed_target(f, Z, dirs, 6, eps)
        t_f = ls.coefficient_target(f)
        t_g = ls.ridge_target(Z, dirs, 6)
        M = rng.normal(size=(2, 2))
        M = 0.9 * M / np.linalg.norm(M, 2)
        S = stats_from_matrix(M)
        total = ls.planted_loss(t_mixed, S)
        parts = ls.planted_loss(t_f, S) + eps * ls.planted_loss(t_g, S)
        assert total == pytest.approx(parts, abs=1e-12)
        # radial part equals (lam1^2 + lam2^2)/2
        assert ls.planted_loss(t_f, S) == pytest.approx(
            0.5 * float(np.sum(S.lam**2)), abs=1e-12
        )

    def test_ridge_autocorrelation_identity(self):
        Z = np.array([2.0, 1.0, 1.0, 1.0, 1.0])
        dirs = ls.roots_of_unity(5)
        t = ls.ridge_target(Z, dirs, 8)
        for th in (0.0, 0.41, 1.7):
            S = stats_from_matrix(rotation(th))
            assert ls.planted_loss(t, S) == pytest.approx(
                ls.autocorrelation_phi(Z, 8, th), abs=1e-12
            )


class TestClassifyCritical:
    def test_vertex(self):
        S = ls.SummaryStatistics(
            M=None, V=np.eye(3), lam=np.array([1.0, 1.0, 0.0]), U=None, G=None
        )
        rep = ls.classify_critical(S, 1e-3)
        assert (rep.tau, rep.tau_prime, rep.is_vertex) == (2, 0, True)

    def test_non_vertex(self):
        S = ls.SummaryStatistics(
            M=None, V=np.eye(3), lam=np.array([1.0, 0.5, 0.0]), U=None, G=None
        )
        rep = ls.classify_critical(S, 1e-3)
        assert (rep.tau, rep.tau_prime, rep.is_vertex) == (1, 1, False)
        assert rep.sp.shape == (3, 1)
        assert rep.ess.shape == (3, 1)


class TestAutocorrelation:
    def test_failure_weights_peak(self):
        Z = np.array([2.0, 1.0, 1.0, 1.0, 1.0])
        s = 600
        assert ls.autocorrelation_phi(Z, s, 0.0) >= len(Z) + 3

    def test_single_weight(self):
        assert ls.autocorrelation_phi([1.0], 5, 0.3) == pytest.approx(np.cos(0.3) ** 5)

    def test_pi_periodicity(self):
        Z = np.array([2.0, 1.0, 1.0, 1.0, 1.0])
        for th in (0.1, 0.9, 2.3):
            a = ls.autocorrelation_phi(Z, 8, th)
            b = ls.autocorrelation_phi(Z, 8, th + np.pi)
            assert abs(a - b) <= 1e-12

    def test_even(self):
        Z = np.array([2.0, 1.0, 1.0, 1.0, 1.0])
        assert ls.autocorrelation_phi(Z, 8, 0.7) == pytest.approx(
            ls.autocorrelation_phi(Z, 8, -0.7), abs=1e-12
        )

    def test_reflection_odd_degree_error(self):
        with pytest.raises(OddDegreeWithReflection):
            ls.autocorrelation_phi([1.0, 1.0], 5, 0.1, reflection=True)


class TestNegativeAutocorrelation:
    def test_n8_strictly_negative(self):
        Z = ls.negative_autocorrelation_sequence(8)
        phi = [float(np.dot(Z, np.roll(Z, -k))) for k in range(8)]
        for k in (1, 2, 3, 5, 6, 7):
            assert phi[k] < 0

    def test_even_sequence(self):
        Z = ls.negative_autocorrelation_sequence(8)
        for k in range(1, 8):
            assert Z[k] == pytest.approx(Z[8 - k], abs=1e-14)

    def test_self_convolution_equals_autocorrelation(self):
        Z = ls.negative_autocorrelation_sequence(8)
        N = len(Z)
        phi = [float(np.dot(Z, np.roll(Z, -k))) for k in range(N)]
        conv = [float(sum(Z[l] * Z[(k - l) % N] for l in range(N))) for k in range(N)]
        assert np.abs(np.array(phi) - np.array(conv)).max() <= 1e-14

    def test_infeasible(self):
        with pytest.raises(InfeasibleN):
            ls.negative_autocorrelation_sequence(7)
        with pytest.raises(InfeasibleN):
            ls.negative_autocorrelation_sequence(2)


def test_failure_epsilon_satisfies_constraint():
    N, s = 5, 2798
    Z = np.array([2.0, 1.0, 1.0, 1.0, 1.0])
    g_norm2 = ls.autocorrelation_phi(Z, s, 0.0)
    eps = ls.failure_epsilon(N, s, 1.0, g_norm2)
    c = 1.0 + 2.0 * 1.0 + s * g_norm2
    lhs = np.arccos(1.0 - 2.0 * eps * N * np.sqrt(2 * np.log(N)) * (1 + np.log(c / eps)))
    assert lhs <= np.pi / (10 * N) + 1e-12
    # near-maximality: doubling eps breaks it
    lhs2 = 1.0 - 2.0 * (2 * eps) * N * np.sqrt(2 * np.log(N)) * (1 + np.log(c / (2 * eps)))
    assert np.arccos(lhs2) > np.pi / (10 * N)


def test_lambda_rate_diagnostic(rng):
    # diagnostic matches the direct finite difference of the loss in lambda
    f = random_function(rng, 2, 4)
    t = ls.coefficient_target(f)
    Ws, W = random_frame(rng, 10, 2), random_frame(rng, 10, 2)
    S = ls.summary(Ws, W)
    rate = ls.lambda_rate("grassmann", t, S)
    assert rate.shape == (2,)
    assert np.all(np.isfinite(rate))
