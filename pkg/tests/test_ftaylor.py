"""Fourier-Taylor fields: polynomial-in-w layers over the sparse series.

Oracle throughout: pointwise evaluation at sampled (x, w), with numpy doing
the arithmetic on the evaluated values.
"""
import numpy as np
import pytest

from kamrev.errors import ImplicitSolveFailure
from kamrev.fourier import FourierSeries
from kamrev.ftaylor import (FourierTaylor, WSubstitution, fs_neumann_solve,
                            ft_matmul, ft_mul, ft_neumann_solve, involution_pullback)

N_ANGLE, Q, ORDER, DEGREE = 2, 3, 10, 3

SAMPLES = [(np.array([0.0, 0.0]), np.array([0.1, -0.2, 0.05])),
           (np.array([1.1, -0.6]), np.array([-0.3, 0.08, 0.2])),
           (np.array([2.7, 3.9]), np.array([0.02, 0.3, -0.15]))]


def random_ft(rng, shape, degree=DEGREE, kmax=2, nterms=5, top=None):
    """Random field; ``top`` caps the sampled term degrees below the container's."""
    top = degree if top is None else top
    terms = {}
    for _ in range(nterms):
        alpha = tuple(int(e) for e in rng.multinomial(int(rng.integers(0, top + 1)),
                                                      np.ones(Q) / Q))
        k = tuple(int(c) for c in rng.integers(-kmax, kmax + 1, size=N_ANGLE))
        v = rng.standard_normal(shape) + 1j * rng.standard_normal(shape)
        if all(c == 0 for c in k):
            v = v.real.astype(complex)
        coeffs = {k: v}
        mk = tuple(-c for c in k)
        if mk != k:
            coeffs[mk] = np.conj(v)
        s = FourierSeries(N_ANGLE, shape, ORDER, coeffs)
        got = terms.get(alpha)
        terms[alpha] = s if got is None else got + s
    return FourierTaylor(N_ANGLE, Q, shape, ORDER, degree, terms)


def eval_oracle(F, x, w):
    out = np.zeros(F.shape)
    for alpha, s in F.terms.items():
        out = out + s.eval(x) * np.prod(np.asarray(w) ** np.asarray(alpha))
    return out


@pytest.mark.parametrize("seed", range(4))
def test_eval_matches_monomial_sum(seed):
    rng = np.random.default_rng(seed)
    F = random_ft(rng, (2,))
    for x, w in SAMPLES:
        assert np.allclose(F.eval(x, w), eval_oracle(F, x, w), atol=1e-12)


def test_build_accepts_plain_arrays():
    F = FourierTaylor.build(N_ANGLE, Q, ORDER, DEGREE,
                            {(1, 0, 0): np.array([2.0, 0.0]),
                             (0, 0, 2): FourierSeries.cosine(
                                 N_ANGLE, (1, 0), np.array([0.0, 1.0]), ORDER)})
    for x, w in SAMPLES:
        want = np.array([2.0 * w[0], np.cos(x[0]) * w[2] ** 2])
        assert np.allclose(F.eval(x, w), want, atol=1e-13)


def test_products_match_pointwise():
    rng = np.random.default_rng(8)
    a = random_ft(rng, (), degree=3, top=2, nterms=4)
    b = random_ft(rng, (), degree=3, top=1, nterms=4)
    A = random_ft(rng, (2, 3), degree=3, top=1, nterms=4)
    B = random_ft(rng, (3,), degree=3, top=2, nterms=4)
    p = ft_mul(a, b)
    m = ft_matmul(A, B)
    for x, w in SAMPLES:
        assert np.allclose(p.eval(x, w), a.eval(x, w) * b.eval(x, w), atol=1e-12)
        assert np.allclose(m.eval(x, w), A.eval(x, w) @ B.eval(x, w), atol=1e-12)


def test_product_degree_truncation_is_accounted():
    one_w = FourierTaylor.build(N_ANGLE, Q, ORDER, 1, {(1, 0, 0): np.array(1.0)})
    p = ft_mul(one_w, one_w)  # degree-2 content in a degree-1 container
    assert p.majorant() == 0.0
    assert p.trunc_loss > 0.0


def test_taylor0_and_linear_w_extract_jets():
    rng = np.random.default_rng(12)
    F = random_ft(rng, (2,))
    h = 1e-6
    for x, _ in SAMPLES:
        w0 = F.taylor0().eval(x)
        assert np.allclose(w0, F.eval(x, np.zeros(Q)), atol=1e-12)
        L = F.linear_w().eval(x)  # (2, Q) Jacobian in w at w = 0
        for j in range(Q):
            e = np.zeros(Q)
            e[j] = h
            fd = (F.eval(x, e) - F.eval(x, -e)) / (2 * h)
            assert np.allclose(L[:, j], fd, atol=1e-7)


def test_gradients_match_finite_differences():
    rng = np.random.default_rng(13)
    F = random_ft(rng, (2,))
    Gx, Gw = F.grad_x(), F.grad_w()
    h = 1e-6
    for x, w in SAMPLES:
        for j in range(N_ANGLE):
            e = np.zeros(N_ANGLE)
            e[j] = h
            fd = (F.eval(x + e, w) - F.eval(x - e, w)) / (2 * h)
            assert np.allclose(Gx.eval(x, w)[:, j], fd, atol=1e-6)
        for j in range(Q):
            e = np.zeros(Q)
            e[j] = h
            fd = (F.eval(x, w + e) - F.eval(x, w - e)) / (2 * h)
            assert np.allclose(Gw.eval(x, w)[:, j], fd, atol=1e-6)


def test_w_substitution_matches_pointwise_composition():
    """F(x, W0(x) + W1(x) wbar) via the memoized table vs direct evaluation."""
    rng = np.random.default_rng(4)
    F = random_ft(rng, (2,), degree=3)
    W0 = FourierSeries.sine(N_ANGLE, (1, 0), 0.01 * np.arange(1.0, Q + 1), ORDER)
    dev = FourierSeries.cosine(N_ANGLE, (0, 1),
                               0.02 * np.ones((Q, Q)), ORDER)
    W1 = FourierSeries.constant(N_ANGLE, np.eye(Q), ORDER) + dev
    sub = WSubstitution(W0, W1, DEGREE)
    G = sub.apply(F)
    for x, wbar in SAMPLES:
        # affine substitution keeps the degree, so this is exact up to the
        # Fourier order (mode sums stay well inside ORDER here)
        w = W0.eval(x) + W1.eval(x) @ wbar
        assert np.allclose(G.eval(x, wbar), F.eval(x, w), atol=1e-10)


def test_w_substitution_linear_case_is_exact():
    rng = np.random.default_rng(41)
    F = random_ft(rng, (2,), degree=1, nterms=4)
    W0 = FourierSeries.constant(N_ANGLE, 0.3 * np.arange(1.0, Q + 1), ORDER)
    W1 = FourierSeries.constant(N_ANGLE, np.eye(Q) + 0.2, ORDER)
    G = WSubstitution(W0, W1, DEGREE).apply(F)
    for x, wbar in SAMPLES:
        w = W0.eval(x) + W1.eval(x) @ wbar
        assert np.allclose(G.eval(x, wbar), F.eval(x, w), atol=1e-12)


def test_involution_pullback_pointwise():
    rng = np.random.default_rng(6)
    F = random_ft(rng, (2,))
    S = np.diag([-1.0, 1.0, -1.0])
    G = involution_pullback(F, S)
    for x, w in SAMPLES:
        assert np.allclose(G.eval(x, w), F.eval(-x, S @ w), atol=1e-12)


def test_neumann_solves_small_perturbation():
    rng = np.random.default_rng(15)
    M = FourierSeries.cosine(N_ANGLE, (1, 1), 0.05 * rng.standard_normal((2, 2)),
                             ORDER)
    rhs_s = FourierSeries.sine(N_ANGLE, (1, 0), np.array([1.0, -0.5]), ORDER)
    u = fs_neumann_solve(M, rhs_s)
    for x, _ in SAMPLES:
        lhs = u.eval(x) + M.eval(x) @ u.eval(x)
        assert np.allclose(lhs, rhs_s.eval(x), atol=1e-10)
    rhs_t = random_ft(rng, (2,), nterms=3)
    ut = ft_neumann_solve(M, rhs_t)
    for x, w in SAMPLES:
        lhs = ut.eval(x, w) + M.eval(x) @ ut.eval(x, w)
        assert np.allclose(lhs, rhs_t.eval(x, w), atol=1e-9)


def test_neumann_rejects_expansion():
    M = FourierSeries.constant(N_ANGLE, 2.0 * np.eye(2), ORDER) * -1.0  # I + M singular-ish
    rhs = FourierSeries.constant(N_ANGLE, np.array([1.0, 0.0]), ORDER)
    with pytest.raises(ImplicitSolveFailure):
        fs_neumann_solve(M, rhs, max_iter=50)


def test_map_values_truncate_drop():
    rng = np.random.default_rng(19)
    F = random_ft(rng, (2,))
    G = F.map_values(lambda v: v[::-1], (2,))
    for x, w in SAMPLES:
        assert np.allclose(G.eval(x, w), F.eval(x, w)[::-1], atol=1e-13)
    F0 = F.truncate_degree(0)
    assert all(sum(a) == 0 for a in F0.terms)
    Fd = F.drop_below(1e6)  # everything is below this floor
    assert Fd.majorant() == 0.0


def test_json_roundtrip():
    rng = np.random.default_rng(23)
    F = random_ft(rng, (2,))
    back = FourierTaylor.from_json(F.to_json())
    assert back.n == F.n and back.q == F.q and back.shape == F.shape
    assert set(back.terms) == set(F.terms)
    for x, w in SAMPLES:
        assert np.allclose(back.eval(x, w), F.eval(x, w), atol=1e-14)
