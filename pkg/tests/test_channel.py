import math
from types import SimpleNamespace

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy import integrate

from doubleris._validation import NumericalError
from doubleris.channel import (
    KAPPA_LOS,
    ChannelModel,
    ChannelParams,
    ChannelRealization,
    LinkSpec,
    PhaseConfig,
    UlaSpec,
    UpaSpec,
    aggregate,
    compose_rician,
    draw_nlos,
    draw_realization,
    los_matrix,
    psd_sqrt,
    scatter_correlation,
    ula_correlation,
    ula_response,
    upa_correlation,
    upa_response,
)
from doubleris.geometry import LINKS, build_scenario

from .conftest import cn, random_realization


# -- array responses ---------------------------------------------------------
def test_ula_broadside_is_all_ones():
    np.testing.assert_array_equal(ula_response(UlaSpec(4, 0.37), 0.0), np.ones(4))


def test_ula_endfire_half_wavelength():
    np.testing.assert_allclose(ula_response(UlaSpec(2, 0.5), np.pi / 2), [1, -1], atol=1e-15)


def test_ula_scalar_oracle():  # [DERIVED]
    got = ula_response(UlaSpec(3, 0.5), np.pi / 6)
    ref = [complex(math.cos(math.pi * m * 0.5), math.sin(math.pi * m * 0.5)) for m in range(3)]
    np.testing.assert_allclose(got, ref, atol=1e-15)


def test_upa_zero_angles_all_ones():
    np.testing.assert_allclose(upa_response(UpaSpec(3, 4), 0.0, 0.0), np.ones(12))


@given(st.integers(1, 6), st.floats(-3, 3), st.floats(-3, 3))
def test_upa_single_row_is_horizontal_ula(kh, theta, phi):
    np.testing.assert_allclose(
        upa_response(UpaSpec(1, kh, 0.5, 0.3), theta, phi), ula_response(UlaSpec(kh, 0.3), theta)
    )


def test_upa_closed_form_2x2():
    got = upa_response(UpaSpec(2, 2), np.pi / 2, np.pi / 2)
    np.testing.assert_allclose(got, [1, -1, 1, -1], atol=1e-15)


# -- LoS matrices ------------------------------------------------------------
@pytest.mark.parametrize("link", LINKS)
def test_los_matrix_rank_one_unit_modulus(link):
    lay = build_scenario(100.0, 200.0, 2.0)
    arrays = {"tx": UlaSpec(4), "rx": UlaSpec(3), "ris1": UpaSpec(2, 3), "ris2": UpaSpec(3, 2)}
    L = los_matrix(link, lay, arrays)
    assert np.linalg.matrix_rank(L) == 1
    np.testing.assert_allclose(np.abs(L), 1.0, atol=1e-14)
    assert L[0, 0] == pytest.approx(1.0)


def test_los_matrix_h1_shape():
    lay = build_scenario(100.0, 200.0, 2.0)
    arrays = {"tx": UlaSpec(16), "rx": UlaSpec(16), "ris1": UpaSpec(4, 4), "ris2": UpaSpec(2, 2)}
    assert los_matrix("H1", lay, arrays).shape == (16, 16)
    assert los_matrix("D", lay, arrays).shape == (4, 16)


# -- correlation ---------------------------------------------------------------
def test_ula_correlation_keyhole_all_ones():
    np.testing.assert_allclose(ula_correlation(5, 0.5, np.pi / 3, 1), np.ones((5, 5)))


def test_ula_correlation_scalar_oracle():  # [DERIVED]
    R = ula_correlation(2, 0.5, np.pi / 3, 3)
    ref = sum(complex(math.cos(math.pi * math.sin(-k * math.pi / 6)), math.sin(math.pi * math.sin(-k * math.pi / 6)))
              for k in (-1, 0, 1)) / 3
    assert R[1, 0] == pytest.approx(ref, abs=1e-15)
    assert R[0, 1] == pytest.approx(ref.conjugate(), abs=1e-15)


def test_ula_correlation_even_sc_uses_half_integer_k():
    # sc = 2 -> k in {-0.5, 0.5}, nu = -/+ psi/2
    psi = 1.0
    R = ula_correlation(2, 0.5, psi, 2)
    ref = 0.5 * sum(np.exp(1j * np.pi * np.sin(s * psi / 2)) for s in (-1, 1))
    assert R[1, 0] == pytest.approx(ref, abs=1e-15)


def test_upa_correlation_kronecker_and_reductions():
    spec = UpaSpec(2, 3, 0.4, 0.6)
    R = upa_correlation(spec, 0.8, 4)
    np.testing.assert_allclose(R, np.kron(ula_correlation(2, 0.4, 0.8, 4), ula_correlation(3, 0.6, 0.8, 4)))
    np.testing.assert_allclose(np.diag(R), 1.0)
    np.testing.assert_allclose(upa_correlation(UpaSpec(3, 3), 0.8, 1), np.ones((9, 9)))
    np.testing.assert_allclose(upa_correlation(UpaSpec(1, 4, 0.5, 0.5), 0.8, 5), ula_correlation(4, 0.5, 0.8, 5))


def test_scatter_correlation_examples():
    R = scatter_correlation(7, 0.5, np.pi / 3)
    assert np.trace(R).real == 7
    np.testing.assert_array_equal(scatter_correlation(1, 0.5, 1.0), [[1.0]])
    np.testing.assert_allclose(scatter_correlation(4, 0.5, 0.0), np.ones((4, 4)))


@given(st.integers(1, 8), st.floats(0.05, 2.0), st.floats(0.0, np.pi), st.integers(1, 40))
def test_correlation_hermitian_unit_diag_psd(n, d, psi, sc):
    R = ula_correlation(n, d, psi, sc)
    np.testing.assert_allclose(R, R.conj().T, atol=1e-14)
    np.testing.assert_array_equal(np.diag(R), np.ones(n))
    assert np.linalg.eigvalsh(R).min() >= -1e-9


@given(st.integers(2, 6), st.floats(0.0, np.pi))
def test_keyhole_rank_one(n, psi):
    assert np.linalg.matrix_rank(ula_correlation(n, 0.5, psi, 1)) == 1


@pytest.mark.parametrize("lag", [1, 2, 5])
def test_many_scatterers_approach_integral_limit(lag):
    psi, d = np.pi / 3, 0.5
    # nu spans [-psi/2, psi/2] uniformly as sc grows
    re = integrate.quad(lambda x: math.cos(2 * math.pi * d * lag * math.sin(x)), -psi / 2, psi / 2)[0] / psi
    im = integrate.quad(lambda x: math.sin(2 * math.pi * d * lag * math.sin(x)), -psi / 2, psi / 2)[0] / psi
    limit = complex(re, im)
    err_small = abs(ula_correlation(lag + 1, d, psi, 5)[lag, 0] - limit)
    err_big = abs(ula_correlation(lag + 1, d, psi, 10_000)[lag, 0] - limit)
    assert err_big < 1e-3
    assert err_big <= err_small


# -- psd_sqrt ------------------------------------------------------------------
def test_psd_sqrt_identity():
    np.testing.assert_allclose(psd_sqrt(np.eye(4)), np.eye(4), atol=1e-15)


def test_psd_sqrt_all_ones():
    n = 5
    np.testing.assert_allclose(psd_sqrt(np.ones((n, n))), np.ones((n, n)) / np.sqrt(n), atol=1e-12)


def test_psd_sqrt_reconstruction(rng):  # [DERIVED]
    A = cn(rng, 6, 6)
    R = A.conj().T @ A
    S = psd_sqrt(R)
    assert np.linalg.norm(S @ S - R) < 1e-8
    np.testing.assert_allclose(S, S.conj().T, atol=1e-12)


def test_psd_sqrt_errors():
    with pytest.raises(ValueError):
        psd_sqrt(np.array([[1.0, 2.0], [0.0, 1.0]]))
    with pytest.raises(NumericalError):
        psd_sqrt(np.diag([1.0, -1e-3]))
    # tiny negative eigenvalues are clamped
    S = psd_sqrt(np.diag([1.0, -1e-12]))
    np.testing.assert_allclose(S, np.diag([1.0, 0.0]))


# -- NLoS draws ----------------------------------------------------------------
def _identity_link(n1, n2, sc):
    # stub exposing what draw_nlos reads, with identity correlations
    return SimpleNamespace(
        shape=(n1, n2), n_scatterers=sc, _sqrt_factors=(np.eye(n1), np.eye(sc), np.eye(n2))
    )


def test_keyhole_draw_is_rank_one(rng):
    A = draw_nlos(_identity_link(4, 3, 1), rng)
    assert np.linalg.matrix_rank(A) == 1


def test_nlos_energy_and_mean():  # [DERIVED]
    n1, n2, n = 2, 3, 100_000
    link = _identity_link(n1, n2, 4)
    rng = np.random.default_rng(5)
    draws = np.array([draw_nlos(link, rng) for _ in range(n)])
    assert np.all(np.isfinite(draws))
    energy = np.mean(np.sum(np.abs(draws) ** 2, axis=(1, 2)))
    assert energy == pytest.approx(n1 * n2, rel=0.02)
    mean = draws.mean(axis=0)
    sd = draws.std(axis=0)
    assert np.all(np.abs(mean) < 3 * sd / np.sqrt(n) * np.sqrt(2))
    # vec(A) covariance is the identity for identity correlations
    vec = draws.reshape(n, -1)
    cov = vec.T @ vec.conj() / n
    np.testing.assert_allclose(np.diag(cov).real, 1.0, atol=0.03)


# -- Rician composition --------------------------------------------------------
def _link(kappa=0.0, gain=0.3):
    lay = build_scenario(100.0, 200.0, 2.0)
    return LinkSpec("H1", UpaSpec(2, 2), UlaSpec(3), lay["H1"], kappa=kappa, pathloss_gain=gain, n_scatterers=2)


def test_compose_rician_pure_nlos(rng):
    link = _link(0.0)
    nlos = cn(rng, 4, 3)
    np.testing.assert_array_equal(compose_rician(link, link.los, nlos), np.sqrt(0.3) * nlos)


def test_compose_rician_los_cap(rng):
    link = _link(KAPPA_LOS)
    nlos = cn(rng, 4, 3)
    got = compose_rician(link, link.los, nlos)
    assert np.linalg.norm(got - np.sqrt(0.3) * link.los) <= 1e-5 * np.linalg.norm(np.sqrt(0.3) * link.los)
    assert link.pure_los


def test_compose_rician_equal_weights(rng):
    link = _link(1.0, 1.0)
    nlos = cn(rng, 4, 3)
    np.testing.assert_allclose(compose_rician(link, link.los, nlos), (link.los + nlos) / np.sqrt(2))


def test_compose_rician_shape_mismatch():
    link = _link()
    with pytest.raises(ValueError):
        compose_rician(link, np.ones((3, 3)), np.ones((4, 3)))


@pytest.mark.parametrize("kw", [{"kappa": -1.0}, {"pathloss_gain": 0.0}, {"n_scatterers": 0}, {"row_spread": 4.0}])
def test_link_spec_invariants(kw):
    lay = build_scenario(100.0, 200.0, 2.0)
    with pytest.raises(ValueError):
        LinkSpec("H1", UpaSpec(2, 2), UlaSpec(3), lay["H1"], **kw)


# -- realizations ----------------------------------------------------------------
def _params(kappa=0.0, sc=3):
    return ChannelParams(nt=4, nr=3, ris1=UpaSpec(2, 2), ris2=UpaSpec(1, 3), kappa=kappa, n_scatterers=sc)


def test_draw_realization_same_seed_identical():
    lay = build_scenario(100.0, 200.0, 2.0)
    a = draw_realization(lay, _params(), np.random.default_rng(3))
    b = draw_realization(lay, _params(), np.random.default_rng(3))
    for k in LINKS:
        np.testing.assert_array_equal(getattr(a, k), getattr(b, k))


def test_draw_realization_pure_los():
    lay = build_scenario(100.0, 200.0, 2.0)
    model = ChannelModel(lay, _params(kappa=math.inf))
    r = draw_realization(lay, _params(kappa=math.inf), 0)
    for k in LINKS:
        link = model.links[k]
        np.testing.assert_allclose(getattr(r, k), np.sqrt(link.pathloss_gain) * link.los)
    assert model.deterministic


def test_draw_realization_dimensions():
    r = draw_realization(build_scenario(100.0, 200.0, 2.0), _params(), 1)
    assert r.H1.shape == (4, 4) and r.H2.shape == (3, 4)
    assert r.G1.shape == (3, 4) and r.G2.shape == (3, 3) and r.D.shape == (3, 4)
    assert r.dims == (4, 3, 4, 3)


def test_disabled_links_are_zero():
    lay = build_scenario(100.0, 200.0, 2.0)
    p = ChannelParams(nt=2, nr=2, ris1=UpaSpec(1, 2), ris2=UpaSpec(1, 2), disabled=("D", "H2"))
    r = ChannelModel(lay, p).draw(0)
    assert not r.D.any() and not r.H2.any() and r.H1.any()


def test_realization_rejects_bad_shapes(rng):
    r = random_realization(rng)
    with pytest.raises(ValueError):
        r.replace(D=np.ones((2, 2)))


# -- phases and aggregation ------------------------------------------------------
def test_phase_config_requires_unit_modulus():
    with pytest.raises(ValueError):
        PhaseConfig(np.array([1.0, 0.5]), np.array([1.0]))


def test_phase_matrices_conjugate():
    v1 = np.exp(1j * np.array([0.3, -1.0]))
    ph = PhaseConfig(v1, np.ones(1))
    np.testing.assert_allclose(ph.phi1, np.diag(np.exp(-1j * np.array([0.3, -1.0]))))


def test_aggregate_without_double_reflection(rng):
    r = random_realization(rng).replace(D=np.zeros((3, 2)))
    ph = PhaseConfig.random(2, 3, rng)
    O = aggregate(r, ph)
    np.testing.assert_allclose(O, r.G1 @ ph.phi1 @ r.H1 + r.G2 @ ph.phi2 @ r.H2, atol=1e-14)


def test_aggregate_hand_computation():
    one = np.ones((1, 1))
    r = ChannelRealization(one, one, one, one, one)
    np.testing.assert_allclose(aggregate(r, PhaseConfig.ones(1, 1)), [[3.0]])


@given(st.integers(0, 2**32 - 1))
def test_aggregate_triple_product_oracle(seed):  # [DERIVED]
    rng = np.random.default_rng(seed)
    r = random_realization(rng, 3, 4, 2, 5)
    ph = PhaseConfig.random(2, 5, rng)
    ref = r.G2 @ ph.phi2 @ r.D @ ph.phi1 @ r.H1 + r.G1 @ ph.phi1 @ r.H1 + r.G2 @ ph.phi2 @ r.H2
    np.testing.assert_allclose(aggregate(r, ph), ref, atol=1e-10)


@given(st.floats(-np.pi, np.pi))
def test_single_path_phase_offset_invariance(c):
    rng = np.random.default_rng(11)
    r = random_realization(rng).replace(D=np.zeros((3, 2)), G1=np.zeros((2, 2)))
    ph = PhaseConfig.random(2, 3, rng)
    rot = PhaseConfig(ph.v1 * np.exp(1j * c), ph.v2)
    a, b = aggregate(r, ph), aggregate(r, rot)
    assert np.vdot(a, a).real == pytest.approx(np.vdot(b, b).real, rel=1e-12)


def test_aggregate_length_mismatch(rng):
    with pytest.raises(ValueError):
        aggregate(random_realization(rng), PhaseConfig.ones(3, 3))


def test_aggregate_linear_in_each_link(rng):
    r = random_realization(rng)
    ph = PhaseConfig.random(2, 3, rng)
    G1b = cn(rng, 2, 2)
    lhs = aggregate(r.replace(G1=r.G1 + 2.0 * G1b), ph)
    rhs = aggregate(r, ph) + 2.0 * G1b @ ph.phi1 @ r.H1
    np.testing.assert_allclose(lhs, rhs, atol=1e-12)
