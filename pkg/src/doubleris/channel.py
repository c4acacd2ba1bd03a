"""Array responses, Kronecker correlation and double-scattering Rician links.

Every link ``A`` (``N1 x N2``, rows at the receiving end) is drawn as::

    A = sqrt(chi) * (sqrt(k/(k+1)) * A_los + sqrt(1/(k+1)) * A_nlos)
    A_nlos = R_row^(1/2) Q S^(1/2) P R_col^(1/2) / sqrt(SC)

with ``Q`` (N1 x SC) and ``P`` (SC x N2) i.i.d. CN(0, 1). The two RIS
phase vectors enter the aggregated channel through ``diag(conj(v))``.
"""

from dataclasses import dataclass, field
from functools import cached_property
from types import MappingProxyType

import numpy as np

from ._validation import (
    NumericalError,
    as_rng,
    check_hermitian,
    check_int,
    check_matrix,
    check_positive,
    check_unit_modulus,
)
from .geometry import LINKS, LinkGeometry, ScenarioLayout, pathloss_linear

DEFAULT_SPREAD = np.pi / 3
HALF_WAVELENGTH = 0.5
# Rician factors at or above this are treated as pure line of sight
KAPPA_LOS = 1e12


# --------------------------------------------------------------------------
# Array specifications and responses
# --------------------------------------------------------------------------
@dataclass(frozen=True)
class UlaSpec:
    n_elements: int
    spacing_over_lambda: float = HALF_WAVELENGTH

    def __post_init__(self):
        check_int(self.n_elements, "n_elements")
        check_positive(self.spacing_over_lambda, "spacing_over_lambda")

    @property
    def size(self):
        return self.n_elements


@dataclass(frozen=True)
class UpaSpec:
    kv: int
    kh: int
    dv_over_lambda: float = HALF_WAVELENGTH
    dh_over_lambda: float = HALF_WAVELENGTH

    def __post_init__(self):
        check_int(self.kv, "kv")
        check_int(self.kh, "kh")
        check_positive(self.dv_over_lambda, "dv_over_lambda")
        check_positive(self.dh_over_lambda, "dh_over_lambda")

    @property
    def size(self):
        return self.kv * self.kh


def _steering(n, spacing, sin_term):
    return np.exp(2j * np.pi * spacing * sin_term * np.arange(n))


def ula_response(spec, theta):
    """Entry m is ``exp(j 2 pi m d sin(theta))``."""
    return _steering(spec.n_elements, spec.spacing_over_lambda, np.sin(theta))


def upa_response(spec, theta, phi):
    """Kronecker product of the vertical and horizontal axis responses."""
    a_v = _steering(spec.kv, spec.dv_over_lambda, np.cos(theta) * np.sin(phi))
    a_h = _steering(spec.kh, spec.dh_over_lambda, np.sin(theta))
    return np.kron(a_v, a_h)


def array_response(spec, theta, phi=0.0):
    if isinstance(spec, UpaSpec):
        return upa_response(spec, theta, phi)
    return ula_response(spec, theta)


# --------------------------------------------------------------------------
# Correlation matrices
# --------------------------------------------------------------------------
def _scatter_angles(spread, sc):
    # k runs over sc unit-spaced values centred on 0; sc = 1 keeps only k = 0
    if sc == 1:
        return np.zeros(1)
    k = np.arange(sc) - 0.5 * (sc - 1)
    return k * spread / (1 - sc)


def ula_correlation(n, spacing_over_lambda, spread, sc):
    """Finite-scatterer correlation of an ``n``-element uniform linear array.

    ``R[m, l] = mean_k exp(j 2 pi d (m - l) sin(nu_k))`` with
    ``nu_k = k * spread / (1 - sc)``. The diagonal is exactly one, and for
    ``sc = 1`` the matrix is all ones (keyhole).
    """
    n = check_int(n, "n")
    sc = check_int(sc, "sc")
    nu = _scatter_angles(spread, sc)
    lag = np.subtract.outer(np.arange(n), np.arange(n))
    phase = 2j * np.pi * spacing_over_lambda * lag[..., None] * np.sin(nu)
    R = np.exp(phase).mean(axis=-1)
    np.fill_diagonal(R, 1.0)
    return R


def upa_correlation(spec, spread, sc):
    R_v = ula_correlation(spec.kv, spec.dv_over_lambda, spread, sc)
    R_h = ula_correlation(spec.kh, spec.dh_over_lambda, spread, sc)
    return np.kron(R_v, R_h)


def scatter_correlation(sc, d_s_over_lambda, spread):
    return ula_correlation(sc, d_s_over_lambda, spread, sc)


def array_correlation(spec, spread, sc):
    if isinstance(spec, UpaSpec):
        return upa_correlation(spec, spread, sc)
    return ula_correlation(spec.n_elements, spec.spacing_over_lambda, spread, sc)


def psd_sqrt(R, neg_tol=1e-9):
    """Principal square root of a Hermitian PSD matrix.

    Eigenvalues in ``[-neg_tol, 0)`` are clamped to zero; anything more
    negative raises :class:`NumericalError`.
    """
    R = check_hermitian(R, "R")
    R = 0.5 * (R + R.conj().T)
    w, U = np.linalg.eigh(R)
    if w.min() < -neg_tol:
        raise NumericalError(f"matrix is not PSD: min eigenvalue {w.min():.3e}")
    w = np.clip(w, 0.0, None)
    S = (U * np.sqrt(w)) @ U.conj().T
    return 0.5 * (S + S.conj().T)


# --------------------------------------------------------------------------
# Links
# --------------------------------------------------------------------------
def rician_weights(kappa):
    """(LoS power weight, NLoS power weight); ``kappa >= KAPPA_LOS`` is pure LoS."""
    if kappa >= KAPPA_LOS:
        return 1.0, 0.0
    return kappa / (kappa + 1.0), 1.0 / (kappa + 1.0)


@dataclass(frozen=True)
class LinkSpec:
    """Statistical description of one link ``rows x cols``.

    ``row_array`` is the receiving end of the link, ``col_array`` the
    transmitting end. ``row_spread`` / ``col_spread`` are the angular
    spreads seen by each end, ``scatter_spread`` and ``scatter_spacing``
    parametrise the scatterer correlation.
    """

    name: str
    row_array: object
    col_array: object
    geometry: LinkGeometry
    kappa: float = 0.0
    pathloss_gain: float = 1.0
    n_scatterers: int = 1
    row_spread: float = DEFAULT_SPREAD
    col_spread: float = DEFAULT_SPREAD
    scatter_spread: float = DEFAULT_SPREAD
    scatter_spacing: float = HALF_WAVELENGTH
    enabled: bool = True

    def __post_init__(self):
        if not self.kappa >= 0:
            raise ValueError(f"{self.name}: Rician factor must be >= 0")
        if not self.pathloss_gain > 0:
            raise ValueError(f"{self.name}: pathloss gain must be > 0")
        check_int(self.n_scatterers, f"{self.name}.n_scatterers")
        for attr in ("row_spread", "col_spread", "scatter_spread"):
            if not 0.0 <= getattr(self, attr) <= np.pi:
                raise ValueError(f"{self.name}.{attr} must lie in [0, pi]")

    @property
    def shape(self):
        return self.row_array.size, self.col_array.size

    @property
    def pure_los(self):
        return bool(self.kappa >= KAPPA_LOS)

    @cached_property
    def los(self):
        g = self.geometry
        a_row = array_response(self.row_array, g.aoa_azimuth, g.aoa_elevation)
        a_col = array_response(self.col_array, g.aod_azimuth, g.aod_elevation)
        return np.outer(a_row, a_col)

    @cached_property
    def row_corr(self):
        return array_correlation(self.row_array, self.row_spread, self.n_scatterers)

    @cached_property
    def col_corr(self):
        return array_correlation(self.col_array, self.col_spread, self.n_scatterers)

    @cached_property
    def scatter_corr(self):
        return scatter_correlation(self.n_scatterers, self.scatter_spacing, self.scatter_spread)

    @cached_property
    def _sqrt_factors(self):
        return psd_sqrt(self.row_corr), psd_sqrt(self.scatter_corr), psd_sqrt(self.col_corr)

    @property
    def mean(self):
        """E[A]."""
        if not self.enabled:
            return np.zeros(self.shape, dtype=complex)
        w_los, _ = rician_weights(self.kappa)
        return np.sqrt(self.pathloss_gain * w_los) * self.los


def complex_normal(rng, shape):
    """i.i.d. CN(0, 1) entries."""
    return (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) / np.sqrt(2.0)


def draw_nlos(link, rng):
    """One realization of the unit-power double-scattering component."""
    rng = as_rng(rng)
    n1, n2 = link.shape
    sc = link.n_scatterers
    row_sqrt, s_sqrt, col_sqrt = link._sqrt_factors
    Q = complex_normal(rng, (n1, sc))
    P = complex_normal(rng, (sc, n2))
    return (row_sqrt @ Q) @ (s_sqrt @ P) @ col_sqrt / np.sqrt(sc)


def compose_rician(link, los, nlos):
    los = check_matrix(los, "los", link.shape)
    nlos = check_matrix(nlos, "nlos", link.shape)
    w_los, w_nlos = rician_weights(link.kappa)
    return np.sqrt(link.pathloss_gain) * (np.sqrt(w_los) * los + np.sqrt(w_nlos) * nlos)


def draw_link(link, rng):
    if not link.enabled:
        return np.zeros(link.shape, dtype=complex)
    if link.pure_los:
        return np.sqrt(link.pathloss_gain) * link.los
    return compose_rician(link, link.los, draw_nlos(link, rng))


def los_matrix(link_kind, layout, arrays):
    """Rank-one LoS matrix of a link from the layout angles.

    ``arrays`` maps ``tx``, ``rx``, ``ris1``, ``ris2`` to array specs.
    """
    rows, cols = _LINK_ENDS[link_kind]
    g = layout[link_kind]
    a_row = array_response(arrays[rows], g.aoa_azimuth, g.aoa_elevation)
    a_col = array_response(arrays[cols], g.aod_azimuth, g.aod_elevation)
    return np.outer(a_row, a_col)


_LINK_ENDS = MappingProxyType({
    "H1": ("ris1", "tx"),
    "H2": ("ris2", "tx"),
    "G1": ("rx", "ris1"),
    "G2": ("rx", "ris2"),
    "D": ("ris2", "ris1"),
})

# side of each end: which spread applies
_END_SPREAD = MappingProxyType({"tx": "spread_tx", "rx": "spread_rx", "ris1": "spread_ris", "ris2": "spread_ris"})


# --------------------------------------------------------------------------
# Realizations and phases
# --------------------------------------------------------------------------
@dataclass(frozen=True)
class ChannelRealization:
    H1: np.ndarray
    H2: np.ndarray
    G1: np.ndarray
    G2: np.ndarray
    D: np.ndarray

    def __post_init__(self):
        k1, nt = np.shape(self.H1)
        k2 = np.shape(self.H2)[0]
        nr = np.shape(self.G1)[0]
        expected = {"H1": (k1, nt), "H2": (k2, nt), "G1": (nr, k1), "G2": (nr, k2), "D": (k2, k1)}
        for name, shape in expected.items():
            object.__setattr__(self, name, check_matrix(getattr(self, name), name, shape))

    @property
    def dims(self):
        """(Nt, Nr, K1, K2)."""
        return self.H1.shape[1], self.G1.shape[0], self.H1.shape[0], self.H2.shape[0]

    def replace(self, **links):
        return ChannelRealization(**{**self.as_dict(), **links})

    def as_dict(self):
        return {name: getattr(self, name) for name in LINKS}


@dataclass(frozen=True)
class PhaseConfig:
    """Unit-modulus RIS vectors; the reflection matrices are ``diag(conj(v))``."""

    v1: np.ndarray
    v2: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "v1", check_unit_modulus(self.v1, "v1", atol=1e-10))
        object.__setattr__(self, "v2", check_unit_modulus(self.v2, "v2", atol=1e-10))

    @classmethod
    def ones(cls, k1, k2):
        return cls(np.ones(k1, dtype=complex), np.ones(k2, dtype=complex))

    @classmethod
    def random(cls, k1, k2, rng):
        rng = as_rng(rng)
        return cls(np.exp(2j * np.pi * rng.random(k1)), np.exp(2j * np.pi * rng.random(k2)))

    @property
    def phi1(self):
        return np.diag(self.v1.conj())

    @property
    def phi2(self):
        return np.diag(self.v2.conj())


def aggregate(realization, phases):
    """``O = G2 Phi2 D Phi1 H1 + G1 Phi1 H1 + G2 Phi2 H2``."""
    r = realization
    _, _, k1, k2 = r.dims
    if phases.v1.size != k1 or phases.v2.size != k2:
        raise ValueError(
            f"phase lengths ({phases.v1.size}, {phases.v2.size}) do not match K1={k1}, K2={k2}"
        )
    phi1_h1 = phases.v1.conj()[:, None] * r.H1
    g2_phi2 = r.G2 * phases.v2.conj()[None, :]
    return g2_phi2 @ (r.D @ phi1_h1 + r.H2) + r.G1 @ phi1_h1


# --------------------------------------------------------------------------
# Whole-system channel model
# --------------------------------------------------------------------------
def _per_link(value, name):
    if isinstance(value, dict):
        missing = set(LINKS) - set(value)
        if missing:
            raise ValueError(f"{name} is missing links {sorted(missing)}")
        return {k: value[k] for k in LINKS}
    return {k: value for k in LINKS}


@dataclass(frozen=True)
class ChannelParams:
    """System dimensions and per-link channel statistics.

    Scalars apply to every link; dicts keyed by link name set them
    individually. ``pathloss`` overrides the distance-based gains, and
    ``disabled`` lists links forced to zero (e.g. ``("D",)``).
    """

    nt: int
    nr: int
    ris1: UpaSpec
    ris2: UpaSpec
    antenna_spacing: float = HALF_WAVELENGTH
    kappa: object = 0.0
    n_scatterers: object = 1
    spread_tx: float = DEFAULT_SPREAD
    spread_rx: float = DEFAULT_SPREAD
    spread_ris: float = DEFAULT_SPREAD
    spread_scatter: float = DEFAULT_SPREAD
    scatter_spacing: float = HALF_WAVELENGTH
    pathloss: object = None
    disabled: tuple = field(default_factory=tuple)

    @property
    def arrays(self):
        return {
            "tx": UlaSpec(self.nt, self.antenna_spacing),
            "rx": UlaSpec(self.nr, self.antenna_spacing),
            "ris1": self.ris1,
            "ris2": self.ris2,
        }


class ChannelModel:
    """Prepared links for one layout; immutable after construction."""

    def __init__(self, layout, params):
        if not isinstance(layout, ScenarioLayout):
            raise TypeError("layout must be a ScenarioLayout")
        self.layout = layout
        self.params = params
        arrays = params.arrays
        kappa = _per_link(params.kappa, "kappa")
        sc = _per_link(params.n_scatterers, "n_scatterers")
        if params.pathloss is None:
            gains = {k: float(pathloss_linear(layout.distance(k))) for k in LINKS}
        else:
            gains = _per_link(params.pathloss, "pathloss")
        unknown = set(params.disabled) - set(LINKS)
        if unknown:
            raise ValueError(f"unknown links in disabled: {sorted(unknown)}")
        links = {}
        for name in LINKS:
            rows, cols = _LINK_ENDS[name]
            links[name] = LinkSpec(
                name=name,
                row_array=arrays[rows],
                col_array=arrays[cols],
                geometry=layout[name],
                kappa=float(kappa[name]),
                pathloss_gain=float(gains[name]),
                n_scatterers=int(sc[name]),
                row_spread=getattr(params, _END_SPREAD[rows]),
                col_spread=getattr(params, _END_SPREAD[cols]),
                scatter_spread=params.spread_scatter,
                scatter_spacing=params.scatter_spacing,
                enabled=name not in params.disabled,
            )
        self.links = links

    @property
    def dims(self):
        return self.params.nt, self.params.nr, self.params.ris1.size, self.params.ris2.size

    @property
    def deterministic(self):
        return all(l.pure_los or not l.enabled for l in self.links.values())

    def draw(self, rng):
        rng = as_rng(rng)
        return ChannelRealization(**{name: draw_link(self.links[name], rng) for name in LINKS})

    def mean_realization(self):
        return ChannelRealization(**{name: self.links[name].mean for name in LINKS})


def draw_realization(layout, params, rng):
    """Draw the five links of one coherence block.

    Builds a throwaway :class:`ChannelModel`; loops over many trials should
    construct the model once and call :meth:`ChannelModel.draw`.
    """
    return ChannelModel(layout, params).draw(rng)
