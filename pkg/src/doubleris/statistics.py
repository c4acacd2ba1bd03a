"""Second-order statistics of the aggregated channel and their scaling bounds.

Correlation naming follows the matrix layout of each link: ``row_corr`` is
the correlation at the receiving end (rows), ``col_corr`` at the
transmitting end (columns). For ``A`` with ``E[A U A^H]`` the NLoS part
contributes ``tr(col_corr U) row_corr``.
"""

from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from functools import partial

import numpy as np

from ._seeding import trial_rng
from .channel import ChannelModel, aggregate, rician_weights
from .geometry import LINKS

CROSS_TERM_VARIANTS = ("derived", "printed", "conjugate")


@dataclass(frozen=True)
class StatisticalInputs:
    """Everything the closed-form covariance needs, with pathloss and
    Rician factors per link. Disabled links carry zero gain."""

    los: dict
    row_corr: dict
    col_corr: dict
    gain: dict
    kappa: dict
    nt: int
    nr: int
    k1: int
    k2: int
    v1: np.ndarray
    v2: np.ndarray

    @classmethod
    def from_model(cls, model, phases):
        nt, nr, k1, k2 = model.dims
        links = model.links
        return cls(
            los={k: links[k].los for k in LINKS},
            row_corr={k: links[k].row_corr for k in LINKS},
            col_corr={k: links[k].col_corr for k in LINKS},
            gain={k: links[k].pathloss_gain if links[k].enabled else 0.0 for k in LINKS},
            kappa={k: links[k].kappa for k in LINKS},
            nt=nt, nr=nr, k1=k1, k2=k2,
            v1=phases.v1, v2=phases.v2,
        )

    def weights(self, link):
        return rician_weights(self.kappa[link])


@dataclass(frozen=True)
class PowerGainReport:
    closed_form_trace: float
    upper_bound: float
    mc_mean: float
    mc_stderr: float
    n_trials: int


def _hermitian_part2(M):
    # 2 Re{M} for a matrix-valued cross term E[X Y^H] + E[Y X^H]
    return M + M.conj().T


def _spectral_norm(A):
    return float(np.linalg.norm(A, 2))


def _herm_norm(R):
    return float(np.max(np.abs(np.linalg.eigvalsh(0.5 * (R + R.conj().T)))))


def closed_form_covariance(inputs, cross_term="derived"):
    """``E[O O^H]`` for fixed phases, summed term by term.

    Parameters
    ----------
    inputs : StatisticalInputs
    cross_term : {"derived", "printed", "conjugate"}
        Form of the cross term between the double-reflection path and the
        RIS-2 single path. ``"printed"`` keeps ``Phi2`` (not ``Phi2^H``) on
        the right and drops the NLoS part of ``G2``; ``"conjugate"`` only
        fixes the ``Phi2^H``; ``"derived"`` is the exact expectation.

    Returns
    -------
    ndarray, shape (Nr, Nr)
        Hermitian covariance.
    """
    if cross_term not in CROSS_TERM_VARIANTS:
        raise ValueError(f"cross_term must be one of {CROSS_TERM_VARIANTS}")
    s = inputs
    _check_dims(s)
    a1, a2 = s.gain["H1"], s.gain["H2"]
    b1, b2 = s.gain["G1"], s.gain["G2"]
    g = s.gain["D"]
    eL1, eN1 = s.weights("H1")
    eL2, eN2 = s.weights("H2")
    dL1, dN1 = s.weights("G1")
    dL2, dN2 = s.weights("G2")
    mL, mN = s.weights("D")

    H1b, H2b, G1b, G2b, Db = (s.los[k] for k in LINKS)
    Rr = s.row_corr
    Rc = s.col_corr
    c1 = s.v1.conj()
    c2 = s.v2.conj()

    def rot1(X):
        return c1[:, None] * X * c1.conj()[None, :]

    def rot2(X):
        return c2[:, None] * X * c2.conj()[None, :]

    def tr(A, B):
        return np.sum(A * B.T)

    X1 = rot1(eL1 * H1b @ H1b.conj().T + eN1 * s.nt * Rr["H1"])
    X2 = rot2(eL2 * H2b @ H2b.conj().T + eN2 * s.nt * Rr["H2"])

    Y_dd = rot2(Db @ X1 @ Db.conj().T)
    G2phi2 = G2b * c2[None, :]
    tr_D_X1 = tr(Rc["D"], X1)

    cov = a1 * b2 * g * (
        mL * dL2 * G2b @ Y_dd @ G2b.conj().T
        + mL * dN2 * tr(Rc["G2"], Y_dd) * Rr["G2"]
        + mN * dL2 * tr_D_X1 * G2phi2 @ Rr["D"] @ G2phi2.conj().T
        + mN * dN2 * tr_D_X1 * tr(Rc["G2"], rot2(Rr["D"])) * Rr["G2"]
    )

    coef5 = 2 * np.sqrt(a1**2 * b1 * b2 * g) * np.sqrt(dL1 * dL2 * mL)
    cov = cov + 0.5 * coef5 * _hermitian_part2(G2phi2 @ Db @ X1 @ G1b.conj().T)

    Z = Db @ (c1[:, None] * H1b) @ H2b.conj().T
    coef6 = 2 * np.sqrt(a1 * a2 * b2**2 * g) * np.sqrt(eL1 * eL2 * mL)
    if cross_term == "printed":
        M6 = G2phi2 @ Z @ (c2[:, None] * G2b.conj().T)
    elif cross_term == "conjugate":
        M6 = G2b @ rot2(Z) @ G2b.conj().T
    else:
        Y6 = rot2(Z)
        M6 = dL2 * G2b @ Y6 @ G2b.conj().T + dN2 * tr(Rc["G2"], Y6) * Rr["G2"]
    cov = cov + 0.5 * coef6 * _hermitian_part2(M6)

    cov = cov + a1 * b1 * (dL1 * G1b @ X1 @ G1b.conj().T + dN1 * tr(Rc["G1"], X1) * Rr["G1"])

    coef8 = 2 * np.sqrt(a1 * a2 * b1 * b2) * np.sqrt(eL1 * eL2 * dL1 * dL2)
    M8 = (G1b * c1[None, :]) @ H1b @ H2b.conj().T @ G2phi2.conj().T
    cov = cov + 0.5 * coef8 * _hermitian_part2(M8)

    cov = cov + a2 * b2 * (dL2 * G2b @ X2 @ G2b.conj().T + dN2 * tr(Rc["G2"], X2) * Rr["G2"])
    return 0.5 * (cov + cov.conj().T)


def expected_power_gain(inputs, cross_term="derived"):
    """``E[tr(O O^H)]``."""
    t = np.trace(closed_form_covariance(inputs, cross_term))
    return max(float(t.real), 0.0)


def upper_bound_general(inputs):
    """Nine-term upper bound on ``E[tr(O O^H)]`` valid for any Rician factors.

    The spectral norms are taken of the receiving-side RIS correlations;
    the one exact term (LoS single-path cross product) is evaluated at the
    given phases.
    """
    s = inputs
    _check_dims(s)
    nt, nr, k1, k2 = s.nt, s.nr, s.k1, s.k2
    a1, a2 = s.gain["H1"], s.gain["H2"]
    b1, b2 = s.gain["G1"], s.gain["G2"]
    g = s.gain["D"]
    eL1, eN1 = s.weights("H1")
    eL2, eN2 = s.weights("H2")
    dL1, dN1 = s.weights("G1")
    dL2, dN2 = s.weights("G2")
    mL, mN = s.weights("D")
    nG1 = _herm_norm(s.col_corr["G1"])
    nG2 = _herm_norm(s.col_corr["G2"])
    nD = _herm_norm(s.col_corr["D"])
    H1b, H2b, G1b, G2b, Db = (s.los[k] for k in LINKS)
    c1 = s.v1.conj()
    c2 = s.v2.conj()

    dbl = a1 * b2 * g
    terms = [
        dbl * mL * dL2 * nt * nr * k1**2 * k2**2,
        dbl * mL * dN2 * nt * nr * k1 * k2 * k1 * nG2,
        dbl * mN * dL2 * nt * nr * k1 * k2 * k2 * nD,
        dbl * mN * dN2 * nt * nr * k1 * k2 * nG2 * nD,
        2 * np.sqrt(a1**2 * b1 * b2 * g) * np.sqrt(dL1 * dL2 * mL) * nt * k1
        * _spectral_norm(G1b.conj().T @ (G2b * c2[None, :]) @ Db),
        2 * np.sqrt(a1 * a2 * b2**2 * g) * np.sqrt(eL1 * eL2 * mL) * nr * k2
        * _spectral_norm(Db @ (c1[:, None] * H1b) @ H2b.conj().T),
        a1 * b1 * (dL1 * nt * nr * k1**2 + dN1 * nt * nr * k1 * nG1),
        2 * np.sqrt(a1 * a2 * b1 * b2) * np.sqrt(eL1 * eL2 * dL1 * dL2)
        * np.trace((G1b * c1[None, :]) @ H1b @ H2b.conj().T @ (G2b * c2[None, :]).conj().T).real,
        a2 * b2 * (dL2 * nt * nr * k2**2 + dN2 * nt * nr * k2 * nG2),
    ]
    return float(sum(terms))


def upper_bound_nlos(inputs):
    """Bound for pure NLoS links (all Rician factors zero)."""
    s = inputs
    if any(s.kappa[k] != 0 for k in LINKS):
        raise ValueError("upper_bound_nlos requires every Rician factor to be 0")
    nt, nr, k1, k2 = s.nt, s.nr, s.k1, s.k2
    nG1 = _herm_norm(s.col_corr["G1"])
    nG2 = _herm_norm(s.col_corr["G2"])
    nD = _herm_norm(s.col_corr["D"])
    a1, a2 = s.gain["H1"], s.gain["H2"]
    b1, b2 = s.gain["G1"], s.gain["G2"]
    g = s.gain["D"]
    return float(
        a1 * b2 * g * nt * nr * k1 * k2 * nG2 * nD
        + a1 * b1 * nt * nr * k1 * nG1
        + a2 * b2 * nt * nr * k2 * nG2
    )


def dominant_los_term(inputs):
    """Leading double-reflection LoS term, ``~ Nt Nr K1^2 K2^2``."""
    s = inputs
    mL, _ = s.weights("D")
    dL2, _ = s.weights("G2")
    return float(s.gain["H1"] * s.gain["G2"] * s.gain["D"] * mL * dL2 * s.nt * s.nr * s.k1**2 * s.k2**2)


def _check_dims(s):
    shapes = {
        "H1": (s.k1, s.nt), "H2": (s.k2, s.nt), "G1": (s.nr, s.k1),
        "G2": (s.nr, s.k2), "D": (s.k2, s.k1),
    }
    for k, shape in shapes.items():
        if s.los[k].shape != shape:
            raise ValueError(f"LoS matrix {k} has shape {s.los[k].shape}, expected {shape}")
        if s.row_corr[k].shape != (shape[0],) * 2 or s.col_corr[k].shape != (shape[1],) * 2:
            raise ValueError(f"correlation matrices of {k} do not match shape {shape}")
    if s.v1.size != s.k1 or s.v2.size != s.k2:
        raise ValueError("phase vector lengths do not match K1, K2")


def _power_gain_chunk(model, phases, seed, indices):
    out = np.empty(len(indices))
    for j, i in enumerate(indices):
        O = aggregate(model.draw(trial_rng(seed, i)), phases)
        out[j] = np.vdot(O, O).real
    return out


def sample_power_gains(model, phases, n_trials, seed, workers=1):
    """tr(O O^H) for trials ``0..n_trials-1``, in trial order."""
    if n_trials < 1:
        raise ValueError("n_trials must be >= 1")
    indices = np.arange(n_trials)
    if workers <= 1:
        return _power_gain_chunk(model, phases, seed, indices)
    chunks = np.array_split(indices, workers)
    with ProcessPoolExecutor(max_workers=workers) as pool:
        parts = pool.map(partial(_power_gain_chunk, model, phases, seed), chunks)
        return np.concatenate(list(parts))


def monte_carlo_power_gain(layout, params, phases, n_trials, seed, workers=1, cross_term="derived"):
    """Sample mean of ``tr(O O^H)`` next to its closed form and bound.

    Results depend only on ``seed``, never on ``workers``.
    """
    model = ChannelModel(layout, params)
    samples = sample_power_gains(model, phases, n_trials, seed, workers)
    inputs = StatisticalInputs.from_model(model, phases)
    stderr = float(samples.std(ddof=1) / np.sqrt(n_trials)) if n_trials > 1 else 0.0
    if model.deterministic:
        stderr = 0.0
    return PowerGainReport(
        closed_form_trace=expected_power_gain(inputs, cross_term),
        upper_bound=upper_bound_general(inputs),
        mc_mean=float(np.sum(samples) / n_trials),
        mc_stderr=stderr,
        n_trials=int(n_trials),
    )
