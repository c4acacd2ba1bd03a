"""Symbol error rate of the SVD-decoupled link: union bound and Monte Carlo.

The transmit model is ``y = sqrt(P / Ns) W O F s + W n`` with unit-energy
square QAM symbols and ``n ~ CN(0, sigma2 I)``. Since ``W`` has orthonormal
rows the combined noise stays ``CN(0, sigma2 I)`` per stream.
"""

from dataclasses import dataclass
from itertools import product

import numpy as np
from scipy.special import erfc

from ._seeding import trial_rng
from ._validation import DomainError, check_int, check_positive

SUPPORTED_ORDERS = (4, 16, 64)
JOINT_CAP = 4096


def q_function(x):
    """Gaussian tail ``Q(x) = 0.5 erfc(x / sqrt(2))``."""
    return 0.5 * erfc(np.asarray(x, dtype=float) / np.sqrt(2.0))


@dataclass(frozen=True)
class Constellation:
    order: int
    points: np.ndarray
    labels: np.ndarray

    @property
    def side(self):
        return int(round(np.sqrt(self.order)))

    @property
    def min_distance(self):
        d = np.abs(self.points[:, None] - self.points[None, :])
        return float(d[d > 0].min())


def _gray(n):
    return n ^ (n >> 1)


def qam_constellation(M):
    """Gray-labelled square M-QAM with unit average energy.

    Point ``i`` carries label ``labels[i]``; in-phase and quadrature levels
    are ``{-(L-1), ..., L-1}`` in steps of 2, scaled by ``sqrt(2 (M-1) / 3)``.
    """
    if M not in SUPPORTED_ORDERS:
        raise DomainError(f"unsupported QAM order {M}; choose one of {SUPPORTED_ORDERS}")
    L = int(round(np.sqrt(M)))
    levels = np.arange(-(L - 1), L, 2, dtype=float)
    bits = int(np.log2(L))
    i, q = np.meshgrid(np.arange(L), np.arange(L), indexing="ij")
    i, q = i.ravel(), q.ravel()
    points = (levels[i] + 1j * levels[q]) / np.sqrt(2.0 * (M - 1) / 3.0)
    labels = (_gray(i) << bits) | _gray(q)
    return Constellation(M, points, labels)


def pairwise_distance_sq(W, O, F, si, sj):
    """``||W O F (s_i - s_j)||^2``."""
    diff = np.asarray(si, dtype=complex) - np.asarray(sj, dtype=complex)
    r = W @ (O @ (F @ diff))
    return float(np.vdot(r, r).real)


def _active_streams(design, O):
    G = design.W @ O @ design.F
    return G, np.flatnonzero(design.powers > 0)


def union_bound_ser(design, O, constellation, Ns, P, sigma2, mode="per_stream", cap=JOINT_CAP):
    """Union bound on the symbol error probability.

    ``mode="joint"`` evaluates the pairwise sum over all ``M^Ns`` candidate
    symbol vectors (vector error probability) and refuses sets larger than
    ``cap``. ``mode="per_stream"`` applies the same bound to each decoupled
    stream and averages over streams that carry power.
    """
    Ns = check_int(Ns, "Ns")
    P = check_positive(P, "P")
    sigma2 = check_positive(sigma2, "sigma2")
    pts = constellation.points
    G, active = _active_streams(design, O)
    scale = P / Ns
    if mode == "joint":
        n_cand = constellation.order**Ns
        if n_cand > cap:
            raise DomainError(
                f"{n_cand} candidate vectors exceed the cap of {cap}; use mode='per_stream'"
            )
        S = np.array(list(product(pts, repeat=Ns))).T  # Ns x n_cand
        Y = G @ S
        d2 = scale * np.sum(np.abs(Y[:, :, None] - Y[:, None, :]) ** 2, axis=0)
        off = ~np.eye(n_cand, dtype=bool)
        return float(q_function(np.sqrt(d2[off] / (2.0 * sigma2))).sum() / n_cand)
    if mode != "per_stream":
        raise ValueError("mode must be 'per_stream' or 'joint'")
    if active.size == 0:
        return float((constellation.order - 1) / 2)
    delta2 = np.abs(pts[:, None] - pts[None, :]) ** 2
    off = ~np.eye(pts.size, dtype=bool)
    per = []
    for i in active:
        g2 = scale * abs(G[i, i]) ** 2
        per.append(q_function(np.sqrt(g2 * delta2[off] / (2.0 * sigma2))).sum() / pts.size)
    return float(np.mean(per))


def qam_ser_exact(snr, M):
    """Exact square-QAM SER at symbol SNR ``Es/N0``."""
    root = np.sqrt(M)
    q = q_function(np.sqrt(3.0 * np.asarray(snr, dtype=float) / (M - 1)))
    a = 2.0 * (1.0 - 1.0 / root) * q
    return 2.0 * a - a**2


def stream_snr(lambdas, powers, Ns, P, sigma2):
    """Per-stream SNR ``P p_i lambda_i^2 / (sigma2 Ns)``."""
    powers = np.asarray(powers, dtype=float)
    lam = np.asarray(lambdas, dtype=float)[: powers.size]
    return P * powers * lam**2 / (sigma2 * Ns)


def per_stream_ser(lambdas, powers, constellation, Ns, P, sigma2):
    """Exact SER averaged over streams with non-zero power."""
    snr = stream_snr(lambdas, powers, Ns, P, sigma2)
    active = np.asarray(powers) > 0
    if not np.any(active):
        return 1.0 - 1.0 / constellation.order
    return float(np.mean(qam_ser_exact(snr[active], constellation.order)))


@dataclass(frozen=True)
class SerReport:
    union_bound: float
    exact_ser: float
    mc_ser: float
    mc_stderr: float
    snr_db: float
    n_symbols: int


def _detect_batch(G_diag, active, pts, scale, sigma2, n, rng):
    ns = G_diag.size
    idx = rng.integers(0, pts.size, size=(ns, n))
    noise = (rng.standard_normal((ns, n)) + 1j * rng.standard_normal((ns, n))) * np.sqrt(sigma2 / 2)
    z = np.sqrt(scale) * G_diag[:, None] * pts[idx] + noise
    errors = 0
    for i in active:
        eq = z[i] / (np.sqrt(scale) * G_diag[i])
        hat = np.argmin(np.abs(eq[:, None] - pts[None, :]), axis=1)
        errors += int(np.count_nonzero(hat != idx[i]))
    return errors


def mc_detect(design, O, constellation, n_symbols, seed, P, sigma2, batch_size=20000):
    """Monte Carlo SER of per-stream nearest-neighbour detection.

    Streams are decoupled by the SVD design, so each stream is equalized by
    its diagonal gain and sliced independently. Batches draw from
    ``(seed, batch_index)`` streams, which fixes the result for a given seed
    regardless of how batches are scheduled.
    """
    n_symbols = check_int(n_symbols, "n_symbols")
    P = check_positive(P, "P")
    sigma2 = check_positive(sigma2, "sigma2", strict=False)
    Ns = design.n_streams
    G, active = _active_streams(design, O)
    G_diag = np.diag(G).copy()
    scale = P / Ns
    pts = constellation.points
    errors = 0
    n_done = 0
    batch = 0
    while n_done < n_symbols:
        n = min(batch_size, n_symbols - n_done)
        errors += _detect_batch(G_diag, active, pts, scale, sigma2, n, trial_rng(seed, batch))
        n_done += n
        batch += 1
    total = n_symbols * max(active.size, 1)
    ser = errors / total if active.size else 1.0 - 1.0 / constellation.order
    stderr = float(np.sqrt(max(ser * (1.0 - ser), 0.0) / total))
    noisy = sigma2 > 0
    return SerReport(
        union_bound=union_bound_ser(design, O, constellation, Ns, P, sigma2) if noisy else 0.0,
        exact_ser=per_stream_ser(design.singular_values, design.powers, constellation, Ns, P, sigma2)
        if noisy else 0.0,
        mc_ser=float(ser),
        mc_stderr=stderr,
        snr_db=float(10.0 * np.log10(P / sigma2)) if noisy else float("inf"),
        n_symbols=int(n_symbols),
    )
