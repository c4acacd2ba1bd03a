"""Phase-shift and transceiver optimization for the two-surface link.

The capacity problem is replaced by the sum-path-gain surrogate
``tr(O O^H)``. For one surface at a time the surrogate reads::

    f(v) = || M diag(conj(v)) H + B ||_F^2
         = v^H A v + 2 Re(v^H b) + tr(B B^H)

with ``A = (H H^H) * conj(M^H M)`` and ``b_k = (H B^H M)[k, k]``. Lifting
``p = [t v; t]`` with ``|t| = 1`` turns maximization of ``f`` into
minimization of ``p^H T p`` over unit-modulus ``p``, which ADMM handles.
"""

from dataclasses import dataclass, field

import numpy as np
from scipy import linalg

from ._validation import (
    DomainError,
    NumericalError,
    as_rng,
    check_int,
    check_matrix,
    check_positive,
    unit_phasor,
)
from .channel import ChannelRealization, PhaseConfig, aggregate

SQRT2 = float(np.sqrt(2.0))


# --------------------------------------------------------------------------
# Settings and result types
# --------------------------------------------------------------------------
@dataclass(frozen=True)
class AdmmSettings:
    """Penalty, iteration budget and stopping tolerance of the ADMM solver.

    The penalty is ``rho = rho_factor * lambda_max(T_hat)``; convergence to a
    KKT point needs ``rho_factor > sqrt(2)``.
    """

    rho_factor: float = 1.5 * SQRT2
    max_iters: int = 1000
    tol_primal: float = 1e-5

    def __post_init__(self):
        if not self.rho_factor > SQRT2:
            raise DomainError(f"rho_factor must exceed sqrt(2), got {self.rho_factor}")
        check_int(self.max_iters, "max_iters")
        check_positive(self.tol_primal, "tol_primal")


@dataclass(frozen=True)
class AoSettings:
    """Outer alternating-optimization loop.

    ``warm_start`` starts each ADMM call from the current phases; otherwise
    every call restarts from the initial phases.
    """

    epsilon: float = 1e-5
    max_outer: int = 50
    warm_start: bool = True

    def __post_init__(self):
        check_positive(self.epsilon, "epsilon")
        check_int(self.max_outer, "max_outer")


@dataclass(frozen=True)
class QuadraticLift:
    """Lifted form of one phase subproblem.

    ``f(v) = constant - p^H T p`` for ``p = [t v; t]`` with ``|t| = 1``.
    """

    T: np.ndarray
    T_hat: np.ndarray
    lambda_min: float
    lambda_max_hat: float
    constant: float

    @property
    def size(self):
        return self.T.shape[0] - 1

    def objective(self, p):
        """Surrogate value ``f`` at a lifted unit-modulus vector."""
        return float(self.constant - np.vdot(p, self.T @ p).real)


@dataclass
class AdmmResult:
    p: np.ndarray
    objective_trace: np.ndarray
    residual_trace: np.ndarray
    n_iters: int
    converged: bool


@dataclass
class AoResult:
    """Outcome of :func:`alternating_optimize`.

    ``history[i]`` holds the phases after outer iteration ``i`` (index 0 is
    the initial point), so ``objective_trace[i]`` is the surrogate at
    ``history[i]``. ``inner_traces`` keeps the ADMM objective traces of the
    first outer iteration (RIS 1 then RIS 2).
    """

    phases: PhaseConfig
    objective_trace: np.ndarray
    history: list
    n_outer: int
    converged: bool
    admm_iters: list = field(default_factory=list)
    admm_converged: list = field(default_factory=list)
    inner_traces: list = field(default_factory=list)


@dataclass(frozen=True)
class TransceiverDesign:
    """SVD precoder ``F`` (Nt x Ns), combiner ``W`` (Ns x Nr), stream powers
    and the singular values of ``O`` padded with zeros to length Nt."""

    F: np.ndarray
    W: np.ndarray
    powers: np.ndarray
    singular_values: np.ndarray

    @property
    def n_streams(self):
        return self.powers.size


# --------------------------------------------------------------------------
# Surrogate and lift
# --------------------------------------------------------------------------
def sum_path_gain(O):
    """``tr(O O^H) = ||O||_F^2``."""
    O = np.asarray(O)
    return float(np.vdot(O, O).real)


def quadratic_form(M, H, B):
    """``(A, b, C)`` with ``f(v) = v^H A v + 2 Re(v^H b) + C``."""
    A = (H @ H.conj().T) * (M.conj().T @ M).conj()
    b = np.einsum("kj,jk->k", H @ B.conj().T, M)
    C = sum_path_gain(B)
    return A, b, C


def build_lift(M, H, B):
    """Assemble ``T`` and its PSD shift ``T_hat = T - lambda_min(T) I``.

    Parameters
    ----------
    M : ndarray, shape (Nr, K)
    H : ndarray, shape (K, Nt)
    B : ndarray, shape (Nr, Nt)

    Returns
    -------
    QuadraticLift
    """
    M = check_matrix(M, "M")
    K = M.shape[1]
    H = check_matrix(H, "H", (K, None))
    B = check_matrix(B, "B", (M.shape[0], H.shape[1]))
    A, b, C = quadratic_form(M, H, B)
    T = np.zeros((K + 1, K + 1), dtype=complex)
    T[:K, :K] = -A
    T[:K, K] = -b
    T[K, :K] = -b.conj()
    T = 0.5 * (T + T.conj().T)
    w = np.linalg.eigvalsh(T)
    lam_min = float(w[0])
    T_hat = T - lam_min * np.eye(K + 1)
    return QuadraticLift(T, T_hat, lam_min, float(w[-1] - lam_min), C)


# --------------------------------------------------------------------------
# ADMM
# --------------------------------------------------------------------------
def admm_solve(lift, settings=None, init_phases=None):
    """Minimize ``p^H T_hat p`` over unit-modulus ``p`` by ADMM.

    Updates, with ``nu = T_hat p`` kept as the multiplier::

        u   <- angle(p - nu / rho)
        p   <- (rho I + T_hat)^{-1} (rho u + nu)
        nu  <- T_hat p

    Parameters
    ----------
    lift : QuadraticLift
    settings : AdmmSettings, optional
    init_phases : array_like, optional
        Unit-modulus start of length K or K+1; defaults to all ones. A
        length-K vector is lifted as ``[v; 1]``.

    Returns
    -------
    AdmmResult
        ``p`` is the final iterate ``u`` when converged, otherwise the
        best ``u`` seen. ``objective_trace`` holds ``f(u)`` per iteration.
    """
    settings = settings or AdmmSettings()
    n = lift.T.shape[0]
    if init_phases is None:
        p = np.ones(n, dtype=complex)
    else:
        p = unit_phasor(np.asarray(init_phases, dtype=complex).ravel())
        if p.size == n - 1:
            p = np.append(p, 1.0 + 0j)
        elif p.size != n:
            raise ValueError(f"init_phases has length {p.size}, expected {n - 1} or {n}")

    T_hat = lift.T_hat
    scale = max(1.0, abs(lift.lambda_min))
    if lift.lambda_max_hat <= 1e-14 * scale:
        u = unit_phasor(p)
        f = lift.objective(u)
        return AdmmResult(u, np.array([f]), np.array([0.0]), 1, True)

    rho = settings.rho_factor * lift.lambda_max_hat
    # factor once; the explicit inverse turns every later solve into a matvec
    try:
        chol = linalg.cho_factor(T_hat + rho * np.eye(n), lower=True)
    except linalg.LinAlgError as exc:
        raise NumericalError("rho I + T_hat is not positive definite") from exc
    solve = linalg.cho_solve(chol, np.eye(n))

    nu = T_hat @ p
    u = unit_phasor(p)
    # p^H T p = p^H T_hat p + lambda_min * ||p||^2 and ||u||^2 = n
    offset = lift.constant - lift.lambda_min * n
    objectives = np.empty(settings.max_iters)
    residuals = np.empty(settings.max_iters)
    best_u, best_f = u, -np.inf
    converged = False
    it = 0
    for it in range(1, settings.max_iters + 1):
        w = p - nu / rho
        mag = np.abs(w)
        u_new = w / mag if mag.min() > 0 else unit_phasor(w)
        p = solve @ (rho * u_new + nu)
        nu = T_hat @ p
        step = np.abs(u_new - u).max()
        primal = np.abs(u_new - p).max()
        u = u_new
        f = offset - np.vdot(u, T_hat @ u).real
        objectives[it - 1] = f
        residuals[it - 1] = primal
        if f > best_f:
            best_u, best_f = u, f
        if step < settings.tol_primal and primal < settings.tol_primal:
            converged = True
            break
    out = u if converged else best_u
    return AdmmResult(out, objectives[:it].copy(), residuals[:it].copy(), it, converged)


def extract_phase_vector(p):
    """``v = p[:K] / p[K]``, renormalized onto the unit circle."""
    p = np.asarray(p, dtype=complex).ravel()
    if p.size < 2:
        raise ValueError("lifted vector needs length K+1 >= 2")
    if abs(abs(p[-1]) - 1.0) > 1e-8:
        raise DomainError("last entry of the lifted vector must be unit modulus")
    return unit_phasor(p[:-1] * p[-1].conj())


def phase_objective(M, H, B, v):
    """``||M diag(conj(v)) H + B||_F^2`` evaluated directly."""
    return sum_path_gain((M * np.conj(v)[None, :]) @ H + B)


def solve_phase_subproblem(M, H, B, settings=None, init=None, return_info=False):
    """Best unit-modulus ``v`` for ``||M diag(conj(v)) H + B||_F^2``.

    The ADMM output is only accepted if it does not lower the objective
    relative to ``init``.
    """
    lift = build_lift(M, H, B)
    K = lift.size
    init = np.ones(K, dtype=complex) if init is None else unit_phasor(np.ravel(init))
    if init.size != K:
        raise ValueError(f"init has length {init.size}, expected {K}")
    res = admm_solve(lift, settings, init)
    v = extract_phase_vector(res.p)
    if phase_objective(M, H, B, v) < phase_objective(M, H, B, init):
        v = init
    if return_info:
        return v, res
    return v


# --------------------------------------------------------------------------
# Alternating optimization
# --------------------------------------------------------------------------
def ris1_subproblem(realization, v2):
    """``(M, H, B)`` of the RIS 1 step with RIS 2 fixed."""
    r = realization
    g2_phi2 = r.G2 * np.conj(v2)[None, :]
    return g2_phi2 @ r.D + r.G1, r.H1, g2_phi2 @ r.H2


def ris2_subproblem(realization, v1):
    """``(M, H, B)`` of the RIS 2 step with RIS 1 fixed."""
    r = realization
    phi1_h1 = np.conj(v1)[:, None] * r.H1
    return r.G2, r.D @ phi1_h1 + r.H2, r.G1 @ phi1_h1


def alternating_optimize(realization, settings=None, admm=None, init=None, rng=None):
    """Alternate between the two phase subproblems until the surrogate stalls.

    Parameters
    ----------
    realization : ChannelRealization
    settings : AoSettings, optional
    admm : AdmmSettings, optional
    init : PhaseConfig, optional
        Starting phases. If omitted they are drawn uniformly from ``rng``.
    rng : seed or Generator, optional

    Returns
    -------
    AoResult
    """
    if not isinstance(realization, ChannelRealization):
        raise TypeError("realization must be a ChannelRealization")
    settings = settings or AoSettings()
    admm = admm or AdmmSettings()
    _, _, k1, k2 = realization.dims
    if init is None:
        init = PhaseConfig.random(k1, k2, as_rng(rng))

    v1, v2 = init.v1, init.v2
    obj = sum_path_gain(aggregate(realization, init))
    trace = [obj]
    history = [init]
    result = AoResult(init, None, history, 0, False)
    for outer in range(1, settings.max_outer + 1):
        start1 = v1 if settings.warm_start else init.v1
        cand1, info1 = solve_phase_subproblem(
            *ris1_subproblem(realization, v2), admm, start1, return_info=True
        )
        start2 = v2 if settings.warm_start else init.v2
        cand2, info2 = solve_phase_subproblem(
            *ris2_subproblem(realization, cand1), admm, start2, return_info=True
        )
        result.admm_iters += [info1.n_iters, info2.n_iters]
        result.admm_converged += [info1.converged, info2.converged]
        if outer == 1:
            result.inner_traces = [info1.objective_trace, info2.objective_trace]

        cand = PhaseConfig(cand1, cand2)
        new_obj = sum_path_gain(aggregate(realization, cand))
        # keep-best: a cold-started step may land below the incumbent
        if new_obj >= obj:
            v1, v2 = cand1, cand2
            phases = cand
        else:
            new_obj, phases = obj, history[-1]
        gain = (new_obj - obj) / obj if obj > 0 else np.inf * (new_obj > 0)
        obj = new_obj
        trace.append(obj)
        history.append(phases)
        result.n_outer = outer
        if gain < settings.epsilon:
            result.converged = True
            break

    result.phases = history[-1]
    result.objective_trace = np.array(trace)
    return result


# --------------------------------------------------------------------------
# Transceiver design and capacity
# --------------------------------------------------------------------------
def water_filling(lambdas, Ns, P, sigma2):
    """Capacity-optimal stream powers with ``sum(p) = Ns``.

    ``p_i = (mu - sigma2 Ns / (P lambda_i^2))^+``. The active set is found
    by bisection on the water level and ``mu`` is then solved exactly on it.

    Parameters
    ----------
    lambdas : array_like
        Singular values, descending; only the first ``Ns`` are used.
    Ns : int
    P, sigma2 : float
        Transmit power and noise power in watts.

    Returns
    -------
    ndarray, shape (Ns,)
    """
    Ns = check_int(Ns, "Ns")
    P = check_positive(P, "P")
    sigma2 = check_positive(sigma2, "sigma2")
    lam = np.asarray(lambdas, dtype=float).ravel()
    if lam.size < Ns:
        raise DomainError(f"need at least Ns={Ns} singular values, got {lam.size}")
    lam = lam[:Ns]
    if np.any(lam < 0) or not np.all(np.isfinite(lam)):
        raise DomainError("singular values must be finite and non-negative")
    if not np.any(lam > 0):
        raise DomainError("all of the first Ns singular values are zero")

    with np.errstate(divide="ignore"):
        floor = np.where(lam > 0, sigma2 * Ns / (P * lam**2), np.inf)

    def filled(mu):
        return np.sum(np.clip(mu - floor, 0.0, None))

    finite = floor[np.isfinite(floor)]
    lo, hi = float(finite.min()), float(finite.max()) + Ns
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if filled(mid) < Ns:
            lo = mid
        else:
            hi = mid
        if hi - lo <= 1e-15 * max(1.0, hi):
            break
    active = floor < hi
    while True:
        mu = (Ns + floor[active].sum()) / active.sum()
        refined = active & (floor < mu)
        if np.array_equal(refined, active):
            break
        active = refined
    p = np.where(active, mu - floor, 0.0)
    # exact normalization on the active set removes bisection residue
    p[active] *= Ns / p[active].sum()
    return p


def svd_transceiver(O, Ns, P, sigma2):
    """SVD precoder/combiner with water-filled stream powers.

    ``F = V[:, :Ns] diag(sqrt(p))`` and ``W = U[:, :Ns]^H``.
    """
    O = check_matrix(O, "O")
    nr, nt = O.shape
    Ns = check_int(Ns, "Ns")
    if Ns > min(nt, nr):
        raise DomainError(f"Ns={Ns} exceeds min(Nt, Nr)={min(nt, nr)}")
    U, s, Vh = np.linalg.svd(O)
    p = water_filling(s, Ns, P, sigma2)
    F = Vh[:Ns].conj().T * np.sqrt(p)[None, :]
    W = U[:, :Ns].conj().T
    lam = np.zeros(nt)
    lam[: s.size] = s
    return TransceiverDesign(F, W, p, lam)


def capacity(lambdas, powers, Ns, P, sigma2):
    """``sum_i log2(1 + P p_i lambda_i^2 / (sigma2 Ns))`` in bit/s/Hz."""
    powers = np.asarray(powers, dtype=float).ravel()
    lam = np.asarray(lambdas, dtype=float).ravel()[: powers.size]
    if lam.size != powers.size:
        raise ValueError("need one singular value per stream power")
    snr = P * powers * lam**2 / (sigma2 * Ns)
    return float(np.sum(np.log2(1.0 + snr)))


def capacity_logdet(O, design, P, sigma2):
    """``log2 det(I + P/(sigma2 Ns) W O F F^H O^H W^H)``."""
    Ns = design.n_streams
    G = design.W @ O @ design.F
    _, logdet = np.linalg.slogdet(np.eye(Ns) + P / (sigma2 * Ns) * G @ G.conj().T)
    return float(logdet / np.log(2.0))


def design_capacity(O, Ns, P, sigma2):
    """Capacity of the SVD/water-filling design for a fixed ``O``."""
    d = svd_transceiver(O, Ns, P, sigma2)
    return capacity(d.singular_values, d.powers, Ns, P, sigma2)
