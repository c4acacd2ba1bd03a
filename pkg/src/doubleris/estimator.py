"""Estimator wrapper around the AO + SVD pipeline."""

from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from .channel import ChannelRealization, PhaseConfig, aggregate
from .optimizer import (
    SQRT2,
    AdmmSettings,
    AoSettings,
    alternating_optimize,
    capacity,
    svd_transceiver,
)


class DoubleRisCapacityOptimizer(BaseEstimator):
    """Capacity-oriented phase and transceiver design for one realization.

    ``fit`` runs alternating optimization of both surfaces followed by the
    SVD/water-filling transceiver. The "data" is a single
    :class:`~doubleris.channel.ChannelRealization`, not a feature matrix.

    Parameters
    ----------
    n_streams : int or None
        Number of data streams; ``None`` uses ``min(Nt, Nr)``.
    power, noise_power : float
        Transmit and noise power in watts.
    epsilon, max_outer, warm_start
        Outer loop settings, see :class:`~doubleris.optimizer.AoSettings`.
    rho_factor, max_iters, tol
        ADMM settings, see :class:`~doubleris.optimizer.AdmmSettings`.
    random_state : int, Generator or None
        Seeds the random initial phases.

    Attributes
    ----------
    phases_ : PhaseConfig
    design_ : TransceiverDesign
    objective_trace_ : ndarray
    capacity_ : float
    n_outer_ : int
    """

    def __init__(
        self,
        n_streams=None,
        power=1.0,
        noise_power=1e-12,
        epsilon=1e-5,
        max_outer=50,
        warm_start=True,
        rho_factor=1.5 * SQRT2,
        max_iters=1000,
        tol=1e-5,
        random_state=None,
    ):
        self.n_streams = n_streams
        self.power = power
        self.noise_power = noise_power
        self.epsilon = epsilon
        self.max_outer = max_outer
        self.warm_start = warm_start
        self.rho_factor = rho_factor
        self.max_iters = max_iters
        self.tol = tol
        self.random_state = random_state

    def _streams(self, realization):
        nt, nr, _, _ = realization.dims
        return min(nt, nr) if self.n_streams is None else int(self.n_streams)

    def fit(self, X, y=None, init=None):
        """Optimize phases and transceiver for the realization ``X``."""
        X = _check_realization(X)
        res = alternating_optimize(
            X,
            AoSettings(self.epsilon, self.max_outer, self.warm_start),
            AdmmSettings(self.rho_factor, self.max_iters, self.tol),
            init=init,
            rng=self.random_state,
        )
        self.phases_ = res.phases
        self.objective_trace_ = res.objective_trace
        self.n_outer_ = res.n_outer
        self.result_ = res
        O = aggregate(X, res.phases)
        Ns = self._streams(X)
        self.design_ = svd_transceiver(O, Ns, self.power, self.noise_power)
        self.capacity_ = capacity(
            self.design_.singular_values, self.design_.powers, Ns, self.power, self.noise_power
        )
        return self

    def transform(self, X):
        """Aggregated channel of ``X`` under the fitted phases."""
        check_is_fitted(self, "phases_")
        return aggregate(_check_realization(X), self.phases_)

    def predict(self, X):
        """Effective per-stream channel ``W O F`` using the fitted design."""
        check_is_fitted(self, "design_")
        O = self.transform(X)
        return self.design_.W @ O @ self.design_.F

    def score(self, X, y=None):
        """Capacity in bit/s/Hz of ``X`` with the fitted phases and a fresh
        SVD transceiver."""
        O = self.transform(X)
        Ns = self._streams(X)
        d = svd_transceiver(O, Ns, self.power, self.noise_power)
        return capacity(d.singular_values, d.powers, Ns, self.power, self.noise_power)


def _check_realization(X):
    if not isinstance(X, ChannelRealization):
        raise TypeError(f"expected a ChannelRealization, got {type(X).__name__}")
    return X


def random_phase_capacity(realization, n_streams, power, noise_power, rng):
    """Capacity with uniformly random phases, the unoptimized reference."""
    _, _, k1, k2 = realization.dims
    phases = PhaseConfig.random(k1, k2, rng)
    O = aggregate(realization, phases)
    d = svd_transceiver(O, n_streams, power, noise_power)
    return capacity(d.singular_values, d.powers, n_streams, power, noise_power), phases


__all__ = ["DoubleRisCapacityOptimizer", "random_phase_capacity"]
