"""Input validation helpers shared by the public functions and estimators."""

import numbers

import numpy as np


class DomainError(ValueError):
    """An argument lies outside the domain where a model is defined."""


class NumericalError(ArithmeticError):
    """A numerical routine produced a result it cannot vouch for."""


def check_positive(value, name, strict=True):
    if not isinstance(value, numbers.Real) or not np.isfinite(value):
        raise DomainError(f"{name} must be a finite real number, got {value!r}")
    if strict and value <= 0:
        raise DomainError(f"{name} must be > 0, got {value!r}")
    if not strict and value < 0:
        raise DomainError(f"{name} must be >= 0, got {value!r}")
    return float(value)


def check_int(value, name, minimum=1):
    if isinstance(value, bool) or not isinstance(value, numbers.Integral):
        raise DomainError(f"{name} must be an integer, got {value!r}")
    if value < minimum:
        raise DomainError(f"{name} must be >= {minimum}, got {value!r}")
    return int(value)


def check_matrix(a, name, shape=None):
    """Return `a` as a finite 2-D complex array, optionally checking its shape."""
    a = np.asarray(a, dtype=complex)
    if a.ndim != 2:
        raise ValueError(f"{name} must be 2-D, got shape {a.shape}")
    if shape is not None:
        for got, want, axis in zip(a.shape, shape, ("rows", "columns")):
            if want is not None and got != want:
                raise ValueError(f"{name} has {got} {axis}, expected {want}")
    if not np.all(np.isfinite(a)):
        raise ValueError(f"{name} contains non-finite entries")
    return a


def check_hermitian(a, name, atol=1e-10):
    a = check_matrix(a, name)
    if a.shape[0] != a.shape[1]:
        raise ValueError(f"{name} must be square, got shape {a.shape}")
    scale = max(1.0, float(np.max(np.abs(a))))
    if np.max(np.abs(a - a.conj().T)) > atol * scale:
        raise ValueError(f"{name} is not Hermitian within {atol:g}")
    return a


def check_unit_modulus(v, name, atol=1e-12):
    v = np.asarray(v, dtype=complex).ravel()
    if v.size == 0:
        raise ValueError(f"{name} must be non-empty")
    if np.max(np.abs(np.abs(v) - 1.0)) > atol:
        raise ValueError(f"{name} must have unit-modulus entries")
    return v


def unit_phasor(x):
    """Entrywise x/|x|; zero entries map to 1 so the result stays deterministic."""
    x = np.asarray(x, dtype=complex)
    mag = np.abs(x)
    out = np.ones_like(x)
    nz = mag > 0
    out[nz] = x[nz] / mag[nz]
    return out


def as_rng(seed):
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)
