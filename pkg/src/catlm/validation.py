"""Input validation helpers, in the spirit of ``sklearn.utils.validation``."""

import numbers

import numpy as np

from .exceptions import (
    AllZero,
    LengthMismatch,
    NegativeWeight,
    NonFiniteInput,
    NonStochastic,
    ValidationError,
)

# Normalization tolerance for every probability vector, kernel row and joint.
PROB_TOL = 1e-12
# Weights below this are stored as exact zeros. Products of two stored weights
# (p x p, marginal x marginal) then never underflow to a false zero.
TINY_WEIGHT = 1e-150


def check_vector(x, *, name="x", size=None, dtype=np.float64):
    """Return ``x`` as a finite 1-D float array, optionally of length ``size``."""
    arr = np.asarray(x, dtype=dtype)
    if arr.ndim != 1:
        raise ValidationError(f"{name} must be 1-D, got shape {arr.shape}")
    if size is not None and arr.shape[0] != size:
        raise LengthMismatch(f"{name} has length {arr.shape[0]}, expected {size}")
    if not np.all(np.isfinite(arr)):
        raise NonFiniteInput(f"{name} contains NaN or Inf")
    return arr


def check_matrix(x, *, name="x", shape=None):
    arr = np.asarray(x, dtype=np.float64)
    if arr.ndim != 2:
        raise ValidationError(f"{name} must be 2-D, got shape {arr.shape}")
    if shape is not None:
        for got, want in zip(arr.shape, shape):
            if want is not None and got != want:
                raise LengthMismatch(f"{name} has shape {arr.shape}, expected {shape}")
    if not np.all(np.isfinite(arr)):
        raise NonFiniteInput(f"{name} contains NaN or Inf")
    return arr


def check_probability_vector(p, *, name="p", size=None, tol=PROB_TOL):
    p = check_vector(p, name=name, size=size)
    if np.any(p < 0):
        raise NegativeWeight(f"{name} has negative entries")
    if abs(p.sum() - 1.0) > tol:
        raise NonStochastic(f"{name} sums to {p.sum()!r}, not 1")
    return np.where(p < TINY_WEIGHT, 0.0, p)


def check_stochastic_matrix(rows, *, name="rows", shape=None, tol=PROB_TOL, exc=NonStochastic):
    """Validate a row-stochastic matrix; ``exc`` is raised on a bad row sum."""
    rows = check_matrix(rows, name=name, shape=shape)
    if np.any(rows < 0):
        raise NegativeWeight(f"{name} has negative entries")
    sums = rows.sum(axis=1)
    bad = np.flatnonzero(np.abs(sums - 1.0) > tol)
    if bad.size:
        raise exc(f"{name} row {int(bad[0])} sums to {sums[bad[0]]!r}, not 1")
    return np.where(rows < TINY_WEIGHT, 0.0, rows)


def normalize_weights(raw, *, name="weights", size=None):
    """Divide nonnegative ``raw`` by its total."""
    raw = check_vector(raw, name=name, size=size)
    if np.any(raw < 0):
        raise NegativeWeight(f"{name} has negative entries")
    total = raw.sum()
    if total <= 0:
        raise AllZero(f"{name} has no positive entry")
    return raw / total


def check_random_state(seed):
    """Turn ``seed`` into a ``numpy.random.Generator``."""
    if seed is None or isinstance(seed, (numbers.Integral, np.random.SeedSequence)):
        return np.random.default_rng(seed)
    if isinstance(seed, np.random.Generator):
        return seed
    raise ValidationError(f"{seed!r} cannot be used to seed a Generator")


def check_positive(value, name, *, strict=True):
    if not np.isfinite(value) or (value <= 0 if strict else value < 0):
        raise ValidationError(f"{name} must be {'positive' if strict else 'nonnegative'}, got {value!r}")
    return value
