"""Shared test oracles: direct quadrature of densities, independent of the
closed forms under test."""

import math

import numpy as np
import pytest
from scipy import integrate

import audkit as ak


def quad_transform(model, s, moment=0, upper=None):
    """Reference value of int x^moment f(x) exp(-s x) dx by brute quadrature.

    Deliberately independent of the model's own transform code paths: it
    only calls pdf(). Breakpoints around the mean keep the adaptive grid
    honest on long-tailed supports.
    """
    m = model.mean()
    if upper is None:
        if isinstance(model, ak.Uniform):
            upper = model.beta
        elif isinstance(model, ak.Lomax):
            # polynomial tails need a huge window before they stop mattering
            upper = 1e8 if s < 1e-3 else max(1e4, m + 800.0 / s)
        else:
            upper = 200.0 * m
    pts = sorted(p for p in (m * 5.0**k for k in range(12)) if 0 < p < upper)
    val, err = integrate.quad(
        lambda x: x**moment * model.pdf(x) * math.exp(-s * x),
        0.0,
        upper,
        epsabs=1e-12,
        epsrel=1e-12,
        limit=800,
        points=pts or None,
    )
    return val


@pytest.fixture
def rng():
    return np.random.Generator(np.random.Philox(20240817))
