"""Shared test utilities: random valid copula parameters, quadrature
oracles for the bivariate normal CDF, and finite-difference helpers."""

from __future__ import annotations

import numpy as np
import pytest
from scipy import integrate
from scipy.special import ndtr

from copmtl.copula import CopulaParams, validate

_acceptance_lines: list[str] = []


def record_acceptance(line: str) -> None:
    """Collect an acceptance pass/fail line for the terminal summary."""
    _acceptance_lines.append(line)
    print(line)


def pytest_terminal_summary(terminalreporter):
    if _acceptance_lines:
        terminalreporter.section("acceptance criteria")
        for line in _acceptance_lines:
            terminalreporter.write_line(line)


@pytest.fixture
def rng():
    return np.random.default_rng(20240811)


def random_correlation(rng: np.random.Generator, dim: int = 4) -> np.ndarray:
    """Random correlation matrix via a random eigenbasis."""
    q, _ = np.linalg.qr(rng.normal(size=(dim, dim)))
    lam = rng.uniform(0.15, 1.0, dim)
    lam = dim * lam / lam.sum()
    g = (q * lam) @ q.T
    d = np.sqrt(np.diag(g))
    g = g / np.outer(d, d)
    g = 0.5 * (g + g.T)
    np.fill_diagonal(g, 1.0)
    return g


def random_params(rng: np.random.Generator, max_tries: int = 200) -> CopulaParams:
    """Random valid CopulaParams including occasionally strong correlations."""
    for _ in range(max_tries):
        g = random_correlation(rng)
        params = CopulaParams(rng.uniform(0.4, 2.5), rng.uniform(0.4, 2.5), g)
        if not validate(params):
            return params
    raise AssertionError("failed to draw valid parameters")


_STRONG_GAMMAS = [
    np.array(
        [
            [1.0, 0.95, 0.0, 0.0],
            [0.95, 1.0, 0.0, 0.0],
            [0.0, 0.0, 1.0, 0.95],
            [0.0, 0.0, 0.95, 1.0],
        ]
    ),
    np.array(
        [
            [1.0, 0.2, 0.95, 0.0],
            [0.2, 1.0, 0.1, 0.0],
            [0.95, 0.1, 1.0, 0.0],
            [0.0, 0.0, 0.0, 1.0],
        ]
    ),
    np.array(
        [
            [1.0, -0.5, 0.6, -0.4],
            [-0.5, 1.0, -0.4, 0.6],
            [0.6, -0.4, 1.0, -0.5],
            [-0.4, 0.6, -0.5, 1.0],
        ]
    ),
]


def strong_params(rng: np.random.Generator, index: int) -> CopulaParams:
    """Valid parameters with |rho| entries up to 0.95."""
    gamma = _STRONG_GAMMAS[index % len(_STRONG_GAMMAS)]
    params = CopulaParams(rng.uniform(0.4, 2.5), rng.uniform(0.4, 2.5), gamma.copy())
    assert not validate(params)
    return params


def bvn_quad_oracle(h: float, k: float, rho: float) -> float:
    """1-D adaptive quadrature of the exact conditional decomposition:
    P(U<=h, V<=k) = int_-inf^h pdf(x) Phi((k - rho x)/sqrt(1-rho^2)) dx."""
    if h == -np.inf or k == -np.inf:
        return 0.0
    denom = np.sqrt(1.0 - rho * rho)

    def integrand(x):
        return np.exp(-0.5 * x * x) / np.sqrt(2 * np.pi) * ndtr((k - rho * x) / denom)

    value, _ = integrate.quad(integrand, -9.0, min(h, 9.0), epsabs=1e-14, epsrel=1e-13, limit=400)
    return value


def bvn_dblquad_oracle(h: float, k: float, rho: float) -> float:
    """Full 2-D adaptive quadrature of the bivariate normal density."""
    det = 1.0 - rho * rho

    def density(y, x):
        return np.exp(-(x * x - 2 * rho * x * y + y * y) / (2 * det)) / (
            2 * np.pi * np.sqrt(det)
        )

    value, _ = integrate.dblquad(
        density, -9.0, min(h, 9.0), -9.0, min(k, 9.0), epsabs=1e-13, epsrel=1e-12
    )
    return value


def fd_gradient(func, x: np.ndarray, eps: float = 1e-6) -> np.ndarray:
    """Central finite differences of a scalar function."""
    x = np.asarray(x, dtype=float)
    grad = np.empty_like(x)
    for i in range(x.size):
        up = x.copy()
        up[i] += eps
        down = x.copy()
        down[i] -= eps
        grad[i] = (func(up) - func(down)) / (2.0 * eps)
    return grad


def close_rel(actual, expected, tol: float) -> bool:
    """|a - e| <= tol * max(1, |e|): relative with an absolute floor."""
    actual = np.asarray(actual, dtype=float)
    expected = np.asarray(expected, dtype=float)
    return bool(
        np.all(np.abs(actual - expected) <= tol * np.maximum(1.0, np.abs(expected)))
    )
