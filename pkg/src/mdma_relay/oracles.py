"""Independent numerical oracles for the closed-form pipeline.

The relay-sum CDF oracle enumerates nonempty decode sets and integrates each
subset's exponential-sum distribution by iterated adaptive quadrature,
carrying inner convolution levels on Chebyshev interpolants.  It never
touches the partial-fraction expansion, so it can certify it.
"""

from __future__ import annotations

import math

import numpy as np
from scipy.integrate import quad, quad_vec
from scipy.interpolate import BarycentricInterpolator

from .analytic import GatedExponential

_CHEB_POINTS = 33
_QUAD_TOL = 1e-11


def _cheb_nodes(n: int, hi: float) -> np.ndarray:
    k = np.arange(n)
    return 0.5 * hi * (1.0 - np.cos(np.pi * k / (n - 1)))


def _convolve_level(rate: float, prev_cdf, targets: np.ndarray) -> np.ndarray:
    """CDF of (previous sum) + Exp(rate) at the target points.

    Integral of rate*exp(-rate*u) * prev_cdf(t - u) over u in [0, t],
    rescaled to the unit interval so one adaptive pass serves every target.
    """
    t = np.asarray(targets, dtype=float)

    def integrand(s: float) -> np.ndarray:
        u = t * s
        return t * rate * np.exp(-rate * u) * prev_cdf(t * (1.0 - s))

    val, _err = quad_vec(integrand, 0.0, 1.0, epsabs=_QUAD_TOL, epsrel=_QUAD_TOL)
    return val


def exp_sum_cdf_quadrature(rates: list[float], gammas: np.ndarray) -> np.ndarray:
    """CDF of a sum of independent exponentials by iterated quadrature."""
    gammas = np.asarray(gammas, dtype=float)
    gmax = float(gammas.max()) if gammas.size else 1.0
    first = rates[0]

    def level0(x):
        return -np.expm1(-first * np.asarray(x))

    prev = level0
    for rate in rates[1:-1] if len(rates) > 1 else []:
        nodes = _cheb_nodes(_CHEB_POINTS, gmax)
        vals = _convolve_level(rate, prev, nodes)
        interp = BarycentricInterpolator(nodes, vals)

        def clipped(x, _f=interp):
            x = np.asarray(x, dtype=float)
            return np.clip(_f(np.clip(x, 0.0, gmax)), 0.0, 1.0)

        prev = clipped
    if len(rates) == 1:
        return prev(gammas)
    return _convolve_level(rates[-1], prev, gammas)


def relay_sum_cdf_quadrature(
    gates: list[GatedExponential], gammas: np.ndarray
) -> np.ndarray:
    """Defective relay-sum CDF as the subset mixture of quadrature CDFs."""
    gammas = np.asarray(gammas, dtype=float)
    m = len(gates)
    a = np.array([g.gate_prob for g in gates])
    lam = np.array([g.rate for g in gates])
    total = np.zeros_like(gammas)
    for mask in range(1, 1 << m):
        members = [i for i in range(m) if mask >> i & 1]
        weight = float(
            np.prod(1.0 - a[members]) * np.prod(a[[i for i in range(m) if i not in members]])
        )
        if weight == 0.0:
            continue
        total += weight * exp_sum_cdf_quadrature([float(lam[i]) for i in members], gammas)
    return total


def truncated_direct_plus_exp_sum_outage(
    direct_rate: float, gamma_th: float, relay_rates: list[float]
) -> float:
    """Exact-quadrature failure probability of one relay set's combined SNR.

    Probability that (direct SNR conditioned below the threshold) plus the
    sum of the given relay SNRs stays below the threshold.
    """
    denom = -math.expm1(-direct_rate * gamma_th)

    def integrand(x: float) -> float:
        tail = exp_sum_cdf_quadrature(relay_rates, np.array([gamma_th - x]))[0]
        return direct_rate * math.exp(-direct_rate * x) / denom * tail

    val, _err = quad(integrand, 0.0, gamma_th, epsabs=1e-11, epsrel=1e-11, limit=200)
    return val


def step2_outage_quadrature(
    direct_rate: float, gamma_th: float, gates: list[GatedExponential]
) -> float:
    """Relay-step outage by quadrature over every nonempty decode set."""
    m = len(gates)
    a = np.array([g.gate_prob for g in gates])
    lam = np.array([g.rate for g in gates])
    empty = float(np.prod(a))
    total = 0.0
    for mask in range(1, 1 << m):
        members = [i for i in range(m) if mask >> i & 1]
        weight = float(
            np.prod(1.0 - a[members]) * np.prod(a[[i for i in range(m) if i not in members]])
        )
        if weight == 0.0:
            continue
        total += weight * truncated_direct_plus_exp_sum_outage(
            direct_rate, gamma_th, [float(lam[i]) for i in members]
        )
    return total / (1.0 - empty)
