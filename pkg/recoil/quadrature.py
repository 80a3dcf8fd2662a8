"""Gauss-Legendre quadrature over the two-photon detection region.

The region is the square [lo, hi]² of detection times cut down to the band
|t_μ - t_ν| ≤ T_Δ. Each axis is mapped through u = 1 - e^{-(t-a)/τ}, which turns the
exponential photon envelopes into low-order polynomials in u; the band is handled by
splitting the outer axis at the points where the inner limits change form.
"""

import logging
import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from numpy.polynomial.legendre import leggauss

from recoil.errors import QuadratureError

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class QuadratureSettings:
    nodes: int = 64
    max_nodes: int = 256
    rtol: float = 1e-8
    atol: float = 1e-14

    def __post_init__(self):
        if self.nodes < 2:
            raise ValueError(f"need at least 2 nodes, got {self.nodes}")
        if self.max_nodes < 2 * self.nodes:
            raise ValueError("max_nodes must allow at least one doubling")
        if self.rtol <= 0 or self.atol < 0:
            raise ValueError("tolerances must be positive")


@dataclass(frozen=True)
class QuadratureResult:
    value: np.ndarray
    error_bound: float
    nodes: int
    converged: bool


@lru_cache(maxsize=16)
def _legendre_unit(n):
    """Nodes and weights on [0, 1]."""
    x, w = leggauss(n)
    return 0.5 * (x + 1), 0.5 * w


def exponential_nodes(a, b, lifetime, n):
    """Nodes/weights for ∫_a^b g(t) dt in the decay coordinate u = 1 - e^{-(t-a)/τ}.

    ``a`` may be an array of lower limits (one row of nodes per entry); ``b`` may be inf.
    """
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    u_max = -np.expm1(-(b - a) / lifetime)
    x, w = _legendre_unit(n)
    u = u_max[..., None] * x
    t = a[..., None] - lifetime * np.log1p(-u)
    weights = u_max[..., None] * w * lifetime / (1 - u)
    return t, weights


def _outer_segments(lo, hi, difference_window):
    points = {lo, hi, min(max(lo + difference_window, lo), hi), min(max(hi - difference_window, lo), hi)}
    points = sorted(p for p in points if not math.isnan(p))
    return [(a, b) for a, b in zip(points, points[1:]) if b > a]


def band_integral(integrand, lo, hi, difference_window, lifetime, n):
    """One fixed-order evaluation of ∫∫ integrand(t_μ, t_ν) over the banded square.

    ``integrand`` takes broadcastable arrays (t_mu[:, None], t_nu) and returns an array whose
    trailing two axes are the node grid; any leading axes are separate components.
    """
    total = 0.0
    for a, b in _outer_segments(lo, hi, difference_window):
        t_mu, w_mu = exponential_nodes(a, b, lifetime, n)
        inner_lo = np.maximum(lo, t_mu - difference_window)
        inner_hi = np.minimum(hi, t_mu + difference_window)
        t_nu, w_nu = exponential_nodes(inner_lo, inner_hi, lifetime, n)
        values = integrand(t_mu[:, None], t_nu)
        total = total + np.sum(values * (w_mu[:, None] * w_nu), axis=(-2, -1))
    return np.asarray(total)


def integrate_band(integrand, lo, hi, difference_window, lifetime, settings=None, strict=True):
    """Integrate with node doubling until two successive orders agree.

    Raises QuadratureError when ``strict`` and the tolerance is never met; otherwise the
    best estimate is returned with ``converged=False``.
    """
    settings = settings or QuadratureSettings()
    n = settings.nodes
    previous = band_integral(integrand, lo, hi, difference_window, lifetime, n)
    while True:
        current = band_integral(integrand, lo, hi, difference_window, lifetime, 2 * n)
        error = float(np.max(np.abs(current - previous)))
        scale = float(np.max(np.abs(current)))
        logger.debug("quadrature %d -> %d nodes: change %.3e (scale %.3e)", n, 2 * n, error, scale)
        if error <= settings.rtol * scale + settings.atol:
            return QuadratureResult(current, error, 2 * n, True)
        if 4 * n > settings.max_nodes:
            break
        n *= 2
        previous = current

    message = (
        f"window quadrature did not converge at {2 * n} nodes "
        f"(change {error:.3e} > tolerance {settings.rtol * scale + settings.atol:.3e})"
    )
    if strict:
        raise QuadratureError(message, current, error)
    logger.warning(message)
    return QuadratureResult(current, error, 2 * n, False)
