"""Gamma and generalized inverse Gaussian (GIG) random variates.

``GIG(gamma, rho, tau)`` has density proportional to
``x**(gamma - 1) * exp(-rho * x - tau / x)`` on ``x > 0``. In the usual
``(p, a, b)`` notation that is ``p = gamma, a = 2 rho, b = 2 tau``.

Draws use Devroye's (2014) rejection sampler for the two-parameter family
``GIG(lam, omega)``, which has a uniformly bounded rejection rate, and map
back with the scale ``sqrt(tau / rho)``. ``tau == 0`` is sampled directly
as ``Gamma(gamma, rate=rho)``.
"""

from __future__ import annotations

import numpy as np

from .errors import ConfigError


def sample_gamma(shape, rate, rng: np.random.Generator, size=None):
    """Gamma draws with the given shape and *rate* (not scale)."""
    shape = np.asarray(shape, dtype=np.float64)
    rate = np.asarray(rate, dtype=np.float64)
    if np.any(~(shape > 0)) or np.any(~(rate > 0)):
        raise ConfigError("gamma shape and rate must be positive")
    return rng.gamma(shape, 1.0 / rate, size=size)


def _psi(x, alpha, lam):
    return -alpha * (np.cosh(x) - 1.0) - lam * (np.expm1(x) - x)


def _dpsi(x, alpha, lam):
    return -alpha * np.sinh(x) - lam * np.expm1(x)


def _devroye_log(lam, omega, rng):
    """Draw ``log(Y / m)`` for ``Y ~ GIG(lam, omega)``, ``lam >= 0``, ``omega > 0``.

    ``m = (lam + sqrt(lam^2 + omega^2)) / omega`` is the shift used by the
    sampler; the caller applies it. All arguments are 1-D arrays.
    """
    root = np.sqrt(omega * omega + lam * lam)
    alpha = omega * omega / (root + lam)  # root - lam without cancellation

    x = -_psi(1.0, alpha, lam)
    t = np.where(
        (x >= 0.5) & (x <= 2.0), 1.0,
        np.where(x > 2.0, np.sqrt(2.0 / (alpha + lam)), np.log(4.0 / (alpha + 2.0 * lam))),
    )
    x = -_psi(-1.0, alpha, lam)
    with np.errstate(divide="ignore", invalid="ignore"):
        s_alpha = np.log1p(1.0 / alpha + np.sqrt(1.0 / alpha ** 2 + 2.0 / alpha))
        s_small = np.where(lam == 0, s_alpha, np.where(alpha == 0, 1.0 / lam, np.minimum(1.0 / lam, s_alpha)))
        s = np.where(
            (x >= 0.5) & (x <= 2.0), 1.0,
            np.where(x > 2.0, np.sqrt(4.0 / (alpha * np.cosh(1.0) + lam)), s_small),
        )

    eta = -_psi(t, alpha, lam)
    zeta = -_dpsi(t, alpha, lam)
    theta = -_psi(-s, alpha, lam)
    xi = _dpsi(-s, alpha, lam)
    p = 1.0 / xi
    r = 1.0 / zeta
    td = t - r * eta
    sd = s - p * theta
    q = td + sd
    total = p + q + r

    out = np.empty_like(lam)
    pending = np.arange(lam.size)
    with np.errstate(over="ignore", invalid="ignore"):
        while pending.size:
            u, v, w = rng.random((3, pending.size))
            v = 1.0 - v  # (0, 1], keeps log finite
            tot = total[pending]
            qq, rr, pp = q[pending], r[pending], p[pending]
            sdp, tdp = sd[pending], td[pending]
            cand = np.where(
                u < qq / tot, -sdp + qq * v,
                np.where(u < (qq + rr) / tot, tdp - rr * np.log(v), -sdp + pp * np.log(v)),
            )
            right = np.exp(-eta[pending] - zeta[pending] * (cand - t[pending]))
            left = np.exp(-theta[pending] + xi[pending] * (cand + s[pending]))
            envelope = np.where(cand > tdp, right, np.where(cand < -sdp, left, 1.0))
            target = np.exp(_psi(cand, alpha[pending], lam[pending]))
            ok = w * envelope <= target
            out[pending[ok]] = cand[ok]
            pending = pending[~ok]
    return out


def sample_gig(gamma, rho, tau, rng: np.random.Generator):
    """Draw from ``GIG(gamma, rho, tau)``; arguments broadcast elementwise.

    Requires ``rho > 0``, ``tau >= 0`` and ``gamma > 0`` wherever ``tau == 0``.
    Returns a float for scalar inputs, otherwise an array of the broadcast shape.
    """
    gamma, rho, tau = np.broadcast_arrays(*(np.asarray(a, dtype=np.float64) for a in (gamma, rho, tau)))
    scalar = gamma.ndim == 0
    shape = gamma.shape
    gamma, rho, tau = (np.atleast_1d(a).ravel() for a in (gamma, rho, tau))
    if not (np.all(np.isfinite(gamma)) and np.all(np.isfinite(rho)) and np.all(np.isfinite(tau))):
        raise ConfigError("GIG parameters must be finite")
    if np.any(rho <= 0) or np.any(tau < 0):
        raise ConfigError("GIG needs rho > 0 and tau >= 0")
    omega = 2.0 * np.sqrt(rho * tau)
    degenerate = omega == 0.0
    if np.any(degenerate & (gamma <= 0)):
        raise ConfigError("GIG with tau = 0 needs gamma > 0")

    out = np.empty_like(gamma)
    if np.any(degenerate):
        out[degenerate] = rng.gamma(gamma[degenerate], 1.0 / rho[degenerate])
    live = ~degenerate
    if np.any(live):
        lam = np.abs(gamma[live])
        om = omega[live]
        logy = _devroye_log(lam, om, rng)
        shift = lam + np.sqrt(lam * lam + om * om)
        # x = y * sqrt(tau / rho), with y = exp(logy) * shift / omega; the omegas cancel
        direct = np.exp(logy) * shift / (2.0 * rho[live])
        flipped = np.exp(-logy) * 2.0 * tau[live] / shift
        out[live] = np.where(gamma[live] >= 0, direct, flipped)
    return float(out[0]) if scalar else out.reshape(shape)


def gig_mean(gamma: float, rho: float, tau: float) -> float:
    """Mean of ``GIG(gamma, rho, tau)`` via the Bessel-function ratio."""
    from scipy.special import kve

    if tau == 0:
        return gamma / rho
    omega = 2.0 * np.sqrt(rho * tau)
    return float(np.sqrt(tau / rho) * kve(gamma + 1.0, omega) / kve(gamma, omega))
