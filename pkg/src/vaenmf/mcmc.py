"""Posterior sampling of noise bases W, activations H and speech latents Z.

Observation model for the power spectrogram ``P`` (F x T)::

    P_ft ~ Exponential(mean = lam_ft),   lam_ft = sum_k W_fk H_kt + sig_f(z_t)

with ``W ~ Gamma(a0, b0)``, ``H ~ Gamma(a1, b1)`` and ``z_t ~ N(0, I)``.
One sweep draws W, then H, from GIG conditionals built on the auxiliary
shares ``phi_fkt = W_fk H_kt / lam_ft`` of the current state, and then moves
every ``z_t`` with a random-walk Metropolis step.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
from scipy.special import gammaln, kve

from .config import McmcConfig, PriorConfig
from .errors import DataError, ShapeError, VaeNmfError
from .samplers import sample_gamma, sample_gig
from .signal_io import ComplexSpectrogram, power_spectrogram
from .vae import VaeModel, decode, encode, sample_latent

log = logging.getLogger(__name__)

LAMBDA_FLOOR = 1e-12


class ChainError(DataError):
    def __init__(self, message, iteration=None):
        super().__init__(message)
        self.iteration = iteration


@dataclass
class NoiseModel:
    W: np.ndarray  # (F, K)
    H: np.ndarray  # (K, T)

    def psd(self) -> np.ndarray:
        return self.W @ self.H


@dataclass
class IterationRecord:
    iteration: int
    log_likelihood: float
    acceptance_rate: float


@dataclass
class ChainState:
    W: np.ndarray
    H: np.ndarray
    Z: np.ndarray  # (T, D), one latent row per frame
    sigma_s: np.ndarray  # (F, T) decoder output for the current Z
    rng: np.random.Generator
    sum_W: np.ndarray = None
    sum_H: np.ndarray = None
    sum_Z: np.ndarray = None
    n_retained: int = 0
    accepted: np.ndarray = None  # per-frame accept counts
    n_proposals: int = 0
    last_acceptance: float = 0.0
    noise_accepted: list = field(default_factory=lambda: [0, 0])  # W rows, H columns
    noise_proposed: list = field(default_factory=lambda: [0, 0])
    trace: list = field(default_factory=list)

    def __post_init__(self):
        if self.sum_W is None:
            self.sum_W = np.zeros_like(self.W)
            self.sum_H = np.zeros_like(self.H)
            self.sum_Z = np.zeros_like(self.Z)
        if self.accepted is None:
            self.accepted = np.zeros(self.Z.shape[0], dtype=np.int64)

    def accumulate(self):
        self.sum_W += self.W
        self.sum_H += self.H
        self.sum_Z += self.Z
        self.n_retained += 1


@dataclass
class PosteriorSummary:
    mean_W: np.ndarray
    mean_H: np.ndarray
    mean_Z: np.ndarray  # (T, D)
    acceptance: np.ndarray  # (T,) acceptance rate per frame
    trace: list[IterationRecord]

    @property
    def noise_psd(self) -> np.ndarray:
        return self.mean_W @ self.mean_H


def compute_aux(W, H, sigma_s):
    """Auxiliary ``lam`` and noise shares ``phi``.

    ``W`` is ``(F, K)``; ``H`` is ``(K, T)`` with ``sigma_s`` ``(F, T)``, or a
    single frame ``(K,)`` with ``sigma_s`` ``(F,)``. Returns ``lam`` shaped like
    ``sigma_s`` and ``phi`` shaped ``(F, K, T)`` (or ``(F, K)``), so that
    ``phi.sum(axis=1) + sigma_s / lam == 1``.
    """
    W = np.asarray(W, dtype=np.float64)
    H = np.asarray(H, dtype=np.float64)
    if H.ndim == 1:
        parts = W * H[None, :]
        lam = np.maximum(parts.sum(axis=1) + sigma_s, LAMBDA_FLOOR)
        return lam, parts / lam[:, None]
    parts = W[:, :, None] * H[None, :, :]
    lam = np.maximum(parts.sum(axis=1) + sigma_s, LAMBDA_FLOOR)
    return lam, parts / lam[:, None, :]


def _lam(W, H, sigma_s):
    return np.maximum(W @ H + sigma_s, LAMBDA_FLOOR)


def gig_params_w(power, W, H, sigma_s, prior: PriorConfig):
    """GIG ``(gamma, rho, tau)`` of every ``W_fk`` given the current state.

    ``tau_fk = sum_t P_ft phi_fkt^2 / H_kt`` is evaluated as
    ``W_fk^2 * sum_t P_ft H_kt / lam_ft^2``.
    """
    lam = _lam(W, H, sigma_s)
    rho = prior.b0 + (1.0 / lam) @ H.T
    tau = W * W * ((power / (lam * lam)) @ H.T)
    return np.full_like(W, prior.a0), rho, tau


def gig_params_h(power, W, H, sigma_s, prior: PriorConfig, b1: float):
    lam = _lam(W, H, sigma_s)
    rho = b1 + W.T @ (1.0 / lam)
    tau = H * H * (W.T @ (power / (lam * lam)))
    return np.full_like(H, prior.a1), rho, tau


def gig_logpdf(x, gamma, rho, tau):
    """Normalised log density of ``GIG(gamma, rho, tau)`` at ``x`` (elementwise)."""
    x, gamma, rho, tau = np.broadcast_arrays(*(np.asarray(a, dtype=np.float64) for a in (x, gamma, rho, tau)))
    omega = 2.0 * np.sqrt(rho * tau)
    with np.errstate(divide="ignore", over="ignore", invalid="ignore"):
        bessel = np.log(kve(gamma, omega)) - omega
        log_norm = np.log(2.0) + 0.5 * gamma * (np.log(tau) - np.log(rho)) + bessel
        gamma_limit = gammaln(gamma) - gamma * np.log(rho)
        log_norm = np.where(np.isfinite(log_norm) & (omega > 1e-8), log_norm, gamma_limit)
        return (gamma - 1.0) * np.log(x) - rho * x - tau / x - log_norm


def _row_target_w(power, W, H, sigma_s, prior):
    lam = _lam(W, H, sigma_s)
    prior_term = np.sum((prior.a0 - 1.0) * np.log(W) - prior.b0 * W, axis=1)
    return prior_term + np.sum(-np.log(lam) - power / lam, axis=1)


def _col_target_h(power, W, H, sigma_s, prior, b1):
    lam = _lam(W, H, sigma_s)
    prior_term = np.sum((prior.a1 - 1.0) * np.log(H) - b1 * H, axis=0)
    return prior_term + np.sum(-np.log(lam) - power / lam, axis=0)


def _positive(x):
    return np.maximum(x, np.finfo(np.float64).tiny)


def update_w(state: ChainState, power, prior: PriorConfig, rng=None, corrected: bool = True) -> ChainState:
    """Redraw ``W`` from the GIG conditionals built on the current auxiliaries.

    With ``corrected`` the GIG draw is a proposal: each row ``W[f]`` (rows are
    conditionally independent given H and Z) is accepted with the
    Metropolis-Hastings ratio of the exact conditional. Without it the draw is
    taken as is.
    """
    rng = state.rng if rng is None else rng
    gamma, rho, tau = gig_params_w(power, state.W, state.H, state.sigma_s, prior)
    proposal = _positive(sample_gig(gamma, rho, tau, rng))
    if not corrected:
        state.W = proposal
        return state
    g2, rho2, tau2 = gig_params_w(power, proposal, state.H, state.sigma_s, prior)
    log_alpha = (
        _row_target_w(power, proposal, state.H, state.sigma_s, prior)
        - _row_target_w(power, state.W, state.H, state.sigma_s, prior)
        + np.sum(gig_logpdf(state.W, g2, rho2, tau2), axis=1)
        - np.sum(gig_logpdf(proposal, gamma, rho, tau), axis=1)
    )
    accept = np.log1p(-rng.random(log_alpha.shape)) < np.nan_to_num(log_alpha, nan=-np.inf)
    state.W = np.where(accept[:, None], proposal, state.W)
    state.noise_accepted[0] += int(accept.sum())
    state.noise_proposed[0] += accept.size
    return state


def update_h(state: ChainState, power, prior: PriorConfig, rng=None, b1: float | None = None,
             corrected: bool = True) -> ChainState:
    """Counterpart of :func:`update_w` for the activations (MH per column ``H[:, t]``)."""
    rng = state.rng if rng is None else rng
    b1 = prior.activation_rate(float(np.mean(power))) if b1 is None else b1
    gamma, rho, tau = gig_params_h(power, state.W, state.H, state.sigma_s, prior, b1)
    proposal = _positive(sample_gig(gamma, rho, tau, rng))
    if not corrected:
        state.H = proposal
        return state
    g2, rho2, tau2 = gig_params_h(power, state.W, proposal, state.sigma_s, prior, b1)
    log_alpha = (
        _col_target_h(power, state.W, proposal, state.sigma_s, prior, b1)
        - _col_target_h(power, state.W, state.H, state.sigma_s, prior, b1)
        + np.sum(gig_logpdf(state.H, g2, rho2, tau2), axis=0)
        - np.sum(gig_logpdf(proposal, gamma, rho, tau), axis=0)
    )
    accept = np.log1p(-rng.random(log_alpha.shape)) < np.nan_to_num(log_alpha, nan=-np.inf)
    state.H = np.where(accept[None, :], proposal, state.H)
    state.noise_accepted[1] += int(accept.sum())
    state.noise_proposed[1] += accept.size
    return state


def frame_log_likelihood(power_t, W, h_t, sigma_t) -> float:
    """Exponential log-likelihood ``sum_f -log lam_f - P_f / lam_f`` of one frame."""
    lam = np.maximum(W @ h_t + sigma_t, LAMBDA_FLOOR)
    return float(np.sum(-np.log(lam) - power_t / lam))


def frame_log_likelihoods(power, W, H, sigma_s) -> np.ndarray:
    """:func:`frame_log_likelihood` for every frame at once, shape ``(T,)``."""
    lam = _lam(W, H, sigma_s)
    return np.sum(-np.log(lam) - power / lam, axis=0)


def metropolis_update_z(state: ChainState, power, model: VaeModel, config: McmcConfig, rng=None) -> ChainState:
    """One random-walk Metropolis move of every frame's latent, in the log domain."""
    rng = state.rng if rng is None else rng
    proposal = state.Z + np.sqrt(config.proposal_sigma) * rng.standard_normal(state.Z.shape)
    sigma_new = decode(model, proposal).T
    ll_old = frame_log_likelihoods(power, state.W, state.H, state.sigma_s)
    ll_new = frame_log_likelihoods(power, state.W, state.H, sigma_new)
    log_ratio = ll_new - ll_old - 0.5 * (np.sum(proposal ** 2, axis=1) - np.sum(state.Z ** 2, axis=1))
    log_u = np.log1p(-rng.random(log_ratio.shape))  # log of a (0, 1] uniform
    accept = log_u < np.nan_to_num(log_ratio, nan=-np.inf)
    state.Z = np.where(accept[:, None], proposal, state.Z)
    state.sigma_s = np.where(accept[None, :], sigma_new, state.sigma_s)
    state.accepted += accept
    state.n_proposals += 1
    state.last_acceptance = float(np.mean(accept))
    return state


def acceptance_probability(log_ratio):
    """``min(1, exp(log_ratio))`` computed without overflow."""
    return np.exp(np.minimum(np.asarray(log_ratio, dtype=np.float64), 0.0))


def init_chain(power, model: VaeModel, prior: PriorConfig, rng: np.random.Generator) -> ChainState:
    """Initial state: Z from the encoder applied to the noisy frames, W and H from their priors."""
    power = np.asarray(power, dtype=np.float64)
    f, t = power.shape
    if f != model.n_freqs:
        raise ShapeError(f"spectrogram has {f} frequency bins, model expects {model.n_freqs}")
    mu, var = encode(model, power.T)
    Z = sample_latent(mu, var, rng)
    b1 = prior.activation_rate(float(np.mean(power)))
    W = sample_gamma(prior.a0, prior.b0, rng, size=(f, prior.n_bases))
    H = sample_gamma(prior.a1, b1, rng, size=(prior.n_bases, t))
    return ChainState(W=W, H=H, Z=Z, sigma_s=decode(model, Z).T, rng=rng)


def _as_power(X):
    if isinstance(X, ComplexSpectrogram):
        return power_spectrogram(X)
    X = np.asarray(X)
    if np.iscomplexobj(X):
        return power_spectrogram(X)
    return X.astype(np.float64)


def sweep(state: ChainState, power, model: VaeModel, prior: PriorConfig, config: McmcConfig, b1: float):
    corrected = config.noise_update == "mh"
    update_w(state, power, prior, corrected=corrected)
    update_h(state, power, prior, b1=b1, corrected=corrected)
    metropolis_update_z(state, power, model, config)
    return state


def run_chain(X, model: VaeModel, prior: PriorConfig = PriorConfig(), config: McmcConfig = McmcConfig(),
              state: ChainState | None = None) -> PosteriorSummary:
    """Burn in, then average ``config.samples`` sweeps into a :class:`PosteriorSummary`.

    ``X`` is a complex spectrogram (``ComplexSpectrogram`` or complex array)
    or, if real-valued, an already computed power spectrogram.
    """
    power = _as_power(X)
    if not np.all(np.isfinite(power)):
        raise DataError("spectrogram contains non-finite values")
    rng = np.random.default_rng(config.seed)
    if state is None:
        state = init_chain(power, model, prior, rng)
    b1 = prior.activation_rate(float(np.mean(power)))
    n_iter = config.burn_in + config.samples
    for it in range(n_iter):
        try:
            sweep(state, power, model, prior, config, b1)
        except VaeNmfError as exc:
            raise ChainError(f"sweep {it} failed: {exc}", iteration=it) from exc
        ll = float(np.sum(frame_log_likelihoods(power, state.W, state.H, state.sigma_s)))
        state.trace.append(IterationRecord(it, ll, state.last_acceptance))
        if it >= config.burn_in:
            state.accumulate()
    n = state.n_retained
    return PosteriorSummary(
        mean_W=state.sum_W / n,
        mean_H=state.sum_H / n,
        mean_Z=state.sum_Z / n,
        acceptance=state.accepted / max(state.n_proposals, 1),
        trace=list(state.trace),
    )
