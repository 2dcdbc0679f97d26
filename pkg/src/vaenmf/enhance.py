"""Noisy waveform in, enhanced waveform out."""

from __future__ import annotations

import csv
import time
import warnings
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .config import EnhanceConfig, McmcConfig, PriorConfig, StftConfig
from .errors import DataError, NonFiniteError, ShapeError
from .mcmc import PosteriorSummary, run_chain
from .signal_io import NATIVE_RATE, ComplexSpectrogram, SampleBuffer, istft, power_spectrogram, stft
from .vae import VaeModel, decode


@dataclass
class EnhanceResult:
    enhanced: SampleBuffer
    wiener_mask: np.ndarray  # (F, T), values in (0, 1]
    summary: PosteriorSummary
    runtime: float

    @property
    def acceptance_rate(self) -> float:
        return float(np.mean(self.summary.acceptance))


def wiener_filter(X, sigma_s, noise_psd):
    """Apply the gain ``sigma_s / (sigma_s + noise_psd)`` to the mixture ``X``.

    ``X`` may be a :class:`ComplexSpectrogram` or a complex array; the
    filtered spectrogram is returned in the same form, together with the mask.
    """
    bins = X.bins if isinstance(X, ComplexSpectrogram) else np.asarray(X)
    sigma_s = np.asarray(sigma_s, dtype=np.float64)
    noise_psd = np.asarray(noise_psd, dtype=np.float64)
    if sigma_s.shape != bins.shape or noise_psd.shape != bins.shape:
        raise ShapeError(f"variances {sigma_s.shape}/{noise_psd.shape} do not match spectrogram {bins.shape}")
    for name, arr in (("mixture", bins), ("speech variance", sigma_s), ("noise PSD", noise_psd)):
        if not np.all(np.isfinite(arr)):
            raise NonFiniteError(f"non-finite {name}")
    denom = sigma_s + noise_psd
    if np.any(denom <= 0):
        raise DataError("Wiener filter denominator must be positive")
    mask = sigma_s / denom
    filtered = mask * bins
    if isinstance(X, ComplexSpectrogram):
        filtered = X.with_bins(filtered)
    return filtered, mask


def enhance(
    noisy: SampleBuffer,
    model: VaeModel,
    prior: PriorConfig = PriorConfig(),
    mcmc: McmcConfig = McmcConfig(),
    stft_config: StftConfig = StftConfig(),
    config: EnhanceConfig = EnhanceConfig(),
) -> EnhanceResult:
    """Run STFT, posterior sampling, Wiener filtering and ISTFT on ``noisy``.

    The spectrogram is rescaled to mean power ``config.input_power`` before
    sampling. The mask is invariant to that rescaling and is applied to the
    original spectrogram.
    """
    start = time.perf_counter()
    if stft_config.n_freqs != model.n_freqs:
        raise ShapeError(f"STFT gives {stft_config.n_freqs} bins but the model expects {model.n_freqs}")
    if noisy.sample_rate != NATIVE_RATE:
        warnings.warn(f"input sample rate {noisy.sample_rate} Hz differs from the {NATIVE_RATE} Hz "
                      "the speech model is meant for; processing anyway", stacklevel=2)
    X = stft(noisy, stft_config)
    power = power_spectrogram(X)
    mean_power = float(power.mean())
    if mean_power <= 0:
        raise DataError("input is silent; nothing to enhance")
    summary = run_chain(power * (config.input_power / mean_power), model, prior, mcmc)
    sigma_s = decode(model, summary.mean_Z).T
    filtered, mask = wiener_filter(X, sigma_s, summary.noise_psd)
    enhanced = istft(filtered, stft_config)
    return EnhanceResult(enhanced, mask, summary, time.perf_counter() - start)


def write_diagnostics(path: str | Path, result: EnhanceResult) -> None:
    """One CSV row per sweep: iteration, total log-likelihood, mean acceptance rate."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["iteration", "log_likelihood", "acceptance_rate"])
        for rec in result.summary.trace:
            writer.writerow([rec.iteration, repr(rec.log_likelihood), repr(rec.acceptance_rate)])
