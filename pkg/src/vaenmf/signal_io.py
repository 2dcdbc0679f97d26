"""WAV input/output and the STFT analysis/synthesis pair.

Spectrograms are stored frequency-major, ``bins.shape == (F, T)`` with
``F = window_len // 2 + 1``. The STFT reflect-pads ``window_len // 2``
samples at both ends so that frame ``t`` is centred on sample ``t * hop``;
``T = 1 + n_samples // hop``.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view
from scipy.io import wavfile

from .config import StftConfig
from .errors import ChannelError, ConfigError, DataError, NonFiniteError, ShapeError, WavFormatError

NATIVE_RATE = 16000
_PCM16_SCALE = 32768.0


@dataclass(frozen=True)
class SampleBuffer:
    samples: np.ndarray
    sample_rate: int

    def __post_init__(self):
        samples = np.asarray(self.samples, dtype=np.float64)
        if samples.ndim != 1:
            raise ChannelError(f"expected a mono 1-D buffer, got shape {samples.shape}")
        if self.sample_rate <= 0:
            raise DataError(f"sample_rate must be positive, got {self.sample_rate}")
        if not np.all(np.isfinite(samples)):
            raise NonFiniteError("sample buffer contains non-finite values")
        object.__setattr__(self, "samples", samples)

    def __len__(self):
        return self.samples.shape[0]

    @property
    def duration(self) -> float:
        return len(self) / self.sample_rate


@dataclass(frozen=True)
class ComplexSpectrogram:
    bins: np.ndarray
    hop: int
    window_len: int
    sample_rate: int
    n_samples: int

    @property
    def shape(self):
        return self.bins.shape

    def with_bins(self, bins: np.ndarray) -> ComplexSpectrogram:
        if bins.shape != self.bins.shape:
            raise ShapeError(f"bins shape {bins.shape} != {self.bins.shape}")
        return ComplexSpectrogram(bins, self.hop, self.window_len, self.sample_rate, self.n_samples)


def read_wav(path: str | Path) -> SampleBuffer:
    """Load a mono PCM16 or float32 WAV file as amplitudes in [-1, 1]."""
    try:
        rate, data = wavfile.read(str(path))
    except FileNotFoundError:
        raise
    except (ValueError, EOFError) as exc:
        raise WavFormatError(f"{path}: not a readable WAV file ({exc})") from exc
    if data.ndim != 1:
        raise ChannelError(f"{path}: expected mono audio, got {data.shape[1]} channels")
    if data.dtype == np.int16:
        samples = data.astype(np.float64) / _PCM16_SCALE
    elif data.dtype == np.float32:
        samples = data.astype(np.float64)
    else:
        raise WavFormatError(f"{path}: unsupported sample format {data.dtype} (need PCM16 or float32)")
    return SampleBuffer(samples, int(rate))


def write_wav(path: str | Path, buffer: SampleBuffer, fmt: str = "pcm16") -> None:
    """Write ``buffer`` as a mono WAV file, saturating samples outside [-1, 1]."""
    samples = buffer.samples
    peak = np.max(np.abs(samples), initial=0.0)
    if peak > 1.0:
        warnings.warn(f"clipping {np.count_nonzero(np.abs(samples) > 1.0)} samples (peak {peak:.3f}) to [-1, 1]",
                      stacklevel=2)
        samples = np.clip(samples, -1.0, 1.0)
    if fmt == "pcm16":
        data = np.clip(np.round(samples * _PCM16_SCALE), -32768, 32767).astype(np.int16)
    elif fmt == "float32":
        data = samples.astype(np.float32)
    else:
        raise ConfigError(f"unknown WAV sample format {fmt!r}")
    wavfile.write(str(path), buffer.sample_rate, data)


def hann_window(n: int) -> np.ndarray:
    """Periodic Hann window (COLA at 50% and 75% overlap)."""
    return 0.5 - 0.5 * np.cos(2.0 * np.pi * np.arange(n) / n)


def n_frames(n_samples: int, config: StftConfig) -> int:
    return 1 + n_samples // config.hop


def stft(buffer: SampleBuffer, config: StftConfig = StftConfig()) -> ComplexSpectrogram:
    n = config.window_len
    x = buffer.samples
    if len(x) < n:
        raise DataError(f"buffer of {len(x)} samples is shorter than the {n}-sample window")
    padded = np.pad(x, n // 2, mode="reflect")
    frames = sliding_window_view(padded, n)[:: config.hop]
    bins = np.fft.rfft(frames * hann_window(n), axis=1).T
    return ComplexSpectrogram(np.ascontiguousarray(bins), config.hop, n, buffer.sample_rate, len(x))


def _window_envelope(n_frames_: int, config: StftConfig) -> np.ndarray:
    n, hop = config.window_len, config.hop
    sq = hann_window(n) ** 2
    env = np.zeros(n + hop * (n_frames_ - 1))
    for t in range(n_frames_):
        env[t * hop: t * hop + n] += sq
    return env


def istft(spec: ComplexSpectrogram, config: StftConfig = StftConfig()) -> SampleBuffer:
    """Weighted overlap-add inverse of :func:`stft`, trimmed to the original length."""
    if spec.window_len != config.window_len or spec.hop != config.hop:
        raise ConfigError(
            f"spectrogram was computed with window {spec.window_len}/hop {spec.hop}, "
            f"config has {config.window_len}/{config.hop}"
        )
    n, hop = config.window_len, config.hop
    if spec.bins.shape[0] != config.n_freqs:
        raise ShapeError(f"expected {config.n_freqs} frequency rows, got {spec.bins.shape[0]}")
    n_t = spec.bins.shape[1]
    frames = np.fft.irfft(spec.bins.T, n=n, axis=1) * hann_window(n)
    out = np.zeros(n + hop * (n_t - 1))
    for t in range(n_t):
        out[t * hop: t * hop + n] += frames[t]
    env = _window_envelope(n_t, config)
    nonzero = env > 1e-10
    out[nonzero] /= env[nonzero]
    start = n // 2
    samples = out[start: start + spec.n_samples]
    if len(samples) < spec.n_samples:
        samples = np.pad(samples, (0, spec.n_samples - len(samples)))
    return SampleBuffer(samples, spec.sample_rate)


def power_spectrogram(spec: ComplexSpectrogram | np.ndarray) -> np.ndarray:
    """Elementwise ``|x_ft|^2`` as an ``(F, T)`` float array."""
    bins = spec.bins if isinstance(spec, ComplexSpectrogram) else np.asarray(spec)
    return bins.real ** 2 + bins.imag ** 2
