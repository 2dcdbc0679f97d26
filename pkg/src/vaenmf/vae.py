"""VAE prior on clean-speech power spectra.

The encoder maps a power frame ``p`` (length F) to the mean and variance of
a diagonal Gaussian over the D-dimensional latent ``z``; it sees the frame
only through ``log(1 + p)``. The decoder maps ``z`` to a per-frequency
speech variance ``softplus(raw) + variance_floor``.

Training minimises, per frame,

    1/2 sum_d (mu_d^2 + var_d - log var_d) + sum_f (log sig_f(z) + p_f / sig_f(z))

with one reparameterised draw ``z = mu + sqrt(var) * eps``. Additive constants
are dropped, so the KL part is offset by ``D / 2`` per frame.
"""

from __future__ import annotations

import logging
import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np
from scipy.special import expit

from .config import StftConfig, TrainConfig
from .errors import DataError, EmptyCorpusError, ModelFormatError, NonFiniteError, ShapeError
from .nn import ACTIVATIONS, AdamState, DenseLayer, Mlp, init_mlp, mlp_backward, mlp_forward, softplus

log = logging.getLogger(__name__)

MAGIC = b"VAENMF01"


@dataclass
class VaeModel:
    encoder: Mlp
    decoder: Mlp
    variance_floor: float = 1e-6

    def __post_init__(self):
        d = self.decoder.in_dim
        if self.encoder.out_dim != 2 * d:
            raise ShapeError(f"encoder emits {self.encoder.out_dim} values, need 2 * D = {2 * d}")
        if self.decoder.out_dim != self.encoder.in_dim:
            raise ShapeError(f"decoder emits {self.decoder.out_dim} bins but encoder reads {self.encoder.in_dim}")
        if not self.variance_floor > 0:
            raise ShapeError("variance_floor must be positive")

    @property
    def latent_dim(self) -> int:
        return self.decoder.in_dim

    @property
    def n_freqs(self) -> int:
        return self.encoder.in_dim

    def parameters(self) -> list[np.ndarray]:
        return self.encoder.parameters() + self.decoder.parameters()

    def copy(self) -> VaeModel:
        return VaeModel(self.encoder.copy(), self.decoder.copy(), self.variance_floor)


def init_vae(
    n_freqs: int = 513,
    latent_dim: int = 10,
    hidden: Sequence[int] = (512, 512),
    rng: np.random.Generator | None = None,
    variance_floor: float = 1e-6,
) -> VaeModel:
    rng = np.random.default_rng() if rng is None else rng
    hidden = list(hidden)
    acts = ["tanh"] * len(hidden) + ["identity"]
    encoder = init_mlp([n_freqs] + hidden + [2 * latent_dim], acts, rng)
    decoder = init_mlp([latent_dim] + hidden[::-1] + [n_freqs], acts, rng)
    return VaeModel(encoder, decoder, variance_floor)


def _check_finite(x, what):
    if not np.all(np.isfinite(x)):
        bad = np.argwhere(~np.isfinite(np.atleast_2d(x)))[0][0]
        raise NonFiniteError(f"non-finite {what} (row {bad})", index=int(bad))


def _encoder_input(power):
    return np.log1p(power)


def encode(model: VaeModel, power: np.ndarray):
    """Return ``(mu, var)`` for power frames of shape ``(F,)`` or ``(N, F)``."""
    power = np.asarray(power, dtype=np.float64)
    _check_finite(power, "power frame")
    if power.shape[-1] != model.n_freqs:
        raise ShapeError(f"power frame has {power.shape[-1]} bins, model expects {model.n_freqs}")
    out, _ = mlp_forward(model.encoder, _encoder_input(power))
    d = model.latent_dim
    return out[..., :d], softplus(out[..., d:])


def decode(model: VaeModel, z: np.ndarray) -> np.ndarray:
    """Speech variance ``sig_f(z) >= variance_floor`` for ``z`` of shape ``(D,)`` or ``(N, D)``."""
    z = np.asarray(z, dtype=np.float64)
    _check_finite(z, "latent")
    if z.shape[-1] != model.latent_dim:
        raise ShapeError(f"latent has {z.shape[-1]} dims, model expects {model.latent_dim}")
    raw, _ = mlp_forward(model.decoder, z)
    return softplus(raw) + model.variance_floor


def sample_latent(mu: np.ndarray, var: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """Reparameterised draw ``mu + sqrt(var) * eps`` with ``eps ~ N(0, I)``."""
    mu = np.asarray(mu, dtype=np.float64)
    return mu + np.sqrt(var) * rng.standard_normal(mu.shape)


def elbo_loss_and_grads(model: VaeModel, frames: np.ndarray, rng: np.random.Generator | None = None,
                        noise: np.ndarray | None = None):
    """Negative ELBO of a batch (summed over frames) and its exact gradients.

    Pass either ``rng`` or a fixed ``noise`` array of shape ``(N, D)``.
    Gradients are aligned with ``model.parameters()``.
    """
    frames = np.atleast_2d(np.asarray(frames, dtype=np.float64))
    n, f = frames.shape
    if f != model.n_freqs:
        raise ShapeError(f"frames have {f} bins, model expects {model.n_freqs}")
    if np.any(frames < 0):
        raise DataError("power frames must be non-negative")
    d = model.latent_dim
    if noise is None:
        noise = rng.standard_normal((n, d))

    enc_out, enc_tape = mlp_forward(model.encoder, _encoder_input(frames))
    mu, raw_var = enc_out[:, :d], enc_out[:, d:]
    var = softplus(raw_var)
    std = np.sqrt(var)
    z = mu + std * noise
    raw_s, dec_tape = mlp_forward(model.decoder, z)
    sig = softplus(raw_s) + model.variance_floor

    per_frame = 0.5 * np.sum(mu * mu + var - np.log(var), axis=1) + np.sum(np.log(sig) + frames / sig, axis=1)
    if not np.all(np.isfinite(per_frame)):
        bad = int(np.flatnonzero(~np.isfinite(per_frame))[0])
        raise NonFiniteError(f"non-finite ELBO at frame {bad}", index=bad)

    g_sig = (1.0 - frames / sig) / sig
    dec_grads, g_z = mlp_backward(model.decoder, dec_tape, g_sig * expit(raw_s))
    g_mu = mu + g_z
    g_var = 0.5 * (1.0 - 1.0 / var) + g_z * noise / (2.0 * std)
    enc_grads, _ = mlp_backward(model.encoder, enc_tape, np.hstack([g_mu, g_var * expit(raw_var)]))
    return float(per_frame.sum()), enc_grads + dec_grads


def kl_divergence(mu, var):
    """KL(N(mu, var) || N(0, 1)) summed over the last axis."""
    return 0.5 * np.sum(mu * mu + var - np.log(var) - 1.0, axis=-1)


def augment_power_scale(frames: np.ndarray, rng: np.random.Generator, high: float = 10.0) -> np.ndarray:
    """Rescale ``frames`` so their average power is ``u ~ Uniform(0, high]``.

    One ``u`` is drawn per call, so a minibatch keeps its relative frame
    levels. An all-zero input is returned unchanged.
    """
    frames = np.asarray(frames, dtype=np.float64)
    mean = frames.mean()
    u = 0.0
    while u == 0.0:
        u = high * (1.0 - rng.random())  # (0, high]
    if mean <= 0:
        return frames.copy()
    return frames * (u / mean)


class TrainingDiverged(NonFiniteError):
    """Raised when the loss becomes non-finite; ``checkpoint`` is the last good model."""

    def __init__(self, message, index=None, checkpoint=None, loss_trace=None):
        super().__init__(message, index)
        self.checkpoint = checkpoint
        self.loss_trace = loss_trace


def train(model: VaeModel, corpus: np.ndarray, config: TrainConfig = TrainConfig(), callback=None):
    """Fit ``model`` in place on power frames ``corpus`` (shape ``(N, F)``).

    Returns ``(model, loss_trace)`` where ``loss_trace[e]`` is the mean
    per-frame negative ELBO over epoch ``e``.
    """
    corpus = np.atleast_2d(np.asarray(corpus, dtype=np.float64))
    if corpus.shape[0] == 0:
        raise EmptyCorpusError("empty corpus")
    if corpus.shape[1] != model.n_freqs:
        raise ShapeError(f"corpus frames have {corpus.shape[1]} bins, model expects {model.n_freqs}")
    rng = np.random.default_rng(config.seed)
    adam = AdamState(model.parameters(), learning_rate=config.learning_rate)
    n = corpus.shape[0]
    batch = min(config.minibatch_frames, n)
    trace: list[float] = []
    checkpoint = model.copy()
    for epoch in range(config.epochs):
        order = rng.permutation(n)
        total = 0.0
        for start in range(0, n - batch + 1, batch):
            frames = augment_power_scale(corpus[order[start:start + batch]], rng, config.power_scale_max)
            try:
                loss, grads = elbo_loss_and_grads(model, frames, rng)
                adam.update(model.parameters(), [g / batch for g in grads])
            except NonFiniteError as exc:
                raise TrainingDiverged(f"training diverged in epoch {epoch}: {exc}", index=epoch,
                                       checkpoint=checkpoint, loss_trace=trace) from exc
            total += loss
        trace.append(total / (batch * (n // batch)))
        checkpoint = model.copy()
        log.info("epoch %d: loss per frame %.4f", epoch, trace[-1])
        if callback is not None:
            callback(epoch, trace[-1])
    return model, trace


def load_corpus(path: str | Path, stft_config: StftConfig = StftConfig(),
                silence_threshold: float = 1e-10) -> np.ndarray:
    """Power frames ``(N, F)`` from a directory of WAV files or a manifest file.

    A directory containing ``manifest.txt`` uses the listed paths (relative
    to the directory); otherwise every ``*.wav`` in it, sorted by name.
    Frames whose mean power is below ``silence_threshold`` are dropped.
    """
    from .signal_io import power_spectrogram, read_wav, stft

    path = Path(path)
    if path.is_dir():
        manifest = path / "manifest.txt"
        base = path
    else:
        manifest, base = path, path.parent
    if manifest.is_file():
        files = [base / line.strip() for line in manifest.read_text().splitlines() if line.strip()]
    elif path.is_dir():
        files = sorted(path.glob("*.wav"))
    else:
        raise FileNotFoundError(path)
    if not files:
        raise EmptyCorpusError(f"empty corpus: no WAV files in {path}")
    chunks = []
    for file in files:
        power = power_spectrogram(stft(read_wav(file), stft_config)).T
        chunks.append(power[power.mean(axis=1) >= silence_threshold])
    frames = np.concatenate(chunks)
    if frames.shape[0] == 0:
        raise EmptyCorpusError(f"empty corpus: every frame in {path} is silent")
    return frames


# -- persistence ---------------------------------------------------------

def _layers(model):
    return model.encoder.layers + model.decoder.layers


def save_model(model: VaeModel, path: str | Path) -> None:
    """Write the little-endian binary model file (magic ``VAENMF01``)."""
    layers = _layers(model)
    parts = [MAGIC, struct.pack("<QQQQd", model.latent_dim, model.n_freqs, len(layers),
                                len(model.encoder.layers), model.variance_floor)]
    for layer in layers:
        parts.append(struct.pack("<QQQ", layer.in_dim, layer.out_dim, ACTIVATIONS.index(layer.activation)))
        parts.append(np.ascontiguousarray(layer.weights, dtype="<f8").tobytes())
        parts.append(np.ascontiguousarray(layer.bias, dtype="<f8").tobytes())
    Path(path).write_bytes(b"".join(parts))


def load_model(path: str | Path, expected_freqs: int | None = None) -> VaeModel:
    data = Path(path).read_bytes()
    if data[:6] != MAGIC[:6]:
        raise ModelFormatError(f"{path}: not a VAE model file")
    if data[:8] != MAGIC:
        raise ModelFormatError(f"{path}: unsupported model version {data[6:8]!r}")
    pos = len(MAGIC)

    def take(n):
        nonlocal pos
        if pos + n > len(data):
            raise ModelFormatError(f"{path}: truncated model file")
        chunk = data[pos:pos + n]
        pos += n
        return chunk

    d, f, n_layers, n_enc, floor = struct.unpack("<QQQQd", take(40))
    if not 0 < n_enc < n_layers or n_layers > 1000:
        raise ModelFormatError(f"{path}: corrupt layer counts ({n_enc} of {n_layers})")
    layers = []
    for _ in range(n_layers):
        n_in, n_out, act = struct.unpack("<QQQ", take(24))
        if act >= len(ACTIVATIONS) or n_in * n_out > 1 << 30:
            raise ModelFormatError(f"{path}: corrupt layer header")
        w = np.frombuffer(take(8 * n_in * n_out), dtype="<f8").reshape(n_out, n_in).astype(np.float64)
        b = np.frombuffer(take(8 * n_out), dtype="<f8").astype(np.float64)
        layers.append(DenseLayer(w, b, ACTIVATIONS[act]))
    if pos != len(data):
        raise ModelFormatError(f"{path}: {len(data) - pos} trailing bytes")
    try:
        model = VaeModel(Mlp(layers[:n_enc]), Mlp(layers[n_enc:]), floor)
    except ShapeError as exc:
        raise ModelFormatError(f"{path}: inconsistent shapes: {exc}") from exc
    if model.latent_dim != d or model.n_freqs != f:
        raise ModelFormatError(f"{path}: header says D={d}, F={f} but layers give "
                               f"D={model.latent_dim}, F={model.n_freqs}")
    if expected_freqs is not None and f != expected_freqs:
        raise ShapeError(f"{path}: model has F={f} frequency bins, pipeline expects {expected_freqs}")
    return model
