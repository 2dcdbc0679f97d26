"""Configuration records and the JSON config file.

A config file is a single JSON object with one optional section per record::

    {
      "stft":    {"window_len": 1024, "hop": 256},
      "train":   {"epochs": 20, "seed": 0},
      "prior":   {"n_bases": 5},
      "mcmc":    {"burn_in": 100, "samples": 50},
      "enhance": {"input_power": 1.0},
      "synth":   {"n_utterances": 20, "noise_types": ["low-rank-stationary"]}
    }

Missing sections and fields fall back to the defaults below.
"""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

from .errors import ConfigError

NOISE_TYPES = ("low-rank-stationary", "hum", "filtered-noise")


@dataclass(frozen=True)
class StftConfig:
    window_len: int = 1024
    hop: int = 256
    window: str = "hann"

    def __post_init__(self):
        if self.window_len <= 0 or self.window_len % 2:
            raise ConfigError(f"window_len must be a positive even integer, got {self.window_len}")
        if not 0 < self.hop <= self.window_len:
            raise ConfigError(f"hop must satisfy 0 < hop <= window_len, got {self.hop}")
        if self.window != "hann":
            raise ConfigError(f"unsupported window {self.window!r}")
        # periodic Hann is COLA only for hops of window_len / (2m)
        if self.window_len % self.hop or (self.window_len // self.hop) % 2:
            raise ConfigError(
                f"hop {self.hop} does not give constant overlap-add for a "
                f"{self.window_len}-sample Hann window"
            )

    @property
    def n_freqs(self) -> int:
        return self.window_len // 2 + 1


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 20
    minibatch_frames: int = 256
    learning_rate: float = 1e-3
    power_scale_max: float = 10.0
    seed: int = 0
    variance_floor: float = 1e-6
    latent_dim: int = 10
    hidden_units: tuple[int, ...] = (512, 512)
    silence_threshold: float = 1e-10

    def __post_init__(self):
        object.__setattr__(self, "hidden_units", tuple(int(h) for h in self.hidden_units))
        if self.epochs <= 0 or self.minibatch_frames <= 0 or self.latent_dim <= 0:
            raise ConfigError("epochs, minibatch_frames and latent_dim must be positive")
        if any(h <= 0 for h in self.hidden_units):
            raise ConfigError("hidden_units must be positive")
        if not self.learning_rate > 0:
            raise ConfigError("learning_rate must be positive")
        if not self.power_scale_max > 0:
            raise ConfigError("power_scale_max must be positive (augmentation range is (0, max])")
        if not self.variance_floor > 0:
            raise ConfigError("variance_floor must be positive")


@dataclass(frozen=True)
class PriorConfig:
    """Gamma priors on the noise bases (``a0``, ``b0``) and activations (``a1``, ``b1``).

    ``b1=None`` means ``n_bases / scale`` with ``scale`` the mean power of the
    utterance being enhanced.
    """

    a0: float = 1.0
    b0: float = 1.0
    a1: float = 1.0
    b1: float | None = None
    n_bases: int = 5

    def __post_init__(self):
        values = [self.a0, self.b0, self.a1] + ([] if self.b1 is None else [self.b1])
        if not all(v > 0 for v in values):
            raise ConfigError("prior hyperparameters must be positive")
        if self.n_bases <= 0:
            raise ConfigError("n_bases must be positive")

    def activation_rate(self, scale: float) -> float:
        if self.b1 is not None:
            return self.b1
        if not scale > 0:
            raise ConfigError("cannot derive b1 from a spectrogram with zero average power")
        return self.n_bases / scale


@dataclass(frozen=True)
class McmcConfig:
    burn_in: int = 100
    samples: int = 50
    # variance (not standard deviation) of the Gaussian random-walk proposal on z
    proposal_sigma: float = 0.01
    seed: int = 0
    # "mh": GIG conditionals used as Metropolis-Hastings proposals (exact chain);
    # "aux-gibbs": GIG draws accepted unconditionally
    noise_update: str = "mh"

    def __post_init__(self):
        if self.noise_update not in ("mh", "aux-gibbs"):
            raise ConfigError(f"noise_update must be 'mh' or 'aux-gibbs', got {self.noise_update!r}")
        if self.burn_in < 0 or self.samples < 1:
            raise ConfigError("need burn_in >= 0 and samples >= 1")
        if not self.proposal_sigma > 0:
            raise ConfigError("proposal_sigma must be positive")


@dataclass(frozen=True)
class EnhanceConfig:
    # mean power the noisy spectrogram is rescaled to before inference
    input_power: float = 1.0

    def __post_init__(self):
        if not self.input_power > 0:
            raise ConfigError("input_power must be positive")


@dataclass(frozen=True)
class SynthConfig:
    n_utterances: int = 20
    duration: float = 3.0
    snr_db: float = 5.0
    sample_rate: int = 16000
    n_harmonics: int = 40
    f0_range: tuple[float, float] = (100.0, 220.0)
    envelope_bandwidth: float = 200.0
    silence_prob: float = 0.15
    breath_level: float = 0.01
    noise_types: tuple[str, ...] = ("low-rank-stationary",)
    noise_rank: int = 3
    corpus_minutes: float = 30.0
    seed: int = 1

    def __post_init__(self):
        object.__setattr__(self, "f0_range", tuple(float(v) for v in self.f0_range))
        object.__setattr__(self, "noise_types", tuple(self.noise_types))
        if self.n_utterances <= 0 or self.duration <= 0 or self.sample_rate <= 0:
            raise ConfigError("n_utterances, duration and sample_rate must be positive")
        if self.n_harmonics <= 0 or self.noise_rank <= 0:
            raise ConfigError("n_harmonics and noise_rank must be positive")
        lo, hi = self.f0_range
        if not 0 < lo <= hi:
            raise ConfigError("f0_range must be ordered and positive")
        if not 0.0 <= self.silence_prob < 1.0:
            raise ConfigError("silence_prob must lie in [0, 1)")
        if not (self.snr_db == self.snr_db and abs(self.snr_db) != float("inf")):
            raise ConfigError("snr_db must be finite")
        unknown = set(self.noise_types) - set(NOISE_TYPES)
        if unknown or not self.noise_types:
            raise ConfigError(f"noise_types must be a non-empty subset of {NOISE_TYPES}")


@dataclass(frozen=True)
class Config:
    stft: StftConfig = field(default_factory=StftConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    prior: PriorConfig = field(default_factory=PriorConfig)
    mcmc: McmcConfig = field(default_factory=McmcConfig)
    enhance: EnhanceConfig = field(default_factory=EnhanceConfig)
    synth: SynthConfig = field(default_factory=SynthConfig)

    def with_seed(self, seed: int) -> Config:
        """Return a copy where every seeded section uses ``seed``."""
        return dataclasses.replace(
            self,
            train=dataclasses.replace(self.train, seed=seed),
            mcmc=dataclasses.replace(self.mcmc, seed=seed),
            synth=dataclasses.replace(self.synth, seed=seed),
        )


_SECTIONS = {
    "stft": StftConfig,
    "train": TrainConfig,
    "prior": PriorConfig,
    "mcmc": McmcConfig,
    "enhance": EnhanceConfig,
    "synth": SynthConfig,
}


def _build(cls, section: str, values: Any):
    if not isinstance(values, dict):
        raise ConfigError(f"section {section!r} must be a JSON object")
    known = {f.name for f in dataclasses.fields(cls)}
    extra = set(values) - known
    if extra:
        raise ConfigError(f"unknown field(s) in section {section!r}: {sorted(extra)}")
    try:
        return cls(**values)
    except TypeError as exc:
        raise ConfigError(f"bad value in section {section!r}: {exc}") from exc


def config_from_dict(data: dict) -> Config:
    if not isinstance(data, dict):
        raise ConfigError("config must be a JSON object")
    extra = set(data) - set(_SECTIONS)
    if extra:
        raise ConfigError(f"unknown config section(s): {sorted(extra)}")
    return Config(**{name: _build(cls, name, data[name]) for name, cls in _SECTIONS.items() if name in data})


def config_to_dict(config: Config) -> dict:
    out = {}
    for name in _SECTIONS:
        section = dataclasses.asdict(getattr(config, name))
        out[name] = {k: list(v) if isinstance(v, tuple) else v for k, v in section.items()}
    return out


def load_config(path: str | Path | None) -> Config:
    """Read a JSON config file; ``None`` gives the defaults.

    Malformed JSON raises ``ConfigError`` naming the line and column.
    """
    if path is None:
        return Config()
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}:{exc.lineno}:{exc.colno}: invalid JSON: {exc.msg}") from exc
    return config_from_dict(data)
