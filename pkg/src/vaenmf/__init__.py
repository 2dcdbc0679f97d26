"""Single-channel speech enhancement with a VAE speech prior and an NMF noise model.

A VAE trained on clean-speech power spectra supplies the speech variance,
a non-negative matrix factorisation with Gamma priors models the noise, and
the posterior over both is sampled by MCMC. The enhanced signal is the
Wiener-filtered mixture.
"""

from .config import (
    Config,
    EnhanceConfig,
    McmcConfig,
    PriorConfig,
    StftConfig,
    SynthConfig,
    TrainConfig,
    load_config,
)
from .enhance import EnhanceResult, enhance, wiener_filter
from .errors import ConfigError, DataError, VaeNmfError
from .evaluation import mix_at_snr, run_experiment, sdr, synth_noise, synth_speech
from .mcmc import PosteriorSummary, run_chain
from .signal_io import ComplexSpectrogram, SampleBuffer, istft, read_wav, stft, write_wav
from .vae import VaeModel, init_vae, load_model, save_model, train

__version__ = "0.1.0"

__all__ = [
    "ComplexSpectrogram",
    "Config",
    "ConfigError",
    "DataError",
    "EnhanceConfig",
    "EnhanceResult",
    "McmcConfig",
    "PosteriorSummary",
    "PriorConfig",
    "SampleBuffer",
    "StftConfig",
    "SynthConfig",
    "TrainConfig",
    "VaeModel",
    "VaeNmfError",
    "enhance",
    "init_vae",
    "istft",
    "load_config",
    "load_model",
    "mix_at_snr",
    "read_wav",
    "run_chain",
    "run_experiment",
    "save_model",
    "sdr",
    "stft",
    "synth_noise",
    "synth_speech",
    "train",
    "wiener_filter",
    "write_wav",
]
