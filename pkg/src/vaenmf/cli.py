"""Command-line entry point: ``vaenmf {train,enhance,eval,synth}``.

Exit status: 0 success, 1 internal error, 2 usage or configuration error,
3 data error.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

import numpy as np

from .config import Config, load_config
from .enhance import enhance, write_diagnostics
from .errors import ConfigError, DataError
from .evaluation import evaluation_utterance, run_experiment, synth_speech, write_report
from .signal_io import read_wav, write_wav
from .vae import init_vae, load_corpus, load_model, save_model, train

log = logging.getLogger("vaenmf")

EXIT_OK, EXIT_INTERNAL, EXIT_USAGE, EXIT_DATA = 0, 1, 2, 3


def _config(args) -> Config:
    config = load_config(args.config)
    if args.seed is not None:
        config = config.with_seed(args.seed)
    return config


def _model(path, config: Config):
    if not Path(path).is_file():
        raise ConfigError(f"model file not found: {path}")
    return load_model(path, expected_freqs=config.stft.n_freqs)


def cmd_train(args) -> int:
    config = _config(args)
    tc = config.train
    corpus_path = Path(args.corpus)
    if not corpus_path.exists():
        raise ConfigError(f"corpus not found: {corpus_path}")
    corpus = load_corpus(corpus_path, config.stft, tc.silence_threshold)
    log.info("training on %d frames", corpus.shape[0])
    rng = np.random.default_rng(np.random.SeedSequence([tc.seed, 1]))
    model = init_vae(config.stft.n_freqs, tc.latent_dim, tc.hidden_units, rng, tc.variance_floor)
    model, trace = train(model, corpus, tc)
    save_model(model, args.out)
    log.info("final loss per frame %.4f; model written to %s", trace[-1], args.out)
    return EXIT_OK


def cmd_enhance(args) -> int:
    config = _config(args)
    model = _model(args.model, config)
    if not Path(args.input).is_file():
        raise ConfigError(f"input file not found: {args.input}")
    noisy = read_wav(args.input)
    result = enhance(noisy, model, config.prior, config.mcmc, config.stft, config.enhance)
    write_wav(args.out, result.enhanced)
    if args.diag:
        write_diagnostics(args.diag, result)
    log.info("enhanced %s in %.2f s, z acceptance %.3f", args.input, result.runtime, result.acceptance_rate)
    return EXIT_OK


def cmd_eval(args) -> int:
    config = _config(args)
    model = _model(args.model, config)
    report = run_experiment(config.synth, model, config.prior, config.mcmc, config.stft, config.enhance,
                            jobs=args.jobs)
    write_report(args.report, report, timing=args.timing)
    for row in report.aggregates:
        log.info("%s: SDR %.2f -> %.2f dB", row.noise_type, row.sdr_in_db, row.sdr_out_db)
    return EXIT_OK


def cmd_synth(args) -> int:
    """Write a clean training corpus and the evaluation mixtures under ``--out``."""
    config = _config(args)
    sc = config.synth
    out = Path(args.out)
    train_dir, eval_dir = out / "train", out / "eval"
    train_dir.mkdir(parents=True, exist_ok=True)
    eval_dir.mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(np.random.SeedSequence([sc.seed, 0xC0]))
    n_train = max(1, int(round(sc.corpus_minutes * 60.0 / sc.duration)))
    names = []
    for i in range(n_train):
        name = f"speech_{i:04d}.wav"
        write_wav(train_dir / name, synth_speech(sc, rng))
        names.append(name)
    (train_dir / "manifest.txt").write_text("\n".join(names) + "\n")
    for nt in sc.noise_types:
        for i in range(sc.n_utterances):
            clean, noisy = evaluation_utterance(sc, i, nt)
            write_wav(eval_dir / f"utt{i:03d}_clean.wav", clean)
            write_wav(eval_dir / f"utt{i:03d}_{nt}_noisy.wav", noisy)
    log.info("wrote %d training and %d evaluation files under %s", n_train,
             sc.n_utterances * (1 + len(sc.noise_types)), out)
    return EXIT_OK


def _positive_int(text):
    value = int(text)
    if value < 1:
        raise argparse.ArgumentTypeError("must be a positive integer")
    return value


def _seed(text):
    value = int(text)
    if not 0 <= value < 2 ** 64:
        raise argparse.ArgumentTypeError("seed must be an unsigned 64-bit integer")
    return value


def build_parser() -> argparse.ArgumentParser:
    # Global options are accepted before or after the subcommand; the copies on
    # the subparsers only set a value when given.
    def add_common(p, default):
        p.add_argument("--seed", type=_seed, default=default(None), help="override every seed in the config")
        p.add_argument("--jobs", type=_positive_int, default=default(1),
                       help="utterance-level worker processes (eval)")
        p.add_argument("-v", "--verbose", action="count", default=default(0), help="-v info, -vv debug")

    parser = argparse.ArgumentParser(prog="vaenmf", description=__doc__.splitlines()[0])
    add_common(parser, lambda v: v)
    common = argparse.ArgumentParser(add_help=False)
    add_common(common, lambda v: argparse.SUPPRESS)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", parents=[common], help="train the speech VAE on a corpus of clean WAV files")
    p.add_argument("--corpus", required=True, help="directory of WAV files or a manifest file")
    p.add_argument("--config", help="JSON config file")
    p.add_argument("--out", required=True, help="model file to write")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("enhance", parents=[common], help="enhance one noisy WAV file")
    p.add_argument("--model", required=True)
    p.add_argument("--in", dest="input", required=True, help="noisy mono WAV")
    p.add_argument("--out", required=True, help="enhanced WAV to write (16-bit PCM)")
    p.add_argument("--diag", help="write per-iteration chain diagnostics to this CSV")
    p.add_argument("--config", help="JSON config file")
    p.set_defaults(func=cmd_enhance)

    p = sub.add_parser("eval", parents=[common], help="run the synthetic SDR experiment")
    p.add_argument("--model", required=True)
    p.add_argument("--config", help="JSON config file")
    p.add_argument("--report", required=True, help="CSV report to write")
    p.add_argument("--timing", action="store_true",
                   help="fill the runtime_s column (makes the report non-reproducible)")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("synth", parents=[common], help="write the synthetic training and evaluation corpora")
    p.add_argument("--config", help="JSON config file")
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=cmd_synth)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    level = logging.WARNING if args.verbose == 0 else logging.INFO if args.verbose == 1 else logging.DEBUG
    # leave handlers installed by an embedding application alone
    logging.basicConfig(format="%(levelname)s %(name)s: %(message)s")
    logging.getLogger().setLevel(level)
    logging.captureWarnings(True)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"vaenmf {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except DataError as exc:
        print(f"vaenmf {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except OSError as exc:
        print(f"vaenmf {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except Exception as exc:  # noqa: BLE001 - last-resort report
        log.debug("internal error", exc_info=True)
        print(f"vaenmf {args.command}: internal error: {exc!r}", file=sys.stderr)
        return EXIT_INTERNAL
    finally:
        logging.captureWarnings(False)


if __name__ == "__main__":
    sys.exit(main())
