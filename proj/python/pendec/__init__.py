"""Penalty decoding engine: reference language models, decoders and metrics."""

import json as _json

from . import _core
from ._core import (
    ENGINE_VERSION,
    ConfigError,
    LanguageModel,
    PendecError,
    cache_lm,
    coherence,
    diversity,
    eta_support,
    length_penalty,
    load_model,
    rep_n,
    repetition_penalty,
    save_model,
    softmax,
    sr_ngram,
    sr_nucleus,
    table_lm,
    top_k_support,
    top_p_support,
    train_ngram,
    typical_support,
)

__all__ = [
    "ENGINE_VERSION",
    "ConfigError",
    "LanguageModel",
    "PendecError",
    "cache_lm",
    "coherence",
    "diversity",
    "eta_support",
    "generate",
    "label",
    "length_penalty",
    "load_model",
    "rep_n",
    "repetition_penalty",
    "run_experiment",
    "save_model",
    "softmax",
    "sr_ngram",
    "sr_nucleus",
    "table_lm",
    "top_k_support",
    "top_p_support",
    "train_ngram",
    "typical_support",
]


def _decoder_json(decoder):
    if isinstance(decoder, str):
        decoder = {"strategy": decoder}
    return _json.dumps(decoder)


def generate(model, prefix, decoder="greedy", max_new_tokens=128, seed=0, nucleus_ks=(1, 5, 10)):
    """Decode from `prefix` (token ids).

    `decoder` is a strategy name or a dict such as
    {"strategy": "penalty", "alpha": 1.5, "window": 100}.
    """
    return _core._generate(
        model, list(prefix), _decoder_json(decoder), max_new_tokens, seed, list(nucleus_ks)
    )


def label(decoder):
    return _core.strategy_label(_decoder_json(decoder))


def run_experiment(spec_path, jobs=0):
    """Run an experiment spec file; returns (csv_text, table_dict, manifest_dict)."""
    csv_text, table, manifest = _core._run_spec(str(spec_path), jobs)
    return csv_text, _json.loads(table), _json.loads(manifest)
