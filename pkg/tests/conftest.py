"""Shared fixtures. The trained-model fixtures are session-scoped: the
desk-scale end-to-end runs back both the acceptance criteria and several
module-level checks, so they are trained once per session."""

from __future__ import annotations

import numpy as np
import pytest

from slidelm import corpus as C
from slidelm import trainer as T
from slidelm.encoder import EncoderConfig
from slidelm.langmodel import ModelConfig, SlideLanguageModel


def tiny_encoder_config(**overrides) -> EncoderConfig:
    cfg = dict(d_in=5, d_model=8, n_latents=4, n_self_layers=1,
               q_heads=2, kv_groups=1, d_embed=6)
    cfg.update(overrides)
    return EncoderConfig(**cfg)


def tiny_model_config(vocab_size: int = 0, **enc_overrides) -> ModelConfig:
    return ModelConfig(encoder=tiny_encoder_config(**enc_overrides),
                       vocab_size=vocab_size, d_text=8, text_layers=1,
                       text_heads=2, d_dec=8, dec_layers=2, dec_heads=2,
                       adapter_hidden=8, max_text_len=128, max_dec_len=256)


@pytest.fixture(scope="session")
def vocab():
    return C.default_vocabulary()


def desk_model_config() -> ModelConfig:
    return ModelConfig(encoder=EncoderConfig(d_in=64), dtype="float32")


def desk_train_config() -> T.TrainConfig:
    return T.TrainConfig(seed=0, budget=16384)


@pytest.fixture(scope="session")
def desk_corpus():
    spec = C.CorpusSpec(n_specimens=400, n_classes=2, d=64, class_separation=2.0)
    return C.generate_corpus(spec, 7)


@pytest.fixture(scope="session")
def desk_splits(desk_corpus):
    return T.split_records(desk_corpus, (0.7, 0.15, 0.15), seed=7)


@pytest.fixture(scope="session")
def trained(desk_corpus, desk_splits, vocab):
    """Stage-1 + stage-2 trained desk model plus wall-clock seconds."""
    import time

    model = SlideLanguageModel(desk_model_config(), vocab, seed=0)
    cfg = desk_train_config()
    t0 = time.time()
    r1 = T.train_stage1(model, desk_corpus, cfg, desk_splits["train"])
    stage1_model = {n: p.data.copy() for n, p in model.named_params().items()}
    r2 = T.train_stage2(model, desk_corpus, cfg, desk_splits["train"],
                        desk_splits["val"])
    elapsed = time.time() - t0
    return {"model": model, "cfg": cfg, "elapsed": elapsed,
            "stage1_state": stage1_model, "results": (r1, r2)}


@pytest.fixture(scope="session")
def survival_corpus():
    spec = C.CorpusSpec(n_specimens=300, n_classes=2, d=64, class_separation=2.0,
                        survival_beta=C.survival_beta_preset(2, 64, 1.0),
                        censor_prob=0.3)
    return C.generate_corpus(spec, 11)


@pytest.fixture(scope="session")
def survival_splits(survival_corpus):
    return T.split_records(survival_corpus, (0.7, 0.15, 0.15), seed=11)


@pytest.fixture(scope="session")
def survival_trained(trained, survival_corpus, survival_splits, vocab):
    """Fine-tuned survival model (from the trained checkpoint) plus the
    specialist trained from scratch with the same architecture."""
    import copy

    cfg = desk_train_config()
    model = SlideLanguageModel(desk_model_config(), vocab, seed=0)
    for name, p in model.named_params().items():
        p.data = trained["model"].named_params()[name].data.copy()
    base_pooler_before = {n: p.data.copy()
                          for n, p in model.pooler.named_params().items()}
    result = T.finetune_survival(model, survival_corpus, cfg,
                                 survival_splits["train"])
    specialist, spec_result = T.train_specialist(
        desk_model_config(), vocab, survival_corpus, cfg,
        survival_splits["train"], seed=99)
    return {"model": model, "specialist": specialist, "cfg": cfg,
            "result": result, "spec_result": spec_result,
            "base_pooler_before": base_pooler_before}
