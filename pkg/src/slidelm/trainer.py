"""Training stages: joint contrastive + dialogue stage 1, decoder-only
stage 2 with the slide encoder frozen, and Cox survival fine-tuning with
a fresh pooling head. Also the specialist-from-scratch comparison run."""

from __future__ import annotations

import copy
import json
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from . import autodiff as ad
from . import nn
from .autodiff import Tensor
from .corpus import (ContextRates, Corpus, SpecimenRecord, Vocabulary,
                     build_chat_examples, build_matching_example,
                     complementary_example, render_chat)
from .corpus.types import ChatExample
from .encoder import pool_base
from .langmodel import ModelConfig, SlideLanguageModel, pad_batch
from .losses import chat_loss, contrastive_loss, cox_partial_nll, total_loss
from .optim import AdamW, GroupConfig
from .packer import PackSkeleton, concat, pack

PASS_KINDS = ("report_generation", "yes_no", "open_ended", "multiple_choice", "matching")
CORE_KINDS = PASS_KINDS[:4]


@dataclass(frozen=True)
class StageConfig:
    lr: float
    epochs: int
    lr_text: float | None = None
    lr_head: float | None = None
    weight_decay_encoder: float = 0.0
    weight_decay: float = 0.0
    beta1: float = 0.9
    beta2: float = 0.95
    warmup_steps: int = 50


@dataclass
class TrainConfig:
    lambda_con: float = 0.25
    lambda_chat: float = 1.0
    rates: ContextRates = field(default_factory=ContextRates)
    mismatch_prob: float = 0.5
    budget: int = 4096
    seed: int = 0
    early_stop_patience: int = 3
    stage1: StageConfig = field(default_factory=lambda: StageConfig(
        lr=3e-3, epochs=4, lr_text=1e-3, weight_decay_encoder=0.1, warmup_steps=50))
    stage2: StageConfig = field(default_factory=lambda: StageConfig(
        lr=2e-3, epochs=12, warmup_steps=50))
    survival: StageConfig = field(default_factory=lambda: StageConfig(
        lr=1e-3, epochs=30, lr_head=3e-3, weight_decay=1e-4, beta2=0.98,
        warmup_steps=50))

    @staticmethod
    def paper() -> "TrainConfig":
        """Published hyperparameters; the desk defaults above are scaled
        for from-scratch toy models and the <10 min budget."""
        return TrainConfig(
            stage1=StageConfig(lr=1e-4, epochs=1, lr_text=2e-5,
                               weight_decay_encoder=0.1, warmup_steps=500),
            stage2=StageConfig(lr=2e-5, epochs=16, warmup_steps=500),
            survival=StageConfig(lr=1e-4, epochs=1, lr_head=1e-3,
                                 weight_decay=1e-4, beta2=0.98,
                                 warmup_steps=4000),
        )


@dataclass
class TrainResult:
    steps: int = 0
    stats: dict = field(default_factory=dict)
    log: list[dict] = field(default_factory=list)


def split_records(corpus: Corpus, fractions=(0.7, 0.15, 0.15),
                  seed: int = 0) -> dict[str, list[SpecimenRecord]]:
    if abs(sum(fractions) - 1.0) > 1e-9:
        raise ValueError("split fractions must sum to 1")
    order = np.random.default_rng(seed).permutation(len(corpus.records))
    n_train = int(round(fractions[0] * len(order)))
    n_val = int(round(fractions[1] * len(order)))
    recs = [corpus.records[i] for i in order]
    return {"train": recs[:n_train],
            "val": recs[n_train:n_train + n_val],
            "test": recs[n_train + n_val:]}


def _log_step(result: TrainResult, fh, **fields) -> None:
    result.log.append(fields)
    if fh is not None:
        fh.write(json.dumps(fields) + "\n")


def _epoch_plan(records: list[SpecimenRecord], corpus: Corpus, cfg: TrainConfig,
                rng: np.random.Generator) -> tuple[dict, dict]:
    """Per-record examples for one epoch: one per task kind, plus the
    complementary extras sampled at the configured rate."""
    plan: dict[str, dict[str, ChatExample]] = {}
    extras: dict[str, ChatExample] = {}
    for record in records:
        examples = build_chat_examples(record, cfg.rates, rng,
                                       corpus.spec.n_classes, corpus.seed)
        plan[record.specimen_id] = {ex.task_kind: ex for ex in examples}
        plan[record.specimen_id]["matching"] = build_matching_example(
            record, corpus, rng, cfg.mismatch_prob, cfg.rates)
        if rng.uniform() < cfg.rates.complementary:
            extras[record.specimen_id] = complementary_example(record, corpus, rng, cfg.rates)
    return plan, extras


def _chat_batch(model: SlideLanguageModel, latents: Tensor | None,
                seqs: list, lam: float = 1.0) -> Tensor:
    logits, _, ids, _ = model.decode(latents, seqs)
    masks, _ = pad_batch([s.role_mask for s in seqs])
    return chat_loss(logits[:, :-1], ids[:, 1:], masks[:, 1:], "mean") * lam


def _prepare_seqs(model: SlideLanguageModel, examples: list[ChatExample]):
    return [model.prepare_chat(render_chat(ex, model.vocab)) for ex in examples]


def _pack_records(records: list[SpecimenRecord], order: np.ndarray,
                  budget: int) -> list[PackSkeleton]:
    queue = [(records[i].specimen_id, records[i].tiles.total_tiles) for i in order]
    return pack(queue, budget)


def train_stage1(model: SlideLanguageModel, corpus: Corpus, cfg: TrainConfig,
                 records: list[SpecimenRecord] | None = None,
                 log_path: str | Path | None = None) -> TrainResult:
    """Joint objective; decoder frozen; per-group LRs with a lower text
    encoder LR and weight decay on the slide encoder only."""
    records = corpus.records if records is None else records
    stage = cfg.stage1
    model.set_trainable(True)
    model.decoder.set_trainable(False)
    model.survival.set_trainable(False)
    trainable = model.trainable_params()

    def group(name: str) -> GroupConfig:
        if name.startswith("text."):
            lr = stage.lr if stage.lr_text is None else stage.lr_text
            return GroupConfig(lr, 0.0, stage.beta1, stage.beta2)
        if name.startswith("encoder."):
            return GroupConfig(stage.lr, stage.weight_decay_encoder,
                               stage.beta1, stage.beta2)
        return GroupConfig(stage.lr, stage.weight_decay, stage.beta1, stage.beta2)

    opt = AdamW(trainable, group, stage.warmup_steps)
    rng = np.random.default_rng((cfg.seed, 1))
    result = TrainResult(stats={"contrastive_evals": 0, "template_passes": 0})
    fh = open(log_path, "w") if log_path else None
    try:
        for epoch in range(stage.epochs):
            plan, extras = _epoch_plan(records, corpus, cfg, rng)
            for kind in PASS_KINDS:
                result.stats["template_passes"] += 1
                order = rng.permutation(len(records))
                for skel in _pack_records(records, order, cfg.budget):
                    batch = concat(skel, corpus)
                    latents = model.encoder.encode(batch)
                    v = pool_base(latents, model.pooler)
                    para = [corpus.by_id(sid).paraphrases[int(rng.integers(5))]
                            for sid in skel.member_ids]
                    t = model.text.encode_batch(
                        [model.vocab.tokenize(p).ids for p in para])
                    l_con = contrastive_loss(v, t, model.tau())
                    result.stats["contrastive_evals"] += 1

                    examples, owner = [], []
                    for mi, sid in enumerate(skel.member_ids):
                        examples.append(plan[sid][kind])
                        owner.append(mi)
                        if kind == "yes_no" and sid in extras:
                            examples.append(extras[sid])
                            owner.append(mi)
                    seqs = _prepare_seqs(model, examples)
                    l_chat = _chat_batch(model, latents[np.asarray(owner)], seqs)
                    loss = total_loss(l_con, l_chat, cfg.lambda_con, cfg.lambda_chat)
                    loss.backward()
                    scale = opt.step()
                    model.clamp_tau()
                    opt.zero_grad()
                    result.steps += 1
                    _log_step(result, fh, stage=1, epoch=epoch, kind=kind,
                              step=result.steps, loss=float(loss.data),
                              loss_con=float(l_con.data), loss_chat=float(l_chat.data),
                              lr=stage.lr * scale, tokens=int(skel.total))
    finally:
        if fh:
            fh.close()
    return result


def _cache_latents(model: SlideLanguageModel, corpus: Corpus,
                   records: list[SpecimenRecord], budget: int) -> dict[str, np.ndarray]:
    cache: dict[str, np.ndarray] = {}
    order = np.arange(len(records))
    with ad.no_grad():
        for skel in _pack_records(records, order, budget):
            latents = model.encoder.encode(concat(skel, corpus))
            for i, sid in enumerate(skel.member_ids):
                cache[sid] = latents.data[i].copy()
    return cache


def _val_chat_loss(model: SlideLanguageModel, corpus: Corpus, cfg: TrainConfig,
                   records: list[SpecimenRecord],
                   cache: dict[str, np.ndarray]) -> float:
    rng = np.random.default_rng((cfg.seed, 99))
    plan, _ = _epoch_plan(records, corpus, cfg, rng)
    losses = []
    with ad.no_grad():
        for kind in PASS_KINDS:
            for chunk_start in range(0, len(records), 32):
                chunk = records[chunk_start:chunk_start + 32]
                seqs = _prepare_seqs(model, [plan[r.specimen_id][kind] for r in chunk])
                lat = Tensor(np.stack([cache[r.specimen_id] for r in chunk]))
                losses.append(float(_chat_batch(model, lat, seqs).data))
    return float(np.mean(losses))


def train_stage2(model: SlideLanguageModel, corpus: Corpus, cfg: TrainConfig,
                 records: list[SpecimenRecord] | None = None,
                 val_records: list[SpecimenRecord] | None = None,
                 log_path: str | Path | None = None) -> TrainResult:
    """Contrastive objective discarded; encoder and text encoder frozen;
    adapter + decoder trained with a fresh optimizer and schedule."""
    records = corpus.records if records is None else records
    stage = cfg.stage2
    model.set_trainable(False)
    model.adapter.set_trainable(True)
    model.decoder.set_trainable(True)
    trainable = model.trainable_params()

    def group(_: str) -> GroupConfig:
        return GroupConfig(stage.lr, stage.weight_decay, stage.beta1, stage.beta2)

    opt = AdamW(trainable, group, stage.warmup_steps)
    rng = np.random.default_rng((cfg.seed, 2))
    result = TrainResult(stats={"contrastive_evals": 0, "epochs_run": 0})
    cache = _cache_latents(model, corpus, records, cfg.budget)
    val_cache = (_cache_latents(model, corpus, val_records, cfg.budget)
                 if val_records else {})
    best_val, best_state, since_best = np.inf, None, 0
    fh = open(log_path, "w") if log_path else None
    try:
        for epoch in range(stage.epochs):
            plan, extras = _epoch_plan(records, corpus, cfg, rng)
            for kind in PASS_KINDS:
                order = rng.permutation(len(records))
                for skel in _pack_records(records, order, cfg.budget):
                    examples, rows = [], []
                    for sid in skel.member_ids:
                        examples.append(plan[sid][kind])
                        rows.append(cache[sid])
                        if kind == "yes_no" and sid in extras:
                            examples.append(extras[sid])
                            rows.append(cache[sid])
                    seqs = _prepare_seqs(model, examples)
                    loss = _chat_batch(model, Tensor(np.stack(rows)), seqs,
                                       cfg.lambda_chat)
                    loss.backward()
                    scale = opt.step()
                    opt.zero_grad()
                    result.steps += 1
                    _log_step(result, fh, stage=2, epoch=epoch, kind=kind,
                              step=result.steps, loss=float(loss.data),
                              lr=stage.lr * scale, tokens=int(skel.total))
            result.stats["epochs_run"] += 1
            if val_records:
                val = _val_chat_loss(model, corpus, cfg, val_records, val_cache)
                _log_step(result, fh, stage=2, epoch=epoch, val_loss=val)
                if val < best_val - 1e-6:
                    best_val, since_best = val, 0
                    best_state = {n: p.data.copy() for n, p in trainable.items()}
                else:
                    since_best += 1
                    if since_best >= cfg.early_stop_patience:
                        break
        if best_state is not None:
            for n, p in trainable.items():
                p.data = best_state[n]
    finally:
        if fh:
            fh.close()
    return result


def finetune_survival(model: SlideLanguageModel, corpus: Corpus, cfg: TrainConfig,
                      records: list[SpecimenRecord] | None = None,
                      log_path: str | Path | None = None) -> TrainResult:
    """Slide encoder + fresh survival pooling/hazard head trained with the
    Cox partial likelihood; base pooler and text stack untouched."""
    records = corpus.records if records is None else records
    recs = [r for r in records if r.survival is not None]
    if not any(r.survival.event for r in recs):
        raise ValueError("survival fine-tuning needs at least one event")
    stage = cfg.survival
    model.set_trainable(False)
    model.encoder.set_trainable(True)
    model.survival.set_trainable(True)
    trainable = model.trainable_params()

    def group(name: str) -> GroupConfig:
        if name.startswith("survival.head."):
            lr = stage.lr if stage.lr_head is None else stage.lr_head
            return GroupConfig(lr, stage.weight_decay,
                               stage.beta1, stage.beta2)
        return GroupConfig(stage.lr, stage.weight_decay, stage.beta1, stage.beta2)

    opt = AdamW(trainable, group, stage.warmup_steps)
    rng = np.random.default_rng((cfg.seed, 3))
    result = TrainResult(stats={"skipped_event_free_batches": 0})
    fh = open(log_path, "w") if log_path else None
    try:
        for epoch in range(stage.epochs):
            order = rng.permutation(len(recs))
            for skel in _pack_records(recs, order, cfg.budget):
                members = [corpus.by_id(sid) for sid in skel.member_ids]
                events = np.asarray([m.survival.event for m in members], dtype=bool)
                if not events.any():
                    result.stats["skipped_event_free_batches"] += 1
                    continue
                times = np.asarray([m.survival.time_months for m in members])
                latents = model.encoder.encode(concat(skel, corpus))
                _, hazards = model.survival(latents)
                loss = cox_partial_nll(hazards, times, events) * (1.0 / events.sum())
                loss.backward()
                scale = opt.step()
                opt.zero_grad()
                result.steps += 1
                _log_step(result, fh, stage="survival", epoch=epoch,
                          step=result.steps, loss=float(loss.data),
                          lr=stage.lr * scale, tokens=int(skel.total),
                          events=int(events.sum()))
    finally:
        if fh:
            fh.close()
    return result


def train_specialist(model_cfg: ModelConfig, vocab: Vocabulary, corpus: Corpus,
                     cfg: TrainConfig, records: list[SpecimenRecord] | None = None,
                     seed: int = 1234) -> tuple[SlideLanguageModel, TrainResult]:
    """Survival model trained from scratch with the same architecture."""
    fresh = SlideLanguageModel(copy.deepcopy(model_cfg), vocab, seed)
    result = finetune_survival(fresh, corpus, cfg, records)
    return fresh, result


def stage_checksums(model: SlideLanguageModel) -> dict[str, str]:
    return {
        "encoder": nn.checksum(model.encoder.named_params()),
        "pooler": nn.checksum(model.pooler.named_params()),
        "text": nn.checksum(model.text.named_params()),
        "adapter": nn.checksum(model.adapter.named_params()),
        "decoder": nn.checksum(model.decoder.named_params()),
        "survival": nn.checksum(model.survival.named_params()),
    }
