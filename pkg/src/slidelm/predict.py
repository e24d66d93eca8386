"""Direct prediction: prior-corrected QA ranking over answer tokens,
contrastive ranking against prompt banks, and schema-driven report
completion. Also the embedding extraction used by downstream adaptation."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .corpus import Corpus, SpecimenRecord, TokenSeq, grammar
from .corpus.tokenizer import Vocabulary
from .encoder import pool_base
from .langmodel import SlideLanguageModel
from .packer import concat, pack
from .trainer import _pack_records

SCHEMA_VERSION = "caprep_v1"


def _softmax(x: np.ndarray, axis: int = -1) -> np.ndarray:
    e = np.exp(x - x.max(axis=axis, keepdims=True))
    return e / e.sum(axis=axis, keepdims=True)


# ---- prompt construction ----------------------------------------------------


def make_prompt(vocab: Vocabulary, question: str, history: str | None = None,
                specimen_desc: str | None = None) -> TokenSeq:
    """Chat prefix ending at the assistant tag: the next token is scored."""
    from .corpus.tokenizer import ASSISTANT, END, IMAGE, USER

    parts = [USER, IMAGE]
    if history:
        parts.append(history)
    if specimen_desc:
        parts.append(specimen_desc)
    parts += [question, END, ASSISTANT]
    return vocab.tokenize(" ".join(parts))


@dataclass
class QAQuery:
    prompt: TokenSeq
    completions: list[str]

    def completion_ids(self, vocab: Vocabulary) -> list[int]:
        if not self.completions:
            raise ValueError("completions must be non-empty")
        if len(set(self.completions)) != len(self.completions):
            raise ValueError("completions must be distinct")
        ids = []
        for c in self.completions:
            seq = vocab.tokenize(c)
            if len(seq.ids) != 1:
                raise ValueError(f"completion {c!r} is not a single vocabulary token")
            ids.append(int(seq.ids[0]))
        return ids


def qa_scores_batch(model: SlideLanguageModel, latents: Tensor,
                    query: QAQuery) -> np.ndarray:
    """Prior-corrected scores (B, C): log P(c | prompt, image) minus
    log P(c | prompt), the prior pass omitting the image prefix entirely."""
    ids = query.completion_ids(model.vocab)
    with ad.no_grad():
        img_seq = model.prepare_chat(query.prompt, with_image=True)
        B = latents.shape[0]
        logits, _, _, _ = model.decode(latents, [img_seq] * B)
        log_img = _log_softmax_np(logits.data[:, -1, :])[:, ids]
        prior_seq = model.prepare_chat(query.prompt, with_image=False)
        p_logits, _ = model.decoder.forward_batch(
            prior_seq.ids[None, :], np.asarray([len(prior_seq.ids)]), None)
        log_prior = _log_softmax_np(p_logits.data[0, -1, :])[ids]
    return log_img - log_prior[None, :]


def _log_softmax_np(x: np.ndarray) -> np.ndarray:
    shifted = x - x.max(axis=-1, keepdims=True)
    return shifted - np.log(np.exp(shifted).sum(axis=-1, keepdims=True))


def qa_predict(model: SlideLanguageModel, latents: Tensor,
               query: QAQuery) -> tuple[str, np.ndarray]:
    """Argmax completion (first completion wins ties) plus softmax
    probabilities over the corrected scores."""
    scores = qa_scores_batch(model, latents, query)[0]
    return query.completions[int(np.argmax(scores))], _softmax(scores)


# ---- contrastive ranking -----------------------------------------------------


@dataclass
class PromptBank:
    classes: list[str]
    prompts: dict[str, list[str]]
    embeddings: dict[str, np.ndarray]  # class -> (P, d) unit rows

    def validate(self) -> None:
        for cls in self.classes:
            if len(self.prompts.get(cls, [])) == 0:
                raise ValueError(f"class {cls!r} has no prompts")
            if self.embeddings[cls].shape[0] != len(self.prompts[cls]):
                raise ValueError(f"class {cls!r}: prompt/embedding count mismatch")


def default_class_prompts(n_classes: int) -> dict[str, list[str]]:
    out = {"class_0": [
        "the specimen is benign with no tumor identified .",
        "no tumor is identified in the specimen .",
    ]}
    for c in range(1, n_classes):
        s = grammar.subtype_for_class(c)
        out[f"class_{c}"] = [
            f"invasive {s} carcinoma is present .",
            f"there is invasive {s} carcinoma .",
        ]
    return out


def build_prompt_bank(model: SlideLanguageModel,
                      class_prompts: dict[str, list[str]]) -> PromptBank:
    embeddings = {}
    with ad.no_grad():
        for cls, prompts in class_prompts.items():
            if not prompts:
                raise ValueError(f"class {cls!r} has no prompts")
            emb = model.text.encode_batch(
                [model.vocab.tokenize(p).ids for p in prompts])
            embeddings[cls] = emb.data.copy()
    bank = PromptBank(list(class_prompts), dict(class_prompts), embeddings)
    bank.validate()
    return bank


def contrastive_predict(v: np.ndarray, bank: PromptBank) -> np.ndarray:
    """Class probabilities: softmax over per-class best prompt similarity
    (no temperature)."""
    bank.validate()
    reps = np.asarray([float(np.max(bank.embeddings[cls] @ v)) for cls in bank.classes])
    return _softmax(reps)


# ---- report schema -----------------------------------------------------------


@dataclass
class SchemaField:
    name: str
    kind: str                      # multiclass | multilabel | binary
    question: str                  # multilabel questions contain {option}
    options: list[str] = field(default_factory=list)

    def validate(self) -> None:
        if self.kind not in ("multiclass", "multilabel", "binary"):
            raise ValueError(f"field {self.name!r}: unknown kind {self.kind!r}")
        if self.kind == "multiclass" and len(self.options) < 2:
            raise ValueError(f"field {self.name!r}: multiclass needs >= 2 options")
        if self.kind == "multilabel" and not self.options:
            raise ValueError(f"field {self.name!r}: multilabel needs options")
        if self.kind == "multilabel" and "{option}" not in self.question:
            raise ValueError(f"field {self.name!r}: multilabel question needs "
                             "an {option} blank")


@dataclass
class ReportSchema:
    fields: list[SchemaField]

    def validate(self) -> None:
        for f in self.fields:
            f.validate()

    def to_json(self) -> str:
        return json.dumps({
            "schema_version": SCHEMA_VERSION,
            "fields": [{"name": f.name, "kind": f.kind, "question": f.question,
                        "options": f.options} for f in self.fields],
        }, indent=1, sort_keys=True)

    @staticmethod
    def from_json(text: str) -> "ReportSchema":
        data = json.loads(text)
        if data.get("schema_version") != SCHEMA_VERSION:
            raise ValueError(f"unsupported schema version {data.get('schema_version')!r}")
        schema = ReportSchema([SchemaField(f["name"], f["kind"], f["question"],
                                           list(f["options"])) for f in data["fields"]])
        schema.validate()
        return schema


def synthetic_report_schema(n_classes: int) -> ReportSchema:
    """Nine field groups over the synthetic ontology: 5 multiple-choice
    plus 9 yes-no questions (binary and multilabel options)."""
    yn = "is {option} present in the specimen ?"
    fields = [
        SchemaField("invasive carcinoma", "binary",
                    grammar.yes_no_question("tumor")),
        SchemaField("histologic type", "multiclass", grammar.MCQ_PRIMARY_QUESTION,
                    grammar.mcq_primary_options(n_classes)),
        SchemaField("histologic grade", "multiclass", grammar.MCQ_GRADE_QUESTION,
                    [f"grade {g}" for g in grammar.GRADES]),
        SchemaField("architecture", "multiclass",
                    grammar.MCQ_FIELD_QUESTIONS["architecture"],
                    list(grammar.ARCHITECTURES)),
        SchemaField("cellularity", "multiclass",
                    grammar.MCQ_FIELD_QUESTIONS["cellularity"],
                    list(grammar.CELLULARITIES)),
        SchemaField("mitotic activity", "multiclass",
                    grammar.MCQ_FIELD_QUESTIONS["mitotic activity"],
                    list(grammar.MITOTIC_LEVELS)),
        SchemaField("tumor features", "multilabel", yn,
                    ["necrosis", "ulceration", "lymphovascular invasion"]),
        SchemaField("stromal features", "multilabel", yn,
                    ["fibrosis", "calcifications", "inflammation"]),
        SchemaField("secondary changes", "multilabel", yn,
                    ["necrosis", "inflammation"]),
    ]
    schema = ReportSchema(fields)
    schema.validate()
    return schema


@dataclass
class FilledField:
    name: str
    kind: str
    chosen: object                     # option str (multiclass/binary bool) or list
    options: list[str]
    probabilities: list[float]         # per option (multiclass) or p(yes) per option


@dataclass
class FilledReport:
    fields: list[FilledField]

    def to_json(self) -> str:
        return json.dumps({
            "schema_version": SCHEMA_VERSION,
            "fields": [vars(f) for f in self.fields],
        }, indent=1, sort_keys=True)


def complete_report(model: SlideLanguageModel, latents: Tensor,
                    schema: ReportSchema) -> FilledReport:
    filled = []
    for f in schema.fields:
        f.validate()
        if f.kind == "multiclass":
            question = grammar.render_mcq(f.question, f.options)
            letters = list(grammar.OPTION_LETTERS[:len(f.options)])
            query = QAQuery(make_prompt(model.vocab, question), letters)
            _, probs = qa_predict(model, latents, query)
            filled.append(FilledField(f.name, f.kind,
                                      f.options[int(np.argmax(probs))],
                                      list(f.options), [float(p) for p in probs]))
        elif f.kind == "binary":
            query = QAQuery(make_prompt(model.vocab, f.question),
                            [grammar.ANSWER_YES, grammar.ANSWER_NO])
            _, probs = qa_predict(model, latents, query)
            filled.append(FilledField(f.name, f.kind, bool(probs[0] >= 0.5),
                                      ["yes"], [float(probs[0])]))
        else:  # multilabel: one yes-no per option with the blank filled
            p_yes, chosen = [], []
            for opt in f.options:
                question = f.question.replace("{option}", opt)
                query = QAQuery(make_prompt(model.vocab, question),
                                [grammar.ANSWER_YES, grammar.ANSWER_NO])
                _, probs = qa_predict(model, latents, query)
                p_yes.append(float(probs[0]))
                if probs[0] >= 0.5:
                    chosen.append(opt)
            filled.append(FilledField(f.name, f.kind, chosen, list(f.options), p_yes))
    return FilledReport(filled)


# ---- embedding extraction -----------------------------------------------------


def embed_base(model: SlideLanguageModel, corpus: Corpus,
               records: list[SpecimenRecord], budget: int = 4096) -> np.ndarray:
    rows = {}
    with ad.no_grad():
        for skel in _pack_records(records, np.arange(len(records)), budget):
            latents = model.encoder.encode(concat(skel, corpus))
            emb = pool_base(latents, model.pooler)
            for i, sid in enumerate(skel.member_ids):
                rows[sid] = emb.data[i].copy()
    return np.stack([rows[r.specimen_id] for r in records])


def embed_survival(model: SlideLanguageModel, corpus: Corpus,
                   records: list[SpecimenRecord], budget: int = 4096) -> np.ndarray:
    rows = {}
    with ad.no_grad():
        for skel in _pack_records(records, np.arange(len(records)), budget):
            latents = model.encoder.encode(concat(skel, corpus))
            emb, _ = model.survival(latents)
            for i, sid in enumerate(skel.member_ids):
                rows[sid] = emb.data[i].copy()
    return np.stack([rows[r.specimen_id] for r in records])


def survival_hazards(model: SlideLanguageModel, corpus: Corpus,
                     records: list[SpecimenRecord], budget: int = 4096) -> np.ndarray:
    rows = {}
    with ad.no_grad():
        for skel in _pack_records(records, np.arange(len(records)), budget):
            latents = model.encoder.encode(concat(skel, corpus))
            _, h = model.survival(latents)
            for i, sid in enumerate(skel.member_ids):
                rows[sid] = float(h.data[i])
    return np.asarray([rows[r.specimen_id] for r in records])


DIAGNOSTIC_PROMPT = grammar.REPORT_PROMPTS[0]


def embed_diagnostic(model: SlideLanguageModel, corpus: Corpus,
                     records: list[SpecimenRecord], budget: int = 4096,
                     chunk: int = 32) -> np.ndarray:
    """Decoder hidden state at the assistant tag under the report prompt."""
    prompt = make_prompt(model.vocab, DIAGNOSTIC_PROMPT)
    seq = model.prepare_chat(prompt)
    pos = [i for i, t in enumerate(seq.ids)
           if int(t) == model.vocab.assistant_id][0]
    rows = {}
    with ad.no_grad():
        for skel in _pack_records(records, np.arange(len(records)), budget):
            latents = model.encoder.encode(concat(skel, corpus))
            for start in range(0, len(skel.member_ids), chunk):
                sids = skel.member_ids[start:start + chunk]
                lat = Tensor(latents.data[start:start + len(sids)])
                _, hidden, _, _ = model.decode(lat, [seq] * len(sids))
                for i, sid in enumerate(sids):
                    rows[sid] = hidden.data[i, pos].copy()
    return np.stack([rows[r.specimen_id] for r in records])


def tile_mean_features(records: list[SpecimenRecord]) -> np.ndarray:
    """Naive mean-of-tiles baseline features."""
    return np.stack([r.tiles.stacked().mean(axis=0) for r in records])
