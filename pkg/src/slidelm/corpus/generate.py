"""Synthetic corpus generation and the chat-example builders.

The planted generative model is axis-aligned in tile space: one axis per
class (one-hot, scaled so class means sit ``class_separation`` apart),
one axis per attribute concept, and one continuous latent risk axis that
never appears in any report. Tiles are unit-covariance spherical noise
around the specimen mean. Everything downstream (probes, QA targets,
survival oracles) is derived from this model.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass
from typing import Optional

import numpy as np

from . import grammar
from .types import ChatExample, Finding, SpecimenRecord, SurvivalLabel, TileEmbeddingSet

ATTRIBUTE_AXES = (
    "grade", "architecture", "cellularity", "mitotic activity",
    "necrosis", "inflammation", "calcifications", "ulceration",
    "fibrosis", "lymphovascular invasion", "risk",
)
ORDINAL_STEP = 0.8     # tile-space shift per ordinal level (centered)
BINARY_SHIFT = 0.8     # +/- shift for present/absent
RISK_AMPLITUDE = 2.0   # risk axis spans [0, RISK_AMPLITUDE]
BASELINE_MONTHS = 48.0
WEIBULL_SHAPE = 4.0    # proportional-hazards baseline; compresses the
                       # time scale without touching pair concordance


@dataclass(frozen=True)
class CorpusSpec:
    n_specimens: int
    n_classes: int = 2
    d: int = 64
    tiles_per_slide: tuple[int, int] = (40, 120)
    slides_per_specimen: tuple[int, int] = (1, 3)
    class_separation: float = 2.0
    survival_beta: Optional[tuple[float, ...]] = None
    censor_prob: float = 0.0

    def validate(self) -> None:
        if self.n_specimens < 0:
            raise ValueError("n_specimens must be >= 0")
        if not 1 <= self.n_classes <= grammar.MAX_CLASSES:
            raise ValueError(f"n_classes must be in [1, {grammar.MAX_CLASSES}]")
        if self.class_separation < 0:
            raise ValueError("class_separation must be >= 0")
        for name, (lo, hi) in (("tiles_per_slide", self.tiles_per_slide),
                               ("slides_per_specimen", self.slides_per_specimen)):
            if lo < 1 or lo > hi:
                raise ValueError(f"invalid {name} range ({lo}, {hi})")
        if self.d < self.n_classes + len(ATTRIBUTE_AXES):
            raise ValueError(
                f"d={self.d} too small: need >= n_classes + {len(ATTRIBUTE_AXES)}")
        if self.survival_beta is not None and len(self.survival_beta) != self.d:
            raise ValueError("survival_beta must have length d")
        if not 0.0 <= self.censor_prob < 1.0:
            raise ValueError("censor_prob must be in [0, 1)")

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    @staticmethod
    def from_dict(data: dict) -> "CorpusSpec":
        data = dict(data)
        for key in ("tiles_per_slide", "slides_per_specimen"):
            data[key] = tuple(data[key])
        if data.get("survival_beta") is not None:
            data["survival_beta"] = tuple(data["survival_beta"])
        return CorpusSpec(**data)


def axis_indices(n_classes: int) -> dict[str, int]:
    axes = {f"class_{c}": c for c in range(n_classes)}
    for i, name in enumerate(ATTRIBUTE_AXES):
        axes[name] = n_classes + i
    return axes


def survival_beta_preset(n_classes: int, d: int, separation: float = 1.0) -> tuple[float, ...]:
    """Canonical planted-hazard direction: dominated by the latent risk
    axis with smaller grade/inflammation terms for sign-recovery checks.

    At separation 1.0 the planted log relative hazards span ~20 units,
    putting the planted-oracle C-index near 0.95 under 30% censoring.
    """
    if d < n_classes + len(ATTRIBUTE_AXES):
        raise ValueError(
            f"d={d} too small: need >= n_classes + {len(ATTRIBUTE_AXES)}")
    axes = axis_indices(n_classes)
    beta = np.zeros(d)
    beta[axes["risk"]] = 10.0 * separation
    beta[axes["grade"]] = 0.75 * separation
    beta[axes["inflammation"]] = -0.75 * separation
    return tuple(beta)


@dataclass
class Planted:
    """Ground truth of the generative model, kept for oracle checks."""

    axes: dict[str, int]
    class_means: np.ndarray            # (n_classes, d)
    log_hazard: dict[str, float]       # empty unless survival_beta given
    risk: dict[str, float]


@dataclass
class Corpus:
    spec: CorpusSpec
    seed: int
    records: list[SpecimenRecord]
    planted: Planted

    def __len__(self) -> int:
        return len(self.records)

    def __iter__(self):
        return iter(self.records)

    def by_id(self, specimen_id: str) -> SpecimenRecord:
        for r in self.records:
            if r.specimen_id == specimen_id:
                return r
        raise KeyError(specimen_id)


def _class_means(spec: CorpusSpec) -> np.ndarray:
    means = np.zeros((spec.n_classes, spec.d))
    scale = spec.class_separation / np.sqrt(2.0)
    for c in range(spec.n_classes):
        means[c, c] = scale
    return means


def _sample_findings(label: int, rng: np.random.Generator) -> list[Finding]:
    """Primary attributes are sampled; secondary ones are deterministic
    functions of them, mirroring how real findings correlate (mitotic
    activity tracks grade, ulceration accompanies necrosis, and so on)."""
    findings = [Finding("tumor", label > 0)]
    # shared rates are tuned so complementary mining answers "Yes." half
    # the time on a balanced two-class corpus
    inflammation = bool(rng.uniform() < 0.6)
    calcifications = bool(rng.uniform() < 0.6)
    if label > 0:
        grade = grammar.GRADES[rng.integers(len(grammar.GRADES))]
        arch_idx = int(rng.integers(len(grammar.ARCHITECTURES)))
        necrosis = bool(rng.integers(2))
        findings.append(Finding("subtype", True,
                                {"value": grammar.subtype_for_class(label)}))
        findings.append(Finding("grade", True, {"value": grade}))
        findings.append(Finding("architecture", True,
                                {"value": grammar.ARCHITECTURES[arch_idx]}))
        findings.append(Finding("cellularity", True,
                                {"value": grammar.CELLULARITIES[arch_idx]}))
        findings.append(Finding("mitotic activity", True,
                                {"value": "frequent" if grade == "3" else "rare"}))
        findings.append(Finding("necrosis", necrosis))
        findings.append(Finding("ulceration", necrosis))
        findings.append(Finding("lymphovascular invasion", grade == "3"))
    findings.append(Finding("inflammation", inflammation))
    findings.append(Finding("calcifications", calcifications))
    findings.append(Finding("fibrosis", calcifications))
    return findings


# expected value of each tumor-only attribute under _sample_findings;
# offsets are centered by these so a zero class separation leaves no
# linear class signal on the attribute axes
_TUMOR_ATTR_MEANS = {
    "mitotic activity": 1.0 / 3.0,          # frequent iff grade 3
    "necrosis": 0.5,
    "ulceration": 0.5,                       # tracks necrosis
    "lymphovascular invasion": 1.0 / 3.0,    # present iff grade 3
}


def _specimen_mean(spec: CorpusSpec, label: int, findings: list[Finding],
                   risk: float, class_means: np.ndarray,
                   axes: dict[str, int]) -> np.ndarray:
    mu = class_means[label].copy()
    for f in findings:
        if f.concept in ("tumor", "subtype"):
            continue
        ax = axes[f.concept]
        if f.concept == "mitotic activity":
            x = float(f.attributes["value"] == "frequent")
            mu[ax] += (x - _TUMOR_ATTR_MEANS[f.concept]) * 2.0 * BINARY_SHIFT
        elif f.concept in grammar.ORDINAL_CONCEPTS:
            values = grammar.ORDINAL_CONCEPTS[f.concept]
            idx = values.index(f.attributes["value"])
            mu[ax] += (idx - (len(values) - 1) / 2.0) * ORDINAL_STEP
        elif f.concept in _TUMOR_ATTR_MEANS:
            x = float(f.present)
            mu[ax] += (x - _TUMOR_ATTR_MEANS[f.concept]) * 2.0 * BINARY_SHIFT
        else:
            mu[ax] += BINARY_SHIFT if f.present else -BINARY_SHIFT
    if spec.survival_beta is not None:
        # the continuous latent risk factor backs the survival tasks; it
        # never appears in reports, so corpora without survival labels
        # carry no per-specimen continuous signature
        mu[axes["risk"]] += risk * RISK_AMPLITUDE
    return mu


def generate_corpus(spec: CorpusSpec, seed: int) -> Corpus:
    spec.validate()
    rng = np.random.default_rng(seed)
    axes = axis_indices(spec.n_classes)
    class_means = _class_means(spec)
    planted = Planted(axes=axes, class_means=class_means, log_hazard={}, risk={})
    records: list[SpecimenRecord] = []
    means: list[np.ndarray] = []
    for i in range(spec.n_specimens):
        sid = f"s{i:05d}"
        label = int(rng.integers(spec.n_classes))
        findings = _sample_findings(label, rng)
        risk = float(rng.uniform())
        mu = _specimen_mean(spec, label, findings, risk, class_means, axes)
        n_slides = int(rng.integers(spec.slides_per_specimen[0],
                                    spec.slides_per_specimen[1] + 1))
        slides = []
        for s in range(n_slides):
            n_tiles = int(rng.integers(spec.tiles_per_slide[0],
                                       spec.tiles_per_slide[1] + 1))
            emb = (mu + rng.standard_normal((n_tiles, spec.d))).astype(np.float32)
            slides.append((f"{sid}-sl{s}", emb))
        tiles = TileEmbeddingSet(specimen_id=sid, slides=slides, d=spec.d)
        tiles.validate()
        paraphrases = grammar.render_paraphrases(findings, salt=seed)
        records.append(SpecimenRecord(
            specimen_id=sid,
            tiles=tiles,
            findings=findings,
            report=paraphrases[0],
            label=label,
            paraphrases=paraphrases,
            history=grammar.HISTORIES[rng.integers(len(grammar.HISTORIES))],
            specimen_desc=grammar.SPECIMEN_DESCS[rng.integers(len(grammar.SPECIMEN_DESCS))],
        ))
        planted.risk[sid] = risk
        means.append(mu)
    if spec.survival_beta is not None and records:
        beta = np.asarray(spec.survival_beta)
        hazards = np.array([mu @ beta for mu in means])
        h_ref = float(np.median(hazards))
        for record, h in zip(records, hazards):
            planted.log_hazard[record.specimen_id] = float(h)
            # Weibull proportional hazards: hazard multiplier exp(h - h_ref)
            t_death = (BASELINE_MONTHS * rng.exponential() ** (1.0 / WEIBULL_SHAPE)
                       * np.exp(-(h - h_ref) / WEIBULL_SHAPE))
            if rng.uniform() < spec.censor_prob:
                record.survival = SurvivalLabel(
                    time_months=int(round(rng.uniform(0.0, t_death))), event=False)
            else:
                record.survival = SurvivalLabel(time_months=int(round(t_death)), event=True)
    return Corpus(spec=spec, seed=seed, records=records, planted=planted)


def cap_tiles(record: SpecimenRecord, cap: int = 100_000) -> SpecimenRecord:
    """Drop whole slides, largest first, until the specimen fits the cap."""
    if cap < 1:
        raise ValueError("cap must be >= 1")
    slides = list(record.tiles.slides)
    total = sum(e.shape[0] for _, e in slides)
    if total <= cap:
        return record
    order = sorted(range(len(slides)), key=lambda i: (-slides[i][1].shape[0], i))
    dropped = set()
    for i in order:
        if total <= cap or len(slides) - len(dropped) == 1:
            break
        dropped.add(i)
        total -= slides[i][1].shape[0]
    if total > cap:
        raise ValueError(
            f"{record.specimen_id}: single slide of {total} tiles exceeds cap {cap}; "
            "cannot satisfy without splitting a slide")
    kept = [s for i, s in enumerate(slides) if i not in dropped]
    tiles = TileEmbeddingSet(record.specimen_id, kept, record.tiles.d)
    return dataclasses.replace(record, tiles=tiles)


@dataclass(frozen=True)
class ContextRates:
    history: float = 0.20
    specimen: float = 0.20
    complementary: float = 0.20


def _first_user_text(record: SpecimenRecord, question: str, rates: ContextRates,
                     rng: np.random.Generator) -> str:
    from .tokenizer import IMAGE

    parts = [IMAGE]
    if record.history and rng.uniform() < rates.history:
        parts.append(record.history)
    if record.specimen_desc and rng.uniform() < rates.specimen:
        parts.append(record.specimen_desc)
    parts.append(question)
    return " ".join(parts)


def _yes_no_pool(record: SpecimenRecord) -> list[str]:
    return [f.concept for f in record.findings
            if f.concept == "tumor" or f.concept in grammar.BINARY_CONCEPTS]


def mcq_for_record(record: SpecimenRecord, n_classes: int,
                   kind: str) -> tuple[str, list[str], int]:
    """(question text with lettered options, options, correct index)."""
    if kind == "primary":
        options = grammar.mcq_primary_options(n_classes)
        return grammar.render_mcq(grammar.MCQ_PRIMARY_QUESTION, options), options, record.label
    if kind == "grade":
        options = [f"grade {g}" for g in grammar.GRADES]
        value = record.finding("grade").attributes["value"]
        return (grammar.render_mcq(grammar.MCQ_GRADE_QUESTION, options), options,
                grammar.GRADES.index(value))
    raise ValueError(f"unknown mcq kind {kind!r}")


def build_chat_examples(record: SpecimenRecord, rates: ContextRates,
                        rng: np.random.Generator, n_classes: int,
                        salt: int = 0) -> list[ChatExample]:
    """One example for each of the four per-record task kinds.

    Matching examples need corpus context (``build_matching_example``) and
    complementary pairs are mined corpus-wide (``mine_complementary_qa``).
    """
    if not record.findings:
        raise ValueError(f"{record.specimen_id}: record has no findings")
    out: list[ChatExample] = []

    prompt = grammar.REPORT_PROMPTS[rng.integers(len(grammar.REPORT_PROMPTS))]
    report = record.paraphrases[rng.integers(len(record.paraphrases))] \
        if record.paraphrases else record.report
    out.append(ChatExample("report_generation", [
        ("user", _first_user_text(record, prompt, rates, rng)),
        ("assistant", report)]))

    concept = _yes_no_pool(record)[rng.integers(len(_yes_no_pool(record)))]
    question = grammar.yes_no_question(concept, int(rng.integers(3)))
    answer = grammar.ANSWER_YES if record.finding(concept).present else grammar.ANSWER_NO
    out.append(ChatExample("yes_no", [
        ("user", _first_user_text(record, question, rates, rng)),
        ("assistant", answer)]))

    topics = ["primary"] if record.label == 0 else \
        ["subtype", "grade", "architecture", "cellularity"]
    topic = topics[rng.integers(len(topics))]
    q, a = grammar.open_question_and_answer(record.findings, topic,
                                            int(rng.integers(2)))
    out.append(ChatExample("open_ended", [
        ("user", _first_user_text(record, q, rates, rng)),
        ("assistant", a)]))

    mcq_kinds = ["primary"] if record.label == 0 else ["primary", "grade"]
    kind = mcq_kinds[rng.integers(len(mcq_kinds))]
    q, _, correct = mcq_for_record(record, n_classes, kind)
    out.append(ChatExample("multiple_choice", [
        ("user", _first_user_text(record, q, rates, rng)),
        ("assistant", grammar.OPTION_LETTERS[correct])]))
    return out


def build_matching_example(record: SpecimenRecord, corpus: Corpus,
                           rng: np.random.Generator, mismatch_prob: float = 0.5,
                           rates: ContextRates = ContextRates()) -> ChatExample:
    if len(corpus) < 2:
        raise ValueError("matching examples need a corpus of >= 2 specimens")
    mismatch = rng.uniform() < mismatch_prob
    shown = record
    if mismatch:
        for _ in range(16):  # prefer a genuinely different report text
            other = corpus.records[int(rng.integers(len(corpus)))]
            if other.specimen_id != record.specimen_id:
                shown = other
                if other.report != record.report:
                    break
    variant = int(rng.integers(len(shown.paraphrases))) if shown.paraphrases else 0
    shown_report = shown.paraphrases[variant] if shown.paraphrases else shown.report
    question = f"{grammar.MATCHING_PROMPT} {shown_report}"
    if mismatch:
        answer = f"{grammar.ANSWER_MISMATCH} {record.report}"
    else:
        answer = grammar.ANSWER_MATCH
    return ChatExample("matching", [
        ("user", _first_user_text(record, question, rates, rng)),
        ("assistant", answer)])


def complementary_example(record: SpecimenRecord, corpus: Corpus,
                          rng: np.random.Generator,
                          rates: ContextRates = ContextRates()) -> ChatExample:
    """A mined yes-no pair: a random specimen's question answered against
    this record's findings (absent concepts answer no)."""
    source = corpus.records[int(rng.integers(len(corpus)))]
    pool = _yes_no_pool(source)
    concept = pool[int(rng.integers(len(pool)))]
    question = grammar.yes_no_question(concept, int(rng.integers(3)))
    f = record.finding(concept)
    answer = grammar.ANSWER_YES if (f is not None and f.present) else grammar.ANSWER_NO
    return ChatExample("yes_no", [
        ("user", _first_user_text(record, question, rates, rng)),
        ("assistant", answer)])


def mine_complementary_qa(corpus: Corpus, rng: np.random.Generator,
                          n_pairs: Optional[int] = None) -> list[tuple[str, str, str]]:
    """Pair questions from random specimens with random target specimens."""
    if len(corpus) == 0:
        raise ValueError("cannot mine complementary pairs from an empty corpus")
    if n_pairs is None:
        n_pairs = len(corpus)
    out = []
    for _ in range(n_pairs):
        target = corpus.records[int(rng.integers(len(corpus)))]
        source = corpus.records[int(rng.integers(len(corpus)))]
        pool = _yes_no_pool(source)
        concept = pool[int(rng.integers(len(pool)))]
        question = grammar.yes_no_question(concept, int(rng.integers(3)))
        f = target.finding(concept)
        answer = grammar.ANSWER_YES if (f is not None and f.present) else grammar.ANSWER_NO
        out.append((target.specimen_id, question, answer))
    return out
