"""Closed ontology and deterministic template grammar.

Reports, questions and answers are rendered from a fixed table of
sentence templates over a closed concept set; rendering is a pure
function of (findings, variant, salt), so a record's report is always
re-derivable. Everything the grammar can emit is single-space separated
lowercase words plus the reserved capitalized answer tokens, which makes
whitespace tokenization round-trip exactly.
"""

from __future__ import annotations

import zlib

from .types import Finding

SUBTYPES = ("ductal", "lobular", "mucinous", "papillary", "serous", "tubular", "metaplastic")
GRADES = ("1", "2", "3")
ARCHITECTURES = ("solid", "cribriform", "glandular")
CELLULARITIES = ("low", "moderate", "high")
MITOTIC_LEVELS = ("rare", "frequent")

# binary concepts: those in TUMOR_ONLY_BINARY are only sampled for tumor records
SHARED_BINARY = ("inflammation", "calcifications", "fibrosis")
TUMOR_ONLY_BINARY = ("necrosis", "ulceration", "lymphovascular invasion")
BINARY_CONCEPTS = SHARED_BINARY + TUMOR_ONLY_BINARY

ORDINAL_CONCEPTS = {
    "grade": GRADES,
    "architecture": ARCHITECTURES,
    "cellularity": CELLULARITIES,
    "mitotic activity": MITOTIC_LEVELS,
}

N_PARAPHRASES = 5
MAX_CLASSES = 1 + len(SUBTYPES)

ANSWER_YES = "Yes."
ANSWER_NO = "No."
ANSWER_MATCH = "Match."
ANSWER_MISMATCH = "Mismatch."
OPTION_LETTERS = ("A.", "B.", "C.", "D.", "E.", "F.", "G.", "H.")

_TUMOR_PRESENT = (
    "invasive {s} carcinoma is present .",
    "there is invasive {s} carcinoma .",
    "the specimen shows invasive {s} carcinoma .",
)
_TUMOR_ABSENT = (
    "the specimen is benign with no tumor identified .",
    "no tumor is identified in the specimen .",
    "examination shows a benign specimen without tumor .",
)
_ORDINAL_SENTENCES = {
    "grade": (
        "the tumor is grade {v} .",
        "histologic grade is {v} .",
        "this is a grade {v} lesion .",
    ),
    "architecture": (
        "the architecture is predominantly {v} .",
        "a {v} growth pattern is seen .",
        "the tumor shows a {v} pattern .",
    ),
    "cellularity": (
        "cellularity is {v} .",
        "the lesion shows {v} cellularity .",
        "tumor cellularity is {v} .",
    ),
    "mitotic activity": (
        "mitotic figures are {v} .",
        "mitoses are {v} .",
    ),
}
_BINARY_PRESENT = (
    "{w} is present .",
    "there is {w} .",
    "{w} is identified .",
)
_BINARY_ABSENT = (
    "{w} is absent .",
    "no {w} is identified .",
    "the specimen is without {w} .",
)

_YESNO_QUESTIONS = (
    "is {w} present in the specimen ?",
    "is there {w} ?",
    "do you see {w} ?",
)
_TUMOR_QUESTION_WORD = "malignant tumor"

_OPEN_QUESTIONS = {
    "subtype": ("what is the histologic subtype ?", "which subtype is identified ?"),
    "grade": ("what is the histologic grade ?", "how differentiated is the tumor ?"),
    "architecture": ("describe the growth pattern .", "what architecture is seen ?"),
    "cellularity": ("how cellular is the lesion ?", "describe the cellularity ."),
    "primary": ("what is the primary finding ?", "describe the specimen ."),
}
_OPEN_ANSWERS = {
    "subtype": "the subtype is {v} .",
    "grade": "the tumor is grade {v} .",
    "architecture": "the architecture is {v} .",
    "cellularity": "cellularity is {v} .",
    "primary": "the specimen is benign .",
}

MCQ_PRIMARY_QUESTION = "what is the primary finding ?"
MCQ_GRADE_QUESTION = "what is the histologic grade ?"
MCQ_FIELD_QUESTIONS = {
    "architecture": "what architecture is seen ?",
    "cellularity": "how cellular is the lesion ?",
    "mitotic activity": "what is the mitotic activity ?",
}

HISTORIES = (
    "the patient has a history of prior disease .",
    "the patient presents for routine follow up .",
    "there is a family history of carcinoma .",
)
SPECIMEN_DESCS = (
    "the specimen is a core biopsy .",
    "the specimen is an excision .",
    "the specimen is a resection .",
)

REPORT_PROMPTS = ("write the report .", "generate the diagnostic report .")
MATCHING_PROMPT = "does this report describe the specimen ?"


def _pick(pool: tuple[str, ...], variant: int, salt: int, tag: str) -> str:
    """Deterministic template choice, a pure function of (variant, salt,
    tag). Rotating templates per concept keeps reports with swapped
    polarities lexically distinct rather than mere word permutations."""
    h = zlib.crc32(f"{salt}:{variant}:{tag}".encode())
    return pool[h % len(pool)]


def subtype_for_class(label: int) -> str:
    if label < 1:
        raise ValueError("class 0 is benign and has no subtype")
    return SUBTYPES[label - 1]


def mcq_primary_options(n_classes: int) -> list[str]:
    opts = ["benign tissue"]
    opts += [f"invasive {s} carcinoma" for s in SUBTYPES[: n_classes - 1]]
    return opts


def render_report(findings: list[Finding], variant: int = 0, salt: int = 0) -> str:
    sentences: list[str] = []
    by_concept = {f.concept: f for f in findings}
    tumor = by_concept["tumor"]
    if tumor.present:
        subtype = by_concept["subtype"].attributes["value"]
        sentences.append(_pick(_TUMOR_PRESENT, variant, salt, "tumor").format(s=subtype))
        for concept in ORDINAL_CONCEPTS:
            f = by_concept.get(concept)
            if f is not None:
                tpl = _pick(_ORDINAL_SENTENCES[concept], variant, salt, concept)
                sentences.append(tpl.format(v=f.attributes["value"]))
    else:
        sentences.append(_pick(_TUMOR_ABSENT, variant, salt, "tumor"))
    for concept in BINARY_CONCEPTS:
        f = by_concept.get(concept)
        if f is None:
            continue
        pool = _BINARY_PRESENT if f.present else _BINARY_ABSENT
        tag = f"{concept}:{'p' if f.present else 'a'}"
        sentences.append(_pick(pool, variant, salt, tag).format(w=concept))
    return " ".join(sentences)


def render_paraphrases(findings: list[Finding], salt: int = 0) -> list[str]:
    return [render_report(findings, v, salt) for v in range(N_PARAPHRASES)]


def yes_no_question(concept: str, phrasing: int = 0) -> str:
    """Phrasing directly indexes the question pool so every form is
    reachable; phrasing 0 is the canonical evaluation wording."""
    word = _TUMOR_QUESTION_WORD if concept == "tumor" else concept
    return _YESNO_QUESTIONS[phrasing % len(_YESNO_QUESTIONS)].format(w=word)


def open_question_and_answer(record_findings: list[Finding], topic: str,
                             phrasing: int = 0) -> tuple[str, str]:
    pool = _OPEN_QUESTIONS[topic]
    q = pool[phrasing % len(pool)]
    if topic == "primary":
        return q, _OPEN_ANSWERS["primary"]
    by_concept = {f.concept: f for f in record_findings}
    value = by_concept[topic].attributes["value"]
    return q, _OPEN_ANSWERS[topic].format(v=value)


def render_mcq(question: str, options: list[str]) -> str:
    if len(options) > len(OPTION_LETTERS):
        raise ValueError("too many options for the reserved letter tokens")
    parts = [question]
    for letter, opt in zip(OPTION_LETTERS, options):
        parts.append(f"{letter} {opt}")
    return " ".join(parts)


def parse_report(text: str) -> dict[str, bool]:
    """Recover binary-concept polarities (incl. tumor) from grammar output."""
    words = text.split()
    if "." not in words:
        sentences = [words]
    else:
        sentences, cur = [], []
        for w in words:
            cur.append(w)
            if w == ".":
                sentences.append(cur)
                cur = []
        if cur:
            sentences.append(cur)
    polarity: dict[str, bool] = {}
    for sent in sentences:
        joined = " ".join(sent)
        negative = ("no" in sent) or ("absent" in sent) or ("without" in sent)
        if "carcinoma" in sent or "tumor" in sent or "benign" in sent:
            if "tumor" not in polarity:
                polarity["tumor"] = ("carcinoma" in sent or "tumor" in sent) and not (
                    negative or "benign" in sent)
        for concept in BINARY_CONCEPTS:
            if concept in joined:
                polarity[concept] = not negative
    return polarity


def vocabulary_words() -> list[str]:
    """Every word the grammar can emit, in deterministic first-seen order."""
    corpus_text: list[str] = []
    corpus_text += [t.format(s=s) for t in _TUMOR_PRESENT for s in SUBTYPES]
    corpus_text += list(_TUMOR_ABSENT)
    for concept, pool in _ORDINAL_SENTENCES.items():
        corpus_text += [t.format(v=v) for t in pool for v in ORDINAL_CONCEPTS[concept]]
    for w in BINARY_CONCEPTS:
        corpus_text += [t.format(w=w) for t in _BINARY_PRESENT + _BINARY_ABSENT]
    corpus_text += [t.format(w=w) for t in _YESNO_QUESTIONS
                    for w in BINARY_CONCEPTS + (_TUMOR_QUESTION_WORD,)]
    for pool in _OPEN_QUESTIONS.values():
        corpus_text += list(pool)
    for tpl in _OPEN_ANSWERS.values():
        for vals in (SUBTYPES, GRADES, ARCHITECTURES, CELLULARITIES, ("",)):
            corpus_text += [tpl.format(v=v) for v in vals]
    corpus_text += [MCQ_PRIMARY_QUESTION, MCQ_GRADE_QUESTION]
    corpus_text += list(MCQ_FIELD_QUESTIONS.values())
    corpus_text += mcq_primary_options(MAX_CLASSES)
    corpus_text += [f"grade {g}" for g in GRADES]
    corpus_text += list(HISTORIES) + list(SPECIMEN_DESCS)
    corpus_text += list(REPORT_PROMPTS) + [MATCHING_PROMPT]
    corpus_text += [ANSWER_YES, ANSWER_NO, ANSWER_MATCH, ANSWER_MISMATCH]
    corpus_text += list(OPTION_LETTERS)
    seen: dict[str, None] = {}
    for text in corpus_text:
        for word in text.split():
            seen.setdefault(word, None)
    return list(seen)
