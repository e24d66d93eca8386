"""Closed-vocabulary whitespace tokenizer and chat-template rendering."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from . import grammar
from .types import ChatExample

USER = "<|user|>"
ASSISTANT = "<|assistant|>"
END = "<|end|>"
IMAGE = "<|image|>"
SPECIALS = (USER, ASSISTANT, END, IMAGE)


class OutOfVocabularyError(ValueError):
    def __init__(self, word: str):
        super().__init__(f"word not in the closed vocabulary: {word!r}")
        self.word = word


@dataclass
class TokenSeq:
    ids: np.ndarray
    role_mask: Optional[np.ndarray] = None  # 1 where the chat loss applies
    image_span: Optional[tuple[int, int]] = None  # (start, len) after expansion

    def __len__(self) -> int:
        return len(self.ids)


class Vocabulary:
    """Fixed vocabulary: 4 reserved specials followed by every grammar word."""

    def __init__(self):
        self.words: tuple[str, ...] = SPECIALS + tuple(grammar.vocabulary_words())
        self.index: dict[str, int] = {w: i for i, w in enumerate(self.words)}
        self.user_id = self.index[USER]
        self.assistant_id = self.index[ASSISTANT]
        self.end_id = self.index[END]
        self.image_id = self.index[IMAGE]
        self.yes_id = self.index[grammar.ANSWER_YES]
        self.no_id = self.index[grammar.ANSWER_NO]

    def __len__(self) -> int:
        return len(self.words)

    def tokenize(self, text: str) -> TokenSeq:
        ids = []
        for word in text.split():
            i = self.index.get(word)
            if i is None:
                raise OutOfVocabularyError(word)
            ids.append(i)
        return TokenSeq(ids=np.asarray(ids, dtype=np.int64))

    def detokenize(self, seq: TokenSeq | np.ndarray | list[int]) -> str:
        ids = seq.ids if isinstance(seq, TokenSeq) else seq
        return " ".join(self.words[int(i)] for i in ids)

    def option_letter_ids(self, n: int) -> list[int]:
        return [self.index[letter] for letter in grammar.OPTION_LETTERS[:n]]


_VOCAB: Vocabulary | None = None


def default_vocabulary() -> Vocabulary:
    global _VOCAB
    if _VOCAB is None:
        _VOCAB = Vocabulary()
    return _VOCAB


def render_chat(example: ChatExample, vocab: Vocabulary) -> TokenSeq:
    """Flatten chat turns to token ids with the assistant-loss mask.

    Loss positions are exactly the assistant turns' text tokens plus their
    closing <|end|>; role tags and user content are excluded.
    """
    ids: list[int] = []
    mask: list[int] = []
    for i, (role, text) in enumerate(example.turns):
        tag = vocab.user_id if role == "user" else vocab.assistant_id
        ids.append(tag)
        mask.append(0)
        body = vocab.tokenize(text).ids
        in_loss = 1 if i in example.loss_region else 0
        ids.extend(int(t) for t in body)
        mask.extend([in_loss] * len(body))
        ids.append(vocab.end_id)
        mask.append(in_loss)
    first_user_end = ids.index(vocab.end_id)
    if vocab.image_id not in ids[:first_user_end]:
        raise ValueError("first user turn must contain the image placeholder")
    return TokenSeq(ids=np.asarray(ids, dtype=np.int64),
                    role_mask=np.asarray(mask, dtype=np.int8))


def expand_image_span(seq: TokenSeq, n_latents: int, vocab: Vocabulary) -> TokenSeq:
    """Replace the single image placeholder with ``n_latents`` positions."""
    ids = list(int(i) for i in seq.ids)
    occurrences = [i for i, t in enumerate(ids) if t == vocab.image_id]
    if len(occurrences) != 1:
        raise ValueError(f"expected exactly one image placeholder, found {len(occurrences)}")
    pos = occurrences[0]
    new_ids = ids[:pos] + [vocab.image_id] * n_latents + ids[pos + 1:]
    mask = None
    if seq.role_mask is not None:
        m = list(int(x) for x in seq.role_mask)
        mask = np.asarray(m[:pos] + [0] * n_latents + m[pos + 1:], dtype=np.int8)
    return TokenSeq(ids=np.asarray(new_ids, dtype=np.int64), role_mask=mask,
                    image_span=(pos, n_latents))


def strip_image(seq: TokenSeq, vocab: Vocabulary) -> TokenSeq:
    """Drop the image placeholder entirely (the no-image prior pass)."""
    keep = [i for i, t in enumerate(seq.ids) if int(t) != vocab.image_id]
    mask = seq.role_mask[keep] if seq.role_mask is not None else None
    return TokenSeq(ids=seq.ids[keep], role_mask=mask)
