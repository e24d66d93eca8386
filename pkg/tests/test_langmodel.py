"""Text tower: causality, wiring checks, masking, diagnostic embedding,
greedy generation, and a memorization capacity run."""

import numpy as np
import pytest

from conftest import tiny_model_config
from slidelm import autodiff as ad
from slidelm import corpus as C
from slidelm import losses as L
from slidelm.autodiff import Tensor
from slidelm.langmodel import (Decoder, DecoderConfig, SlideLanguageModel,
                               TextEncoder, TextEncoderConfig, pad_batch)
from slidelm.optim import AdamW, GroupConfig, grad_check

rng = np.random.default_rng(6)


@pytest.fixture(scope="module")
def vocab():
    return C.default_vocabulary()


@pytest.fixture(scope="module")
def tiny_model(vocab):
    return SlideLanguageModel(tiny_model_config(), vocab, seed=3)


def test_text_embedding_unit_norm(tiny_model):
    for ids in ([5], [5, 6, 7], list(range(10, 40))):
        v = tiny_model.text.encode(np.asarray(ids))
        assert abs(np.linalg.norm(v.data) - 1.0) < 1e-6


def test_text_encoder_deterministic(tiny_model):
    ids = np.asarray([4, 9, 2, 7])
    a = tiny_model.text.encode(ids)
    b = tiny_model.text.encode(ids)
    assert np.array_equal(a.data, b.data)


def test_text_encoder_rejects_empty(tiny_model):
    with pytest.raises(ValueError):
        tiny_model.text.encode(np.asarray([], dtype=np.int64))


def test_text_batch_matches_single(tiny_model):
    seqs = [np.asarray([4, 9, 2]), np.asarray([11, 3, 8, 2, 19])]
    batch = tiny_model.text.encode_batch(seqs)
    for i, ids in enumerate(seqs):
        solo = tiny_model.text.encode(ids)
        assert np.abs(batch.data[i] - solo.data).max() < 1e-12


def test_adapter_zero_weights_zero_prefix(tiny_model, vocab):
    model = SlideLanguageModel(tiny_model_config(), vocab, seed=5)
    for p in model.adapter.named_params().values():
        p.data[:] = 0.0
    lat = Tensor(rng.standard_normal((2, 4, 8)))
    out = model.adapt_latents(lat)
    assert np.array_equal(out.data, np.zeros((2, 4, 8)))


def test_adapter_shapes(tiny_model):
    for m in (1, 3):
        lat = Tensor(rng.standard_normal((m, 4, 8)))
        assert tiny_model.adapt_latents(lat).shape == (m, 4, 8)


def test_adapter_gradients(tiny_model):
    lat = Tensor(rng.standard_normal((2, 4, 8)))
    w = rng.standard_normal((2, 4, 8))
    params = tiny_model.adapter.named_params("adapter.")
    err = grad_check(lambda: (tiny_model.adapt_latents(lat) * Tensor(w)).sum(),
                     params, 1e-5)
    assert err < 1e-5


def decoder_logits(model, ids, prefix=None):
    arr = np.asarray(ids, dtype=np.int64)[None, :]
    lengths = np.asarray([arr.shape[1]])
    logits, hidden = model.decoder.forward_batch(arr, lengths, prefix)
    return logits.data[0], hidden.data[0]


def test_decoder_causality_exact(tiny_model):
    ids = list(rng.integers(4, 40, size=12))
    base, _ = decoder_logits(tiny_model, ids)
    for j in (6, 9, 11):
        mutated = list(ids)
        mutated[j] = (mutated[j] + 5) % 40
        out, _ = decoder_logits(tiny_model, mutated)
        assert np.array_equal(out[:j], base[:j])
        assert not np.array_equal(out[j:], base[j:])


def test_zero_layer_decoder_is_head_of_embeddings(vocab):
    cfg = DecoderConfig(vocab_size=len(vocab), d_model=8, n_layers=0,
                        n_heads=2, max_len=32)
    dec = Decoder(cfg, np.random.default_rng(0))
    ids = np.asarray([[3, 1, 4]])
    logits, _ = dec.forward_batch(ids, np.asarray([3]))
    emb = dec.tok_emb.data[ids[0]] + dec.pos_emb.data[:3]
    mu = emb.mean(-1, keepdims=True)
    normed = (emb - mu) / np.sqrt(((emb - mu) ** 2).mean(-1, keepdims=True) + 1e-5)
    manual = (normed * dec.final_norm.gain.data + dec.final_norm.shift.data) \
        @ dec.head.weight.data + dec.head.bias.data
    assert np.abs(logits.data[0] - manual).max() < 1e-10


def test_padded_batch_matches_single(tiny_model):
    a = list(rng.integers(4, 40, size=9))
    b = list(rng.integers(4, 40, size=5))
    ids, lengths = pad_batch([np.asarray(a), np.asarray(b)])
    logits, _ = tiny_model.decoder.forward_batch(ids, lengths)
    solo_b, _ = decoder_logits(tiny_model, b)
    assert np.abs(logits.data[1, :5] - solo_b[:5]).max() < 1e-12


def test_decode_checks_image_span(tiny_model, vocab):
    ex = C.ChatExample("yes_no", [
        ("user", f"{C.IMAGE} is there necrosis ?"),
        ("assistant", C.grammar.ANSWER_NO)])
    seq = C.render_chat(ex, vocab)
    lat = Tensor(rng.standard_normal((1, 4, 8)))
    wrong = C.expand_image_span(seq, 3, vocab)  # K is 4, not 3
    with pytest.raises(ValueError, match="placeholder count"):
        tiny_model.decode(lat, [wrong])


def test_diagnostic_embedding_contract(tiny_model, vocab):
    from slidelm.predict import make_prompt

    prompt = make_prompt(vocab, C.grammar.REPORT_PROMPTS[0])
    lat = Tensor(rng.standard_normal((1, 4, 8)))
    a = tiny_model.diagnostic_embedding(lat, prompt)
    b = tiny_model.diagnostic_embedding(lat, prompt)
    assert np.array_equal(a, b)
    assert a.shape == (8,)
    # causality: appending tokens after the assistant tag changes nothing
    longer = C.TokenSeq(ids=np.concatenate([prompt.ids, [vocab.no_id]]))
    c = tiny_model.diagnostic_embedding(lat, longer)
    assert np.array_equal(a, c)


def test_diagnostic_embedding_requires_one_assistant_tag(tiny_model, vocab):
    lat = Tensor(rng.standard_normal((1, 4, 8)))
    no_tag = vocab.tokenize(f"{C.USER} {C.IMAGE} is there necrosis ?")
    with pytest.raises(ValueError, match="assistant"):
        tiny_model.diagnostic_embedding(lat, no_tag)
    two = vocab.tokenize(f"{C.USER} {C.IMAGE} {C.ASSISTANT} {C.ASSISTANT}")
    with pytest.raises(ValueError, match="assistant"):
        tiny_model.diagnostic_embedding(lat, two)


def test_generate_max_len_zero(tiny_model, vocab):
    from slidelm.predict import make_prompt

    lat = Tensor(rng.standard_normal((1, 4, 8)))
    assert tiny_model.generate(lat, make_prompt(vocab, "write the report ."), 0) == ""


def test_generate_deterministic(tiny_model, vocab):
    from slidelm.predict import make_prompt

    lat = Tensor(rng.standard_normal((1, 4, 8)))
    prompt = make_prompt(vocab, "write the report .")
    assert tiny_model.generate(lat, prompt, 12) == tiny_model.generate(lat, prompt, 12)


def test_overfit_single_example(vocab):
    """A tiny decoder memorizes one chat example to near-zero loss."""
    model = SlideLanguageModel(tiny_model_config(), vocab, seed=1)
    ex = C.ChatExample("yes_no", [
        ("user", f"{C.IMAGE} is there necrosis ?"),
        ("assistant", C.grammar.ANSWER_YES)])
    seq = model.prepare_chat(C.render_chat(ex, vocab))
    lat = Tensor(rng.standard_normal((1, 4, 8)))
    params = {**model.decoder.named_params("decoder."),
              **model.adapter.named_params("adapter.")}
    opt = AdamW(params, lambda _: GroupConfig(lr=3e-3), warmup_steps=10)
    final = None
    for _ in range(300):
        logits, _, ids, _ = model.decode(lat, [seq])
        masks, _ = pad_batch([seq.role_mask])
        loss = L.chat_loss(logits[:, :-1], ids[:, 1:], masks[:, 1:], "sum")
        loss.backward()
        opt.step()
        opt.zero_grad()
        final = loss.item()
    assert final < 1e-2


def test_full_path_gradients_tiny(vocab):
    """encoder -> adapter -> decoder chat loss, finite-difference checked."""
    from slidelm.packer import PackedBatch

    model = SlideLanguageModel(tiny_model_config(), vocab, seed=2)
    tiles = rng.standard_normal((5, 5))
    batch = PackedBatch(tiles, np.array([0, 2, 5]), ["a", "b"])
    ex = C.ChatExample("yes_no", [
        ("user", f"{C.IMAGE} is there necrosis ?"),
        ("assistant", C.grammar.ANSWER_NO)])
    seq = model.prepare_chat(C.render_chat(ex, vocab))

    def loss_fn():
        latents = model.encoder.encode(batch)
        logits, _, ids, _ = model.decode(latents, [seq, seq])
        masks, _ = pad_batch([seq.role_mask, seq.role_mask])
        return L.chat_loss(logits[:, :-1], ids[:, 1:], masks[:, 1:], "sum")

    params = model.trainable_params()
    err = grad_check(loss_fn, params, 1e-5)
    assert err < 1e-5
