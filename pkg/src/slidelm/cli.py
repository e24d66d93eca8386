"""Command-line interface: the full pipeline as subcommands.

Configuration is a flat key-value text file (``section.key=value``) plus
repeatable ``--set key=value`` overrides; unknown keys are rejected.
Exit codes: 0 success, 1 usage error, 2 data/validation error. Every run
prints a reproducibility header (version, seed, config hash, kernel
backend).

Heavy imports happen inside ``main`` so ``--threads`` can pin the BLAS
thread pools before numpy loads.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import os
import sys
from pathlib import Path

DEFAULTS: dict[str, str] = {
    # corpus
    "corpus.n_specimens": "400",
    "corpus.n_classes": "2",
    "corpus.d": "64",
    "corpus.tiles_min": "40",
    "corpus.tiles_max": "120",
    "corpus.slides_min": "1",
    "corpus.slides_max": "3",
    "corpus.class_separation": "2.0",
    "corpus.survival": "0",
    "corpus.beta_separation": "1.0",
    "corpus.censor_prob": "0.3",
    "corpus.tile_cap": "100000",
    # encoder
    "encoder.d_model": "64",
    "encoder.k_latents": "32",
    "encoder.self_layers": "2",
    "encoder.q_heads": "8",
    "encoder.kv_groups": "2",
    "encoder.mlp_expansion": "4",
    "encoder.d_embed": "64",
    # language model
    "model.d_text": "64",
    "model.text_layers": "2",
    "model.text_heads": "4",
    "model.d_dec": "64",
    "model.dec_layers": "2",
    "model.dec_heads": "4",
    "model.adapter_hidden": "128",
    "model.dtype": "float32",
    "model.tau_init": "0.1",
    # training
    "train.lambda_con": "0.25",
    "train.lambda_chat": "1.0",
    "train.budget": "4096",
    "train.mismatch_prob": "0.5",
    "train.rate_history": "0.2",
    "train.rate_specimen": "0.2",
    "train.rate_complementary": "0.2",
    "train.stage1_lr": "3e-3",
    "train.stage1_lr_text": "1e-3",
    "train.stage1_epochs": "5",
    "train.stage1_warmup": "50",
    "train.stage1_wd_encoder": "0.1",
    "train.stage2_lr": "3e-3",
    "train.stage2_epochs": "12",
    "train.stage2_warmup": "50",
    "train.survival_lr": "1e-3",
    "train.survival_lr_head": "3e-3",
    "train.survival_epochs": "30",
    "train.survival_warmup": "50",
    "train.survival_wd": "1e-4",
    "train.early_stop_patience": "3",
    # splits / run
    "split.train": "0.7",
    "split.val": "0.15",
    "split.seed": "7",
    "run.seed": "7",
}


class UsageError(Exception):
    pass


class CliParser(argparse.ArgumentParser):
    def error(self, message):  # usage errors -> exit 1, not argparse's 2
        raise UsageError(message)


def load_config(path: str | None, overrides: list[str]) -> dict[str, str]:
    cfg = dict(DEFAULTS)

    def apply(key: str, value: str, origin: str) -> None:
        if key not in cfg:
            raise UsageError(f"unknown config key {key!r} ({origin})")
        cfg[key] = value

    if path:
        text = Path(path).read_text()
        for ln, line in enumerate(text.splitlines(), 1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                raise UsageError(f"{path}:{ln}: expected key=value")
            key, value = line.split("=", 1)
            apply(key.strip(), value.strip(), f"{path}:{ln}")
    for item in overrides or []:
        if "=" not in item:
            raise UsageError(f"--set expects key=value, got {item!r}")
        key, value = item.split("=", 1)
        apply(key.strip(), value.strip(), "--set")
    return cfg


def config_hash(cfg: dict[str, str]) -> str:
    canon = "\n".join(f"{k}={cfg[k]}" for k in sorted(cfg))
    return hashlib.sha256(canon.encode()).hexdigest()[:12]


def write_config(cfg: dict[str, str], path: Path) -> None:
    path.write_text("\n".join(f"{k}={cfg[k]}" for k in sorted(cfg)) + "\n")


def _f(cfg, key) -> float:
    return float(cfg[key])


def _i(cfg, key) -> int:
    return int(cfg[key])


def _header(cfg: dict[str, str]) -> str:
    from . import __version__, kernel_backend

    return (f"slidelm {__version__} | seed={cfg['run.seed']} "
            f"| config={config_hash(cfg)} | kernel={kernel_backend}")


def build_corpus_spec(cfg):
    from .corpus import CorpusSpec, survival_beta_preset

    beta = None
    if cfg["corpus.survival"] not in ("0", "false", "no"):
        beta = survival_beta_preset(_i(cfg, "corpus.n_classes"), _i(cfg, "corpus.d"),
                                    _f(cfg, "corpus.beta_separation"))
    return CorpusSpec(
        n_specimens=_i(cfg, "corpus.n_specimens"),
        n_classes=_i(cfg, "corpus.n_classes"),
        d=_i(cfg, "corpus.d"),
        tiles_per_slide=(_i(cfg, "corpus.tiles_min"), _i(cfg, "corpus.tiles_max")),
        slides_per_specimen=(_i(cfg, "corpus.slides_min"), _i(cfg, "corpus.slides_max")),
        class_separation=_f(cfg, "corpus.class_separation"),
        survival_beta=beta,
        censor_prob=_f(cfg, "corpus.censor_prob") if beta is not None else 0.0,
    )


def build_model_config(cfg):
    from .encoder import EncoderConfig
    from .langmodel import ModelConfig

    enc = EncoderConfig(
        d_in=_i(cfg, "corpus.d"), d_model=_i(cfg, "encoder.d_model"),
        n_latents=_i(cfg, "encoder.k_latents"), n_self_layers=_i(cfg, "encoder.self_layers"),
        q_heads=_i(cfg, "encoder.q_heads"), kv_groups=_i(cfg, "encoder.kv_groups"),
        mlp_expansion=_i(cfg, "encoder.mlp_expansion"), d_embed=_i(cfg, "encoder.d_embed"))
    return ModelConfig(
        encoder=enc, d_text=_i(cfg, "model.d_text"), text_layers=_i(cfg, "model.text_layers"),
        text_heads=_i(cfg, "model.text_heads"), d_dec=_i(cfg, "model.d_dec"),
        dec_layers=_i(cfg, "model.dec_layers"), dec_heads=_i(cfg, "model.dec_heads"),
        adapter_hidden=_i(cfg, "model.adapter_hidden"), dtype=cfg["model.dtype"],
        tau_init=_f(cfg, "model.tau_init"))


def build_train_config(cfg):
    from .corpus import ContextRates
    from .trainer import StageConfig, TrainConfig

    return TrainConfig(
        lambda_con=_f(cfg, "train.lambda_con"), lambda_chat=_f(cfg, "train.lambda_chat"),
        rates=ContextRates(_f(cfg, "train.rate_history"), _f(cfg, "train.rate_specimen"),
                           _f(cfg, "train.rate_complementary")),
        mismatch_prob=_f(cfg, "train.mismatch_prob"), budget=_i(cfg, "train.budget"),
        seed=_i(cfg, "run.seed"),
        early_stop_patience=_i(cfg, "train.early_stop_patience"),
        stage1=StageConfig(lr=_f(cfg, "train.stage1_lr"), epochs=_i(cfg, "train.stage1_epochs"),
                           lr_text=_f(cfg, "train.stage1_lr_text"),
                           weight_decay_encoder=_f(cfg, "train.stage1_wd_encoder"),
                           warmup_steps=_i(cfg, "train.stage1_warmup")),
        stage2=StageConfig(lr=_f(cfg, "train.stage2_lr"), epochs=_i(cfg, "train.stage2_epochs"),
                           warmup_steps=_i(cfg, "train.stage2_warmup")),
        survival=StageConfig(lr=_f(cfg, "train.survival_lr"),
                             epochs=_i(cfg, "train.survival_epochs"),
                             lr_head=_f(cfg, "train.survival_lr_head"),
                             weight_decay=_f(cfg, "train.survival_wd"), beta2=0.98,
                             warmup_steps=_i(cfg, "train.survival_warmup")),
    )


def _load_corpus(args):
    from .corpus import load_corpus

    return load_corpus(args.corpus)


def _splits(corpus, cfg):
    from .trainer import split_records

    fr_train, fr_val = _f(cfg, "split.train"), _f(cfg, "split.val")
    return split_records(corpus, (fr_train, fr_val, 1.0 - fr_train - fr_val),
                         seed=_i(cfg, "split.seed"))


def _build_model(cfg, seed=None):
    from .corpus import default_vocabulary
    from .langmodel import SlideLanguageModel

    vocab = default_vocabulary()
    return SlideLanguageModel(build_model_config(cfg), vocab,
                              seed=_i(cfg, "run.seed") if seed is None else seed)


def _save_run(model, cfg, run_dir: Path, meta: dict) -> None:
    from .checkpoint import save_checkpoint

    run_dir.mkdir(parents=True, exist_ok=True)
    save_checkpoint(model.named_params(), run_dir / "checkpoint.sfck")
    write_config(cfg, run_dir / "config.cfg")
    (run_dir / "meta.json").write_text(json.dumps(meta, indent=1, sort_keys=True) + "\n")


def _load_run(run_dir: str):
    from .checkpoint import assign_params, load_checkpoint

    run = Path(run_dir)
    cfg = load_config(str(run / "config.cfg"), [])
    model = _build_model(cfg)
    assign_params(model.named_params(), load_checkpoint(run / "checkpoint.sfck"))
    return model, cfg


def _select_records(splits, which: str, corpus):
    if which == "all":
        return corpus.records
    if which not in splits:
        raise UsageError(f"unknown split {which!r}")
    return splits[which]


# ---- subcommands -------------------------------------------------------------


def cmd_synth(args, cfg) -> int:
    from .corpus import generate_corpus, save_corpus

    spec = build_corpus_spec(cfg)
    corpus = generate_corpus(spec, _i(cfg, "run.seed"))
    save_corpus(corpus, args.out)
    print(f"wrote corpus of {len(corpus)} specimens to {args.out}")
    return 0


def cmd_train(args, cfg) -> int:
    from . import trainer as T

    corpus = _load_corpus(args)
    splits = _splits(corpus, cfg)
    tcfg = build_train_config(cfg)
    run_dir = Path(args.out)
    log_path = None
    if args.stage == "1":
        model = _build_model(cfg)
        run_dir.mkdir(parents=True, exist_ok=True)
        result = T.train_stage1(model, corpus, tcfg, splits["train"],
                                log_path=run_dir / "log.jsonl")
    elif args.stage == "2":
        if not args.init:
            raise UsageError("--stage 2 requires --init (a stage-1 run)")
        model, _ = _load_run(args.init)
        run_dir.mkdir(parents=True, exist_ok=True)
        result = T.train_stage2(model, corpus, tcfg, splits["train"], splits["val"],
                                log_path=run_dir / "log.jsonl")
    elif args.stage == "survival":
        if not args.init:
            raise UsageError("--stage survival requires --init (a trained run)")
        model, _ = _load_run(args.init)
        run_dir.mkdir(parents=True, exist_ok=True)
        result = T.finetune_survival(model, corpus, tcfg, splits["train"],
                                     log_path=run_dir / "log.jsonl")
    elif args.stage == "specialist":
        from .corpus import default_vocabulary

        model, result = T.train_specialist(build_model_config(cfg),
                                           default_vocabulary(), corpus, tcfg,
                                           splits["train"], seed=_i(cfg, "run.seed") + 1)
        run_dir.mkdir(parents=True, exist_ok=True)
    else:
        raise UsageError(f"unknown stage {args.stage!r}")
    _save_run(model, cfg, run_dir, {"stage": args.stage, "steps": result.steps,
                                    "stats": result.stats})
    print(f"stage {args.stage}: {result.steps} steps -> {run_dir}")
    return 0


def cmd_embed(args, cfg) -> int:
    import numpy as np

    from . import predict as P

    corpus = _load_corpus(args)
    model, run_cfg = _load_run(args.run)
    splits = _splits(corpus, run_cfg)
    records = _select_records(splits, args.split, corpus)
    fn = {"base": P.embed_base, "diagnostic": P.embed_diagnostic,
          "survival": P.embed_survival}[args.kind]
    X = fn(model, corpus, records)
    np.savez(args.out, ids=np.asarray([r.specimen_id for r in records]),
             X=X, labels=np.asarray([r.label for r in records]))
    print(f"wrote {X.shape} {args.kind} embeddings to {args.out}")
    return 0


def cmd_predict(args, cfg) -> int:
    import numpy as np

    from . import predict as P
    from .autodiff import Tensor
    from .corpus import grammar

    corpus = _load_corpus(args)
    model, run_cfg = _load_run(args.run)
    splits = _splits(corpus, run_cfg)
    records = _select_records(splits, args.split, corpus)
    X_lat = None

    def latents_for(recs):
        import slidelm.autodiff as ad

        rows = []
        with ad.no_grad():
            for r in recs:
                rows.append(model.encoder.encode(r.tiles.stacked()).data[0])
        return Tensor(np.stack(rows))

    payload = {"task": args.mode,
               "specimen_ids": [r.specimen_id for r in records],
               "labels": [r.label for r in records]}
    if args.mode == "qa":
        question = args.question or grammar.yes_no_question("tumor")
        completions = (args.completions.split(",") if args.completions
                       else [grammar.ANSWER_YES, grammar.ANSWER_NO])
        query = P.QAQuery(P.make_prompt(model.vocab, question), completions)
        scores = P.qa_scores_batch(model, latents_for(records), query)
        probs = np.exp(scores - scores.max(axis=1, keepdims=True))
        probs /= probs.sum(axis=1, keepdims=True)
        payload.update(question=question, completions=completions,
                       scores=scores.tolist(), probs=probs.tolist(),
                       pred=[completions[i] for i in np.argmax(scores, axis=1)])
    elif args.mode == "contrastive":
        bank = P.build_prompt_bank(model, P.default_class_prompts(corpus.spec.n_classes))
        X = P.embed_base(model, corpus, records)
        probs = np.stack([P.contrastive_predict(v, bank) for v in X])
        payload.update(classes=bank.classes, probs=probs.tolist(),
                       pred=[bank.classes[i] for i in np.argmax(probs, axis=1)])
    elif args.mode == "report":
        schema = (P.ReportSchema.from_json(Path(args.schema).read_text())
                  if args.schema else P.synthetic_report_schema(corpus.spec.n_classes))
        lat = latents_for(records)
        filled = []
        for i in range(len(records)):
            rep = P.complete_report(model, Tensor(lat.data[i:i + 1]), schema)
            filled.append(json.loads(rep.to_json()))
        payload.update(schema=json.loads(schema.to_json()), reports=filled)
    else:
        raise UsageError(f"unknown predict mode {args.mode!r}")
    Path(args.out).write_text(json.dumps(payload, indent=1, sort_keys=True) + "\n")
    print(f"wrote {args.mode} predictions for {len(records)} specimens to {args.out}")
    return 0


def cmd_probe(args, cfg) -> int:
    import numpy as np

    from . import adapt as A, metrics as M, predict as P

    corpus = _load_corpus(args)
    model, run_cfg = _load_run(args.run)
    splits = _splits(corpus, run_cfg)
    fn = {"base": P.embed_base, "diagnostic": P.embed_diagnostic,
          "survival": P.embed_survival, "tile_mean": None}[args.kind]
    feats = {}
    for name in ("train", "val", "test"):
        recs = splits[name]
        feats[name] = (P.tile_mean_features(recs) if fn is None
                       else fn(model, corpus, recs),
                       np.asarray([r.label for r in recs]))
    probe = A.fit_linear_probe(feats["train"][0], feats["train"][1],
                               feats["val"][0], feats["val"][1])
    probs = probe.predict_proba(feats["test"][0])
    y = feats["test"][1]
    scores = probs[:, 1] if probs.shape[1] == 2 else probs
    point = M.auc(scores, y)
    lo, hi = M.bootstrap_ci(M.auc, (scores, y), seed=_i(cfg, "run.seed"))
    Path(args.out).write_text(probe.to_json() + "\n")
    print(f"probe[{args.kind}] chosen_l2={probe.chosen_l2:.3g} "
          f"test AUC={point:.4f} ci=({lo:.4f},{hi:.4f})")
    return 0


def cmd_cox(args, cfg) -> int:
    import numpy as np

    from . import adapt as A, metrics as M, predict as P

    corpus = _load_corpus(args)
    model, run_cfg = _load_run(args.run)
    splits = _splits(corpus, run_cfg)

    def xs(recs):
        have = [r for r in recs if r.survival is not None]
        fn = {"base": P.embed_base, "survival": P.embed_survival}.get(args.kind)
        X = (P.tile_mean_features(have) if fn is None
             else fn(model, corpus, have))
        t = np.asarray([r.survival.time_months for r in have])
        e = np.asarray([r.survival.event for r in have])
        return X, t, e

    Xtr, ttr, etr = xs(splits["train"])
    Xv, tv, ev = xs(splits["val"])
    Xte, tte, ete = xs(splits["test"])
    cox = A.fit_cox(Xtr, ttr, etr, Xv, tv, ev)
    point = M.c_index(cox.risk(Xte), tte, ete)
    lo, hi = M.bootstrap_ci(M.c_index, (cox.risk(Xte), tte, ete), seed=_i(cfg, "run.seed"))
    Path(args.out).write_text(cox.to_json() + "\n")
    print(f"cox[{args.kind}] lambda={cox.chosen_lambda:.3g} "
          f"test C-index={point:.4f} ci=({lo:.4f},{hi:.4f})")
    return 0


def cmd_eval(args, cfg) -> int:
    import numpy as np

    from . import metrics as M

    data = json.loads(Path(args.pred).read_text())
    labels = np.asarray(data["labels"])
    probs = np.asarray(data["probs"], dtype=float)
    seed = _i(cfg, "run.seed")
    reports = {}
    if data["task"] == "qa" and probs.shape[1] == 2:
        scores = probs[:, 0]
        y = (labels > 0).astype(int)
        pred = (scores >= 0.5).astype(int)
        reports["auc"] = M.EvalReport("auc", M.auc(scores, y),
                                      *M.bootstrap_ci(M.auc, (scores, y), seed=seed),
                                      0.95, len(y))
        reports["balanced_accuracy"] = M.EvalReport(
            "balanced_accuracy", M.balanced_accuracy(pred, y),
            *M.bootstrap_ci(M.balanced_accuracy, (pred, y), seed=seed), 0.95, len(y))
    else:
        pred = np.argmax(probs, axis=1)
        reports["balanced_accuracy"] = M.EvalReport(
            "balanced_accuracy", M.balanced_accuracy(pred, labels),
            *M.bootstrap_ci(M.balanced_accuracy, (pred, labels), seed=seed),
            0.95, len(labels))
    if args.compare:
        other = json.loads(Path(args.compare).read_text())
        o_probs = np.asarray(other["probs"], dtype=float)
        a = np.argmax(probs, axis=1)
        b = np.argmax(o_probs, axis=1)
        p = M.permutation_test(M.balanced_accuracy, a, b,
                               labels if probs.shape[1] > 2 else (labels > 0).astype(int),
                               seed=seed)
        reports["balanced_accuracy"].p_values["vs_compare"] = p
    M.write_reports_json(reports, args.out)
    if args.csv:
        M.write_reports_csv(reports, args.csv)
    for name, r in reports.items():
        print(f"{name}: {r.point:.4f} [{r.ci_lo:.4f}, {r.ci_hi:.4f}] n={r.n}")
    return 0


def cmd_heatmap(args, cfg) -> int:
    import csv as csvmod

    from .encoder import attention_heatmap

    corpus = _load_corpus(args)
    model, _ = _load_run(args.run)
    record = corpus.by_id(args.specimen)
    scores = attention_heatmap(model.encoder, record.tiles.stacked())
    with open(args.out, "w", newline="") as fh:
        writer = csvmod.writer(fh)
        writer.writerow(["slide_id", "tile_index", "score"])
        i = 0
        for slide_id, emb in record.tiles.slides:
            for t in range(emb.shape[0]):
                writer.writerow([slide_id, t, f"{scores[i]:.8g}"])
                i += 1
    print(f"wrote {len(scores)} tile scores to {args.out}")
    return 0


def cmd_pack_stats(args, cfg) -> int:
    from .packer import balance_report, pack, write_balance_csv

    corpus = _load_corpus(args)
    queue = [(r.specimen_id, r.tiles.total_tiles) for r in corpus.records]
    packs = pack(queue, _i(cfg, "train.budget"))
    stats = balance_report(packs, args.workers)
    if args.out:
        write_balance_csv(stats, args.out)
    print(f"packs={len(packs)} budget={cfg['train.budget']} workers={args.workers} "
          f"idle_fraction={stats.idle_fraction:.4f} "
          f"tokens(max/mean/min)={stats.max_tokens}/{stats.mean_tokens:.1f}/{stats.min_tokens}")
    return 0


def build_parser() -> CliParser:
    parser = CliParser(prog="slidelm", description=__doc__)
    parser.add_argument("--config", help="flat key-value config file")
    parser.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                        help="override a config key")
    parser.add_argument("--threads", type=int, default=1,
                        help="BLAS/worker threads; 1 = deterministic mode")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic corpus")
    p.add_argument("--n", type=int, help="shorthand for corpus.n_specimens")
    p.add_argument("--out", required=True)

    p = sub.add_parser("train", help="run a training stage")
    p.add_argument("--stage", required=True, choices=["1", "2", "survival", "specialist"])
    p.add_argument("--corpus", required=True)
    p.add_argument("--init", help="run directory to initialize from")
    p.add_argument("--out", required=True)

    p = sub.add_parser("embed", help="extract embeddings")
    p.add_argument("--kind", required=True, choices=["base", "diagnostic", "survival"])
    p.add_argument("--corpus", required=True)
    p.add_argument("--run", required=True)
    p.add_argument("--split", default="test", choices=["train", "val", "test", "all"])
    p.add_argument("--out", required=True)

    p = sub.add_parser("predict", help="direct prediction")
    p.add_argument("mode", choices=["qa", "contrastive", "report"])
    p.add_argument("--corpus", required=True)
    p.add_argument("--run", required=True)
    p.add_argument("--split", default="test", choices=["train", "val", "test", "all"])
    p.add_argument("--question")
    p.add_argument("--completions", help="comma-separated single-token answers")
    p.add_argument("--schema", help="report schema JSON (default: synthetic)")
    p.add_argument("--out", required=True)

    p = sub.add_parser("probe", help="linear probe with L2 sweep")
    p.add_argument("--kind", default="base",
                   choices=["base", "diagnostic", "survival", "tile_mean"])
    p.add_argument("--corpus", required=True)
    p.add_argument("--run", required=True)
    p.add_argument("--out", required=True)

    p = sub.add_parser("cox", help="elastic-net Cox regression")
    p.add_argument("--kind", default="survival", choices=["base", "survival", "tile_mean"])
    p.add_argument("--corpus", required=True)
    p.add_argument("--run", required=True)
    p.add_argument("--out", required=True)

    p = sub.add_parser("eval", help="metrics + statistics from prediction files")
    p.add_argument("--pred", required=True)
    p.add_argument("--compare")
    p.add_argument("--out", required=True)
    p.add_argument("--csv")

    p = sub.add_parser("heatmap", help="per-tile attention scores")
    p.add_argument("--corpus", required=True)
    p.add_argument("--run", required=True)
    p.add_argument("--specimen", required=True)
    p.add_argument("--out", required=True)

    p = sub.add_parser("pack-stats", help="packing and load-balance statistics")
    p.add_argument("--corpus", required=True)
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--out")
    return parser


COMMANDS = {
    "synth": cmd_synth,
    "train": cmd_train,
    "embed": cmd_embed,
    "predict": cmd_predict,
    "probe": cmd_probe,
    "cox": cmd_cox,
    "eval": cmd_eval,
    "heatmap": cmd_heatmap,
    "pack-stats": cmd_pack_stats,
}


def main(argv: list[str] | None = None) -> int:
    argv = sys.argv[1:] if argv is None else argv
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        for var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
            os.environ.setdefault(var, str(args.threads))
        cfg = load_config(args.config, args.set)
        if args.command == "synth" and args.n is not None:
            cfg["corpus.n_specimens"] = str(args.n)
        print(_header(cfg))
        return COMMANDS[args.command](args, cfg)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 1
    except SystemExit as exc:  # argparse --help
        return int(exc.code or 0)
    except (ValueError, KeyError, FileNotFoundError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
