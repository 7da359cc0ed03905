"""Pipeline orchestration CLI.

Stages write their artifacts (datasets, checkpoints, CSV logs, reports) into
one output directory and record a manifest (config hash, seeds, artifact
hashes) so a run can be replayed exactly.
"""
from __future__ import annotations

import argparse
import hashlib
import json
import sys
from dataclasses import replace
from pathlib import Path

from . import config as config_mod
from . import corpus, metrics, mle, negatives, ppo, reward, verify
from .exceptions import ConfigError
from .model import ModelConfig, greedy, init_params, load_model, save_model

STAGE_PRODUCTS = {
    "gen-data": ["train.jsonl", "test.jsonl", "vocab.tsv"],
    "pretrain": ["base.ckpt"],
    "synth-negatives": ["reward_data.jsonl"],
    "train-reward": ["reward.ckpt"],
    "train-ppo": ["policy.ckpt", "value.ckpt", "ppo_log.csv"],
    "train-mle": ["mle.ckpt"],
    "evaluate": ["eval_outputs.json", "eval_metrics.json"],
    "report": ["report.csv", "report.md"],
}

PRODUCED_BY = {artifact: stage for stage, arts in STAGE_PRODUCTS.items()
               for artifact in arts}


def _require(out_dir, *names):
    for name in names:
        path = out_dir / name
        if not path.exists():
            producer = PRODUCED_BY.get(name, "an earlier stage")
            raise SystemExit(
                f"error: missing artifact {path}; run `lastmile {producer}` first"
            )


def _sha256(path):
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(65536), b""):
            h.update(chunk)
    return h.hexdigest()


def _write_manifest(out_dir, stage, cfg, artifacts):
    manifest = {
        "stage": stage,
        "config_sha256": config_mod.config_hash(cfg),
        "seeds": {k: cfg[k] for k in config_mod.SEED_KEYS},
        "artifacts": {name: _sha256(out_dir / name) for name in sorted(artifacts)
                      if (out_dir / name).exists()},
    }
    with open(out_dir / f"{stage}.manifest.json", "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _task_config(cfg):
    return corpus.TaskConfig(
        alphabet_size=cfg["task.alphabet_size"],
        input_len=(cfg["task.input_len_min"], cfg["task.input_len_max"]),
        marked=(cfg["task.marked_min"], cfg["task.marked_max"]),
        input_cap=cfg["data.input_cap"],
    )


def _model_config(cfg, vocab_size, head):
    return ModelConfig(
        vocab_size=vocab_size, d_model=cfg["model.d_model"],
        n_layers=cfg["model.n_layers"], n_heads=cfg["model.n_heads"],
        d_ff=cfg["model.d_ff"], max_seq=cfg["model.max_seq"], head=head,
        init_scale=cfg["model.init_scale"], attn_prior=cfg["model.attn_prior"],
    )


def _load_split(out_dir, cfg):
    vocab = corpus.Vocab.load(out_dir / "vocab.tsv")
    train = corpus.load_examples_with_vocab(out_dir / "train.jsonl", vocab,
                                            input_cap=cfg["data.input_cap"])
    test = corpus.load_examples_with_vocab(out_dir / "test.jsonl", vocab,
                                           input_cap=cfg["data.input_cap"])
    return vocab, train, test


def stage_gen_data(out_dir, cfg):
    if cfg["data.kind"] == "synthetic":
        full = corpus.gen_extraction_task(cfg["data.seed"], cfg["data.n"],
                                          _task_config(cfg))
    elif cfg["data.kind"] == "jsonl":
        if not cfg["data.path"]:
            raise ConfigError("data.kind = jsonl requires data.path")
        full = corpus.load_examples(cfg["data.path"], cfg["data.vocab_budget"],
                                    input_cap=cfg["data.input_cap"])
        if full.n_dropped:
            print(f"dropped {full.n_dropped} over-length records")
    else:
        raise ConfigError(f"unknown data.kind {cfg['data.kind']!r}")
    train, test = corpus.split(full, cfg["data.test_fraction"], cfg["data.seed"])
    corpus.save_examples(train, out_dir / "train.jsonl")
    corpus.save_examples(test, out_dir / "test.jsonl")
    full.vocab.save(out_dir / "vocab.tsv")
    print(f"wrote {len(train)} train / {len(test)} test examples, "
          f"vocab size {len(full.vocab)}")


def stage_pretrain(out_dir, cfg):
    _require(out_dir, "train.jsonl", "vocab.tsv")
    vocab, train, _ = _load_split(out_dir, cfg)
    params = init_params(_model_config(cfg, len(vocab), "logits"), cfg["model.seed"])
    mle_cfg = mle.MLEConfig(learning_rate=cfg["pretrain.learning_rate"],
                            batch_size=cfg["pretrain.batch_size"],
                            max_steps=cfg["pretrain.max_steps"])
    mle.train_mle(params, train, mle_cfg)
    save_model(params, out_dir / "base.ckpt")
    print(f"pretrained base model for {cfg['pretrain.max_steps']} steps")


def stage_synth_negatives(out_dir, cfg):
    _require(out_dir, "train.jsonl", "vocab.tsv")
    _, train, _ = _load_split(out_dir, cfg)
    data = negatives.build_reward_dataset(train, cfg["reward.negative_seed"],
                                          output_cap=cfg["eval.output_cap"])
    negatives.export_jsonl(data, out_dir / "reward_data.jsonl")
    print(f"wrote {len(data)} reward data ({len(train)} positives)")


def stage_train_reward(out_dir, cfg):
    _require(out_dir, "train.jsonl", "vocab.tsv")
    vocab, train, _ = _load_split(out_dir, cfg)
    data = negatives.build_reward_dataset(train, cfg["reward.negative_seed"],
                                          output_cap=cfg["eval.output_cap"])
    mcfg = replace(_model_config(cfg, len(vocab), "scalar"),
                   d_model=cfg["reward.d_model"],
                   attn_prior=cfg["reward.attn_prior"])
    params = init_params(mcfg, cfg["reward.seed"])
    rcfg = reward.RewardTrainConfig(learning_rate=cfg["reward.learning_rate"],
                                    batch_size=cfg["reward.batch_size"],
                                    epochs=cfg["reward.epochs"],
                                    seed=cfg["reward.seed"])
    reward.train_reward(params, data, rcfg)
    save_model(params, out_dir / "reward.ckpt")
    print(f"trained reward model on {len(data)} data")


def stage_train_ppo(out_dir, cfg):
    _require(out_dir, "train.jsonl", "vocab.tsv", "base.ckpt", "reward.ckpt")
    _, train, _ = _load_split(out_dir, cfg)
    policy = load_model(out_dir / "base.ckpt")
    value = load_model(out_dir / "base.ckpt").copy(head="scalar",
                                                   seed=cfg["ppo.value_seed"])
    fn = reward.RewardFn(load_model(out_dir / "reward.ckpt"),
                         length_penalty=cfg["reward.length_penalty"],
                         output_cap=cfg["eval.output_cap"])
    pcfg = ppo.PPOConfig(gamma=cfg["ppo.gamma"], lam=cfg["ppo.lam"],
                         clip_eps=cfg["ppo.clip_eps"], batch_size=cfg["ppo.batch_size"],
                         epochs=cfg["ppo.epochs"], learning_rate=cfg["ppo.learning_rate"],
                         output_cap=cfg["eval.output_cap"],
                         temperature=cfg["ppo.temperature"], seed=cfg["ppo.seed"],
                         normalize_advantages=cfg["ppo.normalize_advantages"])
    ppo.train(policy, value, fn, train, pcfg, log_path=out_dir / "ppo_log.csv")
    save_model(policy, out_dir / "policy.ckpt")
    save_model(value, out_dir / "value.ckpt")
    print(f"ran {-(-len(train) // pcfg.batch_size) * pcfg.epochs} outer batches")


def stage_train_mle(out_dir, cfg):
    _require(out_dir, "train.jsonl", "vocab.tsv", "base.ckpt")
    _, train, _ = _load_split(out_dir, cfg)
    params = load_model(out_dir / "base.ckpt")
    mcfg = mle.MLEConfig(learning_rate=cfg["mle.learning_rate"],
                         batch_size=cfg["mle.batch_size"], epochs=cfg["mle.epochs"],
                         seed=cfg["mle.seed"])
    mle.train_mle(params, train, mcfg)
    save_model(params, out_dir / "mle.ckpt")
    print("trained maximum-likelihood control model")


MODEL_COLUMNS = ("base", "mle", "rl", "base-cleaned", "mle-cleaned")


def stage_evaluate(out_dir, cfg):
    _require(out_dir, "test.jsonl", "vocab.tsv", "base.ckpt", "mle.ckpt", "policy.ckpt")
    vocab, _, test = _load_split(out_dir, cfg)
    cap = cfg["eval.output_cap"]
    models = {name: load_model(out_dir / f"{ckpt}.ckpt")
              for name, ckpt in (("base", "base"), ("mle", "mle"), ("rl", "policy"))}
    outputs = {}
    for name, params in models.items():
        outputs[name] = [vocab.decode(greedy(params, ex.input_tokens, cap))
                         for ex in test]
    outputs["base-cleaned"] = [mle.truncate_after_newline(mle.strip_sure_preamble(t))
                               for t in outputs["base"]]
    outputs["mle-cleaned"] = [mle.truncate_after_newline(t) for t in outputs["mle"]]
    refs = [ex.output_text for ex in test]
    reports = {name: metrics.evaluate(outputs[name], refs) for name in MODEL_COLUMNS}
    with open(out_dir / "eval_outputs.json", "w", encoding="utf-8") as fh:
        json.dump({"refs": refs, "outputs": outputs}, fh, indent=2, sort_keys=True)
        fh.write("\n")
    with open(out_dir / "eval_metrics.json", "w", encoding="utf-8") as fh:
        json.dump(reports, fh, indent=2, sort_keys=True)
        fh.write("\n")
    for name in MODEL_COLUMNS:
        print(f"{name}: excess-length {reports[name]['excess-length']:+.2f}, "
              f"la-rouge1-F1 {reports[name]['la-rouge1-F1']:.3f}")


def stage_report(out_dir, cfg):
    _require(out_dir, "eval_metrics.json")
    with open(out_dir / "eval_metrics.json", encoding="utf-8") as fh:
        reports = json.load(fh)
    ordered = {name: reports[name] for name in MODEL_COLUMNS}
    metrics.write_report_csv(ordered, out_dir / "report.csv")
    metrics.write_report_markdown(ordered, out_dir / "report.md")
    print(f"wrote report.csv and report.md ({len(metrics.METRIC_ROWS)} rows x "
          f"{len(MODEL_COLUMNS)} models)")


def stage_verify(out_dir, cfg, fast=False):
    results = verify.run_all(fast=fast)
    failed = 0
    for name, ok, detail in results:
        print(f"{'PASS' if ok else 'FAIL'} {name}: {detail}")
        failed += 0 if ok else 1
    if failed:
        raise SystemExit(f"{failed} verification check(s) failed")


STAGES = {
    "gen-data": stage_gen_data,
    "pretrain": stage_pretrain,
    "synth-negatives": stage_synth_negatives,
    "train-reward": stage_train_reward,
    "train-ppo": stage_train_ppo,
    "train-mle": stage_train_mle,
    "evaluate": stage_evaluate,
    "report": stage_report,
}

PIPELINE_ORDER = ["gen-data", "pretrain", "synth-negatives", "train-reward",
                  "train-ppo", "train-mle", "evaluate", "report"]


def build_parser():
    parser = argparse.ArgumentParser(
        prog="lastmile",
        description="RL-based last-mile fine-tuning pipeline for sequence generation",
    )
    sub = parser.add_subparsers(dest="subcommand", required=True)
    for name in list(STAGES) + ["verify", "run-all", "init-config"]:
        p = sub.add_parser(name)
        p.add_argument("--config", type=Path, default=None,
                       help="key-value config file (defaults used when omitted)")
        p.add_argument("--out", type=Path, default=Path("runs/default"),
                       help="artifact directory")
        p.add_argument("--seed", type=int, default=None,
                       help="master seed; re-derives every stage seed")
        if name == "verify":
            p.add_argument("--fast", action="store_true")
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    if args.subcommand == "init-config":
        args.out.mkdir(parents=True, exist_ok=True)
        config_mod.write_sample_config(args.out / "run.cfg")
        print(f"wrote {args.out / 'run.cfg'}")
        return 0
    cfg = config_mod.load_config(args.config, master_seed=args.seed)
    args.out.mkdir(parents=True, exist_ok=True)
    if args.subcommand == "verify":
        stage_verify(args.out, cfg, fast=args.fast)
        return 0
    if args.subcommand == "run-all":
        for name in PIPELINE_ORDER:
            print(f"== {name} ==")
            STAGES[name](args.out, cfg)
            _write_manifest(args.out, name, cfg, STAGE_PRODUCTS[name])
        return 0
    STAGES[args.subcommand](args.out, cfg)
    _write_manifest(args.out, args.subcommand, cfg, STAGE_PRODUCTS[args.subcommand])
    return 0


if __name__ == "__main__":
    sys.exit(main())
