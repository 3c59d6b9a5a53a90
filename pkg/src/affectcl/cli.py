"""Batch pipeline commands: prepare, train, eval, synth.

Each command reads a flat INI config plus a few override flags and writes its
artifacts into the output directory.  Given the same inputs, config, and seed,
every output file is byte-identical across runs.

Exit codes: 0 ok, 2 config error, 3 data error, 4 numeric failure.
"""

from __future__ import annotations

import argparse
import configparser
import json
import os
import sys
from dataclasses import asdict, dataclass
from pathlib import Path

from . import __version__
from .corpus import (DatasetError, Track, _write_header, load_dataset,
                     save_dataset)
from .features import DEFAULT_DIM
from .inference import VoteConfig, crc_infer, sp_infer
from .metrics import (REFERENCE_RESULTS, error_breakdown, f1_report,
                      parse_failure_rate, pearson_report, report_json)
from .mutation import (DEFAULT_REPS, MutationDistribution,
                       build_preference_dataset, load_preferences,
                       save_preferences)
from .pairgen import DEFAULT_CAP, PairGenConfig, build_crc_training_set
from .prefloss import PrefConfig, save_curve, train_preference
from .scorer import (DEFAULT_LR, NonFiniteLossError, SlotScorer, TrainConfig,
                     train_on_prompts)
from .synth import toy_corpus, write_corpus_csv
from .templates import load_prompts, render_sp, save_prompts

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_DATA = 3
EXIT_NUMERIC = 4

METHODS = ("sp", "crc", "dpo", "simpo")


class ConfigError(Exception):
    pass


@dataclass
class RunConfig:
    """Everything a pipeline stage needs, resolved from INI + flags."""

    track: str = "A"
    language: str = "eng"
    method: str = "sp"
    seed: int = 0
    out: str = "out"
    train_csv: str = ""
    eval_csv: str = ""
    # prepare
    cap_per_label: int | None = None
    reps: int | None = None
    # train
    learning_rate: float | None = None
    epochs: int = 3
    batch_size: int = 128
    adam_beta1: float = 0.8
    adam_beta2: float = 0.99
    weight_decay: float = 0.0
    warmup_ratio: float = 0.1
    text_dim: int = DEFAULT_DIM
    sft_checkpoint: str = ""
    beta: float | None = None
    gamma: float = 0.5
    # eval
    n_votes: int | None = None
    fault_rate: float = 0.0

    def __post_init__(self):
        if self.method not in METHODS:
            raise ConfigError(f"method must be one of {METHODS}")
        try:
            self.track_enum = Track(self.track.upper())
        except ValueError:
            raise ConfigError(f"track must be A or B, got {self.track!r}")
        if self.method in ("dpo", "simpo") and not self.sft_checkpoint:
            # prepare does not need it; train/eval check again with context
            pass

    def to_dict(self) -> dict:
        d = asdict(self)
        d.pop("track_enum", None)
        # the output directory is where the artifact lives, not part of the
        # run's identity; keeping it out makes parallel runs byte-comparable
        d.pop("out", None)
        return d

    def resolved_lr(self) -> float:
        if self.learning_rate is not None:
            return self.learning_rate
        key = "sft" if self.method == "sp" else self.method
        return DEFAULT_LR[key]

    def train_config(self) -> TrainConfig:
        return TrainConfig(learning_rate=self.resolved_lr(), epochs=self.epochs,
                           batch_size=self.batch_size,
                           adam_beta1=self.adam_beta1,
                           adam_beta2=self.adam_beta2,
                           weight_decay=self.weight_decay,
                           warmup_ratio=self.warmup_ratio, seed=self.seed)

    def pref_config(self) -> PrefConfig:
        beta = self.beta if self.beta is not None else \
            (0.1 if self.method == "dpo" else 2.0)
        gamma = self.gamma if self.method == "simpo" else 0.0
        return PrefConfig(beta=beta, gamma=gamma, train=self.train_config())


_SECTIONS = {
    "run": ("track", "language", "method", "seed", "out", "train_csv",
            "eval_csv"),
    "prepare": ("cap_per_label", "reps"),
    "train": ("learning_rate", "epochs", "batch_size", "adam_beta1",
              "adam_beta2", "weight_decay", "warmup_ratio", "text_dim",
              "sft_checkpoint", "beta", "gamma"),
    "eval": ("n_votes", "fault_rate"),
}

_INT_KEYS = {"seed", "cap_per_label", "reps", "epochs", "batch_size",
             "text_dim", "n_votes"}
_FLOAT_KEYS = {"learning_rate", "adam_beta1", "adam_beta2", "weight_decay",
               "warmup_ratio", "beta", "gamma", "fault_rate"}


def load_config(path: str | None, overrides: dict) -> RunConfig:
    values: dict = {}
    if path:
        parser = configparser.ConfigParser()
        read = parser.read(path)
        if not read:
            raise ConfigError(f"config file not found: {path}")
        for section, keys in _SECTIONS.items():
            if not parser.has_section(section):
                continue
            for key in parser.options(section):
                if key not in keys:
                    raise ConfigError(f"unknown key [{section}] {key}")
                values[key] = parser.get(section, key)
    values.update({k: v for k, v in overrides.items() if v is not None})
    for key in list(values):
        if values[key] is None:
            continue
        if key in _INT_KEYS:
            values[key] = int(values[key])
        elif key in _FLOAT_KEYS:
            values[key] = float(values[key])
    try:
        return RunConfig(**values)
    except TypeError as exc:
        raise ConfigError(str(exc))


def _apply_thread_cap() -> None:
    cap = os.environ.get("AFFECT_THREADS")
    if not cap:
        return
    try:
        import numba
        numba.set_num_threads(max(1, int(cap)))
    except (ImportError, ValueError):
        pass


def _load_train_samples(cfg: RunConfig):
    if not cfg.train_csv:
        raise ConfigError("train_csv not set")
    return load_dataset(cfg.train_csv, cfg.track_enum, cfg.language)


def cmd_prepare(cfg: RunConfig) -> int:
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    samples, label_set = _load_train_samples(cfg)
    meta = {"config": cfg.to_dict()}
    save_dataset(samples, label_set, out / "dataset.jsonl", extra=meta)

    sp_instances = [render_sp(s, label_set) for s in samples]
    save_prompts(sp_instances, out / "sp.jsonl", extra=meta)

    if cfg.method == "crc":
        cap = cfg.cap_per_label or DEFAULT_CAP[cfg.track_enum]
        pg = PairGenConfig(cap_per_label=cap, seed=cfg.seed)
        crc_instances = build_crc_training_set(samples, label_set, pg)
        save_prompts(crc_instances, out / "crc.jsonl", extra=meta)
    elif cfg.method in ("dpo", "simpo"):
        reps = cfg.reps or DEFAULT_REPS[cfg.track_enum]
        pairs = build_preference_dataset(samples, label_set, reps=reps,
                                         dist=MutationDistribution.default(),
                                         seed=cfg.seed)
        save_preferences(pairs, out / "prefs.jsonl", extra=meta)
    return EXIT_OK


def cmd_train(cfg: RunConfig) -> int:
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    _, label_set = _load_train_samples(cfg)
    tconf = cfg.train_config()

    if cfg.method in ("sp", "crc"):
        source = "crc.jsonl" if cfg.method == "crc" else "sp.jsonl"
        prompt_path = out / source
        if not prompt_path.exists():
            raise DatasetError(f"missing prepared artifact {prompt_path}; "
                               "run prepare first")
        instances = load_prompts(prompt_path)
        if cfg.method == "crc":
            model = SlotScorer.for_crc(cfg.track_enum, text_dim=cfg.text_dim,
                                       label_set=label_set)
        else:
            model = SlotScorer.for_sp(label_set, cfg.track_enum,
                                      text_dim=cfg.text_dim)
        result = train_on_prompts(model, instances, tconf)
        result.model.save(out / "model.ckpt")
        save_curve(result.curve, out / "curve.csv", columns=("step", "loss", "lr"))
        return EXIT_OK

    # preference tuning off an existing SFT checkpoint
    if not cfg.sft_checkpoint:
        raise ConfigError(f"{cfg.method} requires sft_checkpoint")
    if not Path(cfg.sft_checkpoint).exists():
        raise DatasetError(f"SFT checkpoint not found: {cfg.sft_checkpoint}")
    pref_path = out / "prefs.jsonl"
    if not pref_path.exists():
        raise DatasetError(f"missing prepared artifact {pref_path}; "
                           "run prepare first")
    policy = SlotScorer.load(cfg.sft_checkpoint)
    pairs = load_preferences(pref_path, label_set, cfg.track_enum)
    result = train_preference(policy, pairs, cfg.method, cfg.pref_config())
    result.model.save(out / "model.ckpt")
    save_curve(result.curve, out / "curve.csv")
    summary = {"margin_initial": result.margin_initial,
               "margin_final": result.margin_final}
    (out / "margin.json").write_text(
        json.dumps(summary, sort_keys=True) + "\n", encoding="utf-8")
    return EXIT_OK


def cmd_eval(cfg: RunConfig) -> int:
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    ckpt = out / "model.ckpt"
    if not ckpt.exists():
        raise DatasetError(f"checkpoint not found: {ckpt}; run train first")
    if not cfg.eval_csv:
        raise ConfigError("eval_csv not set")
    model = SlotScorer.load(ckpt)
    tests, label_set = load_dataset(cfg.eval_csv, cfg.track_enum, cfg.language)

    tallies = None
    if cfg.method == "crc":
        anchors, _ = _load_train_samples(cfg)
        vconf = VoteConfig(n_votes=cfg.n_votes or
                           VoteConfig.default(cfg.track_enum).n_votes,
                           seed=cfg.seed)
        preds, tallies = crc_infer(model, tests, anchors, label_set, vconf)
    else:
        preds = sp_infer(model, tests, fault_rate=cfg.fault_rate,
                         fault_seed=cfg.seed)

    with (out / "predictions.jsonl").open("w", encoding="utf-8") as fh:
        _write_header(fh, "predictions", {"config": cfg.to_dict()})
        for i, (sample, pred) in enumerate(zip(tests, preds)):
            row = {"id": sample.id, "method": cfg.method,
                   "values": pred.values if pred.ok else None,
                   "parse_status": pred.parse_status}
            if tallies is not None:
                row["votes"] = {e: t.votes for e, t in tallies[i].items()}
            fh.write(json.dumps(row, sort_keys=True, ensure_ascii=False) + "\n")

    if cfg.track_enum is Track.A:
        report = f1_report(preds, tests, label_set)
    else:
        report = pearson_report(preds, tests, label_set)
    breakdown = error_breakdown(preds, tests, label_set, cfg.track_enum)
    rate = parse_failure_rate(preds)
    extra = {
        "schema_version": 1,
        "kind": "report",
        "config": cfg.to_dict(),
        "parse_failure_rate": {"numerator": rate.numerator,
                               "denominator": rate.denominator,
                               "value": float(rate)},
        "off_by_one_share": breakdown.off_by_one_share,
        "false_neutral_share": breakdown.false_neutral_share,
        "reference_results": REFERENCE_RESULTS.get(
            (cfg.track_enum.value, cfg.method)),
    }
    (out / "report.json").write_text(report_json(report, extra) + "\n",
                                     encoding="utf-8")
    (out / "report.txt").write_text(report.to_table() + "\n", encoding="utf-8")
    print(report.to_table())
    return EXIT_OK


def cmd_synth(cfg: RunConfig, n_train: int, n_test: int) -> int:
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    train_samples, label_set = toy_corpus(cfg.track_enum, n_train,
                                          seed=cfg.seed, id_prefix="toy_train")
    test_samples, _ = toy_corpus(cfg.track_enum, n_test, seed=cfg.seed + 1,
                                 id_prefix="toy_test")
    write_corpus_csv(train_samples, label_set, out / "train.csv")
    write_corpus_csv(test_samples, label_set, out / "test.csv")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="affectcl",
        description="contrastive emotion-detection training pipeline")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)
    for name, help_text in (
            ("prepare", "render training artifacts from a CSV dataset"),
            ("train", "train or preference-tune a scorer"),
            ("eval", "run inference and write metric reports"),
            ("synth", "generate a synthetic toy corpus")):
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--config", help="INI config file")
        p.add_argument("--seed", type=int)
        p.add_argument("--track", choices=["A", "B", "a", "b"])
        p.add_argument("--method", choices=list(METHODS))
        p.add_argument("--out")
        if name == "synth":
            p.add_argument("--n-train", type=int, default=200)
            p.add_argument("--n-test", type=int, default=100)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    overrides = {"seed": args.seed, "track": args.track,
                 "method": args.method, "out": args.out}
    _apply_thread_cap()
    try:
        cfg = load_config(args.config, overrides)
        if args.command == "prepare":
            return cmd_prepare(cfg)
        if args.command == "train":
            return cmd_train(cfg)
        if args.command == "eval":
            return cmd_eval(cfg)
        if args.command == "synth":
            return cmd_synth(cfg, args.n_train, args.n_test)
        raise ConfigError(f"unknown command {args.command}")
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (DatasetError, OSError, ValueError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (NonFiniteLossError, FloatingPointError) as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
