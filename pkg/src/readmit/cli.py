"""Command-line entry point wiring the modules into reproducible runs.

Commands compose through files only: gen -> train-nlp -> extract -> eval.
Every command writes a run manifest recording the config, input digests
and output digests; exit codes are 0 (success), 1 (I/O), 2 (configuration
or validation).
"""

import argparse
import hashlib
import json
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__, classifiers, domains, evaluate, features, neural, syngen, textproc
from . import corpus as corpus_mod
from .classifiers import ModelSpec
from .domains import RISK_DOMAINS, domain_key
from .errors import ReadmitError
from .evaluate import SplitConfig
from .neural import HashingEncoder
from .seeding import derive_seed
from .syngen import GenConfig

EXIT_OK = 0
EXIT_IO = 1
EXIT_CONFIG = 2

_GEN_KEYS = {
    "seed": int,
    "n_patients": int,
    "admissions_per_patient": "range",
    "notes_per_admission": "range",
    "tokens_per_note": "range",
    "target_readmission_rate": float,
    "noise_sd": float,
    "missing_field_rate": float,
    "seed_sentences": int,
}

_EVAL_KEYS = {
    "master_seed": int,
    "n_runs": int,
    "test_fraction": float,
    "stratified": "bool",
    "grouping": str,
    "rfe_folds": int,
    "rfe_repeats": int,
    "workers": int,
    "model.kind": str,
    "model.seed": int,
}

EVAL_DEFAULTS = {
    "master_seed": 0,
    "n_runs": 100,
    "test_fraction": 0.2,
    "stratified": True,
    "grouping": "admission_level",
    "rfe_folds": 3,
    "rfe_repeats": 30,
    "workers": 1,
    "model.kind": "random_forest",
    "model.seed": 0,
}


class _CliConfigError(ReadmitError):
    pass


def _coerce(key: str, raw: str, kind):
    try:
        if kind is int:
            return int(raw)
        if kind is float:
            return float(raw)
        if kind == "bool":
            low = raw.strip().lower()
            if low in ("true", "yes", "1"):
                return True
            if low in ("false", "no", "0"):
                return False
            raise ValueError(raw)
        if kind == "range":
            lo, _, hi = raw.partition(":")
            return (int(lo), int(hi))
        return raw
    except ValueError:
        raise _CliConfigError(f"config key {key!r}: cannot parse value {raw!r}") from None


def _read_flat_config(path) -> dict[str, str]:
    out: dict[str, str] = {}
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            stripped = line.strip()
            if not stripped or stripped.startswith("#"):
                continue
            key, eq, value = stripped.partition("=")
            if not eq:
                raise _CliConfigError(f"{path} line {lineno}: expected 'key = value'")
            out[key.strip()] = value.strip()
    return out


def _collect_settings(config_path, overrides) -> dict[str, str]:
    settings = _read_flat_config(config_path) if config_path else {}
    for item in overrides or ():
        key, eq, value = item.partition("=")
        if not eq:
            raise _CliConfigError(f"--set {item!r}: expected key=value")
        settings[key.strip()] = value.strip()
    return settings


def _gen_config_from_settings(settings: dict[str, str]) -> tuple[GenConfig, int]:
    kwargs = {}
    weights = dict(syngen.DEFAULT_EFFECT_WEIGHTS)
    seed_sentences = 3500
    for key, raw in settings.items():
        if key.startswith("effect_weights."):
            name = key.split(".", 1)[1]
            if name not in syngen.EFFECT_NAMES:
                raise _CliConfigError(f"config key {key!r}: unknown effect name {name!r}")
            weights[name] = _coerce(key, raw, float)
        elif key == "seed_sentences":
            seed_sentences = _coerce(key, raw, int)
        elif key in _GEN_KEYS:
            kwargs[key] = _coerce(key, raw, _GEN_KEYS[key])
        else:
            raise _CliConfigError(f"unknown generator config key {key!r}")
    return GenConfig(effect_weights=weights, **kwargs), seed_sentences


def _eval_settings(settings: dict[str, str]) -> dict:
    out = dict(EVAL_DEFAULTS)
    hyper: dict = {}
    for key, raw in settings.items():
        if key in _EVAL_KEYS:
            out[key] = _coerce(key, raw, _EVAL_KEYS[key])
        elif key.startswith("model."):
            hyper[key.split(".", 1)[1]] = _parse_literal(raw)
        else:
            raise _CliConfigError(f"unknown eval config key {key!r}")
    out["model.hyper"] = hyper
    return out


def _parse_literal(raw: str):
    low = raw.strip().lower()
    if low in ("true", "false"):
        return low == "true"
    if low in ("none", "null"):
        return None
    try:
        return int(raw)
    except ValueError:
        pass
    try:
        return float(raw)
    except ValueError:
        pass
    if "," in raw:
        return tuple(_parse_literal(p) for p in raw.split(","))
    return raw


def _sha256(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


def _write_manifest(out_dir: Path, command: str, config_echo: dict, inputs, outputs,
                    master_seed, started: float) -> None:
    manifest = {
        "tool_version": __version__,
        "command": command,
        "config": config_echo,
        "master_seed": master_seed,
        "input_digests": {str(p): _sha256(p) for p in inputs},
        "outputs": {str(p): _sha256(p) for p in outputs},
        "timings_sec": {"wall": time.time() - started},
    }
    with open(out_dir / "manifest.json", "w", encoding="utf-8", newline="\n") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _config_echo_gen(config: GenConfig, seed_sentences: int) -> dict:
    return {
        "seed": config.seed,
        "n_patients": config.n_patients,
        "admissions_per_patient": list(config.admissions_per_patient),
        "notes_per_admission": list(config.notes_per_admission),
        "tokens_per_note": list(config.tokens_per_note),
        "target_readmission_rate": config.target_readmission_rate,
        "effect_weights": dict(config.effect_weights),
        "noise_sd": config.noise_sd,
        "missing_field_rate": config.missing_field_rate,
        "seed_sentences": seed_sentences,
    }


def cmd_gen(args) -> int:
    config, seed_sentences = _gen_config_from_settings(
        _collect_settings(args.config, args.set))
    started = time.time()
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    corpus, truth = syngen.generate_with_truth(config)
    corpus_path = out / "corpus.jsonl"
    seed_path = out / "sentiment_seed.jsonl"
    truth_path = out / "ground_truth.jsonl"
    corpus_mod.write_corpus(corpus, corpus_path)
    domains.write_seed_file(syngen.make_sentiment_seed(config, seed_sentences), seed_path)
    syngen.write_ground_truth(truth, truth_path)
    _write_manifest(out, "gen", _config_echo_gen(config, seed_sentences), [],
                    [corpus_path, seed_path, truth_path], config.seed, started)
    print(f"wrote {corpus_path} ({len(corpus.admissions)} admissions, "
          f"{len(corpus.patients)} patients)")
    return EXIT_OK


def cmd_train_nlp(args) -> int:
    started = time.time()
    settings = _collect_settings(args.config, args.set)
    seed = int(settings.pop("seed", 0))
    holdout = float(settings.pop("holdout_fraction", 0.2))
    epochs_topic = settings.pop("topic_epochs", None)
    epochs_sent = settings.pop("sentiment_epochs", None)
    if settings:
        raise _CliConfigError(f"unknown train-nlp config keys {sorted(settings)}")

    corpus = corpus_mod.derive_labels(corpus_mod.load_corpus(args.corpus))
    lexicon = domains.load_lexicon(args.lexicon) if args.lexicon else domains.default_lexicon()
    records = domains.read_seed_file(args.seed_file)
    encoder = HashingEncoder()

    X, Y = domains.weak_label(corpus, lexicon, encoder)
    rng = np.random.default_rng(derive_seed(seed, "topic-holdout"))
    order = rng.permutation(len(X))
    n_test = max(1, int(round(holdout * len(X))))
    test_idx, train_idx = order[:n_test], order[n_test:]
    topic_cfg = domains.DEFAULT_TOPIC_CONFIG
    if epochs_topic is not None:
        topic_cfg = neural.TrainConfig(learning_rate=0.1, batch_size=128,
                                       epochs=int(epochs_topic), patience=5, seed=seed)
    topic = domains.train_topic_model(X[train_idx], Y[train_idx], topic_cfg)
    pred = domains.predict_domains(topic, X[test_idx])
    truth_bits = Y[test_idx] > 0.5
    tp = float(np.sum(pred & truth_bits))
    fp = float(np.sum(pred & ~truth_bits))
    fn = float(np.sum(~pred & truth_bits))
    micro_f1 = 2 * tp / (2 * tp + fp + fn) if (2 * tp + fp + fn) else 0.0
    print(f"topic micro-F1 (held-out {int(100 * holdout)}%): {micro_f1:.3f}")

    sent_cfg = domains.DEFAULT_SENTIMENT_CONFIG
    if epochs_sent is not None:
        sent_cfg = neural.TrainConfig(learning_rate=0.05, batch_size=32,
                                      epochs=int(epochs_sent), patience=10, seed=seed)
    rng2 = np.random.default_rng(derive_seed(seed, "sent-holdout"))
    order2 = rng2.permutation(len(records))
    n_test2 = max(1, int(round(holdout * len(records))))
    test_recs = [records[i] for i in order2[:n_test2]]
    train_recs = [records[i] for i in order2[n_test2:]]
    models = domains.train_sentiment_models(train_recs, encoder, sent_cfg)
    for domain in RISK_DOMAINS:
        recs = [r for r in test_recs if r.domain == domain]
        if not recs:
            print(f"sentiment accuracy ({domain}): no held-out sentences")
            continue
        Xd = np.stack([encoder(textproc.tokenize(r.text)) for r in recs])
        pred_pol = np.argmax(neural.predict(models[domain], Xd), axis=1)
        true_pol = np.array([domains.POLARITIES.index(r.label) for r in recs])
        print(f"sentiment accuracy ({domain}): {float(np.mean(pred_pol == true_pol)):.3f}")

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    outputs = []
    topic_path = out / "topic_model.json"
    neural.save_mlp(topic, topic_path)
    outputs.append(topic_path)
    for domain in RISK_DOMAINS:
        path = out / f"sentiment_{domain_key(domain)}.json"
        neural.save_mlp(models[domain], path)
        outputs.append(path)
    inputs = [args.corpus, args.seed_file] + ([args.lexicon] if args.lexicon else [])
    _write_manifest(out, "train-nlp", {"seed": seed, "holdout_fraction": holdout},
                    inputs, outputs, seed, started)
    return EXIT_OK


def _load_nlp_models(models_dir: Path):
    topic = neural.load_mlp(models_dir / "topic_model.json")
    sentiment = {d: neural.load_mlp(models_dir / f"sentiment_{domain_key(d)}.json")
                 for d in RISK_DOMAINS}
    return topic, sentiment


def cmd_extract(args) -> int:
    started = time.time()
    corpus = corpus_mod.derive_labels(corpus_mod.load_corpus(args.corpus))
    models_dir = Path(args.models)
    topic, sentiment = _load_nlp_models(models_dir)
    encoder = HashingEncoder(dim=topic.spec.input_dim)
    summaries = {
        a.admission_id: domains.summarize_admission(a, topic, sentiment, encoder)
        for a in corpus.admissions
    }
    rows = features.build_features(corpus, summaries)
    matrix = features.encode_features(rows)
    out_path = Path(args.out)
    if out_path.parent != Path(""):
        out_path.parent.mkdir(parents=True, exist_ok=True)
    features.write_csv(matrix, out_path)
    manifest_dir = out_path.parent if str(out_path.parent) else Path(".")
    inputs = [args.corpus, models_dir / "topic_model.json"]
    inputs += [models_dir / f"sentiment_{domain_key(d)}.json" for d in RISK_DOMAINS]
    _write_manifest(manifest_dir, "extract", {"corpus": str(args.corpus)},
                    inputs, [out_path], 0, started)
    print(f"wrote {out_path} ({matrix.X.shape[0]} rows x {matrix.X.shape[1]} feature columns)")
    return EXIT_OK


def _model_spec(settings: dict) -> ModelSpec:
    return ModelSpec(kind=settings["model.kind"], hyper=settings["model.hyper"],
                     seed=settings["model.seed"])


def _split_config(settings: dict) -> SplitConfig:
    return SplitConfig(test_fraction=settings["test_fraction"],
                       stratified=settings["stratified"], grouping=settings["grouping"])


def cmd_eval(args) -> int:
    started = time.time()
    settings = _eval_settings(_collect_settings(args.config, args.set))
    if args.workers is not None:
        settings["workers"] = args.workers
    if settings["grouping"] == "patient_grouped":
        raise _CliConfigError(
            "patient_grouped evaluation needs patient ids, which feature CSVs do not "
            "carry; use the library API on a corpus-derived matrix instead")
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)

    if args.mode == "consensus":
        outcomes = []
        for path in args.rfe:
            with open(path, "r", encoding="utf-8") as fh:
                outcomes.append(evaluate.rfe_outcome_from_obj(json.load(fh)))
        names = evaluate.consensus_elimination(outcomes)
        report_obj = {"consensus_eliminated": names,
                      "sources": [str(p) for p in args.rfe]}
        report_path = out / "consensus.json"
        _dump_json(report_obj, report_path)
        text = "Consensus-eliminated feature values:\n" + "".join(f"  {n}\n" for n in names)
        (out / "consensus.txt").write_text(text, encoding="utf-8")
        print(text, end="")
        _write_manifest(out, "eval consensus", settings_echo(settings), list(args.rfe),
                        [report_path, out / "consensus.txt"], settings["master_seed"], started)
        return EXIT_OK

    matrix = features.read_csv(args.features)
    spec = _model_spec(settings)
    split_cfg = _split_config(settings)
    workers = settings["workers"]

    if args.mode == "single":
        report = evaluate.repeated_eval(matrix, spec, split_cfg, n_runs=settings["n_runs"],
                                        master_seed=settings["master_seed"], workers=workers)
        obj = evaluate.runs_report_obj(report)
        text = evaluate.render_runs_text(report)
        stem = "eval_single"
    elif args.mode == "ablation":
        report = evaluate.ablation(matrix, spec, split_cfg, n_runs=settings["n_runs"],
                                   master_seed=settings["master_seed"], workers=workers)
        obj = evaluate.ablation_report_obj(report)
        text = evaluate.render_ablation_text(report)
        stem = "eval_ablation"
    else:  # rfe
        outcome = evaluate.rfe(matrix, spec, folds=settings["rfe_folds"],
                               repeats=settings["rfe_repeats"],
                               master_seed=settings["master_seed"], workers=workers)
        obj = evaluate.rfe_outcome_obj(outcome)
        text = (f"RFE best set ({len(outcome.best_set)} columns, "
                f"CV F1 {outcome.best_score:.3f}):\n"
                + "".join(f"  {n}\n" for n in outcome.best_set))
        stem = "eval_rfe"

    report_path = out / f"{stem}.json"
    _dump_json(obj, report_path)
    (out / f"{stem}.txt").write_text(text, encoding="utf-8")
    print(text, end="")
    _write_manifest(out, f"eval {args.mode}", settings_echo(settings), [args.features],
                    [report_path, out / f"{stem}.txt"], settings["master_seed"], started)
    return EXIT_OK


def settings_echo(settings: dict) -> dict:
    echo = dict(settings)
    echo["model.hyper"] = {k: (list(v) if isinstance(v, tuple) else v)
                           for k, v in settings["model.hyper"].items()}
    return echo


def _dump_json(obj, path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True)
        fh.write("\n")


def cmd_report(args) -> int:
    with open(args.report, "r", encoding="utf-8") as fh:
        obj = json.load(fh)
    if "table" in obj:
        rows = sorted(evaluate.ABLATION_CONFIGS, key=lambda name: obj["table"][name]["f1"])
        print(f"Model: {obj['model_kind']} ({obj['n_runs']} runs per configuration)")
        print(f"{'Configuration':<30}{'Acc':>8}{'AUC':>8}{'F1':>8}")
        for name in rows:
            t = obj["table"][name]
            print(f"{evaluate.ABLATION_TITLES[name]:<30}{t['accuracy']:>8.2f}"
                  f"{t['auc']:>8.2f}{t['f1']:>8.2f}")
        print(f"Best-vs-baseline F1 improvement: {100 * obj['relative_f1_improvement']:.1f}%")
    elif "mean" in obj:
        print(f"Model: {obj['model_kind']} ({obj['n_runs']} runs)")
        for metric in ("accuracy", "auc", "f1"):
            print(f"{metric:<10}{obj['mean'][metric]:.3f} +/- {obj['std'][metric]:.3f}")
    elif "best_set" in obj:
        print(f"RFE best set ({len(obj['best_set'])} columns, CV F1 {obj['best_score']:.3f}):")
        for name in obj["best_set"]:
            print(f"  {name}")
    elif "consensus_eliminated" in obj:
        print("Consensus-eliminated feature values:")
        for name in obj["consensus_eliminated"]:
            print(f"  {name}")
    else:
        raise _CliConfigError(f"{args.report}: unrecognized report layout")
    return EXIT_OK


def cmd_defaults(args) -> int:
    print("# generator defaults")
    cfg = GenConfig()
    for key, value in _config_echo_gen(cfg, 3500).items():
        if key == "effect_weights":
            for name, w in value.items():
                print(f"effect_weights.{name} = {w}")
        elif isinstance(value, list):
            print(f"{key} = {value[0]}:{value[1]}")
        else:
            print(f"{key} = {value}")
    print("# eval defaults")
    for key, value in EVAL_DEFAULTS.items():
        print(f"{key} = {value}")
    print("# model hyperparameter defaults")
    for kind, hyper in classifiers.DEFAULT_HYPERPARAMETERS.items():
        for name, value in hyper.items():
            if isinstance(value, tuple):
                value = ",".join(str(v) for v in value)
            print(f"model.{name} = {value}  # kind={kind}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="readmit",
        description="Synthetic EHR generation, NLP feature extraction, and "
                    "readmission-risk evaluation experiments.")
    parser.add_argument("--version", action="version", version=f"readmit {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen", help="generate a synthetic corpus, sentiment seed, and ground truth")
    p.add_argument("--config", help="flat key=value generator config file")
    p.add_argument("--set", action="append", metavar="KEY=VALUE",
                   help="override a config key (repeatable; wins over the file)")
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=cmd_gen)

    p = sub.add_parser("train-nlp", help="train the topic model and seven sentiment models")
    p.add_argument("--corpus", required=True)
    p.add_argument("--seed-file", required=True, help="sentiment seed JSONL")
    p.add_argument("--lexicon", help="lexicon JSON (defaults to the shipped one)")
    p.add_argument("--config", help="flat key=value config file")
    p.add_argument("--set", action="append", metavar="KEY=VALUE")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_train_nlp)

    p = sub.add_parser("extract", help="extract the per-admission feature matrix CSV")
    p.add_argument("--corpus", required=True)
    p.add_argument("--models", required=True, help="directory from train-nlp")
    p.add_argument("--out", required=True, help="output CSV path")
    p.set_defaults(func=cmd_extract)

    p = sub.add_parser("eval", help="evaluation protocols over a feature CSV")
    p.add_argument("mode", choices=("single", "ablation", "rfe", "consensus"))
    p.add_argument("--features", help="feature CSV from extract")
    p.add_argument("--rfe", nargs=3, metavar="RFE_JSON",
                   help="three RFE reports (consensus mode)")
    p.add_argument("--config", help="flat key=value eval config file")
    p.add_argument("--set", action="append", metavar="KEY=VALUE")
    p.add_argument("--workers", type=int, help="parallel workers (never changes outputs)")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("report", help="render a JSON report as text")
    p.add_argument("--report", required=True)
    p.set_defaults(func=cmd_report)

    p = sub.add_parser("defaults", help="print all config defaults")
    p.set_defaults(func=cmd_defaults)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.command == "eval":
        if args.mode == "consensus" and not args.rfe:
            parser.error("eval consensus requires --rfe with three report paths")
        if args.mode != "consensus" and not args.features:
            parser.error(f"eval {args.mode} requires --features")
        if args.workers is not None and args.workers < 1:
            parser.error("--workers must be >= 1")
    try:
        return args.func(args)
    except FileNotFoundError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_IO
    except OSError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_IO
    except ReadmitError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
