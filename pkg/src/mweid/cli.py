"""Batch command-line interface: train, tag, eval, gradcheck, stats.

Every run is non-interactive and deterministic; cmd_train echoes its
fully resolved configuration into the output directory so the run can
be reproduced byte-for-byte. Exit codes are part of the contract:

    0  success
    2  configuration/usage error (bad flags, missing files, bad checkpoint)
    3  corpus parse error
    4  training error
    5  gold/predicted alignment or tokenization mismatch
    6  gradient check above threshold
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import autodiff as ad
from . import corpus as corpus_mod
from . import inhibition
from .corpus import CuptError, merge_corpora, parse_cupt_file, serialize_corpus
from .evaluation import (AlignmentMismatch, TokenizationMismatch, evaluate,
                         format_table, predict_corpus)
from .model import CheckpointError, ModelConfig, MweTagger
from .trainer import TrainerConfig, train

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_PARSE = 3
EXIT_TRAIN = 4
EXIT_ALIGNMENT = 5
EXIT_GRADCHECK = 6

GRADCHECK_THRESHOLD = 1e-5


class CliError(Exception):
    def __init__(self, message: str, exit_code: int):
        super().__init__(message)
        self.exit_code = exit_code


def _parse_lang_spec(spec: str) -> tuple[str | None, str]:
    """Split "LANG=path.cupt" into (language, path); bare paths get None."""
    code, sep, path = spec.partition("=")
    if sep and code.isalnum() and len(code) <= 8:
        return code, path
    return None, spec


def _load_part(spec: str):
    language, path = _parse_lang_spec(spec)
    if not Path(path).is_file():
        raise CliError(f"no such file: {path}", EXIT_CONFIG)
    try:
        return parse_cupt_file(path, language=language), language
    except CuptError as err:
        raise CliError(f"parse error: {err}", EXIT_PARSE) from err


def _load_merged(specs: list[str]):
    parts = []
    for spec in specs:
        corpus, language = _load_part(spec)
        if language is None:
            raise CliError(
                f"training/eval inputs need a language code: LANG={spec}",
                EXIT_CONFIG)
        parts.append((corpus, language))
    try:
        return merge_corpora(parts)
    except CuptError as err:
        raise CliError(str(err), EXIT_PARSE) from err


def _set_by_path(config: dict, dotted: str, raw: str) -> None:
    try:
        value = json.loads(raw)
    except json.JSONDecodeError:
        value = raw
    keys = dotted.split(".")
    target = config
    for key in keys[:-1]:
        target = target.setdefault(key, {})
        if not isinstance(target, dict):
            raise CliError(f"--set {dotted}: {key} is not a section",
                           EXIT_CONFIG)
    target[keys[-1]] = value


def _resolve_train_config(args) -> dict:
    config: dict = {"model": {}, "trainer": {}, "train": [], "dev": []}
    if args.config:
        path = Path(args.config)
        if not path.is_file():
            raise CliError(f"no such config file: {path}", EXIT_CONFIG)
        try:
            loaded = json.loads(path.read_text(encoding="utf-8"))
        except json.JSONDecodeError as err:
            raise CliError(f"bad config file: {err}", EXIT_CONFIG) from err
        for key, value in loaded.items():
            config[key] = value
    for spec in args.train or []:
        config["train"].append(spec)
    for spec in args.dev or []:
        config["dev"].append(spec)
    if args.out:
        config["out_dir"] = args.out
    if args.epochs is not None:
        config["trainer"]["epochs"] = args.epochs
    if args.seed is not None:
        config["model"]["seed"] = args.seed
        config["trainer"]["seed"] = args.seed
    if args.use_li is not None:
        config["model"]["use_lateral_inhibition"] = args.use_li == "true"
    if args.use_adv is not None:
        config["model"]["use_adversarial"] = args.use_adv == "true"
    for override in args.set or []:
        dotted, sep, raw = override.partition("=")
        if not sep:
            raise CliError(f"--set needs key=value, got {override!r}",
                           EXIT_CONFIG)
        _set_by_path(config, dotted, raw)
    if not config["train"]:
        raise CliError("no training files given (config 'train' or --train)",
                       EXIT_CONFIG)
    if not config.get("out_dir"):
        raise CliError("no output directory given (config 'out_dir' or --out)",
                       EXIT_CONFIG)
    return config


def cmd_train(args) -> int:
    config = _resolve_train_config(args)
    out_dir = Path(config["out_dir"])
    if out_dir.exists() and any(out_dir.iterdir()) and not args.force:
        raise CliError(
            f"output directory {out_dir} is not empty (use --force)",
            EXIT_CONFIG)
    out_dir.mkdir(parents=True, exist_ok=True)

    train_corpus = _load_merged(config["train"])
    dev_corpus = _load_merged(config["dev"]) if config["dev"] else None
    try:
        model_config = ModelConfig(**config["model"])
        trainer_config = TrainerConfig(**config["trainer"])
        model_config.validate()
        trainer_config.validate()
    except (TypeError, ValueError) as err:
        raise CliError(f"bad configuration: {err}", EXIT_CONFIG) from err

    (out_dir / "config.json").write_text(
        json.dumps(config, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    try:
        model = MweTagger.build(model_config, train_corpus)
        report = train(model, train_corpus, dev_corpus, trainer_config)
    except CuptError as err:
        raise CliError(f"corpus error during training: {err}", EXIT_PARSE) from err
    except Exception as err:
        raise CliError(f"training failed: {err}", EXIT_TRAIN) from err

    model.save(out_dir / "checkpoint.json")
    if report.best_state is not None:
        final_state = model.state_arrays()
        model.load_state_arrays(report.best_state)
        model.save(out_dir / "checkpoint_best.json")
        model.load_state_arrays(final_state)
    (out_dir / "report.jsonl").write_text(report.to_jsonl(), encoding="utf-8")
    (out_dir / "summary.json").write_text(
        json.dumps(report.summary(), indent=2, sort_keys=True) + "\n",
        encoding="utf-8")
    last = report.epochs[-1]
    print(f"trained {trainer_config.epochs} epochs; "
          f"final tag loss {last.tag_loss:.6f}; outputs in {out_dir}")
    return EXIT_OK


def cmd_tag(args) -> int:
    if not Path(args.checkpoint).is_file():
        raise CliError(f"no such checkpoint: {args.checkpoint}", EXIT_CONFIG)
    try:
        model = MweTagger.load(args.checkpoint)
    except (CheckpointError, json.JSONDecodeError, KeyError) as err:
        raise CliError(f"bad checkpoint: {err}", EXIT_CONFIG) from err
    corpus, _ = _load_part(args.input)
    predicted = predict_corpus(model, corpus)
    output = Path(args.output)
    if output.exists() and not args.force:
        raise CliError(f"output file {output} exists (use --force)",
                       EXIT_CONFIG)
    output.write_text(serialize_corpus(predicted), encoding="utf-8")
    print(f"tagged {len(predicted)} sentences -> {output}")
    return EXIT_OK


def cmd_eval(args) -> int:
    gold, _ = _load_part(args.gold)
    pred, _ = _load_part(args.pred)
    train_parts = []
    for spec in args.train:
        corpus, _ = _load_part(spec)
        train_parts.append(corpus)
    train_corpus = corpus_mod.Corpus(
        sentences=tuple(s for part in train_parts for s in part))
    try:
        result = evaluate(gold, pred, train_corpus,
                          category_sensitive=args.category_sensitive)
    except (AlignmentMismatch, TokenizationMismatch) as err:
        raise CliError(f"alignment error: {err}", EXIT_ALIGNMENT) from err
    print(format_table(result, label=args.label))
    if args.report:
        Path(args.report).write_text(
            json.dumps(result.as_dict(), indent=2, sort_keys=True) + "\n",
            encoding="utf-8")
    return EXIT_OK


def _gradcheck_cases(corrupt_adjoint: bool):
    """Small fixed networks, one per checked operation.

    Every case is a deterministic scalar function of its parameters.
    The hard-step case is a negative control: a true Heaviside has an
    almost-everywhere-zero derivative, so its surrogate gradient *must*
    disagree with finite differences of the hard forward pass.
    """
    rng = np.random.default_rng(12345)

    def p(shape, name):
        return ad.Parameter(rng.uniform(-0.8, 0.8, size=shape), name)

    cases = []

    a, b = p((3, 4), "a"), p((4, 2), "b")
    cases.append(("matmul", [a, b], lambda: ad.sum_all(ad.matmul(a, b))))

    s = p((3, 3), "s")
    cases.append(("sigmoid", [s], lambda: ad.sum_all(ad.sigmoid(s))))

    r, r2 = p((3, 3), "r"), p((3, 3), "r2")
    cases.append(("relu", [r, r2],
                  lambda: ad.sum_all(ad.mul(ad.relu(r), ad.sigmoid(r2)))))

    table = p((5, 3), "table")
    ids = np.array([0, 2, 4, 2])
    cases.append(("embedding", [table],
                  lambda: ad.sum_all(ad.sigmoid(ad.embedding_lookup(table, ids)))))

    logits_w = p((3, 4), "logits_w")
    x_fixed = ad.tensor(rng.uniform(-1, 1, size=(2, 3)))
    labels = np.array([1, 3])
    cases.append(("cross_entropy", [logits_w],
                  lambda: ad.softmax_cross_entropy(ad.matmul(x_fixed, logits_w),
                                                   labels)))

    m = p((4, 4), "m")
    cases.append(("zero_diag", [m],
                  lambda: ad.sum_all(ad.sigmoid(inhibition.zero_diag(m)))))

    layer = inhibition.LateralInhibitionLayer(
        ad.Parameter(rng.uniform(-0.5, 0.5, size=(3, 3)), "li.weight"),
        ad.Parameter(rng.uniform(-0.5, 0.5, size=3), "li.bias"),
        steepness=4.0)
    x_li = ad.tensor(rng.uniform(-1, 1, size=(4, 3)))
    cases.append(("lateral_inhibition_relaxed", layer.parameters(),
                  lambda: ad.sum_all(layer.forward_relaxed(x_li))))

    if corrupt_adjoint:
        # Test hook: a deliberately wrong backward rule that the finite
        # differences must flag.
        c = p((3, 3), "c")

        def corrupted():
            node = ad.sigmoid(c)
            broken = ad.Tensor(node.data,
                               vjps=((node, lambda g: g * 1.01),),
                               op="corrupted-identity")
            return ad.sum_all(broken)

        cases.append(("corrupted_adjoint", [c], corrupted))
    return cases, layer, x_li


def cmd_gradcheck(args) -> int:
    cases, layer, x_li = _gradcheck_cases(args.inject_error)
    h = args.step
    failed = []
    for name, params, f in cases:
        error = ad.finite_difference_check(f, params, h=h)
        status = "ok" if error < GRADCHECK_THRESHOLD else "FAIL"
        if error >= GRADCHECK_THRESHOLD:
            failed.append(name)
        print(f"{name:<28} max relative error {error:.3e}  {status}")

    # Negative control, reported but never counted: finite differences of
    # the hard-gated layer cannot reproduce the surrogate gradient.
    control_error = ad.finite_difference_check(
        lambda: ad.sum_all(layer.forward(x_li)), layer.parameters(), h=h)
    control_status = ("expected-fail (ok)" if control_error >= GRADCHECK_THRESHOLD
                      else "UNEXPECTED-PASS")
    print(f"{'hard_heaviside_control':<28} max relative error "
          f"{control_error:.3e}  {control_status}")
    if control_error < GRADCHECK_THRESHOLD:
        failed.append("hard_heaviside_control(unexpected pass)")

    if failed:
        print(f"gradient check FAILED: {', '.join(failed)}")
        return EXIT_GRADCHECK
    print(f"gradient check passed ({len(cases)} operations, "
          f"threshold {GRADCHECK_THRESHOLD:g})")
    return EXIT_OK


def cmd_stats(args) -> int:
    parts = []
    for spec in args.corpora:
        corpus, language = _load_part(spec)
        parts.append((corpus, language or "?"))
    merged = merge_corpora(parts)
    stats = corpus_mod.corpus_stats(merged)
    print(f"{'language':<10}{'sentences':>10}{'tokens':>10}{'mwes':>8}  "
          f"per-category")
    rows = [("all", stats)] + sorted(stats.by_language.items())
    for label, bucket in rows:
        categories = " ".join(f"{cat}={count}" for cat, count
                              in sorted(bucket.by_category.items()))
        print(f"{label:<10}{bucket.n_sentences:>10}{bucket.n_tokens:>10}"
              f"{bucket.n_mwes:>8}  {categories}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="mweid",
        description="Multilingual verbal MWE identification toolkit")
    sub = parser.add_subparsers(dest="command", required=True)

    p_train = sub.add_parser("train", help="train a tagger on .cupt corpora")
    p_train.add_argument("--config", help="JSON run configuration")
    p_train.add_argument("--train", action="append", metavar="LANG=PATH",
                         help="training corpus (repeatable)")
    p_train.add_argument("--dev", action="append", metavar="LANG=PATH",
                         help="development corpus (repeatable)")
    p_train.add_argument("--out", help="output directory")
    p_train.add_argument("--epochs", type=int)
    p_train.add_argument("--seed", type=int,
                         help="sets both model and trainer seeds")
    p_train.add_argument("--use-li", choices=("true", "false"), default=None,
                         help="enable/disable the lateral-inhibition layer")
    p_train.add_argument("--use-adv", choices=("true", "false"), default=None,
                         help="enable/disable adversarial language training")
    p_train.add_argument("--set", action="append", metavar="KEY=VALUE",
                         help="override any config entry, e.g. trainer.alpha=0.2")
    p_train.add_argument("--force", action="store_true",
                         help="allow writing into a non-empty output directory")
    p_train.set_defaults(func=cmd_train)

    p_tag = sub.add_parser("tag", help="tag a .cupt file with a trained model")
    p_tag.add_argument("checkpoint")
    p_tag.add_argument("input", help="input .cupt file ([LANG=]PATH)")
    p_tag.add_argument("output", help="output .cupt file")
    p_tag.add_argument("--force", action="store_true")
    p_tag.set_defaults(func=cmd_tag)

    p_eval = sub.add_parser("eval", help="score predictions against gold")
    p_eval.add_argument("gold")
    p_eval.add_argument("pred")
    p_eval.add_argument("--train", action="append", required=True,
                        metavar="[LANG=]PATH",
                        help="training corpora defining the seen MWE keys")
    p_eval.add_argument("--category-sensitive", action="store_true",
                        help="require matching categories, not just token sets")
    p_eval.add_argument("--report", help="write a JSON report here")
    p_eval.add_argument("--label", default="model",
                        help="row label in the printed table")
    p_eval.set_defaults(func=cmd_eval)

    p_grad = sub.add_parser("gradcheck",
                            help="finite-difference check of all gradients")
    p_grad.add_argument("--step", type=float, default=1e-5,
                        help="central-difference step size")
    p_grad.add_argument("--inject-error", action="store_true",
                        help=argparse.SUPPRESS)
    p_grad.set_defaults(func=cmd_gradcheck)

    p_stats = sub.add_parser("stats", help="corpus statistics")
    p_stats.add_argument("corpora", nargs="+", metavar="[LANG=]PATH")
    p_stats.set_defaults(func=cmd_stats)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except CliError as err:
        print(f"error: {err}", file=sys.stderr)
        return err.exit_code
    except CuptError as err:
        print(f"parse error: {err}", file=sys.stderr)
        return EXIT_PARSE


if __name__ == "__main__":
    sys.exit(main())
