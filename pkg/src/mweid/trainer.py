"""Joint SGD training of tagger and adversarial language discriminator.

One backward pass over the combined loss realizes three plain-SGD
update rules at learning rate alpha:

  * classifier parameters move along the tag-loss gradient only,
  * discriminator parameters along the language-loss gradient only,
  * extractor parameters along (tag-loss gradient minus lam times the
    language-loss gradient), the minus supplied by the reversal layer.

The tag loss is the mean token-level cross-entropy over the whole
batch; the language loss is the mean sentence-level cross-entropy. No
momentum, weight decay, or loss weighting beyond lam is applied;
gradient-norm clipping is available behind a flag. Fixed seeds give
bitwise-reproducible parameters.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field

import numpy as np

from . import autodiff as ad
from .corpus import Corpus, Sentence, encode_tags
from .evaluation import evaluate, predict_corpus
from .model import MweTagger

SCHEDULES = ("constant", "dann_ramp")


class EmptyBatch(ValueError):
    """train_step received no sentences."""


@dataclass
class TrainerConfig:
    alpha: float = 0.1
    lam: float = 1.0
    lambda_schedule: str = "constant"
    epochs: int = 10
    batch_size: int = 1
    seed: int = 0
    shuffle: bool = True
    clip_grad: float | None = None

    def validate(self) -> None:
        if self.alpha <= 0:
            raise ValueError("alpha must be > 0")
        if self.lam < 0:
            raise ValueError("lam must be >= 0")
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.lambda_schedule not in SCHEDULES:
            raise ValueError(
                f"lambda_schedule must be one of {SCHEDULES}, "
                f"got {self.lambda_schedule!r}")
        if self.clip_grad is not None and self.clip_grad <= 0:
            raise ValueError("clip_grad must be > 0 when set")


@dataclass
class EpochRecord:
    epoch: int
    tag_loss: float
    lang_loss: float
    lang_accuracy: float | None
    dev_global_f1: float | None = None
    dev_unseen_f1: float | None = None


@dataclass
class TrainingReport:
    epochs: list[EpochRecord] = field(default_factory=list)
    best_epoch: int | None = None
    best_dev_global_f1: float | None = None
    best_state: dict[str, np.ndarray] | None = None

    def to_jsonl(self) -> str:
        """One epoch per line, for appending-friendly log files."""
        return "".join(json.dumps(asdict(record)) + "\n"
                       for record in self.epochs)

    def summary(self) -> dict:
        summary = {
            "epochs": len(self.epochs),
            "final_tag_loss": self.epochs[-1].tag_loss if self.epochs else None,
            "final_lang_loss": self.epochs[-1].lang_loss if self.epochs else None,
        }
        if self.best_epoch is not None:
            summary["best_epoch"] = self.best_epoch
            summary["best_dev_global_f1"] = self.best_dev_global_f1
        return summary


def lambda_at(schedule: str, progress: float, lam_max: float) -> float:
    """Reversal coefficient at training progress p in [0, 1]."""
    if not 0.0 <= progress <= 1.0:
        raise ValueError(f"progress must lie in [0, 1], got {progress}")
    if schedule == "constant":
        return lam_max
    if schedule == "dann_ramp":
        return lam_max * (2.0 / (1.0 + math.exp(-10.0 * progress)) - 1.0)
    raise ValueError(f"unknown schedule {schedule!r}")


def gold_tag_ids(model: MweTagger, sentence: Sentence) -> np.ndarray:
    tags = encode_tags(sentence)
    try:
        return np.array([model.tag_index[tag] for tag in tags], dtype=np.int64)
    except KeyError as err:
        raise ValueError(
            f"gold tag {err.args[0]!r} not in the model tagset; the model "
            f"must be built on (a superset of) this corpus") from None


def _clip_gradients(params, max_norm: float) -> None:
    total = math.sqrt(sum(float(np.sum(p.grad * p.grad)) for p in params))
    if total > max_norm:
        factor = max_norm / total
        for param in params:
            param.grad = param.grad * factor


def train_step(model: MweTagger, batch: list[Sentence], alpha: float,
               lam: float | None = None,
               clip_grad: float | None = None) -> tuple[float, float, int]:
    """One SGD step on a batch; returns (tag loss, language loss, #correct
    language predictions).

    The two losses are backpropagated together: disjoint paths keep the
    classifier free of language gradient and the discriminator free of
    tag gradient, while the reversal layer hands the extractor the
    negated, lam-scaled discriminator gradient.
    """
    if not batch:
        raise EmptyBatch("train_step needs at least one sentence")
    params = model.parameters()
    ad.zero_grads(params)

    total_tokens = sum(len(s) for s in batch)
    tag_terms = []
    lang_terms = []
    lang_correct = 0
    for sentence in batch:
        tag_logits, lang_logits = model.forward(sentence, lam=lam)
        token_ce = ad.softmax_cross_entropy(tag_logits,
                                            gold_tag_ids(model, sentence))
        tag_terms.append(ad.scale(token_ce, len(sentence) / total_tokens))
        if model.discriminator is not None:
            lang_id = model.discriminator.language_id(sentence.language)
            lang_terms.append(ad.softmax_cross_entropy(lang_logits, [lang_id]))
            if int(lang_logits.data.argmax()) == lang_id:
                lang_correct += 1

    loss_y = tag_terms[0]
    for term in tag_terms[1:]:
        loss_y = ad.add(loss_y, term)
    if lang_terms:
        loss_lg = lang_terms[0]
        for term in lang_terms[1:]:
            loss_lg = ad.add(loss_lg, term)
        loss_lg = ad.scale(loss_lg, 1.0 / len(batch))
        total = ad.add(loss_y, loss_lg)
        lang_loss = float(loss_lg.data)
    else:
        total = loss_y
        lang_loss = 0.0

    ad.backward(total)
    if clip_grad is not None:
        _clip_gradients(params, clip_grad)
    for param in params:
        param.data = param.data - alpha * param.grad
    return float(loss_y.data), lang_loss, lang_correct


def train(model: MweTagger, train_corpus: Corpus,
          dev_corpus: Corpus | None = None,
          config: TrainerConfig | None = None) -> TrainingReport:
    """Run the full training loop; deterministic under a fixed seed.

    When a dev corpus is supplied, each epoch is scored with the
    evaluation module (unseen keys taken from the training corpus) and
    the best-global-F1 parameter snapshot is kept on the report.
    """
    config = config or TrainerConfig()
    config.validate()
    sentences = list(train_corpus)
    if not sentences:
        raise EmptyBatch("training corpus is empty")

    rng = np.random.default_rng(config.seed)
    n_batches = (len(sentences) + config.batch_size - 1) // config.batch_size
    total_steps = config.epochs * n_batches
    corpus_tokens = sum(len(s) for s in sentences)
    report = TrainingReport()
    step = 0
    for epoch in range(1, config.epochs + 1):
        order = rng.permutation(len(sentences)) if config.shuffle \
            else np.arange(len(sentences))
        tag_loss_sum = 0.0
        lang_loss_sum = 0.0
        lang_correct = 0
        for start in range(0, len(sentences), config.batch_size):
            batch = [sentences[i] for i in order[start:start + config.batch_size]]
            progress = step / (total_steps - 1) if total_steps > 1 else 1.0
            lam = lambda_at(config.lambda_schedule, progress, config.lam)
            tag_loss, lang_loss, correct = train_step(
                model, batch, config.alpha, lam=lam, clip_grad=config.clip_grad)
            tag_loss_sum += tag_loss * sum(len(s) for s in batch)
            lang_loss_sum += lang_loss * len(batch)
            lang_correct += correct
            step += 1
        record = EpochRecord(
            epoch=epoch,
            tag_loss=tag_loss_sum / corpus_tokens,
            lang_loss=lang_loss_sum / len(sentences),
            lang_accuracy=(lang_correct / len(sentences)
                           if model.discriminator is not None else None))
        if dev_corpus is not None:
            result = evaluate(dev_corpus, predict_corpus(model, dev_corpus),
                              train_corpus)
            record.dev_global_f1 = result.global_scores.f1
            record.dev_unseen_f1 = result.unseen_scores.f1
            if (report.best_dev_global_f1 is None
                    or record.dev_global_f1 > report.best_dev_global_f1):
                report.best_epoch = epoch
                report.best_dev_global_f1 = record.dev_global_f1
                report.best_state = {name: array.copy() for name, array
                                     in model.state_arrays().items()}
        report.epochs.append(record)
    return report
