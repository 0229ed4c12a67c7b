"""MWE-based scoring: exact-match precision/recall/F1, global and unseen.

A predicted MWE counts as correct only when some gold MWE covers the
identical token-index set (no partial credit); category agreement is
optional and off by default. The unseen scores restrict both sides to
instances whose lemma key never occurs as an annotated MWE in the
training corpus. All arithmetic is kept at full precision; percentages
are rounded half-up to two decimals only for display.
"""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass
from decimal import ROUND_HALF_UP, Decimal

from .corpus import (Corpus, MweInstance, Sentence, decode_tags, extract_mwes,
                     seen_lemma_keys, with_instances)


class TokenizationMismatch(ValueError):
    """Gold and predicted sentences disagree on the token sequence."""


class AlignmentMismatch(ValueError):
    """Gold and predicted corpora are not sentence-aligned."""


@dataclass
class Scores:
    """Precision/recall/F1 as percentages, plus the raw counts."""

    gold: int
    predicted: int
    matched: int

    @property
    def precision(self) -> float:
        return 100.0 * self.matched / self.predicted if self.predicted else 0.0

    @property
    def recall(self) -> float:
        return 100.0 * self.matched / self.gold if self.gold else 0.0

    @property
    def f1(self) -> float:
        return f1_score(self.precision, self.recall)


@dataclass
class EvalResult:
    global_scores: Scores
    unseen_scores: Scores
    category_sensitive: bool = False

    def as_dict(self) -> dict:
        def block(scores: Scores) -> dict:
            return {
                "gold": scores.gold,
                "predicted": scores.predicted,
                "matched": scores.matched,
                "precision": round2(scores.precision),
                "recall": round2(scores.recall),
                "f1": round2(scores.f1),
            }

        return {
            "category_sensitive": self.category_sensitive,
            "global": block(self.global_scores),
            "unseen": block(self.unseen_scores),
        }


def f1_score(precision: float, recall: float) -> float:
    """Harmonic mean of two percentages; 0 when both are 0."""
    total = precision + recall
    return 2.0 * precision * recall / total if total > 0 else 0.0


def round2(value: float) -> float:
    """Round half-up to 2 decimals (display convention)."""
    return float(Decimal(repr(value)).quantize(Decimal("0.01"),
                                               rounding=ROUND_HALF_UP))


def _match_key(instance: MweInstance, category_sensitive: bool):
    if category_sensitive:
        return (instance.token_indices, str(instance.category))
    return instance.token_indices


def _check_tokenization(gold: Sentence, pred: Sentence) -> None:
    if gold.forms() != pred.forms():
        raise TokenizationMismatch(
            f"sentence {gold.sent_id!r}: gold and predicted token sequences "
            f"differ")


def match_mwes(gold: Sentence, pred: Sentence,
               category_sensitive: bool = False) -> list[tuple[MweInstance, MweInstance]]:
    """Pair up predicted instances with exact-token-set gold instances.

    Each gold instance absorbs at most one prediction (and vice versa);
    duplicates beyond the gold multiplicity stay unmatched.
    """
    _check_tokenization(gold, pred)
    gold_instances = extract_mwes(gold)
    pred_instances = extract_mwes(pred)
    available: dict = {}
    for instance in gold_instances:
        available.setdefault(_match_key(instance, category_sensitive),
                             []).append(instance)
    pairs = []
    for instance in pred_instances:
        bucket = available.get(_match_key(instance, category_sensitive))
        if bucket:
            pairs.append((bucket.pop(0), instance))
    return pairs


def evaluate(gold: Corpus, pred: Corpus, train: Corpus,
             category_sensitive: bool = False) -> EvalResult:
    """Score a predicted corpus against gold, globally and on unseen MWEs.

    ``train`` supplies the seen lemma keys; a gold or predicted instance
    is counted on the unseen side exactly when its lemma key is absent
    from that set.
    """
    if len(gold) != len(pred):
        raise AlignmentMismatch(
            f"gold has {len(gold)} sentences, predictions have {len(pred)}")
    seen = seen_lemma_keys(train)
    counts = Counter()
    for gold_sentence, pred_sentence in zip(gold, pred):
        gold_instances = extract_mwes(gold_sentence)
        pred_instances = extract_mwes(pred_sentence)
        pairs = match_mwes(gold_sentence, pred_sentence, category_sensitive)
        counts["gold"] += len(gold_instances)
        counts["predicted"] += len(pred_instances)
        counts["matched"] += len(pairs)
        counts["gold_unseen"] += sum(1 for i in gold_instances
                                     if i.lemma_key not in seen)
        counts["predicted_unseen"] += sum(1 for i in pred_instances
                                          if i.lemma_key not in seen)
        counts["matched_unseen"] += sum(1 for g, _ in pairs
                                        if g.lemma_key not in seen)
    return EvalResult(
        global_scores=Scores(counts["gold"], counts["predicted"],
                             counts["matched"]),
        unseen_scores=Scores(counts["gold_unseen"], counts["predicted_unseen"],
                             counts["matched_unseen"]),
        category_sensitive=category_sensitive)


def predict_corpus(model, corpus: Corpus) -> Corpus:
    """Tag every sentence and rewrite its MWE column from the decoder."""
    sentences = []
    for sentence in corpus:
        tags = model.predict_tags(sentence)
        instances = decode_tags(tags, lemmas=sentence.lemmas())
        sentences.append(with_instances(sentence, instances))
    return Corpus(sentences=tuple(sentences), source_files=corpus.source_files)


def format_table(result: EvalResult, label: str = "model") -> str:
    """Render one result as a two-block P/R/F1 table."""
    header1 = f"{'':<24}{'Global MWE':^23} {'Unseen MWE':^23}"
    header2 = (f"{'Model':<24}{'P':>7}{'R':>8}{'F1':>8} "
               f"{'P':>7}{'R':>8}{'F1':>8}")
    g, u = result.global_scores, result.unseen_scores
    row = (f"{label:<24}{round2(g.precision):>7.2f}{round2(g.recall):>8.2f}"
           f"{round2(g.f1):>8.2f} {round2(u.precision):>7.2f}"
           f"{round2(u.recall):>8.2f}{round2(u.f1):>8.2f}")
    return "\n".join((header1, header2, row))
