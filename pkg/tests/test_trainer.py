"""Trainer: update routing, reversal arithmetic, loops, determinism."""

import math

import numpy as np
import pytest

from mweid import autodiff as ad
from mweid.corpus import Corpus
from mweid.model import ModelConfig, MweTagger, UnknownLanguage
from mweid.trainer import (EmptyBatch, TrainerConfig, gold_tag_ids, lambda_at,
                           train, train_step)
from conftest import corpus_of, make_sentence


def training_corpus():
    return corpus_of(
        make_sentence(["ana", "fura", "somnul", "azi"], [("VID", [2, 3])],
                      language="RO"),
        make_sentence(["el", "se", "gândi", "des"], [("IRV", [2, 3])],
                      language="RO"),
        make_sentence(["le", "chat", "fait", "faim"], [("LVC.full", [3, 4])],
                      language="FR"),
        make_sentence(["je", "me", "souviens", "bien"], [("IRV", [2, 3])],
                      language="FR"),
        make_sentence(["ils", "prennent", "la", "porte"], [("VID", [2, 3, 4])],
                      language="FR"))


def build(corpus, **overrides):
    defaults = dict(embedding_dim=4, window=1, hidden_dim=6, disc_hidden_dim=4,
                    use_lateral_inhibition=True, use_adversarial=True,
                    lam=1.0, seed=2)
    defaults.update(overrides)
    return MweTagger.build(ModelConfig(**defaults), corpus)


class TestLambdaSchedule:
    def test_constant(self):
        for p in (0.0, 0.3, 1.0):
            assert lambda_at("constant", p, 1.7) == 1.7

    def test_ramp_starts_at_zero(self):
        assert lambda_at("dann_ramp", 0.0, 2.0) == 0.0

    def test_ramp_endpoint(self):
        expected = 2.0 * (2.0 / (1.0 + math.exp(-10.0)) - 1.0)
        assert lambda_at("dann_ramp", 1.0, 2.0) == pytest.approx(
            expected, rel=1e-15)
        assert expected == pytest.approx(2.0 * 0.9999, rel=1e-4)

    def test_progress_bounds(self):
        with pytest.raises(ValueError):
            lambda_at("constant", 1.5, 1.0)


class TestTrainStep:
    def test_empty_batch(self):
        model = build(training_corpus())
        with pytest.raises(EmptyBatch):
            train_step(model, [], 0.1)

    def test_unknown_language(self):
        corpus = training_corpus()
        model = build(corpus)
        alien = make_sentence(["was", "ist"], language="DE")
        with pytest.raises(UnknownLanguage):
            train_step(model, [alien], 0.1)

    def test_losses_are_finite_and_positive(self):
        corpus = training_corpus()
        model = build(corpus)
        tag_loss, lang_loss, _ = train_step(model, list(corpus), 0.1)
        assert 0 < tag_loss < 20 and 0 < lang_loss < 20

    def test_lambda_zero_matches_baseline_bitwise(self):
        corpus = training_corpus()
        adversarial = build(corpus, lam=0.0)
        baseline = build(corpus, use_adversarial=False)
        for _ in range(3):
            train_step(adversarial, list(corpus), 0.2, lam=0.0)
            train_step(baseline, list(corpus), 0.2)
        names = {p.name for p in baseline.parameters()}
        adv = {p.name: p.data for p in adversarial.parameters()}
        for p in baseline.parameters():
            assert np.array_equal(p.data, adv[p.name]), p.name
        # while the discriminator still moved on its own loss
        fresh = build(corpus, lam=0.0)
        moved = [not np.array_equal(p.data, q.data)
                 for p, q in zip(adversarial.discriminator.parameters(),
                                 fresh.discriminator.parameters())]
        assert any(moved)
        assert names == {p.name for p in baseline.parameters()}

    def test_gradient_routing_disjoint(self):
        corpus = training_corpus()
        model = build(corpus)
        s = corpus.sentences[0]
        params = model.parameters()

        ad.zero_grads(params)
        tag_logits, lang_logits = model.forward(s, lam=1.0)
        ad.backward(ad.softmax_cross_entropy(tag_logits,
                                             gold_tag_ids(model, s)))
        for p in model.discriminator_parameters():
            assert np.array_equal(p.grad, np.zeros_like(p.grad)), p.name

        ad.zero_grads(params)
        tag_logits, lang_logits = model.forward(s, lam=1.0)
        lang_id = model.discriminator.language_id(s.language)
        ad.backward(ad.softmax_cross_entropy(lang_logits, [lang_id]))
        for p in model.classifier_parameters():
            assert np.array_equal(p.grad, np.zeros_like(p.grad)), p.name

    @pytest.mark.parametrize("lam", [0.0, 0.5, 1.0, 2.0])
    def test_reversal_scales_feature_gradient_exactly(self, lam):
        # Power-of-two coefficients commute exactly through the linear
        # backward operations, so equality is bitwise, tolerance zero.
        corpus = training_corpus()
        model = build(corpus)
        s = corpus.sentences[2]
        disc = model.discriminator
        lang_id = disc.language_id(s.language)
        feature_params = model.feature_parameters()

        def discriminator_loss(pooled):
            hidden = ad.relu(ad.add(ad.matmul(pooled, disc.w1), disc.b1))
            logits = ad.add(ad.matmul(hidden, disc.w2), disc.b2)
            return ad.softmax_cross_entropy(logits, [lang_id])

        ad.zero_grads(feature_params)
        pooled = ad.mean(model.extractor.features(s), axis=0)
        ad.backward(discriminator_loss(pooled))
        unreversed = {p.name: p.grad.copy() for p in feature_params}

        ad.zero_grads(feature_params)
        pooled = ad.mean(model.extractor.features(s), axis=0)
        ad.backward(discriminator_loss(ad.grad_reverse(pooled, lam)))
        for p in feature_params:
            assert np.array_equal(p.grad, -lam * unreversed[p.name]), p.name

    def test_loss_decreases_over_steps(self):
        corpus = training_corpus()
        model = build(corpus)
        losses = [train_step(model, list(corpus), 0.3)[0] for _ in range(100)]
        assert np.mean(losses[-10:]) < np.mean(losses[:10])

    def test_clipping_caps_global_norm(self):
        corpus = training_corpus()
        model = build(corpus)
        before = {p.name: p.data.copy() for p in model.parameters()}
        train_step(model, list(corpus), alpha=1.0, lam=1.0, clip_grad=1e-6)
        total_move = sum(np.sum((p.data - before[p.name]) ** 2)
                         for p in model.parameters())
        assert math.sqrt(total_move) <= 1.0 * 1e-6 * 1.0001


class TestTrainLoop:
    def test_same_seed_identical_runs(self):
        corpus = training_corpus()
        cfg = TrainerConfig(alpha=0.2, lam=1.0, epochs=5, batch_size=2, seed=3)
        model_a = build(corpus)
        report_a = train(model_a, corpus, None, cfg)
        model_b = build(corpus)
        report_b = train(model_b, corpus, None, cfg)
        assert report_a.to_jsonl() == report_b.to_jsonl()
        for p, q in zip(model_a.parameters(), model_b.parameters()):
            assert np.array_equal(p.data, q.data), p.name

    def test_zero_epochs_rejected(self):
        with pytest.raises(ValueError):
            TrainerConfig(epochs=0).validate()

    def test_bad_schedule_rejected(self):
        with pytest.raises(ValueError):
            TrainerConfig(lambda_schedule="linear").validate()

    def test_empty_corpus_rejected(self):
        model = build(training_corpus())
        with pytest.raises(EmptyBatch):
            train(model, Corpus(sentences=()), None, TrainerConfig(epochs=1))

    def test_report_one_record_per_epoch(self):
        corpus = training_corpus()
        model = build(corpus)
        report = train(model, corpus, None,
                       TrainerConfig(alpha=0.2, epochs=7, batch_size=2, seed=0))
        assert [r.epoch for r in report.epochs] == list(range(1, 8))
        assert all(math.isfinite(r.tag_loss) and math.isfinite(r.lang_loss)
                   for r in report.epochs)

    def test_dev_tracking_keeps_best_state(self):
        corpus = training_corpus()
        model = build(corpus)
        report = train(model, corpus, corpus,
                       TrainerConfig(alpha=0.3, epochs=6, batch_size=2, seed=1))
        assert report.best_epoch is not None
        assert report.best_state is not None
        assert report.best_dev_global_f1 == max(
            r.dev_global_f1 for r in report.epochs)

    def test_shuffle_off_is_sequential_and_deterministic(self):
        corpus = training_corpus()
        cfg = TrainerConfig(alpha=0.2, epochs=3, batch_size=2, seed=5,
                            shuffle=False)
        model_a = build(corpus)
        train(model_a, corpus, None, cfg)
        model_b = build(corpus)
        train(model_b, corpus, None, cfg)
        for p, q in zip(model_a.parameters(), model_b.parameters()):
            assert np.array_equal(p.data, q.data)
