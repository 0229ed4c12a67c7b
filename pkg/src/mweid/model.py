"""Windowed feed-forward tagger with optional inhibition and adversary.

Three components share one set of token features:

  * FeatureExtractor: trainable embeddings, a fixed-radius context
    window concatenation, and a relu feed-forward layer.
  * TagClassifier: optional lateral-inhibition gating, then a linear
    head over the IOB2 tag alphabet.
  * LanguageDiscriminator: a gradient-reversal layer over the
    mean-pooled sentence features, then a small relu MLP predicting the
    sentence's language. Reversal makes the extractor *oppose* the
    discriminator, pushing features toward language invariance.

All parameters are float64 and initialized from one seeded generator in
a fixed draw order (extractor, classifier, discriminator last), so
models that differ only in the adversarial flag share identical
extractor/classifier initial weights.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import Parameter, Tensor
from .corpus import Corpus, Sentence, extract_mwes
from .inhibition import LateralInhibitionLayer

PAD_ID = 0
UNK_ID = 1
_RESERVED = ("<pad>", "<unk>")

CHECKPOINT_FORMAT = "mweid-checkpoint"
CHECKPOINT_VERSION = 1


class UnknownLanguage(ValueError):
    """A sentence's language label is not in the discriminator's set."""


class CheckpointError(ValueError):
    """A checkpoint file does not match the expected format/version."""


@dataclass
class ModelConfig:
    embedding_dim: int = 16
    window: int = 1
    hidden_dim: int = 32
    disc_hidden_dim: int = 16
    steepness: float = 10.0
    use_lateral_inhibition: bool = True
    use_adversarial: bool = True
    lam: float = 1.0
    seed: int = 0

    def validate(self) -> None:
        for name in ("embedding_dim", "hidden_dim", "disc_hidden_dim"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1")
        if self.window < 0:
            raise ValueError("window must be >= 0")
        if self.steepness <= 0:
            raise ValueError("steepness must be > 0")
        if self.lam < 0:
            raise ValueError("lam must be >= 0")


def build_vocab(corpus: Corpus) -> dict[str, int]:
    """Token forms in first-occurrence order, after <pad> and <unk>."""
    vocab = {form: index for index, form in enumerate(_RESERVED)}
    for sentence in corpus:
        for token in sentence.tokens:
            if token.form not in vocab:
                vocab[token.form] = len(vocab)
    return vocab


def build_tagset(corpus: Corpus) -> list[str]:
    """Closed IOB2 alphabet: "O" first, then B-/I- per sorted category.

    The position in this list is the tag's logit index; prediction ties
    resolve to the lowest index, so the ordering is part of the model's
    observable behaviour and is stored in checkpoints.
    """
    categories: set[str] = set()
    for sentence in corpus:
        for instance in extract_mwes(sentence):
            categories.add(str(instance.category))
    tagset = ["O"]
    for category in sorted(categories):
        tagset.extend((f"B-{category}", f"I-{category}"))
    return tagset


def build_languages(corpus: Corpus) -> list[str]:
    return sorted({s.language for s in corpus if s.language is not None})


class FeatureExtractor:
    """Embedding table + context window + one relu feed-forward layer."""

    def __init__(self, vocab: dict[str, int], embedding: Parameter,
                 hidden_w: Parameter, hidden_b: Parameter, window: int):
        self.vocab = vocab
        self.embedding = embedding
        self.hidden_w = hidden_w
        self.hidden_b = hidden_b
        self.window = window

    @property
    def output_dim(self) -> int:
        return self.hidden_w.shape[1]

    def parameters(self) -> list[Parameter]:
        return [self.embedding, self.hidden_w, self.hidden_b]

    def token_ids(self, sentence: Sentence) -> np.ndarray:
        return np.array([self.vocab.get(t.form, UNK_ID) for t in sentence.tokens],
                        dtype=np.int64)

    def features(self, sentence: Sentence) -> Tensor:
        """One hidden-width row per token; windows padded at the edges."""
        ids = self.token_ids(sentence)
        w = self.window
        padded = np.concatenate([np.full(w, PAD_ID, dtype=np.int64), ids,
                                 np.full(w, PAD_ID, dtype=np.int64)])
        n = len(ids)
        slices = [ad.embedding_lookup(self.embedding, padded[offset:offset + n])
                  for offset in range(2 * w + 1)]
        window = slices[0] if len(slices) == 1 else ad.concat(slices)
        return ad.relu(ad.add(ad.matmul(window, self.hidden_w), self.hidden_b))


class TagClassifier:
    """Optional lateral-inhibition gate, then a linear head over tags."""

    def __init__(self, inhibition: LateralInhibitionLayer | None,
                 head_w: Parameter, head_b: Parameter):
        self.inhibition = inhibition
        self.head_w = head_w
        self.head_b = head_b

    def parameters(self) -> list[Parameter]:
        params = [] if self.inhibition is None else self.inhibition.parameters()
        return params + [self.head_w, self.head_b]

    def logits(self, features: Tensor) -> Tensor:
        gated = features if self.inhibition is None else self.inhibition.forward(features)
        return ad.add(ad.matmul(gated, self.head_w), self.head_b)


class LanguageDiscriminator:
    """Gradient reversal, one relu layer, and a linear head over languages."""

    def __init__(self, languages: list[str], w1: Parameter, b1: Parameter,
                 w2: Parameter, b2: Parameter, lam: float):
        self.languages = languages
        self.lang_index = {code: i for i, code in enumerate(languages)}
        self.w1, self.b1, self.w2, self.b2 = w1, b1, w2, b2
        self.lam = lam

    def parameters(self) -> list[Parameter]:
        return [self.w1, self.b1, self.w2, self.b2]

    def logits(self, pooled: Tensor, lam: float | None = None) -> Tensor:
        reversed_ = ad.grad_reverse(pooled, self.lam if lam is None else lam)
        hidden = ad.relu(ad.add(ad.matmul(reversed_, self.w1), self.b1))
        return ad.add(ad.matmul(hidden, self.w2), self.b2)

    def language_id(self, code: str | None) -> int:
        if code is None or code not in self.lang_index:
            raise UnknownLanguage(
                f"language {code!r} not in {self.languages}")
        return self.lang_index[code]


class MweTagger:
    """The assembled architecture plus its label/language inventories."""

    def __init__(self, config: ModelConfig, extractor: FeatureExtractor,
                 classifier: TagClassifier,
                 discriminator: LanguageDiscriminator | None,
                 tagset: list[str]):
        self.config = config
        self.extractor = extractor
        self.classifier = classifier
        self.discriminator = discriminator
        self.tagset = tagset
        self.tag_index = {tag: i for i, tag in enumerate(tagset)}

    @classmethod
    def build(cls, config: ModelConfig, corpus: Corpus) -> "MweTagger":
        config.validate()
        vocab = build_vocab(corpus)
        tagset = build_tagset(corpus)
        languages = build_languages(corpus)
        rng = np.random.default_rng(config.seed)

        def uniform(shape, name):
            return Parameter(rng.uniform(-0.1, 0.1, size=shape), name)

        e, h = config.embedding_dim, config.hidden_dim
        window_width = (2 * config.window + 1) * e
        extractor = FeatureExtractor(
            vocab=vocab,
            embedding=uniform((len(vocab), e), "extractor.embedding"),
            hidden_w=uniform((window_width, h), "extractor.hidden_w"),
            hidden_b=uniform((h,), "extractor.hidden_b"),
            window=config.window)
        inhibition = None
        if config.use_lateral_inhibition:
            inhibition = LateralInhibitionLayer.build(h, config.steepness,
                                                      name="classifier.li")
        classifier = TagClassifier(
            inhibition=inhibition,
            head_w=uniform((h, len(tagset)), "classifier.head_w"),
            head_b=uniform((len(tagset),), "classifier.head_b"))
        discriminator = None
        if config.use_adversarial:
            # Drawn last: toggling the adversary leaves all other draws intact.
            discriminator = LanguageDiscriminator(
                languages=languages,
                w1=uniform((h, config.disc_hidden_dim), "discriminator.w1"),
                b1=uniform((config.disc_hidden_dim,), "discriminator.b1"),
                w2=uniform((config.disc_hidden_dim, max(len(languages), 1)),
                           "discriminator.w2"),
                b2=uniform((max(len(languages), 1),), "discriminator.b2"),
                lam=config.lam)
        return cls(config, extractor, classifier, discriminator, tagset)

    def parameters(self) -> list[Parameter]:
        params = self.extractor.parameters() + self.classifier.parameters()
        if self.discriminator is not None:
            params += self.discriminator.parameters()
        return params

    def feature_parameters(self) -> list[Parameter]:
        return self.extractor.parameters()

    def classifier_parameters(self) -> list[Parameter]:
        return self.classifier.parameters()

    def discriminator_parameters(self) -> list[Parameter]:
        return [] if self.discriminator is None else self.discriminator.parameters()

    def forward(self, sentence: Sentence,
                lam: float | None = None) -> tuple[Tensor, Tensor | None]:
        """Tag logits [n, |tagset|] and, if adversarial, language logits.

        The reversal coefficient only shapes gradients; forward values
        are identical for every lam.
        """
        features = self.extractor.features(sentence)
        tag_logits = self.classifier.logits(features)
        lang_logits = None
        if self.discriminator is not None:
            pooled = ad.mean(features, axis=0)
            lang_logits = self.discriminator.logits(pooled, lam)
        return tag_logits, lang_logits

    def predict_tags(self, sentence: Sentence) -> list[str]:
        """Argmax tag per token; ties pick the lowest tag index."""
        tag_logits, _ = self.forward(sentence)
        return [self.tagset[i] for i in tag_logits.data.argmax(axis=1)]

    def predict_language(self, sentence: Sentence) -> str:
        if self.discriminator is None:
            raise UnknownLanguage("model has no language discriminator")
        _, lang_logits = self.forward(sentence)
        return self.discriminator.languages[int(lang_logits.data.argmax())]

    def state_arrays(self) -> dict[str, np.ndarray]:
        return {p.name: p.data for p in self.parameters()}

    def load_state_arrays(self, state: dict[str, np.ndarray]) -> None:
        for param in self.parameters():
            value = state[param.name]
            if value.shape != param.data.shape:
                raise CheckpointError(
                    f"parameter {param.name}: shape {value.shape} does not "
                    f"match model shape {param.data.shape}")
            param.data = value.astype(np.float64).copy()

    def save(self, path) -> None:
        """Write a versioned JSON checkpoint.

        Floats are serialized via repr, which round-trips float64
        exactly: reloading reproduces predictions bitwise.
        """
        payload = {
            "format": CHECKPOINT_FORMAT,
            "version": CHECKPOINT_VERSION,
            "config": asdict(self.config),
            "vocab": list(self.extractor.vocab),
            "tagset": self.tagset,
            "languages": (self.discriminator.languages
                          if self.discriminator is not None else []),
            "parameters": {
                p.name: {"shape": list(p.data.shape),
                         "data": p.data.reshape(-1).tolist()}
                for p in self.parameters()
            },
        }
        with open(path, "w", encoding="utf-8") as handle:
            json.dump(payload, handle)
            handle.write("\n")

    @classmethod
    def load(cls, path) -> "MweTagger":
        with open(path, encoding="utf-8") as handle:
            payload = json.load(handle)
        if payload.get("format") != CHECKPOINT_FORMAT:
            raise CheckpointError(f"{path} is not a {CHECKPOINT_FORMAT} file")
        if payload.get("version") != CHECKPOINT_VERSION:
            raise CheckpointError(
                f"unsupported checkpoint version {payload.get('version')}")
        config = ModelConfig(**payload["config"])
        config.validate()
        vocab = {form: i for i, form in enumerate(payload["vocab"])}
        tagset = payload["tagset"]
        languages = payload["languages"]

        def param(name):
            entry = payload["parameters"][name]
            data = np.array(entry["data"], dtype=np.float64)
            return Parameter(data.reshape(entry["shape"]), name)

        extractor = FeatureExtractor(
            vocab=vocab, embedding=param("extractor.embedding"),
            hidden_w=param("extractor.hidden_w"),
            hidden_b=param("extractor.hidden_b"), window=config.window)
        inhibition = None
        if config.use_lateral_inhibition:
            inhibition = LateralInhibitionLayer(
                param("classifier.li.weight"), param("classifier.li.bias"),
                config.steepness)
        classifier = TagClassifier(inhibition, param("classifier.head_w"),
                                   param("classifier.head_b"))
        discriminator = None
        if config.use_adversarial:
            discriminator = LanguageDiscriminator(
                languages, param("discriminator.w1"), param("discriminator.b1"),
                param("discriminator.w2"), param("discriminator.b2"),
                config.lam)
        return cls(config, extractor, classifier, discriminator, tagset)
