"""CUPT (CoNLL-U Plus) corpus handling for verbal MWE identification.

Reads and writes the 11-column .cupt format used by the PARSEME shared
tasks (columns ID FORM LEMMA UPOS XPOS FEATS HEAD DEPREL DEPS MISC
PARSEME:MWE), converts span-style MWE annotations to per-token IOB2 tag
sequences and back, merges per-language corpora, and computes the
lemma-multiset keys used to decide whether a test MWE was seen in
training.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field, replace

CUPT_COLUMNS = ("ID", "FORM", "LEMMA", "UPOS", "XPOS", "FEATS",
                "HEAD", "DEPREL", "DEPS", "MISC", "PARSEME:MWE")
N_COLUMNS = len(CUPT_COLUMNS)

# Verbal MWE categories annotated for Romanian; other languages add
# further codes (VPC.full, IAV, MVC, ...) which are carried verbatim.
ROMANIAN_CATEGORIES = frozenset({"VID", "LVC.full", "LVC.cause", "IRV"})
KNOWN_CATEGORIES = ROMANIAN_CATEGORIES | frozenset({
    "VPC.full", "VPC.semi", "IAV", "MVC", "LS.ICV",
})


class CuptError(ValueError):
    """Base class for corpus format errors."""


class MalformedLine(CuptError):
    """A token line does not have the expected number of columns."""


class BadMweColumn(CuptError):
    """The PARSEME:MWE field cannot be interpreted."""


class DanglingMweId(CuptError):
    """An MWE id is referenced but no member token carries its category."""


class NonContiguousIds(CuptError):
    """Token ids or MWE ids within a sentence are not 1..n."""


class DuplicateLanguageCode(CuptError):
    """A sentence would be re-stamped with a conflicting language code."""


class OverlapUnrepresentable(UserWarning):
    """A token belongs to more than one MWE; flat tags keep only one."""


@dataclass(frozen=True)
class VmweCategory:
    """A verbal MWE category code such as VID or LVC.full.

    Unknown codes are preserved verbatim so corpora from any language
    round-trip unchanged.
    """

    code: str

    def __post_init__(self):
        if not self.code or ":" in self.code or ";" in self.code:
            raise BadMweColumn(f"invalid MWE category code: {self.code!r}")

    @property
    def is_known(self) -> bool:
        return self.code in KNOWN_CATEGORIES

    def __str__(self) -> str:
        return self.code


@dataclass(frozen=True)
class Token:
    """One syntactic word of a sentence (integer-id CoNLL-U row).

    ``misc_columns`` preserves the XPOS..MISC columns verbatim;
    ``mwe_raw`` preserves the PARSEME:MWE field exactly as read so that
    serialization is byte-faithful even for unannotated ("_") input.
    """

    id: int
    form: str
    lemma: str
    upos: str
    misc_columns: tuple[str, ...]
    mwe_tags: tuple[tuple[int, VmweCategory | None], ...]
    mwe_raw: str = "*"

    def memberships(self) -> tuple[tuple[int, VmweCategory | None], ...]:
        return self.mwe_tags


@dataclass(frozen=True)
class MweInstance:
    """One annotated MWE: its id, category, member tokens and lemma key.

    ``lemma_key`` is the sorted tuple of case-folded member lemmas: a
    canonical multiset, invariant under member order and letter case.
    """

    mwe_id: int
    category: VmweCategory
    token_indices: tuple[int, ...]
    lemma_key: tuple[str, ...]

    def __post_init__(self):
        if not self.token_indices:
            raise CuptError(f"MWE {self.mwe_id} has no member tokens")
        if list(self.token_indices) != sorted(set(self.token_indices)):
            raise CuptError(
                f"MWE {self.mwe_id} token indices must be strictly increasing: "
                f"{self.token_indices}")


@dataclass(frozen=True)
class Sentence:
    """A parsed sentence: tokens plus everything needed to re-serialize it.

    ``comments`` are the verbatim '#' lines preceding the token block.
    ``extra_rows`` holds multiword-token ranges (ids like "3-4") and
    empty nodes (ids like "5.1") as (position, raw line) pairs, where
    position counts how many real tokens precede the row; these rows
    carry no MWE annotation and are excluded from tagging.
    """

    tokens: tuple[Token, ...]
    sent_id: str = ""
    text: str = ""
    language: str | None = None
    comments: tuple[str, ...] = ()
    extra_rows: tuple[tuple[int, str], ...] = ()

    def __post_init__(self):
        if not self.tokens:
            raise CuptError("sentence has no tokens")

    def __len__(self) -> int:
        return len(self.tokens)

    def forms(self) -> list[str]:
        return [t.form for t in self.tokens]

    def lemmas(self) -> list[str]:
        return [t.lemma for t in self.tokens]


@dataclass(frozen=True)
class Corpus:
    """An ordered collection of sentences with file provenance."""

    sentences: tuple[Sentence, ...]
    source_files: tuple[str, ...] = ()

    def __len__(self) -> int:
        return len(self.sentences)

    def __iter__(self):
        return iter(self.sentences)


@dataclass
class CorpusStats:
    """Token/sentence/MWE counts, overall and per language."""

    n_sentences: int = 0
    n_tokens: int = 0
    n_mwes: int = 0
    by_category: dict[str, int] = field(default_factory=dict)
    by_language: dict[str, "CorpusStats"] = field(default_factory=dict)


def _parse_mwe_field(raw: str, location: str) -> tuple[tuple[int, VmweCategory | None], ...]:
    """Parse a PARSEME:MWE column value into (id, category) memberships.

    "*" and "_" mean no membership; "3" is a bare continuation of MWE 3;
    "1:VID" marks the category-bearing first component of MWE 1;
    semicolons separate multiple memberships.
    """
    raw = raw.strip()
    if raw in ("*", "_", ""):
        return ()
    memberships = []
    seen: set[tuple[int, str | None]] = set()
    for part in raw.split(";"):
        part = part.strip()
        if not part:
            raise BadMweColumn(f"{location}: empty item in MWE field {raw!r}")
        head, sep, cat = part.partition(":")
        try:
            mwe_id = int(head)
        except ValueError:
            raise BadMweColumn(
                f"{location}: MWE id {head!r} is not an integer") from None
        if mwe_id < 1:
            raise BadMweColumn(f"{location}: MWE id must be positive, got {mwe_id}")
        category = VmweCategory(cat) if sep else None
        key = (mwe_id, str(category) if category else None)
        if key in seen:
            raise BadMweColumn(f"{location}: duplicate membership {part!r}")
        seen.add(key)
        memberships.append((mwe_id, category))
    return tuple(memberships)


def format_mwe_field(memberships) -> str:
    """Render memberships as a canonical PARSEME:MWE value ("*" if none)."""
    if not memberships:
        return "*"
    items = []
    for mwe_id, category in sorted(memberships, key=lambda m: m[0]):
        items.append(f"{mwe_id}:{category}" if category is not None else str(mwe_id))
    return ";".join(items)


def _validate_sentence_mwes(tokens, location: str) -> None:
    """Check MWE id contiguity and the one-category-bearer convention."""
    bearers: dict[int, list[int]] = {}
    members: dict[int, list[int]] = {}
    for tok in tokens:
        for mwe_id, category in tok.mwe_tags:
            members.setdefault(mwe_id, []).append(tok.id)
            if category is not None:
                bearers.setdefault(mwe_id, []).append(tok.id)
    if members:
        ids = sorted(members)
        if ids != list(range(1, len(ids) + 1)):
            raise NonContiguousIds(
                f"{location}: MWE ids {ids} do not form 1..{len(ids)}")
    for mwe_id, positions in members.items():
        carrying = bearers.get(mwe_id, [])
        if not carrying:
            raise DanglingMweId(
                f"{location}: MWE {mwe_id} has no category-bearing component")
        if len(carrying) > 1:
            raise BadMweColumn(
                f"{location}: MWE {mwe_id} carries a category on tokens "
                f"{carrying}; only one component may bear it")
        if carrying[0] != min(positions):
            raise BadMweColumn(
                f"{location}: MWE {mwe_id} category must sit on its first "
                f"component (token {min(positions)}), found on {carrying[0]}")


def _finish_sentence(comments, rows, language, source, start_line) -> Sentence:
    location = f"{source}:{start_line}"
    tokens: list[Token] = []
    extra_rows: list[tuple[int, str]] = []
    for kind, payload in rows:
        if kind == "token":
            tokens.append(payload)
        else:
            extra_rows.append((len(tokens), payload))
    if not tokens:
        raise MalformedLine(f"{location}: sentence block contains no token lines")
    ids = [t.id for t in tokens]
    if ids != list(range(1, len(ids) + 1)):
        raise NonContiguousIds(f"{location}: token ids {ids} are not 1..{len(ids)}")
    _validate_sentence_mwes(tokens, location)
    sent_id = ""
    text = ""
    for line in comments:
        body = line[1:].strip()
        key, sep, value = body.partition("=")
        if sep:
            key = key.strip()
            if key == "sent_id":
                sent_id = value.strip()
            elif key == "text":
                text = value.strip()
    return Sentence(tokens=tuple(tokens), sent_id=sent_id, text=text,
                    language=language, comments=tuple(comments),
                    extra_rows=tuple(extra_rows))


def parse_cupt(text: str, language: str | None = None,
               source: str = "<string>") -> Corpus:
    """Parse CUPT text into a Corpus, stamping ``language`` on each sentence.

    Sentence blocks are separated by blank lines; '#' lines are kept
    verbatim; multiword-token ranges and empty nodes are preserved but
    excluded from the token sequence. CRLF input is accepted.
    """
    sentences: list[Sentence] = []
    comments: list[str] = []
    rows: list[tuple[str, object]] = []
    block_start = 1
    in_block = False

    def flush(line_no):
        nonlocal comments, rows, in_block
        if comments or rows:
            sentences.append(_finish_sentence(comments, rows, language,
                                              source, block_start))
        comments, rows, in_block = [], [], False

    line_no = 0
    for line_no, line in enumerate(text.split("\n"), start=1):
        line = line.rstrip("\r")
        if not line.strip():
            flush(line_no)
            continue
        if not in_block:
            block_start = line_no
            in_block = True
        if line.startswith("#"):
            comments.append(line)
            continue
        cols = line.split("\t")
        if len(cols) != N_COLUMNS:
            raise MalformedLine(
                f"{source}:{line_no}: expected {N_COLUMNS} tab-separated "
                f"columns, got {len(cols)}")
        raw_id = cols[0]
        if "-" in raw_id or "." in raw_id:
            # Range or empty-node row: no MWE annotation, kept verbatim.
            rows.append(("extra", line))
            continue
        try:
            tok_id = int(raw_id)
        except ValueError:
            raise MalformedLine(
                f"{source}:{line_no}: token id {raw_id!r} is not an integer"
            ) from None
        memberships = _parse_mwe_field(cols[10], f"{source}:{line_no}")
        rows.append(("token", Token(
            id=tok_id, form=cols[1], lemma=cols[2], upos=cols[3],
            misc_columns=tuple(cols[4:10]), mwe_tags=memberships,
            mwe_raw=cols[10])))
    flush(line_no)
    return Corpus(sentences=tuple(sentences),
                  source_files=(source,) if source != "<string>" else ())


def parse_cupt_file(path, language: str | None = None) -> Corpus:
    with open(path, encoding="utf-8") as handle:
        text = handle.read()
    return parse_cupt(text, language=language, source=str(path))


def serialize_sentence(sentence: Sentence) -> str:
    lines = list(sentence.comments)
    extras = list(sentence.extra_rows)
    position = 0
    for token in sentence.tokens:
        while extras and extras[0][0] <= position:
            lines.append(extras.pop(0)[1])
        lines.append("\t".join((str(token.id), token.form, token.lemma,
                                token.upos, *token.misc_columns,
                                token.mwe_raw)))
        position += 1
    for _, raw in extras:
        lines.append(raw)
    return "\n".join(lines)


def serialize_corpus(corpus: Corpus) -> str:
    """Render a corpus as CUPT text (one blank line after each sentence)."""
    return "".join(serialize_sentence(s) + "\n\n" for s in corpus)


def extract_mwes(sentence: Sentence) -> list[MweInstance]:
    """Collect one MweInstance per distinct MWE id, ordered by id."""
    members: dict[int, list[int]] = {}
    categories: dict[int, VmweCategory] = {}
    for token in sentence.tokens:
        for mwe_id, category in token.mwe_tags:
            members.setdefault(mwe_id, []).append(token.id)
            if category is not None:
                if mwe_id in categories:
                    raise BadMweColumn(
                        f"MWE {mwe_id} has more than one category-bearing "
                        f"component")
                categories[mwe_id] = category
    instances = []
    lemmas = sentence.lemmas()
    for mwe_id in sorted(members):
        if mwe_id not in categories:
            raise DanglingMweId(
                f"MWE {mwe_id} has no category-bearing component")
        indices = tuple(sorted(members[mwe_id]))
        instances.append(MweInstance(
            mwe_id=mwe_id, category=categories[mwe_id], token_indices=indices,
            lemma_key=make_lemma_key(lemmas[i - 1] for i in indices)))
    return instances


def make_lemma_key(lemmas) -> tuple[str, ...]:
    """Canonical multiset of case-folded lemmas (sorted tuple)."""
    return tuple(sorted(lemma.casefold() for lemma in lemmas))


def encode_tags(sentence: Sentence) -> list[str]:
    """Encode MWE annotations as per-token IOB2 tags with category.

    Each MWE's first member gets "B-<cat>", later members "I-<cat>", and
    everything else (including gap tokens inside a discontinuous MWE)
    "O". A token belonging to several MWEs keeps only the one whose
    instance starts earliest (ties: smaller id); the dropped memberships
    are signalled with an OverlapUnrepresentable warning but remain in
    the Sentence itself, so evaluation against gold stays exact.
    """
    instances = extract_mwes(sentence)
    start = {inst.mwe_id: inst.token_indices[0] for inst in instances}
    category = {inst.mwe_id: inst.category for inst in instances}
    winner: dict[int, int] = {}
    overlaps = []
    for token in sentence.tokens:
        ids = [mwe_id for mwe_id, _ in token.mwe_tags]
        if not ids:
            continue
        if len(ids) > 1:
            overlaps.append(token.id)
        winner[token.id] = min(ids, key=lambda m: (start[m], m))
    if overlaps:
        warnings.warn(OverlapUnrepresentable(
            f"tokens {overlaps} belong to more than one MWE; flat IOB2 tags "
            f"keep only the earliest-starting instance"))
    kept: dict[int, list[int]] = {}
    for tok_id, mwe_id in winner.items():
        kept.setdefault(mwe_id, []).append(tok_id)
    tags = ["O"] * len(sentence.tokens)
    for mwe_id, positions in kept.items():
        positions.sort()
        tags[positions[0] - 1] = f"B-{category[mwe_id]}"
        for pos in positions[1:]:
            tags[pos - 1] = f"I-{category[mwe_id]}"
    return tags


def decode_tags(tags: list[str], lemmas=None) -> list[MweInstance]:
    """Decode IOB2 tags back into MWE instances (lenient, never raises).

    "B-X" opens a new instance of category X. "I-X" attaches to the most
    recently opened X instance, skipping any "O" gap in between; an
    orphan "I-X" with no open X instance starts one. Instances are
    renumbered 1..m in order of their first token. ``lemmas`` (one per
    tag) supplies the lemma keys; without them keys are empty.
    """
    spans: list[tuple[str, list[int]]] = []
    open_span: dict[str, int] = {}
    for position, tag in enumerate(tags, start=1):
        if tag.startswith("B-") and len(tag) > 2:
            spans.append((tag[2:], [position]))
            open_span[tag[2:]] = len(spans) - 1
        elif tag.startswith("I-") and len(tag) > 2:
            cat = tag[2:]
            if cat in open_span:
                spans[open_span[cat]][1].append(position)
            else:
                spans.append((cat, [position]))
                open_span[cat] = len(spans) - 1
        # anything else, including "O", is a gap
    spans.sort(key=lambda span: span[1][0])
    instances = []
    for number, (cat, positions) in enumerate(spans, start=1):
        if lemmas is not None:
            key = make_lemma_key(lemmas[i - 1] for i in positions)
        else:
            key = ()
        instances.append(MweInstance(
            mwe_id=number, category=VmweCategory(cat),
            token_indices=tuple(positions), lemma_key=key))
    return instances


def with_instances(sentence: Sentence, instances: list[MweInstance]) -> Sentence:
    """Rewrite a sentence's MWE column from the given instances.

    All other columns, comments and extra rows are untouched, so the
    serialized output differs from the input only in the last column.
    """
    per_token: dict[int, list[tuple[int, VmweCategory | None]]] = {}
    for inst in instances:
        first = inst.token_indices[0]
        for position in inst.token_indices:
            per_token.setdefault(position, []).append(
                (inst.mwe_id, inst.category if position == first else None))
    tokens = []
    for token in sentence.tokens:
        memberships = tuple(sorted(per_token.get(token.id, []),
                                   key=lambda m: m[0]))
        tokens.append(replace(token, mwe_tags=memberships,
                              mwe_raw=format_mwe_field(memberships)))
    return replace(sentence, tokens=tuple(tokens))


def merge_corpora(parts: list[tuple[Corpus, str]]) -> Corpus:
    """Concatenate corpora, stamping each sentence with its language code.

    Several parts may share a code (a language split across files); a
    sentence already stamped with a *different* code is an ambiguity and
    raises DuplicateLanguageCode.
    """
    sentences: list[Sentence] = []
    sources: list[str] = []
    for corpus, code in parts:
        for sentence in corpus:
            if sentence.language is not None and sentence.language != code:
                raise DuplicateLanguageCode(
                    f"sentence {sentence.sent_id!r} already carries language "
                    f"{sentence.language!r}, cannot re-stamp as {code!r}")
            sentences.append(replace(sentence, language=code))
        sources.extend(corpus.source_files)
    return Corpus(sentences=tuple(sentences), source_files=tuple(sources))


def seen_lemma_keys(train: Corpus) -> set[tuple[str, ...]]:
    """Lemma keys of every annotated MWE in the training corpus.

    A test MWE is *unseen* exactly when its lemma key is absent from
    this set (category plays no role).
    """
    keys: set[tuple[str, ...]] = set()
    for sentence in train:
        for instance in extract_mwes(sentence):
            keys.add(instance.lemma_key)
    return keys


def corpus_stats(corpus: Corpus) -> CorpusStats:
    """Count tokens, sentences and MWEs per category and per language."""
    stats = CorpusStats()
    for sentence in corpus:
        language = sentence.language or "?"
        lang_stats = stats.by_language.setdefault(language, CorpusStats())
        for bucket in (stats, lang_stats):
            bucket.n_sentences += 1
            bucket.n_tokens += len(sentence.tokens)
        for instance in extract_mwes(sentence):
            code = str(instance.category)
            for bucket in (stats, lang_stats):
                bucket.n_mwes += 1
                bucket.by_category[code] = bucket.by_category.get(code, 0) + 1
    return stats
