"""Segment archives: loading, saving, synthesis, and dataset splitting.

An archive is an ordered collection of word-level audio segments. Each
segment carries a (T, F) feature matrix (rows are frames, e.g. 39-dim
MFCCs), an id, a language tag, an orthographic word label and the word's
phoneme sequence. Archives are serialized as UTF-8 JSON lines, one segment
per line, with floats written at full round-trip precision.

Synthetic corpora stand in for real speech at desk scale: each phoneme has
a template frame vector, a word's segment is the concatenation of a few
noisy copies of each of its phonemes' templates.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

MAX_FRAMES = 50


class CorpusError(ValueError):
    """Malformed archive file, segment record, or synthesis config."""


class SplitError(CorpusError):
    """A requested dataset split cannot be satisfied."""


@dataclass(frozen=True, eq=False)
class Segment:
    """One word-level audio segment with its feature matrix and labels."""

    id: str
    lang: str
    word: str
    phonemes: tuple[str, ...]
    features: np.ndarray  # (T, F) float64

    def __post_init__(self):
        if not self.id:
            raise CorpusError("segment id must be non-empty")
        if not self.word:
            raise CorpusError(f"segment '{self.id}': word label must be non-empty")
        phonemes = tuple(self.phonemes)
        if not phonemes or not all(isinstance(p, str) and p for p in phonemes):
            raise CorpusError(f"segment '{self.id}': phoneme sequence must be non-empty strings")
        feats = np.asarray(self.features, dtype=np.float64)
        if feats.ndim != 2 or feats.shape[0] < 1 or feats.shape[1] < 1:
            raise CorpusError(f"segment '{self.id}': features must be a non-empty T x F matrix")
        if not np.all(np.isfinite(feats)):
            raise CorpusError(f"segment '{self.id}': non-finite feature value")
        object.__setattr__(self, "phonemes", phonemes)
        object.__setattr__(self, "features", feats)

    @property
    def num_frames(self) -> int:
        return self.features.shape[0]

    @property
    def feature_dim(self) -> int:
        return self.features.shape[1]

    def __eq__(self, other):
        if not isinstance(other, Segment):
            return NotImplemented
        return (
            self.id == other.id
            and self.lang == other.lang
            and self.word == other.word
            and self.phonemes == other.phonemes
            and self.features.shape == other.features.shape
            and np.array_equal(self.features, other.features)
        )

    __hash__ = None


@dataclass(frozen=True, eq=False)
class SegmentArchive:
    """Immutable ordered collection of segments with a common feature dim."""

    segments: tuple[Segment, ...]
    feature_dim: int

    @classmethod
    def from_segments(cls, segments, max_frames: int = MAX_FRAMES) -> "SegmentArchive":
        segments = tuple(segments)
        if not segments:
            return cls(segments=(), feature_dim=0)
        feature_dim = segments[0].feature_dim
        seen = set()
        for seg in segments:
            if seg.id in seen:
                raise CorpusError(f"duplicate id '{seg.id}'")
            seen.add(seg.id)
            if seg.feature_dim != feature_dim:
                raise CorpusError(
                    f"segment '{seg.id}': feature dim {seg.feature_dim} != archive dim {feature_dim}"
                )
            if seg.num_frames > max_frames:
                raise CorpusError(
                    f"segment '{seg.id}': {seg.num_frames} frames exceeds the {max_frames}-frame limit"
                )
        return cls(segments=segments, feature_dim=feature_dim)

    def __len__(self) -> int:
        return len(self.segments)

    def __iter__(self):
        return iter(self.segments)

    def __getitem__(self, i: int) -> Segment:
        return self.segments[i]

    @property
    def words(self) -> set[str]:
        return {seg.word for seg in self.segments}

    @property
    def ids(self) -> list[str]:
        return [seg.id for seg in self.segments]

    def __eq__(self, other):
        if not isinstance(other, SegmentArchive):
            return NotImplemented
        return (
            self.feature_dim == other.feature_dim
            and len(self.segments) == len(other.segments)
            and all(a == b for a, b in zip(self.segments, other.segments))
        )

    __hash__ = None


_RECORD_FIELDS = ("id", "lang", "word", "phonemes", "features")


def _segment_from_record(rec, lineno: int) -> Segment:
    if not isinstance(rec, dict):
        raise CorpusError(f"line {lineno}: record must be an object")
    missing = [k for k in _RECORD_FIELDS if k not in rec]
    if missing:
        raise CorpusError(f"line {lineno}: missing field(s) {', '.join(missing)}")
    for key in ("id", "lang", "word"):
        if not isinstance(rec[key], str):
            raise CorpusError(f"line {lineno}: field '{key}' must be a string")
    if not isinstance(rec["phonemes"], list):
        raise CorpusError(f"line {lineno}: field 'phonemes' must be an array")
    if not isinstance(rec["features"], list):
        raise CorpusError(f"line {lineno}: field 'features' must be an array of frames")
    try:
        return Segment(
            id=rec["id"],
            lang=rec["lang"],
            word=rec["word"],
            phonemes=tuple(rec["phonemes"]),
            features=np.array(rec["features"], dtype=np.float64),
        )
    except CorpusError:
        raise
    except (TypeError, ValueError) as exc:
        raise CorpusError(f"line {lineno}: bad segment record: {exc}") from exc


def load_archive(path, max_frames: int = MAX_FRAMES) -> SegmentArchive:
    """Read a JSON-lines segment archive, validating every record.

    Raises CorpusError naming the offending line or segment id on malformed
    records, duplicate ids, inconsistent feature dims, or over-length
    segments (more than `max_frames` frames).
    """
    segments = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                rec = json.loads(line)
            except json.JSONDecodeError as exc:
                raise CorpusError(f"line {lineno}: not a valid record: {exc}") from exc
            segments.append(_segment_from_record(rec, lineno))
    return SegmentArchive.from_segments(segments, max_frames=max_frames)


def save_archive(archive: SegmentArchive, path) -> None:
    """Write an archive as JSON lines; load_archive(save_archive(a)) == a."""
    with open(path, "w", encoding="utf-8") as fh:
        for seg in archive:
            rec = {
                "id": seg.id,
                "lang": seg.lang,
                "word": seg.word,
                "phonemes": list(seg.phonemes),
                "features": seg.features.tolist(),
            }
            fh.write(json.dumps(rec, ensure_ascii=False))
            fh.write("\n")


@dataclass(frozen=True)
class PhonemeTemplate:
    """Mean frame vector for one phoneme plus a per-phoneme noise multiplier."""

    mean: np.ndarray  # (F,)
    spread: float = 1.0

    def __post_init__(self):
        mean = np.asarray(self.mean, dtype=np.float64)
        if mean.ndim != 1 or mean.size < 1 or not np.all(np.isfinite(mean)):
            raise CorpusError("phoneme template mean must be a finite 1-D vector")
        if not np.isfinite(self.spread) or self.spread < 0:
            raise CorpusError("phoneme template spread must be a non-negative real")
        object.__setattr__(self, "mean", mean)


@dataclass(frozen=True)
class SynthConfig:
    """Recipe for a synthetic corpus; fully determined by its seed."""

    phoneme_inventory: tuple[str, ...]
    phoneme_templates: dict[str, PhonemeTemplate]
    lexicon: tuple[tuple[str, tuple[str, ...]], ...]  # (word, phoneme sequence)
    frames_per_phoneme: tuple[int, int]  # inclusive range
    noise_scale: float
    segments_per_word: int
    seed: int
    lang: str = "synth"
    max_frames: int = MAX_FRAMES


def _validate_synth(cfg: SynthConfig) -> int:
    """Check a SynthConfig and return its feature dim."""
    inventory = tuple(cfg.phoneme_inventory)
    if not inventory or len(set(inventory)) != len(inventory):
        raise CorpusError("phoneme inventory must be non-empty and free of duplicates")
    missing = [p for p in inventory if p not in cfg.phoneme_templates]
    if missing:
        raise CorpusError(f"no template for phoneme(s) {', '.join(missing)}")
    dims = {cfg.phoneme_templates[p].mean.size for p in inventory}
    if len(dims) != 1:
        raise CorpusError(f"phoneme templates disagree on feature dim: {sorted(dims)}")
    lo, hi = cfg.frames_per_phoneme
    if lo < 1 or hi < lo:
        raise CorpusError(f"frames_per_phoneme range ({lo}, {hi}) is invalid")
    if cfg.segments_per_word < 1:
        raise CorpusError("segments_per_word must be >= 1")
    if not np.isfinite(cfg.noise_scale) or cfg.noise_scale < 0:
        raise CorpusError("noise_scale must be a non-negative real")
    if not cfg.lexicon:
        raise CorpusError("lexicon must be non-empty")
    words = [w for w, _ in cfg.lexicon]
    if len(set(words)) != len(words):
        raise CorpusError("lexicon word labels must be unique")
    inv = set(inventory)
    for word, phonemes in cfg.lexicon:
        if not word or not phonemes:
            raise CorpusError("lexicon entries need a word label and a phoneme sequence")
        outside = [p for p in phonemes if p not in inv]
        if outside:
            raise CorpusError(f"word '{word}' uses phoneme(s) outside the inventory: {', '.join(outside)}")
        if len(phonemes) * hi > cfg.max_frames:
            raise CorpusError(
                f"word '{word}' can reach {len(phonemes) * hi} frames, over the {cfg.max_frames}-frame limit"
            )
    return dims.pop()


def synth_corpus(cfg: SynthConfig) -> SegmentArchive:
    """Generate a synthetic archive; byte-identical for identical configs.

    Each segment of a word is built phoneme by phoneme: k frames (k drawn
    uniformly from frames_per_phoneme) equal to the phoneme's template mean
    plus zero-mean Gaussian noise scaled by noise_scale * template.spread.
    """
    feature_dim = _validate_synth(cfg)
    rng = np.random.default_rng(cfg.seed)
    lo, hi = cfg.frames_per_phoneme
    segments = []
    for word, phonemes in cfg.lexicon:
        for j in range(cfg.segments_per_word):
            blocks = []
            for ph in phonemes:
                k = int(rng.integers(lo, hi + 1))
                tpl = cfg.phoneme_templates[ph]
                noise = rng.standard_normal((k, feature_dim)) * (cfg.noise_scale * tpl.spread)
                blocks.append(tpl.mean + noise)
            segments.append(
                Segment(
                    id=f"{cfg.lang}-{word}-{j:03d}",
                    lang=cfg.lang,
                    word=word,
                    phonemes=tuple(phonemes),
                    features=np.vstack(blocks),
                )
            )
    return SegmentArchive.from_segments(segments, max_frames=cfg.max_frames)


@dataclass(frozen=True)
class SplitSpec:
    """Sizes of the train/db/query/finetune partitions plus the sampling seed."""

    train_count: int
    db_count: int
    query_count: int
    finetune_count: int
    seed: int = 0


def split_dataset(
    archive: SegmentArchive, spec: SplitSpec
) -> tuple[SegmentArchive, SegmentArchive, SegmentArchive, SegmentArchive]:
    """Partition an archive into disjoint train/db/query/finetune archives.

    Sampling is uniform without replacement and deterministic per seed.
    Query segments are chosen so that every query word also occurs in the
    db partition (each query has at least one relevant item); candidates
    whose word is missing from the db are skipped and remain available to
    the finetune partition. Raises SplitError when counts are infeasible or
    too few query candidates qualify.
    """
    counts = (spec.train_count, spec.db_count, spec.query_count, spec.finetune_count)
    if any(c < 0 for c in counts):
        raise SplitError(f"split counts must be non-negative, got {counts}")
    if len(archive) == 0:
        raise SplitError("cannot split an empty archive")
    total = sum(counts)
    if total > len(archive):
        raise SplitError(f"split needs {total} segments but the archive has {len(archive)}")

    rng = np.random.default_rng(spec.seed)
    order = [int(i) for i in rng.permutation(len(archive))]
    t, d, q, f = counts
    train_idx = order[:t]
    db_idx = order[t : t + d]
    rest = order[t + d :]

    db_words = {archive[i].word for i in db_idx}
    query_idx, leftover = [], []
    for i in rest:
        if len(query_idx) < q and archive[i].word in db_words:
            query_idx.append(i)
        else:
            leftover.append(i)
    if len(query_idx) < q:
        raise SplitError(
            f"only {len(query_idx)} of {q} requested query segments have their word in the db split"
        )
    finetune_idx = leftover[:f]

    def sub(indices):
        return SegmentArchive.from_segments([archive[i] for i in indices])

    return sub(train_idx), sub(db_idx), sub(query_idx), sub(finetune_idx)


# ---------------------------------------------------------------------------
# Synthetic "language" construction helpers
# ---------------------------------------------------------------------------

def random_templates(
    inventory, feature_dim: int, rng: np.random.Generator, scale: float = 1.0, spread: float = 1.0
) -> dict[str, PhonemeTemplate]:
    """Draw one Gaussian template mean per phoneme."""
    return {
        p: PhonemeTemplate(mean=rng.normal(0.0, scale, size=feature_dim), spread=spread)
        for p in inventory
    }


def random_lexicon(
    inventory,
    n_words: int,
    word_length: tuple[int, int],
    rng: np.random.Generator,
    exclude=(),
) -> tuple[tuple[str, tuple[str, ...]], ...]:
    """Draw distinct random words (phoneme sequences) over an inventory.

    Word labels are the concatenated phoneme symbols. Sequences listed in
    `exclude` (and earlier draws) are rejected and redrawn.
    """
    inventory = tuple(inventory)
    lo, hi = word_length
    if lo < 1 or hi < lo:
        raise CorpusError(f"word_length range ({lo}, {hi}) is invalid")
    taken = {tuple(seq) for seq in exclude}
    lexicon = []
    attempts = 0
    while len(lexicon) < n_words:
        attempts += 1
        if attempts > 1000 * n_words:
            raise CorpusError("could not draw enough distinct words; enlarge the inventory")
        length = int(rng.integers(lo, hi + 1))
        seq = tuple(str(inventory[int(i)]) for i in rng.integers(0, len(inventory), size=length))
        if seq in taken:
            continue
        taken.add(seq)
        lexicon.append(("".join(seq), seq))
    return tuple(lexicon)


def edit_cluster_lexicon(
    stem_inventory,
    mutation_inventory,
    n_stems: int,
    word_length: int,
    rng: np.random.Generator,
    edits=(1, 2, 3),
    exclude=(),
) -> tuple[tuple[str, tuple[str, ...]], ...]:
    """Build word clusters at exact, known phoneme edit distances.

    Each cluster holds a stem plus one variant per entry of `edits`; the
    variant at k substitutes k distinct positions of the stem with symbols
    from `mutation_inventory`. Stems avoid mutation symbols entirely, so a
    variant shares exactly length-k symbols (in order) with its stem and
    the Levenshtein distance is provably k, never shortened by shifts.
    """
    stem_inventory = tuple(stem_inventory)
    mutation_inventory = tuple(mutation_inventory)
    if set(stem_inventory) & set(mutation_inventory):
        raise CorpusError("stem and mutation inventories must be disjoint")
    if max(edits) > word_length:
        raise CorpusError("cannot place more substitutions than word positions")
    taken = {tuple(seq) for seq in exclude}
    lexicon = []
    attempts = 0
    while len(lexicon) < n_stems * (1 + len(edits)):
        attempts += 1
        if attempts > 1000 * n_stems:
            raise CorpusError("could not draw enough distinct stems; enlarge the inventory")
        stem = tuple(
            str(stem_inventory[int(i)])
            for i in rng.integers(0, len(stem_inventory), size=word_length)
        )
        positions = [int(i) for i in rng.permutation(word_length)[: max(edits)]]
        subs = [
            str(mutation_inventory[int(i)])
            for i in rng.integers(0, len(mutation_inventory), size=max(edits))
        ]
        cluster = [stem]
        for k in edits:
            variant = list(stem)
            for pos, sym in zip(positions[:k], subs[:k]):
                variant[pos] = sym
            cluster.append(tuple(variant))
        if any(seq in taken for seq in cluster) or len(set(cluster)) != len(cluster):
            continue
        taken.update(cluster)
        lexicon.extend(("".join(seq), seq) for seq in cluster)
    return tuple(lexicon)


@dataclass(frozen=True)
class LanguagePairConfig:
    """Recipe for a source/target corpus pair sharing phoneme templates.

    inventory_overlap controls which fraction of the target language's
    phoneme templates are copied from the source language; the rest are
    redrawn. Lexicons are always disjoint.
    """

    feature_dim: int = 39
    inventory_size: int = 12
    inventory_overlap: float = 1.0
    words_per_language: int = 40
    word_length: tuple[int, int] = (4, 6)
    frames_per_phoneme: tuple[int, int] = (2, 4)
    noise_scale: float = 0.2
    segments_per_word: int = 50
    template_scale: float = 1.0
    seed: int = 0


_SYMBOLS = "abcdefghijklmnopqrstuvwxyz"


def phoneme_symbols(n: int) -> tuple[str, ...]:
    """Single letters for small inventories, p00-style symbols beyond 26."""
    if n <= len(_SYMBOLS):
        return tuple(_SYMBOLS[:n])
    return tuple(f"p{i:02d}" for i in range(n))


def make_language_pair(cfg: LanguagePairConfig) -> tuple[SynthConfig, SynthConfig]:
    """Build SynthConfigs for a source language and a disjoint-lexicon target."""
    if not 0.0 <= cfg.inventory_overlap <= 1.0:
        raise CorpusError("inventory_overlap must lie in [0, 1]")
    ss = np.random.SeedSequence(cfg.seed)
    tpl_seed, lex_seed, src_seed, tgt_seed = (int(s) for s in ss.generate_state(4))
    inventory = phoneme_symbols(cfg.inventory_size)

    tpl_rng = np.random.default_rng(tpl_seed)
    source_templates = random_templates(inventory, cfg.feature_dim, tpl_rng, scale=cfg.template_scale)
    n_shared = round(cfg.inventory_overlap * cfg.inventory_size)
    target_templates = dict(source_templates)
    for p in inventory[n_shared:]:
        target_templates[p] = PhonemeTemplate(
            mean=tpl_rng.normal(0.0, cfg.template_scale, size=cfg.feature_dim)
        )

    lex_rng = np.random.default_rng(lex_seed)
    source_lexicon = random_lexicon(inventory, cfg.words_per_language, cfg.word_length, lex_rng)
    target_lexicon = random_lexicon(
        inventory,
        cfg.words_per_language,
        cfg.word_length,
        lex_rng,
        exclude=[seq for _, seq in source_lexicon],
    )

    def build(lang, templates, lexicon, seed):
        return SynthConfig(
            phoneme_inventory=inventory,
            phoneme_templates=templates,
            lexicon=lexicon,
            frames_per_phoneme=cfg.frames_per_phoneme,
            noise_scale=cfg.noise_scale,
            segments_per_word=cfg.segments_per_word,
            seed=seed,
            lang=lang,
        )

    return (
        build("src", source_templates, source_lexicon, src_seed),
        build("tgt", target_templates, target_lexicon, tgt_seed),
    )


def synth_config_from_dict(d: dict) -> SynthConfig:
    """Build a SynthConfig from parsed JSON.

    Templates may be given explicitly under "phoneme_templates" as
    {"sym": {"mean": [...], "spread": s}}, or generated by supplying
    "template_seed" (and optionally "template_scale").
    """
    try:
        inventory = tuple(d["phoneme_inventory"])
        lexicon = tuple((w, tuple(seq)) for w, seq in d["lexicon"])
        frames = tuple(d["frames_per_phoneme"])
        if len(frames) != 2:
            raise CorpusError("frames_per_phoneme must be a [lo, hi] pair")
        if "phoneme_templates" in d:
            templates = {
                p: PhonemeTemplate(
                    mean=np.asarray(t["mean"], dtype=np.float64),
                    spread=float(t.get("spread", 1.0)),
                )
                for p, t in d["phoneme_templates"].items()
            }
        elif "template_seed" in d:
            if "feature_dim" not in d:
                raise CorpusError("generated templates need an explicit feature_dim")
            rng = np.random.default_rng(int(d["template_seed"]))
            templates = random_templates(
                inventory, int(d["feature_dim"]), rng, scale=float(d.get("template_scale", 1.0))
            )
        else:
            raise CorpusError("config needs phoneme_templates or template_seed")
        return SynthConfig(
            phoneme_inventory=inventory,
            phoneme_templates=templates,
            lexicon=lexicon,
            frames_per_phoneme=(int(frames[0]), int(frames[1])),
            noise_scale=float(d["noise_scale"]),
            segments_per_word=int(d["segments_per_word"]),
            seed=int(d["seed"]),
            lang=str(d.get("lang", "synth")),
            max_frames=int(d.get("max_frames", MAX_FRAMES)),
        )
    except KeyError as exc:
        raise CorpusError(f"synth config is missing field {exc}") from exc
    except (TypeError, ValueError) as exc:
        if isinstance(exc, CorpusError):
            raise
        raise CorpusError(f"bad synth config: {exc}") from exc


def language_pair_config_from_dict(d: dict) -> LanguagePairConfig:
    try:
        kwargs = dict(d)
        for key in ("word_length", "frames_per_phoneme"):
            if key in kwargs:
                kwargs[key] = tuple(kwargs[key])
        return LanguagePairConfig(**kwargs)
    except TypeError as exc:
        raise CorpusError(f"bad language pair config: {exc}") from exc
