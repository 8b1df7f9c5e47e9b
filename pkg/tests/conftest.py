import numpy as np
import pytest

from awelab.corpus import Segment, SegmentArchive


def make_segment(id_="s0", lang="xx", word="wo", phonemes=("w", "o"), frames=None, dim=3, n=4):
    if frames is None:
        rng = np.random.default_rng(abs(hash(id_)) % (2**32))
        frames = rng.normal(size=(n, dim))
    return Segment(id=id_, lang=lang, word=word, phonemes=tuple(phonemes), features=frames)


@pytest.fixture
def tiny_archive():
    segs = [
        make_segment("a1", word="cat", phonemes=("k", "ae", "t"), dim=3, n=5),
        make_segment("a2", word="cat", phonemes=("k", "ae", "t"), dim=3, n=4),
        make_segment("a3", word="dog", phonemes=("d", "ao", "g"), dim=3, n=6),
        make_segment("a4", word="dog", phonemes=("d", "ao", "g"), dim=3, n=3),
        make_segment("a5", word="fish", phonemes=("f", "ih", "sh"), dim=3, n=7),
        make_segment("a6", word="fish", phonemes=("f", "ih", "sh"), dim=3, n=2),
    ]
    return SegmentArchive.from_segments(segs)
