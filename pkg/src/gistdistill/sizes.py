"""Parameter counts for a configuration without allocating the weights."""
from __future__ import annotations

import numpy as np

from .autodiff import ParamSet
from .gist import GistDetector, StudentConfig
from .teacher import PointerGenerator, TeacherConfig
from .textio import RESERVED, CharVocab, Vocabulary


class _CountingParams(ParamSet):
    def add(self, name, value):
        if name in self._params:
            raise KeyError(f"duplicate parameter name {name!r}")
        self._params[name] = np.shape(value)

    def num_parameters(self) -> int:
        return int(sum(np.prod(s) for s in self._params.values()))

    def __contains__(self, name):
        return name in self._params


class _LazyRng:
    def uniform(self, low=0.0, high=1.0, size=None):
        return np.zeros(size)


def _placeholder_vocab(size: int) -> Vocabulary:
    return Vocabulary(list(RESERVED) + [f"w{k}" for k in range(size - len(RESERVED))])


def teacher_parameters(cfg: TeacherConfig, vocab_size: int, n_chars: int = 100) -> int:
    model = PointerGenerator.__new__(PointerGenerator)
    model.cfg, model.vocab = cfg, _placeholder_vocab(vocab_size)
    model.chars = CharVocab([chr(33 + k) for k in range(n_chars - 2)])
    ps = _CountingParams()
    model._init(ps, _LazyRng(), None)
    return ps.num_parameters()


def student_parameters(cfg: StudentConfig, vocab_size: int, n_chars: int = 100) -> int:
    det = GistDetector.__new__(GistDetector)
    det.cfg, det.vocab, det.prefix = cfg, _placeholder_vocab(vocab_size), "gist"
    det.chars = CharVocab([chr(33 + k) for k in range(n_chars - 2)])
    ps = _CountingParams()
    det._init(ps, _LazyRng())
    return ps.num_parameters()


def paper_scale_counts(vocab_size: int = 50000) -> dict[str, int]:
    """Teacher vs student size at the published hyperparameters."""
    return {"vocab_size": vocab_size,
            "teacher_parameters": teacher_parameters(TeacherConfig(), vocab_size),
            "student_parameters": student_parameters(StudentConfig(), vocab_size)}
