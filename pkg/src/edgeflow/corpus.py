"""Dialog corpus loading, vocabularies and the noun lexicon."""

from __future__ import annotations

import json
import logging
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

from .fsutil import atomic_write_text

log = logging.getLogger(__name__)

PAD, UNK, BOS, EOS = "<pad>", "<unk>", "<bos>", "<eos>"
RESERVED = (PAD, UNK, BOS, EOS)
PAD_ID, UNK_ID, BOS_ID, EOS_ID = range(4)

NOUN = "NOUN"
OTHER = "OTHER"


class CorpusFormatError(ValueError):
    """A corpus, vocabulary or lexicon file could not be parsed."""


def normalize_token(text: str) -> str:
    tok = text.strip().lower()
    if not tok or any(ch.isspace() for ch in tok):
        raise ValueError(f"invalid token {text!r}")
    return tok


@dataclass(frozen=True)
class DialogPair:
    post: tuple[str, ...]
    response: tuple[str, ...]

    def __post_init__(self) -> None:
        if not self.post or not self.response:
            raise ValueError("post and response must both be non-empty")

    @classmethod
    def of(cls, post: Iterable[str], response: Iterable[str]) -> "DialogPair":
        return cls(tuple(normalize_token(t) for t in post), tuple(normalize_token(t) for t in response))

    def to_json(self) -> str:
        return json.dumps({"post": list(self.post), "response": list(self.response)}, ensure_ascii=False)


@dataclass
class LoadReport:
    pairs: list[DialogPair]
    rejected: int = 0


def read_corpus(path: str | Path) -> LoadReport:
    """Parse a JSONL corpus.  Records with an empty side are skipped and counted."""
    pairs: list[DialogPair] = []
    rejected = 0
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
            except json.JSONDecodeError as exc:
                raise CorpusFormatError(f"{path}:{lineno}: invalid JSON ({exc.msg})") from None
            if not isinstance(rec, dict) or "post" not in rec or "response" not in rec:
                raise CorpusFormatError(f"{path}:{lineno}: record needs 'post' and 'response' arrays")
            post, resp = rec["post"], rec["response"]
            if not isinstance(post, list) or not isinstance(resp, list) or not all(
                isinstance(t, str) for t in post + resp
            ):
                raise CorpusFormatError(f"{path}:{lineno}: 'post' and 'response' must be string arrays")
            try:
                post_t = tuple(normalize_token(t) for t in post)
                resp_t = tuple(normalize_token(t) for t in resp)
            except ValueError as exc:
                raise CorpusFormatError(f"{path}:{lineno}: {exc}") from None
            if not post_t or not resp_t:
                rejected += 1
                continue
            pairs.append(DialogPair(post_t, resp_t))
    if rejected:
        log.warning("%s: rejected %d record(s) with an empty post or response", path, rejected)
    return LoadReport(pairs, rejected)


def load_corpus(path: str | Path) -> list[DialogPair]:
    return read_corpus(path).pairs


def write_corpus(pairs: Iterable[DialogPair], path: str | Path) -> None:
    atomic_write_text(path, "".join(p.to_json() + "\n" for p in pairs))


def token_counts(pairs: Iterable[DialogPair]) -> Counter:
    counts: Counter = Counter()
    for p in pairs:
        counts.update(p.post)
        counts.update(p.response)
    return counts


@dataclass(frozen=True)
class Vocabulary:
    tokens: tuple[str, ...]
    freqs: tuple[int, ...]
    index: dict = field(init=False, repr=False, compare=False)

    def __post_init__(self) -> None:
        if self.tokens[:4] != RESERVED:
            raise ValueError("reserved tokens must occupy ids 0..3")
        idx = {t: i for i, t in enumerate(self.tokens)}
        if len(idx) != len(self.tokens):
            raise ValueError("duplicate token in vocabulary")
        object.__setattr__(self, "index", idx)

    def __len__(self) -> int:
        return len(self.tokens)

    def __contains__(self, tok: str) -> bool:
        return tok in self.index

    def id(self, tok: str) -> int:
        return self.index.get(tok, UNK_ID)

    def encode(self, toks: Sequence[str]) -> list[int]:
        return [self.index.get(t, UNK_ID) for t in toks]

    def token(self, i: int) -> str:
        return self.tokens[i]

    def save(self, path: str | Path) -> None:
        atomic_write_text(path, "".join(f"{t}\t{i}\t{f}\n" for i, (t, f) in enumerate(zip(self.tokens, self.freqs))))

    @classmethod
    def load(cls, path: str | Path) -> "Vocabulary":
        toks, freqs = [], []
        with open(path, encoding="utf-8") as fh:
            for lineno, line in enumerate(fh, start=1):
                parts = line.rstrip("\n").split("\t")
                if len(parts) != 3 or not parts[1].isdigit() or int(parts[1]) != len(toks):
                    raise CorpusFormatError(f"{path}:{lineno}: expected 'token<TAB>id<TAB>freq' with consecutive ids")
                toks.append(parts[0])
                freqs.append(int(parts[2]))
        return cls(tuple(toks), tuple(freqs))


def build_vocab(pairs: Iterable[DialogPair], max_size: int, min_freq: int = 1) -> Vocabulary:
    """Keep the most frequent tokens; ties go to the lexicographically smaller one."""
    if max_size < len(RESERVED):
        raise ValueError("max_size must be at least 4")
    counts = token_counts(pairs)
    ranked = sorted(((t, c) for t, c in counts.items() if c >= min_freq and t not in RESERVED),
                    key=lambda tc: (-tc[1], tc[0]))
    ranked = ranked[: max_size - len(RESERVED)]
    return Vocabulary(RESERVED + tuple(t for t, _ in ranked), (0,) * 4 + tuple(c for _, c in ranked))


class PosLexicon:
    """Token -> coarse tag lookup; anything unknown is OTHER."""

    def __init__(self, tags: dict[str, str] | None = None):
        self._tags = {normalize_token(k): (NOUN if v.upper() == NOUN else OTHER) for k, v in (tags or {}).items()}

    def tag(self, token: str) -> str:
        return self._tags.get(token, OTHER)

    def is_noun(self, token: str) -> bool:
        return self._tags.get(token) == NOUN

    def __len__(self) -> int:
        return len(self._tags)

    @classmethod
    def load(cls, path: str | Path) -> "PosLexicon":
        tags = {}
        with open(path, encoding="utf-8") as fh:
            for lineno, line in enumerate(fh, start=1):
                if not line.strip() or line.startswith("#"):
                    continue
                parts = line.rstrip("\n").split("\t")
                if len(parts) != 2:
                    raise CorpusFormatError(f"{path}:{lineno}: expected 'token<TAB>tag'")
                tags[parts[0]] = parts[1]
        return cls(tags)


def noun_tokens(pairs: Iterable[DialogPair], lexicon: PosLexicon) -> set[str]:
    out = set()
    for p in pairs:
        for tok in p.post + p.response:
            if lexicon.is_noun(tok):
                out.add(tok)
    return out
