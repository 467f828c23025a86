"""Strict JSON run configuration shared by every CLI subcommand."""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

from .aligner import AlignmentConfig
from .edgeformer import EdgeTransformerConfig
from .genmodel import Seq2SeqConfig
from .kgraph import EnhancementConfig
from .subgraph import RetrievalConfig
from .trainer import TrainConfig


class ConfigError(ValueError):
    """Invalid or unknown configuration; the CLI maps this to exit code 2."""


PATH_KEYS = ("corpus", "test_corpus", "graph", "lexicon", "alignment", "enhanced_graph", "ablated_graph",
             "vocab", "checkpoint", "loss_log", "embeddings", "out_dir")


@dataclass(frozen=True)
class VocabConfig:
    max_size: int = 30000
    min_freq: int = 1

    def __post_init__(self) -> None:
        if self.max_size < 4 or self.min_freq < 1:
            raise ValueError("vocab max_size must be >= 4 and min_freq >= 1")


@dataclass(frozen=True)
class DecodeConfig:
    beam_width: int = 1

    def __post_init__(self) -> None:
        if self.beam_width < 1:
            raise ValueError("beam_width must be >= 1")


_SECTIONS: dict[str, type] = {
    "alignment": AlignmentConfig,
    "enhancement": EnhancementConfig,
    "retrieval": RetrievalConfig,
    "edgeformer": EdgeTransformerConfig,
    "seq2seq": Seq2SeqConfig,
    "train": TrainConfig,
    "vocab": VocabConfig,
    "decode": DecodeConfig,
}
# fields that are owned elsewhere or are not plain JSON values
_HIDDEN = {"train": {"seed"}, "retrieval": {"two_hop_base"}, "edgeformer": {"hidden_dim"}}


@dataclass
class RunConfig:
    seed: int = 0
    paths: dict[str, Path] = field(default_factory=dict)
    alignment: AlignmentConfig = AlignmentConfig()
    enhancement: EnhancementConfig = EnhancementConfig()
    retrieval: RetrievalConfig = RetrievalConfig()
    edgeformer: EdgeTransformerConfig = EdgeTransformerConfig()
    seq2seq: Seq2SeqConfig = Seq2SeqConfig()
    train: TrainConfig = TrainConfig()
    vocab: VocabConfig = VocabConfig()
    decode: DecodeConfig = DecodeConfig()

    def path(self, key: str) -> Path:
        if key not in self.paths:
            raise ConfigError(f"config has no paths.{key} entry")
        return self.paths[key]

    def with_overrides(self, **sections: dict[str, Any]) -> "RunConfig":
        """Copy with some section fields replaced (``None`` values are ignored)."""
        out = dataclasses.replace(self)
        for name, values in sections.items():
            values = {k: v for k, v in values.items() if v is not None}
            if not values:
                continue
            try:
                setattr(out, name, dataclasses.replace(getattr(out, name), **values))
            except (TypeError, ValueError) as exc:
                raise ConfigError(f"{name}: {exc}") from None
        if "seed" in sections and sections["seed"] is not None:
            out.seed = sections["seed"]
        out._sync()
        return out

    def with_seed(self, seed: int | None) -> "RunConfig":
        if seed is None:
            return self
        out = dataclasses.replace(self, seed=seed)
        out._sync()
        return out

    def _sync(self) -> None:
        self.train = dataclasses.replace(self.train, seed=self.seed)
        if self.edgeformer.hidden_dim != self.seq2seq.hidden_dim:
            self.edgeformer = dataclasses.replace(self.edgeformer, hidden_dim=self.seq2seq.hidden_dim)

    def to_dict(self) -> dict:
        d: dict[str, Any] = {"seed": self.seed, "paths": {k: str(v) for k, v in sorted(self.paths.items())}}
        for name in _SECTIONS:
            obj = getattr(self, name)
            d[name] = {f.name: getattr(obj, f.name) for f in dataclasses.fields(obj)
                       if f.name not in _HIDDEN.get(name, ())}
        return d


def _section(name: str, raw: Any) -> Any:
    cls = _SECTIONS[name]
    if not isinstance(raw, dict):
        raise ConfigError(f"{name}: expected an object")
    allowed = {f.name for f in dataclasses.fields(cls)} - _HIDDEN.get(name, set())
    unknown = sorted(set(raw) - allowed)
    if unknown:
        raise ConfigError(f"{name}: unknown key(s) {', '.join(unknown)}")
    try:
        return cls(**raw)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{name}: {exc}") from None


def parse_config(raw: Any, base_dir: Path | None = None) -> RunConfig:
    if not isinstance(raw, dict):
        raise ConfigError("config must be a JSON object")
    unknown = sorted(set(raw) - {"seed", "paths"} - set(_SECTIONS))
    if unknown:
        raise ConfigError(f"unknown top-level key(s) {', '.join(unknown)}")
    cfg = RunConfig()
    seed = raw.get("seed", 0)
    if not isinstance(seed, int) or isinstance(seed, bool) or seed < 0:
        raise ConfigError("seed must be a non-negative integer")
    cfg.seed = seed
    paths = raw.get("paths", {})
    if not isinstance(paths, dict):
        raise ConfigError("paths: expected an object")
    bad = sorted(set(paths) - set(PATH_KEYS))
    if bad:
        raise ConfigError(f"paths: unknown key(s) {', '.join(bad)}")
    for k, v in paths.items():
        if not isinstance(v, str):
            raise ConfigError(f"paths.{k}: expected a string")
        p = Path(v)
        cfg.paths[k] = p if p.is_absolute() or base_dir is None else base_dir / p
    for name in _SECTIONS:
        if name in raw:
            setattr(cfg, name, _section(name, raw[name]))
    cfg._sync()
    return cfg


def load_config(path: str | Path) -> RunConfig:
    path = Path(path)
    try:
        raw = json.loads(path.read_text(encoding="utf-8"))
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}:{exc.lineno}: invalid JSON ({exc.msg})") from None
    return parse_config(raw, path.parent)
