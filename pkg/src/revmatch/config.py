"""Run configuration: flat ``section.key = value`` files with env overrides.

Every key has a default. A file only needs the keys it changes. Environment
variables named ``COF_<SECTION>__<KEY>`` (or ``COF_SEED``) override file
values. Unknown keys in either place are rejected.
"""

from __future__ import annotations

import dataclasses
import os
import typing
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Mapping

from .encoder import EncoderConfig
from .matching import ChainConfig, ProfileFilters
from .pretraining.synthetic import SyntheticCorpusSpec
from .pretraining.trainer import TrainConfig

ENV_PREFIX = "COF_"


class ConfigError(ValueError):
    """Bad key or value; the message names the file/line or variable."""


def _parse_bool(text: str) -> bool:
    low = text.strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _parse_keep(text: str) -> float | int:
    # "0.5" is a fraction, "20" an absolute count
    t = text.strip()
    return float(t) if any(c in t for c in ".eE") else int(t)


def _parse_optional_int(text: str) -> int | None:
    t = text.strip()
    return None if t.lower() in ("", "none") else int(t)


def _parse_floats(text: str) -> tuple[float, ...]:
    return tuple(float(x) for x in text.split(",") if x.strip())


def _parse_venues(text: str) -> frozenset[str] | None:
    t = text.strip()
    if t.lower() in ("", "none"):
        return None
    return frozenset(v.strip() for v in t.split(",") if v.strip())


_SPECIAL = {
    ("chain", "stage1_keep"): _parse_keep,
    ("chain", "stage2_keep"): _parse_keep,
    ("train", "max_samples_per_factor"): _parse_optional_int,
    ("train", "adam_betas"): _parse_floats,
    ("synthetic", "rating_thresholds"): _parse_floats,
    ("filter", "years_back"): _parse_optional_int,
    ("filter", "reference_year"): _parse_optional_int,
    ("filter", "venues"): _parse_venues,
}


@dataclass(frozen=True)
class FilterSection:
    years_back: int | None = None
    venues: frozenset[str] | None = None
    author_rank: str = "any"
    reference_year: int | None = None


@dataclass(frozen=True)
class PathSection:
    workdir: str = "."
    corpus: str = "corpus.jsonl"
    reviewers: str = "reviewers.jsonl"
    submissions: str = "submissions.jsonl"
    judgments: str = "judgments.jsonl"
    search_log: str = "search_log.jsonl"
    vocab: str = "vocab.txt"
    weights: str = "weights.cofw"
    plain_weights: str = "plain-weights.cofw"


@dataclass(frozen=True)
class ModelSection:
    normalize: bool = False
    batch_size: int = 64


# Section name -> dataclass and the fields that the config does not own.
_SECTIONS: dict[str, tuple[type, tuple[str, ...]]] = {
    "encoder": (EncoderConfig, ("vocab_size",)),
    "train": (TrainConfig, ("seed",)),
    "chain": (ChainConfig, ()),
    "filter": (FilterSection, ()),
    "paths": (PathSection, ()),
    "model": (ModelSection, ()),
    "synthetic": (SyntheticCorpusSpec, ("seed",)),
}


def _fields(section: str) -> dict[str, tuple[Any, Any]]:
    """key -> (default, parser) for one section."""
    cls, skip = _SECTIONS[section]
    hints = typing.get_type_hints(cls)
    out = {}
    for f in dataclasses.fields(cls):
        if f.name in skip:
            continue
        parser = _SPECIAL.get((section, f.name))
        if parser is None:
            kind = hints[f.name]
            parser = {bool: _parse_bool, int: int, float: float, str: str}[kind]
        out[f.name] = (f.default, parser)
    return out


def default_values() -> dict[str, Any]:
    vals: dict[str, Any] = {"seed": 0}
    for section in _SECTIONS:
        for key, (default, _) in _fields(section).items():
            vals[f"{section}.{key}"] = default
    return vals


def _format(value: Any) -> str:
    if value is None:
        return "none"
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, frozenset):
        return ",".join(sorted(value))
    if isinstance(value, tuple):
        return ",".join(repr(v) for v in value)
    if isinstance(value, float):
        return repr(value)
    return str(value)


@dataclass
class RunConfig:
    values: dict[str, Any] = field(default_factory=default_values)

    # -- construction -----------------------------------------------------
    def set(self, key: str, text: str, where: str) -> None:
        if key == "seed":
            parser: Any = int
        else:
            section, _, name = key.partition(".")
            spec = _fields(section).get(name) if section in _SECTIONS else None
            if spec is None:
                raise ConfigError(f"{where}: unknown config key {key!r}")
            parser = spec[1]
        try:
            self.values[key] = parser(text)
        except ValueError as exc:
            raise ConfigError(f"{where}: bad value for {key!r}: {exc}") from None

    @classmethod
    def load(cls, path=None, environ: Mapping[str, str] | None = None) -> "RunConfig":
        cfg = cls()
        if path is not None:
            lines = Path(path).read_text(encoding="utf-8").splitlines()
            for n, raw in enumerate(lines, 1):
                line = raw.split("#", 1)[0].strip()
                if not line:
                    continue
                key, sep, value = line.partition("=")
                if not sep:
                    raise ConfigError(f"{path}:{n}: expected 'key = value'")
                cfg.set(key.strip(), value.strip(), f"{path}:{n}")
        env = os.environ if environ is None else environ
        for var in sorted(env):
            if var.startswith(ENV_PREFIX):
                key = var[len(ENV_PREFIX):].lower().replace("__", ".")
                cfg.set(key, env[var], f"environment variable {var}")
        cfg.validate()
        return cfg

    def validate(self) -> None:
        """Build every section object once so bad combinations fail early."""
        try:
            self.encoder_config(vocab_size=8)
            self.train_config()
            self.chain_config()
            self.profile_filters()
            self.synthetic_spec()
        except ValueError as exc:
            raise ConfigError(f"invalid configuration: {exc}") from None

    def to_text(self) -> str:
        return "".join(f"{k} = {_format(v)}\n" for k, v in sorted(self.values.items()))

    # -- typed views ------------------------------------------------------
    def section(self, name: str) -> dict[str, Any]:
        prefix = name + "."
        return {k[len(prefix):]: v for k, v in self.values.items() if k.startswith(prefix)}

    @property
    def seed(self) -> int:
        return self.values["seed"]

    def encoder_config(self, vocab_size: int) -> EncoderConfig:
        return EncoderConfig(vocab_size=vocab_size, **self.section("encoder"))

    def train_config(self) -> TrainConfig:
        vals = self.section("train")
        vals["adam_betas"] = tuple(vals["adam_betas"])
        if len(vals["adam_betas"]) != 2:
            raise ValueError("train.adam_betas needs two values")
        return TrainConfig(seed=self.seed, **vals)

    def chain_config(self) -> ChainConfig:
        return ChainConfig(**self.section("chain"))

    def profile_filters(self) -> ProfileFilters:
        f = self.section("filter")
        return ProfileFilters(f["years_back"], f["venues"], f["author_rank"])

    @property
    def reference_year(self) -> int | None:
        return self.values["filter.reference_year"]

    def synthetic_spec(self) -> SyntheticCorpusSpec:
        vals = self.section("synthetic")
        if len(vals["rating_thresholds"]) != 3:
            raise ValueError("synthetic.rating_thresholds needs three values")
        return SyntheticCorpusSpec(seed=self.seed, **vals)

    def path(self, name: str) -> Path:
        p = Path(self.values[f"paths.{name}"])
        return p if p.is_absolute() else Path(self.values["paths.workdir"]) / p

    @property
    def model(self) -> ModelSection:
        return ModelSection(**self.section("model"))
