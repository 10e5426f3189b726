"""Pipeline configuration stored as an INI file with every default written out."""

from __future__ import annotations

import configparser
import dataclasses
import io
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Tuple

from .errors import DataError
from .g2p import G2PConfig
from .pitch import PitchConfig
from .prosody import ProsodyConfig, TrainConfig
from .vocoder_bridge import MelConfig

ENV_VAR = "TTSFRONT_CONFIG"
DEFAULT_NAME = "ttsfront.ini"


@dataclass
class PathsConfig:
    manifest: str = "manifest.tsv"
    g2p_data: str = "g2p.tsv"
    work_dir: str = "work"
    pitch_dir: str = "work/pitch"
    mel_dir: str = "work/mel"
    embeddings_dir: str = ""
    checkpoint_dir: str = "work/checkpoints"
    output_dir: str = "work/out"


@dataclass
class RunConfig:
    seed: int = 0
    jobs: int = 1
    valid_fraction: float = 0.1


SECTIONS: Tuple[Tuple[str, type], ...] = (
    ("paths", PathsConfig),
    ("run", RunConfig),
    ("mel", MelConfig),
    ("pitch", PitchConfig),
    ("g2p", G2PConfig),
    ("prosody", ProsodyConfig),
    ("train", TrainConfig),
)


@dataclass
class PipelineConfig:
    paths: PathsConfig = field(default_factory=PathsConfig)
    run: RunConfig = field(default_factory=RunConfig)
    mel: MelConfig = field(default_factory=MelConfig)
    pitch: PitchConfig = field(default_factory=PitchConfig)
    g2p: G2PConfig = field(default_factory=G2PConfig)
    prosody: ProsodyConfig = field(default_factory=ProsodyConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    base_dir: Path = field(default=Path("."), compare=False)

    def path(self, key: str) -> Path:
        value = getattr(self.paths, key)
        p = Path(value)
        return p if p.is_absolute() else self.base_dir / p

    def check(self) -> None:
        if abs(self.pitch.hop_s * self.mel.sample_rate - self.mel.hop) > 1e-6:
            raise DataError(
                f"pitch hop {self.pitch.hop_s}s does not match mel hop {self.mel.hop} samples "
                f"at {self.mel.sample_rate} Hz"
            )


def _convert(raw: str, like, key: str):
    if isinstance(like, bool):
        low = raw.strip().lower()
        if low in ("1", "true", "yes", "on"):
            return True
        if low in ("0", "false", "no", "off"):
            return False
        raise DataError(f"{key}: not a boolean: {raw!r}")
    try:
        if isinstance(like, int):
            return int(raw)
        if isinstance(like, float):
            return float(raw)
    except ValueError:
        raise DataError(f"{key}: cannot parse {raw!r}") from None
    return raw


def _format(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    return repr(value) if isinstance(value, float) else str(value)


def build_config(values: Dict[str, Dict[str, str]], base_dir: Path = Path(".")) -> PipelineConfig:
    kwargs = {}
    for section, cls in SECTIONS:
        given = dict(values.get(section, {}))
        defaults = cls()
        fields = {}
        for f in dataclasses.fields(cls):
            if f.name in given:
                fields[f.name] = _convert(given.pop(f.name), getattr(defaults, f.name), f"{section}.{f.name}")
        if given:
            raise DataError(f"unknown keys in [{section}]: {sorted(given)}")
        try:
            kwargs[section] = cls(**fields)
        except ValueError as exc:
            raise DataError(f"[{section}]: {exc}") from None
    unknown = set(values) - {s for s, _ in SECTIONS}
    if unknown:
        raise DataError(f"unknown config sections: {sorted(unknown)}")
    cfg = PipelineConfig(**kwargs, base_dir=base_dir)
    cfg.check()
    return cfg


def config_text(cfg: PipelineConfig) -> str:
    parser = configparser.ConfigParser(interpolation=None)
    for section, _ in SECTIONS:
        obj = getattr(cfg, section)
        parser[section] = {f.name: _format(getattr(obj, f.name)) for f in dataclasses.fields(obj)}
    buf = io.StringIO()
    parser.write(buf)
    return buf.getvalue()


def parse_overrides(pairs: List[str]) -> Dict[str, Dict[str, str]]:
    out: Dict[str, Dict[str, str]] = {}
    for pair in pairs:
        if "=" not in pair or "." not in pair.split("=", 1)[0]:
            raise DataError(f"override must look like section.key=value: {pair!r}")
        key, value = pair.split("=", 1)
        section, name = key.split(".", 1)
        out.setdefault(section, {})[name] = value
    return out


def load_config(path) -> PipelineConfig:
    path = Path(path)
    parser = configparser.ConfigParser(interpolation=None)
    try:
        with open(path, encoding="utf-8") as fh:
            parser.read_file(fh)
    except FileNotFoundError as exc:
        raise DataError(f"missing config file: {path} (run `ttsfront init`)") from exc
    values = {s: dict(parser[s]) for s in parser.sections()}
    return build_config(values, path.parent)


def default_config_path() -> Path:
    return Path(os.environ.get(ENV_VAR, DEFAULT_NAME))
