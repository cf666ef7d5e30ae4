"""Protocol configuration: a flat ``key = value`` file plus path overrides from the environment."""

from __future__ import annotations

import configparser
import os
from dataclasses import dataclass, fields
from pathlib import Path

from .exceptions import FileFormatError
from .identity import derive_salt

ENV_PREFIX = "YAHTZEE_"
PATH_FIELDS = ("registry_csv", "registry_dir", "platform_csv", "platform_dir", "shared_dir")


@dataclass
class ProtocolConfig:
    master_seed: int
    g: int = 5
    n_registry: int | None = None
    turnout_p: float | None = None
    match_rate: float | None = None
    target_accuracy: float = 0.95
    m1: int | None = None
    m2: int | None = None
    estimation_salt: str | None = None
    match_sample_size: int = 1000
    rng_seed: int = 0
    replicates: int = 3
    sim_n: int = 100_000
    max_draws: int = 500
    registry_csv: Path | None = None
    registry_dir: Path = Path("registry")
    platform_csv: Path | None = None
    platform_dir: Path = Path("platform")
    shared_dir: Path = Path("shared")

    def __post_init__(self):
        if self.m1 is not None and self.m1 < 1:
            raise ValueError(f"m1 must be >= 1, got {self.m1}")
        if self.m2 is not None and self.m2 < 0:
            raise ValueError(f"m2 must be >= 0, got {self.m2}")
        if self.g < 2:
            raise ValueError(f"g must be >= 2, got {self.g}")

    @property
    def estimation_salt_bytes(self) -> bytes:
        if self.estimation_salt:
            return self.estimation_salt.encode("utf-8")
        return derive_salt(self.master_seed, "match-rate")

    # shared artifacts
    @property
    def tables_dir(self) -> Path:
        return self.shared_dir / "tables"

    def table_path(self, round_index: int) -> Path:
        return self.tables_dir / f"round_{round_index:06d}.csv"

    @property
    def registry_summary_path(self) -> Path:
        return self.shared_dir / "registry_summary.json"

    @property
    def estimation_hashes_path(self) -> Path:
        return self.shared_dir / "estimation_hashes.txt"

    @property
    def match_rate_path(self) -> Path:
        return self.shared_dir / "match_rate.json"

    # registry-private
    @property
    def registry_clean_path(self) -> Path:
        return self.registry_dir / "registry_clean.csv"

    # platform-private
    @property
    def platform_clean_path(self) -> Path:
        return self.platform_dir / "platform_clean.csv"

    @property
    def platform_summary_path(self) -> Path:
        return self.platform_dir / "platform_summary.json"

    @property
    def store_path(self) -> Path:
        return self.platform_dir / "draws.csv"

    @property
    def rounds_path(self) -> Path:
        return self.platform_dir / "rounds.csv"

    @property
    def calibration_path(self) -> Path:
        return self.platform_dir / "calibration.json"

    @property
    def classification_path(self) -> Path:
        return self.platform_dir / "classifications.csv"


def _convert(field_type: str, raw: str):
    raw = raw.strip()
    optional = "None" in field_type
    if optional and raw.lower() in ("", "none"):
        return None
    if field_type.startswith("int"):
        return int(raw)
    if field_type.startswith("float"):
        return float(raw)
    if field_type.startswith("Path"):
        return Path(raw)
    return raw


def parse_config(text: str, base_dir: Path | None = None, environ=None) -> ProtocolConfig:
    """Parse ``key = value`` lines; relative paths resolve against ``base_dir``."""
    parser = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#", ";"))
    try:
        parser.read_string("[protocol]\n" + text)
    except configparser.Error as exc:
        raise FileFormatError(f"bad config file: {exc}") from None
    raw = dict(parser["protocol"])
    environ = os.environ if environ is None else environ
    for key in PATH_FIELDS:
        if ENV_PREFIX + key.upper() in environ:
            raw[key] = environ[ENV_PREFIX + key.upper()]

    types = {f.name: str(f.type) for f in fields(ProtocolConfig)}
    unknown = set(raw) - set(types)
    if unknown:
        raise FileFormatError(f"unknown config keys: {', '.join(sorted(unknown))}")
    if "master_seed" not in raw:
        raise FileFormatError("config must set master_seed")
    try:
        values = {k: _convert(types[k], v) for k, v in raw.items()}
        cfg = ProtocolConfig(**values)
    except ValueError as exc:
        raise FileFormatError(f"bad config value: {exc}") from None
    if base_dir is not None:
        for key in PATH_FIELDS:
            p = getattr(cfg, key)
            if p is not None and not p.is_absolute():
                setattr(cfg, key, base_dir / p)
    return cfg


def load_config(path, environ=None) -> ProtocolConfig:
    path = Path(path)
    return parse_config(path.read_text(encoding="utf-8"), path.parent, environ)


def format_config(cfg: ProtocolConfig) -> str:
    lines = []
    for f in fields(cfg):
        value = getattr(cfg, f.name)
        if value is not None and value != f.default:
            lines.append(f"{f.name} = {value}")
        elif f.name == "master_seed":
            lines.append(f"{f.name} = {value}")
    return "\n".join(lines) + "\n"
