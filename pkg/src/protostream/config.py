"""Run configuration: a sectioned key-value file with embedded defaults.

Every key is typed and validated at parse time; unknown sections or keys are
rejected with the offending name. ``render_config`` prints the resolved
configuration in the same format it is read from.
"""

from __future__ import annotations

import configparser
import hashlib
import io
from dataclasses import dataclass, field, fields
from pathlib import Path

import numpy as np

from protostream.clustering import ClusterConfig
from protostream.danet import DanetConfig
from protostream.datagen import ConfigError, DomainSpec, StreamConfig
from protostream.objectives import Hyperparams


@dataclass
class StreamSettings:
    """Scalar knobs from which the per-domain specs are derived."""

    seen_domains: int = 5
    unseen_domains: int = 2
    identities_per_domain: int = 40
    min_samples_per_identity: int = 16
    max_samples_per_identity: int = 24
    channels: int = 4
    positions: int = 16
    label_rate: float = 0.1
    style_mean_spread: float = 2.5
    style_std_low: float = 0.6
    style_std_high: float = 1.6
    noise_std: float = 0.0  # 0 -> automatic (noise_scale x inter-identity spacing)
    noise_scale: float = 0.5


@dataclass
class TrainerSettings:
    encoder_hidden: int = 64
    encoder_dim: int = 32
    structure_on_labeled_only: bool = False
    use_danet: bool = True
    debug_dump: bool = False


@dataclass
class EvalSettings:
    dump_features: bool = False


@dataclass
class RunConfig:
    stream: StreamSettings = field(default_factory=StreamSettings)
    hyperparams: Hyperparams = field(default_factory=Hyperparams)
    clustering: ClusterConfig = field(default_factory=ClusterConfig)
    danet: DanetConfig = field(default_factory=DanetConfig)
    trainer: TrainerSettings = field(default_factory=TrainerSettings)
    eval: EvalSettings = field(default_factory=EvalSettings)
    seed: int = 0
    out_dir: str = "runs"

    def sections(self) -> dict[str, object]:
        return {
            "stream": self.stream,
            "hyperparams": self.hyperparams,
            "clustering": self.clustering,
            "danet": self.danet,
            "trainer": self.trainer,
            "eval": self.eval,
            "run": _RunSection(self.seed, self.out_dir),
        }


@dataclass
class _RunSection:
    seed: int = 0
    out_dir: str = "runs"


def _coerce(section: str, key: str, raw: str, kind: type):
    try:
        if kind is bool:
            lowered = raw.strip().lower()
            if lowered in ("true", "1", "yes", "on"):
                return True
            if lowered in ("false", "0", "no", "off"):
                return False
            raise ValueError(raw)
        if kind is int:
            return int(raw)
        if kind is float:
            return float(raw)
        if kind is str:
            return raw.strip()
    except ValueError:
        raise ConfigError(f"[{section}] {key}: cannot parse {raw!r} as {kind.__name__}") from None
    raise ConfigError(f"[{section}] {key}: unsupported option type {kind}")


def parse_config(path: str | Path | None = None, overrides: dict[str, dict[str, str]] | None = None) -> RunConfig:
    """Load a config file over the defaults; ``overrides`` applies last."""
    cfg = RunConfig()
    sections = cfg.sections()
    parser = configparser.ConfigParser()
    if path is not None:
        path = Path(path)
        if not path.exists():
            raise ConfigError(f"config file not found: {path}")
        try:
            parser.read_string(path.read_text(), source=str(path))
        except configparser.Error as exc:
            raise ConfigError(f"config parse failure in {path}: {exc}") from None
    raw_updates: dict[str, dict[str, str]] = {s: dict(parser[s]) for s in parser.sections()}
    for sec, kv in (overrides or {}).items():
        raw_updates.setdefault(sec, {}).update(kv)

    for sec_name, kv in raw_updates.items():
        if sec_name not in sections:
            raise ConfigError(f"unknown config section [{sec_name}]")
        target = sections[sec_name]
        known = {f.name: f.type for f in fields(target)}
        for key, raw in kv.items():
            if key not in known:
                raise ConfigError(f"unknown config key [{sec_name}] {key}")
            current = getattr(target, key)
            setattr(target, key, _coerce(sec_name, key, raw, type(current)))

    run = sections["run"]
    cfg.seed = run.seed  # type: ignore[union-attr]
    cfg.out_dir = run.out_dir  # type: ignore[union-attr]
    validate_config(cfg)
    return cfg


def validate_config(cfg: RunConfig) -> None:
    s = cfg.stream
    if s.seen_domains < 1:
        raise ConfigError("[stream] seen_domains: must be >= 1")
    if s.unseen_domains < 0:
        raise ConfigError("[stream] unseen_domains: must be >= 0")
    if s.identities_per_domain < 2:
        raise ConfigError("[stream] identities_per_domain: must be >= 2")
    if not 2 <= s.min_samples_per_identity <= s.max_samples_per_identity:
        raise ConfigError("[stream] samples_per_identity: need 2 <= min <= max")
    if not 0.0 < s.label_rate <= 1.0:
        raise ConfigError("[stream] label_rate: must lie in (0, 1]")
    if s.channels < 1 or s.positions < 2:
        raise ConfigError("[stream] feature grid: need channels >= 1, positions >= 2")
    if s.style_std_low <= 0 or s.style_std_high < s.style_std_low:
        raise ConfigError("[stream] style_std range: need 0 < low <= high")
    if s.noise_std < 0:
        raise ConfigError("[stream] noise_std: must be >= 0 (0 = automatic)")
    if s.noise_scale <= 0:
        raise ConfigError("[stream] noise_scale: must be positive")
    try:
        cfg.hyperparams.validate()
    except ValueError as exc:
        raise ConfigError(f"[hyperparams] {exc}") from None
    c = cfg.clustering
    if c.metric not in ("cosine", "euclidean"):
        raise ConfigError("[clustering] metric: must be cosine or euclidean")
    if c.eps <= 0 or c.min_pts < 1:
        raise ConfigError("[clustering] eps/min_pts: need eps > 0 and min_pts >= 1")
    d = cfg.danet
    if d.epochs < 0 or d.lr <= 0 or d.batch_size < 1 or d.bottleneck < 0:
        raise ConfigError("[danet] invalid training settings")
    t = cfg.trainer
    if t.encoder_hidden < 1 or t.encoder_dim < 1:
        raise ConfigError("[trainer] encoder dims must be positive")


def build_stream_config(cfg: RunConfig) -> StreamConfig:
    """Materialize per-domain style specs from the scalar stream settings."""
    s = cfg.stream
    style_rng = np.random.default_rng(np.random.SeedSequence([cfg.seed, 0xD07A1]))
    specs = []
    for _ in range(s.seen_domains + s.unseen_domains):
        specs.append(
            DomainSpec(
                channel_means=style_rng.uniform(-s.style_mean_spread, s.style_mean_spread, size=s.channels),
                channel_stds=style_rng.uniform(s.style_std_low, s.style_std_high, size=s.channels),
                identity_count=s.identities_per_domain,
                samples_per_identity=(s.min_samples_per_identity, s.max_samples_per_identity),
                noise_std=s.noise_std if s.noise_std > 0 else None,
                noise_scale=s.noise_scale,
            )
        )
    return StreamConfig(
        seen_domains=specs[: s.seen_domains],
        unseen_domains=specs[s.seen_domains :],
        label_rate=s.label_rate,
        seed=cfg.seed,
        feature_grid=(s.channels, s.positions),
    )


def render_config(cfg: RunConfig) -> str:
    """The resolved configuration as parseable INI text."""
    buf = io.StringIO()
    for sec_name, target in cfg.sections().items():
        buf.write(f"[{sec_name}]\n")
        for f in fields(target):
            value = getattr(target, f.name)
            if isinstance(value, bool):
                value = "true" if value else "false"
            buf.write(f"{f.name} = {value}\n")
        buf.write("\n")
    return buf.getvalue()


def config_hash(cfg: RunConfig) -> str:
    return hashlib.sha256(render_config(cfg).encode()).hexdigest()
