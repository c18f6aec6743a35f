"""Run configuration: flat INI-style sections of key = value lines.

Every key has a default, so an empty file is a valid full configuration.
Unknown sections or keys are rejected with the offending line number.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

from .data import PartitionSpec
from .federation import STRATEGIES, RoundConfig
from .imaging import CameraParams
from .mobility import MobilityParams
from .ssl import DtLossConfig, EncoderConfig, SgdConfig


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class DataConfig:
    source: str = "synthetic"      # synthetic | cifar10 | file
    classes: int = 10
    per_class: int = 200
    side: int = 16
    noise: float = 0.1
    seed: int = 0
    cifar_dir: str = ""
    file: str = ""

    def __post_init__(self):
        if self.source not in ("synthetic", "cifar10", "file"):
            raise ConfigError(f"unknown data source '{self.source}'")


@dataclass(frozen=True)
class ProbeSettings:
    k: int = 20
    train_size: int = 200
    test_size: int = 200

    def __post_init__(self):
        if self.k < 1 or self.k > self.train_size:
            raise ConfigError("probe k must satisfy 1 <= k <= train_size")


@dataclass(frozen=True)
class RunConfig:
    master_seed: int = 0
    seeds: tuple[int, ...] = (0,)
    strategies: tuple[str, ...] = ("flsimco",)
    output_dir: str = "runs/out"
    mobility: MobilityParams = field(default_factory=MobilityParams)
    camera: CameraParams = field(default_factory=CameraParams)
    encoder: EncoderConfig = field(default_factory=EncoderConfig)
    loss: DtLossConfig = field(default_factory=DtLossConfig)
    sgd: SgdConfig = field(default_factory=SgdConfig)
    partition: PartitionSpec = field(default_factory=PartitionSpec)
    rounds: RoundConfig = field(default_factory=RoundConfig)
    data: DataConfig = field(default_factory=DataConfig)
    probe: ProbeSettings = field(default_factory=ProbeSettings)
    fedco_tau: float = 0.1


def _parse_bool(raw: str) -> bool:
    low = raw.strip().lower()
    if low in ("true", "1", "yes", "on"):
        return True
    if low in ("false", "0", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {raw!r}")


def _parse_int_list(raw: str) -> tuple[int, ...]:
    return tuple(int(x.strip()) for x in raw.split(",") if x.strip())


def _parse_str_list(raw: str) -> tuple[str, ...]:
    return tuple(x.strip() for x in raw.split(",") if x.strip())


# (section, key) -> (target dataclass attribute path, value parser)
_SCHEMA: dict[tuple[str, str], tuple[str, object]] = {
    ("run", "master_seed"): ("master_seed", int),
    ("run", "seeds"): ("seeds", _parse_int_list),
    ("run", "strategies"): ("strategies", _parse_str_list),
    ("run", "output_dir"): ("output_dir", str),
    ("run", "fedco_tau"): ("fedco_tau", float),
    ("mobility", "mu"): ("mobility.mu", float),
    ("mobility", "sigma"): ("mobility.sigma", float),
    ("mobility", "v_min"): ("mobility.v_min", float),
    ("mobility", "v_max"): ("mobility.v_max", float),
    ("camera", "exposure_time"): ("camera.exposure_time", float),
    ("camera", "focal_length"): ("camera.focal_length", float),
    ("camera", "pixel_unit"): ("camera.pixel_unit", float),
    ("encoder", "side"): ("encoder.side", int),
    ("encoder", "channels"): ("encoder.channels", int),
    ("encoder", "hidden_widths"): ("encoder.hidden_widths", _parse_int_list),
    ("encoder", "embed_dim"): ("encoder.embed_dim", int),
    ("loss", "tau_alpha"): ("loss.tau_alpha", float),
    ("loss", "tau_beta"): ("loss.tau_beta", float),
    ("sgd", "lr0"): ("sgd.lr0", float),
    ("sgd", "momentum"): ("sgd.momentum", float),
    ("sgd", "weight_decay"): ("sgd.weight_decay", float),
    ("sgd", "lr_min_ratio"): ("sgd.lr_min_ratio", float),
    ("partition", "policy"): ("partition.policy", str),
    ("partition", "alpha"): ("partition.alpha", float),
    ("partition", "n_vehicles"): ("partition.n_vehicles", int),
    ("partition", "min_per_vehicle"): ("partition.min_per_vehicle", int),
    ("rounds", "max_rounds"): ("rounds.max_rounds", int),
    ("rounds", "vehicles_per_round"): ("rounds.vehicles_per_round", int),
    ("rounds", "local_epochs"): ("rounds.local_epochs", int),
    ("rounds", "batch_size"): ("rounds.batch_size", int),
    ("rounds", "discard_threshold_velocity"): ("rounds.discard_threshold_velocity", float),
    ("rounds", "fedco_queue_capacity"): ("rounds.fedco_queue_capacity", int),
    ("rounds", "fedco_batch"): ("rounds.fedco_batch", int),
    ("rounds", "fedco_momentum"): ("rounds.fedco_momentum", float),
    ("rounds", "eval_stride"): ("rounds.eval_stride", int),
    ("rounds", "flsimco_raw_weights"): ("rounds.flsimco_raw_weights", _parse_bool),
    ("rounds", "redraw_shards_each_round"): ("rounds.redraw_shards_each_round", _parse_bool),
    ("data", "source"): ("data.source", str),
    ("data", "classes"): ("data.classes", int),
    ("data", "per_class"): ("data.per_class", int),
    ("data", "side"): ("data.side", int),
    ("data", "noise"): ("data.noise", float),
    ("data", "seed"): ("data.seed", int),
    ("data", "cifar_dir"): ("data.cifar_dir", str),
    ("data", "file"): ("data.file", str),
    ("probe", "k"): ("probe.k", int),
    ("probe", "train_size"): ("probe.train_size", int),
    ("probe", "test_size"): ("probe.test_size", int),
}

_SECTIONS = sorted({section for section, _ in _SCHEMA})


def read_key_values(text: str) -> list[tuple[int, str, str, str]]:
    """(line number, section, key, raw value) entries from INI-style text."""
    entries = []
    section = ""
    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.strip()
        if not stripped or stripped.startswith(("#", ";")):
            continue
        if stripped.startswith("[") and stripped.endswith("]"):
            section = stripped[1:-1].strip().lower()
            if section not in _SECTIONS:
                raise ConfigError(f"unknown section '[{section}]' at line {lineno}")
            continue
        if "=" not in stripped:
            raise ConfigError(f"expected 'key = value' at line {lineno}: {stripped!r}")
        key, raw = stripped.split("=", 1)
        entries.append((lineno, section, key.strip().lower(), raw.strip()))
    return entries


def parse_config(path: str | Path) -> RunConfig:
    file = Path(path)
    if not file.exists():
        raise ConfigError(f"config file not found: {file}")
    return parse_config_text(file.read_text(encoding="utf-8"))


def parse_config_text(text: str) -> RunConfig:
    flat: dict[str, object] = {}
    for lineno, section, key, raw in read_key_values(text):
        spec = _SCHEMA.get((section, key))
        if spec is None:
            raise ConfigError(f"unknown key '{key}' in section '[{section}]' at line {lineno}")
        target, parser = spec
        try:
            flat[target] = parser(raw)  # type: ignore[operator]
        except (ValueError, TypeError) as exc:
            raise ConfigError(f"bad value for '{key}' at line {lineno}: {exc}") from exc
    return _build(flat)


def _build(flat: dict[str, object]) -> RunConfig:
    def group(prefix: str) -> dict[str, object]:
        return {t.split(".", 1)[1]: v for t, v in flat.items() if t.startswith(prefix + ".")}

    def build_section(name: str, factory, **extra):
        try:
            return factory(**extra, **group(name))
        except ConfigError:
            raise
        except (ValueError, TypeError) as exc:
            raise ConfigError(f"invalid [{name}] configuration: {exc}") from exc

    encoder_kv = group("encoder")
    side = int(encoder_kv.pop("side", 16))
    channels = int(encoder_kv.pop("channels", 3))
    try:
        encoder = EncoderConfig(input_shape=(side, side, channels), **encoder_kv)  # type: ignore[arg-type]
    except (ValueError, TypeError) as exc:
        raise ConfigError(f"invalid [encoder] configuration: {exc}") from exc
    try:
        cfg = RunConfig(
            mobility=build_section("mobility", MobilityParams),
            camera=build_section("camera", CameraParams),
            encoder=encoder,
            loss=build_section("loss", DtLossConfig),
            sgd=build_section("sgd", SgdConfig),
            partition=build_section("partition", PartitionSpec),
            rounds=build_section("rounds", RoundConfig),
            data=build_section("data", DataConfig),
            probe=build_section("probe", ProbeSettings),
            **{k: v for k, v in flat.items() if "." not in k},  # type: ignore[arg-type]
        )
    except ConfigError:
        raise
    except (ValueError, TypeError) as exc:
        raise ConfigError(str(exc)) from exc
    for s in cfg.strategies:
        if s not in STRATEGIES:
            raise ConfigError(f"unknown strategy '{s}', expected one of {STRATEGIES}")
    if not cfg.seeds:
        raise ConfigError("need at least one seed")
    return cfg


def serialize_config(cfg: RunConfig) -> str:
    """Canonical text form; parse(serialize(cfg)) equals cfg."""
    lines = []
    sections: dict[str, list[tuple[str, str]]] = {s: [] for s in _SECTIONS}
    for (section, key), (target, _) in sorted(_SCHEMA.items()):
        value = _lookup(cfg, target)
        sections[section].append((key, _format_value(value)))
    for section in _SECTIONS:
        lines.append(f"[{section}]")
        for key, value in sections[section]:
            lines.append(f"{key} = {value}")
        lines.append("")
    return "\n".join(lines)


def _lookup(cfg: RunConfig, target: str):
    if target == "encoder.side":
        return cfg.encoder.input_shape[0]
    if target == "encoder.channels":
        return cfg.encoder.input_shape[2]
    obj = cfg
    for part in target.split("."):
        obj = getattr(obj, part)
    return obj


def _format_value(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, (tuple, list)):
        return ", ".join(str(v) for v in value)
    if isinstance(value, float):
        return repr(value)
    return str(value)
