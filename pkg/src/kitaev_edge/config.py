"""Plain-text experiment configuration (INI sections, flat keys) and the named presets."""

from __future__ import annotations

import configparser
import io
from dataclasses import asdict, dataclass, field, fields, replace

from .hamiltonian import PRESETS, HamiltonianSpec

__all__ = ["ConfigError", "ExperimentConfig", "load_config", "parse_config", "preset_config", "PRESET_NAMES"]

PRESET_NAMES = tuple(PRESETS)


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class LatticeSection:
    rows: int = 2
    cols: int = 3


@dataclass(frozen=True)
class PrepSection:
    mode: str = "auto"          # auto | projected | product
    generalized: str = "auto"   # auto | true | false
    depth: int = 5
    restarts: int = 4
    seed: int = 0
    strategy: str = "two-stage"
    maxiter: int = 500


@dataclass(frozen=True)
class EvolutionSection:
    tau: float = 0.1
    n_steps: int = 9
    params: str = "analytic"    # analytic | t-junction
    reference_dt: float = 0.01
    scan: str = "0.2 0.1 0.05"  # timesteps compared by tau-scan


@dataclass(frozen=True)
class MeasurementSection:
    variant: str = "exact"      # exact | circuit-noiseless | sampled
    shots: int = 750
    postselect: bool = False
    p_err: str = "0"            # a probability, or "auto" for the 0.74 clean-shot rate
    seed: int = 0


@dataclass(frozen=True)
class EdgeSection:
    C: str = "auto"
    L: str = "auto"
    R: str = "auto"
    distance: int = 2


@dataclass(frozen=True)
class OutputSection:
    dir: str = "out"


_SECTIONS = {
    "lattice": LatticeSection,
    "spec": HamiltonianSpec,
    "prep": PrepSection,
    "evolution": EvolutionSection,
    "measurement": MeasurementSection,
    "edge": EdgeSection,
    "output": OutputSection,
}
_REQUIRED = {"lattice": ("rows", "cols"), "spec": ("K_x", "K_y", "K_z", "V", "h", "J")}
_CHOICES = {
    ("prep", "mode"): ("auto", "projected", "product"),
    ("prep", "generalized"): ("auto", "true", "false"),
    ("prep", "strategy"): ("two-stage", "joint"),
    ("evolution", "params"): ("analytic", "t-junction"),
    ("measurement", "variant"): ("exact", "circuit-noiseless", "sampled"),
}


@dataclass(frozen=True)
class ExperimentConfig:
    lattice: LatticeSection = field(default_factory=LatticeSection)
    spec: HamiltonianSpec = field(default_factory=HamiltonianSpec)
    prep: PrepSection = field(default_factory=PrepSection)
    evolution: EvolutionSection = field(default_factory=EvolutionSection)
    measurement: MeasurementSection = field(default_factory=MeasurementSection)
    edge: EdgeSection = field(default_factory=EdgeSection)
    output: OutputSection = field(default_factory=OutputSection)
    name: str = "custom"

    def with_section(self, section: str, **kw) -> ExperimentConfig:
        try:
            return replace(self, **{section: replace(getattr(self, section), **kw)})
        except TypeError as exc:
            raise ConfigError(str(exc)) from exc

    def to_text(self) -> str:
        cp = configparser.ConfigParser(interpolation=None)
        cp.optionxform = str
        cp["meta"] = {"name": self.name}
        for sec in _SECTIONS:
            cp[sec] = {k: _format(v) for k, v in asdict(getattr(self, sec)).items()}
        buf = io.StringIO()
        cp.write(buf)
        return buf.getvalue()

    def edge_override(self, key: str) -> int | None:
        v = getattr(self.edge, key)
        return None if v == "auto" else int(v)

    @property
    def p_err(self) -> float | None:
        """Per-gate error probability, or None when it is to be tuned."""
        return None if self.measurement.p_err == "auto" else float(self.measurement.p_err)


def _format(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return repr(v)
    return str(v)


def _convert(section: str, key: str, typ, raw: str):
    raw = raw.strip()
    try:
        if typ in (bool, "bool"):
            low = raw.lower()
            if low not in ("true", "false", "yes", "no", "1", "0"):
                raise ValueError(raw)
            return low in ("true", "yes", "1")
        if typ in (int, "int"):
            return int(raw)
        if typ in (float, "float"):
            return float(raw)
    except ValueError as exc:
        raise ConfigError(f"[{section}] {key}: cannot parse {raw!r} as {getattr(typ, '__name__', typ)}") from exc
    if (section, key) in _CHOICES and raw not in _CHOICES[(section, key)]:
        raise ConfigError(f"[{section}] {key} must be one of {', '.join(_CHOICES[(section, key)])}, got {raw!r}")
    return raw


def parse_config(text: str, base: ExperimentConfig | None = None) -> ExperimentConfig:
    """Parse configuration text; keys absent from the text keep the ``base`` values.

    Without a base every key of [lattice] and [spec] must be present.
    Unknown sections and keys are rejected.
    """
    cp = configparser.ConfigParser(interpolation=None)
    cp.optionxform = str
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(f"malformed configuration: {exc}") from exc
    cfg = base or ExperimentConfig()
    for sec in cp.sections():
        if sec == "meta":
            extra = set(cp[sec]) - {"name"}
            if extra:
                raise ConfigError(f"unknown key(s) in [meta]: {', '.join(sorted(extra))}")
            cfg = replace(cfg, name=cp[sec].get("name", cfg.name))
            continue
        if sec not in _SECTIONS:
            raise ConfigError(f"unknown section [{sec}]")
        types = {f.name: f.type for f in fields(_SECTIONS[sec])}
        unknown = set(cp[sec]) - set(types)
        if unknown:
            raise ConfigError(f"unknown key(s) in [{sec}]: {', '.join(sorted(unknown))}")
        values = {k: _convert(sec, k, types[k], v) for k, v in cp[sec].items()}
        try:
            cfg = replace(cfg, **{sec: replace(getattr(cfg, sec), **values)})
        except ValueError as exc:
            raise ConfigError(f"[{sec}] {exc}") from exc
    if base is None:
        for sec, keys in _REQUIRED.items():
            missing = [k for k in keys if not cp.has_option(sec, k)]
            if missing:
                raise ConfigError(f"missing key(s) in [{sec}]: {', '.join(missing)}")
    _validate(cfg)
    return cfg


def _validate(cfg: ExperimentConfig) -> None:
    if cfg.lattice.rows < 1 or cfg.lattice.cols < 1:
        raise ConfigError("lattice rows and cols must be positive")
    if cfg.prep.depth < 0 or cfg.prep.restarts < 1:
        raise ConfigError("prep depth must be >= 0 and restarts >= 1")
    if cfg.evolution.tau <= 0 or cfg.evolution.n_steps < 0:
        raise ConfigError("evolution tau must be positive and n_steps non-negative")
    if cfg.measurement.shots < 1:
        raise ConfigError("measurement shots must be positive")
    if cfg.measurement.p_err != "auto":
        try:
            p = float(cfg.measurement.p_err)
        except ValueError as exc:
            raise ConfigError(f"p_err must be a probability or 'auto', got {cfg.measurement.p_err!r}") from exc
        if not 0 <= p <= 1:
            raise ConfigError("p_err must lie in [0, 1]")
    for key in ("C", "L", "R"):
        v = getattr(cfg.edge, key)
        if v != "auto" and not v.lstrip("-").isdigit():
            raise ConfigError(f"[edge] {key} must be a site index or 'auto'")


def preset_config(name: str) -> ExperimentConfig:
    """Benchmark configuration: 2x3 cluster, the preset couplings, its depth and timestep."""
    if name not in PRESETS:
        raise ConfigError(f"unknown preset {name!r}; choose from {', '.join(PRESET_NAMES)}")
    spec = PRESETS[name]
    depth = {"non-abelian": 5, "abelian": 4}.get(name, 3)
    tau, steps = (0.1, 9) if spec.J == 0 else (0.15, 6)
    return ExperimentConfig(spec=spec, prep=PrepSection(depth=depth),
                            evolution=EvolutionSection(tau=tau, n_steps=steps), name=name)


def load_config(path=None, preset: str | None = None) -> ExperimentConfig:
    """Preset values overridden by the file, or the file alone (which must then be complete)."""
    base = preset_config(preset) if preset else None
    if path is None:
        if base is None:
            raise ConfigError("give a config file or a preset")
        return base
    try:
        text = open(path).read()
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc}") from exc
    return parse_config(text, base)
