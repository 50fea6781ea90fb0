"""Run configuration: one experiment per flat INI file.

    [experiment]
    experiment = ber
    schemes = ar, tr
    N = 200
    beta = 0, 0.05, 0.1
    sigma_xi2 = 0.05, 0, 0.1
    snr_db = 0, 5, 10, 15, 20, 25, 30, 35, 40

``beta`` and ``sigma_xi2`` are zipped into (beta, sigma_xi2) pairs; a single
value is repeated. Precedence: command-line flag > INI value > environment
(UWBSIM_WORKERS) > default.
"""

import configparser
import logging
import math
import re
from dataclasses import dataclass, fields
from typing import Any, Dict, List, Optional, Tuple

from .channel import PRESETS, tap_count
from .errors import ConfigError, Diagnostic
from .signal_model import SystemConfig
from .trial_coordinator import default_workers

logger = logging.getLogger(__name__)

SECTION = "experiment"
SECTION_HEADER = re.compile(r"^\s*\[[^\]]+\]\s*$")
EXPERIMENTS = ("ber", "equivalence", "coupling", "mi", "estimation")
ESTIMATORS = ("zf", "rzf", "mmse", "mf")
MI_MODES = ("asymptotic", "finite")

DEFAULTS: Dict[str, Any] = {
    "experiment": "ber",
    "schemes": ["ar", "tr"],
    "preset": "cm1",
    "N": 200,
    "K": None,
    "beta": [0.0, 0.05, 0.1],
    "iota": 1,
    "chip_duration": None,
    "delay_spread": 50e-9,
    "bandwidth": 1e9,
    "snr_db": [0.0, 5.0, 10.0, 15.0, 20.0, 25.0, 30.0, 35.0, 40.0],
    "sigma_xi2": [0.05, 0.0, 0.1],
    "training_amplitude": None,
    "training_length": None,
    "trials": 10000,
    "seed": 0,
    "output": "results",
    "samples": 20000,
    "mi_mode": "asymptotic",
    "batch_size": 2000,
    "target_errors": 100,
    "estimator": "zf",
    "users": 1,
    "fixed_channel": False,
    "workers": None,
}

LIST_FIELDS = {"schemes": str, "beta": float, "snr_db": float, "sigma_xi2": float}
INT_FIELDS = {"N", "K", "iota", "training_length", "trials", "seed", "samples", "batch_size",
              "target_errors", "users", "workers"}
FLOAT_FIELDS = {"chip_duration", "delay_spread", "bandwidth", "training_amplitude"}
BOOL_FIELDS = {"fixed_channel"}


@dataclass
class RunConfig:
    experiment: str = DEFAULTS["experiment"]
    schemes: List[str] = None
    preset: str = DEFAULTS["preset"]
    N: int = DEFAULTS["N"]
    K: Optional[int] = None
    beta: List[float] = None
    iota: int = DEFAULTS["iota"]
    chip_duration: Optional[float] = None
    delay_spread: float = DEFAULTS["delay_spread"]
    bandwidth: float = DEFAULTS["bandwidth"]
    snr_db: List[float] = None
    sigma_xi2: Optional[List[float]] = None
    training_amplitude: Optional[float] = None
    training_length: Optional[int] = None
    trials: int = DEFAULTS["trials"]
    seed: int = DEFAULTS["seed"]
    output: str = DEFAULTS["output"]
    samples: int = DEFAULTS["samples"]
    mi_mode: str = DEFAULTS["mi_mode"]
    batch_size: int = DEFAULTS["batch_size"]
    target_errors: int = DEFAULTS["target_errors"]
    estimator: str = DEFAULTS["estimator"]
    users: int = DEFAULTS["users"]
    fixed_channel: bool = False
    workers: Optional[int] = None

    def __post_init__(self):
        for name in ("schemes", "beta", "snr_db"):
            if getattr(self, name) is None:
                setattr(self, name, list(DEFAULTS[name]))
        if self.sigma_xi2 is None and not self.uses_training:
            self.sigma_xi2 = list(DEFAULTS["sigma_xi2"])

    @property
    def uses_training(self) -> bool:
        return self.training_amplitude is not None or self.training_length is not None

    @property
    def resolved_bandwidth(self) -> float:
        """W, derived from T_c = iota / W when only the chip duration is given."""
        if self.chip_duration is not None and "bandwidth" not in self._explicit:
            return self.iota / self.chip_duration
        return self.bandwidth

    @property
    def _explicit(self) -> set:
        return getattr(self, "_explicit_keys", set())

    @property
    def register_length(self) -> Optional[int]:
        if self.training_length is None:
            return None
        m = int(round(math.log2(self.training_length + 1)))
        return m if 2 ** m - 1 == self.training_length else None

    def pairs(self) -> List[Tuple[float, float]]:
        """(beta, sigma_xi2) pairs; with a training budget sigma_xi2 follows the SNR (NaN here)."""
        betas = list(self.beta)
        if self.K is not None:
            betas = [self.K / self.N]
        sigmas = list(self.sigma_xi2) if self.sigma_xi2 is not None else [math.nan]
        if len(betas) == 1:
            betas = betas * len(sigmas)
        if len(sigmas) == 1:
            sigmas = sigmas * len(betas)
        return list(zip(betas, sigmas))

    def system_config(self, K: int = 1, csi_error_var: float = 0.0) -> SystemConfig:
        return SystemConfig.from_delay_spread(
            N=self.N, delay_spread=self.delay_spread, iota=self.iota,
            bandwidth=self.resolved_bandwidth, K=K, csi_error_var=csi_error_var,
        )

    def provenance(self) -> Dict[str, Any]:
        record = {}
        for f in fields(self):
            value = getattr(self, f.name)
            if value is None:
                continue
            record[f.name] = [_format(v) for v in value] if isinstance(value, list) else _format(value)
        return record


def _format(value: Any) -> Any:
    if isinstance(value, float):
        return repr(value)
    return value


def _convert(name: str, raw: str) -> Any:
    raw = raw.strip()
    if name in LIST_FIELDS:
        kind = LIST_FIELDS[name]
        return [kind(item.strip()) for item in raw.split(",") if item.strip()]
    if raw.lower() in ("", "none"):
        return None
    if name in INT_FIELDS:
        value = float(raw)
        if not value.is_integer():
            raise ValueError(f"expected an integer, got {raw}")
        return int(value)
    if name in FLOAT_FIELDS:
        return float(raw)
    if name in BOOL_FIELDS:
        lowered = raw.lower()
        if lowered not in ("true", "false", "yes", "no", "1", "0"):
            raise ValueError(f"expected a boolean, got {raw}")
        return lowered in ("true", "yes", "1")
    return raw


def _line_numbers(lines_of_text: List[str]) -> Dict[str, int]:
    numbers = {}
    for number, line in enumerate(lines_of_text, start=1):
        key, sep, _ = line.partition("=")
        if sep and key.strip() and not key.strip().startswith(("[", ";")):
            numbers.setdefault(key.strip().lower(), number)
    return numbers


def _config_lines(text: str) -> List[str]:
    """INI lines as written, or the de-commented provenance header of a result CSV."""
    lines = text.splitlines()
    if any(SECTION_HEADER.match(line) for line in lines):
        return [line if not line.lstrip().startswith("#") else "" for line in lines]
    header = [line[1:].strip() if line.startswith("#") else "" for line in lines]
    if any(h.strip() for h in header):
        return header
    return lines


def parse_config_text(text: str) -> Tuple[RunConfig, List[Diagnostic]]:
    """Parse INI text, or the '# key = value' header of a result CSV."""
    field_names = {f.name.lower(): f.name for f in fields(RunConfig)}
    config_lines = _config_lines(text)
    lines = _line_numbers(config_lines)
    diagnostics: List[Diagnostic] = []

    body = "\n".join(config_lines)
    if not any(SECTION_HEADER.match(line) for line in config_lines):
        body = f"[{SECTION}]\n{body}"
    parser = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=(";",))
    try:
        parser.read_string(body)
    except configparser.Error as e:
        raise ConfigError("cannot parse configuration",
                          [Diagnostic("fatal", "config", str(e).splitlines()[0])]) from None
    if not parser.has_section(SECTION):
        raise ConfigError("cannot parse configuration",
                          [Diagnostic("fatal", "config", f"missing [{SECTION}] section")])

    values: Dict[str, Any] = {}
    for key, raw in parser.items(SECTION):
        line = lines.get(key)
        name = field_names.get(key)
        if name is None:
            if key not in ("config_digest", "written_at"):
                diagnostics.append(Diagnostic("warning", key, "unknown key ignored", line))
            continue
        try:
            values[name] = _convert(name, raw)
        except ValueError as e:
            diagnostics.append(Diagnostic("fatal", name, f"cannot parse '{raw}': {e}", line))

    config = RunConfig(**values)
    config._explicit_keys = set(values)
    config._lines = {field_names[k]: v for k, v in lines.items() if k in field_names}
    return config, diagnostics


def load_config(path: str) -> Tuple[RunConfig, List[Diagnostic]]:
    with open(path, "r", encoding="utf-8") as f:
        text = f.read()
    config, diagnostics = parse_config_text(text)
    logger.info(f"Loaded configuration {path}: experiment={config.experiment}")
    return config, diagnostics


def apply_overrides(config: RunConfig, seed: Optional[int] = None, workers: Optional[int] = None,
                    output: Optional[str] = None) -> RunConfig:
    if seed is not None:
        config.seed = seed
    if output is not None:
        config.output = output
    if workers is not None:
        config.workers = workers
    elif config.workers is None:
        config.workers = default_workers()
    return config


def validate(config: RunConfig) -> List[Diagnostic]:
    """Every problem found, fatal or not."""
    found: List[Diagnostic] = []
    lines = getattr(config, "_lines", {})

    def report(level: str, key: str, message: str):
        found.append(Diagnostic(level, key, message, lines.get(key)))

    if config.experiment not in EXPERIMENTS:
        report("fatal", "experiment", f"unknown experiment '{config.experiment}'; "
                                      f"expected one of {', '.join(EXPERIMENTS)}")
    for scheme in config.schemes:
        if scheme.strip().lower() not in ("ar", "tr"):
            report("fatal", "schemes", f"unknown scheme '{scheme}'")
    if not config.schemes:
        report("fatal", "schemes", "at least one scheme is required")
    if config.preset.strip().lower() not in PRESETS:
        report("fatal", "preset", f"unknown channel preset '{config.preset}'")
    if config.iota < 1:
        report("fatal", "iota", f"impulsiveness index must be >= 1, got {config.iota}")
    if config.N < 1:
        report("fatal", "N", f"N must be >= 1, got {config.N}")
    if config.bandwidth <= 0:
        report("fatal", "bandwidth", "bandwidth must be positive")
    if config.delay_spread < 0:
        report("fatal", "delay_spread", "delay spread must be >= 0")
    if config.chip_duration is not None:
        if config.chip_duration <= 0:
            report("fatal", "chip_duration", "chip duration must be positive")
        elif "bandwidth" in config._explicit and config.iota >= 1:
            if not math.isclose(config.chip_duration * config.bandwidth, config.iota, rel_tol=1e-9):
                report("fatal", "chip_duration",
                       f"T_c * W = {config.chip_duration * config.bandwidth:g} but iota = {config.iota}")

    if config.K is not None:
        if config.K < 1:
            report("fatal", "K", f"K must be >= 1, got {config.K}")
        if "beta" in config._explicit and config.N >= 1:
            if len(config.beta) != 1 or round(config.beta[0] * config.N) != config.K:
                report("fatal", "beta", f"beta = {config.beta} inconsistent with K/N = {config.K}/{config.N}")
    for beta in config.beta:
        if beta < 0:
            report("fatal", "beta", f"load must be >= 0, got {beta}")
    load = max(([config.K / config.N] if config.K and config.N >= 1 else []) + list(config.beta) + [0.0])
    if load > 1:
        report("warning", "beta", f"beta>1 unusual (beta = {load:g})")

    if config.sigma_xi2 is not None and config.uses_training:
        report("fatal", "sigma_xi2", "give either sigma_xi2 or a training budget "
                                     "(training_amplitude, training_length), not both")
    if config.uses_training:
        if config.training_amplitude is None or config.training_amplitude <= 0:
            report("fatal", "training_amplitude", "training budget needs a positive amplitude")
        if config.training_length is None or config.register_length is None:
            report("fatal", "training_length", "training length must be 2^m - 1 for m in 2..20")
        elif not 2 <= config.register_length <= 20:
            report("fatal", "training_length", "training length must be 2^m - 1 for m in 2..20")
        elif config.users > config.training_length:
            report("fatal", "users", f"{config.users} users need distinct shifts of a "
                                     f"length-{config.training_length} training sequence")
    if config.sigma_xi2 is not None:
        if any(s < 0 for s in config.sigma_xi2):
            report("fatal", "sigma_xi2", "estimation error variances must be >= 0")
        if len(config.sigma_xi2) > 1 and len(config.beta) > 1 and config.K is None \
                and len(config.sigma_xi2) != len(config.beta):
            report("fatal", "sigma_xi2", f"{len(config.beta)} beta values but "
                                         f"{len(config.sigma_xi2)} sigma_xi2 values")

    if not config.snr_db:
        report("fatal", "snr_db", "the SNR grid is empty")
    elif not all(math.isfinite(s) for s in config.snr_db):
        report("fatal", "snr_db", "SNR values must be finite")
    for name in ("trials", "batch_size", "users"):
        if getattr(config, name) < 1:
            report("fatal", name, f"{name} must be >= 1")
    if config.target_errors < 0:
        report("fatal", "target_errors", "target_errors must be >= 0")
    if config.samples < 1:
        report("fatal", "samples", "samples must be >= 1")
    elif config.experiment in ("coupling", "mi") and config.samples < 10_000:
        report("warning", "samples", f"{config.samples} coupling samples; histograms will be noisy")
    if config.mi_mode not in MI_MODES:
        report("fatal", "mi_mode", f"unknown mode '{config.mi_mode}'; expected asymptotic or finite")
    if config.estimator.strip().lower() not in ESTIMATORS:
        report("fatal", "estimator", f"unknown estimator '{config.estimator}'")
    if config.workers is not None and config.workers < 1:
        report("fatal", "workers", "workers must be >= 1")

    if config.experiment == "estimation" and not config.uses_training:
        report("fatal", "training_length", "the estimation experiment needs a training budget")
    if config.experiment == "equivalence" and (config.K not in (None, 1)
                                               or ("beta" in config._explicit and any(config.beta))):
        report("warning", "beta", "the equivalence test always runs a single user")
    if config.experiment == "mi" and config.uses_training:
        report("fatal", "sigma_xi2", "the mi experiment needs explicit sigma_xi2 values")
    if config.iota >= 1 and config.bandwidth > 0 and config.delay_spread >= 0 and config.N >= 1:
        L = (tap_count(config.resolved_bandwidth, config.delay_spread) - 1) // config.iota
        if config.N < 2 * L:
            report("warning", "N", f"N={config.N} < 2L={2 * L}; border effects will be significant")
        if config.experiment == "estimation" and config.register_length and config.estimator == "zf":
            rows = (config.training_length + L) * config.iota
            if rows < config.users * (L * config.iota + 1):
                report("fatal", "users", "training rank-deficient for ZF; use rzf or a longer sequence")
    return found


def require_valid(config: RunConfig, diagnostics: Optional[List[Diagnostic]] = None) -> List[Diagnostic]:
    """Raise ConfigError when any fatal diagnostic exists; log and return the warnings."""
    found = list(diagnostics or []) + validate(config)
    for d in found:
        if not d.is_fatal:
            logger.warning(str(d))
    if any(d.is_fatal for d in found):
        raise ConfigError("invalid configuration", [d for d in found if d.is_fatal])
    return found
