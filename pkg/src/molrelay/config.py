"""Parameter schema, unit conventions and validation.

Canonical internal units are seconds, meters, mol and mol/L. Input documents
may declare kinetic rates in the customary per-minute units (``rate_units:
"per_minute"``, the default) and they are converted on load; serialization
always emits per-second rates so that a dump/load round trip is field-equal.

Config documents are JSON objects with the field names of
:class:`SystemConfig`. Example (the standard symmetric parameter set)::

    {
      "D1": 1e-9, "D2": 1e-9, "D3": 1e-9,
      "d1": 1e-4, "d2": 1e-4,
      "n1R": 250, "n2R": 250, "n3T1": 500, "n3T2": 500,
      "gamma1": 4e5, "gamma2": 4e5, "gamma3": 4e5,
      "eta1": 0.1, "eta2": 0.1, "eta3": 0.1,
      "blocking": "low",
      "zeta_T1": 1e-17, "zeta_T2": 1e-17, "zeta_R": 1e-17,
      "qT1R": 0, "qT2R": 0, "qRT1": 0, "qRT2": 0
    }

``blocking`` is either one of the named presets (``none``, ``low``, ``high``)
or an object giving the four blocking rates explicitly (same units as the
association/dissociation rates).
"""

from __future__ import annotations

import dataclasses
import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Mapping, Optional, TextIO, Union

L_PER_M3 = 1000.0
SECONDS_PER_MINUTE = 60.0

#: Named blocking presets: blocking/unblocking rates of relay receptor group 1
#: by molecule type 2 and vice versa, in (mol/L)^-1 min^-1 and min^-1.
BLOCKING_PROFILES: dict[str, Optional[dict[str, float]]] = {
    "none": None,
    "low": {
        "gamma1_block2": 3e5,
        "eta1_block2": 0.1,
        "gamma2_block1": 3e5,
        "eta2_block1": 0.1,
    },
    "high": {
        "gamma1_block2": 5e5,
        "eta1_block2": 0.01,
        "gamma2_block1": 5e5,
        "eta2_block1": 0.01,
    },
}

_BLOCK_RATE_KEYS = ("gamma1_block2", "eta1_block2", "gamma2_block1", "eta2_block1")

_REQUIRED_FIELDS = (
    "D1", "D2", "D3", "d1", "d2",
    "n1R", "n2R", "n3T1", "n3T2",
    "gamma1", "gamma2", "gamma3",
    "eta1", "eta2", "eta3",
)

_OPTIONAL_FLOAT_FIELDS = ("zeta_T1", "zeta_T2", "zeta_R", "c_SNC", "c_PNC", "t0", "ts")
_MEMORY_FIELDS = ("qT1R", "qT2R", "qRT1", "qRT2")


class ConfigError(ValueError):
    """A config document violated the schema or a physical bound."""

    def __init__(self, field_path: str, message: str):
        self.field_path = field_path
        super().__init__(f"{field_path}: {message}")


def unit_convert(release: float, gain: float) -> float:
    """Concentration (mol/L) produced by a release (mol) through a gain (m^-3)."""
    return release * gain / L_PER_M3


def release_for_concentration(concentration: float, gain: float) -> float:
    """Release (mol) that produces ``concentration`` (mol/L) through ``gain`` (m^-3)."""
    return concentration * L_PER_M3 / gain


@dataclass(frozen=True)
class SystemConfig:
    """Validated system parameters in canonical units.

    Rates ``gamma*``/``eta*`` (including blocking rates) are stored per
    (mol/L) per second and per second. Receptor counts are per group:
    ``n1R``/``n2R`` are the relay groups for molecule types 1 and 2,
    ``n3T1``/``n3T2`` the type-3 receptor counts on the transceivers.
    Channel memories ``q*`` are in slots; ``t0``/``ts`` are the sampling
    offset and slot duration in seconds (optional until timing is chosen).
    ``zeta_*`` are release budgets in mol; ``c_SNC``/``c_PNC`` the target
    relay-side concentrations in mol/L (optional until calibrated).
    """

    D1: float
    D2: float
    D3: float
    d1: float
    d2: float
    n1R: int
    n2R: int
    n3T1: int
    n3T2: int
    gamma1: float
    gamma2: float
    gamma3: float
    eta1: float
    eta2: float
    eta3: float
    blocking: str = "none"
    gamma1_block2: Optional[float] = None
    eta1_block2: Optional[float] = None
    gamma2_block1: Optional[float] = None
    eta2_block1: Optional[float] = None
    zeta_T1: Optional[float] = None
    zeta_T2: Optional[float] = None
    zeta_R: Optional[float] = None
    c_SNC: Optional[float] = None
    c_PNC: Optional[float] = None
    qT1R: int = 0
    qT2R: int = 0
    qRT1: int = 0
    qRT2: int = 0
    t0: Optional[float] = None
    ts: Optional[float] = None

    def __post_init__(self):
        self._validate()

    def _validate(self) -> None:
        for name in ("D1", "D2", "D3", "d1", "d2",
                     "gamma1", "gamma2", "gamma3", "eta1", "eta2", "eta3"):
            value = getattr(self, name)
            if not isinstance(value, (int, float)) or not math.isfinite(value):
                raise ConfigError(name, f"must be a finite number, got {value!r}")
            if value <= 0:
                raise ConfigError(name, f"must be strictly positive, got {value!r}")
        for name in ("n1R", "n2R", "n3T1", "n3T2"):
            value = getattr(self, name)
            if not isinstance(value, int) or isinstance(value, bool):
                raise ConfigError(name, f"must be an integer, got {value!r}")
            if value < 1:
                raise ConfigError(name, f"receptor count must be >= 1, got {value}")
        for name in _MEMORY_FIELDS:
            value = getattr(self, name)
            if not isinstance(value, int) or isinstance(value, bool) or value < 0:
                raise ConfigError(name, f"channel memory must be an integer >= 0, got {value!r}")
        for name in _OPTIONAL_FLOAT_FIELDS:
            value = getattr(self, name)
            if value is None:
                continue
            if not isinstance(value, (int, float)) or not math.isfinite(value):
                raise ConfigError(name, f"must be a finite number or null, got {value!r}")
            if value < 0:
                raise ConfigError(name, f"must be nonnegative, got {value!r}")
        if self.t0 is not None and self.t0 <= 0:
            raise ConfigError("t0", "sampling offset must be positive")
        if self.ts is not None and self.ts <= 0:
            raise ConfigError("ts", "slot duration must be positive")
        if self.t0 is not None and self.ts is not None and self.t0 > self.ts * (1 + 1e-12):
            raise ConfigError("t0", f"sampling offset {self.t0} exceeds slot duration {self.ts}")
        if self.blocking not in BLOCKING_PROFILES and self.blocking != "custom":
            raise ConfigError("blocking", f"unknown blocking profile {self.blocking!r}")
        block_rates = [getattr(self, k) for k in _BLOCK_RATE_KEYS]
        if self.blocking == "none":
            if any(r is not None for r in block_rates):
                raise ConfigError("blocking", "profile 'none' does not take blocking rates")
        else:
            for key, rate in zip(_BLOCK_RATE_KEYS, block_rates):
                if rate is None:
                    raise ConfigError(key, f"required for blocking profile {self.blocking!r}")
                if rate <= 0 or not math.isfinite(rate):
                    raise ConfigError(key, f"must be strictly positive, got {rate!r}")

    # -- derived constants ------------------------------------------------

    @property
    def kappa_d1(self) -> float:
        """Dissociation constant of relay receptor group 1 (mol/L)."""
        return self.eta1 / self.gamma1

    @property
    def kappa_d2(self) -> float:
        return self.eta2 / self.gamma2

    @property
    def kappa_d3(self) -> float:
        return self.eta3 / self.gamma3

    @property
    def kappa_block_12(self) -> Optional[float]:
        """Blocking dissociation constant of receptor group 1 by type-2 molecules."""
        if self.gamma1_block2 is None:
            return None
        return self.eta1_block2 / self.gamma1_block2

    @property
    def kappa_block_21(self) -> Optional[float]:
        if self.gamma2_block1 is None:
            return None
        return self.eta2_block1 / self.gamma2_block1

    @property
    def has_blocking(self) -> bool:
        return self.gamma1_block2 is not None

    def memories(self) -> dict[str, int]:
        return {"t1r": self.qT1R, "t2r": self.qT2R, "rt1": self.qRT1, "rt2": self.qRT2}

    # -- functional updates ------------------------------------------------

    def replace(self, **changes) -> "SystemConfig":
        """Return a copy with the given fields replaced (re-validated)."""
        return dataclasses.replace(self, **changes)

    def with_timing(self, t0: float, ts: float) -> "SystemConfig":
        return self.replace(t0=t0, ts=ts)

    def with_memory(self, q: int) -> "SystemConfig":
        """Set the same memory on all four links."""
        return self.replace(qT1R=q, qT2R=q, qRT1=q, qRT2=q)

    # -- serialization -----------------------------------------------------

    def to_dict(self) -> dict[str, Any]:
        doc = dataclasses.asdict(self)
        doc = {k: v for k, v in doc.items() if v is not None}
        if self.blocking == "none":
            for key in _BLOCK_RATE_KEYS:
                doc.pop(key, None)
        doc["rate_units"] = "per_second"
        return doc

    def dump(self, target: Union[str, Path, TextIO]) -> None:
        text = json.dumps(self.to_dict(), indent=2, sort_keys=True)
        if hasattr(target, "write"):
            target.write(text + "\n")
        else:
            Path(target).write_text(text + "\n")


def _coerce_number(name: str, value: Any, *, integer: bool = False) -> Any:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(name, f"expected a number, got {value!r}")
    if integer:
        if isinstance(value, float):
            if not value.is_integer():
                raise ConfigError(name, f"expected an integer, got {value!r}")
            return int(value)
        return int(value)
    return float(value)


def config_from_dict(doc: Mapping[str, Any]) -> SystemConfig:
    """Build a validated :class:`SystemConfig` from a plain mapping."""
    doc = dict(doc)
    rate_units = doc.pop("rate_units", "per_minute")
    if rate_units not in ("per_minute", "per_second"):
        raise ConfigError("rate_units", f"must be 'per_minute' or 'per_second', got {rate_units!r}")
    rate_scale = 1.0 / SECONDS_PER_MINUTE if rate_units == "per_minute" else 1.0

    known = {f.name for f in dataclasses.fields(SystemConfig)}
    unknown = sorted(set(doc) - known)
    if unknown:
        raise ConfigError(unknown[0], "unknown field")
    missing = [k for k in _REQUIRED_FIELDS if k not in doc]
    if missing:
        raise ConfigError(missing[0], "required field missing")

    kwargs: dict[str, Any] = {}
    for name in _REQUIRED_FIELDS:
        integer = name.startswith("n")
        kwargs[name] = _coerce_number(name, doc[name], integer=integer)
    for name in _MEMORY_FIELDS:
        if name in doc:
            kwargs[name] = _coerce_number(name, doc[name], integer=True)
    for name in _OPTIONAL_FLOAT_FIELDS:
        if doc.get(name) is not None:
            kwargs[name] = _coerce_number(name, doc[name])

    blocking = doc.get("blocking", "none")
    if isinstance(blocking, str):
        if blocking == "custom":
            missing_rates = [k for k in _BLOCK_RATE_KEYS if doc.get(k) is None]
            if missing_rates:
                raise ConfigError(missing_rates[0], "required for blocking profile 'custom'")
            kwargs["blocking"] = "custom"
        elif blocking in BLOCKING_PROFILES:
            rates = BLOCKING_PROFILES[blocking]
            kwargs["blocking"] = blocking
            if rates is not None:
                # preset constants are tabulated per minute regardless of the
                # document's rate_units declaration
                for key, value in rates.items():
                    kwargs[key] = value / SECONDS_PER_MINUTE
        else:
            raise ConfigError("blocking", f"unknown blocking profile {blocking!r}")
    elif isinstance(blocking, Mapping):
        missing_rates = [k for k in _BLOCK_RATE_KEYS if k not in blocking]
        if missing_rates:
            raise ConfigError(f"blocking.{missing_rates[0]}", "required blocking rate missing")
        kwargs["blocking"] = "custom"
        for key in _BLOCK_RATE_KEYS:
            kwargs[key] = _coerce_number(f"blocking.{key}", blocking[key]) * rate_scale
    else:
        raise ConfigError("blocking", f"expected a profile name or rate object, got {blocking!r}")

    # explicit blocking-rate fields override the preset values
    for key in _BLOCK_RATE_KEYS:
        if doc.get(key) is not None:
            kwargs[key] = _coerce_number(key, doc[key]) * rate_scale

    for name in ("gamma1", "gamma2", "gamma3", "eta1", "eta2", "eta3"):
        kwargs[name] = kwargs[name] * rate_scale

    return SystemConfig(**kwargs)


def load_config(source: Union[str, Path, TextIO, Mapping[str, Any]]) -> SystemConfig:
    """Load and validate a config from a mapping, a JSON file path or a file object."""
    if isinstance(source, Mapping):
        return config_from_dict(source)
    if hasattr(source, "read"):
        text = source.read()
    else:
        text = Path(source).read_text()
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError("<document>", f"not valid JSON: {exc}") from exc
    if not isinstance(doc, dict):
        raise ConfigError("<document>", "top-level value must be an object")
    return config_from_dict(doc)


def table_config(blocking: str = "none", **overrides) -> SystemConfig:
    """The standard symmetric parameter set used throughout the experiments.

    All diffusion coefficients 1e-9 m^2/s, both distances 100 um, 250 relay
    receptors per group, 500 type-3 receptors per transceiver, association
    4e5 (mol/L)^-1 min^-1 and dissociation 0.1 min^-1 for all three
    molecule types, with the chosen blocking profile.
    """
    doc: dict[str, Any] = {
        "D1": 1e-9, "D2": 1e-9, "D3": 1e-9,
        "d1": 100e-6, "d2": 100e-6,
        "n1R": 250, "n2R": 250,
        "n3T1": 500, "n3T2": 500,
        "gamma1": 4e5, "gamma2": 4e5, "gamma3": 4e5,
        "eta1": 0.1, "eta2": 0.1, "eta3": 0.1,
        "blocking": blocking,
    }
    doc.update(overrides)
    return config_from_dict(doc)


def parse_override(text: str) -> tuple[str, Any]:
    """Parse a ``field=value`` CLI override into a typed (name, value) pair."""
    if "=" not in text:
        raise ConfigError(text, "override must have the form field=value")
    name, raw = text.split("=", 1)
    name = name.strip()
    field_types = {f.name: f.type for f in dataclasses.fields(SystemConfig)}
    if name not in field_types:
        raise ConfigError(name, "unknown field")
    if name == "blocking":
        return name, raw.strip()
    raw = raw.strip()
    if raw.lower() in ("null", "none"):
        return name, None
    try:
        value = json.loads(raw)
    except json.JSONDecodeError:
        raise ConfigError(name, f"cannot parse value {raw!r}")
    if name.startswith(("n", "q")) and not name.startswith("ns"):
        return name, _coerce_number(name, value, integer=True)
    return name, _coerce_number(name, value)


def apply_overrides(cfg: SystemConfig, overrides: list[str]) -> SystemConfig:
    changes = dict(parse_override(text) for text in overrides)
    return cfg.replace(**changes)
