"""Flat ``section.key = value`` scenario files.

Blank lines and lines starting with ``#`` are ignored.  Values are kept as
text and converted on access, so a missing or malformed key is reported with
its dotted path.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .errors import ConfigError, RangeError
from .model import ModelParams, make_params

REQUIRED = object()
_TRUE = {"1", "true", "yes", "on"}
_FALSE = {"0", "false", "no", "off"}


def parse_config(text: str) -> dict:
    out = {}
    for n, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ConfigError(f"line {n}", f"expected 'key = value', got {raw!r}")
        key, value = (s.strip() for s in line.split("=", 1))
        if not key or any(not part for part in key.split(".")):
            raise ConfigError(f"line {n}", f"malformed key {key!r}")
        if key in out:
            raise ConfigError(key, f"duplicate key (line {n})")
        out[key] = value
    return out


@dataclass
class ScenarioConfig:
    values: dict
    text: str = ""
    source: str = ""
    overrides: dict = field(default_factory=dict)

    @classmethod
    def from_text(cls, text: str, source: str = "") -> "ScenarioConfig":
        return cls(parse_config(text), text, source)

    @classmethod
    def from_file(cls, path) -> "ScenarioConfig":
        try:
            with open(path) as fh:
                text = fh.read()
        except OSError as exc:
            raise ConfigError("--config", f"cannot read {path}: {exc.strerror}") from exc
        return cls.from_text(text, str(path))

    # -- typed access ------------------------------------------------------
    def raw(self, key, default=REQUIRED):
        if key in self.overrides:
            return self.overrides[key]
        if key in self.values:
            return self.values[key]
        if default is REQUIRED:
            raise ConfigError(key, "missing required key")
        return default

    def has(self, key) -> bool:
        return key in self.overrides or key in self.values

    def _conv(self, key, default, fn, what):
        v = self.raw(key, default)
        if v is default and default is not REQUIRED:
            return v
        try:
            return fn(v)
        except (TypeError, ValueError):
            raise ConfigError(key, f"expected {what}, got {v!r}") from None

    def get_str(self, key, default=REQUIRED) -> str:
        return self._conv(key, default, str, "text")

    def get_float(self, key, default=REQUIRED) -> float:
        return self._conv(key, default, float, "a number")

    def get_int(self, key, default=REQUIRED) -> int:
        def conv(v):
            f = float(v)
            if not f.is_integer():
                raise ValueError
            return int(f)
        return self._conv(key, default, conv, "an integer")

    def get_bool(self, key, default=REQUIRED) -> bool:
        def conv(v):
            if isinstance(v, bool):
                return v
            s = str(v).lower()
            if s in _TRUE:
                return True
            if s in _FALSE:
                return False
            raise ValueError
        return self._conv(key, default, conv, "true/false")

    def get_list(self, key, conv=float, default=REQUIRED) -> list:
        def split(v):
            if isinstance(v, (list, tuple)):
                return [conv(x) for x in v]
            return [conv(x) for x in str(v).replace(";", ",").split(",") if x.strip()]
        return self._conv(key, default, split, "a comma-separated list")

    def positive_int(self, key, default=REQUIRED, minimum=1) -> int:
        v = self.get_int(key, default)
        if v < minimum:
            raise ConfigError(key, f"must be >= {minimum}, got {v}")
        return v

    # -- blocks -------------------------------------------------------------
    def model_params(self) -> ModelParams:
        vals = {k: self.get_float(f"model.{k}") for k in ("alpha", "beta", "rho", "gamma")}
        try:
            return make_params(**vals, allow_degenerate=self.get_bool("model.allow_degenerate", False))
        except RangeError as exc:
            raise ConfigError(f"model.{exc.field}", str(exc)) from None

    def master_seed(self) -> int:
        s = self.get_int("run.master_seed", 0)
        if s < 0:
            raise ConfigError("run.master_seed", "seed must be >= 0")
        return s

    def echo(self) -> dict:
        """Verbatim config text plus any command-line overrides."""
        return {"source": self.source, "text": self.text,
                "overrides": {k: str(v) for k, v in sorted(self.overrides.items())}}
