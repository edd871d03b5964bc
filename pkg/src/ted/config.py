"""Flat ``key=value`` run configuration with dotted sections.

Lines look like ``dcl.samples=50000``; ``#`` starts a comment.  Every key
has a default, unknown keys are rejected by name, and the resolved
configuration can be written back out as a snapshot that parses to the
same values.
"""
from __future__ import annotations

from dataclasses import dataclass, field, fields, replace

from .evaluation import EvalConfig
from .nn import TrainConfig
from .params import SpaceBounds
from .superdcl import DclConfig


class ConfigError(ValueError):
    pass


def _bool(text):
    t = text.strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _ints(text):
    return tuple(int(t) for t in text.replace(" ", "").split(",") if t)


# extra keys that are not fields of the library config classes: name -> (parser, default)
EXTRA = {
    "seed": (int, None),
    "workers": (int, 1),
    "out": (str, "runs/default"),
    "eval.policy": (str, "all"),          # neural | pi0 | bsp | cbsp | all
    "eval.weights": (str, ""),
    "eval.case": (int, 1),
    "eval.instances": (str, ""),          # record file; overrides eval.case
    "eval.limit": (int, 0),               # first n instances, 0 = all
    "ted.horizons": (_ints, (200, 500, 1000, 2000)),
    "ted.demand_known": (_bool, False),
    "ted.lead_known": (_bool, True),
    "ted.weights": (str, ""),
    "ted.case": (int, 1),
    "ted.instances": (str, ""),
    "ted.limit": (int, 0),
    "ted.runs": (int, 20),
    "oracle.trials": (int, 100),
    "oracle.tiny": (int, 10),
    "oracle.horizon": (int, 20),
    "oracle.runs": (int, 100),
    "oracle.flip_distance": (_bool, False),  # test hook: negate d_P so the bound must fail
    "testbed.case": (int, 0),           # 0 = every case
}

SECTIONS = {"bounds": SpaceBounds, "dcl": DclConfig, "train": TrainConfig, "eval": EvalConfig}
SKIP = {("dcl", "workers"), ("dcl", "parallel"), ("train", "seed"), ("eval", "seed")}


def _parser_for(cls, name):
    default = next(f.default for f in fields(cls) if f.name == name)
    if isinstance(default, bool):
        return _bool
    if isinstance(default, tuple):
        return _ints
    return type(default)


def known_keys():
    keys = dict(EXTRA)
    for sec, cls in SECTIONS.items():
        for f in fields(cls):
            if (sec, f.name) not in SKIP:
                keys[f"{sec}.{f.name}"] = (_parser_for(cls, f.name), f.default)
    return keys


@dataclass
class RunConfig:
    command: str = ""
    values: dict = field(default_factory=dict)

    def __getitem__(self, key):
        return self.values[key]

    @property
    def seed(self):
        return self.values["seed"]

    def _section(self, sec):
        cls = SECTIONS[sec]
        kw = {f.name: self.values[f"{sec}.{f.name}"] for f in fields(cls) if (sec, f.name) not in SKIP}
        return cls(**kw)

    @property
    def bounds(self) -> SpaceBounds:
        return self._section("bounds")

    @property
    def dcl(self) -> DclConfig:
        w = self.values["workers"]
        return replace(self._section("dcl"), workers=w, parallel=w > 1)

    @property
    def train(self) -> TrainConfig:
        return self._section("train")

    @property
    def eval(self) -> EvalConfig:
        return replace(self._section("eval"), seed=self.seed if self.seed is not None else 0)

    def require_seed(self):
        if self.values["seed"] is None:
            raise ConfigError(f"'{self.command}' needs a seed (config key 'seed' or --seed)")

    def snapshot(self) -> str:
        lines = []
        for key in sorted(self.values):
            v = self.values[key]
            if v is None:
                continue
            if isinstance(v, tuple):
                v = ",".join(str(x) for x in v)
            elif isinstance(v, float):
                v = repr(v)
            lines.append(f"{key}={v}")
        return "\n".join(lines) + "\n"


def parse_config(text: str, overrides=None, command="") -> RunConfig:
    keys = known_keys()
    values = {k: d for k, (_, d) in keys.items()}
    for n, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {n}: expected key=value, got {raw.strip()!r}")
        key, val = (t.strip() for t in line.split("=", 1))
        if key not in keys:
            raise ConfigError(f"line {n}: unknown config key '{key}'")
        try:
            values[key] = keys[key][0](val)
        except ValueError as err:
            raise ConfigError(f"line {n}: bad value for '{key}': {err}") from None
    for key, val in (overrides or {}).items():
        if val is not None:
            values[key] = val
    cfg = RunConfig(command, values)
    try:
        cfg.bounds, cfg.dcl, cfg.train, cfg.eval   # validate every section now
    except ValueError as err:
        raise ConfigError(str(err)) from None
    return cfg


def load_config(path, overrides=None, command="") -> RunConfig:
    with open(path) as fh:
        return parse_config(fh.read(), overrides, command)
