"""Run configuration: INI file, ``--set section.key=value`` overrides, environment seed.

Precedence, lowest first: built-in defaults, the config file, ``KINESYNTH_SEED``,
command-line ``--set``. One seed (``run.seed``) feeds every stage.
"""

from __future__ import annotations

import configparser
import io
import os
from dataclasses import dataclass, field, fields
from pathlib import Path

from .cgan import GanConfig
from .classifier import FcnConfig
from .data import TASKS
from .embed import EmbedConfig
from .errors import ParameterError
from .toy import DEFAULT_TASKS

SEED_ENV = "KINESYNTH_SEED"
RESOLVED_NAME = "config.resolved.ini"


@dataclass
class RunSection:
    seed: int = 0


@dataclass
class DataSection:
    toy_tasks: tuple[str, ...] = DEFAULT_TASKS
    toy_impairments: tuple[str, ...] = ("Control", "Mild", "ModerateSevere")
    toy_per_class: int = 20
    n_folds: int = 5
    split_strategy: str = "trial_stratified"
    subsample_per_class: int = 0
    expected_trials: int = 0


@dataclass
class EvalSection:
    conditions: tuple[str, ...] = ("real_only", "augmented")


@dataclass
class ReportSection:
    channels: tuple[int, ...] = (0, 3, 4, 7)
    per_class: int = 5
    max_classes: int = 6


SECTIONS = {
    "run": RunSection,
    "data": DataSection,
    "gan": GanConfig,
    "fcn": FcnConfig,
    "tsne": EmbedConfig,
    "eval": EvalSection,
    "report": ReportSection,
}
# module configs carry their own seed field; it is always taken from run.seed
_DERIVED = {"seed"}


def _parse(text: str, default):
    text = text.strip()
    if isinstance(default, bool):
        if text.lower() in ("1", "true", "yes", "on"):
            return True
        if text.lower() in ("0", "false", "no", "off"):
            return False
        raise ValueError(f"not a boolean: {text!r}")
    if isinstance(default, int):
        return int(text)
    if isinstance(default, float):
        return float(text)
    if isinstance(default, tuple):
        items = [s.strip() for s in text.split(",") if s.strip()]
        if default and isinstance(default[0], int):
            return tuple(int(s) for s in items)
        return tuple(items)
    return text


def _format(value) -> str:
    if isinstance(value, tuple):
        return ",".join(str(v) for v in value)
    if isinstance(value, float):
        return repr(value)
    return str(value)


@dataclass
class RunConfig:
    sections: dict = field(default_factory=lambda: {name: cls() for name, cls in SECTIONS.items()})

    @property
    def seed(self) -> int:
        return self.sections["run"].seed

    def __getattr__(self, name):
        sections = self.__dict__.get("sections", {})
        if name in sections:
            return sections[name]
        raise AttributeError(name)

    def set(self, key: str, raw: str) -> None:
        if "." not in key:
            raise ParameterError(f"override {key!r} must look like section.key=value")
        sec, name = key.split(".", 1)
        if sec not in SECTIONS:
            raise ParameterError(f"unknown config section {sec!r}; known: {', '.join(SECTIONS)}")
        obj = self.sections[sec]
        names = {f.name for f in fields(obj)}
        if sec != "run" and name in _DERIVED:
            raise ParameterError(f"{sec}.{name} is derived from run.seed; set run.seed instead")
        if name not in names:
            raise ParameterError(f"unknown key {name!r} in section [{sec}]")
        try:
            setattr(obj, name, _parse(raw, getattr(obj, name)))
        except ValueError as exc:
            raise ParameterError(f"bad value for {sec}.{name}: {exc}") from exc

    def resolve(self) -> RunConfig:
        """Propagate the run seed and validate every section."""
        seed = self.seed
        for name in ("gan", "fcn", "tsne"):
            self.sections[name].seed = seed
        self.gan.validate()
        self.fcn.validate()
        self.tsne.validate()
        d = self.data
        unknown = [t for t in d.toy_tasks if t not in TASKS]
        if unknown:
            raise ParameterError(f"data.toy_tasks holds unknown tasks {unknown}")
        if d.split_strategy not in ("trial_stratified", "subject_wise"):
            raise ParameterError("data.split_strategy must be trial_stratified or subject_wise")
        bad = set(self.eval.conditions) - {"real_only", "augmented"}
        if bad or not self.eval.conditions:
            raise ParameterError(f"eval.conditions must be a subset of real_only,augmented, got {self.eval.conditions}")
        return self

    def to_ini(self) -> str:
        cp = configparser.ConfigParser()
        for name, obj in self.sections.items():
            cp[name] = {f.name: _format(getattr(obj, f.name)) for f in fields(obj)
                        if name == "run" or f.name not in _DERIVED}
        buf = io.StringIO()
        cp.write(buf)
        return buf.getvalue().replace("\r\n", "\n")

    def echo(self, directory) -> Path:
        path = Path(directory) / RESOLVED_NAME
        path.write_text(self.to_ini(), encoding="utf-8", newline="\n")
        return path


def load_config(path=None, overrides=(), environ=None) -> RunConfig:
    environ = os.environ if environ is None else environ
    cfg = RunConfig()
    if path is not None:
        cp = configparser.ConfigParser()
        try:
            with open(path, encoding="utf-8") as fh:
                cp.read_file(fh)
        except (OSError, configparser.Error) as exc:
            raise ParameterError(f"cannot read config {path}: {exc}") from exc
        for sec in cp.sections():
            for key, raw in cp[sec].items():
                cfg.set(f"{sec}.{key}", raw)
    if environ.get(SEED_ENV):
        cfg.set("run.seed", environ[SEED_ENV])
    for item in overrides:
        if "=" not in item:
            raise ParameterError(f"override {item!r} must look like section.key=value")
        key, raw = item.split("=", 1)
        cfg.set(key.strip(), raw)
    return cfg.resolve()
