"""INI experiment configs with ``[system]``, ``[experiment]`` and ``[run]`` sections."""
from __future__ import annotations

import configparser
import hashlib
import re
from dataclasses import dataclass, field

from .errors import ConfigError, RepellorLabError
from .systems import VARIANTS, SystemSpec, get_system

SECTIONS = ("system", "experiment", "run")
UINT64_MAX = 2**64 - 1


def _int(s):
    return int(s.strip())


def _float(s):
    return float(s.strip())


def _floats(s):
    return tuple(float(t) for t in re.split(r"[,\s]+", s.strip()) if t)


def _ints(s):
    return tuple(int(t) for t in re.split(r"[,\s]+", s.strip()) if t)


def _bool(s):
    v = s.strip().lower()
    if v in ("1", "true", "yes", "on"):
        return True
    if v in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {s!r}")


def _str(s):
    return s.strip()


def _matrix(s):
    rows = [r for r in s.split(";") if r.strip()]
    out = tuple(_ints(r) for r in rows)
    if not out or len({len(r) for r in out}) != 1:
        raise ValueError("matrix rows must be non-empty and of equal length")
    return out


def _choice(*options):
    def parse(s):
        v = s.strip()
        if v not in options:
            raise ValueError(f"expected one of {options}, got {v!r}")
        return v
    return parse


def _positive(parse):
    def check(s):
        v = parse(s)
        if v <= 0:
            raise ValueError("must be positive")
        return v
    return check


def _pair(s):
    v = _ints(s)
    if len(v) != 2 or v[0] > v[1]:
        raise ValueError("expected 'lo hi' with lo <= hi")
    return v


def _seed(s):
    v = int(s.strip(), 0)
    if not 0 <= v <= UINT64_MAX:
        raise ValueError("seed must be a 64-bit unsigned integer")
    return v


SCHEMA = {
    "system": {
        "name": _str,
        "variant": _choice(*VARIANTS),
        "matrix": _matrix,
        "epsilon": _float,
        "delta": _positive(_float),
    },
    "experiment": {
        "point": _floats,
        "x0": _floats,
        "n": _positive(_int),
        "depth": _positive(_int),
        "n_list": _ints,
        "num_z": _positive(_int),
        "K": _positive(_int),
        "epsilon_ball": _positive(_float),
        "grid_step": _positive(_float),
        "num_samples": _positive(_int),
        "n_range": _pair,
        "box_size": _positive(_float),
        "num_boxes": _positive(_int),
        "v_margin": _positive(_float),
        "potential": _choice("stable_minus_log_d", "stable", "zero"),
        "method": _choice("window", "grid"),
        "num_windows": _positive(_int),
        "n_max": _positive(_int),
        "sampler": _choice("haar", "cloud"),
        "phi": _str,
        "psi": _str,
        "num_roots": _positive(_int),
        "num_centers": _positive(_int),
        "cloud": _choice("average", "leaves"),
        "bins": _positive(_int),
        "cross_check": _bool,
        "include_level_n": _bool,
    },
    "run": {
        "seed": _seed,
        "threads": _positive(_int),
        "deterministic": _bool,
        "out": _str,
    },
}

RUN_DEFAULTS = {"seed": 0, "threads": 1, "deterministic": True, "out": "out"}


def _render(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, tuple):
        if value and isinstance(value[0], tuple):
            return "; ".join(" ".join(str(x) for x in row) for row in value)
        return " ".join(repr(x) if isinstance(x, float) else str(x) for x in value)
    if isinstance(value, float):
        return repr(value)
    return str(value)


@dataclass
class ExperimentConfig:
    system: dict = field(default_factory=dict)
    experiment: dict = field(default_factory=dict)
    run: dict = field(default_factory=lambda: dict(RUN_DEFAULTS))
    raw: dict = field(default_factory=dict, compare=False, repr=False)

    def get(self, key, default=None):
        return self.experiment.get(key, default)

    def require(self, key):
        if key not in self.experiment:
            raise ConfigError(f"[experiment] needs '{key}' for this command")
        return self.experiment[key]

    @property
    def seed(self) -> int:
        return self.run["seed"]

    def build_system(self) -> SystemSpec:
        blk = self.system
        try:
            return self._build(blk)
        except ValueError as exc:
            raise ConfigError(f"[system]: {exc}") from None

    @staticmethod
    def _build(blk) -> SystemSpec:
        if "matrix" in blk:
            spec = SystemSpec(blk.get("variant", "toral"), blk["matrix"], epsilon=blk.get("epsilon", 0.0),
                              delta=blk.get("delta", 0.1), name=blk.get("name", ""))
        elif "name" in blk:
            try:
                spec = get_system(blk["name"])
            except KeyError as exc:
                raise ConfigError(str(exc.args[0])) from None
            if "epsilon" in blk:
                spec = spec.with_epsilon(blk["epsilon"])
        else:
            raise ConfigError("[system] needs 'matrix' or a catalogue 'name'")
        return spec

    def to_ini(self) -> str:
        lines = []
        for sec in SECTIONS:
            lines.append(f"[{sec}]")
            block = getattr(self, sec)
            for key in sorted(block):
                lines.append(f"{key} = {_render(block[key])}")
            lines.append("")
        return "\n".join(lines)

    def digest(self) -> str:
        return hashlib.sha256(self.to_ini().encode()).hexdigest()


def _key_line(text: str, section: str, key: str):
    current = None
    for i, line in enumerate(text.splitlines(), 1):
        s = line.strip()
        m = re.match(r"\[(.+)\]$", s)
        if m:
            current = m.group(1).strip()
        elif current == section and re.match(rf"{re.escape(key)}\s*[=:]", s):
            return i
    return None


def _set_value(cfg: ExperimentConfig, section: str, key: str, value: str, where: str):
    if section not in SCHEMA:
        raise ConfigError(f"{where}: unknown section [{section}]")
    if key not in SCHEMA[section]:
        raise ConfigError(f"{where}: unknown key '{key}' in [{section}]")
    try:
        getattr(cfg, section)[key] = SCHEMA[section][key](value)
    except (ValueError, RepellorLabError) as exc:
        raise ConfigError(f"{where}: bad value for '{key}': {exc}") from None
    cfg.raw[(section, key)] = value


def parse_config(text: str, source: str = "<config>") -> ExperimentConfig:
    parser = configparser.ConfigParser(comment_prefixes=("#",), inline_comment_prefixes=("#",),
                                       interpolation=None, strict=True)
    parser.optionxform = str
    try:
        parser.read_string(text, source=source)
    except configparser.Error as exc:
        lineno = getattr(exc, "lineno", None)
        msg = exc.message.splitlines()[0]
        if getattr(exc, "errors", None):
            lineno, bad = exc.errors[0]
            msg = f"cannot parse {bad}"
        loc = f"{source}, line {lineno}" if lineno else source
        raise ConfigError(f"{loc}: {msg}") from None
    cfg = ExperimentConfig()
    for section in parser.sections():
        if section not in SCHEMA:
            line = next((i for i, l in enumerate(text.splitlines(), 1) if l.strip() == f"[{section}]"), None)
            raise ConfigError(f"{source}, line {line}: unknown section [{section}]")
        for key, value in parser.items(section):
            where = f"{source}, line {_key_line(text, section, key)}"
            _set_value(cfg, section, key, value, where)
    return cfg


def load_config(path) -> ExperimentConfig:
    with open(path, encoding="utf-8") as fh:
        return parse_config(fh.read(), str(path))


def apply_override(cfg: ExperimentConfig, assignment: str) -> None:
    """Apply ``--set key=value``; bare keys go to the section that declares them."""
    if "=" not in assignment:
        raise ConfigError(f"--set {assignment}: expected key=value")
    key, value = (t.strip() for t in assignment.split("=", 1))
    if "." in key:
        section, key = key.split(".", 1)
    else:
        owners = [s for s in SECTIONS if key in SCHEMA[s]]
        if not owners:
            raise ConfigError(f"--set {assignment}: unknown key '{key}'")
        section = owners[0]
    _set_value(cfg, section, key, value, f"--set {assignment}")
