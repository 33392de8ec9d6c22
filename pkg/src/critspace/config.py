"""Experiment configuration: sectioned ``key = value`` text.

Grammar::

    # comment            (also ";" at the start of a line)
    [section]
    key = value

Sections and keys are fixed (see ``SCHEMA``); anything else is rejected with the
offending line number.  Values are plain numbers, words, or for ``data.modes``
and ``oracle.segments`` a ``;``-separated list.
"""

from __future__ import annotations

import configparser
import math
import re
import warnings
from dataclasses import dataclass, field as dc_field

EXPERIMENTS = ("simulate", "decay", "split", "stability", "picard", "oracle", "inequalities")
PRESETS = ("shear", "taylor_green", "random", "modes", "tg_random")
PROFILES = ("remark", "remark_f", "remark_g", "gaussian", "thin_shell", "segments")

# section -> key -> (parser, default); None defaults are filled in by _validate
SCHEMA: dict[str, dict[str, tuple]] = {
    "run": {"experiment": (str, None), "output_dir": (str, "out"), "seed": (int, 0)},
    "solver": {"nu": (float, 1.0), "n": (int, 32), "dt": (float, 1e-3), "t_end": (float, 5.0), "record_every": (int, 10)},
    "data": {
        "preset": (str, "random"),
        "amplitude": (float, 1.0),
        "xm1": (float, None),
        "seed": (int, None),
        "slope": (float, 2.0),
        "k_max": (int, None),
        "rough_fraction": (float, 0.1),
        "modes": (str, ""),
    },
    "split": {"epsilon": (float, None)},
    "stability": {"delta_fraction": (float, 0.9), "perturbation_seed": (int, None), "perturbation_slope": (float, 1.0)},
    "picard": {
        "T": (float, 0.1),
        "n_time": (int, 101),
        "max_iter": (int, 50),
        "tol": (float, 1e-10),
        "substeps": (int, 4),
        "samples": (int, 1),
    },
    "oracle": {"profile": (str, "remark"), "segments": (str, ""), "s": (float, 1.0), "samples": (int, 1000)},
    "inequalities": {"samples": (int, 10000), "n": (int, 16), "support": (int, None)},
}

POSITIVE = {
    ("solver", "nu"), ("solver", "n"), ("solver", "dt"), ("solver", "t_end"), ("solver", "record_every"),
    ("picard", "T"), ("picard", "n_time"), ("picard", "max_iter"), ("picard", "tol"), ("picard", "substeps"),
    ("picard", "samples"), ("split", "epsilon"), ("stability", "delta_fraction"), ("inequalities", "samples"),
    ("inequalities", "n"), ("inequalities", "support"), ("data", "xm1"), ("oracle", "samples"),
}


class ConfigError(ValueError):
    pass


@dataclass
class ExperimentConfig:
    experiment: str
    values: dict[str, dict] = dc_field(default_factory=dict)

    def __getitem__(self, section: str) -> dict:
        return self.values[section]

    @property
    def output_dir(self) -> str:
        return self.values["run"]["output_dir"]

    @property
    def seed(self) -> int:
        return self.values["run"]["seed"]

    def to_text(self) -> str:
        """Fully resolved config in the same grammar (``None`` entries omitted)."""
        lines = []
        for section, entries in self.values.items():
            lines.append(f"[{section}]")
            for key, val in entries.items():
                if val is None or val == "":
                    continue
                lines.append(f"{key} = {val!r}" if isinstance(val, float) else f"{key} = {val}")
            lines.append("")
        return "\n".join(lines)

    def to_json(self) -> dict:
        return {s: dict(v) for s, v in self.values.items()}


def _line_of(text: str, section: str, key: str | None = None) -> int:
    in_section = False
    for i, line in enumerate(text.splitlines(), 1):
        stripped = line.strip()
        m = re.match(r"\[(.+)\]$", stripped)
        if m:
            in_section = m.group(1).strip() == section
            if key is None and in_section:
                return i
            continue
        if in_section and key is not None and re.match(rf"{re.escape(key)}\s*[=:]", stripped):
            return i
    return 0


def _convert(parser, raw: str):
    if parser is int:
        f = float(raw)
        if f != int(f):
            raise ValueError(f"{raw!r} is not an integer")
        return int(f)
    if parser is float:
        v = float(raw)
        if not math.isfinite(v):
            raise ValueError(f"{raw!r} is not finite")
        return v
    return raw.strip()


def parse_config(text: str, overrides: dict[str, dict] | None = None) -> ExperimentConfig:
    """Parse and validate; ``overrides`` (section -> key -> value) win over the text."""
    cp = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#",), strict=True)
    cp.optionxform = str
    try:
        cp.read_string(text)
    except configparser.MissingSectionHeaderError as exc:
        raise ConfigError(f"line {exc.lineno}: expected a [section] header before {exc.line.strip()!r}") from exc
    except configparser.ParsingError as exc:
        lineno, line = exc.errors[0]
        raise ConfigError(f"line {lineno}: cannot parse {line.strip()!r}") from exc
    except configparser.DuplicateOptionError as exc:
        raise ConfigError(f"line {exc.lineno}: duplicate key {exc.option!r} in [{exc.section}]") from exc
    except configparser.DuplicateSectionError as exc:
        raise ConfigError(f"line {exc.lineno}: duplicate section [{exc.section}]") from exc
    values: dict[str, dict] = {}
    for section in cp.sections():
        if section not in SCHEMA:
            raise ConfigError(f"line {_line_of(text, section)}: unknown section [{section}]")
    for section, keys in SCHEMA.items():
        given = dict(cp[section]) if cp.has_section(section) else {}
        for key in given:
            if key not in keys:
                raise ConfigError(f"line {_line_of(text, section, key)}: unknown key {section}.{key}")
        out = {}
        for key, (parser, default) in keys.items():
            if key in given:
                try:
                    out[key] = _convert(parser, given[key])
                except ValueError as exc:
                    raise ConfigError(f"line {_line_of(text, section, key)}: {section}.{key}: {exc}") from exc
            else:
                out[key] = default
        values[section] = out
    for section, entries in (overrides or {}).items():
        for key, val in entries.items():
            if val is None:
                continue
            if section == "run" and key == "experiment" and values["run"]["experiment"] not in (None, val):
                raise ConfigError(f"config declares experiment {values['run']['experiment']!r} but {val!r} was requested")
            values[section][key] = val
    if values["run"]["experiment"] is None:
        raise ConfigError("missing required key run.experiment")
    return _validate(ExperimentConfig(values["run"]["experiment"], values))


def _validate(cfg: ExperimentConfig) -> ExperimentConfig:
    v = cfg.values
    if cfg.experiment not in EXPERIMENTS:
        raise ConfigError(f"run.experiment must be one of {', '.join(EXPERIMENTS)}; got {cfg.experiment!r}")
    for section, key in POSITIVE:
        val = v[section][key]
        if val is not None and not val > 0:
            raise ConfigError(f"{section}.{key} must be positive; got {val}")
    n = v["solver"]["n"]
    if n % 2 or n < 4:
        raise ConfigError(f"solver.n must be an even integer >= 4; got {n}")
    steps = v["solver"]["t_end"] / v["solver"]["dt"]
    if abs(steps - round(steps)) > 1e-9 * max(1.0, steps):
        raise ConfigError("solver.t_end must be an integer multiple of solver.dt")
    if v["data"]["preset"] not in PRESETS:
        raise ConfigError(f"data.preset must be one of {', '.join(PRESETS)}; got {v['data']['preset']!r}")
    if v["data"]["preset"] == "modes" and not v["data"]["modes"]:
        raise ConfigError("data.modes is required for preset = modes")
    if not 0 <= v["data"]["rough_fraction"] < 1:
        raise ConfigError("data.rough_fraction must lie in [0, 1)")
    if v["data"]["seed"] is None:
        v["data"]["seed"] = v["run"]["seed"]
    if v["stability"]["perturbation_seed"] is None:
        v["stability"]["perturbation_seed"] = v["run"]["seed"] + 1
    nu = v["solver"]["nu"]
    if v["split"]["epsilon"] is None:
        v["split"]["epsilon"] = nu / 2
    elif v["split"]["epsilon"] > nu / 2:
        warnings.warn(f"split.epsilon = {v['split']['epsilon']} exceeds nu/2 = {nu / 2}; the decay argument assumes epsilon <= nu/2")
    if v["oracle"]["profile"] not in PROFILES:
        raise ConfigError(f"oracle.profile must be one of {', '.join(PROFILES)}")
    if v["oracle"]["profile"] == "segments":
        parse_segments(v["oracle"]["segments"])
    if v["data"]["preset"] == "modes":
        parse_modes(v["data"]["modes"])
    ineq = v["inequalities"]
    if ineq["support"] is None:
        ineq["support"] = ineq["n"] // 4
    return cfg


def parse_modes(text: str) -> list[tuple[tuple[int, int, int], tuple[complex, complex, complex]]]:
    """``"kx ky kz : cx cy cz; ..."`` with complex entries in Python syntax (``0.5j``, ``1+2j``)."""
    modes = []
    for item in filter(None, (p.strip() for p in text.split(";"))):
        try:
            left, right = item.split(":")
            xi = tuple(int(x) for x in left.split())
            c = tuple(complex(x) for x in right.split())
        except ValueError as exc:
            raise ConfigError(f"data.modes: cannot parse {item!r} (expected 'kx ky kz : cx cy cz')") from exc
        if len(xi) != 3 or len(c) != 3:
            raise ConfigError(f"data.modes: {item!r} needs three wavenumbers and three components")
        modes.append((xi, c))
    return modes


def parse_segments(text: str) -> list[tuple[float, float, float, float]]:
    """``"r_lo r_hi coef p; ..."``; ``inf`` is accepted for ``r_hi``."""
    segs = []
    for item in filter(None, (p.strip() for p in text.split(";"))):
        parts = item.split()
        if len(parts) != 4:
            raise ConfigError(f"oracle.segments: {item!r} needs 'r_lo r_hi coef p'")
        try:
            segs.append(tuple(float(x) for x in parts))
        except ValueError as exc:
            raise ConfigError(f"oracle.segments: cannot parse {item!r}") from exc
    if not segs:
        raise ConfigError("oracle.segments is required for profile = segments")
    return segs
