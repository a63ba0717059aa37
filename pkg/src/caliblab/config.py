"""Experiment configuration: flat key-value text with section headers.

Parsing is strict by design: unknown sections or keys, malformed values,
and arms that a given experiment kind does not support are all hard
errors. A misconfigured sweep must fail before it burns an hour.

Example::

    [experiment]
    kind = interval-sweep
    replicates = 1
    base_seed = 7

    [distribution]
    k = 10
    alpha_grid = 0.1,0.3,0.5,0.7,0.9
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field

from .errors import ConfigError

__all__ = ["ExperimentConfig", "parse_config", "parse_config_file", "KINDS"]

KINDS = ("gaussian-sweep", "interval-sweep", "oracle-verify", "logit-probe", "ts-ablation")

_GAUSSIAN_ARMS = re.compile(r"^(erm|erm\+ts|mixup|mixup\+ts|dmixup[1-9][0-9]*)$")
_INTERVAL_ARMS = ("erm+oracle-ts", "dmixup-oracle", "dmixup1-trained")
_ABLATION_ARMS = ("erm", "erm+ts", "mixup", "mixup+ts")


def _int(raw: str) -> int:
    return int(raw)


def _float(raw: str) -> float:
    return float(raw)


def _str(raw: str) -> str:
    return raw


def _float_list(raw: str) -> tuple[float, ...]:
    return tuple(float(v.strip()) for v in raw.split(",") if v.strip())


def _int_list(raw: str) -> tuple[int, ...]:
    return tuple(int(v.strip()) for v in raw.split(",") if v.strip())


def _str_list(raw: str) -> tuple[str, ...]:
    return tuple(v.strip() for v in raw.split(",") if v.strip())


# Per-kind schema: section -> key -> (parser, default). ``None`` defaults are
# filled in per kind after parsing.
_TRAIN_KEYS = {
    "epochs": (_int, 200),
    "batch_size": (_int, 500),
    "learning_rate": (_float, 1e-3),
    "beta1": (_float, 0.9),
    "beta2": (_float, 0.999),
    "hidden": (_int_list, (128, 128)),
    "dmixup_d": (_int, 2),
}

_SCHEMAS: dict[str, dict[str, dict]] = {
    "gaussian-sweep": {
        "experiment": {
            "kind": (_str, None),
            "replicates": (_int, 5),
            "base_seed": (_int, 0),
            "arms": (_str_list, ("erm+ts", "mixup")),
        },
        "distribution": {
            "dim": (_int, 300),
            "mu_grid": (_float_list, (0.25, 0.05, 0.01)),
            "n_train": (_int, 2000),
            "n_test": (_int, 500),
            "cal_fraction": (_float, 0.1),
        },
        "train": dict(_TRAIN_KEYS, epochs=(_int, 300), batch_size=(_int, 200)),
        "metrics": {
            "n_bins": (_int, 15),
            "n_mc": (_int, 20000),
        },
    },
    "interval-sweep": {
        "experiment": {
            "kind": (_str, None),
            "replicates": (_int, 1),
            "base_seed": (_int, 0),
            "arms": (_str_list, ("erm+oracle-ts", "dmixup-oracle")),
        },
        "distribution": {
            "k": (_int, 10),
            "alpha_grid": (_float_list, (0.1, 0.3, 0.5, 0.7, 0.9)),
            "n_train": (_int, 5000),
        },
        "train": dict(
            _TRAIN_KEYS,
            epochs=(_int, 400),
            batch_size=(_int, 1000),
            learning_rate=(_float, 3e-3),
            hidden=(_int_list, (1024,)),
        ),
        "metrics": {
            "n_bins": (_int, 15),
            "n_mc": (_int, 20000),
            "mix_cap": (_float, 0.2),
        },
    },
    "oracle-verify": {
        "experiment": {
            "kind": (_str, None),
            "replicates": (_int, 1),
            "base_seed": (_int, 0),
            "arms": (_str_list, ()),
        },
        "oracle": {
            "n_datasets": (_int, 50),
            "max_points": (_int, 8),
            "dims": (_int_list, (1, 2)),
            "n_queries": (_int, 20),
            "tolerance": (_float, 1e-4),
        },
    },
    "logit-probe": {
        "experiment": {
            "kind": (_str, None),
            "replicates": (_int, 1),
            "base_seed": (_int, 0),
            "arms": (_str_list, ("erm",)),
        },
        "distribution": {
            "k": (_int, 4),
            "alpha": (_float, 0.5),
            "n_train": (_int, 1000),
        },
        "train": dict(_TRAIN_KEYS, epochs=(_int, 800), batch_size=(_int, 250),
                      hidden=(_int_list, (512,))),
        "probe": {
            "radii": (_float_list, tuple(float(r) for r in range(1, 11))),
            "sphere_samples": (_int, 500),
            "checkpoint": (_str, ""),
        },
    },
    "ts-ablation": {
        "experiment": {
            "kind": (_str, None),
            "replicates": (_int, 1),
            "base_seed": (_int, 0),
            "arms": (_str_list, _ABLATION_ARMS),
        },
        "distribution": {
            "family": (_str, "gaussian"),
            "dim": (_int, 300),
            "mu": (_float, 0.13),
            "k": (_int, 10),
            "alpha": (_float, 0.5),
            "n_train": (_int, 2000),
            "n_test": (_int, 500),
            "cal_fraction": (_float, 0.1),
        },
        "train": dict(_TRAIN_KEYS, epochs=(_int, 300), batch_size=(_int, 200)),
        "metrics": {
            "n_bins": (_int, 15),
            "n_mc": (_int, 20000),
        },
    },
}


@dataclass(frozen=True)
class ExperimentConfig:
    kind: str
    replicates: int
    base_seed: int
    arms: tuple[str, ...]
    distribution: dict = field(default_factory=dict)
    train: dict = field(default_factory=dict)
    metrics: dict = field(default_factory=dict)
    probe: dict = field(default_factory=dict)
    oracle: dict = field(default_factory=dict)

    def snapshot(self) -> dict:
        """JSON-ready copy of every setting, embedded in run records."""
        return {
            "kind": self.kind,
            "replicates": self.replicates,
            "base_seed": self.base_seed,
            "arms": list(self.arms),
            "distribution": {k: _jsonify(v) for k, v in self.distribution.items()},
            "train": {k: _jsonify(v) for k, v in self.train.items()},
            "metrics": {k: _jsonify(v) for k, v in self.metrics.items()},
            "probe": {k: _jsonify(v) for k, v in self.probe.items()},
            "oracle": {k: _jsonify(v) for k, v in self.oracle.items()},
        }


def _jsonify(v):
    return list(v) if isinstance(v, tuple) else v


def _parse_sections(text: str) -> dict[str, dict[str, str]]:
    sections: dict[str, dict[str, str]] = {}
    current: str | None = None
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if line.startswith("[") and line.endswith("]"):
            current = line[1:-1].strip()
            if not current:
                raise ConfigError(f"line {lineno}: empty section name")
            if current in sections:
                raise ConfigError(f"line {lineno}: duplicate section [{current}]")
            sections[current] = {}
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {line!r}")
        if current is None:
            raise ConfigError(f"line {lineno}: key outside any section")
        key, _, value = line.partition("=")
        key = key.strip()
        if key in sections[current]:
            raise ConfigError(f"line {lineno}: duplicate key {key!r} in [{current}]")
        sections[current][key] = value.strip()
    return sections


def _validate_arms(kind: str, arms: tuple[str, ...]) -> None:
    if kind == "gaussian-sweep":
        bad = [a for a in arms if not _GAUSSIAN_ARMS.match(a)]
    elif kind == "interval-sweep":
        bad = [a for a in arms if a not in _INTERVAL_ARMS]
    elif kind == "ts-ablation":
        bad = [a for a in arms if a not in _ABLATION_ARMS]
    elif kind == "logit-probe":
        bad = [a for a in arms if a != "erm"]
    else:
        bad = list(arms)
    if bad:
        raise ConfigError(f"arms {bad} are not valid for kind {kind!r}")
    if kind in ("gaussian-sweep", "interval-sweep", "ts-ablation") and not arms:
        raise ConfigError(f"kind {kind!r} needs at least one arm")


def parse_config(
    text: str,
    *,
    base_seed: int | None = None,
    replicates: int | None = None,
    arms: tuple[str, ...] | None = None,
) -> ExperimentConfig:
    """Parse and validate a config document; keyword overrides win over the
    file (they back the CLI flags)."""
    sections = _parse_sections(text)
    if "experiment" not in sections or "kind" not in sections["experiment"]:
        raise ConfigError("config must declare kind under [experiment]")
    kind = sections["experiment"]["kind"]
    if kind not in KINDS:
        raise ConfigError(f"unknown experiment kind {kind!r}; expected one of {KINDS}")
    schema = _SCHEMAS[kind]

    parsed: dict[str, dict] = {}
    for section, entries in sections.items():
        if section not in schema:
            raise ConfigError(f"unknown section [{section}] for kind {kind!r}")
        parsed[section] = {}
        for key, raw in entries.items():
            if key not in schema[section]:
                raise ConfigError(f"unknown key {key!r} in [{section}] for kind {kind!r}")
            parser, _ = schema[section][key]
            try:
                parsed[section][key] = parser(raw)
            except ValueError as exc:
                raise ConfigError(f"bad value for {section}.{key}: {raw!r}") from exc

    def resolved(section: str) -> dict:
        out = {}
        for key, (_, default) in schema.get(section, {}).items():
            if key == "kind":
                continue
            out[key] = parsed.get(section, {}).get(key, default)
        return out

    exp = resolved("experiment")
    if replicates is not None:
        exp["replicates"] = int(replicates)
    if base_seed is not None:
        exp["base_seed"] = int(base_seed)
    if arms is not None:
        exp["arms"] = tuple(arms)
    if exp["replicates"] < 1:
        raise ConfigError("replicates must be >= 1")

    arms_tuple = tuple(exp["arms"])
    _validate_arms(kind, arms_tuple)

    cfg = ExperimentConfig(
        kind=kind,
        replicates=exp["replicates"],
        base_seed=exp["base_seed"],
        arms=arms_tuple,
        distribution=resolved("distribution"),
        train=resolved("train"),
        metrics=resolved("metrics"),
        probe=resolved("probe"),
        oracle=resolved("oracle"),
    )
    _check_grids(cfg)
    return cfg


def _check_grids(cfg: ExperimentConfig) -> None:
    if cfg.kind == "gaussian-sweep" and not cfg.distribution["mu_grid"]:
        raise ConfigError("mu_grid must be nonempty")
    if cfg.kind == "interval-sweep" and not cfg.distribution["alpha_grid"]:
        raise ConfigError("alpha_grid must be nonempty")
    for section in ("distribution", "metrics", "train"):
        for key, value in getattr(cfg, section).items():
            if key in ("n_train", "n_test", "n_mc", "epochs", "batch_size") and value < 1:
                raise ConfigError(f"{section}.{key} must be >= 1")
    if cfg.kind in ("gaussian-sweep", "ts-ablation"):
        frac = cfg.distribution["cal_fraction"]
        if not (0.0 < frac < 1.0):
            raise ConfigError("cal_fraction must lie strictly between 0 and 1")
    if cfg.kind == "ts-ablation" and cfg.distribution["family"] not in ("gaussian", "interval"):
        raise ConfigError("ts-ablation family must be 'gaussian' or 'interval'")


def parse_config_file(path, **overrides) -> ExperimentConfig:
    with open(path) as fh:
        return parse_config(fh.read(), **overrides)
