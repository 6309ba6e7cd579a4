"""Experiment configuration: a versioned YAML document with a strict schema.

Example::

    version: 1
    scenario:
      drift_kind: abrupt-switch
      K: 600
      switch_every: 100
    variants:
      - {name: fixed, kind: portal, W: K, tau: K}
      - {name: tuned, kind: oracle}
      - {name: ada, kind: ada}
    seeds: [0, 1, 2]

Every key not listed in the dataclasses below is rejected.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Union

import yaml

from .env import DRIFT_KINDS, ScenarioConfig
from .errors import SchemaError

CONFIG_VERSION = 1
VARIANT_KINDS = ("portal", "oracle", "ada", "no-restart", "no-window")

IntOrK = Union[int, str]


@dataclass(frozen=True)
class ScenarioSpec:
    drift_kind: str = "stationary"
    K: int = 600
    n_states: int = 6
    n_actions: int = 3
    horizon: int = 4
    dim: int = 2
    n_phi: int = 6
    n_psi: int = 8
    p_min: float = 0.05
    switch_every: Optional[int] = None
    switch_rounds: tuple = ()
    n_regimes: int = 2
    members: tuple = ()
    reward_mode: str = "mirror"
    misspecified: bool = False
    scenario_seed: Optional[int] = None

    def scenario_config(self) -> ScenarioConfig:
        return ScenarioConfig(self.drift_kind, self.K, self.switch_every, tuple(self.switch_rounds),
                              self.n_regimes, tuple(tuple(m) for m in self.members),
                              self.reward_mode, self.misspecified)


@dataclass(frozen=True)
class VariantSpec:
    name: str
    kind: str = "portal"
    W: IntOrK = "K"
    tau: IntOrK = "K"
    restart_mode: str = "literal"

    def resolve(self, K: int) -> tuple[int, int]:
        W = K if self.W == "K" or self.kind == "no-window" else int(self.W)
        tau = K if self.tau == "K" or self.kind == "no-restart" else int(self.tau)
        return W, tau


@dataclass(frozen=True)
class ExperimentConfig:
    version: int = CONFIG_VERSION
    scenario: ScenarioSpec = field(default_factory=ScenarioSpec)
    variants: tuple = (VariantSpec("portal"),)
    seeds: tuple = (0,)
    output_dir: str = "results"
    parallel: int = 1
    c_lambda: float = 1.0
    eta: Optional[float] = None
    n_eval: int = 1
    delta: float = 0.1

    def to_dict(self) -> dict:
        doc = dataclasses.asdict(self)
        doc["scenario"]["switch_rounds"] = list(self.scenario.switch_rounds)
        doc["scenario"]["members"] = [list(m) for m in self.scenario.members]
        doc["variants"] = [dataclasses.asdict(v) for v in self.variants]
        doc["seeds"] = list(self.seeds)
        return doc


def _fields(cls) -> dict:
    return {f.name: f for f in dataclasses.fields(cls)}


def _is_int(x) -> bool:
    return isinstance(x, int) and not isinstance(x, bool)


def _is_num(x) -> bool:
    return (isinstance(x, (int, float))) and not isinstance(x, bool)


def _check_unknown(doc: dict, cls, where: str, errors: list[str]) -> None:
    for key in doc:
        if key not in _fields(cls):
            errors.append(f"{where}: unknown key {key!r}")


def _validate_scenario(doc, errors: list[str]) -> Optional[ScenarioSpec]:
    if not isinstance(doc, dict):
        errors.append("scenario: must be a mapping")
        return None
    _check_unknown(doc, ScenarioSpec, "scenario", errors)
    for key in ("K", "n_states", "n_actions", "horizon", "dim", "n_phi", "n_psi", "n_regimes"):
        if key in doc and (not _is_int(doc[key]) or doc[key] < 1):
            errors.append(f"scenario.{key}: must be a positive integer, got {doc[key]!r}")
    if "drift_kind" in doc and doc["drift_kind"] not in DRIFT_KINDS:
        errors.append(f"scenario.drift_kind: must be one of {DRIFT_KINDS}")
    if "p_min" in doc and (not _is_num(doc["p_min"]) or not 0 <= doc["p_min"]):
        errors.append("scenario.p_min: must be a nonnegative number")
    if doc.get("switch_every") is not None and (not _is_int(doc["switch_every"]) or doc["switch_every"] < 1):
        errors.append("scenario.switch_every: must be a positive integer")
    if "switch_rounds" in doc and (not isinstance(doc["switch_rounds"], list)
                                   or not all(_is_int(k) for k in doc["switch_rounds"])):
        errors.append("scenario.switch_rounds: must be a list of integers")
    if "members" in doc and (not isinstance(doc["members"], list) or not all(
            isinstance(m, list) and len(m) == 2 and all(_is_int(x) for x in m) for m in doc["members"])):
        errors.append("scenario.members: must be a list of [phi_index, mu_index] pairs")
    if "reward_mode" in doc and doc["reward_mode"] not in ("mirror", "independent"):
        errors.append("scenario.reward_mode: must be 'mirror' or 'independent'")
    if "misspecified" in doc and not isinstance(doc["misspecified"], bool):
        errors.append("scenario.misspecified: must be a boolean")
    if doc.get("scenario_seed") is not None and not _is_int(doc["scenario_seed"]):
        errors.append("scenario.scenario_seed: must be an integer")
    kind = doc.get("drift_kind", "stationary")
    if kind != "stationary" and doc.get("switch_every") is None and not doc.get("switch_rounds"):
        errors.append(f"scenario: drift_kind {kind!r} needs switch_every or switch_rounds")
    p_min = doc.get("p_min", ScenarioSpec.p_min)
    S = doc.get("n_states", ScenarioSpec.n_states)
    if _is_num(p_min) and _is_int(S) and p_min * S >= 1:
        errors.append("scenario.p_min: p_min * n_states must be < 1")
    known = {k: v for k, v in doc.items() if k in _fields(ScenarioSpec)}
    if "switch_rounds" in known and isinstance(known["switch_rounds"], list):
        known["switch_rounds"] = tuple(known["switch_rounds"])
    if "members" in known and isinstance(known["members"], list):
        known["members"] = tuple(tuple(m) for m in known["members"] if isinstance(m, list))
    try:
        return ScenarioSpec(**known)
    except TypeError as exc:
        errors.append(f"scenario: {exc}")
        return None


def _validate_variant(doc, idx: int, errors: list[str]) -> Optional[VariantSpec]:
    where = f"variants[{idx}]"
    if not isinstance(doc, dict):
        errors.append(f"{where}: must be a mapping")
        return None
    _check_unknown(doc, VariantSpec, where, errors)
    if not isinstance(doc.get("name"), str) or not doc.get("name"):
        errors.append(f"{where}.name: required non-empty string")
    if doc.get("kind", "portal") not in VARIANT_KINDS:
        errors.append(f"{where}.kind: must be one of {VARIANT_KINDS}")
    for key in ("W", "tau"):
        v = doc.get(key, "K")
        if not (v == "K" or (_is_int(v) and v >= 1)):
            errors.append(f"{where}.{key}: must be a positive integer or 'K'")
    if doc.get("restart_mode", "literal") not in ("literal", "early"):
        errors.append(f"{where}.restart_mode: must be 'literal' or 'early'")
    known = {k: v for k, v in doc.items() if k in _fields(VariantSpec)}
    try:
        return VariantSpec(**known)
    except TypeError as exc:
        errors.append(f"{where}: {exc}")
        return None


def validate_config(doc) -> ExperimentConfig:
    """Build an ExperimentConfig or raise SchemaError listing every problem."""
    errors: list[str] = []
    if not isinstance(doc, dict):
        raise SchemaError(["config root must be a mapping"])
    _check_unknown(doc, ExperimentConfig, "config", errors)
    if doc.get("version") != CONFIG_VERSION:
        errors.append(f"version: must be {CONFIG_VERSION}, got {doc.get('version')!r}")
    scenario = _validate_scenario(doc.get("scenario", {}), errors)
    variants = []
    raw_variants = doc.get("variants", [{"name": "portal"}])
    if not isinstance(raw_variants, list) or not raw_variants:
        errors.append("variants: must be a non-empty list")
        raw_variants = []
    for i, v in enumerate(raw_variants):
        variants.append(_validate_variant(v, i, errors))
    names = [v.name for v in variants if v is not None]
    if len(set(names)) != len(names):
        errors.append("variants: names must be unique")
    seeds = doc.get("seeds", [0])
    if not isinstance(seeds, list) or not seeds or not all(_is_int(s) and s >= 0 for s in seeds):
        errors.append("seeds: must be a non-empty list of nonnegative integers")
    elif len(set(seeds)) != len(seeds):
        errors.append("seeds: must be unique")
    if "output_dir" in doc and not isinstance(doc["output_dir"], str):
        errors.append("output_dir: must be a string")
    if "parallel" in doc and (not _is_int(doc["parallel"]) or doc["parallel"] < 1):
        errors.append("parallel: must be a positive integer")
    if "c_lambda" in doc and (not _is_num(doc["c_lambda"]) or doc["c_lambda"] <= 0):
        errors.append("c_lambda: must be positive")
    if doc.get("eta") is not None and (not _is_num(doc["eta"]) or doc["eta"] <= 0):
        errors.append("eta: must be positive or null")
    if "n_eval" in doc and (not _is_int(doc["n_eval"]) or doc["n_eval"] < 1):
        errors.append("n_eval: must be a positive integer")
    if "delta" in doc and (not _is_num(doc["delta"]) or not 0 < doc["delta"] < 1):
        errors.append("delta: must lie in (0, 1)")
    if scenario is not None:
        K = scenario.K
        for v in variants:
            if v is None:
                continue
            for key in ("W", "tau"):
                val = getattr(v, key)
                if _is_int(val) and val > K:
                    errors.append(f"variant {v.name!r}: {key}={val} exceeds K={K}")
    if errors:
        raise SchemaError(errors)
    top = {k: doc[k] for k in ("output_dir", "parallel", "c_lambda", "eta", "n_eval", "delta") if k in doc}
    return ExperimentConfig(version=CONFIG_VERSION, scenario=scenario, variants=tuple(variants),
                            seeds=tuple(seeds), **top)


def parse_config(path) -> ExperimentConfig:
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(path)
    try:
        doc = yaml.safe_load(path.read_text())
    except yaml.YAMLError as exc:
        raise SchemaError([f"YAML parse error: {exc}"]) from exc
    return validate_config(doc)


def dump_config(config: ExperimentConfig) -> str:
    return yaml.safe_dump(config.to_dict(), sort_keys=False)
