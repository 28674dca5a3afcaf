"""Key-value config files merged with command-line overrides.

The file format is flat ``key = value`` lines, ``#`` comments.  Every run
writes the merged configuration into its output artifacts for provenance.
"""
from __future__ import annotations

from dataclasses import asdict, fields
from pathlib import Path

from .ilp import ConstraintConfig
from .ingest import ConfigurationError
from .model import ModelConfig

_RUNTIME_DEFAULTS = {
    "decoder": "ilp",
    "jobs": 1,
    "time_limit": 60.0,
    "max_nodes": 5000,
    "validation_size": 10,
}

_BOOL_STRINGS = {"true": True, "1": True, "yes": True,
                 "false": False, "0": False, "no": False}


def parse_config_file(path: Path | str) -> dict[str, str]:
    values: dict[str, str] = {}
    for lineno, raw in enumerate(Path(path).read_text().splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigurationError(f"{path}:{lineno}: expected 'key = value'")
        key, value = (part.strip() for part in line.split("=", 1))
        values[key] = value
    return values


def _coerce(key: str, value, target_type):
    if isinstance(value, target_type) and not isinstance(value, str):
        return value
    text = str(value).strip()
    try:
        if target_type is bool:
            return _BOOL_STRINGS[text.lower()]
        if target_type is int:
            if key == "batch_size" and text.lower() in ("none", ""):
                return None
            return int(text)
        if target_type is float:
            return float(text)
        return text
    except (KeyError, ValueError) as exc:
        raise ConfigurationError(f"bad value for {key}: {value!r}") from exc


def resolve_configs(*sources: dict) -> tuple[ModelConfig, ConstraintConfig, dict]:
    """Merge configuration sources (later wins) into the model, constraint and
    runtime configurations.  Unknown keys are errors."""
    model_fields = {f.name: f.type for f in fields(ModelConfig)}
    constraint_fields = {f.name: f.type for f in fields(ConstraintConfig)}
    merged: dict = {}
    for source in sources:
        for k, v in source.items():
            if v is not None:
                merged[k] = v

    model_kwargs, constraint_kwargs = {}, {}
    runtime = dict(_RUNTIME_DEFAULTS)
    types = {"heads": int, "hidden_dim": int, "label_count": int, "seed": int,
             "max_iterations": int, "patience": int, "k": int,
             "leaky_slope": float, "learning_rate": float,
             "no_relation_weight": float,
             "use_edge_attention": bool, "use_edge_classifier": bool,
             "activation": str, "batch_size": int,
             "c1": bool, "c2": bool, "c4": bool, "c5": bool,
             "c1_label_set": str, "c2_indexing": str,
             "decoder": str, "jobs": int, "time_limit": float,
             "max_nodes": int, "validation_size": int}
    for key, value in merged.items():
        if key in model_fields:
            model_kwargs[key] = _coerce(key, value, types[key])
        elif key in constraint_fields:
            constraint_kwargs[key] = _coerce(key, value, types[key])
        elif key in runtime:
            runtime[key] = _coerce(key, value, types[key])
        else:
            raise ConfigurationError(f"unknown configuration key {key!r}")
    return (ModelConfig(**model_kwargs), ConstraintConfig(**constraint_kwargs),
            runtime)


def provenance(model_cfg: ModelConfig, constraint_cfg: ConstraintConfig,
               runtime: dict) -> dict:
    out = {}
    out.update(asdict(model_cfg))
    out.update(asdict(constraint_cfg))
    out.update(runtime)
    return out
