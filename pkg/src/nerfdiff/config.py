"""Run configuration: one JSON document holding every tunable.

Layout::

    {"seed": 0, "out": "out", "threads": null, "zoom_factors": [1, 2, 4],
     "scene": {...voxel scene spec...},
     "harness": {...PipelineConfig scalars...},
     "field": {...FieldConfig..., "arch": {...}},
     "diffusion": {...DiffusionConfig..., "arch": {...}}}

Every key is optional and falls back to the dataclass default; unknown keys
anywhere are rejected before any work starts.
"""

from __future__ import annotations

import copy
import dataclasses
import json
import types
import typing
from dataclasses import dataclass, field as dc_field
from pathlib import Path

from nerfdiff.errors import ContractError
from nerfdiff.harness.pipeline import PipelineConfig


class ConfigError(ContractError):
    """Malformed or unknown configuration content."""


DEFAULT_SCENE = {
    "resolution": 32,
    "texture": 0.15,
    "texture_block": 4,
    "shapes": [
        {"type": "sphere", "center": [-0.3, 0.0, 0.0], "radius": 0.45, "color": [0.9, 0.2, 0.2], "density": 20.0},
        {"type": "box", "min": [0.1, -0.4, -0.5], "max": [0.6, 0.4, 0.3], "color": [0.2, 0.4, 0.9],
         "density": 20.0},
    ],
}


@dataclass
class RunConfig:
    seed: int = 0
    out: str = "out"
    threads: int | None = None
    zoom_factors: tuple[float, ...] = (1.0, 2.0, 4.0)
    scene: dict = dc_field(default_factory=lambda: copy.deepcopy(DEFAULT_SCENE))
    pipeline: PipelineConfig = dc_field(default_factory=PipelineConfig)

    def to_dict(self) -> dict:
        pipe = _encode(self.pipeline)
        return {"seed": self.seed, "out": self.out, "threads": self.threads,
                "zoom_factors": list(self.zoom_factors), "scene": copy.deepcopy(self.scene),
                "harness": {k: v for k, v in pipe.items() if k not in ("field", "diffusion")},
                "field": pipe["field"], "diffusion": pipe["diffusion"]}

    @classmethod
    def from_dict(cls, d: dict) -> "RunConfig":
        if not isinstance(d, dict):
            raise ConfigError("config must be a JSON object")
        known = {"seed", "out", "threads", "zoom_factors", "scene", "harness", "field", "diffusion"}
        unknown = sorted(set(d) - known)
        if unknown:
            raise ConfigError(f"unknown config key(s): {', '.join(unknown)}")
        harness = d.get("harness", {})
        if not isinstance(harness, dict):
            raise ConfigError("'harness' must be an object")
        for k in ("field", "diffusion"):
            if k in harness:
                raise ConfigError(f"unknown config key: harness.{k}")
        pipe_d = dict(harness)
        for k in ("field", "diffusion"):
            if k in d:
                pipe_d[k] = d[k]
        top = _decode(cls, {k: v for k, v in d.items() if k in ("seed", "out", "threads", "zoom_factors")}, "")
        scene = d.get("scene", copy.deepcopy(DEFAULT_SCENE))
        if not isinstance(scene, dict):
            raise ConfigError("'scene' must be an object")
        if top.threads is not None and top.threads < 1:
            raise ConfigError("threads must be a positive integer")
        return dataclasses.replace(top, scene=scene, pipeline=_decode(PipelineConfig, pipe_d, "harness.", ""))

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"

    def write(self, out_dir) -> Path:
        path = Path(out_dir) / "config.json"
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(self.to_json())
        return path


def parse_json(text: str, source: str = "<config>"):
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{source}:{exc.lineno}:{exc.colno}: invalid JSON: {exc.msg}") from None


def load_json(path):
    return parse_json(Path(path).read_text(), str(path))


def load_config(path=None) -> RunConfig:
    return RunConfig() if path is None else RunConfig.from_dict(load_json(path))


def _encode(obj):
    if dataclasses.is_dataclass(obj):
        return {f.name: _encode(getattr(obj, f.name)) for f in dataclasses.fields(obj)}
    if isinstance(obj, tuple):
        return [_encode(v) for v in obj]
    return obj


def _check_scalar(value, tp, where: str):
    """Coerce a JSON value to the annotated type, or fail naming the key."""
    origin = typing.get_origin(tp)
    if origin in (typing.Union, types.UnionType):
        args = typing.get_args(tp)
        if value is None and type(None) in args:
            return None
        for a in args:
            if a is type(None):
                continue
            try:
                return _check_scalar(value, a, where)
            except ConfigError:
                pass
        raise ConfigError(f"{where}: value {value!r} has the wrong type")
    if origin is tuple or tp is tuple:
        if not isinstance(value, list):
            raise ConfigError(f"{where}: expected a list")
        args = typing.get_args(tp)
        inner = args[0] if args else None
        return tuple(_check_scalar(v, inner, where) if inner is not None else v for v in value)
    if tp is bool:
        if not isinstance(value, bool):
            raise ConfigError(f"{where}: expected true/false")
        return value
    if tp is int:
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(f"{where}: expected an integer")
        return value
    if tp is float:
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"{where}: expected a number")
        return float(value)
    if tp is str:
        if not isinstance(value, str):
            raise ConfigError(f"{where}: expected a string")
        return value
    return value


def _decode(cls, d, prefix: str, child_prefix: str | None = None):
    if not isinstance(d, dict):
        raise ConfigError(f"{prefix.rstrip('.') or 'config'} must be an object")
    hints = typing.get_type_hints(cls)
    names = {f.name for f in dataclasses.fields(cls)}
    unknown = sorted(set(d) - names)
    if unknown:
        raise ConfigError(f"unknown config key(s): {', '.join(prefix + k for k in unknown)}")
    kwargs = {}
    for name, value in d.items():
        tp = hints[name]
        if dataclasses.is_dataclass(tp):
            kwargs[name] = _decode(tp, value, f"{prefix if child_prefix is None else child_prefix}{name}.")
        else:
            kwargs[name] = _check_scalar(value, tp, prefix + name)
    try:
        return cls(**kwargs)
    except ContractError as exc:
        raise ConfigError(f"{prefix.rstrip('.') or 'config'}: {exc}") from None
