"""Scenario configuration: a single versioned JSON document."""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import jsonschema
import numpy as np

from dsar.forward import GRID_MODELS, GridAxes, ScenarioParams, Scene
from dsar.geometry import Trajectory, trajectory_from_dict
from dsar.imaging import BEAM_KINDS, REGION_LABELS, BeamPattern, ImageGrid

SCHEMA_TAG = "dsar-config/1"

_pos = {"type": "number", "exclusiveMinimum": 0}
_pair = {"type": "array", "items": {"type": "number"}, "minItems": 2, "maxItems": 2}
_beam = {
    "type": "object",
    "additionalProperties": False,
    "required": ["kind"],
    "properties": {
        "kind": {"enum": list(BEAM_KINDS)},
        "taper": _pos,
        "u_max": {"type": "number", "exclusiveMinimum": 0, "maximum": 1},
        "labels": {"type": "array", "items": {"enum": list(REGION_LABELS)}, "minItems": 1},
        "parts": {"type": "array", "items": {"$ref": "#/$defs/beam"}, "minItems": 1},
    },
}

SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "type": "object",
    "additionalProperties": False,
    "required": ["schema", "trajectory", "scenario"],
    "$defs": {"beam": _beam},
    "properties": {
        "schema": {"const": SCHEMA_TAG},
        "trajectory": {
            "oneOf": [
                {
                    "type": "object",
                    "additionalProperties": False,
                    "required": ["kind", "h"],
                    "properties": {"kind": {"const": "linear"}, "h": _pos},
                },
                {
                    "type": "object",
                    "additionalProperties": False,
                    "required": ["kind", "rho", "h"],
                    "properties": {"kind": {"const": "circular"}, "rho": _pos, "h": _pos},
                },
            ]
        },
        "scenario": {
            "type": "object",
            "additionalProperties": False,
            "required": ["omega0", "c0", "L"],
            "properties": {"omega0": _pos, "c0": _pos, "L": _pos},
        },
        "scene": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "scatterers": {
                    "type": "array",
                    "items": {
                        "type": "object",
                        "additionalProperties": False,
                        "required": ["x"],
                        "properties": {
                            "x": _pair,
                            "amplitude": {"oneOf": [{"type": "number"}, _pair]},
                        },
                    },
                },
                "raster": {
                    "type": "object",
                    "additionalProperties": False,
                    "required": ["path", "origin", "spacing"],
                    "properties": {
                        "path": {"type": "string"},
                        "origin": _pair,
                        "spacing": {"type": "array", "items": _pos, "minItems": 2, "maxItems": 2},
                    },
                },
            },
        },
        "model": {"enum": list(GRID_MODELS)},
        "data_grid": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "n_s": {"type": "integer", "minimum": 1},
                "n_omega": {"type": "integer", "minimum": 1},
                "s0": {"type": "number"},
                "ds": _pos,
                "omega_start": {"type": "number"},
                "domega": _pos,
                "doppler_span": _pos,
            },
        },
        "image_grid": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "x1": _pair,
                "x2": _pair,
                "n1": {"type": "integer", "minimum": 2},
                "n2": {"type": "integer", "minimum": 2},
            },
        },
        "beam": {"$ref": "#/$defs/beam"},
        "filter": {"enum": ["none", "ramp"]},
        "output_dir": {"type": "string"},
        "seed": {"type": "integer", "minimum": 0},
        "threads": {"type": "integer", "minimum": 1},
        "analyze": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "s": {"type": "number"},
                "tau": {"type": "number", "not": {"const": 0}},
                "n_sigma": {"type": "integer", "minimum": 1},
                "n_classify": {"type": "integer", "minimum": 1},
            },
        },
    },
}


class ConfigError(ValueError):
    """Configuration is malformed or inconsistent."""


@dataclass
class ScenarioConfig:
    trajectory: Trajectory
    params: ScenarioParams
    scene: Scene
    model: str
    axes: GridAxes
    image_grid: ImageGrid
    beam: BeamPattern
    filter: str
    output_dir: Path
    seed: int
    threads: int
    analyze: dict
    raw: dict


def _path_of(err) -> str:
    parts = [str(p) for p in err.absolute_path]
    return "/".join(parts) if parts else "<root>"


def validate(doc) -> None:
    validator = jsonschema.Draft202012Validator(SCHEMA)
    errors = sorted(validator.iter_errors(doc), key=lambda e: (list(map(str, e.absolute_path)), e.message))
    if errors:
        msgs = [f"{_path_of(e)}: {e.message}" for e in errors]
        raise ConfigError("invalid configuration:\n  " + "\n  ".join(msgs))


def _default_image_grid(traj, n=96) -> ImageGrid:
    if traj.kind == "circular":
        r = 1.5 * traj.rho
        return ImageGrid.from_bounds((-r, r), (-r, r), n, n)
    return ImageGrid.from_bounds((-2.0, 2.0), (-2.0, 2.0), n, n)


def _amplitude(a) -> complex:
    if a is None:
        return 1.0 + 0j
    if isinstance(a, list):
        return complex(a[0], a[1])
    return complex(a)


def build(doc: dict, base_dir: Optional[Path] = None) -> ScenarioConfig:
    """Validate a parsed document and construct the runtime objects."""
    validate(doc)
    base_dir = Path(base_dir or ".")
    try:
        traj = trajectory_from_dict(doc["trajectory"])
        sc = doc["scenario"]
        params = ScenarioParams(float(sc["omega0"]), float(sc["c0"]), float(sc["L"]))
    except ValueError as exc:
        raise ConfigError(f"scenario: {exc}") from exc
    if not params.c0 > traj.speed:
        raise ConfigError(
            f"scenario/c0: wave speed {params.c0} must exceed platform speed {traj.speed}"
        )

    scene_doc = doc.get("scene", {})
    pts = [s["x"] for s in scene_doc.get("scatterers", [])]
    amps = [_amplitude(s.get("amplitude")) for s in scene_doc.get("scatterers", [])]
    scene = Scene(np.array(pts, dtype=float).reshape(-1, 2), np.array(amps, dtype=complex))
    if "raster" in scene_doc:
        r = scene_doc["raster"]
        path = base_dir / r["path"]
        if not path.exists():
            raise ConfigError(f"scene/raster/path: file {path} does not exist")
        try:
            values = np.load(path, allow_pickle=False)
        except (OSError, ValueError) as exc:
            raise ConfigError(f"scene/raster/path: cannot read {path}: {exc}") from exc
        if values.ndim != 2:
            raise ConfigError("scene/raster/path: raster must be a 2-D array")
        scene = scene + Scene.from_raster(values, r["origin"], r["spacing"])

    g = doc.get("data_grid", {})
    default = GridAxes.default(
        traj, params, n_s=g.get("n_s", 256), n_omega=g.get("n_omega", 128), doppler_span=g.get("doppler_span", 2.5)
    )
    axes = GridAxes(
        float(g.get("s0", default.s0)),
        float(g.get("ds", default.ds)),
        default.n_s,
        float(g.get("omega_start", default.omega_start)),
        float(g.get("domega", default.domega)),
        default.n_omega,
    )

    ig = doc.get("image_grid")
    if ig is None:
        image_grid = _default_image_grid(traj)
    else:
        d = _default_image_grid(traj)
        a1, a2 = d.axes()
        x1 = ig.get("x1", [a1[0], a1[-1]])
        x2 = ig.get("x2", [a2[0], a2[-1]])
        if not (x1[1] > x1[0] and x2[1] > x2[0]):
            raise ConfigError("image_grid: ranges must be increasing")
        image_grid = ImageGrid.from_bounds(x1, x2, ig.get("n1", 96), ig.get("n2", 96))

    try:
        beam = BeamPattern.from_dict(doc.get("beam", {"kind": "isotropic"}))
    except ValueError as exc:
        raise ConfigError(f"beam: {exc}") from exc
    if beam.kind == "range_gate" and traj.kind != "circular":
        raise ConfigError("beam/kind: range_gate needs a circular trajectory")

    return ScenarioConfig(
        trajectory=traj,
        params=params,
        scene=scene,
        model=doc.get("model", "start-stop"),
        axes=axes,
        image_grid=image_grid,
        beam=beam,
        filter=doc.get("filter", "none"),
        output_dir=base_dir / doc.get("output_dir", "out"),
        seed=int(doc.get("seed", 0)),
        threads=int(doc.get("threads", 1)),
        analyze={"s": 0.0, "tau": 1.0, "n_sigma": 200, "n_classify": 20, **doc.get("analyze", {})},
        raw=doc,
    )


def load(path) -> ScenarioConfig:
    path = Path(path)
    text = path.read_text(encoding="utf-8")  # OSError propagates as an I/O failure
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: not valid JSON: {exc}") from exc
    return build(doc, path.parent)
