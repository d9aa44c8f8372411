"""Problem configuration files: one JSON document with named blocks.

Blocks: domain, bounds, workpiece, material, mesh, solver, objective,
optimizer.  Schema errors carry the offending key path.  Values can be
overridden from the command line with dotted paths (missing intermediate
objects are created), e.g. ``objective.target_force=0.05``.
"""

from __future__ import annotations

import json
from dataclasses import fields

from .domain import (
    BoundsTable,
    ConfigurationError,
    DomainSpec,
    NeoHookeanMaterial,
    Reinforcement,
    Support,
    Workpiece,
    build_ground_structure,
)
from .material import PlaneStressNeoHookean, elastic_to_neo_hookean
from .meshing import MeshParams
from .objectives import ObjectiveConfig
from .optimizer import PipelineContext, RmhcParams
from .solver import SolverParams


class ConfigError(ConfigurationError):
    def __init__(self, path: str, message: str):
        super().__init__(f"config key '{path}': {message}")
        self.path = path


def load_config(path) -> dict:
    with open(path) as fh:
        try:
            return json.load(fh)
        except json.JSONDecodeError as err:
            raise ConfigError(str(path), f"not valid JSON ({err})") from err


def apply_overrides(cfg: dict, overrides: list[str]) -> dict:
    for item in overrides:
        if "=" not in item:
            raise ConfigError(item, "override must look like key.path=value")
        key, raw = item.split("=", 1)
        try:
            value = json.loads(raw)
        except json.JSONDecodeError:
            value = raw
        node = cfg
        parts = key.split(".")
        for p in parts[:-1]:
            node = node.setdefault(p, {})
            if not isinstance(node, dict):
                raise ConfigError(key, f"'{p}' is not an object")
        node[parts[-1]] = value
    return cfg


def _need(block: dict, key: str, path: str):
    if key not in block:
        raise ConfigError(f"{path}.{key}", "missing required key")
    return block[key]


def _dataclass_from(block: dict, cls, path: str, **extra):
    known = {f.name for f in fields(cls)}
    kwargs = dict(extra)
    for k, v in block.items():
        if k not in known:
            raise ConfigError(f"{path}.{k}", f"unknown key for {cls.__name__}")
        kwargs[k] = tuple(v) if isinstance(v, list) else v
    try:
        return cls(**kwargs)
    except (TypeError, ValueError) as err:
        raise ConfigError(path, str(err)) from err


def build_workpiece(cfg: dict) -> Workpiece | None:
    if "workpiece" not in cfg:
        return None
    wp = dict(cfg["workpiece"])
    path = "workpiece"
    mat = NeoHookeanMaterial(_need(wp, "c10", path), _need(wp, "d1", path))
    wp.pop("c10"), wp.pop("d1")
    shape = _need(wp, "shape", path)
    size = _need(wp, "size", path)
    wp.pop("shape"), wp.pop("size")
    placement = wp.pop("placement", None)
    return _dataclass_from(
        wp,
        Workpiece,
        path,
        shape=shape,
        size=tuple(size),
        material=mat,
        placement=None if placement is None else tuple(placement),
    )


def build_domain(cfg: dict) -> DomainSpec:
    if "domain" not in cfg:
        raise ConfigError("domain", "missing required block")
    d = dict(cfg["domain"])
    path = "domain"
    inp = _need(d, "input", path)
    out = _need(d, "output", path)
    supports = []
    for k, s in enumerate(_need(d, "supports", path)):
        supports.append(
            Support(
                vertex=_need(s, "vertex", f"{path}.supports[{k}]"),
                kind=_need(s, "kind", f"{path}.supports[{k}]"),
                normal=tuple(s.get("normal", (0.0, 1.0))),
            )
        )
    reinforcements = []
    for k, r in enumerate(d.get("reinforcements", [])):
        ends = []
        for name in ("a", "b"):
            e = _need(r, name, f"{path}.reinforcements[{k}]")
            ends.append(tuple(e) if isinstance(e, list) else int(e))
        reinforcements.append(
            Reinforcement(
                a=ends[0],
                b=ends[1],
                width=r.get("width", 2.0),
                slopes=tuple(r.get("slopes", (0.0, 0.0))),
            )
        )
    try:
        return DomainSpec(
            width=_need(d, "width", path),
            height=_need(d, "height", path),
            blocks_x=_need(d, "blocks_x", path),
            blocks_y=_need(d, "blocks_y", path),
            input_vertex=_need(inp, "vertex", f"{path}.input"),
            input_direction=tuple(_need(inp, "direction", f"{path}.input")),
            output_vertices=tuple(_need(out, "vertices", f"{path}.output")),
            output_direction=tuple(_need(out, "direction", f"{path}.output")),
            supports=tuple(supports),
            workpiece=build_workpiece(cfg),
            reinforcements=tuple(reinforcements),
            symmetry=d.get("symmetry", "none"),
            surfaces_allowed=d.get("surfaces_allowed", 0),
            surface_shapes=tuple(d.get("surface_shapes", ("rect", "circle", "ellipse"))),
        )
    except ConfigurationError as err:
        raise ConfigError(path, str(err)) from err


def build_continuum(cfg: dict) -> PlaneStressNeoHookean:
    m = cfg.get("material", {})
    if "c10" in m or "d1" in m:
        return PlaneStressNeoHookean(_need(m, "c10", "material"), _need(m, "d1", "material"))
    E = m.get("E", 20.0)
    nu = m.get("nu", 0.33)
    return PlaneStressNeoHookean(*elastic_to_neo_hookean(E, nu))


def build_context(cfg: dict) -> PipelineContext:
    if "workpiece" not in cfg:
        raise ConfigError(
            "workpiece", "missing required block (the objectives demand force transfer)"
        )
    spec = build_domain(cfg)
    bounds = _dataclass_from(cfg.get("bounds", {}), BoundsTable, "bounds")
    try:
        gs = build_ground_structure(spec, bounds)
    except ConfigurationError as err:
        raise ConfigError("domain", str(err)) from err
    mesh_params = _dataclass_from(cfg.get("mesh", {}), MeshParams, "mesh")
    solver_params = _dataclass_from(cfg.get("solver", {}), SolverParams, "solver")
    if "objective" not in cfg:
        raise ConfigError("objective", "missing required block")
    objective = _dataclass_from(cfg["objective"], ObjectiveConfig, "objective")
    return PipelineContext(
        spec=spec,
        gs=gs,
        bounds=bounds,
        mesh_params=mesh_params,
        solver_params=solver_params,
        objective=objective,
        continuum=build_continuum(cfg),
    )


def build_rmhc_params(cfg: dict, seed_override=None) -> RmhcParams:
    block = dict(cfg.get("optimizer", {}))
    block.pop("initial", None)
    block.pop("snapshot_every", None)
    params = _dataclass_from(block, RmhcParams, "optimizer")
    if seed_override is not None:
        from dataclasses import replace

        params = replace(params, seed=int(seed_override))
    return params


def config_snapshot(cfg: dict) -> str:
    return json.dumps(cfg, indent=2, sort_keys=True) + "\n"
