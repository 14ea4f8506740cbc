"""Experiment configuration files (YAML, versioned, strict keys).

Example::

    schema_version: 1
    name: torus_diag
    target: pointwise_diag
    system: {kind: torus, dim: 2}
    cbar: [0.6, 0.8]
    lambdas: [25, 50, 100, 200, 400]
    points: {kind: random, count: 3}
    output: out/torus_diag

Unknown keys and malformed values raise
:class:`ConfigurationError` naming the field and, when known, the line.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import yaml

from .errors import ConfigurationError

SCHEMA_VERSION = 1
TARGETS = ("pointwise_diag", "pointwise_offdiag", "integrated", "cluster",
           "smoothed_measure", "tauberian", "none")

_SCHEMA = {
    "schema_version": int,
    "name": str,
    "target": str,
    "system": {"kind": str, "dim": int, "profile": str, "params": list,
               "grid_size": int, "lam_max": float},
    "band": {"sigma_lo": float, "sigma_hi": float},
    "cutoff": {"kind": str, "c_min": float, "c_max": float, "width": float,
               "axis": list, "half_angle": float},
    "cbar": list,
    "lambdas": list,
    "points": {"kind": str, "coords": list, "count": int, "theta": float},
    "pair_separation": float,
    "phase_mode": str,
    "mollifier": {"delta0": float},
    "ray": list,
    "reflected": bool,
    "cone": {"axis": list, "half_angle": float},
    "cluster_boxes": int,
    "threshold": float,
    "geometry": {"n_angles": int, "n_sigma": int},
    "output": str,
    "seed": int,
    "threads": int,
}


@dataclass(frozen=True)
class ExperimentConfig:
    name: str
    target: str
    system: dict
    cbar: tuple = ()
    lambdas: tuple = ()
    band: dict | None = None
    cutoff: dict = field(default_factory=lambda: {"kind": "identity"})
    points: dict = field(default_factory=lambda: {"kind": "random", "count": 1})
    pair_separation: float = 0.4
    phase_mode: str = "full_phase"
    delta0: float = 0.75
    ray: tuple | None = None
    reflected: bool = False
    cone: dict | None = None
    cluster_boxes: int = 40
    threshold: float | None = None
    geometry: dict = field(default_factory=dict)
    output: str = "out"
    seed: int = 20240611
    threads: int | None = None
    source: str | None = None

    @property
    def dim(self) -> int:
        return int(self.system.get("dim", 2)) if self.system["kind"] == "torus" else 2


def _line(node) -> str:
    return f" (line {node.start_mark.line + 1})" if node is not None else ""


def _key_nodes(node) -> dict:
    """Map key -> (key node, value node) for a YAML mapping node."""
    if not isinstance(node, yaml.MappingNode):
        return {}
    return {k.value: (k, v) for k, v in node.value}


def _check_type(path: str, value, expected, node):
    if expected is float:
        ok = isinstance(value, (int, float)) and not isinstance(value, bool)
    elif expected is int:
        ok = isinstance(value, int) and not isinstance(value, bool)
    else:
        ok = isinstance(value, expected)
    if not ok:
        raise ConfigurationError(
            f"field '{path}'{_line(node)}: expected {expected.__name__}, got {type(value).__name__}"
        )


def _validate(data: dict, schema: dict, node, prefix: str = ""):
    nodes = _key_nodes(node)
    for key, value in data.items():
        path = f"{prefix}{key}"
        knode, vnode = nodes.get(key, (None, None))
        if key not in schema:
            raise ConfigurationError(f"unknown key '{path}'{_line(knode)}")
        spec = schema[key]
        if isinstance(spec, dict):
            if not isinstance(value, dict):
                raise ConfigurationError(f"field '{path}'{_line(vnode)}: expected a mapping")
            _validate(value, spec, vnode, path + ".")
        else:
            _check_type(path, value, spec, vnode)


def _floats(path, seq, node=None) -> tuple:
    try:
        return tuple(float(v) for v in seq)
    except (TypeError, ValueError):
        raise ConfigurationError(f"field '{path}'{_line(node)}: expected a list of numbers") from None


def parse_config(text: str, source: str | None = None) -> ExperimentConfig:
    try:
        node = yaml.compose(text, Loader=yaml.SafeLoader)
        data = yaml.safe_load(text)
    except yaml.MarkedYAMLError as exc:
        mark = exc.problem_mark
        where = f" at line {mark.line + 1}, column {mark.column + 1}" if mark else ""
        raise ConfigurationError(f"parse error{where}: {exc.problem}") from None
    if not isinstance(data, dict):
        raise ConfigurationError("configuration must be a mapping")
    _validate(data, _SCHEMA, node)
    nodes = _key_nodes(node)

    def need(key):
        if key not in data:
            raise ConfigurationError(f"missing required field '{key}'")
        return data[key]

    version = need("schema_version")
    if version != SCHEMA_VERSION:
        raise ConfigurationError(f"unsupported schema_version {version} (expected {SCHEMA_VERSION})")
    target = need("target")
    if target not in TARGETS:
        raise ConfigurationError(f"field 'target'{_line(nodes['target'][1])}: unknown target {target!r}")
    system = dict(need("system"))
    kind = system.get("kind")
    if kind not in ("torus", "sor"):
        raise ConfigurationError(f"field 'system.kind': must be 'torus' or 'sor', got {kind!r}")
    if kind == "sor" and "profile" not in system:
        raise ConfigurationError("field 'system.profile' is required for kind 'sor'")

    cbar = _floats("cbar", data.get("cbar", ()), nodes.get("cbar", (None, None))[1])
    if cbar:
        if any(v == 0.0 for v in cbar):
            raise ConfigurationError("c̄ components must be nonzero")
        if abs(np.linalg.norm(cbar) - 1.0) > 1e-12:
            raise ConfigurationError(f"c̄ must be a unit vector (norm {np.linalg.norm(cbar):.15g})")
    lambdas = _floats("lambdas", data.get("lambdas", ()), nodes.get("lambdas", (None, None))[1])
    if lambdas and (np.any(np.diff(lambdas) <= 0) or lambdas[0] <= 0):
        raise ConfigurationError("field 'lambdas': λ grid must be positive and strictly increasing")
    if target in ("pointwise_diag", "pointwise_offdiag", "tauberian") and not cbar:
        raise ConfigurationError(f"target {target} needs 'cbar'")
    if target != "none" and not lambdas:
        raise ConfigurationError(f"target {target} needs 'lambdas'")
    dim = int(system.get("dim", 2)) if kind == "torus" else 2
    if cbar and len(cbar) != dim:
        raise ConfigurationError(f"field 'cbar': expected {dim} components")

    cutoff = dict(data.get("cutoff", {"kind": "identity"}))
    if cutoff.get("kind", "identity") not in ("identity", "sor", "torus"):
        raise ConfigurationError(f"field 'cutoff.kind': unknown kind {cutoff.get('kind')!r}")
    phase_mode = data.get("phase_mode", "full_phase")
    if phase_mode not in ("full_phase", "linearized"):
        raise ConfigurationError(f"field 'phase_mode': unknown mode {phase_mode!r}")
    points = dict(data.get("points", {"kind": "random", "count": 1}))
    if points.get("kind") not in ("explicit", "band", "random"):
        raise ConfigurationError(f"field 'points.kind': unknown kind {points.get('kind')!r}")

    return ExperimentConfig(
        name=str(data.get("name", Path(source).stem if source else "experiment")),
        target=target,
        system=system,
        cbar=cbar,
        lambdas=lambdas,
        band=data.get("band"),
        cutoff=cutoff,
        points=points,
        pair_separation=float(data.get("pair_separation", 0.4)),
        phase_mode=phase_mode,
        delta0=float(data.get("mollifier", {}).get("delta0", 0.75)),
        ray=_floats("ray", data["ray"]) if "ray" in data else None,
        reflected=bool(data.get("reflected", False)),
        cone=data.get("cone"),
        cluster_boxes=int(data.get("cluster_boxes", 40)),
        threshold=float(data["threshold"]) if "threshold" in data else None,
        geometry=dict(data.get("geometry", {})),
        output=str(data.get("output", "out")),
        seed=int(data.get("seed", 20240611)),
        threads=data.get("threads"),
        source=source,
    )


def load_config(path) -> ExperimentConfig:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigurationError(f"cannot read {path}: {exc.strerror}") from None
    cfg = parse_config(text, str(path))
    return cfg
