"""Scene configuration documents shared by the command line and the solvers."""

from __future__ import annotations

import copy
import json
from importlib import resources
from pathlib import Path
from typing import Any, Mapping

import jsonschema

from .errors import ConfigurationError
from .stackup import (
    NATURAL_GAS,
    ROGERS_5880,
    SULFUR_EPS,
    SULFUR_LOSS_TANGENT,
    DielectricLayer,
    LayerStack,
    PatchGeometry,
    reference_geometry,
)

_GEOM = reference_geometry()

DEFAULT_CONFIG: dict[str, Any] = {
    "geometry": {
        "resonant_length_mm": _GEOM.resonant_length,
        "width_mm": _GEOM.width,
        "feed_offset_mm": _GEOM.feed_offset,
        "ground_size_mm": None,
        "deposit_offset_mm": 0.0,
    },
    "stack": {
        "substrate": {
            "eps_r": ROGERS_5880.relative_permittivity,
            "tan_d": ROGERS_5880.loss_tangent,
            "h_mm": ROGERS_5880.thickness,
        },
        "cover": None,
        "superstrate": {
            "eps_r": SULFUR_EPS,
            "tan_d": SULFUR_LOSS_TANGENT,
            "profile": {"kind": "uniform", "t_mm": 0.0, "amplitude_mm": None, "period_mm": None},
        },
        "ambient": {"eps_r": NATURAL_GAS.relative_permittivity, "tan_d": NATURAL_GAS.loss_tangent},
    },
    "solver": {
        "cell_mm": 0.254,
        "pml": 10,
        "steps": 20000,
        "pulse": {"f0_ghz": 9.0, "bw_ghz": 6.0},
        "port_ohms": 50.0,
        "margins_mm": None,
        "energy_decay": 1e-5,
        "courant_safety": 0.99,
    },
}


def schema() -> dict:
    return json.loads(resources.files("sulfursense.data").joinpath("scene.schema.json").read_text())


def validate(doc: Any) -> None:
    """Raise ``ConfigurationError`` naming the offending path when ``doc`` breaks the schema."""
    validator = jsonschema.Draft7Validator(schema())
    errors = sorted(validator.iter_errors(doc), key=lambda e: list(e.absolute_path))
    if errors:
        err = errors[0]
        path = "/".join(str(p) for p in err.absolute_path) or "<root>"
        raise ConfigurationError(f"config error at {path}: {err.message}")


def _merge(base: dict, over: Mapping) -> dict:
    out = copy.deepcopy(base)
    for k, v in over.items():
        if isinstance(v, Mapping) and isinstance(out.get(k), dict):
            out[k] = _merge(out[k], v)
        else:
            out[k] = copy.deepcopy(v)
    return out


class SceneConfig:
    """A validated scene document with defaults filled in."""

    def __init__(self, doc: Mapping | None = None):
        doc = {} if doc is None else doc
        validate(doc)
        self.data = _merge(DEFAULT_CONFIG, doc)
        validate(self.data)

    @classmethod
    def load(cls, path) -> "SceneConfig":
        try:
            doc = json.loads(Path(path).read_text())
        except json.JSONDecodeError as exc:
            raise ConfigurationError(f"config {path} is not valid JSON: {exc}") from None
        except OSError as exc:
            raise ConfigurationError(f"cannot read config {path}: {exc.strerror}") from None
        return cls(doc)

    def override(self, dotted: Mapping[str, Any]) -> "SceneConfig":
        """Copy with ``{"solver.cell_mm": 0.2, ...}`` applied; ``None`` values are skipped."""
        doc = copy.deepcopy(self.data)
        for key, value in dotted.items():
            if value is None:
                continue
            node = doc
            *parents, leaf = key.split(".")
            for p in parents:
                if node.get(p) is None:
                    node[p] = {}
                node = node[p]
            node[leaf] = value
        return SceneConfig(doc)

    def to_json(self) -> str:
        return json.dumps(self.data, indent=2, sort_keys=True)

    # --- model objects ---------------------------------------------------------------

    @property
    def thickness(self) -> float:
        return float(self.data["stack"]["superstrate"]["profile"]["t_mm"])

    def geometry(self) -> PatchGeometry:
        g = self.data["geometry"]
        h = self.data["stack"]["substrate"]["h_mm"]
        try:
            return PatchGeometry(g["resonant_length_mm"], g["width_mm"], h, g["feed_offset_mm"])
        except ValueError as exc:
            raise ConfigurationError(str(exc)) from None

    def stack(self, thickness: float | None = None) -> LayerStack:
        s = self.data["stack"]
        t = self.thickness if thickness is None else float(thickness)
        sub, sup, amb = s["substrate"], s["superstrate"], s["ambient"]
        cover = None
        if s.get("cover"):
            c = s["cover"]
            cover = DielectricLayer(c.get("eps_r", 2.6), c.get("tan_d", 0.0), c["thickness_mm"])
        return LayerStack(
            DielectricLayer(sub["eps_r"], sub["tan_d"], sub["h_mm"]),
            DielectricLayer(sup["eps_r"], sup["tan_d"], t),
            DielectricLayer(amb["eps_r"], amb.get("tan_d", 0.0)),
            cover,
        )

    def simulation_spec(self):
        from .fdtd.scene import GaussianPulse, PatchScene, SimulationSpec, SuperstrateProfile

        g, sol = self.data["geometry"], self.data["solver"]
        prof = self.data["stack"]["superstrate"]["profile"]
        profile = SuperstrateProfile(prof["kind"], prof["t_mm"], prof.get("amplitude_mm"), prof.get("period_mm"))
        ground = g.get("ground_size_mm")
        scene = PatchScene(
            self.geometry(),
            self.stack(),
            profile,
            ground_size=None if ground is None else tuple(ground),
            margins=sol.get("margins_mm"),
            deposit_offset=g.get("deposit_offset_mm", 0.0),
        )
        return SimulationSpec(
            scene,
            cell_size=sol["cell_mm"],
            pml_layers=sol["pml"],
            time_steps=sol["steps"],
            excitation=GaussianPulse(sol["pulse"]["f0_ghz"], sol["pulse"]["bw_ghz"]),
            port_resistance=sol["port_ohms"],
            energy_decay=sol["energy_decay"],
            courant_safety=sol["courant_safety"],
        )
