"""Experiment manifests: TOML with nested sections and typed scalars.

A manifest names either a library example (with constructor overrides) or
an explicit model (frequencies plus sampling pieces). Unknown keys are
rejected anywhere. All randomness downstream flows from the single seed.
The schema is documented in manifests/README.md.
"""

from __future__ import annotations

import dataclasses
import hashlib

try:
    import tomllib
except ModuleNotFoundError:  # 3.10
    import tomli as tomllib

from . import library as lib
from .boxes import LatticeBox
from .errors import ManifestError
from .sampling import (
    FlatPiece,
    LinearPiece,
    OddPowerPiece,
    SamplingFunction,
    TangentPiece,
    verify_diophantine,
)

_EXAMPLE_OVERRIDES = {
    "example1": {"omega", "l_over_omega", "energy", "center", "mild_slope", "c_reg",
                 "r", "scan_radius", "eps", "steep_climb", "steep_width_over_beta"},
    "example2": {"omega", "l_over_omega1", "energy", "center", "wall_scale", "c_reg",
                 "r", "scan_radius", "eps"},
    "example3": {"omega", "centers", "energies", "l_over_omega", "wall_scale", "c_reg",
                 "r", "scan_radius", "eps"},
    "example4": {"omega", "centers", "energies", "l_over_omega", "wall_scale", "c_reg",
                 "r", "scan_radius", "eps"},
    "example5": {"k", "omega", "l_over_omega", "energy_step", "wall_scale", "c_reg",
                 "r", "scan_radius", "eps"},
    "example6": {"omega", "l_over_omega1", "base_center", "energy_step", "wall_scale",
                 "c_reg", "r", "scan_radius", "eps"},
}

_PIECE_KEYS = {
    "flat": {"lo", "hi", "value"},
    "tangent": {"lo", "hi", "scale", "center", "offset"},
    "linear": {"lo", "hi", "slope", "intercept"},
    "oddpow": {"lo", "hi", "scale", "power", "center", "offset"},
}

_SCHEMA = {
    "name": str,
    "seed": int,
    "out": str,
    "example": dict,
    "model": dict,
    "sweep": dict,
    "grids": dict,
    "series": dict,
    "spike": dict,
}

_GRID_KEYS = {"x_points": int, "t_steps": int, "box": list, "ids_box_size": int,
              "ids_x_samples": int, "ids_energy_points": int, "pattern_dps": int}
_SWEEP_KEYS = {"eps": list}
_SERIES_KEYS = {"site": list, "order": int, "box": list, "x": float}
_SPIKE_KEYS = {"center": float, "span": float, "bandwidth_factor": float,
               "window_factor": float}
_MODEL_KEYS = {"omega": list, "scan_radius": int, "c_reg": float, "e_reg": float,
               "pieces": list, "x0": float, "s_sites": list, "r": int, "eps": float}


def _reject_unknown(section, mapping, allowed):
    for key in mapping:
        if key not in allowed:
            raise ManifestError(f"unknown key {key!r} in [{section}]" if section
                                else f"unknown top-level key {key!r}")


def _typed(section, mapping, types):
    for key, val in mapping.items():
        want = types[key]
        if want is float and isinstance(val, int):
            continue
        if not isinstance(val, want):
            raise ManifestError(f"[{section}] {key} must be {want.__name__}")


def _build_piece(spec):
    kind = spec.get("kind")
    if kind not in _PIECE_KEYS:
        raise ManifestError(f"unknown piece kind {kind!r}")
    keys = set(spec) - {"kind"}
    if not keys <= _PIECE_KEYS[kind]:
        raise ManifestError(f"unknown piece keys {sorted(keys - _PIECE_KEYS[kind])}")
    args = {k: spec[k] for k in keys}
    cls = {"flat": FlatPiece, "tangent": TangentPiece, "linear": LinearPiece,
           "oddpow": OddPowerPiece}[kind]
    try:
        return cls(**args)
    except (TypeError, ValueError) as exc:
        raise ManifestError(f"bad {kind} piece: {exc}") from exc


class ExplicitModel:
    """Manifest-defined sampling function and frequency (no library example)."""

    def __init__(self, section):
        _reject_unknown("model", section, set(_MODEL_KEYS))
        _typed("model", section, _MODEL_KEYS)
        for key in ("omega", "scan_radius", "c_reg", "pieces"):
            if key not in section:
                raise ManifestError(f"[model] requires {key}")
        self.name = "explicit"
        self.d = len(section["omega"])
        self.c_reg = float(section["c_reg"])
        self.scan_radius = int(section["scan_radius"])
        self.eps = float(section.get("eps", 1e-2))
        self.r = int(section.get("r", 3))
        self._omega = [float(w) for w in section["omega"]]
        self._e_reg = section.get("e_reg")
        self._pieces = [_build_piece(p) for p in section["pieces"]]
        self.x0 = float(section.get("x0", -self._omega[0]))
        self._s_sites = [tuple(int(c) for c in s) for s in section.get("s_sites", [])]
        self._f = None
        self._fv = None

    def sampling_function(self):
        if self._f is None:
            try:
                self._f = SamplingFunction(self._pieces, e_reg=self._e_reg)
            except ValueError as exc:
                raise ManifestError(f"invalid sampling pieces: {exc}") from exc
        return self._f

    def frequency(self):
        if self._fv is None:
            self._fv = verify_diophantine(self._omega, self.scan_radius)
        return self._fv

    def s_sites(self):
        if not self._s_sites:
            raise ManifestError("[model] s_sites required for frame-based commands")
        return self._s_sites

    def frame(self, gen2_x_points=9):
        from .movingblock import build_frame
        return build_frame(self.s_sites(), self.r, self.x0, self.sampling_function(),
                           self.frequency(), self.c_reg, gen2_x_points=gen2_x_points)


@dataclasses.dataclass
class Manifest:
    name: str
    seed: int
    out: str
    config: object
    eps_list: list
    grids: dict
    series: dict
    spike: dict
    sha256: str
    path: str

    def analysis_box(self):
        if "box" in self.grids:
            lo, hi = self.grids["box"]
            lo = (lo,) if isinstance(lo, int) else tuple(lo)
            hi = (hi,) if isinstance(hi, int) else tuple(hi)
            return LatticeBox(lo, hi)
        if hasattr(self.config, "analysis_box"):
            return self.config.analysis_box()
        raise ManifestError("no [grids].box and the model has no default box")


def load_manifest(path):
    try:
        with open(path, "rb") as fh:
            raw = fh.read()
        data = tomllib.loads(raw.decode())
    except FileNotFoundError as exc:
        raise ManifestError(f"manifest not found: {path}") from exc
    except tomllib.TOMLDecodeError as exc:
        raise ManifestError(f"TOML parse error: {exc}") from exc

    _reject_unknown(None, data, set(_SCHEMA))
    for key in ("name", "seed"):
        if key not in data:
            raise ManifestError(f"manifest requires top-level {key!r}")
    _typed("top-level", {k: v for k, v in data.items() if not isinstance(v, dict)},
           {k: t for k, t in _SCHEMA.items() if t is not dict})

    if ("example" in data) == ("model" in data):
        raise ManifestError("exactly one of [example] or [model] is required")

    if "example" in data:
        section = dict(data["example"])
        name = section.pop("name", None)
        if name not in _EXAMPLE_OVERRIDES:
            raise ManifestError(f"unknown example {name!r}")
        _reject_unknown("example", section, _EXAMPLE_OVERRIDES[name])
        builders = {
            "example1": lib.Example1Config,
            "example2": lib.Example2Config,
            "example3": lambda **kw: lib.TwoPieceConfig("example3", **kw),
            "example4": lambda **kw: lib.TwoPieceConfig(
                "example4", centers=kw.pop("centers", (-0.06, -0.06 + 5.4 * lib.OMEGA_EX3)),
                **kw),
            "example5": lib.ChainConfig,
            "example6": lib.TreeConfig,
        }
        try:
            config = builders[name](**section)
        except (TypeError, ValueError) as exc:
            raise ManifestError(f"bad [example] overrides: {exc}") from exc
    else:
        config = ExplicitModel(data["model"])

    sweep = dict(data.get("sweep", {}))
    _reject_unknown("sweep", sweep, set(_SWEEP_KEYS))
    eps_list = [float(e) for e in sweep.get("eps", [getattr(config, "eps", 1e-2)])]
    if any(not 0 <= e < 1 for e in eps_list):
        raise ManifestError("[sweep] eps values must lie in [0, 1)")

    grids = dict(data.get("grids", {}))
    _reject_unknown("grids", grids, set(_GRID_KEYS))
    _typed("grids", grids, _GRID_KEYS)

    series = dict(data.get("series", {}))
    _reject_unknown("series", series, set(_SERIES_KEYS))
    spike = dict(data.get("spike", {}))
    _reject_unknown("spike", spike, set(_SPIKE_KEYS))

    return Manifest(
        name=str(data["name"]), seed=int(data["seed"]),
        out=str(data.get("out", "runs/" + str(data["name"]))),
        config=config, eps_list=eps_list, grids=grids, series=series, spike=spike,
        sha256=hashlib.sha256(raw).hexdigest(), path=str(path))
