"""Shared domain types, experiment presets and config/JSON serialization.

Units: frequencies and energies in MHz, lengths in mm.  Energies ``E`` are
measured relative to the Dirac point ``f0``; absolute frequencies are
``f0 + E``.
"""
from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass
from pathlib import Path
from typing import Any

import numpy as np

__all__ = [
    "ConfigError",
    "DiracParams",
    "Geometry",
    "ExperimentPreset",
    "PRESETS",
    "PAPER_MC2",
    "PAPER_HBAR_C_OVER_A0",
    "PAPER_F0",
    "PAPER_V0",
    "PAPER_A0",
    "PAPER_DISORDER_SIGMA",
    "make_params",
    "paper_params",
    "get_preset",
    "write_config",
    "read_config",
    "params_from_config",
    "params_from_json",
    "to_json_dict",
    "dump_json",
]

# Extracted constants of the resonator chain (MHz, mm).
PAPER_MC2 = 12.894
PAPER_HBAR_C_OVER_A0 = 61.325
PAPER_F0 = 6713.0
PAPER_V0 = 81.5
PAPER_A0 = 20.5
PAPER_DISORDER_SIGMA = 2.7


class ConfigError(ValueError):
    """Invalid physical parameters or malformed configuration."""


@dataclass(frozen=True)
class Geometry:
    n_left: int
    n_right: int

    def __post_init__(self):
        if int(self.n_left) != self.n_left or int(self.n_right) != self.n_right:
            raise ConfigError("dimer counts must be integers")
        if self.n_left <= 0 or self.n_right <= 0:
            raise ConfigError(
                f"dimer counts must be positive, got ({self.n_left}, {self.n_right})"
            )

    @property
    def n_total(self) -> int:
        return self.n_left + self.n_right

    def step_position(self, a0: float) -> float:
        return (self.n_left + 0.25) * a0

    def box_length(self, a0: float) -> float:
        return (self.n_total + 0.5) * a0


@dataclass(frozen=True)
class DiracParams:
    """Continuum Dirac-box parameters.

    ``mass_energy`` is mc^2, ``hbar_c`` is c*hbar in MHz*mm, ``step_height``
    is V0 (equal to the on-site frequency step of the chain), ``step_position``
    and ``box_length`` are a and d.
    """

    mass_energy: float
    hbar_c: float
    dirac_point: float
    step_height: float
    lattice_const: float
    step_position: float
    box_length: float

    def __post_init__(self):
        for name in ("mass_energy", "hbar_c", "step_height", "lattice_const"):
            val = getattr(self, name)
            if not np.isfinite(val) or val <= 0:
                raise ConfigError(f"{name} must be positive and finite, got {val!r}")
        if not np.isfinite(self.dirac_point):
            raise ConfigError("dirac_point must be finite")
        if self.step_height <= 2 * self.mass_energy:
            raise ConfigError(
                f"empty Klein window: step_height={self.step_height} <= "
                f"2*mass_energy={2 * self.mass_energy}"
            )
        if not 0 < self.step_position < self.box_length:
            raise ConfigError(
                f"need 0 < step_position < box_length, got "
                f"a={self.step_position}, d={self.box_length}"
            )

    @property
    def barrier_length(self) -> float:
        """Length b = d - a of the region under the step."""
        return self.box_length - self.step_position

    @property
    def klein_window(self) -> tuple[float, float]:
        """Open energy interval (mc^2, V0 - mc^2) relative to f0."""
        return (self.mass_energy, self.step_height - self.mass_energy)

    @property
    def klein_window_mhz(self) -> tuple[float, float]:
        lo, hi = self.klein_window
        return (self.dirac_point + lo, self.dirac_point + hi)

    def replace(self, **changes) -> "DiracParams":
        return dataclasses.replace(self, **changes)


def make_params(
    geometry: Geometry,
    mc2: float,
    hbar_c: float,
    f0: float,
    v0: float,
    a0: float,
) -> DiracParams:
    """Build :class:`DiracParams` with a and d fixed by the dimer counts.

    The box is d = (N_L + N_R + 1/2) a0 and the step sits at
    a = (N_L + 1/4) a0, midway between the last left B site and the first
    right A site.
    """
    return DiracParams(
        mass_energy=float(mc2),
        hbar_c=float(hbar_c),
        dirac_point=float(f0),
        step_height=float(v0),
        lattice_const=float(a0),
        step_position=geometry.step_position(a0),
        box_length=geometry.box_length(a0),
    )


def paper_params(geometry: Geometry | tuple[int, int] = (15, 15)) -> DiracParams:
    """Params at the extracted experimental constants for a given geometry."""
    if not isinstance(geometry, Geometry):
        geometry = Geometry(*geometry)
    return make_params(
        geometry,
        PAPER_MC2,
        PAPER_HBAR_C_OVER_A0 * PAPER_A0,
        PAPER_F0,
        PAPER_V0,
        PAPER_A0,
    )


@dataclass(frozen=True)
class ExperimentPreset:
    id: str
    geometry: Geometry
    disorder_sigma: float
    seed: int
    permute_flag: bool = False


# E2 is an independent draw of E1; E3 reuses E1's draws with a shuffled order.
PRESETS: dict[str, ExperimentPreset] = {
    "E1": ExperimentPreset("E1", Geometry(15, 15), PAPER_DISORDER_SIGMA, 1),
    "E2": ExperimentPreset("E2", Geometry(15, 15), PAPER_DISORDER_SIGMA, 2),
    "E3": ExperimentPreset("E3", Geometry(15, 15), PAPER_DISORDER_SIGMA, 1, True),
    "E4": ExperimentPreset("E4", Geometry(15, 9), PAPER_DISORDER_SIGMA, 4),
}


def get_preset(name: str) -> ExperimentPreset:
    try:
        return PRESETS[name.upper()]
    except KeyError:
        raise ConfigError(
            f"unknown preset {name!r}; choose from {sorted(PRESETS)}"
        ) from None


# -- config files -----------------------------------------------------------

_PARAM_KEYS = {
    "mass_energy": "mc2_mhz",
    "hbar_c": "hbar_c_mhz_mm",
    "dirac_point": "f0_mhz",
    "step_height": "v0_mhz",
    "lattice_const": "a0_mm",
    "step_position": "a_mm",
    "box_length": "d_mm",
}


def _fmt(value: Any) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    return str(value)


def _parse(text: str) -> Any:
    low = text.lower()
    if low in ("true", "false"):
        return low == "true"
    try:
        return int(text)
    except ValueError:
        pass
    try:
        return float(text)
    except ValueError:
        return text


def write_config(path: str | Path, params: DiracParams | None = None, **extra) -> None:
    """Write a flat ``key=value`` config file.

    Floats are written with ``repr`` so that reading back is bit-identical.
    """
    lines = []
    if params is not None:
        for attr, key in _PARAM_KEYS.items():
            lines.append(f"{key}={_fmt(getattr(params, attr))}")
    for key, value in extra.items():
        lines.append(f"{key}={_fmt(value)}")
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def read_config(path: str | Path) -> dict[str, Any]:
    """Parse a ``key=value`` file; ``#`` starts a comment."""
    out: dict[str, Any] = {}
    for lineno, raw in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{lineno}: expected key=value, got {raw!r}")
        key, value = (s.strip() for s in line.split("=", 1))
        out[key] = _parse(value)
    return out


def params_from_config(cfg: dict[str, Any]) -> DiracParams:
    """Rebuild :class:`DiracParams` from a parsed config.

    Accepts either explicit ``a_mm``/``d_mm`` or ``n_left``/``n_right``.
    """
    try:
        mc2 = float(cfg["mc2_mhz"])
        hbar_c = float(cfg["hbar_c_mhz_mm"])
        f0 = float(cfg["f0_mhz"])
        v0 = float(cfg["v0_mhz"])
        a0 = float(cfg["a0_mm"])
    except KeyError as exc:
        raise ConfigError(f"missing config key {exc.args[0]!r}") from None
    if "a_mm" in cfg and "d_mm" in cfg:
        return DiracParams(mc2, hbar_c, f0, v0, a0, float(cfg["a_mm"]), float(cfg["d_mm"]))
    try:
        geom = Geometry(int(cfg["n_left"]), int(cfg["n_right"]))
    except KeyError as exc:
        raise ConfigError(f"missing config key {exc.args[0]!r}") from None
    return make_params(geom, mc2, hbar_c, f0, v0, a0)



# -- JSON -------------------------------------------------------------------

_JSON_NAMES = {
    **_PARAM_KEYS,
    "disorder_sigma": "disorder_sigma_mhz",
    "onsite_left": "onsite_left_mhz",
    "onsite_right": "onsite_right_mhz",
    "v": "v_mhz",
    "w": "w_mhz",
}


def to_json_dict(obj: Any) -> Any:
    """Recursively convert dataclasses/arrays to JSON-ready values.

    Field names gain unit suffixes where a unit applies.
    """
    if dataclasses.is_dataclass(obj) and not isinstance(obj, type):
        out = {}
        for f in dataclasses.fields(obj):
            if f.metadata.get("json", True) is False:
                continue
            out[_JSON_NAMES.get(f.name, f.name)] = to_json_dict(getattr(obj, f.name))
        return out
    if isinstance(obj, dict):
        return {str(k): to_json_dict(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [to_json_dict(v) for v in obj]
    if isinstance(obj, np.ndarray):
        if np.iscomplexobj(obj):
            return {"re": obj.real.tolist(), "im": obj.imag.tolist()}
        return obj.tolist()
    if isinstance(obj, np.generic):
        return obj.item()
    if isinstance(obj, complex):
        return {"re": obj.real, "im": obj.imag}
    return obj


def dump_json(obj: Any, path: str | Path | None = None) -> str:
    text = json.dumps(to_json_dict(obj), indent=2, sort_keys=False)
    if path is not None:
        Path(path).write_text(text + "\n", encoding="utf-8")
    return text


def params_from_json(data: dict[str, Any]) -> DiracParams:
    return DiracParams(**{attr: float(data[key]) for attr, key in _PARAM_KEYS.items()})

