"""Run-configuration files: a documented YAML schema over `SimConfig`.

Every physical quantity carries its unit in the key name (`_um`, `_mm`,
`_hz`, ...), values are converted to SI on load, and unknown keys are
rejected with a diagnostic naming the key.  `parse_run_config` and
`serialize_run_config` round-trip: parse -> serialize -> parse yields an
identical configuration.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Any, Callable

import numpy as np
import yaml

from .control import AutoFocusConfig, HapticConfig, SignLaw
from .imaging import FocusProfile
from .operator import (
    AxialPolicy,
    NaiveFocusConfig,
    OperatorMode,
    OperatorScript,
    TremorModel,
    triangle_waypoints,
)
from .phantom import PatientMotion, TissueModel
from .robot import RobotModel
from .sim import AxialController, SimConfig, SimMode

SCHEMA_VERSION = 1


class ConfigError(ValueError):
    """Malformed run-configuration document."""


def _unit_number(value_si: float, scale: float) -> float:
    """File-unit representation of `value_si` that divides back exactly.

    The parser maps a file value y to y / scale; return a y whose division
    reproduces `value_si` bit-for-bit so serialization round-trips.
    """
    y = value_si * scale
    for candidate in (y, np.nextafter(y, math.inf), np.nextafter(y, -math.inf)):
        if float(candidate) / scale == value_si:
            return float(candidate)
    return float(y)


@dataclass(frozen=True)
class _Key:
    """One schema entry: file key (with unit suffix) bound to a converter."""

    name: str
    kind: str  # int | float | bool | str | pair | nullable_float
    scale: float = 1.0  # file value / scale = SI value
    choices: tuple[str, ...] | None = None

    def parse(self, raw: Any, path: str) -> Any:
        if self.kind == "int":
            if isinstance(raw, bool) or not isinstance(raw, int):
                raise ConfigError(f"key '{path}' must be an integer")
            return raw
        if self.kind == "bool":
            if not isinstance(raw, bool):
                raise ConfigError(f"key '{path}' must be a boolean")
            return raw
        if self.kind == "str":
            if not isinstance(raw, str):
                raise ConfigError(f"key '{path}' must be a string")
            if self.choices is not None and raw not in self.choices:
                raise ConfigError(
                    f"key '{path}' must be one of {list(self.choices)}, got '{raw}'"
                )
            return raw
        if self.kind == "nullable_float":
            if raw is None:
                return None
            return self._float(raw, path) / self.scale
        if self.kind == "pair":
            if not isinstance(raw, (list, tuple)) or len(raw) != 2:
                raise ConfigError(f"key '{path}' must be a pair of numbers")
            return tuple(self._float(v, path) / self.scale for v in raw)
        return self._float(raw, path) / self.scale

    @staticmethod
    def _float(raw: Any, path: str) -> float:
        if isinstance(raw, bool) or not isinstance(raw, (int, float)):
            raise ConfigError(f"key '{path}' must be a number")
        return float(raw)

    def unparse(self, value: Any) -> Any:
        if self.kind in ("int", "bool", "str"):
            return value
        if self.kind == "nullable_float":
            return None if value is None else _unit_number(value, self.scale)
        if self.kind == "pair":
            return [_unit_number(v, self.scale) for v in value]
        return _unit_number(value, self.scale)


_MODES = tuple(m.value for m in SimMode)
_CONTROLLERS = tuple(c.value for c in AxialController)
_SIGN_LAWS = tuple(s.value for s in SignLaw)
_POLICIES = tuple(p.value for p in AxialPolicy)
_OP_MODES = tuple(m.value for m in OperatorMode)

# section -> field name on the target dataclass -> schema key
_SCHEMA: dict[str, dict[str, _Key]] = {
    "sim": {
        "mode": _Key("mode", "str", choices=_MODES),
        "control_rate_hz": _Key("control_rate_hz", "int"),
        "pcle_rate_hz": _Key("pcle_rate_hz", "int"),
        "duration_s": _Key("duration_s", "float"),
        "seed": _Key("seed", "int"),
        "frame_px": _Key("frame_px", "int"),
        "fov_m": _Key("fov_um", "float", 1e6),
        "admittance_alpha_m_s_per_n": _Key("admittance_alpha_um_s_per_n", "float", 1e6),
        "axial_controller": _Key("axial_controller", "str", choices=_CONTROLLERS),
        "safety_strict": _Key("safety_strict", "bool"),
        "start_axial_offset_m": _Key("start_axial_offset_um", "float", 1e6),
        "start_lateral_m": _Key("start_lateral_mm", "pair", 1e3),
        "stop_after_completion_s": _Key("stop_after_completion_s", "nullable_float"),
    },
    "phantom": {
        "sphere_inner_radius_m": _Key("sphere_inner_radius_mm", "nullable_float", 1e3),
        "disc_radius_m": _Key("disc_radius_mm", "float", 1e3),
        "bump_count": _Key("bump_count", "int"),
        "bump_amplitude_m": _Key("bump_amplitude_um", "float", 1e6),
        "bump_min_width_m": _Key("bump_min_width_mm", "float", 1e3),
        "bump_max_width_m": _Key("bump_max_width_mm", "float", 1e3),
        "bump_seed": _Key("bump_seed", "int"),
    },
    "patient_motion": {
        "enabled": _Key("enabled", "bool"),
        "amplitude_m": _Key("amplitude_um", "float", 1e6),
        "freq_hz": _Key("freq_hz", "float"),
        "seed": _Key("seed", "int"),
    },
    "robot": {
        "prismatic_limit_m": _Key("prismatic_limit_mm", "float", 1e3),
        "revolute_limit_rad": _Key("revolute_limit_rad", "float"),
        "linear_velocity_limit": _Key("linear_velocity_limit_mm_s", "float", 1e3),
        "angular_velocity_limit": _Key("angular_velocity_limit_rad_s", "float"),
        "resolution_m": _Key("resolution_um", "float", 1e6),
        "resolution_rad": _Key("resolution_rad", "float"),
        "track_tau_s": _Key("track_tau_ms", "float", 1e3),
        "orientation_locked": _Key("orientation_locked", "bool"),
    },
    "autofocus": {
        "t1": _Key("t1", "float"),
        "t2": _Key("t2", "float"),
        "gain_m": _Key("gain_um", "float", 1e6),
        "resolution_m": _Key("resolution_um", "float", 1e6),
        "step_cap_m": _Key("step_cap_um", "float", 1e6),
        "sign_law": _Key("sign_law", "str", choices=_SIGN_LAWS),
    },
    "focus": {
        "optimal_distance_m": _Key("optimal_distance_um", "float", 1e6),
        "focus_band_m": _Key("focus_band_um", "float", 1e6),
        "out_of_range_m": _Key("out_of_range_um", "float", 1e6),
        "peak_cr": _Key("peak_cr", "float"),
        "floor_cr": _Key("floor_cr", "float"),
    },
    "haptics": {
        "kp_n_per_m": _Key("kp_n_per_m", "float"),
        "damping_n_per_m_s": _Key("damping_n_per_m_s", "float"),
        "kr_nm_per_rad": _Key("kr_nm_per_rad", "float"),
    },
    "script": {
        "preset": _Key("preset", "str", choices=("triangle", "none")),
        "side_m": _Key("side_mm", "float", 1e3),
        "speed_m_s": _Key("speed_mm_s", "float", 1e3),
        "mode": _Key("operator_mode", "str", choices=_OP_MODES),
        "axial_policy": _Key("axial_policy", "str", choices=_POLICIES),
        "tremor_amplitude_m": _Key("tremor_amplitude_um", "float", 1e6),
        "tremor_seed": _Key("tremor_seed", "int"),
        "v_base_m_s": _Key("hunt_speed_mm_s", "float", 1e3),
        "reaction_delay_s": _Key("reaction_delay_ms", "float", 1e3),
        "score_noise_sd": _Key("score_noise_sd", "float"),
        "noise_seed": _Key("score_noise_seed", "int"),
        "nav_stiffness_n_per_m": _Key("nav_stiffness_n_per_m", "float"),
        "force_cap_n": _Key("force_cap_n", "float"),
        "tremor_force_n_per_m": _Key("tremor_force_n_per_m", "float"),
        "capture_radius_m": _Key("capture_radius_mm", "float", 1e3),
        "teleop_scale": _Key("teleop_scale", "float"),
    },
}

_SCRIPT_FIELDS = ("side_m", "speed_m_s", "mode", "axial_policy", "nav_stiffness_n_per_m",
                  "force_cap_n", "tremor_force_n_per_m", "capture_radius_m", "teleop_scale")
_TREMOR_FIELDS = ("tremor_amplitude_m", "tremor_seed")
_NAIVE_FIELDS = ("v_base_m_s", "reaction_delay_s", "score_noise_sd", "noise_seed")


def _parse_section(doc: dict, section: str) -> dict[str, Any]:
    """SI-valued field dict for `section`, validating types and key names."""
    raw = doc.get(section)
    if raw is None:
        return {}
    if not isinstance(raw, dict):
        raise ConfigError(f"section '{section}' must be a mapping")
    schema = _SCHEMA[section]
    by_file_key = {key.name: (field, key) for field, key in schema.items()}
    out: dict[str, Any] = {}
    for file_key, raw_value in raw.items():
        if file_key not in by_file_key:
            raise ConfigError(f"unknown key '{section}.{file_key}'")
        field, key = by_file_key[file_key]
        out[field] = key.parse(raw_value, f"{section}.{file_key}")
    return out


def _build_script(fields: dict[str, Any], sim_fields: dict[str, Any]) -> OperatorScript | None:
    preset = fields.pop("preset", "triangle")
    if preset == "none":
        if fields:
            extra = sorted(_SCHEMA["script"][f].name for f in fields)
            raise ConfigError(f"script.preset 'none' allows no other script keys: {extra}")
        return None
    side = fields.pop("side_m", 3e-3)
    tremor_kw = {f.removeprefix("tremor_"): fields.pop(f) for f in _TREMOR_FIELDS if f in fields}
    naive_kw = {f: fields.pop(f) for f in _NAIVE_FIELDS if f in fields}
    if "seed" not in tremor_kw:
        tremor_kw["seed"] = sim_fields.get("seed", SimConfig().seed)
    try:
        return OperatorScript(
            waypoints=triangle_waypoints(side_m=side),
            tremor=TremorModel(amplitude_m=tremor_kw.pop("amplitude_m", 200e-6), **tremor_kw),
            naive=NaiveFocusConfig(**naive_kw),
            **fields,
        )
    except ValueError as exc:
        raise ConfigError(f"invalid script section: {exc}") from exc


def parse_run_config(text: str) -> SimConfig:
    """Load a YAML run-configuration document into a `SimConfig`."""
    try:
        doc = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigError(f"not valid YAML: {exc}") from exc
    if doc is None:
        doc = {}
    if not isinstance(doc, dict):
        raise ConfigError("top level must be a mapping")
    known = set(_SCHEMA) | {"schema_version"}
    for key in doc:
        if key not in known:
            raise ConfigError(f"unknown key '{key}'")
    version = doc.get("schema_version", SCHEMA_VERSION)
    if version != SCHEMA_VERSION:
        raise ConfigError(
            f"key 'schema_version' must be {SCHEMA_VERSION}, got {version!r}"
        )

    sections = {name: _parse_section(doc, name) for name in _SCHEMA}
    builders: list[tuple[str, str, Callable[..., Any]]] = [
        ("robot", "robot", RobotModel),
        ("autofocus", "autofocus", AutoFocusConfig),
        ("focus", "focus", FocusProfile),
        ("haptics", "haptics", HapticConfig),
    ]
    built: dict[str, Any] = {}
    try:
        if sections["phantom"] or sections["patient_motion"]:
            patient = PatientMotion(**sections["patient_motion"])
            built["phantom"] = TissueModel(patient=patient, **sections["phantom"])
        for section, field, factory in builders:
            if sections[section]:
                built[field] = factory(**sections[section])
    except ValueError as exc:
        raise ConfigError(f"invalid configuration value: {exc}") from exc

    sim_fields = sections["sim"]
    script = _build_script(dict(sections["script"]), sim_fields)
    try:
        return SimConfig(script=script, **built, **sim_fields)
    except ValueError as exc:
        raise ConfigError(f"invalid configuration value: {exc}") from exc


def serialize_run_config(cfg: SimConfig) -> str:
    """Canonical YAML document for `cfg` (every known key, SI converted)."""
    targets: dict[str, Any] = {
        "sim": cfg,
        "phantom": cfg.phantom,
        "patient_motion": cfg.phantom.patient,
        "robot": cfg.robot,
        "autofocus": cfg.autofocus,
        "focus": cfg.focus,
        "haptics": cfg.haptics,
    }
    doc: dict[str, Any] = {"schema_version": SCHEMA_VERSION}
    for section, target in targets.items():
        body = {}
        for field, key in _SCHEMA[section].items():
            value = getattr(target, field)
            if isinstance(value, (SimMode, AxialController, SignLaw)):
                value = value.value
            body[key.name] = key.unparse(value)
        doc[section] = body
    doc["script"] = _script_section(cfg.script)
    return yaml.safe_dump(doc, sort_keys=True, default_flow_style=False)


def _triangle_side_mm(waypoints: np.ndarray) -> float:
    """File value of side_mm that regenerates `waypoints` bit-for-bit."""
    if waypoints.shape == (4, 2):
        y = float(np.linalg.norm(waypoints[1] - waypoints[0])) * 1e3
        candidates = [y]
        up = down = y
        for _ in range(4):
            up = math.nextafter(up, math.inf)
            down = math.nextafter(down, -math.inf)
            candidates += [up, down]
        for cand in candidates:
            if np.array_equal(triangle_waypoints(side_m=cand / 1e3), waypoints):
                return cand
    raise ValueError(
        "script waypoints do not match the triangle preset and cannot be serialized"
    )


def _script_section(script: OperatorScript | None) -> dict[str, Any]:
    if script is None:
        return {"preset": "none"}
    schema = _SCHEMA["script"]
    waypoints = np.asarray(script.waypoints)
    side_mm = _triangle_side_mm(waypoints)
    body: dict[str, Any] = {"preset": "triangle", schema["side_m"].name: side_mm}
    for field in _SCRIPT_FIELDS[1:]:
        value = getattr(script, field)
        if isinstance(value, (OperatorMode, AxialPolicy)):
            value = value.value
        body[schema[field].name] = schema[field].unparse(value)
    for field in _TREMOR_FIELDS:
        value = getattr(script.tremor, field.removeprefix("tremor_"))
        body[schema[field].name] = schema[field].unparse(value)
    for field in _NAIVE_FIELDS:
        value = getattr(script.naive, field)
        body[schema[field].name] = schema[field].unparse(value)
    return body
