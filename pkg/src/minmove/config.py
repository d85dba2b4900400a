"""Experiment configuration: JSON loading, validation and object builders.

A config is one JSON object.  Unknown keys are rejected with their key path
so typos never silently fall back to defaults.  Presets ship in the package
``presets`` directory and can be named instead of a file path.
"""

from __future__ import annotations

import copy
import json
import math
from importlib import resources
from pathlib import Path
from typing import Any

import numpy as np

from .bar import BarMesh, bar_model, identity_state, sine_perturbation
from .energy import EnergyModel, double_well, quadratic
from .minimize import SolverSettings
from .scheme import Forcing, SchemeParams


class ConfigError(ValueError):
    def __init__(self, path: str, message: str):
        super().__init__(f"{path or '<root>'}: {message}")
        self.path = path


_NUM = (int, float)

# key -> (types, default); a default of ... marks a required key
_SECTIONS: dict[str, dict[str, tuple]] = {
    "scheme": {
        "tau": (_NUM, None),
        "h": (_NUM, None),
        "T": (_NUM, ...),
        "eps_dissipation": (_NUM, 0.0),
        "save_stride": (int, 1),
    },
    "sweep": {
        "tau_h": (list, None),
        "h": (_NUM, None),
        "tau": (list, None),
    },
    "initial": {
        "eta0": ((int, float, list, dict), ...),
        "eta_star": ((int, float, list), 0.0),
    },
    "solver": {
        "grad_tol": ((int, float, type(None)), None),
        "max_iters": (int, 500),
        "armijo_slope": (_NUM, 1e-4),
        "backtrack_factor": (_NUM, 0.5),
        "initial_guess_mode": (str, "extrapolated"),
    },
    "reference": {
        "kind": (str, "auto"),
        "step": (_NUM, 1e-4),
        "delayed_substep": ((int, float, type(None)), None),
        "blowup": (_NUM, 1e6),
        "tau": ((int, float, type(None)), None),
    },
    "compare": {
        "grid_points": (int, 1001),
        "component": ((int, type(None)), None),
    },
}

_MODEL_KEYS = {
    "double_well": {},
    "quadratic": {"omega": (_NUM, 1.0)},
    "bar": {
        "m": (int, 32),
        "length": (_NUM, 1.0),
        "a": (_NUM, 2.0),
        "svk": (_NUM, 0.0),
        "regularizer": (str, "linear"),
        "q": (_NUM, 3.0),
    },
}

_FORCING_KEYS = {
    "zero": {},
    "constant": {"value": ((int, float, list), ...)},
    "polynomial": {"coeffs": (list, ...)},
    "piecewise": {"breaks": (list, ...), "coeffs": (list, ...)},
}

_TOP = {"description", "model", "scheme", "sweep", "initial", "forcing", "solver",
        "reference", "compare", "audit", "seed"}


def _typecheck(path, value, types):
    if isinstance(value, bool) and bool not in (types if isinstance(types, tuple) else (types,)):
        raise ConfigError(path, "expected a number, got a boolean")
    if not isinstance(value, types):
        names = types.__name__ if isinstance(types, type) else "/".join(t.__name__ for t in types)
        raise ConfigError(path, f"expected {names}, got {type(value).__name__}")


def _fill(path: str, raw: Any, schema: dict[str, tuple], skip=()) -> dict:
    if not isinstance(raw, dict):
        raise ConfigError(path, "expected an object")
    for key in raw:
        if key not in schema and key not in skip:
            raise ConfigError(f"{path}.{key}", "unknown key")
    out = {k: raw[k] for k in skip if k in raw}
    for key, (types, default) in schema.items():
        kp = f"{path}.{key}"
        if key in raw:
            _typecheck(kp, raw[key], types)
            out[key] = raw[key]
        elif default is ...:
            raise ConfigError(kp, "required key missing")
        else:
            out[key] = copy.deepcopy(default)
    return out


def _positive(path, x):
    if x is None or not (isinstance(x, (int, float)) and x > 0 and math.isfinite(x)):
        raise ConfigError(path, f"must be a positive number, got {x!r}")


def _check_grid(path, tau, h, T):
    try:
        SchemeParams.from_times(float(tau), float(h), float(T))
    except ValueError as exc:
        raise ConfigError(path, str(exc)) from None


def validate(raw: Any) -> dict:
    """Return the fully resolved config or raise :class:`ConfigError`."""
    if not isinstance(raw, dict):
        raise ConfigError("", "config must be a JSON object")
    for key in raw:
        if key not in _TOP:
            raise ConfigError(key, "unknown key")
    cfg: dict[str, Any] = {"description": raw.get("description", "")}
    if not isinstance(cfg["description"], str):
        raise ConfigError("description", "expected str")

    m = raw.get("model")
    if not isinstance(m, dict) or "name" not in m:
        raise ConfigError("model.name", "required key missing")
    if m["name"] not in _MODEL_KEYS:
        raise ConfigError("model.name", f"unknown model {m['name']!r}; choose from {sorted(_MODEL_KEYS)}")
    cfg["model"] = _fill("model", m, _MODEL_KEYS[m["name"]], skip=("name",))

    cfg["scheme"] = _fill("scheme", raw.get("scheme", {}), _SECTIONS["scheme"])
    sc = cfg["scheme"]
    _positive("scheme.T", sc["T"])
    if sc["eps_dissipation"] < 0:
        raise ConfigError("scheme.eps_dissipation", "must be non-negative")
    if sc["save_stride"] < 1:
        raise ConfigError("scheme.save_stride", "must be >= 1")
    if sc["tau"] is not None or sc["h"] is not None:
        _positive("scheme.tau", sc["tau"])
        if sc["h"] is None:
            sc["h"] = sc["tau"]
        _positive("scheme.h", sc["h"])
        if sc["tau"] > sc["h"]:
            raise ConfigError("scheme.tau", "need tau <= h")
        _check_grid("scheme", sc["tau"], sc["h"], sc["T"])
    if sc["eps_dissipation"] > 0 and m["name"] != "bar":
        raise ConfigError("scheme.eps_dissipation", f"model {m['name']!r} has no regularizer for dissipation")

    if "sweep" in raw:
        sw = _fill("sweep", raw["sweep"], _SECTIONS["sweep"])
        if sw["tau_h"] is not None:
            if sw["h"] is not None or sw["tau"] is not None:
                raise ConfigError("sweep", "give either tau_h or (h, tau), not both")
            if not sw["tau_h"]:
                raise ConfigError("sweep.tau_h", "sweep list is empty")
            for i, t in enumerate(sw["tau_h"]):
                _positive(f"sweep.tau_h[{i}]", t)
                _check_grid(f"sweep.tau_h[{i}]", t, t, sc["T"])
        elif sw["h"] is not None:
            _positive("sweep.h", sw["h"])
            if not sw["tau"]:
                raise ConfigError("sweep.tau", "sweep list is empty")
            for i, t in enumerate(sw["tau"]):
                _positive(f"sweep.tau[{i}]", t)
                _check_grid(f"sweep.tau[{i}]", t, sw["h"], sc["T"])
        else:
            raise ConfigError("sweep", "needs tau_h or (h, tau)")
        cfg["sweep"] = sw

    cfg["initial"] = _fill("initial", raw.get("initial", {}), _SECTIONS["initial"])
    e0 = cfg["initial"]["eta0"]
    if isinstance(e0, dict):
        _fill("initial.eta0", e0, {"kind": (str, ...), "amplitude": (_NUM, 0.0)})
        if e0["kind"] not in ("identity", "sine"):
            raise ConfigError("initial.eta0.kind", "must be 'identity' or 'sine'")
        if m["name"] != "bar":
            raise ConfigError("initial.eta0", "shape-based initial data need the bar model")
        cfg["initial"]["eta0"] = {"amplitude": 0.0, **e0}

    f = raw.get("forcing", {"kind": "zero"})
    if not isinstance(f, dict) or f.get("kind") not in _FORCING_KEYS:
        raise ConfigError("forcing.kind", f"choose from {sorted(_FORCING_KEYS)}")
    cfg["forcing"] = _fill("forcing", f, _FORCING_KEYS[f["kind"]], skip=("kind",))

    cfg["solver"] = _fill("solver", raw.get("solver", {}), _SECTIONS["solver"])
    try:
        _settings(cfg)
    except ValueError as exc:
        raise ConfigError("solver", str(exc)) from None
    cfg["reference"] = _fill("reference", raw.get("reference", {}), _SECTIONS["reference"])
    if cfg["reference"]["kind"] not in ("auto", "exact", "rk4", "scheme"):
        raise ConfigError("reference.kind", "must be auto, exact, rk4 or scheme")
    _positive("reference.step", cfg["reference"]["step"])
    cfg["compare"] = _fill("compare", raw.get("compare", {}), _SECTIONS["compare"])
    if cfg["compare"]["grid_points"] < 2:
        raise ConfigError("compare.grid_points", "need at least 2 points")
    cfg["audit"] = raw.get("audit", False)
    _typecheck("audit", cfg["audit"], bool)
    cfg["seed"] = raw.get("seed", 0)
    _typecheck("seed", cfg["seed"], int)

    try:
        build_model(cfg)
        build_forcing(cfg)
    except ValueError as exc:
        raise ConfigError("model" if "forcing" not in str(exc) else "forcing", str(exc)) from None
    return cfg


# loading ----------------------------------------------------------------------


def preset_names() -> list[str]:
    root = resources.files("minmove") / "presets"
    return sorted(p.name[:-5] for p in root.iterdir() if p.name.endswith(".json"))


def _parse(text: str, origin: str):
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError("", f"{origin}: invalid JSON at line {exc.lineno}, column {exc.colno}: {exc.msg}") from None


def load_config(ref: str) -> dict:
    """Load and validate a config from a file path or a preset name."""
    p = Path(ref)
    if p.is_file():
        return validate(_parse(p.read_text(), str(p)))
    name = ref[:-5] if ref.endswith(".json") else ref
    if name in preset_names():
        text = (resources.files("minmove") / "presets" / f"{name}.json").read_text()
        return validate(_parse(text, f"preset {name}"))
    raise ConfigError("", f"no config file or preset named {ref!r}; presets: {', '.join(preset_names())}")


# builders ---------------------------------------------------------------------


def build_mesh(cfg) -> BarMesh:
    m = cfg["model"]
    return BarMesh(m=m["m"], length=m["length"], a=m["a"], svk=m["svk"], regularizer=m["regularizer"], q=m["q"])


def build_model(cfg) -> EnergyModel:
    m = cfg["model"]
    if m["name"] == "double_well":
        return double_well()
    if m["name"] == "quadratic":
        return quadratic(float(m["omega"]))
    return bar_model(build_mesh(cfg))


def build_initial(cfg, model: EnergyModel) -> tuple[np.ndarray, np.ndarray]:
    ini = cfg["initial"]
    e0 = ini["eta0"]
    if isinstance(e0, dict):
        mesh = build_mesh(cfg)
        eta0 = identity_state(mesh) if e0["kind"] == "identity" else sine_perturbation(mesh, e0["amplitude"])
    else:
        eta0 = np.asarray(e0, dtype=float)
    out = []
    for key, v in (("eta0", eta0), ("eta_star", np.asarray(ini["eta_star"], dtype=float))):
        if v.ndim > 1 or (v.ndim == 1 and v.size not in (1, model.dim)):
            raise ConfigError(f"initial.{key}", f"expected a scalar or {model.dim} values")
        out.append(np.broadcast_to(v, (model.dim,)).astype(float))
    if not model.is_admissible(out[0]) or not math.isfinite(model.value(out[0])):
        raise ConfigError("initial.eta0", "initial state is not admissible")
    return out[0], out[1]


def build_forcing(cfg) -> Forcing:
    f = cfg["forcing"]
    T = float(cfg["scheme"]["T"])
    if f["kind"] == "zero":
        return Forcing.zero()
    if f["kind"] == "constant":
        return Forcing.constant(f["value"], T)
    if f["kind"] == "polynomial":
        return Forcing.polynomial(f["coeffs"], T)
    return Forcing.piecewise(f["breaks"], f["coeffs"], T)


def _settings(cfg) -> SolverSettings:
    return SolverSettings(**cfg["solver"])


build_settings = _settings


def build_params(cfg, tau=None, h=None) -> SchemeParams:
    sc = cfg["scheme"]
    tau = sc["tau"] if tau is None else tau
    h = (sc["h"] if sc["h"] is not None else tau) if h is None else h
    if tau is None:
        raise ConfigError("scheme.tau", "required for this command")
    return SchemeParams.from_times(float(tau), float(h), float(sc["T"]),
                                   eps_dissipation=float(sc["eps_dissipation"]),
                                   save_stride=int(sc["save_stride"]))
