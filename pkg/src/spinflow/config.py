"""Strict line-based run configuration.

Format: one `section.key = value` assignment per line; `#` starts a comment;
blank lines are ignored.  Unknown keys, duplicate keys, missing required
sections and out-of-range values are all hard errors that name the offending
line and key, so a typo cannot silently change an experiment.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field as dc_field

import numpy as np

from . import diagnostics
from .domain import Coupling, Grid, make_coupling, make_grid
from .field import SphereField, bubble_field, constant_field, great_circle_field, perturb
from .flow import FlowConfig

REQUIRED_SECTIONS = ("grid", "coupling", "initial", "flow")

INITIAL_KINDS = ("constant", "bubble", "great-circle", "perturbed")


class ConfigError(ValueError):
    pass


def _parse_int(text: str) -> int:
    try:
        return int(text)
    except ValueError:
        raise ValueError(f"expected an integer, got {text!r}")


def _parse_float(text: str) -> float:
    try:
        return float(text)
    except ValueError:
        raise ValueError(f"expected a number, got {text!r}")


def _parse_bool(text: str) -> bool:
    if text == "true":
        return True
    if text == "false":
        return False
    raise ValueError(f"expected true or false, got {text!r}")


def _parse_str(text: str) -> str:
    return text


def _parse_float_list(text: str) -> tuple[float, ...]:
    parts = [p.strip() for p in text.split(",") if p.strip()]
    if not parts:
        raise ValueError("expected a comma-separated list of numbers")
    return tuple(_parse_float(p) for p in parts)


# key -> (parser, default); _REQUIRED means the key must be present
_REQUIRED = object()

_SCHEMA = {
    "grid.nx": (_parse_int, _REQUIRED),
    "grid.ny": (_parse_int, _REQUIRED),
    "grid.lx": (_parse_float, _REQUIRED),
    "grid.ly": (_parse_float, _REQUIRED),
    "coupling.kind": (_parse_str, _REQUIRED),
    "coupling.base": (_parse_float, 1.0),
    "coupling.ax": (_parse_float, 0.0),
    "coupling.ay": (_parse_float, 0.0),
    "coupling.value": (_parse_float, None),
    "coupling.file": (_parse_str, None),
    "initial.kind": (_parse_str, _REQUIRED),
    "initial.vx": (_parse_float, 0.0),
    "initial.vy": (_parse_float, 0.0),
    "initial.vz": (_parse_float, 1.0),
    "initial.px": (_parse_float, None),
    "initial.py": (_parse_float, None),
    "initial.scale": (_parse_float, None),
    "initial.amplitude": (_parse_float, 0.01),
    "initial.seed": (_parse_int, 0),
    "initial.windings": (_parse_int, 1),
    "initial.axis": (_parse_str, "x"),
    "initial.phase": (_parse_float, 0.0),
    "flow.kind": (_parse_str, _REQUIRED),
    "flow.dt_policy": (_parse_str, "cfl"),
    "flow.dt": (_parse_float, None),
    "flow.safety": (_parse_float, 0.5),
    "flow.t_end": (_parse_float, _REQUIRED),
    "flow.snapshot_every": (_parse_int, 0),
    "flow.diagnostic_every": (_parse_int, 1),
    "flow.integrator": (_parse_str, "euler"),
    "flow.projection": (_parse_str, "renormalize"),
    "flow.stationarity_tol": (_parse_float, None),
    "diagnostics.radii": (_parse_float_list, None),
    "diagnostics.eps_conc": (_parse_float, None),
    "relax.tol": (_parse_float, 1e-8),
    "relax.max_steps": (_parse_int, 200_000),
    "relax.safety": (_parse_float, 0.8),
    "experiment.collapse_fraction": (_parse_float, 0.5),
    "output.dir": (_parse_str, "out"),
    "output.field_csv": (_parse_bool, False),
    "output.heatmaps": (_parse_bool, True),
}

#: default probe radii as fractions of min(lx, ly)
_DEFAULT_RADII_FRACTIONS = (0.25, 0.125, 0.0625)


@dataclass
class RunConfig:
    """Validated run configuration with pre-built grid and coupling."""

    values: dict
    grid: Grid
    coupling: Coupling
    flow: FlowConfig
    radii: tuple[float, ...]
    eps_conc: float
    base_dir: str = "."
    lines: dict = dc_field(default_factory=dict)

    def __getitem__(self, key: str):
        return self.values[key]

    def build_initial(self) -> SphereField:
        """Construct the configured initial field."""
        v = self.values
        kind = v["initial.kind"]
        background = (v["initial.vx"], v["initial.vy"], v["initial.vz"])
        if kind == "constant":
            return constant_field(self.grid, background)
        if kind == "perturbed":
            base = constant_field(self.grid, background)
            return perturb(base, v["initial.amplitude"], v["initial.seed"])
        if kind == "great-circle":
            return great_circle_field(self.grid, windings=v["initial.windings"],
                                      axis=v["initial.axis"], phase=v["initial.phase"])
        # bubble: unless set explicitly, the background is the profile's own
        # far-field limit, which keeps the blend seamless
        if not any(k in self.lines for k in ("initial.vx", "initial.vy", "initial.vz")):
            background = (0.0, 0.0, -1.0)
        px = v["initial.px"] if v["initial.px"] is not None else self.grid.lx / 2.0
        py = v["initial.py"] if v["initial.py"] is not None else self.grid.ly / 2.0
        return bubble_field(self.grid, (px, py), v["initial.scale"], background)


def parse_config(text: str, base_dir: str = ".") -> RunConfig:
    """Parse and validate configuration text; raise ConfigError on any defect."""
    assignments: dict[str, tuple[str, int]] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'section.key = value', got {raw.strip()!r}")
        key, _, value = line.partition("=")
        key = key.strip()
        value = value.strip()
        if key not in _SCHEMA:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
        if key in assignments:
            first_line = assignments[key][1]
            raise ConfigError(f"line {lineno}: duplicate key {key!r} "
                              f"(first assigned at line {first_line})")
        if not value:
            raise ConfigError(f"line {lineno}: empty value for {key!r}")
        assignments[key] = (value, lineno)

    present_sections = {k.split(".", 1)[0] for k in assignments}
    for section in REQUIRED_SECTIONS:
        if section not in present_sections:
            raise ConfigError(f"missing required section {section!r}")

    values: dict = {}
    lines: dict[str, int] = {}
    for key, (parser, default) in _SCHEMA.items():
        if key in assignments:
            raw_value, lineno = assignments[key]
            lines[key] = lineno
            try:
                values[key] = parser(raw_value)
            except ValueError as err:
                raise ConfigError(f"line {lineno}: {key}: {err}")
        else:
            if default is _REQUIRED:
                raise ConfigError(f"missing required key {key!r}")
            values[key] = default

    def fail(key: str, message: str):
        where = f"line {lines[key]}: " if key in lines else ""
        raise ConfigError(f"{where}{key}: {message}")

    def reject_inapplicable(context: str, keys: tuple[str, ...]):
        for key in keys:
            if key in lines:
                fail(key, f"not applicable with {context}")

    # grid
    try:
        grid = make_grid(values["grid.nx"], values["grid.ny"],
                         values["grid.lx"], values["grid.ly"])
    except ValueError as err:
        raise ConfigError(f"grid: {err}")

    # coupling
    kind = values["coupling.kind"]
    try:
        if kind == "constant":
            reject_inapplicable("a constant coupling",
                                ("coupling.base", "coupling.ax", "coupling.ay",
                                 "coupling.file"))
            value = values["coupling.value"]
            params = {"value": 1.0 if value is None else value}
            coupling = make_coupling(grid, kind, params)
        elif kind in ("cosine", "cosine-product"):
            reject_inapplicable("a cosine coupling", ("coupling.value", "coupling.file"))
            coupling = make_coupling(grid, kind, {"base": values["coupling.base"],
                                                  "ax": values["coupling.ax"],
                                                  "ay": values["coupling.ay"]})
        elif kind in ("sampled", "custom-sampled"):
            reject_inapplicable("a sampled coupling",
                                ("coupling.value", "coupling.base", "coupling.ax",
                                 "coupling.ay"))
            path = values["coupling.file"]
            if path is None:
                fail("coupling.kind", "custom-sampled coupling requires coupling.file")
            full = path if os.path.isabs(path) else os.path.join(base_dir, path)
            try:
                samples = np.loadtxt(full, delimiter=",", ndmin=2)
            except OSError as err:
                fail("coupling.file", str(err))
            coupling = make_coupling(grid, kind, {"values": samples})
        else:
            fail("coupling.kind", f"unknown coupling kind {kind!r}")
    except ValueError as err:
        if isinstance(err, ConfigError):
            raise
        fail("coupling.kind", str(err))

    # initial data preconditions
    ikind = values["initial.kind"]
    if ikind not in INITIAL_KINDS:
        fail("initial.kind", f"must be one of {INITIAL_KINDS}, got {ikind!r}")
    _INAPPLICABLE_INITIAL = {
        "constant": ("initial.px", "initial.py", "initial.scale", "initial.amplitude",
                     "initial.windings", "initial.axis", "initial.phase"),
        "perturbed": ("initial.px", "initial.py", "initial.scale",
                      "initial.windings", "initial.axis", "initial.phase"),
        "great-circle": ("initial.px", "initial.py", "initial.scale",
                         "initial.amplitude", "initial.vx", "initial.vy", "initial.vz"),
        "bubble": ("initial.amplitude", "initial.windings", "initial.axis",
                   "initial.phase"),
    }
    reject_inapplicable(f"initial.kind = {ikind}", _INAPPLICABLE_INITIAL[ikind])
    background = np.array([values["initial.vx"], values["initial.vy"], values["initial.vz"]])
    if ikind in ("constant", "perturbed", "bubble") and not np.linalg.norm(background) > 0:
        fail("initial.kind", "background vector (vx, vy, vz) must be nonzero")
    if ikind == "bubble":
        scale = values["initial.scale"]
        if scale is None:
            fail("initial.kind", "bubble initial data requires initial.scale")
        lmin = min(grid.lx, grid.ly)
        if not 0 < scale < lmin / 4:
            fail("initial.scale", f"must lie in (0, {lmin / 4}), got {scale}")
    if ikind == "perturbed" and values["initial.amplitude"] < 0:
        fail("initial.amplitude", "must be >= 0")
    if values["initial.axis"] not in ("x", "y"):
        fail("initial.axis", "must be 'x' or 'y'")

    # flow
    if values["flow.dt_policy"] == "cfl":
        reject_inapplicable("the cfl dt policy", ("flow.dt",))
    elif values["flow.dt_policy"] == "fixed":
        reject_inapplicable("the fixed dt policy", ("flow.safety",))
    try:
        flow = FlowConfig(
            flow_kind=values["flow.kind"], dt_policy=values["flow.dt_policy"],
            dt=values["flow.dt"], safety=values["flow.safety"],
            t_end=values["flow.t_end"], snapshot_every=values["flow.snapshot_every"],
            diagnostic_every=values["flow.diagnostic_every"],
            projection=values["flow.projection"], integrator=values["flow.integrator"],
            stationarity_tol=values["flow.stationarity_tol"], seed=values["initial.seed"])
    except ValueError as err:
        raise ConfigError(f"flow: {err}")

    # diagnostics
    radii = values["diagnostics.radii"]
    if radii is None:
        lmin = min(grid.lx, grid.ly)
        floor = 2.0 * max(grid.hx, grid.hy)
        radii = tuple(fr * lmin for fr in _DEFAULT_RADII_FRACTIONS if fr * lmin > 1.02 * floor)
        if not radii:
            radii = (0.45 * lmin,)
    try:
        radii = diagnostics.validate_radii(grid, radii)
    except ValueError as err:
        fail("diagnostics.radii", str(err))
    eps_conc = values["diagnostics.eps_conc"]
    if eps_conc is None:
        eps_conc = diagnostics.DEFAULT_EPS_CONC_FRACTION * diagnostics.BUBBLE_ENERGY
    elif eps_conc <= 0:
        fail("diagnostics.eps_conc", "must be positive")

    if not values["relax.tol"] > 0:
        fail("relax.tol", "must be positive")
    if values["relax.max_steps"] < 0:
        fail("relax.max_steps", "must be >= 0")
    if not 0 < values["relax.safety"] <= 1:
        fail("relax.safety", "must lie in (0, 1]")
    if not 0 < values["experiment.collapse_fraction"] < 1:
        fail("experiment.collapse_fraction", "must lie in (0, 1)")

    return RunConfig(values=values, grid=grid, coupling=coupling, flow=flow,
                     radii=radii, eps_conc=float(eps_conc), base_dir=base_dir,
                     lines=lines)


def load_config(path) -> RunConfig:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            text = fh.read()
    except OSError as err:
        raise ConfigError(f"cannot read config {path}: {err}")
    return parse_config(text, base_dir=os.path.dirname(os.path.abspath(path)))
