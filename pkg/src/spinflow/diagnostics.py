"""Measurement machinery: energies, Hopf differential, variation formulas,
defect norms, the diagnostics ledger and the concentration detector.

Energy convention: the ledger quantity is E = sum f |grad u|^2 dA (no 1/2).
The domain-variation pair (variation_lhs / variation_rhs) uses the 1/2
convention E_half = E / 2 internally, consistently on both sides; the two
conventions are linked by that single factor.  Under the ledger convention
the first variation against a tangent perturbation xi is -2 * <F, xi>_{L2}
with F the Palais-Smale defect, which fixes every dissipation constant used
in the tests.
"""

from __future__ import annotations

import io
import math
from dataclasses import dataclass, field as dc_field

import numpy as np
from scipy import ndimage

from .domain import Coupling, CriticalSet, CutoffField, Grid, critical_points, eval_cutoff
from .field import SphereField
from .operators import _dot, _grad_arrays, ps_residual

#: default concentration threshold, as a fraction of the degree-1 bubble energy
DEFAULT_EPS_CONC_FRACTION = 0.3

#: grid integral of |grad m|^2 for the planar degree-1 profile (confirmed by
#: the quadrature oracle in the test suite)
BUBBLE_ENERGY = 8.0 * math.pi

#: fraction of trailing ledger rows used for the limiting local-energy estimate
_LATE_WINDOW_FRACTION = 0.25


# ---------------------------------------------------------------------------
# Energies


def energy_density(field: SphereField, coupling: Coupling) -> np.ndarray:
    """Pointwise f |grad u|^2."""
    ux, uy = _grad_arrays(field.values, field.grid.hx, field.grid.hy)
    return coupling.values * (_dot(ux, ux) + _dot(uy, uy))


def energy(field: SphereField, coupling: Coupling) -> float:
    """Weighted energy E = sum f |grad u|^2 dA over the torus."""
    return float(energy_density(field, coupling).sum() * field.grid.cell_area)


def _density_from_gsq(coupling: Coupling, gsq: np.ndarray) -> np.ndarray:
    return coupling.values * gsq


def min_resolvable_radius(grid: Grid) -> float:
    return 2.0 * max(grid.hx, grid.hy)


def _disc_coverage(grid: Grid, px: float, py: float, r: float) -> np.ndarray:
    """Per-node covered-area fraction of the periodic disc B_r((px, py)).

    Nodes whose cells lie fully inside/outside get weight 1/0; boundary cells
    are subsampled on a 4x4 pattern.  Monotone non-decreasing in r per node.
    """
    x, y = grid.mesh()
    d = np.hypot(grid.wrap_dx(x - px), grid.wrap_dy(y - py))
    margin = 0.5 * math.hypot(grid.hx, grid.hy)
    w = np.zeros(grid.shape)
    w[d <= r - margin] = 1.0
    ring = np.nonzero((d > r - margin) & (d < r + margin))
    if ring[0].size:
        offs = (np.arange(4) + 0.5) / 4.0 - 0.5
        ox, oy = np.meshgrid(offs * grid.hx, offs * grid.hy, indexing="ij")
        sx = x[ring][:, None] + ox.ravel()[None, :]
        sy = y[ring][:, None] + oy.ravel()[None, :]
        ds = np.hypot(grid.wrap_dx(sx - px), grid.wrap_dy(sy - py))
        w[ring] = (ds <= r).mean(axis=1)
    return w


def _local_energy_from_density(grid: Grid, density: np.ndarray, p, r: float) -> float:
    if not r > min_resolvable_radius(grid):
        raise ValueError(
            f"radius {r} is below the resolvable minimum {min_resolvable_radius(grid)}")
    w = _disc_coverage(grid, float(p[0]), float(p[1]), float(r))
    return float((density * w).sum() * grid.cell_area)


def local_energy(field: SphereField, coupling: Coupling, p, r: float) -> float:
    """Energy inside the periodic disc B_r(p), boundary cells area-weighted."""
    return _local_energy_from_density(field.grid, energy_density(field, coupling), p, r)


# ---------------------------------------------------------------------------
# Hopf differential


def hopf(field: SphereField) -> np.ndarray:
    """Per-node Hopf quantity |u_x|^2 - |u_y|^2 - 2i <u_x, u_y>.

    Measures the failure of conformality; it is constant (in fact
    holomorphic) for harmonic maps in conformal position.
    """
    ux, uy = _grad_arrays(field.values, field.grid.hx, field.grid.hy)
    return (_dot(ux, ux) - _dot(uy, uy)) - 2.0j * _dot(ux, uy)


def hopf_residual(field: SphereField, coupling: Coupling) -> float:
    """L2 norm of d/dzbar Psi - 2 <alpha . grad u + g, du/dz>.

    For |u| = 1 the identity d/dzbar Psi = 2 <Delta u, du/dz> holds with the
    real Laplacian, and Delta u may be replaced by the tension field since
    <u, du/dz> = 0.  The tension is realized through the weighted structure
    as alpha . grad u + g with alpha = -grad f / f and g the measured defect
    divided by f, so the identity closes for arbitrary fields, not only
    stationary ones.  The norm decays at second order for smooth fields.
    """
    grid = field.grid
    ux, uy = _grad_arrays(field.values, grid.hx, grid.hy)
    psi = (_dot(ux, ux) - _dot(uy, uy)) - 2.0j * _dot(ux, uy)
    dpsi_zbar = 0.5 * ((np.roll(psi, -1, 0) - np.roll(psi, 1, 0)) / (2 * grid.hx)
                       + 1j * (np.roll(psi, -1, 1) - np.roll(psi, 1, 1)) / (2 * grid.hy))
    f = coupling.values
    defect = ps_residual(field, coupling).values
    w = (defect - coupling.grad_x[..., None] * ux - coupling.grad_y[..., None] * uy) \
        / f[..., None]
    # <w, du/dz> with du/dz = (u_x - i u_y) / 2
    pairing = 0.5 * (_dot(w, ux) - 1j * _dot(w, uy))
    residual = dpsi_zbar - 2.0 * pairing
    return float(np.sqrt((np.abs(residual) ** 2).sum() * grid.cell_area))


# ---------------------------------------------------------------------------
# Domain-variation formula (1/2-convention energy on both sides)


def _energy_half_of_values(values: np.ndarray, grid: Grid, coupling: Coupling) -> float:
    ux, uy = _grad_arrays(values, grid.hx, grid.hy)
    return 0.5 * float((coupling.values * (_dot(ux, ux) + _dot(uy, uy))).sum()
                       * grid.cell_area)


def variation_rhs(field: SphereField, coupling: Coupling, cutoff: CutoffField) -> float:
    """Domain-variation derivative from the closed formula.

    -1/2 int |grad u|^2 f div X  -  1/2 int df(X) |grad u|^2
    + sum_a int <du(grad_{e_a} X), du(e_a)> f,
    evaluated by grid quadrature with the cutoff's exact divergence and
    Jacobian.
    """
    grid = field.grid
    x, y = grid.mesh()
    X, div, jac = eval_cutoff(cutoff, x, y)
    ux, uy = _grad_arrays(field.values, grid.hx, grid.hy)
    e11 = _dot(ux, ux)
    e22 = _dot(uy, uy)
    e12 = _dot(ux, uy)
    gsq = e11 + e22
    f = coupling.values
    t1 = -0.5 * (gsq * f * div).sum()
    t2 = -0.5 * ((coupling.grad_x * X[..., 0] + coupling.grad_y * X[..., 1]) * gsq).sum()
    t3 = (f * (jac[..., 0, 0] * e11 + jac[..., 1, 0] * e12
               + jac[..., 0, 1] * e12 + jac[..., 1, 1] * e22)).sum()
    return float((t1 + t2 + t3) * grid.cell_area)


def _flow_positions(grid: Grid, cutoff: CutoffField, s: float) -> tuple[np.ndarray, np.ndarray]:
    """One RK4 step of the point flow dx/dt = X(x) over time s, from the nodes."""
    x0, y0 = grid.mesh()

    def vel(px, py):
        X, _, _ = eval_cutoff(cutoff, px, py)
        return X[..., 0], X[..., 1]

    k1x, k1y = vel(x0, y0)
    k2x, k2y = vel(x0 + 0.5 * s * k1x, y0 + 0.5 * s * k1y)
    k3x, k3y = vel(x0 + 0.5 * s * k2x, y0 + 0.5 * s * k2y)
    k4x, k4y = vel(x0 + s * k3x, y0 + s * k3y)
    px = x0 + (s / 6.0) * (k1x + 2 * k2x + 2 * k3x + k4x)
    py = y0 + (s / 6.0) * (k1y + 2 * k2y + 2 * k3y + k4y)
    return px, py


def _compose(field: SphereField, px: np.ndarray, py: np.ndarray) -> np.ndarray:
    """Sample u at the moved positions with periodic cubic-spline interpolation,
    then renormalize nodewise."""
    grid = field.grid
    coords = np.stack([px / grid.hx, py / grid.hy])
    out = np.empty_like(field.values)
    for c in range(3):
        coeffs = ndimage.spline_filter(field.values[..., c], order=3, mode="grid-wrap")
        out[..., c] = ndimage.map_coordinates(coeffs, coords, order=3,
                                              mode="grid-wrap", prefilter=False)
    norms = np.sqrt(np.einsum("ijk,ijk->ij", out, out))
    return out / norms[..., None]


def variation_lhs(field: SphereField, coupling: Coupling, cutoff: CutoffField,
                  s: float) -> float:
    """Centered difference (E_half(u o phi_s) - E_half(u o phi_-s)) / (2 s).

    phi_s is the time-s flow of the cutoff field, realized by one RK4 step on
    the node positions; the composed field is sampled by periodic bicubic
    interpolation.  Matches variation_rhs up to O(s^2) + O(h^2).
    """
    grid = field.grid
    s = float(s)
    if s == 0.0:
        return 0.0
    if abs(s) > max(grid.hx, grid.hy):
        raise ValueError(f"|s| = {abs(s)} exceeds the grid spacing "
                         f"{max(grid.hx, grid.hy)}; the finite difference would "
                         "leave its validity range")
    e_plus = _energy_half_of_values(_compose(field, *_flow_positions(grid, cutoff, s)),
                                    grid, coupling)
    e_minus = _energy_half_of_values(_compose(field, *_flow_positions(grid, cutoff, -s)),
                                     grid, coupling)
    return (e_plus - e_minus) / (2.0 * s)


# ---------------------------------------------------------------------------
# Defect norm


def ps_norm(field: SphereField, coupling: Coupling) -> float:
    """L2 norm of the Palais-Smale defect f tau(u) + grad f . grad u."""
    return ps_residual(field, coupling).l2_norm()


# ---------------------------------------------------------------------------
# Ledger


@dataclass(frozen=True)
class LedgerRow:
    t: float
    e_f: float
    v_norm_sq: float
    ps_norm: float
    max_density: float
    argmax_x: float
    argmax_y: float
    local_e: tuple[float, ...] = ()
    dist_to_crit: float = math.nan


@dataclass
class DiagnosticsLedger:
    """Time series of flow diagnostics; rows are appended in time order."""

    radii: tuple[float, ...] = ()
    rows: list[LedgerRow] = dc_field(default_factory=list)

    def __post_init__(self):
        self.radii = tuple(float(r) for r in self.radii)
        if any(r2 >= r1 for r1, r2 in zip(self.radii, self.radii[1:])):
            raise ValueError(f"ledger radii must be strictly decreasing, got {self.radii}")

    def append(self, row: LedgerRow) -> None:
        if self.rows and row.t < self.rows[-1].t:
            raise ValueError(f"ledger rows must be time-ordered: {row.t} after {self.rows[-1].t}")
        if not row.e_f >= 0.0:
            raise ValueError(f"ledger energy must be >= 0, got {row.e_f}")
        if len(row.local_e) != len(self.radii):
            raise ValueError("row local energies do not match the ledger radii")
        if any(le > row.e_f + 1e-10 for le in row.local_e):
            raise ValueError("local energy exceeds total energy")
        self.rows.append(row)

    def __len__(self) -> int:
        return len(self.rows)

    def column(self, name: str) -> np.ndarray:
        return np.array([getattr(r, name) for r in self.rows])

    def header(self) -> list[str]:
        cols = ["t", "E_f", "v_norm_sq", "ps_norm", "max_density", "argmax_x", "argmax_y"]
        cols += [f"local_E_r{k + 1}" for k in range(len(self.radii))]
        cols.append("dist_to_crit")
        return cols

    def to_csv(self, target) -> None:
        """Write the ledger as CSV; floats use shortest round-trip formatting."""
        if isinstance(target, (str, bytes)) or hasattr(target, "__fspath__"):
            with open(target, "w", encoding="utf-8", newline="\n") as fh:
                self.to_csv(fh)
            return
        target.write(",".join(self.header()) + "\n")
        for r in self.rows:
            cells = [r.t, r.e_f, r.v_norm_sq, r.ps_norm, r.max_density,
                     r.argmax_x, r.argmax_y, *r.local_e, r.dist_to_crit]
            target.write(",".join(repr(float(c)) for c in cells) + "\n")

    def to_csv_text(self) -> str:
        buf = io.StringIO()
        self.to_csv(buf)
        return buf.getvalue()


def validate_radii(grid: Grid, radii) -> tuple[float, ...]:
    radii = tuple(float(r) for r in radii)
    if any(r2 >= r1 for r1, r2 in zip(radii, radii[1:])):
        raise ValueError(f"radii must be strictly decreasing, got {radii}")
    rmin = min_resolvable_radius(grid)
    if any(r <= rmin for r in radii):
        raise ValueError(f"all radii must exceed the resolvable minimum {rmin}, got {radii}")
    return radii


def measure_row(grid: Grid, coupling: Coupling, gsq: np.ndarray, *, t: float,
                v_norm_sq: float, ps_norm: float, radii: tuple[float, ...],
                crit: CriticalSet | None) -> LedgerRow:
    """Assemble one ledger row from a precomputed |grad u|^2 field."""
    density = _density_from_gsq(coupling, gsq)
    e_f = float(density.sum() * grid.cell_area)
    flat = int(np.argmax(density))
    i, j = np.unravel_index(flat, grid.shape)
    ax, ay = float(i * grid.hx), float(j * grid.hy)
    local = tuple(_local_energy_from_density(grid, density, (ax, ay), r) for r in radii)
    if crit is None or crit.everywhere:
        dist = math.nan
    else:
        dist = crit.distance_to(ax, ay, grid)
    return LedgerRow(t=float(t), e_f=e_f, v_norm_sq=float(v_norm_sq),
                     ps_norm=float(ps_norm), max_density=float(density[i, j]),
                     argmax_x=ax, argmax_y=ay, local_e=local, dist_to_crit=dist)


# ---------------------------------------------------------------------------
# Concentration detector


@dataclass(frozen=True)
class ConcentrationReport:
    """Outcome of the energy-concentration test on a final field plus ledger.

    detected is true when the local energy inside the smallest probe radius
    meets the threshold; the drift trajectory lists the density argmax over
    the ledger rows, and limiting_local_energy is the minimum of the
    smallest-radius local energy over the trailing quarter of the rows (the
    time-discrete analogue of a vanishing-radius limit inferior).
    """

    detected: bool
    location: tuple[float, float]
    radius_profile: tuple[tuple[float, float], ...]
    eps_conc: float
    everywhere_critical: bool
    limiting_local_energy: float | None = None
    nearest_critical: tuple[float, float] | None = None
    nearest_critical_kind: str | None = None
    distance_to_critical: float | None = None
    drift: tuple[tuple[float, float, float], ...] = ()

    def to_text(self) -> str:
        lines = [
            f"detected = {'true' if self.detected else 'false'}",
            f"eps_conc = {self.eps_conc!r}",
            f"location_x = {self.location[0]!r}",
            f"location_y = {self.location[1]!r}",
        ]
        for k, (r, e) in enumerate(self.radius_profile, start=1):
            lines.append(f"radius_{k} = {r!r}")
            lines.append(f"local_energy_{k} = {e!r}")
        if self.limiting_local_energy is not None:
            lines.append(f"limiting_local_energy = {self.limiting_local_energy!r}")
        if self.everywhere_critical:
            lines.append("critical_set = everywhere")
        elif self.nearest_critical is not None:
            lines.append("critical_set = isolated")
            lines.append(f"nearest_critical_x = {self.nearest_critical[0]!r}")
            lines.append(f"nearest_critical_y = {self.nearest_critical[1]!r}")
            lines.append(f"nearest_critical_kind = {self.nearest_critical_kind}")
            lines.append(f"distance_to_critical = {self.distance_to_critical!r}")
        if self.drift:
            lines.append("drift_t = " + ",".join(repr(p[0]) for p in self.drift))
            lines.append("drift_x = " + ",".join(repr(p[1]) for p in self.drift))
            lines.append("drift_y = " + ",".join(repr(p[2]) for p in self.drift))
        return "\n".join(lines) + "\n"


def detect_concentration(ledger: DiagnosticsLedger | None, field: SphereField,
                         coupling: Coupling, radii, eps_conc: float) -> ConcentrationReport:
    """Locate the energy-density argmax and test it for concentration.

    radii must be strictly decreasing and above the grid resolution; the
    concentration flag fires when the local energy inside the smallest radius
    reaches eps_conc.  The report includes the nearest critical point of the
    coupling with its periodic distance (omitted for constant couplings,
    where every point is critical) and the argmax drift over the ledger.
    """
    grid = field.grid
    radii = validate_radii(grid, radii)
    if not radii:
        raise ValueError("at least one probe radius is required")
    density = energy_density(field, coupling)
    i, j = np.unravel_index(int(np.argmax(density)), grid.shape)
    loc = (float(i * grid.hx), float(j * grid.hy))
    profile = tuple((r, _local_energy_from_density(grid, density, loc, r)) for r in radii)
    detected = profile[-1][1] >= eps_conc

    crit = critical_points(coupling)
    nearest = None
    kind = None
    dist = None
    if not crit.everywhere:
        dist = crit.distance_to(loc[0], loc[1], grid)
        p = crit.nearest_point(loc[0], loc[1], grid)
        if p is not None:
            nearest = (p.x, p.y)
            kind = p.kind

    drift: tuple = ()
    limiting = None
    if ledger is not None and ledger.rows:
        drift = tuple((r.t, r.argmax_x, r.argmax_y) for r in ledger.rows)
        if ledger.radii:
            window = max(1, int(len(ledger.rows) * _LATE_WINDOW_FRACTION))
            limiting = min(r.local_e[-1] for r in ledger.rows[-window:])
    return ConcentrationReport(
        detected=bool(detected), location=loc, radius_profile=profile,
        eps_conc=float(eps_conc), everywhere_critical=crit.everywhere,
        limiting_local_energy=limiting, nearest_critical=nearest,
        nearest_critical_kind=kind, distance_to_critical=dist, drift=drift)
