"""Two-dimensional Yee-grid FDTD for the out-of-plane-E (TE) polarization.

Units: lengths in µm, c = 1, so time is measured in µm/c and the frequency of
a wavelength λ (µm) is 1/λ. Fields Ez, Hx, Hy live on the usual staggered
grid: Ez at (i, j)·Δ, Hx at (i, j+½)·Δ, Hy at (i+½, j)·Δ. The absorbing
boundary is a split-field graded-loss layer (cubic profile) whose loss rate
σ/ε is the same in every material, which keeps it matched across layered
media running into the boundary.

Spectral flux through line monitors is accumulated as running DFTs with the
half-step time offset of H accounted for.
"""

from __future__ import annotations

import hashlib
import json
import math
import os
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

try:
    import numba
    from numba import njit, prange

    # the bundled TBB is often too old; workqueue is always available
    if "NUMBA_THREADING_LAYER" not in os.environ:
        numba.config.THREADING_LAYER = "workqueue"
except ImportError:  # pragma: no cover
    numba = None

__all__ = [
    "Block",
    "Source",
    "FluxMonitor",
    "PointMonitor",
    "FdtdConfig",
    "FluxResult",
    "PointResult",
    "FdtdResult",
    "FdtdError",
    "FdtdConfigError",
    "FdtdInstabilityError",
    "run_fdtd",
    "flux_box",
    "epsilon_map",
    "write_flux_csv",
    "write_grid_dump",
    "read_grid_dump",
    "set_threads",
]


class FdtdError(RuntimeError):
    pass


class FdtdConfigError(ValueError):
    pass


class FdtdInstabilityError(FdtdError):
    pass


@dataclass(frozen=True)
class Block:
    """Axis-aligned rectangle of relative permittivity ``eps``; later blocks
    paint over earlier ones. Infinite extents are allowed."""

    x0: float
    x1: float
    y0: float
    y1: float
    eps: float


@dataclass(frozen=True)
class Source:
    """Soft Ez current with a Gaussian-envelope sinusoid time profile.

    A point dipole when ``(x0, y0) == (x1, y1)``, otherwise a uniform line
    current along an axis-aligned segment. ``bandwidth`` (nm) is the standard
    deviation of the spectral envelope.
    """

    x0: float
    y0: float
    wavelength: float = 910.0  # nm
    bandwidth: float = 20.0  # nm
    x1: float | None = None
    y1: float | None = None
    orientation: str = "z"
    amplitude: float = 1.0

    def __post_init__(self):
        if self.orientation != "z":
            raise FdtdConfigError("only out-of-plane (z) dipoles are supported in TE")
        if self.x1 is None:
            object.__setattr__(self, "x1", self.x0)
        if self.y1 is None:
            object.__setattr__(self, "y1", self.y0)
        if self.x0 != self.x1 and self.y0 != self.y1:
            raise FdtdConfigError("line sources must be axis aligned")

    @property
    def f0(self) -> float:
        return 1e3 / self.wavelength

    @property
    def sigma_t(self) -> float:
        sigma_f = self.f0 * self.bandwidth / self.wavelength
        return 1.0 / (2 * math.pi * sigma_f)

    @property
    def delay(self) -> float:
        return 6.0 * self.sigma_t

    @property
    def end_time(self) -> float:
        return 12.0 * self.sigma_t

    def waveform(self, t):
        s = (np.asarray(t) - self.delay) / self.sigma_t
        return self.amplitude * np.exp(-0.5 * s * s) * np.sin(2 * math.pi * self.f0 * (np.asarray(t) - self.delay))


@dataclass(frozen=True)
class FluxMonitor:
    """Axis-aligned line; positive flux along +x (vertical line) or +y
    (horizontal line), multiplied by ``sign``."""

    name: str
    x0: float
    y0: float
    x1: float
    y1: float
    sign: int = 1

    def __post_init__(self):
        if self.x0 != self.x1 and self.y0 != self.y1:
            raise FdtdConfigError(f"monitor {self.name}: must be axis aligned")
        if self.sign not in (1, -1):
            raise FdtdConfigError("sign must be +1 or -1")

    @property
    def vertical(self) -> bool:
        return self.x0 == self.x1


@dataclass(frozen=True)
class PointMonitor:
    name: str
    x: float
    y: float


def flux_box(name: str, xc: float, yc: float, half_x: float, half_y: float | None = None) -> list[FluxMonitor]:
    """Four monitors forming a closed box; their fluxes sum to the outward power."""
    hy = half_x if half_y is None else half_y
    x0, x1, y0, y1 = xc - half_x, xc + half_x, yc - hy, yc + hy
    return [
        FluxMonitor(f"{name}:right", x1, y0, x1, y1, +1),
        FluxMonitor(f"{name}:left", x0, y0, x0, y1, -1),
        FluxMonitor(f"{name}:top", x0, y1, x1, y1, +1),
        FluxMonitor(f"{name}:bottom", x0, y0, x1, y0, -1),
    ]


@dataclass(frozen=True)
class FdtdConfig:
    """Complete, serialisable description of one simulation.

    ``resolution`` is in cells per µm. ``min_cells_per_wavelength`` is the
    floor checked against the shortest material wavelength in the band.
    ``courant`` is the fraction of the 2D stability limit Δx/(c√2).
    The run stops once the field energy has fallen below ``decay`` times its
    maximum (after the source has switched off), or at ``max_time``.
    """

    size_x: float
    size_y: float
    resolution: float
    source: Source
    monitors: tuple = ()
    points: tuple = ()
    blocks: tuple = ()
    background_eps: float = 1.0
    pml_thickness: float | None = None  # µm, default one vacuum wavelength
    pml_order: int = 3
    pml_reflection: float = 1e-6
    periodic_y: bool = False
    courant: float = 0.5
    wavelengths: tuple = ()  # nm; default: 21 points over ±2 bandwidths
    decay: float = 1e-6
    extra_time: float = 0.0
    max_time: float = 2000.0
    check_interval: int = 50
    min_cells_per_wavelength: float = 10.0

    def __post_init__(self):
        object.__setattr__(self, "monitors", tuple(self.monitors))
        object.__setattr__(self, "points", tuple(self.points))
        object.__setattr__(self, "blocks", tuple(self.blocks))
        if not self.wavelengths:
            s = self.source
            wl = np.linspace(s.wavelength - 2 * s.bandwidth, s.wavelength + 2 * s.bandwidth, 21)
            object.__setattr__(self, "wavelengths", tuple(float(w) for w in wl))
        else:
            object.__setattr__(self, "wavelengths", tuple(float(w) for w in self.wavelengths))
        if self.pml_thickness is None:
            object.__setattr__(self, "pml_thickness", self.source.wavelength * 1e-3)

    @property
    def dx(self) -> float:
        return 1.0 / self.resolution

    @property
    def dt(self) -> float:
        return self.courant * self.dx / math.sqrt(2.0)

    @property
    def shape(self) -> tuple[int, int]:
        return int(round(self.size_x * self.resolution)) + 1, int(round(self.size_y * self.resolution)) + (
            0 if self.periodic_y else 1
        )

    def max_eps(self) -> float:
        return max([self.background_eps] + [b.eps for b in self.blocks])

    def validate(self) -> None:
        if not 0 < self.courant <= 1.0:
            raise FdtdConfigError("courant must be in (0, 1]: dt must satisfy dt <= dx/(c*sqrt(2))")
        if self.courant >= 1.0:
            raise FdtdConfigError("courant factor must be strictly below the stability limit")
        lam_min = min(self.wavelengths) * 1e-3 / math.sqrt(self.max_eps())
        if lam_min * self.resolution < self.min_cells_per_wavelength:
            raise FdtdConfigError(
                f"resolution {self.resolution:g}/µm gives {lam_min * self.resolution:.2f} cells per "
                f"shortest material wavelength (< {self.min_cells_per_wavelength:g})"
            )
        inner_x = (self.pml_thickness, self.size_x - self.pml_thickness)
        inner_y = (-math.inf, math.inf) if self.periodic_y else (self.pml_thickness, self.size_y - self.pml_thickness)
        for m in self.monitors:
            for x, y in ((m.x0, m.y0), (m.x1, m.y1)):
                if not (inner_x[0] < x < inner_x[1] and inner_y[0] <= y <= inner_y[1]) or (
                    not self.periodic_y and not inner_y[0] < y < inner_y[1]
                ):
                    raise FdtdConfigError(f"monitor {m.name} intersects the absorbing boundary")
        s = self.source
        for x, y in ((s.x0, s.y0), (s.x1, s.y1)):
            if not (0 <= x <= self.size_x and (self.periodic_y or 0 <= y <= self.size_y)):
                raise FdtdConfigError("source outside the domain")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["monitors"] = [asdict(m) for m in self.monitors]
        d["points"] = [asdict(p) for p in self.points]
        d["blocks"] = [asdict(b) for b in self.blocks]
        return d

    def content_hash(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True, default=float).encode()
        return hashlib.sha256(blob).hexdigest()


@dataclass
class FluxResult:
    """Spectral flux through one monitor. ``ez``/``h`` hold the DFT field
    samples along the line (H is the component entering the flux)."""

    monitor: str
    wavelengths: np.ndarray  # nm
    power: np.ndarray
    positions: np.ndarray | None = field(default=None, repr=False)
    ez: np.ndarray | None = field(default=None, repr=False)
    h: np.ndarray | None = field(default=None, repr=False)


@dataclass
class PointResult:
    monitor: str
    wavelengths: np.ndarray
    ez: np.ndarray  # complex DFT amplitude


@dataclass
class FdtdResult:
    """Monitor spectra of one run plus bookkeeping."""

    fluxes: list
    points: list = field(default_factory=list)
    steps: int = 0
    time: float = 0.0
    config_hash: str = ""
    converged: bool = True  # False when max_time cut the run short
    snapshots: dict = field(default_factory=dict, repr=False)  # time -> Ez

    def flux(self, name: str) -> np.ndarray:
        for f in self.fluxes:
            if f.monitor == name:
                return f.power
        raise KeyError(name)

    def total(self, prefix: str) -> np.ndarray:
        """Sum of all monitors whose name starts with ``prefix`` (e.g. a box)."""
        parts = [f.power for f in self.fluxes if f.monitor.startswith(prefix)]
        if not parts:
            raise KeyError(prefix)
        return np.sum(parts, axis=0)

    def point(self, name: str) -> np.ndarray:
        for p in self.points:
            if p.monitor == name:
                return p.ez
        raise KeyError(name)

    @property
    def wavelengths(self) -> np.ndarray:
        return self.fluxes[0].wavelengths if self.fluxes else self.points[0].wavelengths

    # list-like access keeps run_fdtd(...) usable as "list of FluxResult"
    def __iter__(self):
        return iter(self.fluxes)

    def __len__(self):
        return len(self.fluxes)

    def __getitem__(self, i):
        return self.fluxes[i]


def epsilon_map(config: FdtdConfig) -> np.ndarray:
    """Relative permittivity sampled at the Ez points (cell midpoints of the
    dual grid), shape ``config.shape``."""
    nx, ny = config.shape
    x = np.arange(nx) * config.dx
    y = np.arange(ny) * config.dx
    eps = np.full((nx, ny), float(config.background_eps))
    for b in config.blocks:
        ix = (x >= b.x0) & (x < b.x1)
        iy = (y >= b.y0) & (y < b.y1)
        eps[np.ix_(ix, iy)] = b.eps
    return eps


def _pml_profile(n, dx, thickness, order, reflection, staggered, periodic=False):
    """Loss rate σ/ε along one axis at integer (or half-integer) nodes."""
    pos = (np.arange(n) + (0.5 if staggered else 0.0)) * dx
    length = (n - 1) * dx
    s = np.zeros(n)
    if periodic or thickness <= 0:
        return s
    smax = -(order + 1) * math.log(reflection) / (2.0 * thickness)
    d_lo = thickness - pos
    d_hi = pos - (length - thickness)
    depth = np.maximum(np.maximum(d_lo, d_hi), 0.0) / thickness
    return smax * np.minimum(depth, 1.0) ** order


def _coeffs(sigma, dt):
    a = np.exp(-sigma * dt)
    with np.errstate(divide="ignore", invalid="ignore"):
        b = np.where(sigma > 0, (1.0 - a) / np.where(sigma > 0, sigma, 1.0), dt)
    return a, b


if numba is not None:

    @njit(parallel=True, cache=True)
    def _update_h(ez, hx, hy, ahx, bhx, ahy, bhy, inv_dx, periodic):  # pragma: no cover - jitted
        nx, ny = ez.shape
        for i in prange(nx):
            for j in range(ny - 1):
                hx[i, j] = ahx[j] * hx[i, j] - bhx[j] * (ez[i, j + 1] - ez[i, j]) * inv_dx
            if periodic:
                hx[i, ny - 1] = ahx[ny - 1] * hx[i, ny - 1] - bhx[ny - 1] * (ez[i, 0] - ez[i, ny - 1]) * inv_dx
        for i in prange(nx - 1):
            for j in range(ny):
                hy[i, j] = ahy[i] * hy[i, j] + bhy[i] * (ez[i + 1, j] - ez[i, j]) * inv_dx

    @njit(parallel=True, cache=True)
    def _update_e(ez, ezx, ezy, hx, hy, inv_eps, aex, bex, aey, bey, inv_dx, periodic):  # pragma: no cover
        nx, ny = ez.shape
        for i in prange(1, nx - 1):
            if periodic:
                for j in range(ny):
                    jm = j - 1 if j > 0 else ny - 1
                    ie = inv_eps[i, j]
                    ezx[i, j] = aex[i] * ezx[i, j] + bex[i] * ie * (hy[i, j] - hy[i - 1, j]) * inv_dx
                    ezy[i, j] = aey[j] * ezy[i, j] - bey[j] * ie * (hx[i, j] - hx[i, jm]) * inv_dx
                    ez[i, j] = ezx[i, j] + ezy[i, j]
            else:
                for j in range(1, ny - 1):
                    ie = inv_eps[i, j]
                    ezx[i, j] = aex[i] * ezx[i, j] + bex[i] * ie * (hy[i, j] - hy[i - 1, j]) * inv_dx
                    ezy[i, j] = aey[j] * ezy[i, j] - bey[j] * ie * (hx[i, j] - hx[i, j - 1]) * inv_dx
                    ez[i, j] = ezx[i, j] + ezy[i, j]


def _update_h_np(ez, hx, hy, ahx, bhx, ahy, bhy, inv_dx, periodic):
    hx[:, :-1] = ahx[:-1] * hx[:, :-1] - bhx[:-1] * (ez[:, 1:] - ez[:, :-1]) * inv_dx
    if periodic:
        hx[:, -1] = ahx[-1] * hx[:, -1] - bhx[-1] * (ez[:, 0] - ez[:, -1]) * inv_dx
    hy[:-1, :] = ahy[:-1, None] * hy[:-1, :] + bhy[:-1, None] * (ez[1:, :] - ez[:-1, :]) * inv_dx


def _update_e_np(ez, ezx, ezy, hx, hy, inv_eps, aex, bex, aey, bey, inv_dx, periodic):
    dhy = (hy[1:-1, :] - hy[:-2, :]) * inv_dx
    if periodic:
        dhx = (hx[1:-1, :] - np.roll(hx[1:-1, :], 1, axis=1)) * inv_dx
        sl = (slice(1, -1), slice(None))
        ay, by = aey, bey
    else:
        dhx = (hx[1:-1, 1:-1] - hx[1:-1, :-2]) * inv_dx
        dhy = dhy[:, 1:-1]
        sl = (slice(1, -1), slice(1, -1))
        ay, by = aey[1:-1], bey[1:-1]
    ie = inv_eps[sl]
    ezx[sl] = aex[1:-1, None] * ezx[sl] + bex[1:-1, None] * ie * dhy
    ezy[sl] = ay * ezy[sl] - by * ie * dhx
    ez[sl] = ezx[sl] + ezy[sl]


def set_threads(n: int | None) -> None:
    """Number of worker threads for the field update (results do not depend on it)."""
    if numba is not None and n:
        numba.set_num_threads(max(1, min(int(n), numba.config.NUMBA_NUM_THREADS)))


class _Sampler:
    """Gathers monitor samples (Ez at grid points, H averaged onto them)."""

    def __init__(self, config: FdtdConfig, shape):
        nx, ny = shape
        dx = config.dx
        self.lines = []
        e_idx, h_idx_a, h_idx_b, kinds, weights = [], [], [], [], []
        offset = 0
        for m in config.monitors:
            if m.vertical:
                i = int(round(m.x0 / dx))
                j0, j1 = sorted((int(round(m.y0 / dx)), int(round(m.y1 / dx))))
                js = np.arange(j0, j1 + 1) % ny if config.periodic_y else np.arange(j0, j1 + 1)
                e = np.ravel_multi_index((np.full(js.size, i), js), (nx, ny))
                ha = np.ravel_multi_index((np.full(js.size, i - 1), js), (nx, ny))
                hb = np.ravel_multi_index((np.full(js.size, i), js), (nx, ny))
                kind = np.zeros(js.size, dtype=np.int8)  # Sx = -Ez*Hy
            else:
                j = int(round(m.y0 / dx))
                i0, i1 = sorted((int(round(m.x0 / dx)), int(round(m.x1 / dx))))
                iis = np.arange(i0, i1 + 1)
                jm = (j - 1) % ny if config.periodic_y else j - 1
                e = np.ravel_multi_index((iis, np.full(iis.size, j)), (nx, ny))
                ha = np.ravel_multi_index((iis, np.full(iis.size, jm)), (nx, ny))
                hb = np.ravel_multi_index((iis, np.full(iis.size, j)), (nx, ny))
                kind = np.ones(iis.size, dtype=np.int8)  # Sy = Ez*Hx
            # trapezoid weights along the segment
            w = np.full(e.size, dx)
            if e.size > 1:
                w[0] = w[-1] = 0.5 * dx
            else:
                w[:] = 1.0
            coords = (js if m.vertical else iis) * dx
            self.lines.append((m, slice(offset, offset + e.size), coords))
            offset += e.size
            e_idx.append(e)
            h_idx_a.append(ha)
            h_idx_b.append(hb)
            kinds.append(kind)
            weights.append(w)
        if e_idx:
            self.e_idx = np.concatenate(e_idx)
            self.ha = np.concatenate(h_idx_a)
            self.hb = np.concatenate(h_idx_b)
            self.kind = np.concatenate(kinds).astype(bool)
            self.w = np.concatenate(weights)
        else:
            self.e_idx = np.zeros(0, dtype=np.intp)
            self.ha = self.hb = self.e_idx
            self.kind = np.zeros(0, dtype=bool)
            self.w = np.zeros(0)
        self.pt_idx = np.array(
            [np.ravel_multi_index((int(round(p.x / dx)), int(round(p.y / dx)) % ny), (nx, ny)) for p in config.points],
            dtype=np.intp,
        )

    def sample(self, ez, hx, hy):
        e = ez.ravel()[self.e_idx]
        hxr, hyr = hx.ravel(), hy.ravel()
        h = np.where(
            self.kind,
            0.5 * (hxr[self.ha] + hxr[self.hb]),
            0.5 * (hyr[self.ha] + hyr[self.hb]),
        )
        return e, h, ez.ravel()[self.pt_idx]


def _energy(ez, hx, hy, eps):
    with np.errstate(over="ignore", invalid="ignore"):
        return float(np.sum(eps * ez * ez) + np.sum(hx * hx) + np.sum(hy * hy))


def run_fdtd(config: FdtdConfig, threads: int | None = None, snapshot_times=(), use_numba: bool = True) -> FdtdResult:
    """Leapfrog Yee integration with running-DFT flux and point monitors.

    Raises :class:`FdtdConfigError` for invalid configurations and
    :class:`FdtdInstabilityError` if the fields blow up or become non-finite.
    """
    config.validate()
    set_threads(threads)
    nx, ny = config.shape
    dx, dt = config.dx, config.dt
    inv_dx = 1.0 / dx
    periodic = bool(config.periodic_y)

    eps = epsilon_map(config)
    inv_eps = 1.0 / eps
    sx_e = _pml_profile(nx, dx, config.pml_thickness, config.pml_order, config.pml_reflection, False)
    sx_h = _pml_profile(nx, dx, config.pml_thickness, config.pml_order, config.pml_reflection, True)
    sy_e = _pml_profile(ny, dx, config.pml_thickness, config.pml_order, config.pml_reflection, False, periodic)
    sy_h = _pml_profile(ny, dx, config.pml_thickness, config.pml_order, config.pml_reflection, True, periodic)
    aex, bex = _coeffs(sx_e, dt)
    aey, bey = _coeffs(sy_e, dt)
    ahy, bhy = _coeffs(sx_h, dt)
    ahx, bhx = _coeffs(sy_h, dt)

    ez = np.zeros((nx, ny))
    ezx = np.zeros((nx, ny))
    ezy = np.zeros((nx, ny))
    hx = np.zeros((nx, ny))
    hy = np.zeros((nx, ny))

    if use_numba and numba is not None:
        upd_h, upd_e = _update_h, _update_e
    else:
        upd_h, upd_e = _update_h_np, _update_e_np

    # source footprint
    src = config.source
    i0, i1 = sorted((int(round(src.x0 / dx)), int(round(src.x1 / dx))))
    j0, j1 = sorted((int(round(src.y0 / dx)), int(round(src.y1 / dx))))
    si = np.arange(i0, i1 + 1)
    sj = np.arange(j0, j1 + 1) % ny
    if si.size == 1 and sj.size == 1:
        src_scale = 1.0 / (dx * dx)
    else:
        src_scale = 1.0 / dx
    src_ix = np.ix_(si, sj)
    src_coef = dt * inv_eps[src_ix] * src_scale

    sampler = _Sampler(config, (nx, ny))
    freqs = 1e3 / np.asarray(config.wavelengths)
    omega = 2 * math.pi * freqs
    nf = freqs.size
    E_f = np.zeros((nf, sampler.e_idx.size), dtype=complex)
    H_f = np.zeros((nf, sampler.e_idx.size), dtype=complex)
    P_f = np.zeros((nf, sampler.pt_idx.size), dtype=complex)
    # per-step phase rotation avoids evaluating exp() every step
    rot = np.exp(1j * omega * dt)
    ph_e = np.ones(nf, dtype=complex)
    ph_h = np.exp(0.5j * omega * dt)

    t_src_end = src.end_time
    max_steps = int(math.ceil(config.max_time / dt))
    e_max = 0.0
    e_src_max = 0.0
    step = 0
    min_steps = int(math.ceil((t_src_end + config.extra_time) / dt))
    snaps = {}
    snap_steps = {int(round(t / dt)): t for t in snapshot_times}
    converged = False

    while step < max_steps:
        t = step * dt
        upd_h(ez, hx, hy, ahx, bhx, ahy, bhy, inv_dx, periodic)
        if sampler.e_idx.size or sampler.pt_idx.size:
            e, h, p = sampler.sample(ez, hx, hy)
            if e.size:
                E_f += ph_e[:, None] * e[None, :]
                H_f += ph_h[:, None] * h[None, :]
            if p.size:
                P_f += ph_e[:, None] * p[None, :]
        ph_e *= rot
        ph_h *= rot
        upd_e(ez, ezx, ezy, hx, hy, inv_eps, aex, bex, aey, bey, inv_dx, periodic)
        if t <= t_src_end:
            # current J at time t + dt/2 (centred on the E update)
            amp = src.waveform(t + 0.5 * dt)
            ezx[src_ix] -= src_coef * amp
            ez[src_ix] = ezx[src_ix] + ezy[src_ix]
        step += 1
        if step in snap_steps:
            snaps[snap_steps[step]] = ez.copy()
        if step % config.check_interval == 0:
            en = _energy(ez, hx, hy, eps)
            if not math.isfinite(en):
                raise FdtdInstabilityError(f"non-finite fields at step {step}")
            if t <= t_src_end:
                e_src_max = max(e_src_max, en)
            elif e_src_max > 0 and en > 1e6 * e_src_max:
                raise FdtdInstabilityError(f"field energy grew by >1e6 after source turn-off (step {step})")
            e_max = max(e_max, en)
            if step >= min_steps and en <= config.decay * e_max:
                converged = True
                break
        if step % 1000 == 0 and not (np.isfinite(ez).all() and np.isfinite(hx).all() and np.isfinite(hy).all()):
            raise FdtdInstabilityError(f"non-finite fields at step {step}")

    # time-averaged Poynting flux, common constant factors dropped consistently
    prod = E_f * np.conj(H_f) * dt * dt
    s = np.where(sampler.kind[None, :], prod.real, -prod.real) * sampler.w[None, :]
    fluxes = []
    for m, sl, coords in sampler.lines:
        fluxes.append(
            FluxResult(
                m.name,
                np.asarray(config.wavelengths),
                m.sign * s[:, sl].sum(axis=1),
                positions=coords,
                ez=E_f[:, sl] * dt,
                h=H_f[:, sl] * dt,
            )
        )
    points = [PointResult(p.name, np.asarray(config.wavelengths), P_f[:, k] * dt) for k, p in enumerate(config.points)]
    return FdtdResult(fluxes, points, step, step * dt, config.content_hash(), converged, snaps)


def write_flux_csv(path, result: FluxResult) -> None:
    with open(path, "w") as fh:
        fh.write("wavelength_nm,power\n")
        for w, p in zip(result.wavelengths, result.power):
            fh.write(f"{w:.6f},{p:.12e}\n")


def write_grid_dump(path, grid: np.ndarray, spacing: float) -> None:
    """Flat little-endian float64 grid preceded by a one-line text header."""
    grid = np.ascontiguousarray(grid, dtype="<f8")
    header = f"nx={grid.shape[0]} ny={grid.shape[1]} dx_um={spacing:.10g} dtype=f8le order=C\n"
    with open(path, "wb") as fh:
        fh.write(header.encode("ascii"))
        fh.write(grid.tobytes())


def read_grid_dump(path) -> tuple[np.ndarray, float]:
    with open(path, "rb") as fh:
        header = fh.readline().decode("ascii").split()
        meta = dict(item.split("=") for item in header)
        data = np.frombuffer(fh.read(), dtype="<f8")
    return data.reshape(int(meta["nx"]), int(meta["ny"])), float(meta["dx_um"])


def default_cache_dir() -> Path:
    return Path(os.environ.get("QDCHIP_CACHE", Path.home() / ".cache" / "qdchip"))
