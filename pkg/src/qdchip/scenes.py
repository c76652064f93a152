"""Canonical FDTD scenes built from a device description.

Two geometries are provided:

* the vertical cross-section along the ridge axis, with every DBR layer
  resolved, used for the emitter coupling fraction (β);
* the lateral (top-view) cross-section, where the ridge is a strip of the
  vertical effective index surrounded by air, used for the cleaved-facet
  transmission.

Both use the TE solver in :mod:`qdchip.fdtd`. Facet transmission needs a
facet-free reference run; references are stored under the content hash of
the reference configuration so a changed scene can never reuse a stale
normalisation.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as sla

from ._config import ConfigError, load_toml, reject_unknown
from .device import LayerStack, RidgeGeometry, load_device, bundled_device
from .fdtd import (
    Block,
    FdtdConfig,
    FdtdConfigError,
    FdtdError,
    FdtdResult,
    FluxMonitor,
    Source,
    epsilon_map,
    flux_box,
    run_fdtd,
)
from .modes import vertical_modes

__all__ = [
    "ProtocolError",
    "BetaResult",
    "FacetResult",
    "ReferenceStore",
    "default_resolution",
    "etch_depth",
    "vertical_scene",
    "dipole_beta",
    "guided_modes",
    "lateral_index",
    "facet_scene",
    "run_facet_reference",
    "facet_outcoupling",
    "SceneSpec",
    "load_scene",
    "scene_from_dict",
    "run_scene",
    "BETA_SCENE",
    "FACET_SCENE",
]

MIN_MONITOR_DISTANCE = 10.0  # µm
MIN_VACUUM_BEYOND_FACET = 10.0  # µm


class ProtocolError(FdtdError):
    """A normalisation step was skipped (e.g. no reference run stored)."""


def default_resolution(max_index: float) -> float:
    """20 cells per vacuum µm scaled by the largest index in the scene."""
    return 20.0 * max_index


def etch_depth(geometry: RidgeGeometry, stack: LayerStack) -> float:
    """Depth (nm below the top surface) of the ridge etch floor.

    The etch stops halfway into the GaAs layer of bottom-mirror pair
    ``geometry.etch_stop_pair``; pair 0 means the etch stops at the core's
    lower boundary.
    """
    _, core_end = stack.tag_span("core")
    if geometry.etch_stop_pair == 0:
        return core_end
    bottom = [i for i, t in enumerate(stack.tags) if t == "bottom_dbr"]
    k = 2 * geometry.etch_stop_pair - 1  # high-index layer of the pair
    if k >= len(bottom):
        raise ValueError("etch_stop_pair exceeds the number of bottom mirror pairs")
    z = np.concatenate([[0.0], np.cumsum(stack.thicknesses())])
    idx = bottom[k]
    return float(0.5 * (z[idx] + z[idx + 1]))


# ---------------------------------------------------------------- vertical / β


@dataclass
class BetaResult:
    wavelengths: np.ndarray  # nm
    beta: np.ndarray  # guided-mode share
    beta_flux: np.ndarray  # everything crossing the monitors
    box_power: np.ndarray
    config_hash: str = ""
    run: FdtdResult | None = field(default=None, repr=False)


@dataclass(frozen=True)
class _VerticalLayout:
    config: FdtdConfig
    core_y: float
    top_y: float
    source_x: float
    monitor_y: tuple[float, float]


def vertical_scene(
    geometry: RidgeGeometry,
    stack: LayerStack,
    wavelength: float = 910.0,
    *,
    dipole_offset: float = 0.0,
    monitor_distance: float = MIN_MONITOR_DISTANCE,
    box_half: float = 0.2,
    resolution: float | None = None,
    bandwidth: float = 20.0,
    wavelengths=None,
    substrate_pad: float = 0.5,
    air_pad: float = 1.0,
    margin: float = 1.5,
    decay: float = 1e-5,
) -> _VerticalLayout:
    """Vertical cross-section with a point dipole ``dipole_offset`` µm above
    (positive) or below the core centre."""
    if monitor_distance < MIN_MONITOR_DISTANCE:
        raise FdtdConfigError(f"waveguide monitors must sit >= {MIN_MONITOR_DISTANCE:g} µm from the source")
    n_max = max(abs(layer.material.n_real(wavelength)) for layer in stack.layers)
    n_max = max(n_max, stack.substrate.n_real(wavelength), stack.ambient.n_real(wavelength))
    res = default_resolution(n_max) if resolution is None else float(resolution)
    dx = 1.0 / res
    pml = wavelength * 1e-3

    c0, c1 = stack.tag_span("core")
    core_depth = 0.5 * (c0 + c1) * 1e-3
    total = stack.total_thickness * 1e-3
    # shift the stack so that the core centre lands on a grid node
    base = pml + substrate_pad
    core_y = base + total - core_depth
    shift = math.ceil(core_y / dx) * dx - core_y
    base += shift
    core_y += shift
    top_y = base + total

    blocks = []
    y = top_y
    for layer in stack.layers:
        y_next = y - layer.thickness * 1e-3
        blocks.append(Block(-math.inf, math.inf, y_next, y, layer.material.n_real(wavelength) ** 2))
        y = y_next
    blocks.append(Block(-math.inf, math.inf, top_y, math.inf, stack.ambient.n_real(wavelength) ** 2))
    size_y = top_y + air_pad + pml

    half = monitor_distance + margin + pml
    size_x = 2 * half
    xs = round(half / dx) * dx
    ys = core_y + round(dipole_offset / dx) * dx
    if not base < ys < top_y:
        raise ValueError("dipole must lie inside the layer stack")

    floor = top_y - etch_depth(geometry, stack) * 1e-3
    monitors = flux_box("box", xs, ys, box_half)
    monitors += [
        FluxMonitor("wg:right", xs + monitor_distance, floor, xs + monitor_distance, top_y, +1),
        FluxMonitor("wg:left", xs - monitor_distance, floor, xs - monitor_distance, top_y, -1),
    ]
    cfg = FdtdConfig(
        size_x,
        size_y,
        res,
        Source(xs, ys, wavelength=wavelength, bandwidth=bandwidth),
        monitors=monitors,
        blocks=blocks,
        background_eps=stack.substrate.n_real(wavelength) ** 2,
        wavelengths=tuple(wavelengths) if wavelengths is not None else (),
        decay=decay,
        max_time=40.0 * half,
    )
    return _VerticalLayout(cfg, core_y, top_y, xs, (floor, top_y))


def guided_modes(config: FdtdConfig, x: float, core: tuple[float, float], wavelength: float, count: int = 30):
    """Eigenmodes (n_eff, field) of the permittivity column at ``x`` that keep
    more than half of their energy inside ``core`` (y-range, µm).

    The column is closed by the grid edges, so the remaining eigenvectors are
    a discretised radiation continuum and are discarded.
    """
    eps = epsilon_map(config)
    col = eps[int(round(x / config.dx)), :]
    n = col.size
    dy = config.dx
    lap = sp.diags([np.ones(n - 1), -2 * np.ones(n), np.ones(n - 1)], [-1, 0, 1]) / dy**2
    yy = np.arange(n) * dy
    inside = (yy >= core[0]) & (yy <= core[1])
    k0 = 2 * math.pi * 1e3 / wavelength
    n_top = math.sqrt(float(col.max()))
    a = (lap + sp.diags(k0**2 * col)).tocsc()
    vals, vecs = sla.eigsh(a, k=min(count, n - 2), sigma=(n_top * k0) ** 2)
    modes = []
    for q in np.argsort(-vals):
        if vals[q] <= 0:
            continue
        e = vecs[:, q]
        if np.sum(e[inside] ** 2) > 0.5 * np.sum(e * e):
            modes.append((math.sqrt(vals[q]) / k0, e))
    return modes


def _guided_power(run: FdtdResult, config: FdtdConfig, x_src: float, core: tuple[float, float]) -> np.ndarray:
    # modes are orthogonal, so each one's power is |<E, e>|^2 n_eff / <e, e>
    dy = config.dx
    monitors = [f for f in run.fluxes if f.monitor.startswith("wg:")]
    out = np.zeros(len(config.wavelengths))
    for k, wl in enumerate(config.wavelengths):
        for n_eff, e in guided_modes(config, x_src, core, wl):
            norm = np.sum(e * e) * dy
            for f in monitors:
                js = np.round(f.positions / dy).astype(int)
                amp = np.sum(f.ez[k] * e[js]) * dy
                out[k] += abs(amp) ** 2 * n_eff / norm
    return out


def dipole_beta(
    geometry: RidgeGeometry,
    stack: LayerStack,
    wavelength: float = 910.0,
    *,
    dipole_offset: float = 0.0,
    require_core: bool = True,
    threads: int | None = None,
    **scene_kw,
) -> BetaResult:
    """Fraction of the dipole's total power carried by the guided waveguide
    mode(s) through the two ridge cross-section monitors (both directions).

    The denominator is the outward flux through a small closed box around the
    dipole. The guided share is found by projecting the monitor fields onto
    the core-bound eigenmodes; the raw monitor flux, which also counts
    radiation still crossing the monitors, is kept as ``beta_flux``.
    """
    c0, c1 = stack.tag_span("core")
    if require_core and not abs(dipole_offset) * 1e3 < 0.5 * (c1 - c0):
        raise ValueError("dipole lies outside the core (pass require_core=False to override)")
    layout = vertical_scene(geometry, stack, wavelength, dipole_offset=dipole_offset, **scene_kw)
    run = run_fdtd(layout.config, threads=threads)
    box = run.total("box")
    flux = run.flux("wg:right") + run.flux("wg:left")
    half = 0.5e-3 * (c1 - c0)
    guided = _guided_power(run, layout.config, layout.source_x, (layout.core_y - half, layout.core_y + half))
    return BetaResult(
        np.asarray(layout.config.wavelengths),
        np.clip(guided / box, 0.0, 1.0),
        np.clip(flux / box, 0.0, 1.0),
        box,
        run.config_hash,
        run,
    )


# ------------------------------------------------------------ lateral / facet


def lateral_index(stack: LayerStack, wavelength: float, pol: str = "TE") -> float:
    """Index of the ridge in the top view: the fundamental vertical mode."""
    modes = vertical_modes(stack, wavelength, pol)
    if not modes:
        raise FdtdConfigError("layer stack guides no vertical mode at this wavelength")
    return modes[0].effective_index


def facet_scene(
    geometry: RidgeGeometry,
    stack: LayerStack,
    wavelength: float = 910.0,
    kind: str = "facet",
    *,
    source_distance: float = 20.0,
    side_gap: float = 4.0,
    vacuum: float = MIN_VACUUM_BEYOND_FACET,
    plane_offset: float = 0.5,
    resolution: float | None = None,
    bandwidth: float = 20.0,
    wavelengths=None,
    decay: float = 1e-5,
) -> FdtdConfig:
    """Top view of a ridge ending in a cleaved facet.

    ``kind`` selects the structure beyond the facet plane: ``"facet"``
    (ambient), ``"reference"`` (ridge continues) or ``"matched"`` (ridge
    material fills everything beyond the facet).
    """
    if kind not in ("facet", "reference", "matched"):
        raise ValueError(f"unknown facet scene kind {kind!r}")
    if vacuum < MIN_VACUUM_BEYOND_FACET:
        raise FdtdConfigError(f"need >= {MIN_VACUUM_BEYOND_FACET:g} µm beyond the facet")
    n_ridge = lateral_index(stack, wavelength)
    n_amb = stack.ambient.n_real(wavelength)
    res = default_resolution(n_ridge) if resolution is None else float(resolution)
    pml = wavelength * 1e-3
    w = geometry.ridge_width
    size_y = 2 * (0.5 * w + side_gap + pml)
    yc = 0.5 * size_y
    xs = pml + 1.5
    xf = xs + source_distance
    size_x = xf + vacuum + pml

    eps_r = n_ridge**2
    if kind == "reference":
        blocks = [Block(-math.inf, math.inf, yc - w / 2, yc + w / 2, eps_r)]
    elif kind == "facet":
        blocks = [Block(-math.inf, xf, yc - w / 2, yc + w / 2, eps_r)]
    else:
        blocks = [Block(-math.inf, xf, yc - w / 2, yc + w / 2, eps_r), Block(xf, math.inf, -math.inf, math.inf, eps_r)]

    y0, y1 = pml + 0.05, size_y - pml - 0.05
    strip = 0.5 * w + 0.25
    monitors = [
        FluxMonitor("incident", xf, yc - strip, xf, yc + strip, +1),
        FluxMonitor("transmitted", xf + plane_offset, y0, xf + plane_offset, y1, +1),
    ]
    return FdtdConfig(
        size_x,
        size_y,
        res,
        Source(xs, yc, wavelength=wavelength, bandwidth=bandwidth),
        monitors=monitors,
        blocks=blocks,
        background_eps=n_amb**2,
        wavelengths=tuple(wavelengths) if wavelengths is not None else (),
        decay=decay,
        max_time=40.0 * size_x,
    )


class ReferenceStore:
    """Reference spectra keyed by the content hash of the reference config.

    With ``directory`` set, entries persist as small JSON files.
    """

    def __init__(self, directory: str | Path | None = None):
        self.directory = Path(directory) if directory is not None else None
        self._mem: dict[str, dict] = {}

    def _path(self, key):
        return self.directory / f"ref-{key}.json"

    def __contains__(self, key: str) -> bool:
        return key in self._mem or (self.directory is not None and self._path(key).exists())

    def put(self, key: str, wavelengths, incident) -> None:
        entry = {"wavelengths": [float(w) for w in wavelengths], "incident": [float(p) for p in incident]}
        self._mem[key] = entry
        if self.directory is not None:
            self.directory.mkdir(parents=True, exist_ok=True)
            tmp = self._path(key).with_suffix(".tmp")
            tmp.write_text(json.dumps(entry))
            tmp.replace(self._path(key))

    def get(self, key: str) -> tuple[np.ndarray, np.ndarray]:
        if key not in self._mem:
            if self.directory is None or not self._path(key).exists():
                raise ProtocolError(f"no reference run stored for scene {key[:12]}")
            self._mem[key] = json.loads(self._path(key).read_text())
        e = self._mem[key]
        return np.asarray(e["wavelengths"]), np.asarray(e["incident"])


@dataclass
class FacetResult:
    wavelengths: np.ndarray
    fraction: np.ndarray
    transmitted: np.ndarray
    incident: np.ndarray
    reference_hash: str
    config_hash: str


def run_facet_reference(
    geometry: RidgeGeometry, stack: LayerStack, store: ReferenceStore, wavelength: float = 910.0, threads=None, **kw
) -> str:
    """Run the facet-free reference scene (if not already stored); returns its key."""
    cfg = facet_scene(geometry, stack, wavelength, "reference", **kw)
    key = cfg.content_hash()
    if key not in store:
        run = run_fdtd(cfg, threads=threads)
        store.put(key, run.wavelengths, run.flux("incident"))
    return key


def facet_outcoupling(
    geometry: RidgeGeometry,
    stack: LayerStack,
    store: ReferenceStore,
    wavelength: float = 910.0,
    *,
    kind: str = "facet",
    threads: int | None = None,
    **kw,
) -> FacetResult:
    """Forward power through a vacuum plane just beyond the facet divided by
    the guided power arriving at the facet in the matching reference run.

    Raises :class:`ProtocolError` if ``store`` lacks that reference.
    """
    ref_cfg = facet_scene(geometry, stack, wavelength, "reference", **kw)
    key = ref_cfg.content_hash()
    ref_wl, incident = store.get(key)
    cfg = facet_scene(geometry, stack, wavelength, kind, **kw) if kind != "reference" else ref_cfg
    if not np.allclose(ref_wl, cfg.wavelengths):
        raise ProtocolError("reference run covers different wavelengths")
    run = run_fdtd(cfg, threads=threads)
    trans = run.flux("transmitted")
    return FacetResult(np.asarray(cfg.wavelengths), trans / incident, trans, incident, key, run.config_hash)


# ------------------------------------------------------------------ configs

_SCENE_KEYS = {
    "beta": {
        "scene", "device", "wavelength_nm", "bandwidth_nm", "wavelengths_nm", "resolution",
        "monitor_distance_um", "dipole_offset_um", "decay",
    },
    "facet": {
        "scene", "device", "wavelength_nm", "bandwidth_nm", "wavelengths_nm", "resolution",
        "source_distance_um", "side_gap_um", "vacuum_um", "kind", "decay",
    },
}
_RENAME = {
    "bandwidth_nm": "bandwidth",
    "wavelengths_nm": "wavelengths",
    "monitor_distance_um": "monitor_distance",
    "dipole_offset_um": "dipole_offset",
    "source_distance_um": "source_distance",
    "side_gap_um": "side_gap",
    "vacuum_um": "vacuum",
}

BETA_SCENE = Path(__file__).parent / "data" / "scene_beta.toml"
FACET_SCENE = Path(__file__).parent / "data" / "scene_facet.toml"


@dataclass(frozen=True)
class SceneSpec:
    """Parsed scene config: which scene, for which device, with which options."""

    scene: str
    device_path: Path | None
    wavelength: float
    options: dict

    def device(self):
        return bundled_device() if self.device_path is None else load_device(self.device_path)


def scene_from_dict(data: dict, base: Path | None = None, where: str = "scene") -> SceneSpec:
    kind = data.get("scene")
    if kind not in _SCENE_KEYS:
        raise ConfigError(f"{where}: 'scene' must be one of {sorted(_SCENE_KEYS)}")
    reject_unknown(data, _SCENE_KEYS[kind], where)
    opts = {}
    for key, val in data.items():
        if key in ("scene", "device", "wavelength_nm"):
            continue
        if key == "resolution" and not val:
            continue  # 0 selects the default resolution
        opts[_RENAME.get(key, key)] = tuple(val) if isinstance(val, list) else val
    dev = data.get("device")
    dev_path = None
    if dev:
        dev_path = Path(dev)
        if not dev_path.is_absolute() and base is not None:
            dev_path = base / dev_path
    return SceneSpec(kind, dev_path, float(data.get("wavelength_nm", 910.0)), opts)


def load_scene(path) -> SceneSpec:
    path = Path(path)
    data = load_toml(path)
    data.pop("targets", None)
    return scene_from_dict(data, path.parent, str(path))


def run_scene(spec: SceneSpec, store: ReferenceStore | None = None, threads: int | None = None):
    """Run a parsed scene; facet scenes compute their reference first if the
    store does not hold it yet. Returns a :class:`BetaResult` or
    :class:`FacetResult`."""
    dev = spec.device()
    opts = dict(spec.options)
    if spec.scene == "beta":
        return dipole_beta(dev.ridge, dev.stack, spec.wavelength, threads=threads, **opts)
    store = ReferenceStore() if store is None else store
    kind = opts.pop("kind", "facet")
    run_facet_reference(dev.ridge, dev.stack, store, spec.wavelength, threads=threads, **opts)
    return facet_outcoupling(dev.ridge, dev.stack, store, spec.wavelength, kind=kind, threads=threads, **opts)
