"""Geometry and material description of the GaAs ridge-waveguide beamsplitter.

Layer thicknesses are in nm, lateral dimensions in µm. Stacks are listed from
the incidence side (top, ambient) down to the substrate.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy import integrate

from ._config import load_toml, reject_unknown

__all__ = [
    "Material",
    "Layer",
    "LayerStack",
    "RidgeGeometry",
    "CouplerSpec",
    "Device",
    "GAAS",
    "ALAS",
    "AIR",
    "quarter_wave_thickness",
    "build_device_stack",
    "build_dbr_mirror",
    "cosine_bend_offset",
    "bend_path_length",
    "load_device",
    "bundled_device",
    "DEVICE_CONFIG",
]

DEVICE_CONFIG = Path(__file__).parent / "data" / "device.toml"


@dataclass(frozen=True)
class Material:
    """A non-dispersive or tabulated optical material.

    ``refractive_index`` is either a number (constant, possibly complex) or a
    table ``((wavelength_nm, n), ...)`` with strictly increasing wavelengths;
    tabulated values are linearly interpolated (real and imaginary parts
    separately) and clamped at the table ends.
    """

    name: str
    refractive_index: complex | float | tuple = 1.0

    def __post_init__(self):
        n = self.refractive_index
        if isinstance(n, (int, float, complex, np.number)):
            if complex(n).real < 1.0:
                raise ValueError(f"{self.name}: real part of n must be >= 1, got {n}")
            return
        table = tuple((float(w), complex(v)) for w, v in n)
        if not table:
            raise ValueError(f"{self.name}: empty index table")
        wl = np.array([w for w, _ in table])
        if np.any(np.diff(wl) <= 0):
            raise ValueError(f"{self.name}: tabulated wavelengths must be strictly increasing")
        if min(v.real for _, v in table) < 1.0:
            raise ValueError(f"{self.name}: real part of n must be >= 1")
        object.__setattr__(self, "refractive_index", table)

    @property
    def is_tabulated(self) -> bool:
        return isinstance(self.refractive_index, tuple)

    def n(self, wavelength_nm: float) -> complex:
        """Complex refractive index at ``wavelength_nm``."""
        if not self.is_tabulated:
            return complex(self.refractive_index)
        wl = np.array([w for w, _ in self.refractive_index])
        vals = np.array([v for _, v in self.refractive_index])
        re = np.interp(wavelength_nm, wl, vals.real)
        im = np.interp(wavelength_nm, wl, vals.imag)
        return complex(re, im)

    def n_real(self, wavelength_nm: float) -> float:
        return self.n(wavelength_nm).real


GAAS = Material("GaAs", 3.48)
ALAS = Material("AlAs", 2.95)
AIR = Material("air", 1.0)


@dataclass(frozen=True)
class Layer:
    material: Material
    thickness: float  # nm

    def __post_init__(self):
        if not self.thickness > 0:
            raise ValueError(f"layer thickness must be > 0 nm, got {self.thickness}")


@dataclass(frozen=True)
class LayerStack:
    """Ordered layers between a semi-infinite ambient and substrate.

    ``tags`` optionally labels each layer (e.g. ``"top_dbr"``, ``"core"``,
    ``"bottom_dbr"``) so solvers can pick out regions of the device.
    """

    layers: tuple[Layer, ...] = ()
    ambient: Material = AIR
    substrate: Material = GAAS
    tags: tuple[str, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "layers", tuple(self.layers))
        tags = tuple(self.tags) if self.tags else ("",) * len(self.layers)
        if len(tags) != len(self.layers):
            raise ValueError("tags must match the number of layers")
        object.__setattr__(self, "tags", tags)

    def __len__(self):
        return len(self.layers)

    @property
    def total_thickness(self) -> float:
        return sum(layer.thickness for layer in self.layers)

    def thicknesses(self) -> np.ndarray:
        return np.array([layer.thickness for layer in self.layers], dtype=float)

    def indices(self, wavelength_nm: float) -> np.ndarray:
        return np.array([layer.material.n(wavelength_nm) for layer in self.layers])

    def reversed(self) -> LayerStack:
        """Same structure seen from the substrate side."""
        return LayerStack(self.layers[::-1], self.substrate, self.ambient, self.tags[::-1])

    def select(self, tag: str) -> LayerStack:
        """Sub-stack of the layers carrying ``tag`` (ambient/substrate kept)."""
        keep = [i for i, t in enumerate(self.tags) if t == tag]
        return LayerStack(
            tuple(self.layers[i] for i in keep),
            self.ambient,
            self.substrate,
            tuple(self.tags[i] for i in keep),
        )

    def tag_span(self, tag: str) -> tuple[float, float]:
        """(start, end) depth in nm of the contiguous block tagged ``tag``,
        measured from the top of the stack."""
        z = np.concatenate([[0.0], np.cumsum(self.thicknesses())])
        idx = [i for i, t in enumerate(self.tags) if t == tag]
        if not idx:
            raise KeyError(tag)
        return float(z[idx[0]]), float(z[idx[-1] + 1])


@dataclass(frozen=True)
class RidgeGeometry:
    ridge_width: float = 2.0  # µm
    core_thickness: float = 267.0  # nm
    etch_stop_pair: int = 5  # bottom-DBR pair (1-based) whose GaAs layer stops the etch
    sidewall_angle: float = 7.0  # degrees from vertical; stored, not simulated

    def __post_init__(self):
        if not self.ridge_width > 0:
            raise ValueError("ridge_width must be > 0")
        if not self.core_thickness > 0:
            raise ValueError("core_thickness must be > 0")
        if not 0.0 <= self.sidewall_angle <= 15.0:
            raise ValueError("sidewall_angle must lie in [0, 15] degrees")
        if self.etch_stop_pair < 0:
            raise ValueError("etch_stop_pair must be >= 0")


@dataclass(frozen=True)
class CouplerSpec:
    coupler_length: float = 118.5  # µm
    gap: float = 0.0  # µm
    bend_separation: float = 50.0  # µm
    bend_length: float = 437.1  # µm

    def __post_init__(self):
        if self.coupler_length < 0:
            raise ValueError("coupler_length must be >= 0")
        if self.gap < 0:
            raise ValueError("gap must be >= 0")
        # zero separation is allowed: it degenerates to a straight section
        if self.bend_separation < 0:
            raise ValueError("bend_separation must be >= 0")
        if not self.bend_length > 0:
            raise ValueError("bend_length must be > 0")


def quarter_wave_thickness(material: Material, design_wavelength: float) -> float:
    """Physical thickness (nm) with optical thickness λ₀/4."""
    return design_wavelength / (4.0 * material.n_real(design_wavelength))


def build_dbr_mirror(
    pairs: int = 20,
    design_wavelength: float = 930.0,
    high: Material = GAAS,
    low: Material = ALAS,
    ambient: Material = AIR,
    substrate: Material = GAAS,
    low_first: bool = True,
) -> LayerStack:
    """Plain quarter-wave Bragg mirror ``ambient | (L H)^N | substrate``."""
    tl = quarter_wave_thickness(low, design_wavelength)
    th = quarter_wave_thickness(high, design_wavelength)
    pair = (Layer(low, tl), Layer(high, th)) if low_first else (Layer(high, th), Layer(low, tl))
    return LayerStack(pair * pairs, ambient, substrate, ("dbr",) * (2 * pairs))


def build_device_stack(
    design_wavelength: float = 930.0,
    top_pairs: int = 4,
    bottom_pairs: int = 20,
    core_thickness: float = 267.0,
    high: Material = GAAS,
    low: Material = ALAS,
    ambient: Material = AIR,
    substrate: Material = GAAS,
) -> LayerStack:
    """Vertical layer sequence of the beamsplitter chip.

    Top mirror pairs are GaAs/AlAs, bottom pairs AlAs/GaAs, so AlAs borders
    the GaAs core on both sides. DBR layers are quarter-wave at
    ``design_wavelength`` for the configured indices.
    """
    tl = quarter_wave_thickness(low, design_wavelength)
    th = quarter_wave_thickness(high, design_wavelength)
    layers: list[Layer] = []
    tags: list[str] = []
    for _ in range(top_pairs):
        layers += [Layer(high, th), Layer(low, tl)]
        tags += ["top_dbr", "top_dbr"]
    layers.append(Layer(high, core_thickness))
    tags.append("core")
    for _ in range(bottom_pairs):
        layers += [Layer(low, tl), Layer(high, th)]
        tags += ["bottom_dbr", "bottom_dbr"]
    return LayerStack(tuple(layers), ambient, substrate, tuple(tags))


def cosine_bend_offset(x: float, spec: CouplerSpec) -> float:
    """Lateral offset (µm) of a cosine S-bend at axial position ``x`` (µm)."""
    L = spec.bend_length
    if x < 0 or x > L:
        raise ValueError(f"x={x} outside the bend [0, {L}]")
    if x == L:
        return float(spec.bend_separation)
    return 0.5 * spec.bend_separation * (1.0 - math.cos(math.pi * x / L))


def bend_path_length(spec: CouplerSpec) -> float:
    """Arc length (µm) along the cosine bend."""
    L, s = spec.bend_length, spec.bend_separation
    if s == 0:
        return float(L)
    a = 0.5 * s * math.pi / L

    def integrand(x):
        return math.sqrt(1.0 + (a * math.sin(math.pi * x / L)) ** 2)

    val, _ = integrate.quad(integrand, 0.0, L, epsabs=0.0, epsrel=1e-12, limit=200)
    return max(val, float(L))


@dataclass(frozen=True)
class Device:
    """Complete chip description: materials, stack, ridge and coupler."""

    stack: LayerStack
    ridge: RidgeGeometry
    coupler: CouplerSpec
    design_wavelength: float = 930.0
    straight_length: float = 200.0  # µm, cleaved facet to first bend
    materials: dict = field(default_factory=dict, compare=False)

    @property
    def mirror(self) -> LayerStack:
        """Bottom Bragg mirror alone on air, as used for DBR characterization."""
        bottom = self.stack.select("bottom_dbr")
        return LayerStack(bottom.layers, self.stack.ambient, self.stack.substrate, bottom.tags)

    @property
    def arm_a_length(self) -> float:
        """On-path length (µm) from the detection facet to the coupler entrance."""
        return self.straight_length + bend_path_length(self.coupler)


_DEVICE_KEYS = {"materials", "stack", "ridge", "coupler", "layout"}


def _material_from_table(name: str, entry: dict) -> Material:
    reject_unknown(entry, {"n", "k", "table"}, f"materials.{name}")
    if "table" in entry:
        return Material(name, tuple((w, complex(nr, ki)) for w, nr, ki in entry["table"]))
    n = float(entry.get("n", 1.0))
    k = float(entry.get("k", 0.0))
    return Material(name, complex(n, k) if k else n)


def load_device(path: str | Path = DEVICE_CONFIG, data: dict | None = None) -> Device:
    """Build a :class:`Device` from a TOML description (or an already parsed dict)."""
    cfg = load_toml(path) if data is None else data
    reject_unknown(cfg, _DEVICE_KEYS, "device")
    mats = {"GaAs": GAAS, "AlAs": ALAS, "air": AIR}
    for name, entry in cfg.get("materials", {}).items():
        mats[name] = _material_from_table(name, entry)

    st = dict(cfg.get("stack", {}))
    reject_unknown(
        st,
        {"design_wavelength_nm", "top_pairs", "bottom_pairs", "core_thickness_nm",
         "high", "low", "ambient", "substrate"},
        "stack",
    )
    design = float(st.get("design_wavelength_nm", 930.0))
    stack = build_device_stack(
        design_wavelength=design,
        top_pairs=int(st.get("top_pairs", 4)),
        bottom_pairs=int(st.get("bottom_pairs", 20)),
        core_thickness=float(st.get("core_thickness_nm", 267.0)),
        high=mats[st.get("high", "GaAs")],
        low=mats[st.get("low", "AlAs")],
        ambient=mats[st.get("ambient", "air")],
        substrate=mats[st.get("substrate", "GaAs")],
    )
    rg = dict(cfg.get("ridge", {}))
    reject_unknown(rg, {"width_um", "etch_stop_pair", "sidewall_angle_deg"}, "ridge")
    ridge = RidgeGeometry(
        ridge_width=float(rg.get("width_um", 2.0)),
        core_thickness=float(st.get("core_thickness_nm", 267.0)),
        etch_stop_pair=int(rg.get("etch_stop_pair", 5)),
        sidewall_angle=float(rg.get("sidewall_angle_deg", 7.0)),
    )
    cp = dict(cfg.get("coupler", {}))
    reject_unknown(cp, {"length_um", "gap_um", "bend_separation_um", "bend_length_um"}, "coupler")
    coupler = CouplerSpec(
        coupler_length=float(cp.get("length_um", 118.5)),
        gap=float(cp.get("gap_um", 0.0)),
        bend_separation=float(cp.get("bend_separation_um", 50.0)),
        bend_length=float(cp.get("bend_length_um", 437.1)),
    )
    lay = dict(cfg.get("layout", {}))
    reject_unknown(lay, {"straight_length_um"}, "layout")
    return Device(
        stack=stack,
        ridge=ridge,
        coupler=coupler,
        design_wavelength=design,
        straight_length=float(lay.get("straight_length_um", 200.0)),
        materials=mats,
    )


def bundled_device() -> Device:
    """The bundled device description."""
    return load_device(DEVICE_CONFIG)
