"""Slab and effective-index mode solving, and the zero-gap coupler model.

Conventions
-----------
``thickness`` and ``wavelength`` arguments of the slab solver are in nm; ridge
widths, profile coordinates and coupler lengths are in µm.

The coupler is a single multimode section of width ``2*ridge_width + gap``.
Its beat length ``L_c = λ / (2 (n_even - n_odd))`` is the full power-transfer
length of the two lowest supermodes, and

    cross(L) = sin²(π L / (2 L_c)).

The two-mode ratio passes 50/50 at every odd multiple of ``L_c/2``. When the
section carries more than two modes (the bundled geometry carries dozens), only
``3 L_c / 2`` produces a clean two-fold image of the input field; that is the
length returned by :func:`fifty_fifty_length`.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import integrate, optimize

from .device import CouplerSpec, LayerStack, RidgeGeometry

__all__ = [
    "ModeSolution",
    "CouplerModel",
    "SplitResult",
    "CouplerError",
    "solve_slab_modes",
    "slab_dispersion",
    "solve_multilayer_modes",
    "layered_cladding_index",
    "vertical_modes",
    "ridge_effective_index",
    "coupler_model",
    "splitting_ratio",
    "fifty_fifty_length",
    "multimode_split",
]


class CouplerError(ValueError):
    """The cross-section does not support the two supermodes the model needs."""


@dataclass(frozen=True, eq=False)
class ModeSolution:
    """A guided mode of a three-layer slab.

    ``x`` (µm) runs across the slab with the core occupying ``[0, thickness]``;
    ``profile`` is the transverse field (E for TE, H for TM) normalised to unit
    peak. :meth:`field` evaluates the same profile at arbitrary positions.
    """

    effective_index: float
    polarization: str
    order: int
    x: np.ndarray = field(repr=False)
    profile: np.ndarray = field(repr=False)
    # slab definition, kept so the field can be re-evaluated exactly
    n_core: float = field(default=0.0, repr=False)
    n_top: float = field(default=0.0, repr=False)
    n_bottom: float = field(default=0.0, repr=False)
    thickness_um: float = field(default=0.0, repr=False)
    wavelength_um: float = field(default=0.0, repr=False)
    slab_polarization: str = field(default="TE", repr=False)
    norm: float = field(default=1.0, repr=False)

    def _params(self):
        k0 = 2 * np.pi / self.wavelength_um
        ne = self.effective_index
        kappa = k0 * math.sqrt(self.n_core**2 - ne**2)
        gb = k0 * math.sqrt(max(ne**2 - self.n_bottom**2, 0.0))
        gt = k0 * math.sqrt(max(ne**2 - self.n_top**2, 0.0))
        # only the lower interface fixes the phase; the top decay follows by continuity
        pb = (self.n_core / self.n_bottom) ** 2 if self.slab_polarization == "TM" else 1.0
        phi = math.atan(pb * gb / kappa)
        return kappa, gb, gt, phi

    def field(self, x) -> np.ndarray:
        """Field at positions ``x`` (µm), core spanning [0, thickness], on the profile's scale."""
        x = np.asarray(x, dtype=float)
        kappa, gb, gt, phi = self._params()
        t = self.thickness_um
        out = np.cos(kappa * x - phi)
        below = x < 0
        above = x > t
        out = np.where(below, math.cos(phi) * np.exp(gb * np.minimum(x, 0.0)), out)
        out = np.where(above, math.cos(kappa * t - phi) * np.exp(-gt * np.maximum(x - t, 0.0)), out)
        return out * self.norm

    def index_profile(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        n = np.full(x.shape, self.n_core)
        n = np.where(x < 0, self.n_bottom, n)
        return np.where(x > self.thickness_um, self.n_top, n)


@dataclass(frozen=True)
class CouplerModel:
    beat_length: float  # µm, full power-transfer length L_c
    wavelength: float  # nm
    n_even: float
    n_odd: float
    mode_count: int = 2

    def __post_init__(self):
        if not self.beat_length > 0:
            raise ValueError("beat_length must be > 0")
        if not self.n_even > self.n_odd:
            raise ValueError("n_even must exceed n_odd")

    @classmethod
    def from_beat_length(cls, beat_length: float, wavelength: float, n_even: float = 3.3) -> CouplerModel:
        dn = wavelength * 1e-3 / (2.0 * beat_length)
        return cls(beat_length, wavelength, n_even, n_even - dn)

    @classmethod
    def from_fifty_fifty_length(cls, length: float, wavelength: float, n_even: float = 3.3) -> CouplerModel:
        """Model whose two-fold image (50/50 point) falls at ``length`` µm."""
        return cls.from_beat_length(length / 1.5, wavelength, n_even)


@dataclass(frozen=True)
class SplitResult:
    cross_fraction: float
    through_fraction: float


def _phase_function(ne, n1, n2, n3, k0, t, pol):
    kappa = k0 * np.sqrt(n1**2 - ne**2)
    g2 = k0 * np.sqrt(np.maximum(ne**2 - n2**2, 0.0))
    g3 = k0 * np.sqrt(np.maximum(ne**2 - n3**2, 0.0))
    p2 = p3 = 1.0
    if pol == "TM":
        p2, p3 = (n1 / n2) ** 2, (n1 / n3) ** 2
    return kappa * t - np.arctan(p2 * g2 / kappa) - np.arctan(p3 * g3 / kappa)


def slab_dispersion(ne, n_core, n_clad_top, n_clad_bottom, thickness, wavelength, pol="TE"):
    """Branch-free characteristic function of the asymmetric slab.

    Zero at guided modes; smooth (no poles) for ``ne`` in (max clad, core).
    """
    k0 = 2 * np.pi / (wavelength * 1e-3)
    t = thickness * 1e-3
    ne = np.asarray(ne, dtype=float)
    kappa = k0 * np.sqrt(n_core**2 - ne**2)
    gt = k0 * np.sqrt(np.maximum(ne**2 - n_clad_top**2, 0.0))
    gb = k0 * np.sqrt(np.maximum(ne**2 - n_clad_bottom**2, 0.0))
    pt = pb = 1.0
    if pol == "TM":
        pt, pb = (n_core / n_clad_top) ** 2, (n_core / n_clad_bottom) ** 2
    return (kappa**2 - pt * pb * gt * gb) * np.sin(kappa * t) - kappa * (pt * gt + pb * gb) * np.cos(kappa * t)


def _check_pol(pol):
    if pol not in ("TE", "TM"):
        raise ValueError("polarization must be 'TE' or 'TM'")


def solve_slab_modes(
    n_core: float,
    n_clad_top: float,
    n_clad_bottom: float,
    thickness: float,
    wavelength: float,
    pol: str = "TE",
    samples: int = 801,
) -> list[ModeSolution]:
    """All guided modes of a three-layer slab, highest effective index first.

    Each order ``m`` is the unique root of the monotone phase condition
    ``κt − atan(p γ_t/κ) − atan(p γ_b/κ) = mπ`` in (max clad, core), refined
    with Brent's method. Returns an empty list below cutoff.
    """
    _check_pol(pol)
    if not n_core > max(n_clad_top, n_clad_bottom):
        raise ValueError("n_core must exceed both cladding indices")
    if not (thickness > 0 and wavelength > 0):
        raise ValueError("thickness and wavelength must be > 0")
    k0 = 2 * np.pi / (wavelength * 1e-3)
    t = thickness * 1e-3
    lo = max(n_clad_top, n_clad_bottom)
    hi = n_core
    # open interval: keep away from the kappa = 0 end
    eps = 1e-15 * hi
    a, b = lo + eps, hi - max(eps, 1e-13)
    phase_lo = _phase_function(a, n_core, n_clad_top, n_clad_bottom, k0, t, pol)
    modes = []
    m = 0
    while phase_lo - m * np.pi > 0:
        def g(ne, m=m):
            return _phase_function(ne, n_core, n_clad_top, n_clad_bottom, k0, t, pol) - m * np.pi

        if g(b) > 0:  # pragma: no cover - only at absurd thickness
            break
        ne = optimize.brentq(g, a, b, xtol=1e-15, rtol=4 * np.finfo(float).eps, maxiter=500)
        modes.append(
            _make_mode(ne, m, n_core, n_clad_top, n_clad_bottom, t, wavelength * 1e-3, pol, samples)
        )
        m += 1
    return modes


def _make_mode(ne, order, n1, nt, nb, t, lam, pol, samples):
    k0 = 2 * np.pi / lam
    gmin = k0 * math.sqrt(max(ne**2 - max(nt, nb) ** 2, 1e-300))
    margin = min(max(4.0 / gmin, t), 50.0 * max(t, lam))
    x = np.linspace(-margin, t + margin, samples)
    mode = ModeSolution(
        effective_index=float(ne),
        polarization=pol,
        order=int(order),
        x=x,
        profile=np.empty(0),
        n_core=n1,
        n_top=nt,
        n_bottom=nb,
        thickness_um=t,
        wavelength_um=lam,
        slab_polarization=pol,
    )
    prof = mode.field(x)
    peak = prof[np.argmax(np.abs(prof))]
    object.__setattr__(mode, "norm", 1.0 / peak)
    object.__setattr__(mode, "profile", prof / peak)
    return mode


def layered_cladding_index(stack: LayerStack, tag: str, wavelength: float, pol: str = "TE") -> float:
    """Effective-medium index of the layers tagged ``tag``.

    TE (field parallel to the layers) averages n², TM averages 1/n², each
    weighted by thickness.
    """
    sub = stack.select(tag)
    if not len(sub):
        raise ValueError(f"stack has no layers tagged {tag!r}")
    t = sub.thicknesses()
    n = sub.indices(wavelength).real
    if pol == "TE":
        return float(np.sqrt(np.sum(t * n**2) / t.sum()))
    return float(1.0 / np.sqrt(np.sum(t / n**2) / t.sum()))


def vertical_modes(stack: LayerStack, wavelength: float, pol: str = "TE") -> list[ModeSolution]:
    """Modes of the core layer with Bragg mirrors replaced by their
    effective-medium indices (leakage through the mirrors is neglected)."""
    core = stack.select("core")
    if len(core) != 1:
        raise ValueError("stack must contain exactly one layer tagged 'core'")
    n_core = core.layers[0].material.n_real(wavelength)
    n_top = layered_cladding_index(stack, "top_dbr", wavelength, pol) if "top_dbr" in stack.tags else stack.ambient.n_real(wavelength)
    n_bot = layered_cladding_index(stack, "bottom_dbr", wavelength, pol) if "bottom_dbr" in stack.tags else stack.substrate.n_real(wavelength)
    return solve_slab_modes(n_core, n_top, n_bot, core.layers[0].thickness, wavelength, pol)


def _lateral_pol(pol):
    # E of a quasi-TE mode lies in the layer plane, i.e. normal to the ridge sidewalls
    return "TM" if pol == "TE" else "TE"


def ridge_effective_index(
    geometry: RidgeGeometry, stack: LayerStack, wavelength: float, pol: str = "TE", width: float | None = None
) -> list[ModeSolution]:
    """Lateral modes of the ridge by the effective-index method.

    The fundamental vertical mode sets the ridge index; the etch removes the
    core beside the ridge, so the lateral cladding is the ambient. ``width``
    (µm) overrides ``geometry.ridge_width``.
    """
    _check_pol(pol)
    vert = vertical_modes(stack, wavelength, pol)
    if not vert:
        return []
    n_v = vert[0].effective_index
    n_side = stack.ambient.n_real(wavelength)
    w = geometry.ridge_width if width is None else width
    lateral = solve_slab_modes(n_v, n_side, n_side, w * 1e3, wavelength, _lateral_pol(pol))
    for mode in lateral:
        object.__setattr__(mode, "polarization", pol)
    return lateral


def _transfer_char(ne, indices, thicknesses, k0, pol):
    """Transfer-matrix characteristic of a symmetric-clad multilayer slab;
    real-valued, zero at guided modes."""
    n = np.asarray(indices, dtype=float)
    g_out = k0 * math.sqrt(ne**2 - n[0] ** 2)
    # (U, V) = (field, derivative / p) starting with a decaying tail in the first clad
    U, V = 1.0, g_out / (1.0 if pol == "TE" else n[0] ** 2)
    for nj, tj in zip(n[1:-1], thicknesses):
        p = 1.0 if pol == "TE" else nj**2
        q2 = k0**2 * (nj**2 - ne**2)
        if q2 > 0:
            q = math.sqrt(q2)
            c, s = math.cos(q * tj), math.sin(q * tj)
            U, V = c * U + s * V * p / q, -q * s * U / p + c * V
        else:
            g = math.sqrt(-q2)
            ch, sh = math.cosh(g * tj), math.sinh(g * tj)
            U, V = ch * U + sh * V * p / g, g * sh * U / p + ch * V
        norm = math.hypot(U, V)
        U, V = U / norm, V / norm
    g_last = k0 * math.sqrt(ne**2 - n[-1] ** 2)
    p_last = 1.0 if pol == "TE" else n[-1] ** 2
    return V + g_last * U / p_last


def solve_multilayer_modes(indices, thicknesses, wavelength, pol="TE", samples=2000):
    """Effective indices of a multilayer slab (outer entries of ``indices`` are
    the semi-infinite claddings; ``thicknesses`` in nm for the inner layers).

    Sign-change scan over ``samples`` points followed by bisection. Returns a
    descending array of effective indices.
    """
    _check_pol(pol)
    k0 = 2 * np.pi / (wavelength * 1e-3)
    t = np.asarray(thicknesses, dtype=float) * 1e-3
    n = np.asarray(indices, dtype=float)
    lo = max(n[0], n[-1])
    hi = n[1:-1].max()
    grid = np.linspace(lo, hi, samples + 2)[1:-1]
    vals = np.array([_transfer_char(ne, n, t, k0, pol) for ne in grid])
    roots = []
    for i in np.nonzero(np.sign(vals[:-1]) * np.sign(vals[1:]) < 0)[0]:
        r = optimize.bisect(_transfer_char, grid[i], grid[i + 1], args=(n, t, k0, pol), xtol=1e-12, maxiter=200)
        roots.append(r)
    return np.sort(np.array(roots))[::-1]


def coupler_model(
    geometry: RidgeGeometry, stack: LayerStack, spec: CouplerSpec, wavelength: float, pol: str = "TE"
) -> CouplerModel:
    """Even/odd supermodes of the coupler cross-section and their beat length."""
    vert = vertical_modes(stack, wavelength, pol)
    if not vert:
        raise CouplerError("vertical structure is below cutoff")
    n_v = vert[0].effective_index
    n_side = stack.ambient.n_real(wavelength)
    lat_pol = _lateral_pol(pol)
    if spec.gap == 0:
        modes = solve_slab_modes(n_v, n_side, n_side, 2 * geometry.ridge_width * 1e3, wavelength, lat_pol)
        neffs = np.array([m.effective_index for m in modes])
    else:
        neffs = solve_multilayer_modes(
            [n_side, n_v, n_side, n_v, n_side],
            [geometry.ridge_width * 1e3, spec.gap * 1e3, geometry.ridge_width * 1e3],
            wavelength,
            lat_pol,
        )
    if len(neffs) < 2:
        raise CouplerError("coupler cross-section supports fewer than two supermodes")
    n_even, n_odd = float(neffs[0]), float(neffs[1])
    beat = wavelength * 1e-3 / (2.0 * (n_even - n_odd))
    return CouplerModel(beat, float(wavelength), n_even, n_odd, len(neffs))


def splitting_ratio(length: float, model: CouplerModel) -> SplitResult:
    """Two-mode interference power split after ``length`` µm of coupler."""
    if length < 0:
        raise ValueError("length must be >= 0")
    cross = math.sin(math.pi * length / (2.0 * model.beat_length)) ** 2
    return SplitResult(cross, 1.0 - cross)


def fifty_fifty_length(model: CouplerModel) -> float:
    """Shortest length (µm) giving a two-fold image, ``3 L_c / 2``."""
    return 1.5 * model.beat_length


def multimode_split(
    geometry: RidgeGeometry,
    stack: LayerStack,
    spec: CouplerSpec,
    wavelength: float,
    length: float,
    pol: str = "TE",
    offset: float | None = None,
    samples: int = 4001,
) -> SplitResult:
    """Port powers after launching the input-guide fundamental mode into the
    full multimode section (all guided supermodes, exact propagation constants).

    The launched mode is centred ``offset`` µm above the section axis
    (default: the centre of one input guide). Output powers are overlaps with
    the fundamental modes of the two output guides, normalised to their sum.
    """
    if spec.gap != 0:
        raise NotImplementedError("multimode_split handles the zero-gap section only")
    lat_pol = _lateral_pol(pol)
    vert = vertical_modes(stack, wavelength, pol)
    n_v = vert[0].effective_index
    n_side = stack.ambient.n_real(wavelength)
    w = geometry.ridge_width
    W = 2 * w + spec.gap
    sec = solve_slab_modes(n_v, n_side, n_side, W * 1e3, wavelength, lat_pol)
    guide = solve_slab_modes(n_v, n_side, n_side, w * 1e3, wavelength, lat_pol)[0]
    if offset is None:
        offset = 0.5 * (w + spec.gap)
    x = np.linspace(-W, 2 * W, samples)  # section core spans [0, W]
    centre = 0.5 * W
    weight = 1.0 / sec[0].index_profile(x) ** 2 if lat_pol == "TM" else np.ones_like(x)

    def inner(f, g):
        return integrate.trapezoid(f * g * weight, x)

    def guide_field(c):
        return guide.field(x - (c - 0.5 * w))

    src = guide_field(centre + offset)
    k0 = 2 * np.pi / (wavelength * 1e-3)
    out = np.zeros_like(x, dtype=complex)
    for m in sec:
        f = m.field(x)
        amp = inner(src, f) / inner(f, f)
        out = out + amp * f * np.exp(1j * k0 * (m.effective_index - sec[0].effective_index) * length)
    through_f = guide_field(centre + offset)
    cross_f = guide_field(centre - offset)
    p_through = abs(inner(out, through_f)) ** 2 / inner(through_f, through_f)
    p_cross = abs(inner(out, cross_f)) ** 2 / inner(cross_f, cross_f)
    total = p_through + p_cross
    return SplitResult(p_cross / total, p_through / total)
