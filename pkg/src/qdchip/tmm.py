"""Characteristic-matrix (transfer-matrix) reflectance of planar layer stacks."""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .device import LayerStack

__all__ = [
    "ReflectanceResult",
    "reflectance",
    "spectrum",
    "quarter_wave_dbr_reflectance",
    "write_spectrum_csv",
    "stopband",
]


@dataclass(frozen=True)
class ReflectanceResult:
    wavelength: float  # nm
    R: float
    T: float
    polarization: str
    angle: float  # degrees

    @property
    def A(self) -> float:
        """Absorptance 1 - R - T."""
        return 1.0 - self.R - self.T


def _normal_component(n, n0_sin):
    # n cos(theta) with the branch that decays / propagates away from the interface
    q = np.sqrt(n.astype(complex) ** 2 - n0_sin**2)
    flip = (q.imag < 0) | ((q.imag == 0) & (q.real < 0))
    return np.where(flip, -q, q)


def _check(wavelengths, angle, pol):
    if np.any(np.asarray(wavelengths) <= 0):
        raise ValueError("wavelength must be > 0")
    if not 0.0 <= angle < 90.0:
        raise ValueError("angle must lie in [0, 90) degrees")
    if pol not in ("s", "p"):
        raise ValueError("polarization must be 's' or 'p'")


def spectrum(
    stack: LayerStack,
    wavelengths,
    angle: float = 0.0,
    pol: str = "s",
) -> tuple[np.ndarray, np.ndarray]:
    """Power reflectance and transmittance over an array of wavelengths (nm).

    Returns ``(R, T)`` arrays shaped like ``wavelengths``. The matrices are
    applied from the substrate upward in a fixed order, so results do not
    depend on how the wavelength grid is chunked.
    """
    wl = np.atleast_1d(np.asarray(wavelengths, dtype=float))
    _check(wl, angle, pol)
    theta = np.deg2rad(angle)

    n_amb = np.array([stack.ambient.n(w) for w in wl])
    n_sub = np.array([stack.substrate.n(w) for w in wl])
    # ambient must be lossless for a meaningful incident power
    n0_sin = n_amb.real * np.sin(theta)

    def admittance(n):
        q = _normal_component(n, n0_sin)
        if pol == "s":
            return q, q
        return q, n**2 / q

    q_amb, eta_amb = admittance(n_amb)
    q_sub, eta_sub = admittance(n_sub)

    # field vector (B, C) normalised to the substrate tangential E
    B = np.ones_like(wl, dtype=complex)
    C = eta_sub.astype(complex)
    k0 = 2.0 * np.pi / wl
    for layer in reversed(stack.layers):
        n = np.array([layer.material.n(w) for w in wl])
        q, eta = admittance(n)
        delta = k0 * q * layer.thickness
        c, s = np.cos(delta), np.sin(delta)
        # n = n' + ik convention: absorbing layers carry exp(-k0 k d)
        B, C = c * B - 1j * s / eta * C, -1j * eta * s * B + c * C

    denom = eta_amb * B + C
    r = (eta_amb * B - C) / denom
    R = np.abs(r) ** 2
    T = 4.0 * eta_amb.real * eta_sub.real / np.abs(denom) ** 2
    # evanescent substrate carries no power
    T = np.where(np.abs(q_sub.real) < 1e-14, 0.0, T)
    R = np.clip(R, 0.0, 1.0)
    T = np.clip(T, 0.0, 1.0)
    shape = np.shape(wavelengths)
    return R.reshape(shape), T.reshape(shape)


def reflectance(
    stack: LayerStack, wavelength: float, angle: float = 0.0, pol: str = "s"
) -> ReflectanceResult:
    """Reflectance/transmittance of ``stack`` at a single wavelength (nm)."""
    R, T = spectrum(stack, [wavelength], angle, pol)
    return ReflectanceResult(float(wavelength), float(R[0]), float(T[0]), pol, float(angle))


def quarter_wave_dbr_reflectance(n_ambient, n_substrate, n_low, n_high, pairs) -> float:
    """Closed-form normal-incidence reflectance of ``ambient | (L H)^N | substrate``
    at the design wavelength."""
    y = (n_substrate / n_ambient) * (n_low / n_high) ** (2 * pairs)
    return ((1.0 - y) / (1.0 + y)) ** 2


def write_spectrum_csv(path, wavelengths, R, T) -> None:
    with open(Path(path), "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["wavelength_nm", "R", "T"])
        for row in zip(wavelengths, R, T):
            w.writerow([f"{row[0]:.6f}", f"{row[1]:.12e}", f"{row[2]:.12e}"])


def stopband(wavelengths, R, level: float = 0.5) -> tuple[float, float]:
    """Centre and width (nm) of the high-reflectance band around the maximum.

    Edges are where ``R`` crosses ``level * max(R)``, linearly interpolated.
    The centre is taken in wavenumber, where a quarter-wave stop band is
    symmetric, so ripple on the flat top does not move it.
    """
    wl = np.asarray(wavelengths, dtype=float)
    R = np.asarray(R, dtype=float)
    if wl.ndim != 1 or wl.shape != R.shape or wl.size < 3 or np.any(np.diff(wl) <= 0):
        raise ValueError("need matching 1D arrays with increasing wavelengths")
    k = int(np.argmax(R))
    thr = level * R[k]
    lo = k
    while lo > 0 and R[lo - 1] >= thr:
        lo -= 1
    hi = k
    while hi < wl.size - 1 and R[hi + 1] >= thr:
        hi += 1
    if lo == 0 or hi == wl.size - 1:
        raise ValueError("stop band is not contained in the wavelength range")

    def cross(i, j):
        return wl[i] + (thr - R[i]) * (wl[j] - wl[i]) / (R[j] - R[i])

    left, right = cross(lo - 1, lo), cross(hi, hi + 1)
    return float(2.0 / (1.0 / left + 1.0 / right)), float(right - left)
