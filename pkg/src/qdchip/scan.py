"""Loss scans, polarization scans and count-rate efficiency.

Intensity-vs-distance scans are fitted with an exponential decay in log10
space (unweighted by default), giving the propagation loss in dB/µm.
Polarization scans are fitted with a Malus-law curve through its exact
linearisation ``a + b cos 2θ + c sin 2θ``.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

__all__ = [
    "ARMS",
    "IngestionError",
    "FitError",
    "SingularFitError",
    "ScanDataset",
    "LossFit",
    "PolarizationScan",
    "DopFit",
    "fit_loss",
    "transmission",
    "fit_dop",
    "measured_overall_efficiency",
    "read_scan_csv",
    "write_scan_csv",
    "read_polarization_csv",
    "write_polarization_csv",
    "synthetic_scan",
    "synthetic_polarization_scan",
    "device_loss_scan",
    "BUNDLED_SCAN",
]

ARMS = ("a", "c", "d", "coupler")
BUNDLED_SCAN = Path(__file__).parent / "data" / "loss_scan.csv"


class IngestionError(ValueError):
    pass


class FitError(RuntimeError):
    pass


class SingularFitError(FitError):
    pass


@dataclass(frozen=True)
class ScanDataset:
    """Peak intensities (counts/s) against distance (µm) to the detection facet."""

    distance: np.ndarray
    intensity: np.ndarray
    arm: tuple[str, ...]
    header: tuple[str, ...] = ()

    def __post_init__(self):
        d = np.asarray(self.distance, dtype=float).ravel()
        i = np.asarray(self.intensity, dtype=float).ravel()
        arm = tuple(str(a) for a in self.arm)
        if not (d.size == i.size == len(arm)):
            raise IngestionError("distance, intensity and arm must have equal length")
        if np.any(~np.isfinite(d)) or np.any(d < 0):
            raise IngestionError("distances must be finite and >= 0")
        if np.any(~np.isfinite(i)) or np.any(i <= 0):
            raise IngestionError("intensities must be finite and > 0")
        bad = sorted(set(arm) - set(ARMS))
        if bad:
            raise IngestionError(f"unknown arm label(s) {bad}; expected one of {ARMS}")
        object.__setattr__(self, "distance", d)
        object.__setattr__(self, "intensity", i)
        object.__setattr__(self, "arm", arm)
        object.__setattr__(self, "header", tuple(self.header))

    def __len__(self):
        return self.distance.size

    def select(self, arms) -> ScanDataset:
        if isinstance(arms, str):
            arms = (arms,)
        keep = np.array([a in arms for a in self.arm], dtype=bool)
        return ScanDataset(self.distance[keep], self.intensity[keep], tuple(np.array(self.arm)[keep]), self.header)


@dataclass(frozen=True)
class LossFit:
    alpha: float  # dB/µm
    alpha_stderr: float
    intercept: float  # log10 intensity at zero distance
    residual_variance: float
    n_points: int

    def report(self) -> str:
        return (
            f"alpha_db_per_um = {self.alpha:.10g}\n"
            f"stderr = {self.alpha_stderr:.10g}\n"
            f"n_points = {self.n_points}\n"
            f"intercept_log10 = {self.intercept:.10g}\n"
            f"residual_variance = {self.residual_variance:.10g}\n"
        )


def fit_loss(data: ScanDataset, arm_filter=("a",), weights=None) -> LossFit:
    """Fit log10(I) = intercept - (alpha/10)·d by least squares.

    ``arm_filter`` restricts the fit to the given arm labels (``None`` uses
    every sample). ``weights`` optionally gives per-sample weights (same
    order as ``data``).
    """
    keep = np.ones(len(data), dtype=bool) if arm_filter is None else np.isin(np.array(data.arm), arm_filter)
    x = data.distance[keep]
    y = np.log10(data.intensity[keep])
    w = np.ones_like(x) if weights is None else np.asarray(weights, dtype=float)[keep]
    if x.size < 3:
        raise SingularFitError(f"need >= 3 samples, got {x.size}")
    if np.unique(x).size < 2:
        raise SingularFitError("all distances coincide; slope undefined")
    if np.any(w <= 0):
        raise FitError("weights must be > 0")

    sw = w.sum()
    xm = np.dot(w, x) / sw
    ym = np.dot(w, y) / sw
    dx = x - xm
    sxx = np.dot(w, dx * dx)
    slope = np.dot(w, dx * (y - ym)) / sxx
    intercept = ym - slope * xm
    resid = y - (intercept + slope * x)
    dof = x.size - 2
    var = float(np.dot(w, resid * resid) / dof)
    # weights are relative; the residual variance sets the scale
    stderr = math.sqrt(var / sxx)
    return LossFit(float(-10.0 * slope), float(10.0 * stderr), float(intercept), var, int(x.size))


def transmission(alpha, distance):
    """Power fraction left after ``distance`` µm at ``alpha`` dB/µm."""
    a = np.asarray(alpha, dtype=float)
    d = np.asarray(distance, dtype=float)
    if np.any(a < 0) or np.any(d < 0):
        raise ValueError("alpha and distance must be >= 0")
    out = 10.0 ** (-a * d / 10.0)
    return float(out) if out.ndim == 0 else out


@dataclass(frozen=True)
class PolarizationScan:
    angle: np.ndarray  # degrees
    intensity: np.ndarray

    def __post_init__(self):
        a = np.asarray(self.angle, dtype=float).ravel()
        i = np.asarray(self.intensity, dtype=float).ravel()
        if a.size != i.size:
            raise IngestionError("angle and intensity must have equal length")
        if a.size < 8:
            raise IngestionError("a polarization scan needs >= 8 samples")
        if a.max() - a.min() < 180.0:
            raise IngestionError("analyzer angles must span >= 180 degrees")
        if not np.all(np.isfinite(i)) or np.any(i < 0):
            raise IngestionError("intensities must be finite and >= 0")
        object.__setattr__(self, "angle", a)
        object.__setattr__(self, "intensity", i)


@dataclass(frozen=True)
class DopFit:
    dop: float
    angle: float  # degrees, in [0, 180)
    amplitude: float  # A
    offset: float  # B
    rms_residual: float


def fit_dop(scan: PolarizationScan) -> DopFit:
    """Fit I(θ) = A·cos²(θ - θ0) + B and return the degree of polarization
    A / (A + 2B)."""
    th = np.deg2rad(scan.angle)
    m = np.column_stack([np.ones_like(th), np.cos(2 * th), np.sin(2 * th)])
    coef, _, rank, sv = np.linalg.lstsq(m, scan.intensity, rcond=None)
    if rank < 3:
        raise FitError(f"design matrix is rank {rank} (singular values {sv}); angles do not constrain the fit")
    a, b, c = coef
    half = math.hypot(b, c)
    amp = 2.0 * half
    off = max(a - half, 0.0)
    if amp + 2 * off <= 0:
        raise FitError("fitted intensity is identically zero")
    theta0 = (0.5 * math.degrees(math.atan2(c, b))) % 180.0
    resid = scan.intensity - m @ coef
    return DopFit(float(amp / (amp + 2 * off)), theta0, float(amp), float(off), float(np.sqrt(np.mean(resid**2))))


def measured_overall_efficiency(count_rate: float, dark_rate: float, rep_rate: float) -> float:
    """Detected signal photons per excitation pulse."""
    if rep_rate <= 0:
        raise ValueError("rep_rate must be > 0")
    if dark_rate < 0:
        raise ValueError("dark_rate must be >= 0")
    if count_rate < dark_rate:
        raise ValueError("count_rate is below the dark rate")
    return (count_rate - dark_rate) / rep_rate


# ------------------------------------------------------------------ file I/O


def read_scan_csv(path) -> ScanDataset:
    """Read ``distance_um,intensity_cps,arm`` rows; leading ``#`` lines are
    kept as the provenance header."""
    header, rows = [], []
    with open(path, newline="") as fh:
        lines = fh.read().splitlines()
    body = []
    for line in lines:
        if line.startswith("#"):
            header.append(line[1:].strip())
        elif line.strip():
            body.append(line)
    reader = csv.DictReader(body)
    if reader.fieldnames is None or set(reader.fieldnames) != {"distance_um", "intensity_cps", "arm"}:
        raise IngestionError(f"{path}: expected columns distance_um,intensity_cps,arm")
    for r in reader:
        try:
            rows.append((float(r["distance_um"]), float(r["intensity_cps"]), r["arm"].strip()))
        except ValueError as exc:
            raise IngestionError(f"{path}: {exc}") from None
    if not rows:
        raise IngestionError(f"{path}: no samples")
    d, i, a = zip(*rows)
    return ScanDataset(np.array(d), np.array(i), a, tuple(header))


def write_scan_csv(path, data: ScanDataset) -> None:
    with open(path, "w", newline="") as fh:
        for h in data.header:
            fh.write(f"# {h}\n")
        w = csv.writer(fh)
        w.writerow(["distance_um", "intensity_cps", "arm"])
        for d, i, a in zip(data.distance, data.intensity, data.arm):
            w.writerow([f"{d:.3f}", f"{i:.6g}", a])


def read_polarization_csv(path) -> PolarizationScan:
    with open(path, newline="") as fh:
        reader = csv.DictReader(line for line in fh if not line.startswith("#"))
        if reader.fieldnames is None or set(reader.fieldnames) != {"angle_deg", "intensity_cps"}:
            raise IngestionError(f"{path}: expected columns angle_deg,intensity_cps")
        rows = [(float(r["angle_deg"]), float(r["intensity_cps"])) for r in reader]
    a, i = zip(*rows) if rows else ((), ())
    return PolarizationScan(np.array(a), np.array(i))


def write_polarization_csv(path, scan: PolarizationScan) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["angle_deg", "intensity_cps"])
        for a, i in zip(scan.angle, scan.intensity):
            w.writerow([f"{a:.4f}", f"{i:.8g}"])


# --------------------------------------------------------------- generators


def synthetic_scan(
    alpha: float,
    n_points: int,
    distance_range=(0.0, 1500.0),
    noise_dex: float = 0.0,
    intercept: float = 4.0,
    arm: str = "a",
    rng=None,
) -> ScanDataset:
    """Uniformly placed samples of 10^(intercept - alpha·d/10) with
    log-normal scatter of ``noise_dex`` (standard deviation in log10)."""
    rng = np.random.default_rng(rng)
    d = np.sort(rng.uniform(distance_range[0], distance_range[1], n_points))
    logi = intercept - alpha * d / 10.0
    if noise_dex > 0:
        logi = logi + rng.normal(0.0, noise_dex, n_points)
    return ScanDataset(d, 10.0**logi, (arm,) * n_points)


def synthetic_polarization_scan(amplitude, offset, theta0=0.0, n_points=36, span=360.0, rel_noise=0.0, rng=None):
    """Malus-law scan with multiplicative Gaussian noise ``rel_noise``."""
    rng = np.random.default_rng(rng)
    ang = np.linspace(0.0, span, n_points, endpoint=False)
    i = amplitude * np.cos(np.deg2rad(ang - theta0)) ** 2 + offset
    if rel_noise > 0:
        i = i * (1.0 + rel_noise * rng.standard_normal(n_points))
    return PolarizationScan(ang, np.clip(i, 0.0, None))


def device_loss_scan(
    seed: int = 915,
    alpha: float = 0.0068,
    arm_a_length: float = 640.607,
    coupler_length: float = 118.5,
    bend_length: float = 440.607,
    noise_dex: float = 0.04,
    intercept: float = 3.6,
    counts=(45, 10, 8, 7),
) -> ScanDataset:
    """Synthetic stand-in for a measured loss scan of the beamsplitter chip.

    Samples on arm "a" sit between the facet and the coupler entrance;
    coupler samples pick up a gradually growing split loss and samples on
    arms "c"/"d" a random splitting ratio in [0.3, 0.7]. All samples share
    the log-normal scatter ``noise_dex``.
    """
    rng = np.random.default_rng(seed)
    n_a, n_cp, n_c, n_d = counts
    c0 = arm_a_length
    c1 = c0 + coupler_length
    d_a = rng.uniform(5.0, c0, n_a)
    d_cp = rng.uniform(c0, c1, n_cp)
    d_c = rng.uniform(c1, c1 + bend_length, n_c)
    d_d = rng.uniform(c1, c1 + bend_length, n_d)
    extra = np.concatenate(
        [
            np.zeros(n_a),
            np.log10(1.0 - 0.5 * (d_cp - c0) / coupler_length),
            np.log10(rng.uniform(0.3, 0.7, n_c)),
            np.log10(rng.uniform(0.3, 0.7, n_d)),
        ]
    )
    d = np.concatenate([d_a, d_cp, d_c, d_d])
    arm = ("a",) * n_a + ("coupler",) * n_cp + ("c",) * n_c + ("d",) * n_d
    logi = intercept - alpha * d / 10.0 + extra + rng.normal(0.0, noise_dex, d.size)
    order = np.argsort(d, kind="stable")
    header = (
        "synthetic loss scan (not measured data)",
        f"generator: device_loss_scan(seed={seed}, alpha={alpha}, noise_dex={noise_dex})",
        "distance is measured along the optical path to the detection facet of arm a",
    )
    return ScanDataset(d[order], 10.0 ** logi[order], tuple(np.array(arm)[order]), header)
