"""Monte Carlo of a pulsed single-photon source feeding an on-chip
beamsplitter and two dark-counting detectors, plus coincidence analysis.

The simulation does not step through pulses. For every block of the run it
draws how many pulses produce at least one detection, places them uniformly
among the block's pulses and then draws, per such pulse, how many photons
reach each detector. Blocks use independent counter-based (Philox) streams
keyed by ``(seed, block index)``, so the output does not depend on how many
workers process the blocks.

Times are in ns unless a name says otherwise.
"""

from __future__ import annotations

import csv
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import NamedTuple

import numpy as np
from scipy import stats

from ._config import ConfigError, load_toml, reject_unknown

try:
    from numba import njit
except ImportError:  # pragma: no cover
    njit = None

__all__ = [
    "PhotonStatsError",
    "InsufficientStatisticsError",
    "SourceSpec",
    "DetectorSpec",
    "ClickStream",
    "CorrelationHistogram",
    "G2Estimate",
    "Correction",
    "G2Result",
    "simulate_hbt",
    "simulate_hbt_histogram",
    "cross_correlate",
    "brute_force_histogram",
    "g2_raw",
    "background_correct",
    "signal_fraction",
    "analyze",
    "accidental_mixing",
    "write_clicks_csv",
    "read_clicks_csv",
    "write_histogram_csv",
    "HbtScenario",
    "scenario_from_dict",
    "load_scenario",
    "DEVICE_SCENARIO",
]

DEVICE_SCENARIO = Path(__file__).parent / "data" / "hbt.toml"


class PhotonStatsError(ValueError):
    pass


class InsufficientStatisticsError(RuntimeError):
    pass


@dataclass(frozen=True)
class SourceSpec:
    """Photon-number statistics of one excitation pulse.

    The default model emits 0, 1 or 2 photons with ``P(n>=1) =
    emission_probability`` and ``P(n=2) = two_photon_probability``. With
    ``poisson_mean`` set the photon number is Poisson distributed instead
    and the two probabilities are ignored.
    """

    rep_rate: float = 66e6  # Hz
    emission_probability: float = 1.0
    two_photon_probability: float = 0.0
    lifetime: float = 1.0  # ns
    poisson_mean: float | None = None

    def __post_init__(self):
        if self.rep_rate <= 0:
            raise PhotonStatsError("rep_rate must be > 0")
        if not 0 <= self.emission_probability <= 1:
            raise PhotonStatsError("emission_probability must lie in [0, 1]")
        if not 0 <= self.two_photon_probability <= self.emission_probability:
            raise PhotonStatsError("two_photon_probability must lie in [0, emission_probability]")
        if self.lifetime <= 0:
            raise PhotonStatsError("lifetime must be > 0")
        if self.poisson_mean is not None and self.poisson_mean < 0:
            raise PhotonStatsError("poisson_mean must be >= 0")

    @property
    def period(self) -> float:
        return 1e9 / self.rep_rate

    @property
    def mean_photons(self) -> float:
        if self.poisson_mean is not None:
            return self.poisson_mean
        return self.emission_probability + self.two_photon_probability

    @property
    def g2(self) -> float:
        """Zero-delay second-order correlation of the emitted light."""
        if self.poisson_mean is not None:
            return 1.0
        m = self.mean_photons
        return 2.0 * self.two_photon_probability / m**2 if m > 0 else 0.0

    @classmethod
    def with_g2(cls, emission_probability: float, g2: float, **kw) -> SourceSpec:
        """Source whose two-photon share yields the requested g2.

        Solves g·p2² + (2g·p - 2)·p2 + g·p² = 0 for the smaller root, which
        needs p <= 1/(2g).
        """
        p = emission_probability
        if g2 < 0:
            raise PhotonStatsError("g2 must be >= 0")
        if g2 == 0:
            return cls(emission_probability=p, two_photon_probability=0.0, **kw)
        disc = 1.0 - 2.0 * g2 * p
        if disc < 0:
            raise PhotonStatsError(f"g2={g2} is out of reach of a 0/1/2-photon source with P(n>=1)={p}")
        # conjugate form of the small root, stable as g2 -> 0
        p2 = g2 * p * p / ((1.0 - g2 * p) + math.sqrt(disc))
        return cls(emission_probability=p, two_photon_probability=min(max(p2, 0.0), p), **kw)

    @classmethod
    def poissonian(cls, mean: float, **kw) -> SourceSpec:
        return cls(emission_probability=-math.expm1(-mean), poisson_mean=mean, **kw)


@dataclass(frozen=True)
class DetectorSpec:
    label: str
    efficiency: float  # detection probability for a photon entering this arm
    dark_rate: float = 0.0  # counts/s
    dead_time: float = 50.0  # ns
    jitter: float = 0.35  # ns, Gaussian sigma

    def __post_init__(self):
        if self.label not in ("a", "b"):
            raise PhotonStatsError("detector label must be 'a' or 'b'")
        if not 0 <= self.efficiency <= 1:
            raise PhotonStatsError("efficiency must lie in [0, 1]")
        if self.dark_rate < 0 or self.dead_time < 0 or self.jitter < 0:
            raise PhotonStatsError("dark_rate, dead_time and jitter must be >= 0")


@dataclass
class ClickStream:
    detector: str
    times: np.ndarray  # ns, sorted
    duration: float  # s

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=float)
        if self.times.size and (np.any(np.diff(self.times) < 0) or self.times[0] < 0 or self.times[-1] > self.duration * 1e9):
            raise PhotonStatsError("timestamps must be sorted and lie in [0, duration]")

    def __len__(self):
        return self.times.size

    @property
    def rate(self) -> float:
        return self.times.size / self.duration


@dataclass
class CorrelationHistogram:
    """Counts of pairwise delays t_b - t_a in bins covering [-range, range)."""

    bin_width: float
    range: float
    counts: np.ndarray
    seed: int | None = None

    @property
    def edges(self) -> np.ndarray:
        return -self.range + self.bin_width * np.arange(self.counts.size + 1)

    @property
    def centers(self) -> np.ndarray:
        return -self.range + self.bin_width * (np.arange(self.counts.size) + 0.5)

    @property
    def total(self) -> int:
        return int(self.counts.sum())


# ---------------------------------------------------------------- simulation


def _outcome_table(source: SourceSpec, qa: float, qb: float):
    """Joint distribution of (detections in a, detections in b) per pulse."""
    if source.poisson_mean is not None:
        mu_a, mu_b = source.poisson_mean * qa, source.poisson_mean * qb
        # truncation far beyond the Poisson tail
        ka = int(mu_a + 12 * math.sqrt(mu_a) + 12) if mu_a > 0 else 0
        kb = int(mu_b + 12 * math.sqrt(mu_b) + 12) if mu_b > 0 else 0
        pa = stats.poisson.pmf(np.arange(ka + 1), mu_a)
        pb = stats.poisson.pmf(np.arange(kb + 1), mu_b)
        table = {(i, j): pa[i] * pb[j] for i in range(ka + 1) for j in range(kb + 1)}
        table[(0, 0)] = math.exp(-(mu_a + mu_b))
    else:
        p2 = source.two_photon_probability
        p1 = source.emission_probability - p2
        r = 1.0 - qa - qb
        table = {
            (1, 0): p1 * qa + 2 * p2 * qa * r,
            (0, 1): p1 * qb + 2 * p2 * qb * r,
            (2, 0): p2 * qa * qa,
            (0, 2): p2 * qb * qb,
            (1, 1): 2 * p2 * qa * qb,
        }
        table[(0, 0)] = 1.0 - math.fsum(table.values())
    keys = [k for k in sorted(table) if k != (0, 0) and table[k] > 0]
    probs = np.array([table[k] for k in keys])
    return np.array(keys, dtype=np.int64).reshape(-1, 2), probs


def _dead_time_py(t, dead, last):
    keep = np.zeros(t.size, dtype=np.bool_)
    for i in range(t.size):
        if t[i] - last >= dead:
            keep[i] = True
            last = t[i]
    return keep, last


_dead_time = njit(cache=True)(_dead_time_py) if njit is not None else _dead_time_py


def _apply_dead_time(t, dead, last):
    """Non-paralysable dead time; ``last`` is the previous kept click."""
    if t.size == 0 or dead <= 0:
        return t, (t[-1] if t.size else last)
    if t[0] - last >= dead and np.all(np.diff(t) >= dead):
        return t, t[-1]
    keep, last = _dead_time(t, float(dead), float(last))
    return t[keep], last


@dataclass(frozen=True)
class _Plan:
    source: SourceSpec
    detectors: tuple
    qa: float
    qb: float
    keys: np.ndarray
    cdf: np.ndarray
    p_det: float
    duration_ns: float
    block_ns: float
    n_blocks: int
    seed: int

    def pulses_in_block(self, b):
        # pulse k fires at k·period; block b owns pulses with start <= t < end
        period = self.source.period
        start = b * self.block_ns
        end = min((b + 1) * self.block_ns, self.duration_ns)
        k0 = math.ceil(start / period)
        k1 = math.ceil(end / period)
        return k0, k1, start, end


def _plan(source, cross, through, det_a, det_b, duration, seed, block_duration):
    if duration <= 0:
        raise PhotonStatsError("duration must be > 0")
    if cross < 0 or through < 0 or not math.isclose(cross + through, 1.0, abs_tol=1e-12):
        raise PhotonStatsError("splitter fractions must be >= 0 and sum to 1")
    if det_a.label != "a" or det_b.label != "b":
        raise PhotonStatsError("detectors must be labelled 'a' and 'b'")
    qa = cross * det_a.efficiency
    qb = through * det_b.efficiency
    keys, probs = _outcome_table(source, qa, qb)
    p_det = float(probs.sum())
    cdf = np.cumsum(probs) / p_det if p_det > 0 else probs
    duration_ns = duration * 1e9
    block_ns = min(block_duration, duration) * 1e9
    n_blocks = int(math.ceil(duration_ns / block_ns - 1e-12))
    return _Plan(source, (det_a, det_b), qa, qb, keys, cdf, min(p_det, 1.0), duration_ns, block_ns, n_blocks, int(seed))


def _block_rng(seed, b):
    return np.random.Generator(np.random.Philox(np.random.SeedSequence([seed, b])))


def _simulate_block(plan: _Plan, b: int):
    """Raw (pre-dead-time) click times of block ``b`` for both arms, sorted,
    relative to the block start."""
    rng = _block_rng(plan.seed, b)
    k0, k1, start, end = plan.pulses_in_block(b)
    n_pulses = k1 - k0
    period = plan.source.period
    arms = ([], [])
    if plan.p_det > 0 and n_pulses > 0:
        n = int(rng.binomial(n_pulses, plan.p_det))
        if n:
            idx = np.unique(rng.integers(0, n_pulses, n))
            while idx.size < n:
                idx = np.unique(np.concatenate([idx, rng.integers(0, n_pulses, n - idx.size)]))
            cat = np.searchsorted(plan.cdf, rng.random(n), side="right")
            cat = np.minimum(cat, plan.cdf.size - 1)
            t_pulse = idx * period + (k0 * period - start)
            for arm in (0, 1):
                k = plan.keys[cat, arm]
                tp = np.repeat(t_pulse, k)
                if tp.size:
                    tp = tp + rng.exponential(plan.source.lifetime, tp.size)
                    j = plan.detectors[arm].jitter
                    if j > 0:
                        tp = tp + rng.normal(0.0, j, tp.size)
                arms[arm].append(tp)
    for arm in (0, 1):
        dark = plan.detectors[arm].dark_rate
        if dark > 0:
            nd = int(rng.poisson(dark * (end - start) * 1e-9))
            arms[arm].append(rng.uniform(0.0, end - start, nd))
    out = []
    for arm in (0, 1):
        t = np.concatenate(arms[arm]) if arms[arm] else np.zeros(0)
        t.sort(kind="stable")
        out.append(t)
    return out


def _blocks(plan: _Plan, threads: int | None):
    if threads and threads > 1:
        with ThreadPoolExecutor(threads) as pool:
            # map() yields in submission order
            chunk = 4 * threads
            for s in range(0, plan.n_blocks, chunk):
                yield from pool.map(lambda b: _simulate_block(plan, b), range(s, min(s + chunk, plan.n_blocks)))
    else:
        for b in range(plan.n_blocks):
            yield _simulate_block(plan, b)


class _Stitcher:
    """Turns raw per-block clicks into final clicks in block-local time.

    The last ``guard`` ns of every block are held back and merged with the
    next block, so photons whose emission delay or jitter carries them across
    a block boundary still come out in order. Dead time is applied with the
    previous kept click carried across blocks.
    """

    def __init__(self, plan: _Plan):
        self.plan = plan
        jit = max(d.jitter for d in plan.detectors)
        self.guard = 10.0 * jit + 1.0
        self.carry = [np.zeros(0), np.zeros(0)]
        self.last = [-np.inf, -np.inf]

    def feed(self, b, raw):
        plan = self.plan
        _, _, start, end = plan.pulses_in_block(b)
        width = end - start
        final = b == plan.n_blocks - 1
        out = []
        for arm in (0, 1):
            t = raw[arm]
            if self.carry[arm].size:
                t = np.sort(np.concatenate([self.carry[arm], t]), kind="stable")
            if b == 0:
                t = t[np.searchsorted(t, 0.0, side="left") :]
            if final:
                t = t[: np.searchsorted(t, width, side="right")]
                self.carry[arm] = np.zeros(0)
            else:
                cut = np.searchsorted(t, width - self.guard, side="left")
                self.carry[arm] = t[cut:] - plan.block_ns
                t = t[:cut]
            t, last = _apply_dead_time(t, plan.detectors[arm].dead_time, self.last[arm] - start)
            self.last[arm] = last + start
            out.append(t)
        return start, out


def simulate_hbt(
    source: SourceSpec,
    cross: float,
    through: float,
    detectors,
    duration: float,
    seed: int = 0,
    block_duration: float = 1.0,
    threads: int | None = None,
) -> tuple[ClickStream, ClickStream]:
    """Click streams of detectors a (cross port) and b (through port).

    ``duration`` and ``block_duration`` are in seconds.
    """
    det_a, det_b = detectors
    plan = _plan(source, cross, through, det_a, det_b, duration, seed, block_duration)
    st = _Stitcher(plan)
    parts = ([], [])
    for b, raw in enumerate(_blocks(plan, threads)):
        start, clicks = st.feed(b, raw)
        for arm in (0, 1):
            parts[arm].append(clicks[arm] + start)
    streams = []
    for arm, det in enumerate((det_a, det_b)):
        t = np.concatenate(parts[arm]) if parts[arm] else np.zeros(0)
        streams.append(ClickStream(det.label, t, duration))
    return streams[0], streams[1]


# ------------------------------------------------------------------ analysis


def _check_bins(bin_width, rng_ns):
    if bin_width <= 0:
        raise PhotonStatsError("bin_width must be > 0")
    if rng_ns <= 0:
        raise PhotonStatsError("range must be > 0")
    nb = 2 * rng_ns / bin_width
    n = int(round(nb))
    if n < 1 or abs(nb - n) > 1e-6 * max(1.0, nb):
        raise PhotonStatsError("2·range must be an integer number of bins")
    return n


def _bin_index(delay, bin_width, rng_ns):
    return np.floor((delay + rng_ns) / bin_width).astype(np.int64)


def _pair_histogram(ta, tb, bin_width, rng_ns, nb):
    """Two-pointer pair collection over sorted streams; O(n + pairs)."""
    counts = np.zeros(nb, dtype=np.int64)
    if ta.size == 0 or tb.size == 0:
        return counts
    pad = rng_ns + bin_width
    lo = np.searchsorted(tb, ta - pad, side="left")
    hi = np.searchsorted(tb, ta + pad, side="right")
    n = hi - lo
    total = int(n.sum())
    if total == 0:
        return counts
    rep = np.repeat(np.arange(ta.size), n)
    offs = np.arange(total) - np.repeat(np.cumsum(n) - n, n)
    delay = tb[lo[rep] + offs] - ta[rep]
    k = _bin_index(delay, bin_width, rng_ns)
    k = k[(k >= 0) & (k < nb)]
    counts += np.bincount(k, minlength=nb)
    return counts


def cross_correlate(a: ClickStream, b: ClickStream, bin_width: float, range_ns: float) -> CorrelationHistogram:
    """Histogram of all pairwise delays t_b - t_a in [-range_ns, range_ns)."""
    nb = _check_bins(bin_width, range_ns)
    if not math.isclose(a.duration, b.duration, rel_tol=1e-12):
        raise PhotonStatsError("streams must cover equal durations")
    return CorrelationHistogram(bin_width, range_ns, _pair_histogram(a.times, b.times, bin_width, range_ns, nb))


def brute_force_histogram(a: ClickStream, b: ClickStream, bin_width: float, range_ns: float) -> CorrelationHistogram:
    """Reference O(n_a·n_b) pair count."""
    nb = _check_bins(bin_width, range_ns)
    counts = np.zeros(nb, dtype=np.int64)
    for t in a.times:
        k = _bin_index(b.times - t, bin_width, range_ns)
        for i in k[(k >= 0) & (k < nb)]:
            counts[i] += 1
    return CorrelationHistogram(bin_width, range_ns, counts)


def simulate_hbt_histogram(
    source: SourceSpec,
    cross: float,
    through: float,
    detectors,
    duration: float,
    bin_width: float,
    range_ns: float,
    seed: int = 0,
    block_duration: float = 10.0,
    threads: int | None = None,
):
    """Coincidence histogram of a long run without keeping the click streams.

    Returns ``(histogram, clicks_a, clicks_b)``. Clicks within ``range_ns``
    of a block end are carried into the next block's pair search.
    """
    det_a, det_b = detectors
    nb = _check_bins(bin_width, range_ns)
    plan = _plan(source, cross, through, det_a, det_b, duration, seed, block_duration)
    st = _Stitcher(plan)
    counts = np.zeros(nb, dtype=np.int64)
    tail_a = np.zeros(0)
    tail_b = np.zeros(0)
    n_a = n_b = 0
    pad = range_ns + bin_width
    if plan.n_blocks > 1 and plan.block_ns < pad + st.guard:
        raise PhotonStatsError("block_duration is shorter than the correlation range")
    for b, raw in enumerate(_blocks(plan, threads)):
        _, (ca, cb) = st.feed(b, raw)
        n_a += ca.size
        n_b += cb.size
        # pairs fully inside this block plus pairs touching the previous tail
        counts += _pair_histogram(ca, cb, bin_width, range_ns, nb)
        counts += _pair_histogram(tail_a, cb, bin_width, range_ns, nb)
        counts += _pair_histogram(ca, tail_b, bin_width, range_ns, nb)
        # next block's clicks start at width - guard in this block's frame
        width = plan.block_ns
        tail_a = ca[ca >= width - st.guard - pad] - width
        tail_b = cb[cb >= width - st.guard - pad] - width
    return CorrelationHistogram(bin_width, range_ns, counts, seed), n_a, n_b


class G2Estimate(NamedTuple):
    value: float
    stderr: float
    center: int
    side_mean: float
    n_side: int


def _window_sums(hist: CorrelationHistogram, period: float):
    centers = hist.centers
    k_max = int(math.floor((hist.range - 0.5 * period) / period + 1e-9))
    # window edges must fall on bin edges
    for k in (0, k_max):
        edge = (k + 0.5) * period + hist.range
        if abs(edge / hist.bin_width - round(edge / hist.bin_width)) > 1e-6:
            raise PhotonStatsError("bins are not aligned with the ±period/2 peak windows")
    sums = {}
    for k in range(-k_max, k_max + 1):
        sel = (centers >= (k - 0.5) * period) & (centers < (k + 0.5) * period)
        sums[k] = int(hist.counts[sel].sum())
    return sums, k_max


def g2_raw(hist: CorrelationHistogram, rep_period: float) -> G2Estimate:
    """Zero-delay peak area over the mean side-peak area."""
    if hist.range < 3.5 * rep_period - 1e-9:
        raise PhotonStatsError("histogram range must cover >= 3 side peaks each side")
    sums, k_max = _window_sums(hist, rep_period)
    side = [sums[k] for k in sums if k != 0]
    if len(side) < 4:
        raise PhotonStatsError("need >= 4 side peaks")
    total_side = sum(side)
    if total_side == 0:
        raise InsufficientStatisticsError("side peaks are empty")
    mean = total_side / len(side)
    c = sums[0]
    g = c / mean
    err = g * math.sqrt(1.0 / c + 1.0 / total_side) if c > 0 else math.sqrt(1.0) / mean
    return G2Estimate(g, err, c, mean, len(side))


class Correction(NamedTuple):
    value: float
    clipped: bool


def signal_fraction(rate: float, dark_rate: float) -> float:
    """Share of clicks that are signal: (rate - dark) / rate."""
    if rate <= 0 or dark_rate < 0 or dark_rate > rate:
        raise PhotonStatsError("need rate > 0 and 0 <= dark_rate <= rate")
    return (rate - dark_rate) / rate


def accidental_mixing(g2_true: float, rho_a: float, rho_b: float) -> float:
    """Raw g2 expected when uncorrelated background dilutes both arms."""
    r = rho_a * rho_b
    return r * g2_true + (1.0 - r)


def background_correct(g2_raw_value: float, rho_a: float, rho_b: float) -> Correction:
    """Remove the accidental floor 1 - ρa·ρb and rescale by ρa·ρb.

    Values below the floor (possible by statistical fluctuation) are
    clipped to 0 and flagged.
    """
    r = rho_a * rho_b
    if not 0 < r <= 1 or not (0 <= rho_a <= 1 and 0 <= rho_b <= 1):
        raise PhotonStatsError("signal fractions must satisfy 0 < ρa·ρb <= 1")
    floor = 1.0 - r
    if g2_raw_value < floor:
        return Correction(0.0, True)
    return Correction((g2_raw_value - floor) / r, False)


@dataclass(frozen=True)
class G2Result:
    g2_raw: float
    g2_corrected: float
    stderr: float  # of g2_raw
    stderr_corrected: float
    rho_a: float
    rho_b: float
    clipped: bool = False
    extra: dict = field(default_factory=dict, compare=False)


def analyze(hist: CorrelationHistogram, rep_period: float, rate_a, dark_a, rate_b, dark_b) -> G2Result:
    est = g2_raw(hist, rep_period)
    ra = signal_fraction(rate_a, dark_a)
    rb = signal_fraction(rate_b, dark_b)
    corr = background_correct(est.value, ra, rb)
    return G2Result(est.value, corr.value, est.stderr, est.stderr / (ra * rb), ra, rb, corr.clipped)


# ----------------------------------------------------------------------- I/O


def write_clicks_csv(path, *streams: ClickStream, seed: int | None = None) -> None:
    with open(path, "w", newline="") as fh:
        if seed is not None:
            fh.write(f"# seed={seed}\n")
        fh.write(f"# duration_s={streams[0].duration!r}\n" if streams else "")
        w = csv.writer(fh)
        w.writerow(["detector", "t_ns"])
        for s in streams:
            for t in s.times:
                w.writerow([s.detector, repr(float(t))])


def read_clicks_csv(path) -> dict[str, ClickStream]:
    duration = None
    rows: dict[str, list] = {}
    with open(path, newline="") as fh:
        body = []
        for line in fh:
            if line.startswith("#"):
                key, _, val = line[1:].strip().partition("=")
                if key == "duration_s":
                    duration = float(val)
            else:
                body.append(line)
    for r in csv.DictReader(body):
        rows.setdefault(r["detector"], []).append(float(r["t_ns"]))
    if duration is None:
        raise PhotonStatsError(f"{path}: missing '# duration_s=' header")
    return {k: ClickStream(k, np.array(v), duration) for k, v in rows.items()}


def write_histogram_csv(path, hist: CorrelationHistogram) -> None:
    with open(path, "w", newline="") as fh:
        if hist.seed is not None:
            fh.write(f"# seed={hist.seed}\n")
        w = csv.writer(fh)
        w.writerow(["delay_ns", "counts"])
        for c, n in zip(hist.centers, hist.counts):
            w.writerow([f"{c:.6f}", int(n)])


# ----------------------------------------------------------------- scenarios


@dataclass(frozen=True)
class HbtScenario:
    """A complete cross-correlation experiment: source, splitter, detectors,
    run length and histogram layout."""

    source: SourceSpec
    cross: float
    detectors: tuple
    duration: float  # s
    seed: int = 0
    block_duration: float = 10.0  # s
    bins_per_period: int = 8
    side_peaks: int = 5

    @property
    def through(self) -> float:
        return 1.0 - self.cross

    @property
    def bin_width(self) -> float:
        return self.source.period / self.bins_per_period

    @property
    def range_ns(self) -> float:
        return (self.side_peaks + 0.5) * self.source.period

    def run(self, threads: int | None = None) -> tuple[G2Result, CorrelationHistogram]:
        hist, n_a, n_b = simulate_hbt_histogram(
            self.source,
            self.cross,
            self.through,
            self.detectors,
            self.duration,
            self.bin_width,
            self.range_ns,
            seed=self.seed,
            block_duration=min(self.block_duration, self.duration),
            threads=threads,
        )
        rate_a, rate_b = n_a / self.duration, n_b / self.duration
        res = analyze(hist, self.source.period, rate_a, self.detectors[0].dark_rate, rate_b, self.detectors[1].dark_rate)
        extra = {"rate_a": rate_a, "rate_b": rate_b, "clicks_a": n_a, "clicks_b": n_b}
        return G2Result(**{**res.__dict__, "extra": extra}), hist


def scenario_from_dict(data: dict, where: str = "hbt") -> HbtScenario:
    reject_unknown(data, {"seed", "duration_s", "block_s", "source", "splitter", "detector", "histogram"}, where)
    src = data.get("source", {})
    reject_unknown(
        src, {"rep_rate_hz", "emission_probability", "two_photon_probability", "g2", "poisson_mean", "lifetime_ns"},
        f"{where}.source",
    )
    kw = {"rep_rate": float(src.get("rep_rate_hz", 66e6)), "lifetime": float(src.get("lifetime_ns", 1.0))}
    try:
        if "poisson_mean" in src:
            source = SourceSpec.poissonian(float(src["poisson_mean"]), **kw)
        elif "g2" in src:
            if "two_photon_probability" in src:
                raise ConfigError(f"{where}.source: give either g2 or two_photon_probability")
            source = SourceSpec.with_g2(float(src.get("emission_probability", 1.0)), float(src["g2"]), **kw)
        else:
            source = SourceSpec(
                emission_probability=float(src.get("emission_probability", 1.0)),
                two_photon_probability=float(src.get("two_photon_probability", 0.0)),
                **kw,
            )
        sp_ = data.get("splitter", {})
        reject_unknown(sp_, {"cross"}, f"{where}.splitter")
        cross = float(sp_.get("cross", 0.5))
        if not 0 <= cross <= 1:
            raise ConfigError(f"{where}.splitter.cross must lie in [0, 1]")
        dets = []
        for label, split in (("a", cross), ("b", 1.0 - cross)):
            d = data.get("detector", {}).get(label)
            if d is None:
                raise ConfigError(f"{where}: missing [detector.{label}]")
            reject_unknown(
                d, {"efficiency", "signal_rate_cps", "dark_rate_cps", "dead_time_ns", "jitter_ns"}, f"{where}.detector.{label}"
            )
            if ("efficiency" in d) == ("signal_rate_cps" in d):
                raise ConfigError(f"{where}.detector.{label}: give exactly one of efficiency, signal_rate_cps")
            if "efficiency" in d:
                eff = float(d["efficiency"])
            else:
                denom = source.rep_rate * source.mean_photons * split
                if denom <= 0:
                    raise ConfigError(f"{where}.detector.{label}: no photons reach this arm")
                eff = float(d["signal_rate_cps"]) / denom
            dets.append(
                DetectorSpec(
                    label,
                    eff,
                    float(d.get("dark_rate_cps", 0.0)),
                    float(d.get("dead_time_ns", 50.0)),
                    float(d.get("jitter_ns", 0.35)),
                )
            )
        h = data.get("histogram", {})
        reject_unknown(h, {"bins_per_period", "side_peaks"}, f"{where}.histogram")
        scen = HbtScenario(
            source,
            cross,
            tuple(dets),
            float(data.get("duration_s", 300.0)),
            int(data.get("seed", 0)),
            float(data.get("block_s", 10.0)),
            int(h.get("bins_per_period", 8)),
            int(h.get("side_peaks", 5)),
        )
    except PhotonStatsError as exc:
        raise ConfigError(f"{where}: {exc}") from None
    if scen.duration <= 0 or scen.block_duration <= 0:
        raise ConfigError(f"{where}: durations must be > 0")
    if scen.side_peaks < 3 or scen.bins_per_period < 1:
        raise ConfigError(f"{where}: need side_peaks >= 3 and bins_per_period >= 1")
    return scen


def load_scenario(path) -> HbtScenario:
    data = load_toml(path)
    data.pop("targets", None)
    return scenario_from_dict(data, str(path))
