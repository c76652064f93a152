"""Acceptance criteria, one test each.

Every test prints (and records for the terminal summary) a single line::

    criterion N PASS|FAIL <title> | <sub-check results> | <runtime>

and then asserts all of its sub-checks, runtime budget included.
"""

import json
import math
import time

import numpy as np
import pytest
from conftest import ACCEPTANCE_LINES, write_light_pipeline

from qdchip.budget import load_chain
from qdchip.cli import main
from qdchip.device import ALAS, GAAS, Layer, LayerStack, Material, build_dbr_mirror, bundled_device
from qdchip.fdtd import FdtdConfig, PointMonitor, Source, flux_box, run_fdtd
from qdchip.modes import CouplerModel, coupler_model, fifty_fifty_length, splitting_ratio
from qdchip.photon_stats import (
    DEVICE_SCENARIO,
    DetectorSpec,
    SourceSpec,
    brute_force_histogram,
    cross_correlate,
    g2_raw,
    load_scenario,
    simulate_hbt,
    simulate_hbt_histogram,
)
from qdchip.scan import fit_loss, measured_overall_efficiency, synthetic_scan, transmission
from qdchip.scenes import BETA_SCENE, load_scene, run_scene
from qdchip.tmm import quarter_wave_dbr_reflectance, reflectance, spectrum, stopband


class Criterion:
    def __init__(self, number, title, budget_s):
        self.number, self.title, self.budget = number, title, budget_s
        self.items = []
        self.t0 = time.perf_counter()

    def check(self, name, ok, detail):
        self.items.append((name, bool(ok), detail))

    def finish(self):
        elapsed = time.perf_counter() - self.t0
        self.check("runtime", elapsed < self.budget, f"{elapsed:.1f} s < {self.budget:g} s")
        ok = all(i[1] for i in self.items)
        parts = "; ".join(f"{n}: {d} {'ok' if o else 'FAILED'}" for n, o, d in self.items)
        line = f"criterion {self.number} {'PASS' if ok else 'FAIL'} {self.title} | {parts}"
        print(line)
        ACCEPTANCE_LINES.append(line)
        failed = [f"{n} ({d})" for n, o, d in self.items if not o]
        assert not failed, "; ".join(failed)


def test_criterion_1_budget_chain():
    c = Criterion(1, "efficiency chain", 1.0)
    chain = load_chain()
    p = chain.product
    c.check("product", abs(p - 2.07e-5) <= 0.01 * 2.07e-5, f"{p:.6g} vs 2.07e-5 +- 1 %")
    c.check("band", 1.4e-5 <= p <= 2.8e-5, "inside (2.1 +- 0.7)e-5")
    c.check("exact", math.isclose(p, 2.073456e-5, rel_tol=1e-15), "equals 0.07*0.22*0.068*0.33*0.06")
    c.finish()


def test_criterion_2_on_chip():
    c = Criterion(2, "on-chip sub-chain", 1.0)
    v = load_chain().subchain("on_chip").product
    c.check("value", math.isclose(v, 0.0154, rel_tol=1e-12), f"{v:.6g}")
    c.check("band", 0.010 <= v <= 0.022, "inside (1.6 +- 0.6) %")
    c.finish()


def test_criterion_3_loss():
    c = Criterion(3, "propagation loss", 10.0)
    att = 1 - transmission(0.0068, 915.0)
    c.check("attenuation", 0.73 <= att <= 0.83, f"{att:.4f} in [0.73, 0.83]")
    c.check("value", abs(att - 0.761) < 5e-4, f"{att:.4f} ~ 0.761")
    rng = np.random.default_rng(6800)
    hits = 0
    for _ in range(200):
        fit = fit_loss(synthetic_scan(0.0068, 70, (0.0, 1500.0), 0.3, rng=rng))
        hits += abs(fit.alpha - 0.0068) <= 2 * fit.alpha_stderr
    c.check("coverage", hits / 200 >= 0.93, f"{hits}/200 within 2 stderr")
    c.finish()


def test_criterion_4_measured_efficiency():
    c = Criterion(4, "measured overall efficiency", 1.0)
    lo = measured_overall_efficiency(700, 50, 66e6)
    hi = measured_overall_efficiency(1000, 60, 66e6)
    c.check("low", abs(lo - 0.985e-5) < 5e-9, f"{lo:.4g}")
    c.check("high", abs(hi - 1.42e-5) < 5e-8, f"{hi:.4g}")
    c.check("quoted", round(lo * 1e5, 1) == 1.0 and round(hi * 1e5, 1) == 1.4, "1.0e-5 to 1.4e-5 at one decimal")
    c.finish()


def _random_stack(rng):
    layers = tuple(
        Layer(Material(f"m{i}", float(rng.uniform(1.0, 3.6))), float(rng.uniform(5.0, 400.0)))
        for i in range(int(rng.integers(1, 30)))
    )
    return LayerStack(layers, Material("amb", float(rng.uniform(1.0, 2.0))), Material("sub", float(rng.uniform(1.0, 3.6))))


def test_criterion_5_tmm():
    c = Criterion(5, "transfer matrix", 5.0)
    r = reflectance(build_dbr_mirror(20, 930.0), 930.0).R
    oracle = quarter_wave_dbr_reflectance(1.0, GAAS.n_real(930.0), ALAS.n_real(930.0), GAAS.n_real(930.0), 20)
    c.check("closed form", abs(r - oracle) <= 1e-6, f"|{r:.9f} - {oracle:.9f}| <= 1e-6")
    rng = np.random.default_rng(100)
    worst = 0.0
    for _ in range(100):
        s = _random_stack(rng)
        R, T = spectrum(s, np.linspace(600, 1600, 41), float(rng.uniform(0, 60)), str(rng.choice(["s", "p"])))
        worst = max(worst, float(np.max(np.abs(R + T - 1))))
    c.check("R+T=1", worst <= 1e-9, f"max |R+T-1| = {worst:.1e} over 100 stacks")
    wl = np.linspace(800, 1100, 3001)
    R, _ = spectrum(bundled_device().mirror, wl)
    centre, _ = stopband(wl, R)
    c.check("stop-band centre", abs(centre - 930.0) <= 1.0, f"{centre:.3f} nm")
    c.finish()


def test_criterion_6_coupler():
    c = Criterion(6, "modes and coupler", 5.0)
    dev = bundled_device()
    m = coupler_model(dev.ridge, dev.stack, dev.coupler, 910.0)
    l50 = fifty_fifty_length(m)
    c.check("50/50 length", abs(l50 - 118.5) <= 0.25 * 118.5, f"{l50:.2f} um vs 118.5 +- 25 %")
    ok = True
    for lc in (12.0, 78.9, 244.0):
        mod = CouplerModel.from_beat_length(lc, 910.0)
        ok &= splitting_ratio(0.0, mod).cross_fraction == 0.0
        ok &= splitting_ratio(lc, mod).cross_fraction == 1.0
        for L in np.linspace(0, 5 * lc, 101):
            s = splitting_ratio(float(L), mod)
            ok &= s.cross_fraction + s.through_fraction == 1.0
    c.check("identities", ok, "L=0 -> 0, L=Lc -> 1, cross+through=1 exactly")
    c.finish()


def _plane_wave_error(res):
    src = Source(2.0, 0.0, 910.0, 40.0, x1=2.0, y1=1.0)
    cfg = FdtdConfig(
        9.0, 1.0, res, src, periodic_y=True, wavelengths=(910.0,),
        points=(PointMonitor("a", 3.0, 0.5), PointMonitor("b", 5.0, 0.5)),
    )
    run = run_fdtd(cfg)
    k0 = 2 * math.pi / 0.910
    ph = float(np.angle(run.point("b")[0] / run.point("a")[0]))
    k = (ph + 2 * math.pi * round((k0 * 2.0 - ph) / (2 * math.pi))) / 2.0
    return abs(k / k0 - 1)


def test_criterion_7_fdtd():
    c = Criterion(7, "FDTD", 600.0)
    src = Source(4.0, 4.0, 910.0, 40.0)
    cfg = FdtdConfig(8.0, 8.0, 20.0, src, monitors=tuple(flux_box("in", 4, 4, 1.0) + flux_box("out", 4, 4, 2.0)))
    run = run_fdtd(cfg)
    dev_box = float(np.max(np.abs(run.total("in") / run.total("out") - 1)))
    c.check("energy box", dev_box < 0.01, f"{dev_box:.1e} < 1 %")
    e20, e40 = _plane_wave_error(20.0), _plane_wave_error(40.0)
    c.check("convergence", 3.0 <= e20 / e40 <= 5.0, f"factor {e20 / e40:.2f} in [3, 5]")
    spec = load_scene(BETA_SCENE)  # default resolution
    res = run_scene(spec)
    k = int(np.argmin(np.abs(res.wavelengths - 910.0)))
    beta = float(res.beta[k])
    c.check("beta", 0.04 <= beta <= 0.10, f"{beta:.4f} in [0.04, 0.10] (flux share {res.beta_flux[k]:.4f})")
    c.finish()


def _dets(eff, dark=0.0):
    return (DetectorSpec("a", eff, dark), DetectorSpec("b", eff, dark))


def test_criterion_8_photon_statistics():
    c = Criterion(8, "photon statistics", 120.0)
    rep = 66e6
    period = 1e9 / rep
    bw, rng_ns = period / 8, 5.5 * period
    pulses = 2e7
    h, _, _ = simulate_hbt_histogram(SourceSpec(), 0.5, 0.5, _dets(0.01), pulses / rep, bw, rng_ns, seed=81)
    g = g2_raw(h, period).value
    c.check("ideal", g < 0.05, f"g2_raw {g:.4f} over {pulses:.0e} pulses")
    h, _, _ = simulate_hbt_histogram(SourceSpec.poissonian(1.0), 0.5, 0.5, _dets(0.03), 0.3, bw, rng_ns, seed=82)
    g = g2_raw(h, period).value
    c.check("poissonian", abs(g - 1.0) <= 0.05, f"g2_raw {g:.4f}")
    res, _ = load_scenario(DEVICE_SCENARIO).run()
    c.check("scenario raw", abs(res.g2_raw - 0.476) <= 0.05, f"g2_raw {res.g2_raw:.4f} +- {res.stderr:.4f}")
    c.check(
        "scenario corrected",
        abs(res.g2_corrected - 0.40) <= 0.05 and res.g2_corrected < 0.5,
        f"g2_corrected {res.g2_corrected:.4f} +- {res.stderr_corrected:.4f}",
    )
    a, b = simulate_hbt(SourceSpec.with_g2(1.0, 0.4), 0.5, 0.5, _dets(3e-4, 5e3), 0.1, seed=83)
    same = np.array_equal(cross_correlate(a, b, bw, rng_ns).counts, brute_force_histogram(a, b, bw, rng_ns).counts)
    c.check("pair counts", same and len(a) > 100, f"{len(a)}x{len(b)} clicks vs O(n^2) oracle")
    c.finish()


def test_criterion_9_determinism(tmp_path, monkeypatch):
    c = Criterion(9, "pipeline determinism", 600.0)
    monkeypatch.setenv("QDCHIP_CACHE", str(tmp_path / "cache"))
    cfg = write_light_pipeline(tmp_path / "cfg")
    outs = {}
    for threads in ("1", "2"):
        out = tmp_path / f"t{threads}"
        main(["pipeline", "--config", str(cfg), "--out", str(out), "--threads", threads, "--seed", "4242"])
        outs[threads] = out
    one, two = outs["1"], outs["2"]
    m1 = json.loads((one / "manifest.json").read_text())
    same = [(one / f).read_bytes() == (two / f).read_bytes() for f in ["report.txt", *m1["outputs"]]]
    c.check("byte identical", all(same) and len(same) >= 3, f"{sum(same)}/{len(same)} files across 1 and 2 threads")
    c.check("seed recorded", m1["seed"] == 4242 and m1["failed_stage"] is None, f"seed {m1['seed']}")
    c.finish()


@pytest.fixture(autouse=True)
def _output_root(tmp_path, monkeypatch):
    monkeypatch.setenv("QDCHIP_OUTPUT_ROOT", str(tmp_path / "runs"))
