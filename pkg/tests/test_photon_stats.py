import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from qdchip._config import ConfigError, parse_toml
from qdchip.photon_stats import (
    DEVICE_SCENARIO,
    ClickStream,
    CorrelationHistogram,
    DetectorSpec,
    InsufficientStatisticsError,
    PhotonStatsError,
    SourceSpec,
    accidental_mixing,
    analyze,
    background_correct,
    brute_force_histogram,
    cross_correlate,
    g2_raw,
    load_scenario,
    read_clicks_csv,
    scenario_from_dict,
    signal_fraction,
    simulate_hbt,
    simulate_hbt_histogram,
    write_clicks_csv,
    write_histogram_csv,
)

REP = 66e6
PERIOD = 1e9 / REP
BW = PERIOD / 8
RANGE = 5.5 * PERIOD


def dets(eff_a, eff_b=None, dark_a=0.0, dark_b=0.0, dead=50.0, jitter=0.35):
    eff_b = eff_a if eff_b is None else eff_b
    return DetectorSpec("a", eff_a, dark_a, dead, jitter), DetectorSpec("b", eff_b, dark_b, dead, jitter)


class TestSource:
    def test_with_g2_solution(self):
        s = SourceSpec.with_g2(1.0, 0.4)
        assert s.two_photon_probability == pytest.approx(0.381966, abs=1e-6)
        assert s.g2 == pytest.approx(0.4, abs=1e-12)

    @given(st.floats(0.01, 1.0), st.floats(0.0, 1.0))
    def test_with_g2_round_trip(self, p, g):
        if 2 * g * p > 1:
            with pytest.raises(PhotonStatsError):
                SourceSpec.with_g2(p, g)
        else:
            assert SourceSpec.with_g2(p, g).g2 == pytest.approx(g, abs=1e-9)

    def test_invariants(self):
        with pytest.raises(PhotonStatsError):
            SourceSpec(emission_probability=0.3, two_photon_probability=0.4)
        with pytest.raises(PhotonStatsError):
            SourceSpec(lifetime=0.0)
        with pytest.raises(PhotonStatsError):
            SourceSpec(rep_rate=-1)
        with pytest.raises(PhotonStatsError):
            DetectorSpec("a", 1.5)
        with pytest.raises(PhotonStatsError):
            DetectorSpec("c", 0.5)

    def test_poissonian(self):
        s = SourceSpec.poissonian(0.5)
        assert s.g2 == 1.0
        assert s.mean_photons == 0.5
        assert s.emission_probability == pytest.approx(1 - math.exp(-0.5))


class TestSimulation:
    def test_dead_detectors(self):
        a, b = simulate_hbt(SourceSpec(), 0.5, 0.5, dets(0.0), 0.01, seed=1)
        assert len(a) == 0 and len(b) == 0

    def test_dark_counts_poisson(self):
        a, b = simulate_hbt(SourceSpec(), 0.5, 0.5, dets(0.0, dark_a=50.0, dark_b=50.0), 100.0, seed=2, block_duration=10.0)
        for s in (a, b):
            assert abs(len(s) - 5000) <= 4 * math.sqrt(5000)

    def test_rate_formula(self):
        eff = 2000.0 / (REP * 0.5)
        src = SourceSpec(emission_probability=0.8)
        a, b = simulate_hbt(src, 0.3, 0.7, dets(eff, dark_a=40.0, dark_b=60.0), 300.0, seed=3, block_duration=30.0)
        for s, split, dark in ((a, 0.3, 40.0), (b, 0.7, 60.0)):
            expect = (REP * 0.8 * split * eff + dark) * 300.0
            assert abs(len(s) - expect) <= 3 * math.sqrt(expect)

    def test_streams_valid(self):
        a, b = simulate_hbt(SourceSpec(), 0.5, 0.5, dets(1e-3, dark_a=1e3), 0.05, seed=4, block_duration=0.01)
        for s in (a, b):
            assert np.all(np.diff(s.times) > 0)
            assert s.times[0] >= 0 and s.times[-1] <= 0.05e9
            assert np.all(np.diff(s.times) >= 50.0)  # dead time

    def test_seed_reproducible_and_thread_independent(self):
        args = (SourceSpec.with_g2(1.0, 0.4), 0.5, 0.5, dets(1e-3, dark_a=500.0), 0.2)
        a1, b1 = simulate_hbt(*args, seed=7, block_duration=0.02, threads=1)
        a2, b2 = simulate_hbt(*args, seed=7, block_duration=0.02, threads=4)
        assert np.array_equal(a1.times, a2.times) and np.array_equal(b1.times, b2.times)
        a3, _ = simulate_hbt(*args, seed=8, block_duration=0.02)
        assert not np.array_equal(a1.times, a3.times)

    def test_streamed_histogram_equals_full_correlation(self):
        # block tails carried across boundaries must reproduce the full pair count
        args = (SourceSpec.with_g2(1.0, 0.4), 0.5, 0.5, dets(2e-3, dark_a=2e3, dark_b=3e3), 0.1)
        a, b = simulate_hbt(*args, seed=11, block_duration=0.01)
        full = cross_correlate(a, b, BW, RANGE)
        hist, na, nb = simulate_hbt_histogram(*args, BW, RANGE, seed=11, block_duration=0.01)
        assert (na, nb) == (len(a), len(b))
        assert np.array_equal(hist.counts, full.counts)
        h4, _, _ = simulate_hbt_histogram(*args, BW, RANGE, seed=11, block_duration=0.01, threads=4)
        assert np.array_equal(h4.counts, hist.counts)

    def test_invalid_splitter(self):
        with pytest.raises(PhotonStatsError):
            simulate_hbt(SourceSpec(), 0.6, 0.6, dets(0.1), 0.01)


class TestCorrelation:
    def test_delta_shift(self):
        # clicks far apart, so each click pairs only with its shifted copy
        t = np.cumsum(np.random.default_rng(0).uniform(100.0, 500.0, 300))
        a = ClickStream("a", t, 1e-3)
        b = ClickStream("b", t + 12.3, 1e-3)
        h = cross_correlate(a, b, 1.0, 20.0)
        k = int(np.floor((12.3 + 20.0) / 1.0))
        assert h.counts[k] == len(t)
        assert h.total == len(t)

    def test_single_bin_for_isolated_pairs(self):
        t = np.arange(10) * 1000.0
        h = cross_correlate(ClickStream("a", t, 1e-5), ClickStream("b", t + 4.0, 1e-5), 1.0, 10.0)
        assert h.total == 10
        assert h.counts[14] == 10

    def test_swap_mirrors(self):
        rng = np.random.default_rng(1)
        a = ClickStream("a", np.sort(rng.uniform(0, 1e6, 500)), 1e-3)
        b = ClickStream("b", np.sort(rng.uniform(0, 1e6, 500)), 1e-3)
        # bins symmetric about zero once delays avoid exact edges
        h1 = cross_correlate(a, b, 0.5, 100.0)
        h2 = cross_correlate(b, a, 0.5, 100.0)
        assert np.array_equal(h1.counts, h2.counts[::-1])

    def test_independent_poisson_flat(self):
        rng = np.random.default_rng(2)
        T = 1.0
        ra, rb = 2e4, 3e4
        a = ClickStream("a", np.sort(rng.uniform(0, T * 1e9, rng.poisson(ra * T))), T)
        b = ClickStream("b", np.sort(rng.uniform(0, T * 1e9, rng.poisson(rb * T))), T)
        h = cross_correlate(a, b, 20.0, 1000.0)
        mu = ra * rb * T * 20e-9
        assert np.all(np.abs(h.counts - mu) <= 4 * math.sqrt(mu))

    def test_bin_checks(self):
        a = ClickStream("a", [1.0], 1e-6)
        with pytest.raises(PhotonStatsError):
            cross_correlate(a, a, 0.0, 10.0)
        with pytest.raises(PhotonStatsError):
            cross_correlate(a, a, 3.0, 10.0)
        with pytest.raises(PhotonStatsError):
            cross_correlate(a, ClickStream("b", [1.0], 2e-6), 1.0, 10.0)

    def test_brute_force_oracle_on_simulated_streams(self):
        a, b = simulate_hbt(SourceSpec.with_g2(1.0, 0.4), 0.5, 0.5, dets(3e-4, dark_a=5e3, dark_b=5e3), 0.1, seed=5)
        assert 200 < len(a) <= 2000 and 200 < len(b) <= 2000
        fast = cross_correlate(a, b, BW, RANGE)
        slow = brute_force_histogram(a, b, BW, RANGE)
        assert np.array_equal(fast.counts, slow.counts)

    @given(
        st.lists(st.floats(0, 1e4, allow_nan=False), max_size=150),
        st.lists(st.floats(0, 1e4, allow_nan=False), max_size=150),
        st.sampled_from([(0.5, 20.0), (2.0, 50.0), (7.0, 35.0)]),
    )
    def test_brute_force_oracle_property(self, ta, tb, bins):
        bw, rng_ns = bins
        a = ClickStream("a", np.sort(ta), 1e-5)
        b = ClickStream("b", np.sort(tb), 1e-5)
        assert np.array_equal(cross_correlate(a, b, bw, rng_ns).counts, brute_force_histogram(a, b, bw, rng_ns).counts)


class TestG2:
    def test_needs_range(self):
        h = CorrelationHistogram(BW, 2.5 * PERIOD, np.ones(40, dtype=np.int64))
        with pytest.raises(PhotonStatsError):
            g2_raw(h, PERIOD)

    def test_empty_side_peaks(self):
        n = int(round(2 * RANGE / BW))
        with pytest.raises(InsufficientStatisticsError):
            g2_raw(CorrelationHistogram(BW, RANGE, np.zeros(n, dtype=np.int64)), PERIOD)

    def test_misaligned_bins(self):
        bw = PERIOD / 7.3
        rng_ns = 40 * bw
        with pytest.raises(PhotonStatsError):
            g2_raw(CorrelationHistogram(bw, rng_ns, np.ones(80, dtype=np.int64)), PERIOD)

    def test_flat_histogram_gives_one(self):
        n = int(round(2 * RANGE / BW))
        g = g2_raw(CorrelationHistogram(BW, RANGE, np.full(n, 100, dtype=np.int64)), PERIOD)
        assert g.value == 1.0
        assert g.n_side == 10

    def test_ideal_source(self):
        # 2e7 pulses, no darks
        eff = 0.01
        h, na, nb = simulate_hbt_histogram(SourceSpec(), 0.5, 0.5, dets(eff), 2e7 / REP, BW, RANGE, seed=21, block_duration=0.05)
        g = g2_raw(h, PERIOD)
        assert g.side_mean > 100
        assert g.value < 0.05

    def test_poissonian_source(self):
        h, _, _ = simulate_hbt_histogram(
            SourceSpec.poissonian(1.0), 0.5, 0.5, dets(0.03), 0.3, BW, RANGE, seed=22, block_duration=0.05
        )
        g = g2_raw(h, PERIOD)
        assert g.stderr < 0.025
        assert abs(g.value - 1.0) <= 0.05

    @pytest.mark.parametrize("g_true", [0.0, 0.4, 1.0])
    def test_round_trip_with_background(self, g_true):
        src = SourceSpec.with_g2(0.5, g_true)
        eff = 2e4 / (REP * src.mean_photons * 0.5)
        h, na, nb = simulate_hbt_histogram(
            src, 0.5, 0.5, dets(eff, dark_a=2e3, dark_b=3e3), 300.0, BW, RANGE, seed=23, block_duration=30.0
        )
        res = analyze(h, PERIOD, na / 300.0, 2e3, nb / 300.0, 3e3)
        assert abs(res.g2_corrected - g_true) <= 3 * res.stderr_corrected

    def test_mixing_arithmetic(self):
        ra, rb = signal_fraction(700, 50), signal_fraction(1000, 60)
        assert ra * rb == pytest.approx(0.873, abs=1e-3)
        assert accidental_mixing(0.40, ra, rb) == pytest.approx(0.476, abs=1e-3)
        assert background_correct(0.476, ra, rb).value == pytest.approx(0.40, abs=2e-3)


class TestBackgroundCorrect:
    def test_no_background(self):
        assert background_correct(0.37, 1.0, 1.0) == (0.37, False)

    def test_floor(self):
        c = background_correct(1 - 0.8 * 0.9, 0.8, 0.9)
        assert c.value == pytest.approx(0.0, abs=1e-15) and not c.clipped

    def test_below_floor_clipped(self):
        c = background_correct(0.1, 0.8, 0.9)
        assert c == (0.0, True)

    def test_invalid(self):
        with pytest.raises(PhotonStatsError):
            background_correct(0.5, 0.0, 0.9)
        with pytest.raises(PhotonStatsError):
            signal_fraction(10, 20)

    @given(st.floats(0.0, 3.0), st.floats(0.05, 1.0), st.floats(0.05, 1.0))
    def test_inverse_of_mixing(self, g, ra, rb):
        raw = accidental_mixing(g, ra, rb)
        assert background_correct(raw, ra, rb).value == pytest.approx(g, abs=1e-9)

    @given(st.floats(0.0, 3.0), st.floats(0.05, 0.999), st.floats(0.05, 0.999))
    def test_correction_moves_away_from_one(self, g_raw_value, ra, rb):
        c = background_correct(g_raw_value, ra, rb)
        if c.clipped:
            return
        diff = c.value - g_raw_value
        if abs(g_raw_value - 1.0) < 1e-12:
            assert abs(diff) < 1e-9
        else:
            assert math.copysign(1, diff) == math.copysign(1, g_raw_value - 1.0)


class TestScenario:
    def test_bundled_scenario_parses(self):
        s = load_scenario(DEVICE_SCENARIO)
        assert s.source.two_photon_probability == pytest.approx(0.381966, abs=1e-6)
        assert s.source.g2 == pytest.approx(0.4)
        # signal rates 650 and 940 after the split
        assert REP * s.source.mean_photons * 0.5 * s.detectors[0].efficiency == pytest.approx(650.0)
        assert REP * s.source.mean_photons * 0.5 * s.detectors[1].efficiency == pytest.approx(940.0)
        assert s.bin_width == pytest.approx(PERIOD / 8)

    def test_strict_keys(self):
        base = DEVICE_SCENARIO.read_text().replace("[targets]", "[ignored]")
        with pytest.raises(ConfigError):
            scenario_from_dict(parse_toml(base))
        ok = parse_toml(DEVICE_SCENARIO.read_text())
        ok.pop("targets")
        ok["source"]["lifetme_ns"] = 1.0
        with pytest.raises(ConfigError, match="lifetme_ns"):
            scenario_from_dict(ok)

    def test_needs_one_efficiency_form(self):
        d = parse_toml(DEVICE_SCENARIO.read_text())
        d.pop("targets")
        d["detector"]["a"]["efficiency"] = 0.1
        with pytest.raises(ConfigError):
            scenario_from_dict(d)

    def test_short_run_is_deterministic(self):
        d = parse_toml(DEVICE_SCENARIO.read_text())
        d.pop("targets")
        d["duration_s"] = 400.0
        s = scenario_from_dict(d)
        r1, h1 = s.run(threads=1)
        r2, h2 = s.run(threads=3)
        assert np.array_equal(h1.counts, h2.counts)
        assert r1 == r2


def test_click_csv_round_trip(tmp_path):
    a, b = simulate_hbt(SourceSpec(), 0.5, 0.5, dets(1e-4, dark_a=1e3), 0.01, seed=9)
    p = tmp_path / "clicks.csv"
    write_clicks_csv(p, a, b, seed=9)
    text = p.read_text().splitlines()
    assert text[0] == "# seed=9"
    back = read_clicks_csv(p)
    assert np.array_equal(back["a"].times, a.times)
    assert np.array_equal(back["b"].times, b.times)


def test_histogram_csv(tmp_path):
    h = CorrelationHistogram(1.0, 2.0, np.array([1, 2, 3, 4]), seed=5)
    p = tmp_path / "h.csv"
    write_histogram_csv(p, h)
    lines = p.read_text().splitlines()
    assert lines[:2] == ["# seed=5", "delay_ns,counts"]
    assert lines[2] == "-1.500000,1"
