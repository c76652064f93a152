import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from qdchip.device import ALAS, GAAS, AIR, Layer, LayerStack, Material, build_dbr_mirror
from qdchip.tmm import quarter_wave_dbr_reflectance, reflectance, spectrum, stopband, write_spectrum_csv


def test_bare_interface_fresnel():
    stack = LayerStack((), AIR, GAAS)
    r = reflectance(stack, 910.0)
    assert r.R == pytest.approx(((3.48 - 1) / (3.48 + 1)) ** 2, abs=1e-12)
    assert r.R == pytest.approx(0.3064, abs=1e-4)
    assert r.R + r.T == pytest.approx(1.0, abs=1e-12)


def test_half_wave_layer_is_absent():
    glass = Material("glass", 1.5)
    base = LayerStack((), glass, glass)
    n = 2.3
    half = LayerStack((Layer(Material("h", n), 910.0 / (2 * n)),), glass, glass)
    assert reflectance(half, 910.0).R == pytest.approx(reflectance(base, 910.0).R, abs=1e-9)
    # and between dissimilar media too
    half2 = LayerStack((Layer(Material("h", n), 910.0 / (2 * n)),), AIR, GAAS)
    assert reflectance(half2, 910.0).R == pytest.approx(reflectance(LayerStack((), AIR, GAAS), 910.0).R, abs=1e-9)


@pytest.mark.parametrize("pairs", [1, 5, 10, 20])
def test_quarter_wave_dbr_closed_form(pairs):
    m = build_dbr_mirror(pairs, 930.0)
    oracle = quarter_wave_dbr_reflectance(1.0, 3.48, 2.95, 3.48, pairs)
    assert reflectance(m, 930.0).R == pytest.approx(oracle, abs=1e-6)


def test_reflectance_vs_pairs():
    # the first few pairs cancel the air/GaAs mismatch before R climbs
    rs = [reflectance(build_dbr_mirror(n, 930.0), 930.0).R for n in range(1, 25)]
    oracle = [quarter_wave_dbr_reflectance(1.0, 3.48, 2.95, 3.48, n) for n in range(1, 25)]
    assert np.allclose(rs, oracle, atol=1e-6)
    k = int(np.argmin(rs))
    assert all(b > a for a, b in zip(rs[k:], rs[k + 1 :]))
    assert rs[-1] > 0.99


def test_bundled_mirror_stopband_centre(device):
    wl = np.linspace(800, 1100, 3001)
    R, _ = spectrum(device.mirror, wl)
    centre, width = stopband(wl, R)
    assert abs(centre - 930.0) < 1.0
    assert 100 < width < 160


def test_stopband_errors():
    wl = np.linspace(900, 960, 61)
    R, _ = spectrum(build_dbr_mirror(20, 930.0), wl)
    with pytest.raises(ValueError):
        stopband(wl, R)  # band edges outside the range
    with pytest.raises(ValueError):
        stopband(wl[::-1], R)


def test_argument_checks():
    s = build_dbr_mirror(2)
    with pytest.raises(ValueError):
        reflectance(s, -1.0)
    with pytest.raises(ValueError):
        reflectance(s, 900.0, angle=90.0)
    with pytest.raises(ValueError):
        reflectance(s, 900.0, pol="x")


def _interface_oracle(ns, ds, lam):
    # independent interface/propagation matrices, normal incidence
    k0 = 2 * np.pi / lam
    M = np.eye(2, dtype=complex)
    for i in range(len(ns) - 1):
        n1, n2 = ns[i], ns[i + 1]
        r, t = (n1 - n2) / (n1 + n2), 2 * n1 / (n1 + n2)
        M = M @ (np.array([[1, r], [r, 1]]) / t)
        if i + 1 < len(ns) - 1:
            ph = k0 * n2 * ds[i]
            M = M @ np.diag([np.exp(-1j * ph), np.exp(1j * ph)])
    return abs(M[1, 0] / M[0, 0]) ** 2, ns[-1].real / ns[0].real * abs(1 / M[0, 0]) ** 2


@pytest.mark.parametrize("k", [0.01, 0.1, 0.5])
def test_absorbing_layer_matches_interface_oracle(k):
    n = 3.5 + 1j * k
    lossy = LayerStack((Layer(Material("abs", n), 200.0), Layer(ALAS, 80.0)), AIR, GAAS)
    r = reflectance(lossy, 910.0)
    R, T = _interface_oracle([1.0, n, 2.95, 3.48], [200.0, 80.0], 910.0)
    assert r.R == pytest.approx(R, abs=1e-10)
    assert r.T == pytest.approx(T, abs=1e-10)
    assert r.A > 0


def test_total_internal_reflection_has_no_transmission():
    # GaAs ambient onto air substrate past the critical angle
    s = LayerStack((Layer(ALAS, 100.0),), GAAS, AIR)
    for pol in ("s", "p"):
        r = reflectance(s, 910.0, angle=40.0, pol=pol)
        assert r.T == 0.0
        assert r.R == pytest.approx(1.0, abs=1e-9)


def test_chunking_does_not_change_results():
    s = build_dbr_mirror(20)
    wl = np.linspace(850, 1000, 301)
    R, T = spectrum(s, wl)
    R2 = np.concatenate([spectrum(s, wl[:100])[0], spectrum(s, wl[100:])[0]])
    assert np.array_equal(R, R2)


def test_spectrum_csv(tmp_path):
    wl = np.array([900.0, 910.0])
    R, T = spectrum(build_dbr_mirror(3), wl)
    p = tmp_path / "s.csv"
    write_spectrum_csv(p, wl, R, T)
    rows = p.read_text().splitlines()
    assert rows[0] == "wavelength_nm,R,T"
    assert len(rows) == 3


indices = st.floats(1.0, 4.0)
thick = st.floats(1.0, 500.0)
random_stack = st.builds(
    lambda layers, amb, sub: LayerStack(tuple(Layer(Material("m", n), t) for n, t in layers), Material("a", amb), Material("s", sub)),
    st.lists(st.tuples(indices, thick), min_size=0, max_size=12),
    st.floats(1.0, 1.6),
    st.floats(1.0, 4.0),
)


@given(random_stack, st.floats(0.0, 80.0), st.sampled_from(["s", "p"]))
def test_energy_conservation(stack, angle, pol):
    wl = np.linspace(400, 1600, 10)
    R, T = spectrum(stack, wl, angle, pol)
    assert np.all((R >= 0) & (R <= 1) & (T >= 0) & (T <= 1))
    assert np.max(np.abs(R + T - 1)) <= 1e-9


@given(random_stack)
def test_s_equals_p_at_normal_incidence(stack):
    wl = np.linspace(500, 1200, 7)
    Rs, Ts = spectrum(stack, wl, 0.0, "s")
    Rp, Tp = spectrum(stack, wl, 0.0, "p")
    assert np.max(np.abs(Rs - Rp)) <= 1e-12
    assert np.max(np.abs(Ts - Tp)) <= 1e-12


@given(random_stack)
def test_reversal_reciprocity(stack):
    wl = np.linspace(500, 1200, 7)
    R, T = spectrum(stack, wl)
    Rr, Tr = spectrum(stack.reversed(), wl)
    assert np.max(np.abs(T - Tr)) <= 1e-9
    # lossless: R follows from T, so it is reversal-invariant too
    assert np.max(np.abs(R - Rr)) <= 1e-9
