"""
Mirror, waveguide modes and the 50/50 coupler
=============================================

Walks from the layer stack to the coupler length. Run with
``python demos/mirror_and_coupler.py``.
"""

import numpy as np

from qdchip.device import bundled_device
from qdchip.modes import coupler_model, fifty_fifty_length, ridge_effective_index, splitting_ratio, vertical_modes
from qdchip.tmm import spectrum, stopband

dev = bundled_device()

# bottom mirror alone: where is the stop band?
wl = np.linspace(800, 1100, 3001)
R, T = spectrum(dev.mirror, wl)
centre, width = stopband(wl, R)
print(f"stop band centre {centre:.2f} nm, width {width:.1f} nm, R(930) = {spectrum(dev.mirror, [930.0])[0][0]:.5f}")

# the core between the mirrors guides one vertical mode
vert = vertical_modes(dev.stack, 910.0)
lat = ridge_effective_index(dev.ridge, dev.stack, 910.0)
print(f"vertical n_eff = {vert[0].effective_index:.5f}; the 2 um ridge carries {len(lat)} lateral modes")

# two ridges merged side by side: even/odd supermodes beat along the coupler
for lam in (890.0, 910.0, 930.0):
    m = coupler_model(dev.ridge, dev.stack, dev.coupler, lam)
    L = fifty_fifty_length(m)
    s = splitting_ratio(dev.coupler.coupler_length, m)
    print(f"{lam:.0f} nm: L_c = {m.beat_length:6.2f} um, 50/50 at {L:6.2f} um, "
          f"built {dev.coupler.coupler_length} um splits {s.cross_fraction:.2f}/{s.through_fraction:.2f}")
