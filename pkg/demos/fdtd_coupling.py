"""
Dipole-to-waveguide coupling and the output facet
=================================================

Both FDTD scenes on a coarse grid (40 cells/um) so that the script finishes
in a few minutes; ``qdchip fdtd`` runs the bundled scenes at the default
resolution.
"""

import time

from qdchip.device import bundled_device
from qdchip.scenes import ReferenceStore, dipole_beta, facet_outcoupling, run_facet_reference

dev = bundled_device()
RES = 40.0

t0 = time.time()
b = dipole_beta(dev.ridge, dev.stack, 910.0, resolution=RES, wavelengths=(900.0, 910.0, 920.0))
for wl, beta, flux in zip(b.wavelengths, b.beta, b.beta_flux):
    print(f"{wl:.0f} nm: guided share {beta:.3f} (all power crossing the monitors {flux:.3f})")
print(f"  {b.run.steps} steps, {time.time() - t0:.0f} s")

# the facet needs a reference run with the ridge continuing
store = ReferenceStore()
kw = dict(resolution=RES, wavelengths=(910.0,), source_distance=6.0, side_gap=2.0)
run_facet_reference(dev.ridge, dev.stack, store, **kw)
for kind in ("reference", "matched", "facet"):
    r = facet_outcoupling(dev.ridge, dev.stack, store, kind=kind, **kw)
    print(f"{kind:9s}: {r.fraction[0]:.3f} of the incident guided power passes the plane")
