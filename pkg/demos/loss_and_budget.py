"""
From a loss scan to the efficiency budget
=========================================

Fits the bundled intensity-vs-distance scan, then feeds the fitted
transmission into the efficiency chain.
"""

from qdchip.budget import load_chain
from qdchip.scan import BUNDLED_SCAN, fit_loss, measured_overall_efficiency, read_scan_csv, transmission

scan = read_scan_csv(BUNDLED_SCAN)
fit = fit_loss(scan, ("a",))  # the straight section before the coupler
print(fit.report())

t = transmission(fit.alpha, 915.0)
print(f"915 um of waveguide keeps {t:.3f} of the light ({1 - t:.1%} lost)")

chain = load_chain()
print(chain.report())

fitted = chain.with_value("transmission", t, source="scan-fit")
print(f"with the fitted transmission: on-chip {fitted.subchain('on_chip').product:.4f}, "
      f"overall {fitted.product:.3e} +- {fitted.abs_uncertainty:.1e}")

# what the detectors saw: background-subtracted rate over the repetition rate
for rate, dark in ((700, 50), (1000, 60)):
    print(f"{rate} cps with {dark} dark -> {measured_overall_efficiency(rate, dark, 66e6):.3e}")
