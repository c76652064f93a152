"""
Cross-correlation between the two output ports
==============================================

A shortened version of the bundled scenario (2000 s instead of 2e5 s), so
the error bars are about ten times wider than the full run.
"""

from qdchip._config import parse_toml
from qdchip.photon_stats import DEVICE_SCENARIO, accidental_mixing, background_correct, scenario_from_dict, signal_fraction

cfg = parse_toml(DEVICE_SCENARIO.read_text())
cfg.pop("targets")
cfg["duration_s"] = 2000.0
scen = scenario_from_dict(cfg)

res, hist = scen.run()
print(f"rates {res.extra['rate_a']:.0f} / {res.extra['rate_b']:.0f} cps, {hist.counts.sum()} pairs in the histogram")
print(f"g2 raw {res.g2_raw:.3f} +- {res.stderr:.3f}, corrected {res.g2_corrected:.3f} +- {res.stderr_corrected:.3f}")

# the same correction done by hand on the expected numbers
ra, rb = signal_fraction(700, 50), signal_fraction(1000, 60)
raw = accidental_mixing(0.40, ra, rb)
print(f"true 0.40 with rho_a*rho_b = {ra * rb:.3f} reads as {raw:.3f}; corrected back: {background_correct(raw, ra, rb).value:.3f}")
