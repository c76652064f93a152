"""Multiplicative efficiency chains with uncertainty propagation."""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from fractions import Fraction
from pathlib import Path

from ._config import ConfigError, load_toml, reject_unknown

__all__ = [
    "SOURCES",
    "EfficiencyTerm",
    "EfficiencyChain",
    "propagate_chain",
    "splitter_term",
    "load_chain",
    "chain_from_dict",
    "DEVICE_CHAIN_CONFIG",
]

SOURCES = ("nominal", "fdtd", "scan-fit", "manual")
DEVICE_CHAIN_CONFIG = Path(__file__).parent / "data" / "device_chain.toml"


@dataclass(frozen=True)
class EfficiencyTerm:
    name: str
    value: float
    rel_uncertainty: float = 0.0
    source: str = "manual"

    def __post_init__(self):
        v = float(self.value)
        if not (math.isfinite(v) and 0.0 <= v <= 1.0):
            raise ValueError(f"term {self.name!r}: value must lie in [0, 1], got {self.value}")
        if not (math.isfinite(self.rel_uncertainty) and self.rel_uncertainty >= 0):
            raise ValueError(f"term {self.name!r}: rel_uncertainty must be >= 0")
        if self.source not in SOURCES:
            raise ValueError(f"term {self.name!r}: source must be one of {SOURCES}")
        object.__setattr__(self, "value", v)
        object.__setattr__(self, "rel_uncertainty", float(self.rel_uncertainty))


@dataclass(frozen=True)
class EfficiencyChain:
    terms: tuple[EfficiencyTerm, ...]
    product: float
    rel_uncertainty: float
    mode: str = "quadrature"
    interval: tuple[float, float] = (1.0, 1.0)
    subchains: dict = field(default_factory=dict, compare=False)

    @property
    def abs_uncertainty(self) -> float:
        return self.product * self.rel_uncertainty

    def term(self, name: str) -> EfficiencyTerm:
        for t in self.terms:
            if t.name == name:
                return t
        raise KeyError(name)

    def subchain(self, names) -> EfficiencyChain:
        """Chain of the named terms only (in this chain's order)."""
        if isinstance(names, str):
            names = self.subchains[names]
        missing = set(names) - {t.name for t in self.terms}
        if missing:
            raise KeyError(f"unknown terms {sorted(missing)}")
        return propagate_chain([t for t in self.terms if t.name in names], self.mode)

    def with_value(self, name: str, value: float, **kw) -> EfficiencyChain:
        """Copy with one term's value (and optionally uncertainty/source) replaced."""
        terms = [replace(t, value=value, **kw) if t.name == name else t for t in self.terms]
        if all(t.name != name for t in self.terms):
            raise KeyError(name)
        out = propagate_chain(terms, self.mode)
        return replace(out, subchains=dict(self.subchains))

    def report(self) -> str:
        w = max([len(t.name) for t in self.terms] + [8])
        lines = [f"{'name':<{w}}  {'value':>12}  {'rel_unc':>8}  source"]
        for t in self.terms:
            lines.append(f"{t.name:<{w}}  {t.value:>12.6g}  {t.rel_uncertainty:>8.4f}  {t.source}")
        lines.append(f"{'product':<{w}}  {self.product:>12.6g}  {self.rel_uncertainty:>8.4f}  ({self.mode})")
        lines.append(f"{'abs_unc':<{w}}  {self.abs_uncertainty:>12.6g}")
        lo, hi = self.interval
        lines.append(f"{'interval':<{w}}  [{lo:.6g}, {hi:.6g}]")
        return "\n".join(lines) + "\n"


def _exact_product(values) -> float:
    # exact rational product rounded once: independent of term order
    p = Fraction(1)
    for v in values:
        p *= Fraction(v)
    return float(p)


def propagate_chain(terms, mode: str = "quadrature") -> EfficiencyChain:
    """Product of the term values with first-order uncertainty.

    ``mode="quadrature"`` combines relative uncertainties as the root sum of
    squares (independent factors). ``mode="interval"`` reports the half-width
    of the min/max product interval, relative to the product. The min/max
    interval itself is always available as ``chain.interval``.
    """
    if mode not in ("quadrature", "interval"):
        raise ValueError("mode must be 'quadrature' or 'interval'")
    terms = tuple(terms)
    for t in terms:
        if not isinstance(t, EfficiencyTerm):
            raise TypeError("terms must be EfficiencyTerm instances")
    if not terms:
        return EfficiencyChain((), 1.0, 0.0, mode, (1.0, 1.0))

    prod = _exact_product(t.value for t in terms)
    lo = _exact_product(max(t.value * (1 - t.rel_uncertainty), 0.0) for t in terms)
    hi = _exact_product(min(t.value * (1 + t.rel_uncertainty), 1.0) for t in terms)
    if mode == "quadrature":
        rel = math.hypot(*(t.rel_uncertainty for t in terms))
    else:
        rel = 0.5 * (hi - lo) / prod if prod > 0 else 0.0
    return EfficiencyChain(terms, prod, rel, mode, (lo, hi))


def splitter_term(fraction: float = 0.5, name: str = "splitter") -> EfficiencyTerm:
    """Explicit beamsplitter port factor (not part of the default chains)."""
    return EfficiencyTerm(name, fraction, 0.0, "manual")


def chain_from_dict(data: dict, where: str = "chain") -> EfficiencyChain:
    reject_unknown(data, {"name", "mode", "term", "subchains"}, where)
    raw = data.get("term", [])
    if not isinstance(raw, list):
        raise ConfigError(f"{where}: 'term' must be an array of tables")
    terms = []
    for k, entry in enumerate(raw):
        reject_unknown(entry, {"name", "value", "rel_uncertainty", "source"}, f"{where}.term[{k}]")
        try:
            terms.append(
                EfficiencyTerm(
                    str(entry["name"]),
                    float(entry["value"]),
                    float(entry.get("rel_uncertainty", 0.0)),
                    str(entry.get("source", "manual")),
                )
            )
        except KeyError as exc:
            raise ConfigError(f"{where}.term[{k}]: missing {exc}") from None
        except ValueError as exc:
            raise ConfigError(f"{where}.term[{k}]: {exc}") from None
    names = [t.name for t in terms]
    if len(set(names)) != len(names):
        raise ConfigError(f"{where}: duplicate term names")
    subs = data.get("subchains", {})
    for key, members in subs.items():
        if not set(members) <= set(names):
            raise ConfigError(f"{where}.subchains.{key}: unknown terms {sorted(set(members) - set(names))}")
    try:
        chain = propagate_chain(terms, data.get("mode", "quadrature"))
    except ValueError as exc:
        raise ConfigError(f"{where}: {exc}") from None
    return replace(chain, subchains={k: tuple(v) for k, v in subs.items()})


def load_chain(path=DEVICE_CHAIN_CONFIG) -> EfficiencyChain:
    data = load_toml(path)
    data.pop("targets", None)  # acceptance bands, read by the command-line runner
    return chain_from_dict(data, str(path))
