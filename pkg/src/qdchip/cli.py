"""Command-line entry point: ``qdchip <subcommand> [--config PATH] ...``.

Every run writes its outputs, a plain-text report and ``manifest.json`` to
one directory. Exit codes: 0 all checks pass, 1 a check failed (or a
warning under ``--strict``), 2 configuration error, 3 runtime failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import math
import os
import sys
import tempfile
import time
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import __version__
from ._config import ConfigError, file_sha256, load_toml, reject_unknown
from .budget import DEVICE_CHAIN_CONFIG, EfficiencyChain, chain_from_dict
from .device import load_device, bundled_device
from .fdtd import FdtdError, default_cache_dir, set_threads, write_flux_csv
from .modes import coupler_model, fifty_fifty_length, ridge_effective_index, splitting_ratio, vertical_modes
from .photon_stats import DEVICE_SCENARIO, HbtScenario, InsufficientStatisticsError, scenario_from_dict, write_histogram_csv
from .scan import BUNDLED_SCAN, FitError, fit_dop, fit_loss, measured_overall_efficiency, read_polarization_csv, read_scan_csv, transmission
from .scenes import BETA_SCENE, ReferenceStore, run_scene, scene_from_dict
from .tmm import spectrum, stopband, write_spectrum_csv

log = logging.getLogger("qdchip")

EXIT_OK, EXIT_FAIL, EXIT_CONFIG, EXIT_RUNTIME = 0, 1, 2, 3
OUTPUT_ENV = "QDCHIP_OUTPUT_ROOT"
DATA = Path(__file__).parent / "data"

DEFAULT_CONFIGS = {
    "dbr": DATA / "dbr.toml",
    "modes": DATA / "modes.toml",
    "coupler": DATA / "coupler.toml",
    "fdtd": BETA_SCENE,
    "fit-loss": DATA / "fit_loss.toml",
    "fit-dop": DATA / "fit_dop.toml",
    "budget": DEVICE_CHAIN_CONFIG,
    "hbt": DEVICE_SCENARIO,
    "pipeline": DATA / "pipeline.toml",
}


class StageError(RuntimeError):
    def __init__(self, stage, exc):
        super().__init__(f"stage {stage!r} failed: {exc}")
        self.stage = stage
        self.exc = exc


def _fmt(v) -> str:
    if isinstance(v, str):
        return v
    if isinstance(v, (bool, np.bool_)):
        return str(bool(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return repr(float(v))


def _atomic_write(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
    with os.fdopen(fd, "w") as fh:
        fh.write(text)
    os.replace(tmp, path)


class Run:
    """Collects values, checks and warnings for one invocation."""

    def __init__(self, command: str, out: Path, config: Path, seed, strict: bool):
        self.command = command
        self.out = out
        self.config = config
        self.seed = seed
        self.strict = strict
        self.values: list[tuple[str, object]] = []
        self.checks: list[tuple[str, float, float, float, bool]] = []
        self.warnings: list[str] = []
        self.inputs: list[Path] = [config]
        self.files: list[str] = []
        self.stages: list[str] = []
        self.failed_stage = None

    def value(self, name, v):
        self.values.append((name, v))
        return v

    def check(self, name, v, lo, hi):
        ok = bool(lo <= v <= hi) if math.isfinite(v) else False
        self.checks.append((name, float(v), float(lo), float(hi), ok))
        return ok

    def warn(self, msg):
        log.warning(msg)
        self.warnings.append(msg)

    def output(self, name) -> Path:
        self.files.append(name)
        return self.out / name

    def write_text(self, name, text):
        _atomic_write(self.output(name), text)

    def report(self) -> str:
        lines = [f"# qdchip {self.command}"]
        if self.seed is not None:
            lines.append(f"seed = {self.seed}")
        for name, v in self.values:
            lines.append(f"{name} = {_fmt(v)}")
        for name, v, lo, hi, ok in self.checks:
            lines.append(f"check {name} = {_fmt(v)} in [{_fmt(lo)}, {_fmt(hi)}] {'PASS' if ok else 'FAIL'}")
        for w in self.warnings:
            lines.append(f"WARN {w}")
        return "\n".join(lines) + "\n"

    @property
    def passed(self) -> bool:
        return all(c[4] for c in self.checks) and not (self.strict and self.warnings)

    def manifest(self, status, exit_code, threads, elapsed) -> dict:
        return {
            "subcommand": self.command,
            "config": str(self.config),
            "config_sha256": file_sha256(self.config) if self.config.is_file() else None,
            "inputs": [str(p) for p in self.inputs],
            "output_dir": str(self.out),
            "outputs": self.files,
            "seed": self.seed,
            "version": __version__,
            "status": status,
            "exit_code": exit_code,
            "stages": self.stages,
            "failed_stage": self.failed_stage,
            "threads": threads,
            "elapsed_s": round(elapsed, 3),
        }


def _split_targets(cfg: dict, allowed: set, where: str) -> dict:
    t = cfg.pop("targets", {})
    for k, v in t.items():
        if k not in allowed:
            raise ConfigError(f"[{where}.targets]: unknown quantity {k!r}; known: {', '.join(sorted(allowed))}")
        if not (isinstance(v, list) and len(v) == 2):
            raise ConfigError(f"[{where}.targets].{k} must be [low, high]")
    return {k: (float(v[0]), float(v[1])) for k, v in t.items()}


def _apply_targets(run: Run, targets: dict, values: dict):
    for k, (lo, hi) in targets.items():
        run.check(k, values[k], lo, hi)


def _resolve(base: Path, p) -> Path:
    p = Path(p)
    return p if p.is_absolute() else base / p


def _device(cfg, base, run):
    if "device" in cfg:
        path = _resolve(base, cfg.pop("device"))
        run.inputs.append(path)
        return load_device(path)
    return bundled_device()


# --------------------------------------------------------------- subcommands


def cmd_dbr(cfg, base, run, args):
    targets = _split_targets(
        cfg, {"peak_wavelength_nm", "peak_reflectance", "design_reflectance", "stopband_width_nm"}, "dbr"
    )
    dev = _device(cfg, base, run)
    reject_unknown(cfg, {"structure", "start_nm", "stop_nm", "points", "angle_deg", "polarization"}, "dbr")
    structure = cfg.get("structure", "mirror")
    if structure not in ("mirror", "stack"):
        raise ConfigError("[dbr].structure must be 'mirror' or 'stack'")
    stack = dev.mirror if structure == "mirror" else dev.stack
    wl = np.linspace(float(cfg.get("start_nm", 800.0)), float(cfg.get("stop_nm", 1100.0)), int(cfg.get("points", 3001)))
    R, T = spectrum(stack, wl, float(cfg.get("angle_deg", 0.0)), cfg.get("polarization", "s"))
    write_spectrum_csv(run.output("spectrum.csv"), wl, R, T)
    # argmax would pick ripple on the flat top; use the stop-band centre
    center, width = stopband(wl, R)
    vals = {
        "peak_wavelength_nm": center,
        "stopband_width_nm": width,
        "peak_reflectance": float(R.max()),
        "design_reflectance": float(spectrum(stack, [dev.design_wavelength])[0][0]),
    }
    for name, v in vals.items():
        run.value(name, v)
    _apply_targets(run, targets, vals)


def cmd_modes(cfg, base, run, args):
    targets = _split_targets(cfg, {"vertical_neff", "lateral_mode_count"}, "modes")
    dev = _device(cfg, base, run)
    reject_unknown(cfg, {"wavelength_nm", "polarization"}, "modes")
    wl = float(cfg.get("wavelength_nm", 910.0))
    pol = cfg.get("polarization", "TE")
    vert = vertical_modes(dev.stack, wl, pol)
    lat = ridge_effective_index(dev.ridge, dev.stack, wl, pol)
    rows = ["section,order,n_eff"]
    rows += [f"vertical,{m.order},{_fmt(m.effective_index)}" for m in vert]
    rows += [f"lateral,{m.order},{_fmt(m.effective_index)}" for m in lat]
    run.write_text("modes.csv", "\n".join(rows) + "\n")
    vals = {"vertical_neff": vert[0].effective_index if vert else float("nan"), "lateral_mode_count": len(lat)}
    run.value("wavelength_nm", wl)
    for name, v in vals.items():
        run.value(name, v)
    _apply_targets(run, targets, vals)


def _coupler_table(dev, wavelengths, pol, length):
    rows = []
    for wl in wavelengths:
        m = coupler_model(dev.ridge, dev.stack, dev.coupler, wl, pol)
        s = splitting_ratio(length, m)
        rows.append((wl, m.beat_length, fifty_fifty_length(m), s.cross_fraction, s.through_fraction))
    return rows


def cmd_coupler(cfg, base, run, args):
    targets = _split_targets(cfg, {"fifty_fifty_length_um", "beat_length_um", "cross_fraction"}, "coupler")
    dev = _device(cfg, base, run)
    reject_unknown(cfg, {"wavelengths_nm", "polarization", "length_um", "report_wavelength_nm"}, "coupler")
    wls = [float(w) for w in cfg.get("wavelengths_nm", [890.0, 900.0, 910.0, 920.0, 930.0])]
    length = float(cfg.get("length_um", dev.coupler.coupler_length))
    rows = _coupler_table(dev, wls, cfg.get("polarization", "TE"), length)
    lines = ["wavelength_nm,beat_length_um,fifty_fifty_length_um,cross,through"]
    lines += [",".join(_fmt(v) for v in r) for r in rows]
    run.write_text("coupler.csv", "\n".join(lines) + "\n")
    wl0 = float(cfg.get("report_wavelength_nm", 910.0))
    if wl0 not in wls:
        raise ConfigError("[coupler].report_wavelength_nm must be one of wavelengths_nm")
    r = rows[wls.index(wl0)]
    vals = {"beat_length_um": r[1], "fifty_fifty_length_um": r[2], "cross_fraction": r[3]}
    run.value("wavelength_nm", wl0)
    run.value("length_um", length)
    for name, v in vals.items():
        run.value(name, v)
    _apply_targets(run, targets, vals)


def _reference_store():
    return ReferenceStore(default_cache_dir() / "references")


def _scene_values(res, wl0):
    wls = list(np.asarray(res.wavelengths))
    k = int(np.argmin(np.abs(np.asarray(wls) - wl0)))
    if hasattr(res, "beta"):
        return {"beta": float(res.beta[k]), "beta_flux": float(res.beta_flux[k])}, k
    return {"facet_fraction": float(res.fraction[k])}, k


def cmd_fdtd(cfg, base, run, args):
    targets = _split_targets(cfg, {"beta", "beta_flux", "facet_fraction"}, "fdtd")
    spec = scene_from_dict(cfg, base, "fdtd")
    if spec.device_path is not None:
        run.inputs.append(spec.device_path)
    res = run_scene(spec, _reference_store(), threads=args.threads)
    if res is not None and getattr(getattr(res, "run", None), "converged", True) is False:
        run.warn("FDTD run stopped at max_time before the decay criterion")
    if spec.scene == "beta":
        lines = ["wavelength_nm,beta,beta_flux,box_power"]
        lines += [",".join(_fmt(v) for v in r) for r in zip(res.wavelengths, res.beta, res.beta_flux, res.box_power)]
        run.write_text("beta.csv", "\n".join(lines) + "\n")
        for f in res.run.fluxes:
            write_flux_csv(run.output(f"flux_{f.monitor.replace(':', '_')}.csv"), f)
    else:
        lines = ["wavelength_nm,fraction,transmitted,incident"]
        lines += [",".join(_fmt(v) for v in r) for r in zip(res.wavelengths, res.fraction, res.transmitted, res.incident)]
        run.write_text("facet.csv", "\n".join(lines) + "\n")
    vals, _ = _scene_values(res, spec.wavelength)
    run.value("scene", spec.scene)
    run.value("wavelength_nm", spec.wavelength)
    for name, v in vals.items():
        run.value(name, v)
    _apply_targets(run, {k: v for k, v in targets.items() if k in vals}, vals)


def _loss_values(cfg, base, run):
    reject_unknown(cfg, {"data", "arms", "weighted", "distance_um", "alpha_override"}, "fit-loss")
    path = _resolve(base, cfg["data"]) if "data" in cfg else BUNDLED_SCAN
    run.inputs.append(path)
    data = read_scan_csv(path)
    arms = tuple(cfg.get("arms", ["a"]))
    weights = data.intensity / data.intensity.max() if cfg.get("weighted", False) else None
    fit = fit_loss(data, arms, weights)
    alpha = float(cfg["alpha_override"]) if "alpha_override" in cfg else fit.alpha
    d = float(cfg.get("distance_um", 915.0))
    t = transmission(alpha, d)
    if fit.n_points < 10:
        run.warn(f"loss fit uses only {fit.n_points} points")
    return fit, alpha, d, t


def cmd_fit_loss(cfg, base, run, args):
    targets = _split_targets(cfg, {"alpha_db_per_um", "transmission", "attenuation"}, "fit-loss")
    fit, alpha, d, t = _loss_values(cfg, base, run)
    run.write_text("loss_fit.txt", fit.report())
    vals = {"alpha_db_per_um": alpha, "transmission": t, "attenuation": 1.0 - t}
    run.value("alpha_db_per_um", alpha)
    run.value("stderr", fit.alpha_stderr)
    run.value("n_points", fit.n_points)
    run.value("distance_um", d)
    run.value("transmission", t)
    run.value("attenuation", 1.0 - t)
    _apply_targets(run, targets, vals)


def cmd_fit_dop(cfg, base, run, args):
    targets = _split_targets(cfg, {"dop"}, "fit-dop")
    reject_unknown(cfg, {"data"}, "fit-dop")
    if "data" not in cfg:
        raise ConfigError("[fit-dop] needs 'data' (polarization CSV)")
    path = _resolve(base, cfg["data"])
    run.inputs.append(path)
    res = fit_dop(read_polarization_csv(path))
    run.write_text(
        "dop_fit.txt",
        f"dop = {_fmt(res.dop)}\nangle_deg = {_fmt(res.angle)}\namplitude = {_fmt(res.amplitude)}\n"
        f"offset = {_fmt(res.offset)}\nrms_residual = {_fmt(res.rms_residual)}\n",
    )
    run.value("dop", res.dop)
    run.value("angle_deg", res.angle)
    _apply_targets(run, targets, {"dop": res.dop})


def _chain_targets(cfg):
    t = cfg.pop("targets", {})
    out = {}
    for k, v in t.items():
        if not (isinstance(v, list) and len(v) == 2):
            raise ConfigError(f"[targets].{k} must be [low, high]")
        out[k] = (float(v[0]), float(v[1]))
    return out


def _report_chain(run: Run, chain: EfficiencyChain, targets: dict, prefix=""):
    run.value(f"{prefix}product", chain.product)
    run.value(f"{prefix}rel_uncertainty", chain.rel_uncertainty)
    run.value(f"{prefix}interval_low", chain.interval[0])
    run.value(f"{prefix}interval_high", chain.interval[1])
    vals = {"product": chain.product}
    for name in chain.subchains:
        sub = chain.subchain(name)
        run.value(f"{prefix}{name}", sub.product)
        run.value(f"{prefix}{name}_rel_uncertainty", sub.rel_uncertainty)
        vals[name] = sub.product
    unknown = set(targets) - set(vals)
    if unknown:
        raise ConfigError(f"[targets]: unknown quantity {sorted(unknown)}")
    for k, (lo, hi) in targets.items():
        run.check(f"{prefix}{k}", vals[k], lo, hi)


def cmd_budget(cfg, base, run, args):
    targets = _chain_targets(cfg)
    chain = chain_from_dict(cfg, "budget")
    run.write_text("budget.txt", chain.report())
    lines = ["name,value,rel_uncertainty,source"] + [
        f"{t.name},{_fmt(t.value)},{_fmt(t.rel_uncertainty)},{t.source}" for t in chain.terms
    ]
    run.write_text("budget.csv", "\n".join(lines) + "\n")
    _report_chain(run, chain, targets)


def _run_hbt(scen: HbtScenario, run: Run, targets: dict, threads, prefix=""):
    res, hist = scen.run(threads=threads)
    write_histogram_csv(run.output(f"{prefix}histogram.csv"), hist)
    if res.clipped:
        run.warn("g2_raw fell below the accidental floor; corrected value clipped to 0")
    vals = {"g2_raw": res.g2_raw, "g2_corrected": res.g2_corrected}
    for k in ("rate_a", "rate_b"):
        run.value(prefix + k, res.extra[k])
    run.value(prefix + "rho_a", res.rho_a)
    run.value(prefix + "rho_b", res.rho_b)
    run.value(prefix + "g2_raw", res.g2_raw)
    run.value(prefix + "g2_raw_stderr", res.stderr)
    run.value(prefix + "g2_corrected", res.g2_corrected)
    run.value(prefix + "g2_corrected_stderr", res.stderr_corrected)
    for k, (lo, hi) in targets.items():
        run.check(prefix + k, vals[k], lo, hi)
    return res


def cmd_hbt(cfg, base, run, args):
    targets = _split_targets(cfg, {"g2_raw", "g2_corrected"}, "hbt")
    if args.seed is not None:
        cfg["seed"] = args.seed
    scen = scenario_from_dict(cfg, "hbt")
    run.seed = scen.seed
    _run_hbt(scen, run, targets, args.threads)


# ------------------------------------------------------------------ pipeline

_PIPELINE_TARGETS = {
    "fifty_fifty_length_um",
    "beta_fdtd",
    "alpha_db_per_um",
    "attenuation",
    "on_chip_efficiency",
    "overall_efficiency",
    "measured_efficiency_low",
    "measured_efficiency_high",
    "g2_corrected",
}


def _stage(run: Run, name, fn):
    run.stages.append(name)
    log.info("stage %s", name)
    try:
        return fn()
    except ConfigError:
        raise
    except Exception as exc:
        run.failed_stage = name
        raise StageError(name, exc) from exc


def _load_ref(base, ref, run):
    path = _resolve(base, ref)
    run.inputs.append(path)
    return load_toml(path), path.parent


def cmd_pipeline(cfg, base, run, args):
    targets = _split_targets(cfg, _PIPELINE_TARGETS, "pipeline")
    reject_unknown(cfg, {"seed", "device", "wavelength_nm", "qd_distance_um", "beta_from_fdtd", "stages", "measured"}, "pipeline")
    stages = cfg.get("stages", {})
    reject_unknown(stages, {"coupler", "fdtd", "fit_loss", "budget", "hbt"}, "pipeline.stages")
    for key in ("coupler", "fdtd", "fit_loss", "budget", "hbt"):
        if key not in stages:
            raise ConfigError(f"[pipeline.stages] needs '{key}'")
    seed = int(args.seed if args.seed is not None else cfg.get("seed", 0))
    run.seed = seed
    dev = _device(cfg, base, run)
    wl = float(cfg.get("wavelength_nm", 910.0))
    qd_distance = float(cfg.get("qd_distance_um", 915.0))
    measured = cfg.get("measured", {})
    reject_unknown(measured, {"rep_rate_hz", "rates_cps", "dark_cps"}, "pipeline.measured")

    # parse all referenced configs before running anything
    coupler_cfg, _ = _load_ref(base, stages["coupler"], run)
    coupler_cfg.pop("targets", None)
    scene_cfg, scene_base = _load_ref(base, stages["fdtd"], run)
    scene_cfg.pop("targets", None)
    scene = scene_from_dict(scene_cfg, scene_base, "pipeline.fdtd")
    if scene.scene != "beta":
        raise ConfigError("[pipeline.stages].fdtd must reference a beta scene")
    loss_cfg, loss_base = _load_ref(base, stages["fit_loss"], run)
    loss_cfg.pop("targets", None)
    chain_cfg, _ = _load_ref(base, stages["budget"], run)
    chain_cfg.pop("targets", None)
    chain = chain_from_dict(chain_cfg, "pipeline.budget")
    for name in ("beta", "transmission"):
        chain.term(name)
    if "on_chip" not in chain.subchains:
        raise ConfigError("pipeline budget chain needs an 'on_chip' subchain")
    hbt_cfg, _ = _load_ref(base, stages["hbt"], run)
    hbt_cfg.pop("targets", None)
    hbt_cfg["seed"] = seed
    scen = scenario_from_dict(hbt_cfg, "pipeline.hbt")

    def modes():
        vert = vertical_modes(dev.stack, wl, "TE")
        lat = ridge_effective_index(dev.ridge, dev.stack, wl, "TE")
        run.value("vertical_neff", vert[0].effective_index)
        run.value("lateral_mode_count", len(lat))

    def coupler():
        m = coupler_model(dev.ridge, dev.stack, dev.coupler, wl, coupler_cfg.get("polarization", "TE"))
        run.value("beat_length_um", m.beat_length)
        return run.value("fifty_fifty_length_um", fifty_fifty_length(m))

    def fdtd():
        res = run_scene(scene, threads=args.threads)
        if not res.run.converged:
            run.warn("FDTD run stopped at max_time before the decay criterion")
        vals, _ = _scene_values(res, wl)
        run.value("beta_fdtd_flux", vals["beta_flux"])
        return run.value("beta_fdtd", vals["beta"])

    def loss():
        fit, alpha, d, t = _loss_values({**loss_cfg, "distance_um": qd_distance}, loss_base, run)
        run.value("alpha_db_per_um", alpha)
        run.value("alpha_stderr", fit.alpha_stderr)
        run.value("transmission", t)
        run.value("attenuation", 1.0 - t)
        return alpha, t

    def budget(beta, t):
        c = chain.with_value("transmission", t, source="scan-fit")
        if cfg.get("beta_from_fdtd", False):
            c = c.with_value("beta", min(max(beta, 0.0), 1.0), source="fdtd")
        run.value("beta_in_budget", c.term("beta").value)
        run.value("on_chip_efficiency", c.subchain("on_chip").product)
        run.value("overall_efficiency", c.product)
        run.value("overall_rel_uncertainty", c.rel_uncertainty)
        return c

    def measured_eff():
        rep = float(measured.get("rep_rate_hz", 66e6))
        rates = measured.get("rates_cps", [700.0, 1000.0])
        darks = measured.get("dark_cps", [50.0, 60.0])
        effs = [measured_overall_efficiency(r, d, rep) for r, d in zip(rates, darks)]
        run.value("measured_efficiency_low", min(effs))
        run.value("measured_efficiency_high", max(effs))
        return min(effs), max(effs)

    def hbt(c):
        # the chain gives the detection probability per emitted photon at each port
        dets = []
        for det, split in zip(scen.detectors, (scen.cross, scen.through)):
            eff = c.product / split if split > 0 else 0.0
            if eff > 1:
                raise ValueError("budgeted efficiency exceeds what the splitter allows")
            dets.append(replace(det, efficiency=eff))
        return _run_hbt(replace(scen, detectors=tuple(dets)), run, {}, args.threads, prefix="hbt_")

    _stage(run, "modes", modes)
    l5050 = _stage(run, "coupler", coupler)
    beta = _stage(run, "fdtd", fdtd)
    alpha, t = _stage(run, "fit_loss", loss)
    c = _stage(run, "budget", lambda: budget(beta, t))
    lo, hi = _stage(run, "measured", measured_eff)
    g2 = _stage(run, "hbt", lambda: hbt(c))
    run.write_text("budget.txt", c.report())

    vals = {
        "fifty_fifty_length_um": l5050,
        "beta_fdtd": beta,
        "alpha_db_per_um": alpha,
        "attenuation": 1.0 - t,
        "on_chip_efficiency": c.subchain("on_chip").product,
        "overall_efficiency": c.product,
        "measured_efficiency_low": lo,
        "measured_efficiency_high": hi,
        "g2_corrected": g2.g2_corrected,
    }
    _apply_targets(run, targets, vals)


COMMANDS = {
    "dbr": (cmd_dbr, "TMM reflectance spectrum of the mirror or full stack"),
    "modes": (cmd_modes, "vertical and lateral guided modes"),
    "coupler": (cmd_coupler, "beat length, 50/50 length and splitting ratio"),
    "fdtd": (cmd_fdtd, "2D FDTD scene (dipole coupling or facet transmission)"),
    "fit-loss": (cmd_fit_loss, "propagation loss from an intensity-vs-distance scan"),
    "fit-dop": (cmd_fit_dop, "degree of polarization from an analyzer scan"),
    "budget": (cmd_budget, "efficiency chain with uncertainties"),
    "hbt": (cmd_hbt, "cross-correlation Monte Carlo and g2 estimation"),
    "pipeline": (cmd_pipeline, "end-to-end reproduction of the device numbers"),
}


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="qdchip", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"qdchip {__version__}")
    sub = p.add_subparsers(dest="command", required=True)
    for name, (_, help_) in COMMANDS.items():
        sp = sub.add_parser(name, help=help_)
        sp.add_argument("--config", type=Path, help="TOML config (default: bundled example)")
        sp.add_argument("--out", type=Path, help=f"output directory (default: ${OUTPUT_ENV}/<command>)")
        sp.add_argument("--seed", type=int, help="override the config seed")
        sp.add_argument("--threads", type=int, default=None, help="worker threads")
        sp.add_argument("--strict", action="store_true", help="treat warnings as failures")
        sp.add_argument("-v", "--verbose", action="store_true")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    config = (args.config or DEFAULT_CONFIGS[args.command]).resolve()
    root = Path(os.environ.get(OUTPUT_ENV, "qdchip-runs"))
    out = (args.out or root / args.command).resolve()
    run = Run(args.command, out, config, args.seed, args.strict)
    out.mkdir(parents=True, exist_ok=True)
    fn = COMMANDS[args.command][0]
    t0 = time.perf_counter()
    status, code = "ok", EXIT_OK
    try:
        cfg = load_toml(config)
        if args.threads:
            set_threads(args.threads)
        fn(cfg, config.parent, run, args)
        if not run.passed:
            status, code = "failed-checks", EXIT_FAIL
    except (ConfigError, FileNotFoundError) as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        status, code = "config-error", EXIT_CONFIG
    except (StageError, FdtdError, FitError, InsufficientStatisticsError, ArithmeticError, ValueError) as exc:
        print(f"runtime error: {exc}", file=sys.stderr)
        status, code = "runtime-error", EXIT_RUNTIME
    except Exception as exc:  # noqa: BLE001 - any stage failure maps to exit 3
        print(f"runtime error: {type(exc).__name__}: {exc}", file=sys.stderr)
        status, code = "runtime-error", EXIT_RUNTIME
    report = run.report()
    _atomic_write(out / "report.txt", report)
    _atomic_write(
        out / "manifest.json",
        json.dumps(run.manifest(status, code, args.threads, time.perf_counter() - t0), indent=2) + "\n",
    )
    if code in (EXIT_OK, EXIT_FAIL):
        sys.stdout.write(report)
    return code


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
