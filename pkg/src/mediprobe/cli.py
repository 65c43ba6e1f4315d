"""Config-driven experiment runner.

    mediprobe run CONFIG [--out DIR] [--seed N] [--shots N] [--cutoff N]
    mediprobe validate CONFIG

Configs are INI files with one section per parameter record, e.g.::

    [experiment]
    kind = figure3
    seed = 0

    [model]
    omega_p = 100
    omega_a = 70
"""
from __future__ import annotations

import argparse
import configparser
import json
import math
import sys
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Any, Optional

import numpy as np

from . import __version__
from .dynamics import IntegratorFailure, TimeSeries, TimeUnit, evolve, record
from .experiments import FIG4_SYSTEM, ConvergenceError, converged, figure3, ion_check
from .hilbert import (
    CutoffTooSmall,
    Operator,
    QState,
    fock_state,
    tensor,
    thermal_state,
)
from .models import (
    IonParams,
    ModelParams,
    collective_decay_generator,
    dispersive_hamiltonian,
    thermal_bath_generator,
    tripartite_hamiltonian,
)
from .shorttime import (
    DerivativeReport,
    ProbeState,
    bath_third_derivative_shift,
    QubitDensity,
    estimate_derivatives,
    heisenberg_derivatives,
    probe_excited_projector,
    sample_projection_noise,
    second_derivative_collective,
    second_derivative_dispersive,
    second_derivative_resonant,
    third_derivative_bath_correction,
)
from .tomography import (
    measure_exact,
    probe_inversion_sweep,
    reconstruct,
    reconstruction_result,
    write_sweep_csv,
)

KINDS = ("simulate", "derivatives", "reconstruct", "sweep", "figure3", "figure4", "ion-check")
HAMILTONIANS = ("tripartite", "dispersive", "zero", "collective")

SCHEMA: dict[str, dict[str, type]] = {
    "experiment": {"kind": str, "seed": int, "shots": int, "out": str},
    "model": {
        "omega_p": float, "omega_s": float, "omega_a": float, "g_p": float, "g_s": float,
        "gamma": float, "collective_rate": float, "nbar_a": float, "nbar_b": float,
        "phi": float, "cutoff": int, "delta": float, "hamiltonian": str,
    },
    "ion": {
        "rabi": float, "eta": float, "trap_freq": float, "detuning": float, "phase": float,
        "cutoff": int, "etas": str, "samples": int,
    },
    "probe": {"phi": float, "alpha_re": float, "alpha_im": float, "beta_re": float,
              "beta_im": float, "delta_p": float},
    "mediator": {"thermal": float, "fock": int},
    "system": {"rho11": float, "rho12_re": float, "rho12_im": float},
    "grid": {"t_max": float, "samples": int, "unit": str},
    "fit": {"degree": int, "window_lo": float, "window_hi": float},
    "sweep": {"delta_p_min": float, "delta_p_max": float, "points": int,
              "dispersive_detuning": float},
    "figure3": {"delta": float, "samples_per_period": int, "periods": float, "omega": float},
}


class ConfigError(ValueError):
    pass


@dataclass
class ExperimentConfig:
    kind: str
    values: dict[str, dict[str, Any]]
    source: str = "<config>"
    seed: int = 0
    shots: Optional[int] = None
    out: Optional[str] = None

    def section(self, name: str) -> dict[str, Any]:
        return self.values.get(name, {})

    def get(self, section: str, key: str, default=None):
        return self.section(section).get(key, default)

    def require(self, section: str, key: str):
        if key not in self.section(section):
            raise ConfigError(f"{self.source}: missing required key [{section}] {key}")
        return self.values[section][key]

    def resolved(self) -> dict:
        out = {s: dict(sorted(v.items())) for s, v in sorted(self.values.items())}
        out.setdefault("experiment", {})
        out["experiment"].update({"kind": self.kind, "seed": self.seed, "shots": self.shots})
        out["experiment"].pop("out", None)
        return out


def _convert(source: str, section: str, key: str, raw: str, typ: type):
    try:
        if typ is int:
            return int(raw)
        if typ is float:
            return float(raw)
        return raw.strip()
    except ValueError:
        raise ConfigError(f"{source}: [{section}] {key} = {raw!r} is not a valid {typ.__name__}") from None


def parse_config(text: str, source: str = "<config>") -> ExperimentConfig:
    parser = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#", ";"))
    try:
        parser.read_string(text, source=source)
    except configparser.Error as exc:
        raise ConfigError(str(exc)) from None
    values: dict[str, dict[str, Any]] = {}
    for section in parser.sections():
        if section not in SCHEMA:
            raise ConfigError(f"{source}: unknown section [{section}]")
        values[section] = {}
        for key, raw in parser.items(section):
            if key not in SCHEMA[section]:
                raise ConfigError(f"{source}: unknown key [{section}] {key}")
            values[section][key] = _convert(source, section, key, raw, SCHEMA[section][key])
    exp = values.get("experiment", {})
    if "kind" not in exp:
        raise ConfigError(f"{source}: missing required key [experiment] kind")
    if exp["kind"] not in KINDS:
        raise ConfigError(f"{source}: [experiment] kind = {exp['kind']!r}; expected one of {', '.join(KINDS)}")
    ham = values.get("model", {}).get("hamiltonian")
    if ham is not None and ham not in HAMILTONIANS:
        raise ConfigError(f"{source}: [model] hamiltonian = {ham!r}; expected one of {', '.join(HAMILTONIANS)}")
    unit = values.get("grid", {}).get("unit")
    if unit is not None and unit not in {u.value for u in TimeUnit}:
        raise ConfigError(f"{source}: [grid] unit = {unit!r} is not a known time unit")
    return ExperimentConfig(exp["kind"], values, source, exp.get("seed", 0), exp.get("shots"), exp.get("out"))


def load_config(path: str | Path) -> ExperimentConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    return parse_config(text, str(path))


# ---------------------------------------------------------------- builders


def model_params(cfg: ExperimentConfig) -> ModelParams:
    kw = {k: v for k, v in cfg.section("model").items() if k != "hamiltonian"}
    try:
        return ModelParams(**kw)
    except ValueError as exc:
        raise ConfigError(f"{cfg.source}: [model] {exc}") from None


def ion_params(cfg: ExperimentConfig) -> IonParams:
    kw = {k: v for k, v in cfg.section("ion").items() if k not in ("etas", "samples")}
    kw.setdefault("rabi", 0.005)
    kw.setdefault("eta", 0.05)
    try:
        return IonParams(**kw)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{cfg.source}: [ion] {exc}") from None


def probe_state(cfg: ExperimentConfig) -> ProbeState:
    sec = cfg.section("probe")
    try:
        if any(k in sec for k in ("alpha_re", "alpha_im", "beta_re", "beta_im")):
            return ProbeState(
                complex(sec.get("alpha_re", 0.0), sec.get("alpha_im", 0.0)),
                complex(sec.get("beta_re", 0.0), sec.get("beta_im", 0.0)),
            )
        return ProbeState.from_inversion(sec.get("delta_p", 0.0), sec.get("phi", 0.0))
    except ValueError as exc:
        raise ConfigError(f"{cfg.source}: [probe] {exc}") from None


def system_density(cfg: ExperimentConfig) -> QubitDensity:
    rho11 = cfg.require("system", "rho11")
    try:
        return QubitDensity(
            rho11, 1 - rho11, complex(cfg.get("system", "rho12_re", 0.0), cfg.get("system", "rho12_im", 0.0))
        )
    except ValueError as exc:
        raise ConfigError(f"{cfg.source}: [system] {exc}") from None


def mediator_state(cfg: ExperimentConfig, cutoff: int) -> QState:
    sec = cfg.section("mediator")
    if "thermal" in sec and "fock" in sec:
        raise ConfigError(f"{cfg.source}: [mediator] give either thermal or fock, not both")
    if "fock" in sec:
        return fock_state(sec["fock"], cutoff)
    nbar = sec.get("thermal", cfg.get("model", "nbar_a", 0.0))
    return thermal_state(nbar, cutoff)


def _hamiltonian_kind(cfg: ExperimentConfig) -> str:
    return cfg.get("model", "hamiltonian", "tripartite")


def _unit_and_scale(cfg: ExperimentConfig, p: ModelParams, kind: str) -> tuple[TimeUnit, float]:
    if kind == "collective":
        default = TimeUnit.TAU_GAMMA
    elif kind == "dispersive":
        default = TimeUnit.TAU_EFF
    else:
        default = TimeUnit.TAU
    unit = TimeUnit(cfg.get("grid", "unit", default.value))
    scale = {
        TimeUnit.TAU: p.g_p,
        TimeUnit.TAU_EFF: p.g_p**2 / p.delta if p.delta else float("nan"),
        TimeUnit.TAU_GAMMA: p.collective_rate,
        TimeUnit.LAB: 1.0,
    }[unit]
    if not (scale > 0 and math.isfinite(scale)):
        raise ConfigError(f"{cfg.source}: [grid] unit {unit.value} needs a nonzero rate in [model]")
    return unit, scale


def build_model(cfg: ExperimentConfig, cutoff: int):
    """(Hamiltonian, generator or None, initial state, params) for the configured model."""
    p = model_params(cfg).replace(cutoff=cutoff)
    kind = _hamiltonian_kind(cfg)
    probe = probe_state(cfg).qstate()
    system = system_density(cfg).qstate()
    if kind == "collective":
        h0, gen = collective_decay_generator(p)
        return h0, gen, tensor(probe, system), p
    rho0 = tensor(probe, mediator_state(cfg, cutoff), system)
    if kind == "zero":
        h = Operator.zero(rho0.layout)
    elif kind == "dispersive":
        h = dispersive_hamiltonian(p)
    else:
        h = tripartite_hamiltonian(p)
    gen = thermal_bath_generator(p) if p.gamma > 0 else None
    return h, gen, rho0, p


# ---------------------------------------------------------------- runners


def _write_json(path: Path, obj) -> None:
    path.write_text(json.dumps(obj, sort_keys=True, indent=2, allow_nan=True) + "\n", encoding="utf-8")


def _cutoff(cfg: ExperimentConfig, default: int) -> int:
    return int(cfg.get("model", "cutoff", default))


def _simulate_series(cfg: ExperimentConfig, cutoff: int) -> TimeSeries:
    h, gen, rho0, p = build_model(cfg, cutoff)
    unit, scale = _unit_and_scale(cfg, p, _hamiltonian_kind(cfg))
    t_max = cfg.require("grid", "t_max")
    samples = cfg.require("grid", "samples")
    tau = np.linspace(0.0, t_max, samples)
    e = probe_excited_projector(rho0.layout)
    method = "adaptive" if gen is not None else "spectral"
    traj = evolve(h, rho0, tau / scale, gen, method=method, time_scale=scale, unit=unit,
                  observables=[e], store_states=False)
    return record(traj, e)


def run_simulate(cfg: ExperimentConfig, out: Path, manifest: dict) -> None:
    if _hamiltonian_kind(cfg) == "collective":
        series = _simulate_series(cfg, _cutoff(cfg, 30))
        manifest["cutoff"] = None
    else:
        series_vals, cutoff, diff = converged(
            lambda n: _simulate_series(cfg, n).values, _cutoff(cfg, 30)
        )
        series = _simulate_series(cfg, cutoff)
        manifest.update(cutoff=cutoff, cutoff_check_diff=diff)
    if cfg.shots:
        series = sample_projection_noise(series, cfg.shots, cfg.seed)
    series.to_csv(out / "timeseries.csv")


def _closed_forms(cfg: ExperimentConfig, p: ModelParams) -> dict:
    kind = _hamiltonian_kind(cfg)
    probe = probe_state(cfg)
    rho_s = system_density(cfg)
    if kind == "collective":
        return {2: second_derivative_collective(rho_s, probe.phi)}
    if kind == "dispersive":
        return {2: second_derivative_dispersive(rho_s, p, TimeUnit.TAU_EFF)}
    if kind == "tripartite":
        return {2: second_derivative_resonant(rho_s, probe, p)}
    return {}


def _bath_shift(cfg: ExperimentConfig, p: ModelParams) -> Optional[dict]:
    """Both bath terms of the third derivative; they disagree, see README."""
    if _hamiltonian_kind(cfg) != "tripartite" or p.gamma == 0:
        return None
    probe = probe_state(cfg)
    d2 = second_derivative_resonant(system_density(cfg), probe, p)
    return {
        "closed_form_term": third_derivative_bath_correction(probe, p),
        "exact_shift": bath_third_derivative_shift(probe, p, d2),
    }


def run_derivatives(cfg: ExperimentConfig, out: Path, manifest: dict) -> None:
    kind = _hamiltonian_kind(cfg)

    def exact(n: int) -> np.ndarray:
        h, gen, rho0, p = build_model(cfg, n)
        _, scale = _unit_and_scale(cfg, p, kind)
        return np.array(heisenberg_derivatives(rho0, h, gen, 3, scale))

    if kind == "collective":
        values, cutoff = exact(2), None
    else:
        values, cutoff, diff = converged(exact, _cutoff(cfg, 30))
        manifest["cutoff_check_diff"] = diff
    manifest["cutoff"] = cutoff
    h, gen, rho0, p = build_model(cfg, cutoff or 2)
    unit, _ = _unit_and_scale(cfg, p, kind)
    reports = {"exact": DerivativeReport(dict(enumerate(map(float, values))), "exact-adjoint", unit=unit.value)}
    forms = _closed_forms(cfg, p)
    if forms:
        reports["closed_form"] = DerivativeReport(forms, "closed-form", unit=unit.value)
    if "grid" in cfg.values:
        series = _simulate_series(cfg, cutoff or 2)
        if cfg.shots:
            series = sample_projection_noise(series, cfg.shots, cfg.seed)
        series.to_csv(out / "timeseries.csv")
        window = None
        if "window_hi" in cfg.section("fit"):
            window = (cfg.get("fit", "window_lo", 0.0), cfg.get("fit", "window_hi"))
        reports["fit"] = estimate_derivatives(
            series, cfg.get("fit", "degree", 4), window,
            rwa_step=p.g_p / p.omega_p if p.omega_p else None,
        )
    body = {"reports": {k: v.to_json() for k, v in reports.items()}}
    shift = _bath_shift(cfg, p)
    if shift is not None:
        body["bath_shift"] = shift
    _write_json(out / "derivatives.json", body)


def run_reconstruct(cfg: ExperimentConfig, out: Path, manifest: dict) -> None:
    p = model_params(cfg)
    rho_s = system_density(cfg)
    probe = probe_state(cfg)
    detuning = cfg.get("sweep", "dispersive_detuning", 30.0)

    def estimate(n: int) -> np.ndarray:
        m = measure_exact(rho_s, p.replace(cutoff=n), probe.delta_p, detuning)
        r = reconstruct(m, p)
        return np.array([r.rho11, r.rho12.real, r.rho12.imag])

    _, cutoff, diff = converged(estimate, p.cutoff)
    manifest.update(cutoff=cutoff, cutoff_check_diff=diff)
    pc = p.replace(cutoff=cutoff)
    m = measure_exact(rho_s, pc, probe.delta_p, detuning)
    result = reconstruction_result(reconstruct(m, pc), rho_s, probe.delta_p)
    _write_json(out / "reconstruction.json", {
        "measurements": asdict(m),
        "result": result.to_json(),
    })


def _sweep_grid(cfg: ExperimentConfig) -> np.ndarray:
    lo = cfg.get("sweep", "delta_p_min", -0.2)
    hi = cfg.get("sweep", "delta_p_max", 0.2)
    n = cfg.get("sweep", "points", 41)
    grid = np.linspace(lo, hi, n)
    if not np.any(np.isclose(grid, 0.0, atol=1e-15)):
        grid = np.sort(np.append(grid, 0.0))
    return np.round(grid, 12)


def run_sweep(cfg: ExperimentConfig, out: Path, manifest: dict, figure: bool = False) -> None:
    p = model_params(cfg)
    if figure:
        p = p.replace(nbar_a=cfg.get("model", "nbar_a", 1.0), cutoff=cfg.get("model", "cutoff", 40))
        system = QubitDensity.from_pure(*FIG4_SYSTEM)
    else:
        system = system_density(cfg)
    grid = _sweep_grid(cfg)
    detuning = cfg.get("sweep", "dispersive_detuning", 30.0)

    def infid(n: int) -> np.ndarray:
        rows = probe_inversion_sweep(system, grid, p.replace(cutoff=n), detuning)
        return np.array([r.infidelity for r in rows])

    _, cutoff, diff = converged(infid, p.cutoff)
    manifest.update(cutoff=cutoff, cutoff_check_diff=diff)
    write_sweep_csv(probe_inversion_sweep(system, grid, p.replace(cutoff=cutoff), detuning), out / "sweep.csv")


def run_figure3(cfg: ExperimentConfig, out: Path, manifest: dict) -> None:
    nbar = cfg.get("model", "nbar_a", 1.0)
    delta = cfg.get("figure3", "delta", 30.0)
    kw = dict(
        delta=delta, nbar_a=nbar,
        omega=cfg.get("figure3", "omega", 100.0),
        samples_per_period=cfg.get("figure3", "samples_per_period", 40),
        periods=cfg.get("figure3", "periods", 2.0),
        degree=cfg.get("fit", "degree", 4),
        window=(cfg.get("fit", "window_lo", 0.0), cfg.get("fit", "window_hi", 0.3)),
        shots=cfg.shots, seed=cfg.seed,
    )
    _, cutoff, diff = converged(lambda n: figure3(cutoff=n, **kw).series_ab_initio.values, _cutoff(cfg, 30))
    manifest.update(cutoff=cutoff, cutoff_check_diff=diff)
    res = figure3(cutoff=cutoff, **kw)
    res.series_ab_initio.to_csv(out / "timeseries.csv")
    res.series_effective.to_csv(out / "timeseries_effective.csv")
    if res.series_shots is not None:
        res.series_shots.to_csv(out / "timeseries_effective_shots.csv")
    _write_json(out / "derivatives.json", {
        "reports": {k: v.to_json() for k, v in res.reports.items()},
        "summary": res.summary,
    })


def run_ion_check(cfg: ExperimentConfig, out: Path, manifest: dict) -> None:
    ip = ion_params(cfg)
    etas = [float(x) for x in str(cfg.get("ion", "etas", f"{ip.eta}, 0.15")).split(",")]
    samples = cfg.get("ion", "samples", 400)
    summary = {}
    for i, eta in enumerate(etas):
        run = lambda n: ion_check(eta, ip.rabi, ip.trap_freq, n, samples=samples)  # noqa: E731
        res, cutoff, diff = converged(lambda n: run(n).full.values, ip.cutoff, tol=1e-6, step=5)
        result = run(cutoff)
        suffix = "" if i == 0 else f"_eta{eta:g}"
        result.full.to_csv(out / f"timeseries{suffix}.csv")
        result.jaynes_cummings.to_csv(out / f"timeseries_jc{suffix}.csv")
        summary[f"{eta:g}"] = {
            "max_deviation": result.max_deviation,
            "norm_drift": result.norm_drift,
            "cutoff": cutoff,
            "cutoff_check_diff": diff,
        }
    _write_json(out / "ion_check.json", summary)


RUNNERS = {
    "simulate": run_simulate,
    "derivatives": run_derivatives,
    "reconstruct": run_reconstruct,
    "sweep": run_sweep,
    "figure4": lambda c, o, m: run_sweep(c, o, m, figure=True),
    "figure3": run_figure3,
    "ion-check": run_ion_check,
}


def run(cfg: ExperimentConfig, out: str | Path) -> int:
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    manifest = {"config": cfg.resolved(), "version": __version__, "seed": cfg.seed, "kind": cfg.kind}
    RUNNERS[cfg.kind](cfg, out, manifest)
    _write_json(out / "run-manifest.json", manifest)
    return 0


# ---------------------------------------------------------------- validation


def validate(cfg: ExperimentConfig) -> list[str]:
    """Dry-run checks; lines starting with 'error' make the config unusable."""
    lines = [f"config: parsed ({cfg.kind})"]
    kind = cfg.kind
    try:
        p = model_params(cfg)
    except ConfigError as exc:
        return lines + [f"error: {exc}"]
    required = {
        "simulate": [("grid", "t_max"), ("grid", "samples"), ("system", "rho11")],
        "derivatives": [("system", "rho11")],
        "reconstruct": [("system", "rho11")],
        "sweep": [("system", "rho11")],
    }.get(kind, [])
    for section, key in required:
        if key not in cfg.section(section):
            lines.append(f"error: missing required key [{section}] {key}")
    try:
        probe_state(cfg)
    except ConfigError as exc:
        lines.append(f"error: {exc}")

    if kind == "figure3":
        nbar = cfg.get("model", "nbar_a", 1.0)
        delta = cfg.get("figure3", "delta", 30.0)
        g = p.g_p
        cutoff = _cutoff(cfg, 30)
    else:
        nbar = cfg.get("mediator", "thermal", p.nbar_a)
        delta, g = p.delta, p.g_p
        cutoff = _cutoff(cfg, 40 if kind == "figure4" else 30)
    if kind == "figure4":
        nbar = cfg.get("model", "nbar_a", 1.0)

    if kind != "ion-check" and _hamiltonian_kind(cfg) != "collective":
        try:
            thermal_state(nbar, cutoff)
            tail = (nbar / (1 + nbar)) ** cutoff if nbar > 0 else 0.0
            lines.append(f"cutoff: OK (thermal tail {tail:.2e} at N={cutoff})")
        except CutoffTooSmall as exc:
            lines.append(f"error: cutoff too small: {exc}")

    if kind == "figure3" or _hamiltonian_kind(cfg) == "dispersive":
        ratio = abs(delta) / (g * math.sqrt(nbar + 1)) if delta else 0.0
        status = "OK" if ratio >= 10 else "WARNING"
        lines.append(f"dispersive: {status} (delta/g*sqrt(nbar+1) = {ratio:.1f})")

    if "grid" in cfg.values and "t_max" in cfg.section("grid") and "samples" in cfg.section("grid"):
        unit = cfg.get("grid", "unit", "tau")
        samples = cfg.get("grid", "samples")
        step = cfg.get("grid", "t_max") / max(samples - 1, 1)
        if unit == TimeUnit.TAU.value and p.omega_p > 0:
            limit = p.g_p / p.omega_p
            if step < limit * (1 - 1e-9):
                lines.append(
                    f"warning: sampling step {step:.3g} is below g_p/omega_p = {limit:.3g}; "
                    "the rotating-wave model does not resolve such short intervals"
                )
            else:
                lines.append(f"sampling: OK (step {step:.3g} >= g_p/omega_p = {limit:.3g})")
    return lines


def main(argv: Optional[list[str]] = None) -> int:
    ap = argparse.ArgumentParser(prog="mediprobe", description=__doc__.split("\n")[0])
    sub = ap.add_subparsers(dest="command", required=True)
    r = sub.add_parser("run", help="run an experiment config")
    r.add_argument("config")
    r.add_argument("--out", help="output directory")
    r.add_argument("--seed", type=int)
    r.add_argument("--shots", type=int)
    r.add_argument("--cutoff", type=int, help="override the Fock cutoff")
    v = sub.add_parser("validate", help="dry-run a config and report physical validity")
    v.add_argument("config")
    args = ap.parse_args(argv)

    try:
        cfg = load_config(args.config)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2

    if args.command == "validate":
        lines = validate(cfg)
        print("\n".join(lines))
        return 1 if any(l.startswith("error") for l in lines) else 0

    if args.seed is not None:
        cfg.seed = args.seed
    if args.shots is not None:
        cfg.shots = args.shots
    if args.cutoff is not None:
        cfg.values.setdefault("model", {})["cutoff"] = args.cutoff
    out = args.out or cfg.out or "out"
    try:
        return run(cfg, out)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (IntegratorFailure, ConvergenceError, CutoffTooSmall) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
