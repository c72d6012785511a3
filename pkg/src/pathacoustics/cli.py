"""Command-line runner.

Subcommands::

    run <config>        full pipeline: base flow, evolution, split, sources, energy
    validate <config>   parse and check a config without running
    split <field>       split a vector AFLD field into <stem>.ua / <stem>.uv
    baseflow <config>   compute and store only the base flow

Config files are flat ``key = value`` text with ``#`` comments. Unknown keys
are errors. Exit status: 0 success, 1 invalid input, 2 runtime failure.
"""
from __future__ import annotations

import argparse
import csv
import dataclasses
import difflib
import math
import sys
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import afld
from .acoustics import compare_sources
from .baseflow import check_base_flow_properties, compute_base_flow, write_base_flow
from .diagnostics import conservation_drift, scale_separation
from .errors import ContractError
from .fields import TWO_PI, Grid, ScalarField, VectorField, random_bandlimited
from .perturbation import FLUX_MODES, PerturbationState, evolve, fluctuations_from_flow, max_stable_dt, residual_ma_re
from .scenarios import PROVIDER_KINDS, UniformPlusPlaneWave, impedance_check, ingest_manifest, make_provider
from .splitting import helmholtz_split, split_values


class ConfigError(ValueError):
    """Invalid configuration; carries one message per problem."""

    def __init__(self, errors: list[str]):
        super().__init__("; ".join(errors))
        self.errors = errors


class StageError(RuntimeError):
    def __init__(self, stage: str, exc: Exception):
        super().__init__(f"[{stage}] {type(exc).__name__}: {exc}")
        self.stage = stage


@dataclass
class RunConfig:
    scenario: str = "uniform_plus_plane_wave"
    dim: int = 2
    n: int = 64
    length: float = TWO_PI
    u0: tuple[float, ...] = (0.0, 0.0)
    rho0: float = 1.0
    c: float = 1.0
    p0: float | None = None
    amplitude: float = 0.0
    wave_mode: tuple[int, ...] = (1, 0)
    velocity_scale: float = 1.0
    omega: float = TWO_PI
    osc_amplitude: float = 0.1
    osc_period: float = 1.0
    manifest: str = ""
    mach: float = 0.0
    reynolds: float = math.inf
    tau: float | None = None
    dt: float | None = None
    baseflow_dt: float | None = None
    t_final: float = 1.0
    flux_mode: str = "upwind"
    outputs: str = "runs/out"
    sample_times: tuple[float, ...] | None = None
    n_samples: int = 5
    seed: int = 0
    vortical_amplitude: float = 0.0
    store_every: int = 10

    @property
    def grid(self) -> Grid:
        return Grid.square(self.n, self.length, self.dim)


FIELDS = {f.name: f for f in dataclasses.fields(RunConfig)}
_NONE = ("none", "auto", "")


def _parse_value(name: str, text: str):
    kind = str(FIELDS[name].type)
    text = text.strip()
    optional = "None" in kind
    if optional and text.lower() in _NONE:
        return None
    if kind.startswith("tuple"):
        item = int if "int" in kind else float
        parts = [p for p in text.replace(",", " ").split()]
        return tuple(item(p) for p in parts)
    if kind.startswith("int"):
        return int(text)
    if kind.startswith("float"):
        return float(text)
    return text


def _format_value(value) -> str:
    if value is None:
        return "none"
    if isinstance(value, tuple):
        return ", ".join(_format_value(v) for v in value)
    if isinstance(value, float):
        return repr(value)
    return str(value)


def parse_config(text: str) -> RunConfig:
    """Parse config text; raises ConfigError listing every problem."""
    errors, values = [], {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            errors.append(f"line {lineno}: expected 'key = value'")
            continue
        key, value = (s.strip() for s in line.split("=", 1))
        if key not in FIELDS:
            hint = difflib.get_close_matches(key, list(FIELDS), n=1)
            errors.append(f"unknown key '{key}'" + (f" (did you mean '{hint[0]}'?)" if hint else ""))
            continue
        if key in values:
            errors.append(f"duplicate key '{key}'")
            continue
        try:
            values[key] = _parse_value(key, value)
        except ValueError:
            errors.append(f"{key}: cannot parse {value!r}")
    if errors:
        raise ConfigError(errors)
    cfg = RunConfig(**values)
    problems = check_config(cfg)
    if problems:
        raise ConfigError(problems)
    return cfg


def format_config(cfg: RunConfig) -> str:
    return "".join(f"{name} = {_format_value(getattr(cfg, name))}\n" for name in FIELDS)


def check_config(cfg: RunConfig) -> list[str]:
    """Invariant checks; each message starts with the offending key."""
    errors = []

    def positive(name, allow_none=False):
        v = getattr(cfg, name)
        if v is None and allow_none:
            return
        if v is None or not v > 0:
            errors.append(f"{name}: must be positive, got {v}")

    if cfg.scenario not in PROVIDER_KINDS:
        hint = difflib.get_close_matches(cfg.scenario, list(PROVIDER_KINDS), n=1)
        errors.append(f"scenario: unknown kind '{cfg.scenario}'" + (f" (did you mean '{hint[0]}'?)" if hint else ""))
    if cfg.scenario == "snapshot_series" and not cfg.manifest:
        errors.append("manifest: required for snapshot_series")
    if cfg.dim not in (2, 3):
        errors.append(f"dim: must be 2 or 3, got {cfg.dim}")
    if cfg.n < 4 or cfg.n % 2:
        errors.append(f"n: must be even and >= 4, got {cfg.n}")
    for name in ("length", "rho0", "c", "osc_period", "t_final", "reynolds", "velocity_scale"):
        positive(name)
    for name in ("tau", "dt", "baseflow_dt", "p0"):
        positive(name, allow_none=True)
    for name in ("n_samples", "store_every"):
        if getattr(cfg, name) < 1:
            errors.append(f"{name}: must be >= 1")
    for name in ("mach", "amplitude", "vortical_amplitude", "seed"):
        if getattr(cfg, name) < 0:
            errors.append(f"{name}: must be >= 0")
    if cfg.flux_mode not in FLUX_MODES:
        errors.append(f"flux_mode: must be one of {FLUX_MODES}, got '{cfg.flux_mode}'")
    if cfg.tau is not None and cfg.t_final > cfg.tau * (1 + 1e-12):
        errors.append(f"t_final: must not exceed tau ({cfg.tau})")
    if cfg.sample_times is not None:
        st = np.asarray(cfg.sample_times)
        if len(st) < 1 or np.any(np.diff(st) <= 0) or np.any(st < 0):
            errors.append("sample_times: must be non-negative and strictly increasing")
    if len(cfg.u0) > cfg.dim or len(cfg.wave_mode) > cfg.dim:
        errors.append("u0/wave_mode: more components than dim")
    for name in ("u0", "length", "omega", "osc_amplitude", "amplitude", "t_final"):
        v = getattr(cfg, name)
        if any(not math.isfinite(x) for x in np.atleast_1d(v)):
            errors.append(f"{name}: must be finite")
    return errors


def load_config(path) -> RunConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError([f"cannot read {path}: {exc.strerror}"]) from exc
    cfg = parse_config(text)
    if cfg.manifest and not Path(cfg.manifest).is_absolute():
        cfg = dataclasses.replace(cfg, manifest=str(path.parent / cfg.manifest))
    return cfg


def validate(path) -> list[str]:
    """Empty list when the config is valid, else the error messages."""
    try:
        load_config(path)
    except ConfigError as exc:
        return exc.errors
    return []


def make_rng(seed: int) -> np.random.Generator:
    """Counter-based Philox stream keyed by the config seed."""
    return np.random.Generator(np.random.Philox(key=seed))


# ---------------------------------------------------------------------------
# pipeline


def build_provider(cfg: RunConfig):
    common = dict(c=cfg.c, mach=cfg.mach, reynolds=cfg.reynolds)
    kind = cfg.scenario
    if kind == "uniform_plus_plane_wave":
        return make_provider(kind, u0=cfg.u0, rho0=cfg.rho0, p0=cfg.p0, amplitude=cfg.amplitude, mode=cfg.wave_mode, **common)
    if kind == "taylor_green":
        return make_provider(kind, velocity_scale=cfg.velocity_scale, rho0=cfg.rho0, p0=cfg.p0, **common)
    if kind == "solid_rotation":
        return make_provider(kind, omega=cfg.omega, rho0=cfg.rho0, p0=cfg.p0, **common)
    if kind == "oscillating_uniform":
        return make_provider(kind, u0=cfg.u0, osc_amplitude=cfg.osc_amplitude, osc_period=cfg.osc_period,
                             rho0=cfg.rho0, p0=cfg.p0, **common)
    return ingest_manifest(cfg.manifest, **common)


def _horizon(cfg: RunConfig, provider) -> tuple[float, float]:
    t0 = provider.t_start
    if cfg.tau is not None:
        return t0, cfg.tau
    if math.isfinite(provider.t_end):
        return t0, provider.t_end - t0
    return t0, cfg.t_final


def _sample_times(cfg: RunConfig, t0: float, tau: float) -> list[float]:
    if cfg.sample_times is not None:
        return [t0 + t for t in cfg.sample_times]
    m = max(cfg.n_samples, 2)
    return list(np.linspace(t0, t0 + tau, m))


class _Stage:
    def __init__(self, name: str):
        self.name = name

    def __enter__(self):
        return self

    def __exit__(self, exc_type, exc, tb):
        if exc is not None and not isinstance(exc, (StageError, KeyboardInterrupt)):
            raise StageError(self.name, exc) from exc
        return False


def _write_rows(path: Path, header, rows) -> None:
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([v if isinstance(v, str) else repr(float(v)) for v in row])


def _base_flow_stage(cfg: RunConfig, out: Path):
    with _Stage("scenario"):
        provider = build_provider(cfg)
        grid = cfg.grid
    with _Stage("baseflow"):
        t0, tau = _horizon(cfg, provider)
        bf = compute_base_flow(provider, grid, tau, cfg.baseflow_dt, _sample_times(cfg, t0, tau))
        report = check_base_flow_properties(bf, provider)
        write_base_flow(bf, out / "baseflow")
        rows = [(k, v) for k, v in report.as_dict().items()]
        _write_rows(out / "baseflow.csv", ("quantity", "value"), rows)
    return provider, bf, report


def run(cfg: RunConfig) -> Path:
    """Execute the full pipeline and return the run directory."""
    out = Path(cfg.outputs)
    with _Stage("outputs"):
        out.mkdir(parents=True, exist_ok=True)
        (out / "config.echo").write_text(format_config(cfg))
    provider, bf, bf_report = _base_flow_stage(cfg, out)
    grid = bf.grid
    summary: dict[str, object] = {
        "scenario": cfg.scenario,
        "ma_over_re": residual_ma_re(provider),
        "p_bar": bf.p_bar,
        "rho_bar": bf.rho_bar,
    }
    for k, v in bf_report.as_dict().items():
        summary[f"baseflow_{k}"] = v
    if cfg.scenario in ("uniform_plus_plane_wave", "oscillating_uniform"):
        u0 = np.zeros(grid.dim)
        u0[: len(cfg.u0)] = cfg.u0
        summary["ubar_minus_u0_max"] = float(np.max(np.abs(bf.u_bar - u0.reshape(1, -1, *([1] * grid.dim)))))

    t0 = bf.times[0]
    with _Stage("perturbation"):
        snap = provider.sample(grid, t0)
        if isinstance(provider, UniformPlusPlaneWave):
            imp = impedance_check(provider, snap)
            summary["impedance"] = imp["impedance"]
            summary["impedance_max_ratio_error"] = imp["max_ratio_error"]
        state = fluctuations_from_flow(snap, bf)
        if cfg.vortical_amplitude > 0:
            raw = random_bandlimited(grid, make_rng(cfg.seed), kmax=4, components=grid.dim)
            _, solenoidal = split_values(raw, grid)
            solenoidal *= cfg.vortical_amplitude / max(np.max(np.abs(solenoidal)), 1e-300)
            state = state + PerturbationState.from_primitive(grid, np.zeros(grid.shape), solenoidal, bf.rho_bar, bf.c)
        dt = cfg.dt if cfg.dt is not None else max_stable_dt(bf, cfg.flux_mode)
        nsteps = max(1, math.ceil(cfg.t_final / dt - 1e-9))
        dt = cfg.t_final / nsteps
        traj = evolve(state, bf, dt, nsteps, t0=t0, mode=cfg.flux_mode, store_every=cfg.store_every)
        summary["steps"] = nsteps
        summary["dt"] = dt
        afld.write_field(out / "p_final.afld", ScalarField(grid, traj.states[-1].p_prime))

    with _Stage("diagnostics"):
        energy = conservation_drift(traj)
        energy.write_csv(out / "energy.csv")
        summary["energy_drift"] = energy.max_drift
        summary["energy_split_mismatch"] = float(np.max(energy.split_mismatch))
        scales = scale_separation(provider, bf, t0)
        for k, v in scales.as_dict().items():
            summary[f"scale_{k}"] = v

    with _Stage("splitting"):
        rows = []
        for t, s in zip(traj.times, traj.states):
            cert = helmholtz_split(VectorField(grid, s.u_prime)).certificates()
            rows.append((t, cert["curl_ua"], cert["div_uv"], cert["ua_max"], cert["uv_max"]))
        _write_rows(out / "split.csv", ("t", "curl_ua", "div_uv", "ua_max", "uv_max"), rows)
        final = helmholtz_split(VectorField(grid, traj.states[-1].u_prime))
        afld.write_field(out / "u_final.ua", final.u_a)
        afld.write_field(out / "u_final.uv", final.u_v)
        summary["split_curl_ua_max"] = max(r[1] for r in rows)
        summary["split_div_uv_max"] = max(r[2] for r in rows)

    with _Stage("acoustics"):
        cmp = compare_sources(provider, bf, cfg.t_final, t0=t0, store_every=cfg.store_every)
        cmp.write_csv(out / "sources.csv")
        summary["l2_true_vs_theorem1_max"] = float(np.max(cmp.l2_true_vs_theorem1))
        summary["l2_lighthill_vs_theorem1_max"] = float(np.max(cmp.l2_lighthill_vs_theorem1))
        summary["l2_true_vs_lighthill_max"] = float(np.max(cmp.l2_true_vs_lighthill))
        summary["phase_shift_final"] = float(cmp.phase_shift[-1])

    (out / "summary.txt").write_text("".join(f"{k} = {_format_value(v)}\n" for k, v in summary.items()))
    return out


def run_baseflow(cfg: RunConfig) -> Path:
    out = Path(cfg.outputs)
    out.mkdir(parents=True, exist_ok=True)
    (out / "config.echo").write_text(format_config(cfg))
    provider, bf, report = _base_flow_stage(cfg, out)
    lines = {"p_bar": bf.p_bar, "rho_bar": bf.rho_bar, "tau": bf.tau, **report.as_dict()}
    (out / "summary.txt").write_text("".join(f"{k} = {_format_value(float(v))}\n" for k, v in lines.items()))
    return out


def split_file(path, out_stem=None) -> dict:
    """Split a stored vector field; writes ``<stem>.ua`` and ``<stem>.uv``."""
    path = Path(path)
    field_ = afld.read_field(path)
    if not isinstance(field_, VectorField):
        raise ContractError(f"{path} holds a scalar field; split needs a vector field")
    result = helmholtz_split(field_)
    stem = Path(out_stem) if out_stem else path.with_suffix("")
    afld.write_field(stem.with_name(stem.name + ".ua"), result.u_a)
    afld.write_field(stem.with_name(stem.name + ".uv"), result.u_v)
    return result.certificates()


# ---------------------------------------------------------------------------
# entry point


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="pathacoustics", description="Pathline-averaged aeroacoustic splitting toolkit")
    sub = parser.add_subparsers(dest="command", required=True)
    p = sub.add_parser("run", help="run the full pipeline")
    p.add_argument("config")
    p.add_argument("--outputs", help="override the outputs directory")
    p = sub.add_parser("validate", help="check a config file")
    p.add_argument("config")
    p = sub.add_parser("split", help="split a vector AFLD field")
    p.add_argument("field")
    p.add_argument("--out", help="output stem (default: input path without suffix)")
    p = sub.add_parser("baseflow", help="compute only the base flow")
    p.add_argument("config")
    p.add_argument("--outputs", help="override the outputs directory")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "validate":
            errors = validate(args.config)
            if errors:
                for e in errors:
                    print(f"error: {e}", file=sys.stderr)
                return 1
            print("ok")
            return 0
        if args.command == "split":
            try:
                cert = split_file(args.field, args.out)
            except (afld.FieldFormatError, ContractError, OSError) as exc:
                print(f"error: {exc}", file=sys.stderr)
                return 1
            for k, v in cert.items():
                print(f"{k} = {v}")
            return 0
        cfg = load_config(args.config)
        if args.outputs:
            cfg = dataclasses.replace(cfg, outputs=args.outputs)
        out = run(cfg) if args.command == "run" else run_baseflow(cfg)
        print(out)
        return 0
    except ConfigError as exc:
        for e in exc.errors:
            print(f"error: {e}", file=sys.stderr)
        return 1
    except Exception as exc:  # noqa: BLE001 - report any pipeline failure with a status code
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
