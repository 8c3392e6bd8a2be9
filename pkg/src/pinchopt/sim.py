"""Monte Carlo power sweeps for the three uplink schemes.

Scheme ``a`` places the pinching antennas with :func:`epsilon_sweep` and
allocates resources with the configured method; scheme ``b`` uses the same
placement with an equal split; scheme ``c`` is the fixed edge-mounted array
with the configured allocation.  Every trial draws one scenario from its own
random substream and reuses it across powers and schemes, so curves are
paired trial by trial.
"""

from __future__ import annotations

import csv
import dataclasses
import json
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from pinchopt.allocation import allocate, conventional_profile, equal_allocation, gain_profile
from pinchopt.channel import PhysicalParams, Scenario, fixed_layout
from pinchopt.placement import PlacementSolution, SCAConfig, epsilon_sweep

log = logging.getLogger(__name__)

SCHEMES = ("a", "b", "c")
ALLOC_METHODS = ("bisection", "closed_form")
RECORD_HEADER = ("trial", "scheme", "power_dbm", "min_rate_bps_hz", "status")
AGGREGATE_HEADER = ("scheme", "power_dbm", "mean_min_rate", "stderr")
TRACE_HEADER = ("eps", "k", "t", "max_phase_residual", "min_spacing")


class ConfigError(ValueError):
    """Invalid simulation configuration."""


@dataclass
class SimConfig:
    """Simulation parameters; defaults follow the reference setup.

    ``fc`` is in GHz, lengths in metres, powers in dBm.  ``D_y`` is the full
    width, so devices have ``y`` in ``[-D_y/2, D_y/2]``.  ``tol_feas``,
    ``tol_gap`` and ``max_iters`` are passed to every conic solve.
    """

    M: int = 2
    N: int = 2
    D_x: float = 30.0
    D_y: float = 10.0
    d: float = 3.0
    fc: float = 28.0
    noise_dbm: float = -90.0
    n_e: float = 1.4
    delta_in_wavelengths: float = 0.5
    eps_min: float = 0.1
    eps_max: float = 0.5
    eps_steps: int = 5
    K_SCA: int = 10
    power_dbm_grid: list = field(default_factory=lambda: [float(p) for p in range(0, 21, 2)])
    trials: int = 100
    seed: int = 0
    schemes: list = field(default_factory=lambda: list(SCHEMES))
    alloc_method: str = "bisection"
    tol_feas: float = 1e-8
    tol_gap: float = 1e-8
    max_iters: int = 200

    def __post_init__(self):
        self.alloc_method = str(self.alloc_method).replace("-", "_")
        self.power_dbm_grid = [float(p) for p in self.power_dbm_grid]
        self.schemes = [str(s) for s in self.schemes]
        self.validate()

    def validate(self) -> None:
        if self.M < 1 or self.N < 1:
            raise ConfigError("M and N must be >= 1")
        if not (self.D_x > 0 and self.D_y > 0 and self.d > 0):
            raise ConfigError("D_x, D_y and d must be positive")
        if not (self.fc > 0 and self.n_e > 0 and self.delta_in_wavelengths > 0):
            raise ConfigError("fc, n_e and delta_in_wavelengths must be positive")
        if not (0 < self.eps_min <= self.eps_max) or self.eps_steps < 1:
            raise ConfigError("need 0 < eps_min <= eps_max and eps_steps >= 1")
        if self.K_SCA < 1:
            raise ConfigError("K_SCA must be >= 1")
        if not self.power_dbm_grid:
            raise ConfigError("power_dbm_grid is empty")
        if self.trials < 1:
            raise ConfigError("trials must be >= 1")
        if not (0 <= int(self.seed) < 2**64):
            raise ConfigError("seed must be a 64-bit unsigned integer")
        if not self.schemes or any(s not in SCHEMES for s in self.schemes):
            raise ConfigError(f"schemes must be a non-empty subset of {SCHEMES}")
        if not (self.tol_feas > 0 and self.tol_gap > 0) or self.max_iters < 1:
            raise ConfigError("solver tolerances must be positive and max_iters >= 1")
        if self.alloc_method not in ALLOC_METHODS:
            raise ConfigError(f"alloc_method must be one of {ALLOC_METHODS}")
        if self.N * self.physical_params().spacing > self.D_x:
            raise ConfigError("N antennas at the required spacing do not fit on the waveguide")

    @classmethod
    def from_dict(cls, data: dict) -> "SimConfig":
        names = {f.name for f in dataclasses.fields(cls)}
        unknown = sorted(set(data) - names)
        if unknown:
            raise ConfigError(f"unknown config keys: {', '.join(unknown)}")
        try:
            return cls(**data)
        except TypeError as exc:
            raise ConfigError(str(exc)) from exc

    @classmethod
    def from_json(cls, path) -> "SimConfig":
        try:
            data = json.loads(Path(path).read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        if not isinstance(data, dict):
            raise ConfigError("config must be a JSON object")
        return cls.from_dict(data)

    def replace(self, **changes) -> "SimConfig":
        return SimConfig.from_dict({**dataclasses.asdict(self), **changes})

    def physical_params(self) -> PhysicalParams:
        return PhysicalParams.from_carrier(self.fc * 1e9, self.n_e, self.noise_dbm, self.delta_in_wavelengths)

    def sca_config(self) -> SCAConfig:
        return SCAConfig(eps_grid=tuple(np.linspace(self.eps_min, self.eps_max, self.eps_steps)), k_sca=self.K_SCA,
                         tol_feas=self.tol_feas, tol_gap=self.tol_gap, max_iters=self.max_iters)

    @property
    def reference_power(self) -> float:
        """Mid-grid power at which positions are optimized."""
        return 0.5 * (min(self.power_dbm_grid) + max(self.power_dbm_grid))


@dataclass
class TrialRecord:
    trial: int
    scheme: str
    power_dbm: float
    min_rate: float
    rates: np.ndarray
    q: np.ndarray
    layout: np.ndarray
    status: str = "ok"


def trial_rng(seed: int, trial: int) -> np.random.Generator:
    """PCG64 stream for one trial, derived from ``(seed, trial)`` only."""
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(int(seed), spawn_key=(int(trial),))))


def draw_scenario(config: SimConfig, rng: np.random.Generator) -> Scenario:
    """``M`` devices uniform over ``[0, D_x] x [-D_y/2, D_y/2]``."""
    x = rng.uniform(0.0, config.D_x, config.M)
    y = rng.uniform(-config.D_y / 2, config.D_y / 2, config.M)
    return Scenario(np.column_stack([x, y]), config.N, config.D_x, config.D_y, config.d, config.physical_params())


def run_scheme(scenario: Scenario, scheme: str, power_dbm: float, config: SimConfig,
               placement: PlacementSolution | None = None, trial: int = 0) -> TrialRecord:
    """Evaluate one scheme at one power.

    Schemes ``a`` and ``b`` reuse ``placement`` when given (it only depends
    on the geometry), otherwise they optimize the positions here.
    """
    sc = scenario.with_power(power_dbm)
    status = "ok"
    if scheme in ("a", "b"):
        if placement is None:
            placement = epsilon_sweep(sc, config.sca_config())
        status = placement.status
        layout = placement.layout
        gamma = gain_profile(sc, layout)
        res = allocate(gamma, config.alloc_method) if scheme == "a" else equal_allocation(gamma)
    elif scheme == "c":
        layout = fixed_layout(sc.n_antennas, sc.height, sc.params.spacing)
        res = allocate(conventional_profile(sc, layout), config.alloc_method)
    else:
        raise ConfigError(f"unknown scheme {scheme!r}")
    return TrialRecord(trial, scheme, float(power_dbm), res.min_rate, res.rates, res.q,
                       layout.x_coords.copy(), status)


def _failed(trial, scheme, power, n):
    nan = np.full(n, np.nan)
    return TrialRecord(trial, scheme, float(power), math.nan, nan, nan, nan, "failed")


def run_trial(config: SimConfig, trial: int) -> tuple[list[TrialRecord], list[dict]]:
    """All (scheme, power) records of one trial plus its SCA trace."""
    trace: list[dict] = []
    try:
        scenario = draw_scenario(config, trial_rng(config.seed, trial))
        placement = None
        if "a" in config.schemes or "b" in config.schemes:
            placement = epsilon_sweep(scenario.with_power(config.reference_power), config.sca_config(), trace)
    except Exception as exc:  # one bad trial must not sink the sweep
        log.warning("trial %d failed during placement: %s", trial, exc)
        return [_failed(trial, s, p, config.M) for s in config.schemes for p in config.power_dbm_grid], trace
    records = []
    for scheme in config.schemes:
        for power in config.power_dbm_grid:
            try:
                records.append(run_scheme(scenario, scheme, power, config, placement, trial))
            except Exception as exc:
                log.warning("trial %d scheme %s at %g dBm failed: %s", trial, scheme, power, exc)
                records.append(_failed(trial, scheme, power, config.M))
    return records, trace


def _run_trial_star(args):
    return run_trial(*args)


def sweep(config: SimConfig, jobs: int = 1, trace_dir=None) -> tuple[list[TrialRecord], list[tuple]]:
    """Run every trial; returns the records in trial order and the aggregate rows.

    ``jobs > 1`` spreads trials over processes.  Results are gathered in
    trial order, so the output does not depend on scheduling.
    """
    work = [(config, t) for t in range(config.trials)]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_run_trial_star, work))
    else:
        results = [run_trial(*w) for w in work]
    records = [r for recs, _ in results for r in recs]
    if trace_dir is not None:
        trace_dir = Path(trace_dir)
        trace_dir.mkdir(parents=True, exist_ok=True)
        for t, (_, trace) in enumerate(results):
            write_trace(trace, trace_dir / f"trial_{t:05d}.csv")
    return records, aggregate(records, config)


def aggregate(records: list[TrialRecord], config: SimConfig | None = None) -> list[tuple]:
    """Mean min rate and its standard error per (scheme, power), failed trials excluded."""
    groups: dict[tuple, list[float]] = {}
    for r in records:
        groups.setdefault((r.scheme, r.power_dbm), [])
        if r.status != "failed":
            groups[(r.scheme, r.power_dbm)].append(r.min_rate)
    order = sorted(groups, key=lambda k: (SCHEMES.index(k[0]) if k[0] in SCHEMES else len(SCHEMES), k[1]))
    rows = []
    for key in order:
        vals = np.asarray(groups[key])
        mean = float(vals.mean()) if vals.size else math.nan
        stderr = float(vals.std(ddof=1) / math.sqrt(vals.size)) if vals.size > 1 else math.nan
        rows.append((key[0], key[1], mean, stderr))
    return rows


def _fmt(value) -> str:
    if isinstance(value, (float, np.floating)):
        return format(float(value), ".17g")
    return str(value)


def _write_rows(path, header, rows) -> None:
    path = Path(path)
    with path.open("w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([_fmt(v) for v in row])


def aggregate_path(path) -> Path:
    path = Path(path)
    return path.with_name(f"{path.stem}_aggregate{path.suffix or '.csv'}")


def emit_csv(records: list[TrialRecord], path, aggregate_rows: list[tuple] | None = None) -> Path | None:
    """Write the per-trial table to ``path``; the aggregate goes next to it when given.

    Floats are written with 17 significant digits so they parse back to the
    same doubles.
    """
    _write_rows(path, RECORD_HEADER, ((r.trial, r.scheme, r.power_dbm, r.min_rate, r.status) for r in records))
    if aggregate_rows is None:
        return None
    agg = aggregate_path(path)
    _write_rows(agg, AGGREGATE_HEADER, aggregate_rows)
    return agg


def read_records(path) -> list[tuple]:
    """Parse a per-trial CSV back to ``(trial, scheme, power_dbm, min_rate, status)`` tuples."""
    with Path(path).open(encoding="utf-8", newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows or tuple(rows[0]) != RECORD_HEADER:
        raise ValueError(f"{path}: unexpected header")
    return [(int(t), s, float(p), float(r), st) for t, s, p, r, st in rows[1:]]


def write_trace(trace: list[dict], path) -> None:
    _write_rows(path, TRACE_HEADER, ([rec[k] for k in TRACE_HEADER] for rec in trace))
