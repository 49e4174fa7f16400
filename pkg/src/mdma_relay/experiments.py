"""Reproducible parameter sweeps and theory-vs-simulation validation."""

from __future__ import annotations

import csv
import dataclasses
import hashlib
import json
import math
from dataclasses import dataclass, replace

import numpy as np

from . import __version__
from .analytic import GatedExponential, decode_fail_probs, relay_sum_cdf, step_outages
from .markov import ChainSolution, solve_chain
from .oracles import relay_sum_cdf_quadrature
from .simulator import SCHEMES, SimOptions, simulate
from .topology import (
    ConfigError,
    NetworkTopology,
    SystemConfig,
    config_to_dict,
    link_rates,
    topology_to_dict,
)

SWEEPABLE = ("power_dbm", "eta", "granularity", "relay_count")
PUBLISH_MIN_TRIALS = 10_000
DEFAULT_POWER_GRID = tuple(float(p) for p in range(0, 31, 2))


@dataclass(frozen=True)
class SweepSpec:
    """One swept parameter, the schemes to run and the sampling budget."""

    parameter: str
    values: tuple
    schemes: tuple[str, ...]
    trials: int
    seed: int = 0

    def __post_init__(self):
        if self.parameter not in SWEEPABLE:
            raise ConfigError(f"parameter must be one of {SWEEPABLE}, got {self.parameter!r}")
        if not self.values:
            raise ConfigError("sweep grid must be nonempty")
        vals = tuple(self.values)
        if list(vals) != sorted(vals):
            raise ConfigError("sweep grid must be sorted")
        object.__setattr__(self, "values", vals)
        if not self.schemes:
            raise ConfigError("at least one scheme is required")
        object.__setattr__(self, "schemes", tuple(self.schemes))
        for s in self.schemes:
            if s not in SCHEMES:
                raise ConfigError(f"unknown scheme {s!r}; expected one of {SCHEMES}")
        if self.trials < 1:
            raise ConfigError("trials must be positive")

    @classmethod
    def from_dict(cls, doc: dict) -> "SweepSpec":
        try:
            return cls(
                parameter=doc["parameter"],
                values=tuple(doc["values"]),
                schemes=tuple(doc["schemes"]),
                trials=int(doc["trials"]),
                seed=int(doc.get("seed", 0)),
            )
        except KeyError as exc:
            raise ConfigError(f"sweep spec missing field {exc}") from exc


@dataclass
class ResultRow:
    """One (scheme, grid point) outcome; analytic fields stay empty for
    simulation-only baseline schemes."""

    scheme: str
    parameter: str
    value: float
    eta: float
    analytic_op: float | None
    sim_op: float | None
    sim_op_stderr: float | None
    analytic_tc: float | None
    sim_tc: float | None
    analytic_phi: float | None
    sim_phi: float | None
    sim_phi_stderr: float | None
    trials: int
    error: str = ""


CSV_COLUMNS = [f.name for f in dataclasses.fields(ResultRow)]


def _apply_parameter(
    topology: NetworkTopology, config: SystemConfig, parameter: str, value
) -> tuple[NetworkTopology, SystemConfig]:
    if parameter == "power_dbm":
        return topology, replace(config, power_dbm=float(value))
    if parameter == "eta":
        return topology, replace(config, eta=float(value))
    if parameter == "granularity":
        return topology, replace(config, granularity=int(value))
    if parameter == "relay_count":
        k = int(value)
        if not 1 <= k <= topology.num_relays:
            raise ConfigError(
                f"relay_count {k} outside 1..{topology.num_relays} available relays"
            )
        return replace(topology, relay_pos=topology.relay_pos[:k]), config
    raise ConfigError(f"unknown parameter {parameter!r}")


def analytic_solution(
    topology: NetworkTopology, config: SystemConfig, literal_personal1_wrap: bool = False
) -> ChainSolution:
    """Closed-form step outages, chain solution and scalar metrics."""
    outs = step_outages(topology, config)
    return solve_chain(
        outs,
        config.beta_s,
        config.beta_p,
        config.bandwidth_units,
        config.power_units,
        literal_personal1_wrap,
    )


def run_sweep(
    spec: SweepSpec,
    topology: NetworkTopology,
    config: SystemConfig,
    options: SimOptions = SimOptions(),
) -> list[ResultRow]:
    """Analytic values plus simulation estimates for every grid point and scheme."""
    rows: list[ResultRow] = []
    for gi, value in enumerate(spec.values):
        try:
            topo_v, cfg_v = _apply_parameter(topology, config, spec.parameter, value)
        except Exception as exc:
            for scheme in spec.schemes:
                rows.append(
                    ResultRow(
                        scheme, spec.parameter, float(value), config.eta,
                        None, None, None, None, None, None, None, None,
                        spec.trials, error=str(exc),
                    )
                )
            continue
        for scheme in spec.schemes:
            row = ResultRow(
                scheme=scheme,
                parameter=spec.parameter,
                value=float(value),
                eta=cfg_v.eta,
                analytic_op=None,
                sim_op=None,
                sim_op_stderr=None,
                analytic_tc=None,
                sim_tc=None,
                analytic_phi=None,
                sim_phi=None,
                sim_phi_stderr=None,
                trials=spec.trials,
            )
            try:
                if scheme == "mdma":
                    sol = analytic_solution(topo_v, cfg_v)
                    row.analytic_op = sol.overall_op
                    row.analytic_tc = sol.slot_cost
                    row.analytic_phi = sol.efficiency
                est = simulate(scheme, topo_v, cfg_v, spec.trials, seed=spec.seed + gi, options=options)
                row.sim_op = est.overall_op
                row.sim_op_stderr = est.overall_op_stderr
                row.sim_tc = est.tc_empirical
                row.sim_phi = est.phi_empirical
                row.sim_phi_stderr = est.phi_stderr
            except Exception as exc:
                row.error = str(exc)
            rows.append(row)
    return rows


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, float):
        if math.isnan(v):
            return "nan"
        return f"{v:.10g}"
    return str(v)


def write_rows_csv(path, rows: list[ResultRow]) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(CSV_COLUMNS)
        for row in rows:
            writer.writerow([_fmt(getattr(row, col)) for col in CSV_COLUMNS])


def run_manifest(
    spec: SweepSpec, topology: NetworkTopology, config: SystemConfig, options: SimOptions
) -> dict:
    """Reproducibility manifest: config hash, seed and versions."""
    doc = {
        "topology": topology_to_dict(topology),
        "system": config_to_dict(config),
        "sweep": {
            "parameter": spec.parameter,
            "values": list(spec.values),
            "schemes": list(spec.schemes),
            "trials": spec.trials,
            "seed": spec.seed,
        },
        "options": dataclasses.asdict(options),
    }
    blob = json.dumps(doc, sort_keys=True).encode()
    doc["config_sha256"] = hashlib.sha256(blob).hexdigest()
    doc["versions"] = {"mdma_relay": __version__, "numpy": np.__version__}
    return doc


# ---------------------------------------------------------------------------
# Validation: the automated theory-vs-simulation oracle suite.
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class CheckResult:
    name: str
    passed: bool
    measured: float
    threshold: float
    detail: str = ""


@dataclass(frozen=True)
class ValidationReport:
    checks: tuple[CheckResult, ...]

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def lines(self) -> list[str]:
        out = []
        for c in self.checks:
            status = "PASS" if c.passed else "FAIL"
            out.append(
                f"{status} {c.name}: measured {c.measured:.3e} vs threshold "
                f"{c.threshold:.3e}{' (' + c.detail + ')' if c.detail else ''}"
            )
        return out


def _sigma_gate(analytic: float, empirical: float, n: int, label: str, k: float = 3.0) -> CheckResult:
    sigma = math.sqrt(max(analytic * (1.0 - analytic), 0.0) / n) if n else math.inf
    dev = abs(analytic - empirical)
    # A zero-variance gate only passes on exact agreement.
    return CheckResult(label, dev <= k * sigma + 1e-15, dev, k * sigma)


def validate(
    topology: NetworkTopology,
    config: SystemConfig,
    trials: int = 1_000_000,
    seed: int = 0,
    options: SimOptions = SimOptions(),
) -> ValidationReport:
    """Run the full analytic-vs-numeric oracle suite and report per check."""
    checks: list[CheckResult] = []

    # Closed-form relay-sum CDF against the iterated-quadrature oracle.
    gamma_grid = np.linspace(0.2, 3.0, 8) * max(config.gamma_th, 1e-6)
    worst = 0.0
    for source in (1, 2):
        rates = link_rates(topology, config, source)
        fails = decode_fail_probs(topology, config, source)
        gates = [GatedExponential(a, r) for a, r in zip(fails, rates.relay_dest)]
        closed = relay_sum_cdf(gates)(gamma_grid)
        oracle = relay_sum_cdf_quadrature(gates, gamma_grid)
        worst = max(worst, float(np.max(np.abs(closed - oracle))))
    checks.append(CheckResult("relay_sum_cdf_vs_quadrature", worst < 1e-7, worst, 1e-7))

    # One simulation run feeds the remaining comparisons.
    outs = step_outages(topology, config)
    sol = solve_chain(outs, config.beta_s, config.beta_p, config.bandwidth_units, config.power_units)
    est = simulate("mdma", topology, config, trials, seed=seed, options=options)

    step_keys = sorted({f"{s.phase}:{'bcast' if s.step == 1 else 'relay'}" for s in sol.chain.states})
    for key in step_keys:
        phase, kind = key.split(":")
        analytic = outs.by_step(phase, 1 if kind == "bcast" else 2)
        stats = est.per_step[key]
        if stats.attempts == 0:
            continue
        checks.append(_sigma_gate(analytic, stats.op, stats.attempts, f"step_outage:{key}"))

    occ = est.occupancy
    dev = float(np.max(np.abs(occ - sol.stationary)))
    occ_tol = max(5e-3, 20.0 / math.sqrt(max(trials, 1)))
    checks.append(CheckResult("stationary_vs_occupancy", dev < occ_tol, dev, occ_tol))

    checks.append(_sigma_gate(sol.overall_op, est.overall_op, est.attempts, "overall_op_vs_frequency"))

    return ValidationReport(tuple(checks))
