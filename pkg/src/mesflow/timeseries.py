"""Sequential snapshot solves over a profile range."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

from mesflow import electrical
from mesflow.graph import MultiEnergyNetwork
from mesflow.io import ProfileSet
from mesflow.scenario import operating_point_at
from mesflow.solver import SolveOptions, SolveReport, nr_solve

logger = logging.getLogger(__name__)


@dataclass
class SeriesResult:
    reports: list[SolveReport] = field(default_factory=list)
    cold_restarts: list[int] = field(default_factory=list)  # steps where the warm start failed

    @property
    def all_converged(self) -> bool:
        return all(r.converged for r in self.reports)

    @property
    def mean_iterations(self) -> float:
        return sum(r.iterations for r in self.reports) / max(len(self.reports), 1)


def step_range(profiles: ProfileSet, start: str | None = None, stop: str | None = None) -> range:
    """Inclusive timestamp range as profile row indices."""
    first = profiles.index_of(start) if start else 0
    last = profiles.index_of(stop) if stop else profiles.n_steps - 1
    if last < first:
        raise ValueError(f"empty time range: {start} .. {stop}")
    return range(first, last + 1)


def run_timeseries(network: MultiEnergyNetwork, profiles: ProfileSet, steps=None,
                   options: SolveOptions | None = None, warm_start: bool = True) -> SeriesResult:
    """Solve every step; with warm start each step begins at the previous solution.

    A step that fails from the warm start is retried from a flat start.
    Non-converged steps are recorded and the run continues.
    """
    missing = profiles.missing_columns(network)
    if missing:
        raise KeyError(f"profile columns missing: {', '.join(missing)}")
    steps = range(profiles.n_steps) if steps is None else steps
    adm = electrical.build_admittance(network.electricity, network.base_mva) if network.electricity else None
    result = SeriesResult()
    previous = None
    for k in steps:
        op = operating_point_at(network, profiles, k)
        report = nr_solve(network, op, options, warm_start=previous, admittance=adm)
        if not report.converged and previous is not None:
            logger.info("step %s: warm start failed, retrying cold", op.timestamp)
            result.cold_restarts.append(k)
            report = nr_solve(network, op, options, admittance=adm)
        if not report.converged:
            logger.warning("step %s did not converge: %s", op.timestamp, report.final_norms)
        result.reports.append(report)
        if warm_start and report.converged:
            previous = report.final_state.x
    return result
