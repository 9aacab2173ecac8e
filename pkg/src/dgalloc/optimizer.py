"""Siting/sizing optimization: decision encoding, penetration-exact repair,
expected-loss objective over a state set, and global-best PSO.

Search positions are continuous vectors with one coordinate per
(candidate bus, kind) pair. Before every evaluation a position is repaired
onto the discrete capacity grid so that per-kind totals match the
penetration targets exactly; the voltage band is handled with a weighted
static penalty, and feasible candidates always dominate infeasible ones in
best-position comparisons.
"""

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .dgmodels import (
    DG_KINDS,
    DgUnit,
    PvModuleParams,
    WindTurbineParams,
    pv_output_fraction,
    wind_output_fraction,
)
from .network import Network, VoltageLimits
from .powerflow import SweepSettings, solve_states
from .stochastic import StateSet

# "+infinity-like" fitness assigned when any state fails to converge; finite
# so reports stay valid strict JSON
LOSS_SENTINEL_KW = 1e12


class InfeasibleSpecError(ValueError):
    """Penetration targets cannot be met on the candidate grid."""


class InvalidAllocationError(ValueError):
    """An externally supplied allocation violates the grid or the targets."""


@dataclass(frozen=True)
class PenetrationSpec:
    """Installed-capacity targets per kind, in kW (met exactly by repair)."""

    wind_kw: float = 400.0
    solar_kw: float = 200.0
    biomass_kw: float = 600.0

    def __post_init__(self):
        for name in ("wind_kw", "solar_kw", "biomass_kw"):
            value = getattr(self, name)
            if not math.isfinite(value) or value < 0.0:
                raise ValueError(f"{name} must be finite and non-negative")

    @property
    def total_kw(self) -> float:
        return self.wind_kw + self.solar_kw + self.biomass_kw

    def kw_for(self, kind: str) -> float:
        return {"wind": self.wind_kw, "solar": self.solar_kw, "biomass": self.biomass_kw}[kind]

    @classmethod
    def from_percentages(
        cls,
        wind_pct: float,
        solar_pct: float,
        biomass_pct: float,
        base_load_kw: float,
        step_kw: float = 25.0,
    ) -> "PenetrationSpec":
        """Targets as percentages of a declared base load, rounded to the step."""

        def to_kw(pct):
            return round(pct / 100.0 * base_load_kw / step_kw) * step_kw

        return cls(
            wind_kw=to_kw(wind_pct),
            solar_kw=to_kw(solar_pct),
            biomass_kw=to_kw(biomass_pct),
        )


@dataclass(frozen=True)
class CandidateGrid:
    """Per-kind candidate buses plus the discrete sizing grid.

    Decision vectors are laid out kind-by-kind in DG_KINDS order, candidate
    buses ascending within each kind.
    """

    wind: tuple
    solar: tuple
    biomass: tuple
    step_kw: float = 25.0
    per_bus_max_kw: float = 100.0

    def __post_init__(self):
        if self.step_kw <= 0.0:
            raise ValueError("step must be positive")
        if self.per_bus_max_kw <= 0.0:
            raise ValueError("per-bus maximum must be positive")
        if abs(self.per_bus_max_kw / self.step_kw - round(self.per_bus_max_kw / self.step_kw)) > 1e-9:
            raise ValueError("per-bus maximum must be a multiple of the step")
        for kind in DG_KINDS:
            buses = self.buses_for(kind)
            if list(buses) != sorted(set(buses)):
                raise ValueError(f"{kind} candidates must be sorted and unique")

    @classmethod
    def all_non_slack(
        cls, network: Network, step_kw: float = 25.0, per_bus_max_kw: float = 100.0
    ) -> "CandidateGrid":
        buses = tuple(sorted(int(b.id) for b in network.buses if not b.is_slack))
        return cls(wind=buses, solar=buses, biomass=buses, step_kw=step_kw, per_bus_max_kw=per_bus_max_kw)

    def buses_for(self, kind: str) -> tuple:
        return {"wind": self.wind, "solar": self.solar, "biomass": self.biomass}[kind]

    @property
    def n_dims(self) -> int:
        return sum(len(self.buses_for(kind)) for kind in DG_KINDS)

    def slice_for(self, kind: str) -> slice:
        start = 0
        for k in DG_KINDS:
            width = len(self.buses_for(k))
            if k == kind:
                return slice(start, start + width)
            start += width
        raise KeyError(kind)

    @property
    def cap_steps(self) -> int:
        return round(self.per_bus_max_kw / self.step_kw)

    def check_spec(self, spec: PenetrationSpec) -> None:
        """Raise InfeasibleSpecError unless every target fits this grid exactly."""
        for kind in DG_KINDS:
            target = spec.kw_for(kind)
            steps = target / self.step_kw
            if abs(steps - round(steps)) > 1e-9:
                raise InfeasibleSpecError(
                    f"{kind} target {target} kW is not a multiple of the {self.step_kw} kW step"
                )
            capacity = len(self.buses_for(kind)) * self.per_bus_max_kw
            if target > capacity + 1e-9:
                raise InfeasibleSpecError(
                    f"{kind} target {target} kW exceeds grid capacity {capacity} kW "
                    f"({len(self.buses_for(kind))} candidates x {self.per_bus_max_kw} kW)"
                )


@dataclass(frozen=True)
class Allocation:
    """A complete siting/sizing decision over a candidate grid."""

    units: tuple
    grid: CandidateGrid

    def capacity_for(self, kind: str) -> float:
        return sum(u.capacity_kw for u in self.units if u.kind == kind)

    def violations_against(self, spec: PenetrationSpec) -> list[str]:
        """All grid/spec violations, empty when the allocation is valid."""
        problems = []
        seen = set()
        for u in self.units:
            key = (u.kind, u.bus)
            if key in seen:
                problems.append(f"duplicate unit for bus {u.bus} kind {u.kind}")
            seen.add(key)
            if u.bus not in self.grid.buses_for(u.kind):
                problems.append(f"bus {u.bus} is not a {u.kind} candidate")
            steps = u.capacity_kw / self.grid.step_kw
            if abs(steps - round(steps)) > 1e-9 or u.capacity_kw <= 0.0:
                problems.append(
                    f"capacity {u.capacity_kw} kW at bus {u.bus} is off the "
                    f"{self.grid.step_kw} kW step grid"
                )
            if u.capacity_kw > self.grid.per_bus_max_kw + 1e-9:
                problems.append(
                    f"capacity {u.capacity_kw} kW at bus {u.bus} exceeds the "
                    f"{self.grid.per_bus_max_kw} kW per-bus maximum"
                )
        for kind in DG_KINDS:
            total = self.capacity_for(kind)
            want = spec.kw_for(kind)
            if abs(total - want) > 1e-6:
                problems.append(f"{kind} capacity sums to {total} kW, target is {want} kW")
        return problems

    def validate_against(self, spec: PenetrationSpec) -> None:
        problems = self.violations_against(spec)
        if problems:
            raise InvalidAllocationError("; ".join(problems))

    def to_json_list(self) -> list:
        return [
            {"kind": u.kind, "bus": u.bus, "kw": u.capacity_kw}
            for u in self.units
        ]

    @classmethod
    def from_json_list(cls, entries, grid: CandidateGrid) -> "Allocation":
        units = []
        for e in entries:
            try:
                units.append(
                    DgUnit(kind=str(e["kind"]), bus=int(e["bus"]), capacity_kw=float(e["kw"]))
                )
            except (KeyError, TypeError, ValueError) as exc:
                raise InvalidAllocationError(f"bad allocation entry {e!r}: {exc}") from None
        return cls(units=tuple(units), grid=grid)


@dataclass(frozen=True)
class PsoSettings:
    """Swarm hyperparameters; defaults are standard constriction-equivalent.

    ``stall_restart_after`` re-scatters the swarm (keeping the incumbent
    best) after that many iterations without improvement, and ``polish``
    runs a deterministic single-step-exchange descent on the final best
    allocation. Both counter the plateaus created by capacity quantization.
    """

    swarm_size: int = 50
    iterations: int = 200
    inertia: float = 0.729
    cognitive: float = 1.494
    social: float = 1.494
    velocity_clamp: float = 0.5  # fraction of the coordinate range
    seed: int = 42
    penalty_kw_per_pu: float = 1e4
    stall_restart_after: int = 8
    polish: bool = True
    polish_eval_budget: int = 4000  # max exchange evaluations after the loop

    def __post_init__(self):
        if self.swarm_size < 2:
            raise ValueError("swarm_size must be at least 2")
        if self.iterations < 1:
            raise ValueError("iterations must be at least 1")
        if not (0.0 < self.inertia <= 1.0):
            raise ValueError("inertia must lie in (0, 1]")
        if self.cognitive <= 0.0 or self.social <= 0.0:
            raise ValueError("acceleration coefficients must be positive")
        if self.velocity_clamp <= 0.0:
            raise ValueError("velocity clamp must be positive")
        if self.penalty_kw_per_pu < 0.0:
            raise ValueError("penalty coefficient must be non-negative")
        if self.stall_restart_after < 0:
            raise ValueError("stall_restart_after must be non-negative (0 disables)")
        if self.polish_eval_budget < 0:
            raise ValueError("polish_eval_budget must be non-negative")


@dataclass(frozen=True)
class ObjectiveReport:
    """Outcome of scoring one allocation over the whole state set."""

    expected_loss_kw: float
    per_state_loss_kw: tuple
    worst_voltage_pu: float
    violation_pu: float
    feasible: bool
    fitness_kw: float
    worst_state_index: int = 0

    @property
    def ranking_key(self) -> tuple:
        # feasible candidates always dominate infeasible ones
        return (0 if self.feasible else 1, self.fitness_kw)


@dataclass(frozen=True)
class DgModelSet:
    """The generator models shared by every allocation under study."""

    pv: PvModuleParams
    wind_turbine: WindTurbineParams


def repair_penetration(raw_position, spec: PenetrationSpec, grid: CandidateGrid) -> Allocation:
    """Project a continuous position onto the capacity grid, hitting the
    per-kind targets exactly.

    Per kind: clamp to [0, per_bus_max], quantize down to the step, then add
    or remove whole steps until the total matches, visiting coordinates in
    largest-remainder order (ties to the lowest bus id).
    """
    x = np.asarray(raw_position, dtype=float)
    if x.shape != (grid.n_dims,):
        raise ValueError(f"position must have {grid.n_dims} coordinates, got {x.shape}")
    if not np.all(np.isfinite(x)):
        raise ValueError("position must be finite")
    grid.check_spec(spec)

    step = grid.step_kw
    cap = grid.cap_steps
    units = []
    for kind in DG_KINDS:
        buses = grid.buses_for(kind)
        if not buses:
            continue
        target = round(spec.kw_for(kind) / step)
        xs = np.clip(x[grid.slice_for(kind)], 0.0, grid.per_bus_max_kw)
        ratio = xs / step
        steps = np.floor(ratio + 1e-9).astype(int)
        steps = np.minimum(steps, cap)
        remainder = ratio - steps

        deficit = target - int(steps.sum())
        if deficit > 0:
            order = sorted(range(len(buses)), key=lambda i: (-remainder[i], buses[i]))
            pos = 0
            while deficit > 0:
                i = order[pos % len(order)]
                if steps[i] < cap:
                    steps[i] += 1
                    deficit -= 1
                pos += 1
        elif deficit < 0:
            order = sorted(range(len(buses)), key=lambda i: (remainder[i], buses[i]))
            pos = 0
            while deficit < 0:
                i = order[pos % len(order)]
                if steps[i] > 0:
                    steps[i] -= 1
                    deficit += 1
                pos += 1

        assert int(steps.sum()) == target and steps.max(initial=0) <= cap
        for i, bus in enumerate(buses):
            if steps[i] > 0:
                units.append(DgUnit(kind=kind, bus=bus, capacity_kw=steps[i] * step))
    return Allocation(units=tuple(units), grid=grid)


class ObjectiveEvaluator:
    """Scores allocations over a fixed (network, states, models) context.

    Per-state output fractions depend only on the sampled weather, so they
    are computed once here; evaluating an allocation is then three outer
    products and a batched sweep solve. ``evaluate_many`` stacks several
    allocations into fixed-size solver chunks; because chunk boundaries do
    not depend on the worker count, results are identical at any thread
    count. Evaluations are pure and thread-safe.
    """

    # at most this many (state x allocation) rows per sweep solve
    chunk_rows = 16384

    def __init__(
        self,
        network: Network,
        states: StateSet,
        models: DgModelSet,
        limits: VoltageLimits,
        penalty_kw_per_pu: float = 1e4,
        sweep: SweepSettings | None = None,
    ):
        self.network = network
        self.states = states
        self.limits = limits
        self.penalty_kw_per_pu = penalty_kw_per_pu
        self.sweep = sweep if sweep is not None else SweepSettings()
        self._wind_frac = np.array(
            [wind_output_fraction(s.wind_speed_ms, models.wind_turbine) for s in states.states]
        )
        self._pv_frac = np.array(
            [pv_output_fraction(s.irradiance_kw_m2, models.pv) for s in states.states]
        )
        self._weights = np.array([s.weight for s in states.states])
        self._n_states = len(states.states)
        self._q_tile = np.tile(network.q_load_kvar, (self._n_states, 1))

    def _capacity_vectors(self, allocation: Allocation):
        n = self.network.n_buses
        caps = {kind: np.zeros(n) for kind in DG_KINDS}
        for unit in allocation.units:
            caps[unit.kind][self.network.index_of(unit.bus)] += unit.capacity_kw
        return caps

    def net_load_kw(self, allocation: Allocation) -> np.ndarray:
        """Per-state net active power (load minus DG), shape (n_states, n_buses)."""
        caps = self._capacity_vectors(allocation)
        p_dg = (
            np.outer(self._wind_frac, caps["wind"])
            + np.outer(self._pv_frac, caps["solar"])
            + caps["biomass"][None, :]
        )
        return self.network.p_load_kw[None, :] - p_dg

    def _report_from(self, voltages, total_loss_kw, converged) -> ObjectiveReport:
        vmag = np.abs(voltages)
        under = np.clip(self.limits.v_min - vmag, 0.0, None).sum(axis=1)
        over = np.clip(vmag - self.limits.v_max, 0.0, None).sum(axis=1)
        violation = float(self._weights @ (under + over))

        losses = np.where(converged, total_loss_kw, LOSS_SENTINEL_KW)
        expected = float(self._weights @ losses)
        all_converged = bool(converged.all())
        feasible = all_converged and violation == 0.0
        if all_converged:
            fitness = expected + self.penalty_kw_per_pu * violation
        else:
            fitness = LOSS_SENTINEL_KW
        return ObjectiveReport(
            expected_loss_kw=expected,
            per_state_loss_kw=tuple(float(v) for v in losses),
            worst_voltage_pu=float(vmag.min()),
            violation_pu=violation,
            feasible=feasible,
            fitness_kw=float(fitness),
            worst_state_index=int(vmag.min(axis=1).argmin()),
        )

    def evaluate(self, allocation: Allocation) -> ObjectiveReport:
        return self.evaluate_many([allocation])[0]

    def evaluate_many(self, allocations, threads: int = 1) -> list:
        """Score allocations in order; chunking is independent of threads."""
        allocations = list(allocations)
        if not allocations:
            return []
        per_chunk = max(1, self.chunk_rows // self._n_states)
        chunks = [
            allocations[i:i + per_chunk]
            for i in range(0, len(allocations), per_chunk)
        ]

        def run_chunk(chunk):
            p_net = np.vstack([self.net_load_kw(a) for a in chunk])
            q_net = np.vstack([self._q_tile] * len(chunk))
            batch = solve_states(self.network, p_net, q_net, self.sweep)
            reports = []
            for k in range(len(chunk)):
                rows = slice(k * self._n_states, (k + 1) * self._n_states)
                reports.append(
                    self._report_from(
                        batch.voltages[rows],
                        batch.total_loss_kw[rows],
                        batch.converged[rows],
                    )
                )
            return reports

        if threads > 1 and len(chunks) > 1:
            with ThreadPoolExecutor(max_workers=threads) as pool:
                chunk_reports = list(pool.map(run_chunk, chunks))
        else:
            chunk_reports = [run_chunk(c) for c in chunks]
        return [report for chunk in chunk_reports for report in chunk]


def evaluate_allocation(
    network: Network,
    allocation: Allocation,
    states: StateSet,
    models: DgModelSet,
    limits: VoltageLimits,
    penalty_kw_per_pu: float = 1e4,
    sweep: SweepSettings | None = None,
) -> ObjectiveReport:
    """Score one allocation: probability-weighted loss plus voltage screening."""
    evaluator = ObjectiveEvaluator(network, states, models, limits, penalty_kw_per_pu, sweep)
    return evaluator.evaluate(allocation)


@dataclass(frozen=True)
class PsoResult:
    allocation: Allocation
    report: ObjectiveReport
    trace: tuple  # best fitness after init and after each iteration
    diagnostics: str = ""


def _steps_by_kind(allocation: Allocation, grid: CandidateGrid) -> dict:
    steps = {}
    for kind in DG_KINDS:
        caps = {u.bus: u.capacity_kw for u in allocation.units if u.kind == kind}
        steps[kind] = [
            round(caps.get(bus, 0.0) / grid.step_kw) for bus in grid.buses_for(kind)
        ]
    return steps


def _allocation_from_steps(steps: dict, grid: CandidateGrid) -> Allocation:
    units = []
    for kind in DG_KINDS:
        for bus, count in zip(grid.buses_for(kind), steps[kind]):
            if count > 0:
                units.append(DgUnit(kind=kind, bus=bus, capacity_kw=count * grid.step_kw))
    return Allocation(units=tuple(units), grid=grid)


def _polish(allocation, report, evaluator, grid, threads, eval_budget):
    """Best-improvement descent over single-step capacity exchanges.

    Each round scans every move of one capacity step between two candidate
    buses of the same kind (totals stay exact by construction) and applies
    the best strictly improving one; stops at a local optimum or when the
    next round would exceed the evaluation budget.
    """
    key = report.ranking_key
    used = 0
    while True:
        steps = _steps_by_kind(allocation, grid)
        candidates = []
        for kind in DG_KINDS:
            counts = steps[kind]
            for donor in range(len(counts)):
                if counts[donor] == 0:
                    continue
                for receiver in range(len(counts)):
                    if receiver == donor or counts[receiver] >= grid.cap_steps:
                        continue
                    trial = {k: list(v) for k, v in steps.items()}
                    trial[kind][donor] -= 1
                    trial[kind][receiver] += 1
                    candidates.append(_allocation_from_steps(trial, grid))
        if not candidates or used + len(candidates) > eval_budget:
            break
        used += len(candidates)
        reports = evaluator.evaluate_many(candidates, threads)
        best = min(range(len(candidates)), key=lambda i: reports[i].ranking_key)
        if reports[best].ranking_key < key:
            allocation, report = candidates[best], reports[best]
            key = report.ranking_key
        else:
            break
    return allocation, report


def pso_optimize(
    network: Network,
    spec: PenetrationSpec,
    states: StateSet,
    models: DgModelSet,
    limits: VoltageLimits,
    settings: PsoSettings | None = None,
    grid: CandidateGrid | None = None,
    threads: int = 1,
    sweep: SweepSettings | None = None,
) -> PsoResult:
    """Global-best PSO over repaired positions, with stall restarts and a
    final exchange polish.

    Deterministic for fixed (inputs, seed) at any thread count: all random
    draws come from one seeded stream consumed in a fixed order before the
    (pure) evaluations, and best-position updates run sequentially.
    """
    settings = settings if settings is not None else PsoSettings()
    grid = grid if grid is not None else CandidateGrid.all_non_slack(network)
    grid.check_spec(spec)
    evaluator = ObjectiveEvaluator(
        network, states, models, limits, settings.penalty_kw_per_pu, sweep
    )

    rng = np.random.default_rng(settings.seed)
    dims = grid.n_dims
    swarm = settings.swarm_size
    hi = grid.per_bus_max_kw
    v_max = settings.velocity_clamp * hi

    def evaluate_swarm(positions):
        allocations = [repair_penetration(positions[i], spec, grid) for i in range(swarm)]
        return allocations, evaluator.evaluate_many(allocations, threads)

    x = rng.uniform(0.0, hi, size=(swarm, dims))
    vel = rng.uniform(-v_max, v_max, size=(swarm, dims))
    allocations, reports = evaluate_swarm(x)
    pbest_x = x.copy()
    pbest_key = [r.ranking_key for r in reports]
    best = min(range(swarm), key=lambda i: pbest_key[i])
    gbest_x = x[best].copy()
    gbest_key = pbest_key[best]
    gbest_allocation = allocations[best]
    gbest_report = reports[best]
    trace = [gbest_report.fitness_kw]

    stall = 0
    for _ in range(settings.iterations):
        rescattered = settings.stall_restart_after and stall >= settings.stall_restart_after
        if rescattered:
            # diversity is gone; re-seed the swarm but keep the incumbent
            x = rng.uniform(0.0, hi, size=(swarm, dims))
            vel = rng.uniform(-v_max, v_max, size=(swarm, dims))
            stall = 0
        else:
            r1 = rng.random((swarm, dims))
            r2 = rng.random((swarm, dims))
            vel = (
                settings.inertia * vel
                + settings.cognitive * r1 * (pbest_x - x)
                + settings.social * r2 * (gbest_x - x)
            )
            np.clip(vel, -v_max, v_max, out=vel)
            x = np.clip(x + vel, 0.0, hi)

        allocations, reports = evaluate_swarm(x)
        improved = False
        for i in range(swarm):
            key = reports[i].ranking_key
            if rescattered or key < pbest_key[i]:
                pbest_key[i] = key
                pbest_x[i] = x[i]
            if key < gbest_key:
                gbest_key = key
                gbest_x = x[i].copy()
                gbest_allocation = allocations[i]
                gbest_report = reports[i]
                improved = True
        stall = 0 if improved else stall + 1
        trace.append(gbest_report.fitness_kw)

    if settings.polish:
        gbest_allocation, gbest_report = _polish(
            gbest_allocation, gbest_report, evaluator, grid, threads,
            settings.polish_eval_budget,
        )

    diagnostics = ""
    if gbest_report.fitness_kw >= LOSS_SENTINEL_KW:
        diagnostics = "no candidate converged; every evaluation hit the loss sentinel"
    return PsoResult(
        allocation=gbest_allocation,
        report=gbest_report,
        trace=tuple(trace),
        diagnostics=diagnostics,
    )
