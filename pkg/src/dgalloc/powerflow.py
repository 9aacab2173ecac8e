"""Forward-backward sweep load flow for radial feeders.

The backward pass accumulates branch currents from the leaves toward the
slack bus (constant-power loads, I = conj(S / V)); the forward pass drops
voltages from the slack outward (V_child = V_parent - Z * I). The sweep is
repeated until the largest per-bus voltage change falls below tolerance.

``solve`` handles one injection set; ``solve_states`` runs the same sweep on
a whole matrix of injection sets at once (one row per stochastic state),
which is what makes the optimizer's objective affordable. Both are pure
functions of their inputs and safe to call concurrently against a shared
Network.
"""

import csv
from dataclasses import dataclass, field

import numpy as np

from .network import Network


class ConvergenceError(RuntimeError):
    """Raised when a result that did not converge is used as if it had."""


@dataclass(frozen=True)
class SweepSettings:
    """Iteration controls for the sweep solver.

    ``collapse_floor_pu`` is a guard: any voltage magnitude falling below it
    aborts that state's iteration and flags the result instead of letting the
    fixed point wander off to a non-physical solution.
    """

    tolerance: float = 1e-6
    max_iterations: int = 100
    slack_voltage_pu: float = 1.0
    collapse_floor_pu: float = 0.3

    def __post_init__(self):
        if self.tolerance <= 0.0:
            raise ValueError("tolerance must be positive")
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be at least 1")
        if self.slack_voltage_pu <= 0.0:
            raise ValueError("slack voltage must be positive")


@dataclass(frozen=True)
class InjectionSet:
    """Per-bus net power draw in kW / kVAr (load minus generation).

    Generation enters as a negative contribution to ``p_net_kw`` (unity
    power factor). The slack entry is ignored by the solver.
    """

    p_net_kw: np.ndarray
    q_net_kvar: np.ndarray

    @classmethod
    def from_network(cls, network: Network, dg_kw_by_bus: dict[int, float] | None = None):
        """Net injections from the network's loads, minus optional DG output keyed by bus id."""
        p = network.p_load_kw.copy()
        q = network.q_load_kvar.copy()
        if dg_kw_by_bus:
            for bus_id, kw in dg_kw_by_bus.items():
                p[network.index_of(bus_id)] -= kw
        return cls(p_net_kw=p, q_net_kvar=q)


@dataclass(frozen=True)
class PowerFlowResult:
    """Converged state of one sweep solve.

    ``voltages`` is complex per-unit in internal bus order; ``branch_loss_kw``
    follows the input branch order. ``diagnostic`` is non-empty only when
    ``converged`` is False.
    """

    voltages: np.ndarray
    branch_loss_kw: np.ndarray
    total_loss_kw: float
    iterations: int
    converged: bool
    diagnostic: str = ""


@dataclass(frozen=True)
class PowerFlowBatch:
    """Sweep results for a batch of states (leading axis = state)."""

    voltages: np.ndarray       # (n_states, n_buses) complex pu
    branch_loss_kw: np.ndarray  # (n_states, n_branches) input branch order
    total_loss_kw: np.ndarray  # (n_states,)
    iterations: np.ndarray     # (n_states,)
    converged: np.ndarray      # (n_states,) bool
    diagnostics: tuple[str, ...] = field(default=())


def solve_states(
    network: Network,
    p_net_kw: np.ndarray,
    q_net_kvar: np.ndarray,
    settings: SweepSettings | None = None,
) -> PowerFlowBatch:
    """Run the sweep on (n_states, n_buses) matrices of net bus power."""
    settings = settings if settings is not None else SweepSettings()
    p = np.atleast_2d(np.asarray(p_net_kw, dtype=float))
    q = np.atleast_2d(np.asarray(q_net_kvar, dtype=float))
    if p.shape != q.shape or p.shape[1] != network.n_buses:
        raise ValueError(
            f"injection arrays must be (n_states, {network.n_buses}), got {p.shape} and {q.shape}"
        )
    if not (np.isfinite(p).all() and np.isfinite(q).all()):
        raise ValueError("injections must be finite")
    s_pu = (p + 1j * q) / network.base.s_base_kva

    n_states, n_bus = s_pu.shape
    n_br = network.n_branches
    from_idx = network._from_idx
    to_idx = network._to_idx
    z = network._z_pu
    slack = network.slack_index
    v_slack = settings.slack_voltage_pu
    tol = settings.tolerance
    floor = settings.collapse_floor_pu

    volts = np.full((n_states, n_bus), complex(v_slack, 0.0))
    i_branch = np.zeros((n_states, n_br), dtype=complex)
    converged = np.zeros(n_states, dtype=bool)
    iterations = np.zeros(n_states, dtype=int)
    active = np.ones(n_states, dtype=bool)
    collapse_note = [""] * n_states

    def backward(i_bus):
        # children are processed before parents because sweep order is levelized
        for b in range(n_br - 1, -1, -1):
            flow = i_bus[:, to_idx[b]]
            i_branch[:, b] = flow
            i_bus[:, from_idx[b]] += flow

    for sweep in range(1, settings.max_iterations + 1):
        with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
            i_bus = np.conj(s_pu / volts)
        i_bus[:, slack] = 0.0
        backward(i_bus)

        v_new = np.empty_like(volts)
        v_new[:, slack] = v_slack
        for b in range(n_br):
            v_new[:, to_idx[b]] = v_new[:, from_idx[b]] - z[b] * i_branch[:, b]

        delta = np.abs(v_new - volts).max(axis=1) if n_br else np.zeros(n_states)
        vmag = np.abs(v_new)
        finite = np.isfinite(v_new).all(axis=1)
        vmag_safe = np.where(np.isfinite(vmag), vmag, np.inf)
        collapsing = active & ~converged & (~finite | (vmag_safe.min(axis=1) < floor))
        if collapsing.any():
            for row in np.nonzero(collapsing)[0]:
                # non-finite entries rank first so the diagnostic names them
                bus = int(np.argmin(np.where(np.isfinite(vmag[row]), vmag[row], -1.0)))
                collapse_note[row] = (
                    f"voltage collapse near bus {int(network.bus_ids[bus])} "
                    f"after {sweep} sweeps"
                )
            active &= ~collapsing

        # converged rows freeze at the sweep that met the tolerance, so a
        # state's solution never depends on what else sits in the batch
        update = active & ~converged
        volts[update] = v_new[update]
        newly = update & (delta < tol)
        iterations[newly] = sweep
        converged |= newly
        if not (active & ~converged).any():
            break

    never = active & ~converged
    iterations[never] = settings.max_iterations
    for row in np.nonzero(never)[0]:
        collapse_note[row] = (
            f"did not converge within {settings.max_iterations} sweeps "
            f"(last voltage change {delta[row]:.3e} pu)"
        )
    iterations[~active] = settings.max_iterations

    # final backward pass so reported currents are consistent with the
    # reported voltages
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        i_bus = np.conj(s_pu / volts)
    i_bus[:, slack] = 0.0
    backward(i_bus)

    loss_pu_sweep = (i_branch.real**2 + i_branch.imag**2) * network._r_pu
    branch_loss_kw = np.empty_like(loss_pu_sweep)
    branch_loss_kw[:, list(network.sweep_order)] = loss_pu_sweep * network.base.s_base_kva
    total_loss_kw = branch_loss_kw.sum(axis=1)

    return PowerFlowBatch(
        voltages=volts,
        branch_loss_kw=branch_loss_kw,
        total_loss_kw=total_loss_kw,
        iterations=iterations,
        converged=converged,
        diagnostics=tuple(collapse_note),
    )


def solve(
    network: Network,
    injections: InjectionSet,
    settings: SweepSettings | None = None,
) -> PowerFlowResult:
    """Solve one injection set; see the module docstring for the method."""
    p = np.asarray(injections.p_net_kw, dtype=float)
    q = np.asarray(injections.q_net_kvar, dtype=float)
    if p.shape != (network.n_buses,) or q.shape != (network.n_buses,):
        raise ValueError(f"injections must have {network.n_buses} entries")
    batch = solve_states(network, p[None, :], q[None, :], settings)
    return PowerFlowResult(
        voltages=batch.voltages[0],
        branch_loss_kw=batch.branch_loss_kw[0],
        total_loss_kw=float(batch.total_loss_kw[0]),
        iterations=int(batch.iterations[0]),
        converged=bool(batch.converged[0]),
        diagnostic=batch.diagnostics[0],
    )


def total_loss(result: PowerFlowResult) -> float:
    """Total real loss of a converged solve, in kW."""
    if not result.converged:
        raise ConvergenceError(result.diagnostic or "power flow did not converge")
    return result.total_loss_kw


def write_voltage_profile(path, network: Network, result: PowerFlowResult) -> None:
    """Write the per-bus voltage profile as bus_id,v_mag_pu,v_angle_deg."""
    order = np.argsort(network.bus_ids)
    with open(path, "w", newline="", encoding="utf-8") as handle:
        writer = csv.writer(handle)
        writer.writerow(["bus_id", "v_mag_pu", "v_angle_deg"])
        for k in order:
            v = result.voltages[k]
            writer.writerow(
                [int(network.bus_ids[k]), repr(float(np.abs(v))), repr(float(np.degrees(np.angle(v))))]
            )
