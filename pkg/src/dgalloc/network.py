"""Radial distribution feeder model: dataset ingestion, per-unit conversion,
and validation of the tree topology required by the sweep solver.

Buses are renumbered internally to a dense 0-based index for O(1) array
addressing; every externally visible report uses the original ids.
"""

import csv
import math
from dataclasses import dataclass

import numpy as np

BUS_HEADER = ["id", "p_load_kw", "q_load_kvar", "is_slack"]
BRANCH_HEADER = ["from", "to", "r_ohm", "x_ohm"]


class ParseError(ValueError):
    """A dataset file is malformed (bad header, bad row, or bad value)."""


class TopologyError(ValueError):
    """The branch set is not a spanning tree rooted at exactly one slack bus."""


class UnknownBusError(TopologyError):
    """A branch references a bus id missing from the bus table."""


@dataclass(frozen=True)
class Bus:
    """One feeder node with its constant-power demand in kW / kVAr."""

    id: int
    p_load_kw: float
    q_load_kvar: float
    is_slack: bool = False

    def __post_init__(self):
        if not (math.isfinite(self.p_load_kw) and math.isfinite(self.q_load_kvar)):
            raise ValueError(f"bus {self.id}: loads must be finite")
        if self.p_load_kw < 0.0 or self.q_load_kvar < 0.0:
            raise ValueError(f"bus {self.id}: loads must be non-negative")


@dataclass(frozen=True)
class Branch:
    """Series impedance between two buses, in ohms."""

    from_bus: int
    to_bus: int
    r_ohm: float
    x_ohm: float

    def __post_init__(self):
        if self.from_bus == self.to_bus:
            raise TopologyError(f"self-loop on bus {self.from_bus}")
        if not (math.isfinite(self.r_ohm) and math.isfinite(self.x_ohm)):
            raise ValueError(f"branch {self.from_bus}-{self.to_bus}: impedance must be finite")
        if self.r_ohm < 0.0 or self.x_ohm < 0.0:
            raise ValueError(f"branch {self.from_bus}-{self.to_bus}: impedance must be non-negative")


@dataclass(frozen=True)
class SystemBase:
    """Per-unit normalization base (apparent power in kVA, line voltage in kV)."""

    s_base_kva: float = 1000.0
    v_base_kv: float = 12.66

    def __post_init__(self):
        if self.s_base_kva <= 0.0 or self.v_base_kv <= 0.0:
            raise ValueError("system base quantities must be strictly positive")

    @property
    def z_base_ohm(self) -> float:
        return (self.v_base_kv * 1e3) ** 2 / (self.s_base_kva * 1e3)

    def ohm_to_pu(self, ohm: float) -> float:
        return ohm / self.z_base_ohm

    def pu_to_ohm(self, pu: float) -> float:
        return pu * self.z_base_ohm

    def kw_to_pu(self, kw: float) -> float:
        return kw / self.s_base_kva

    def pu_to_kw(self, pu: float) -> float:
        return pu * self.s_base_kva


@dataclass(frozen=True)
class VoltageLimits:
    """Allowed band for bus voltage magnitudes, per-unit."""

    v_min: float = 0.95
    v_max: float = 1.05

    def __post_init__(self):
        if not (0.0 < self.v_min < self.v_max):
            raise ValueError("require 0 < v_min < v_max")


class Network:
    """Validated radial feeder, per-unit, ready for the sweep solver.

    The constructor checks that the branches form a spanning tree rooted at
    the single slack bus and computes a breadth-first levelized branch order
    (parents strictly before children). Instances are immutable after
    construction and safe to share across concurrent solves; the numpy
    attributes are treated as read-only by all code in this package.
    """

    def __init__(self, buses, branches, base: SystemBase):
        buses = tuple(buses)
        branches = tuple(branches)
        if not buses:
            raise TopologyError("network has no buses")

        ids = [b.id for b in buses]
        seen = set()
        for i in ids:
            if i in seen:
                raise TopologyError(f"duplicate bus id {i}")
            seen.add(i)

        slack_positions = [k for k, b in enumerate(buses) if b.is_slack]
        if len(slack_positions) != 1:
            raise TopologyError(f"expected exactly one slack bus, found {len(slack_positions)}")

        id_to_index = {b.id: k for k, b in enumerate(buses)}
        for br in branches:
            for end in (br.from_bus, br.to_bus):
                if end not in id_to_index:
                    raise UnknownBusError(
                        f"branch {br.from_bus}-{br.to_bus} references unknown bus {end}"
                    )

        self.buses = buses
        self.branches = branches
        self.base = base
        self._id_to_index = id_to_index
        self.slack_index = slack_positions[0]
        self.bus_ids = np.array(ids, dtype=int)
        self.p_load_kw = np.array([b.p_load_kw for b in buses], dtype=float)
        self.q_load_kvar = np.array([b.q_load_kvar for b in buses], dtype=float)

        order, from_idx, to_idx = self._levelize()
        self.sweep_order = tuple(order)  # indices into self.branches, parents first
        self._from_idx = np.array(from_idx, dtype=int)
        self._to_idx = np.array(to_idx, dtype=int)
        z_base = base.z_base_ohm
        self._r_pu = np.array(
            [branches[k].r_ohm / z_base for k in order], dtype=float
        )
        self._x_pu = np.array(
            [branches[k].x_ohm / z_base for k in order], dtype=float
        )
        self._z_pu = self._r_pu + 1j * self._x_pu

        for array in (
            self.bus_ids, self.p_load_kw, self.q_load_kvar,
            self._from_idx, self._to_idx, self._r_pu, self._x_pu, self._z_pu,
        ):
            array.flags.writeable = False

    def _levelize(self):
        """Breadth-first search from the slack; orients each branch parent->child.

        Raises TopologyError naming the offending edge (cycle) or bus
        (unreachable) when the branch set is not a spanning tree.
        """
        adjacency: dict[int, list[tuple[int, int]]] = {k: [] for k in range(len(self.buses))}
        for bi, br in enumerate(self.branches):
            f = self._id_to_index[br.from_bus]
            t = self._id_to_index[br.to_bus]
            adjacency[f].append((t, bi))
            adjacency[t].append((f, bi))
        for lst in adjacency.values():
            lst.sort(key=lambda item: self.bus_ids[item[0]])

        order: list[int] = []
        from_idx: list[int] = []
        to_idx: list[int] = []
        visited = {self.slack_index}
        used_branches = set()
        queue = [self.slack_index]
        while queue:
            parent = queue.pop(0)
            for child, bi in adjacency[parent]:
                if bi in used_branches:
                    continue
                if child in visited:
                    br = self.branches[bi]
                    raise TopologyError(
                        f"cycle detected through branch {br.from_bus}-{br.to_bus}"
                    )
                used_branches.add(bi)
                visited.add(child)
                order.append(bi)
                from_idx.append(parent)
                to_idx.append(child)
                queue.append(child)
        if len(visited) < len(self.buses):
            unreachable = min(
                int(self.bus_ids[k]) for k in range(len(self.buses)) if k not in visited
            )
            raise TopologyError(
                f"bus {unreachable} is unreachable from slack bus {self.slack_id}"
            )
        # a connected graph touching every bus with no revisit is a tree, so
        # len(order) == n_buses - 1 holds here by construction
        return order, from_idx, to_idx

    @property
    def n_buses(self) -> int:
        return len(self.buses)

    @property
    def n_branches(self) -> int:
        return len(self.branches)

    @property
    def slack_id(self) -> int:
        return int(self.bus_ids[self.slack_index])

    @property
    def total_load_kw(self) -> float:
        return float(self.p_load_kw.sum())

    @property
    def total_load_kvar(self) -> float:
        return float(self.q_load_kvar.sum())

    def index_of(self, bus_id: int) -> int:
        try:
            return self._id_to_index[bus_id]
        except KeyError:
            raise UnknownBusError(f"unknown bus id {bus_id}") from None

    def __repr__(self):
        return (
            f"Network({self.n_buses} buses, {self.n_branches} branches, "
            f"{self.total_load_kw:.1f} kW / {self.total_load_kvar:.1f} kVAr)"
        )


def validate_radial(network: Network) -> list[tuple[int, int]]:
    """Return the levelized branch order as (from_id, to_id) pairs.

    The order visits every branch exactly once, parents strictly before
    children, starting at the slack bus. Raises TopologyError when the
    network is not a tree (the Network constructor already guarantees it;
    this re-derives the order from scratch so it can be called on its own).
    """
    order, from_idx, to_idx = network._levelize()
    return [
        (int(network.bus_ids[f]), int(network.bus_ids[t]))
        for f, t in zip(from_idx, to_idx)
    ]


def _strict_float(text: str, where: str) -> float:
    text = text.strip()
    if "_" in text:
        raise ParseError(f"{where}: not a plain decimal number: {text!r}")
    try:
        value = float(text)
    except ValueError:
        raise ParseError(f"{where}: not a number: {text!r}") from None
    if not math.isfinite(value):
        raise ParseError(f"{where}: non-finite value: {text!r}")
    return value


def _strict_int(text: str, where: str) -> int:
    text = text.strip()
    try:
        return int(text, 10)
    except ValueError:
        raise ParseError(f"{where}: not an integer: {text!r}") from None


def _read_rows(path, header: list[str]):
    with open(path, newline="", encoding="utf-8") as handle:
        reader = csv.reader(handle)
        first = next(reader, None)
        if first is None or [c.strip() for c in first] != header:
            got = ",".join(first) if first else "<empty file>"
            raise ParseError(
                f"{path}: expected header {','.join(header)!r}, got {got!r}"
            )
        rows = []
        for lineno, row in enumerate(reader, start=2):
            if not row or (len(row) == 1 and not row[0].strip()):
                continue  # tolerate a trailing blank line
            if len(row) != len(header):
                raise ParseError(
                    f"{path}:{lineno}: expected {len(header)} fields, got {len(row)}"
                )
            rows.append((lineno, row))
    return rows


def load_network(bus_file, branch_file, base: SystemBase | None = None) -> Network:
    """Load a feeder from the two-CSV dataset format and validate it.

    ``bus_file`` columns: id,p_load_kw,q_load_kvar,is_slack (is_slack in {0,1}).
    ``branch_file`` columns: from,to,r_ohm,x_ohm.
    Parsing is strict: exact headers, plain decimal numbers, UTF-8.
    """
    base = base if base is not None else SystemBase()
    buses = []
    for lineno, row in _read_rows(bus_file, BUS_HEADER):
        where = f"{bus_file}:{lineno}"
        flag = row[3].strip()
        if flag not in ("0", "1"):
            raise ParseError(f"{where}: is_slack must be 0 or 1, got {flag!r}")
        try:
            buses.append(
                Bus(
                    id=_strict_int(row[0], where),
                    p_load_kw=_strict_float(row[1], where),
                    q_load_kvar=_strict_float(row[2], where),
                    is_slack=flag == "1",
                )
            )
        except ParseError:
            raise
        except ValueError as exc:
            raise ParseError(f"{where}: {exc}") from None

    branches = []
    for lineno, row in _read_rows(branch_file, BRANCH_HEADER):
        where = f"{branch_file}:{lineno}"
        try:
            branches.append(
                Branch(
                    from_bus=_strict_int(row[0], where),
                    to_bus=_strict_int(row[1], where),
                    r_ohm=_strict_float(row[2], where),
                    x_ohm=_strict_float(row[3], where),
                )
            )
        except (ParseError, TopologyError):
            raise
        except ValueError as exc:
            raise ParseError(f"{where}: {exc}") from None

    return Network(buses, branches, base)
