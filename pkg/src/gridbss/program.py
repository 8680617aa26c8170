"""Deterministic-equivalent LP of the two-stage storage planning problem.

Three modes share one column layout:

* ``TwoStage``       -- rated power per (zone, bus, technology) is free,
                        optionally capped in aggregate.
* ``FixedFirstStage``-- rated powers are pinned to a given allocation.
* ``WaitAndSee``     -- a single scenario with free first stage.

The second stage is an hourly DC-OPF with storage dynamics, thermal ramping,
zonal exchange limits, and load shedding, replicated per scenario and tied
together only by the first-stage columns.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, field

import numpy as np

from . import simplex, storage
from .lp import LpBuilder, LpInstance
from .network import NetworkModel, validate_network
from .scenarios import Scenario, ScenarioSet, check_compatible
from .simplex import SolveResult, SolverConfig, Status
from .storage import BssAllocation, BssTechnology, PlanningEconomics, StorageState


class ProgramError(Exception):
    """Raised when a program cannot be assembled from its inputs."""


class SolveFailure(Exception):
    """Raised when the LP solver finishes without an optimal solution."""

    def __init__(self, status: Status, detail: str = ""):
        self.status = status
        super().__init__(f"solver returned {status.value}" + (f": {detail}" if detail else ""))


# ---------------------------------------------------------------------------
# modes
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class TwoStage:
    cap: float | None = None        # aggregate MW cap on rated power


@dataclass(frozen=True)
class FixedFirstStage:
    allocation: BssAllocation


@dataclass(frozen=True)
class WaitAndSee:
    scenario_id: str
    cap: float | None = None


ProgramMode = TwoStage | FixedFirstStage | WaitAndSee


# ---------------------------------------------------------------------------
# variable index
# ---------------------------------------------------------------------------

_NAME_RE = re.compile(r"[^A-Za-z0-9_.-]+")


def _clean(token: str) -> str:
    return _NAME_RE.sub("", str(token))


class VariableIndex:
    """Bijection between semantic coordinates and LP column indices."""

    def __init__(self):
        self._cols: dict[tuple, int] = {}
        self.names: list[str] = []

    def add(self, coord: tuple, name: str, col: int) -> None:
        if coord in self._cols:
            raise ProgramError(f"duplicate variable coordinate {coord}")
        if col != len(self.names):
            raise ProgramError("columns must be registered densely in order")
        name = _clean(name)
        if len(name) > 61:
            raise ProgramError(f"variable name too long: {name}")
        self._cols[coord] = col
        self.names.append(name)

    def col(self, *coord) -> int:
        return self._cols[coord]

    def get(self, *coord) -> int | None:
        return self._cols.get(coord)

    def __len__(self) -> int:
        return len(self.names)

    def coords(self):
        return self._cols.items()


# ---------------------------------------------------------------------------
# build
# ---------------------------------------------------------------------------

@dataclass
class ProgramBuild:
    lp: LpInstance
    index: VariableIndex
    model: NetworkModel
    catalog: list[BssTechnology]
    econ: PlanningEconomics
    sset: ScenarioSet               # effective set (singleton for WaitAndSee)
    mode: ProgramMode
    units: list[tuple[str, str, str]]   # (zone, bus, tech key)
    horizon: int

    @property
    def weights(self) -> np.ndarray:
        return self.sset.weights


def build(model: NetworkModel, catalog: list[BssTechnology],
          econ: PlanningEconomics, sset: ScenarioSet,
          mode: ProgramMode) -> ProgramBuild:
    """Assemble the deterministic-equivalent LP over the scenario set."""
    report = validate_network(model)
    if not report.ok:
        raise ProgramError("network failed validation: " + "; ".join(report.violations))
    mismatches = check_compatible(model, sset)
    if mismatches:
        raise ProgramError("scenarios incompatible with network: " + "; ".join(mismatches))

    if isinstance(mode, WaitAndSee):
        eff = sset.singleton(mode.scenario_id)
    else:
        eff = sset
    horizon = eff.horizon

    tech_by_key = {t.key: t for t in catalog}
    units = [(b.zone, b.id, t.key) for b in model.buses for t in catalog]

    lb = LpBuilder()
    index = VariableIndex()

    def col(coord, name, low, high, cost=0.0) -> int:
        c = lb.add_col(low, high, cost)
        index.add(coord, name, c)
        return c

    # ---- first stage ------------------------------------------------------
    fixed_alloc = mode.allocation if isinstance(mode, FixedFirstStage) else None
    if fixed_alloc is not None:
        bad = fixed_alloc.validate()
        if bad:
            raise ProgramError("allocation invalid: " + "; ".join(bad))
        known = set(units)
        for key in fixed_alloc.entries:
            if key not in known:
                raise ProgramError(f"allocation references unknown unit {key}")

    pbs: dict[tuple[str, str, str], int] = {}
    for (zone, bus, key) in units:
        tech = tech_by_key[key]
        rate = (storage.capital_cost_rate(tech, econ)
                + storage.replacement_cost_rate(tech, econ)
                + tech.fixed_om)
        if fixed_alloc is not None:
            v = fixed_alloc.rated_power(zone, bus, key)
            pbs[(zone, bus, key)] = col(("pbs", zone, bus, key),
                                        f"pbs_z{zone}_b{bus}_{key}", v, v, rate)
        else:
            pbs[(zone, bus, key)] = col(("pbs", zone, bus, key),
                                        f"pbs_z{zone}_b{bus}_{key}", 0.0, math.inf, rate)

    cap = mode.cap if isinstance(mode, (TwoStage, WaitAndSee)) else None
    if cap is not None and math.isfinite(cap):
        lb.add_row(list(pbs.values()), [1.0] * len(pbs), "L", cap, "cap_total")

    # ---- per-scenario second stage -----------------------------------------
    partition_ties = _tie_lines(model)
    for s_pos, (scen, weight) in enumerate(zip(eff.scenarios, eff.weights)):
        _add_scenario(lb, index, model, tech_by_key, econ, units, pbs,
                      scen, float(weight), partition_ties)

    return ProgramBuild(lp=lb.build(), index=index, model=model,
                        catalog=catalog, econ=econ, sset=eff, mode=mode,
                        units=units, horizon=horizon)


def _tie_lines(model: NetworkModel) -> dict[str, list[tuple[str, float]]]:
    """Per zone: cross-zone line ids with their import-positive sign."""
    ties: dict[str, list[tuple[str, float]]] = {z.id: [] for z in model.zones}
    for line in model.lines:
        zf, zt = model.line_zones(line)
        if zf == zt:
            continue
        ties[zt].append((line.id, 1.0))    # flow from->to imports into zt
        ties[zf].append((line.id, -1.0))
    return ties


def _add_scenario(lb: LpBuilder, index: VariableIndex, model: NetworkModel,
                  tech_by_key: dict[str, BssTechnology], econ: PlanningEconomics,
                  units, pbs, scen: Scenario, weight: float,
                  ties: dict[str, list[tuple[str, float]]]) -> None:
    sid = scen.id
    horizon = scen.horizon
    inf = math.inf

    # storage columns
    e0: dict[tuple, int] = {}
    e: dict[tuple, int] = {}
    ch: dict[tuple, int] = {}
    dc: dict[tuple, int] = {}
    for (zone, bus, key) in units:
        tech = tech_by_key[key]
        vo, bd = storage.throughput_cost_rate(tech)
        cycle_cost = weight * (vo + bd)
        u = (zone, bus, key)
        e0[u] = lb.add_col(0.0, inf)
        index.add(("e0", sid, zone, bus, key), f"e0_s{sid}_b{bus}_{key}", e0[u])
        for t in range(1, horizon + 1):
            c = lb.add_col(0.0, inf)
            index.add(("e", sid, zone, bus, key, t), f"e_s{sid}_b{bus}_{key}_t{t}", c)
            e[u + (t,)] = c
        for t in range(horizon):
            c = lb.add_col(0.0, inf, cycle_cost)
            index.add(("ch", sid, zone, bus, key, t), f"ch_s{sid}_b{bus}_{key}_t{t}", c)
            ch[u + (t,)] = c
        for t in range(horizon):
            c = lb.add_col(0.0, inf, cycle_cost)
            index.add(("dc", sid, zone, bus, key, t), f"dc_s{sid}_b{bus}_{key}_t{t}", c)
            dc[u + (t,)] = c

    # renewables, thermal, shedding, flows, angles
    re_col: dict[tuple, int] = {}
    for r in model.renewables:
        series = scen.res_cap.get(r.id)
        if series is None:
            raise ProgramError(f"scenario {sid}: missing res series for {r.id}")
        for t in range(horizon):
            c = lb.add_col(0.0, float(series[t]))
            index.add(("re", sid, r.id, t), f"re_s{sid}_{r.id}_t{t}", c)
            re_col[(r.id, t)] = c

    dg: dict[tuple, int] = {}
    for g in model.generators:
        costs = g.cost_profile(horizon)
        for t in range(horizon):
            rate = weight * (costs[t] + model.carbon_price * g.emission_rate)
            c = lb.add_col(g.p_min, g.p_max, rate)
            index.add(("dg", sid, g.id, t), f"dg_s{sid}_{g.id}_t{t}", c)
            dg[(g.id, t)] = c

    ls: dict[tuple, int] = {}
    for b in model.buses:
        series = scen.load_at(b.id)
        for t in range(horizon):
            c = lb.add_col(0.0, float(series[t]), weight * model.voll)
            index.add(("ls", sid, b.id, t), f"ls_s{sid}_{b.id}_t{t}", c)
            ls[(b.id, t)] = c

    fl: dict[tuple, int] = {}
    for line in model.lines:
        cross = model.is_cross_zone(line)
        lo, hi = (-inf, inf) if cross else (line.flow_min, line.flow_max)
        for t in range(horizon):
            c = lb.add_col(lo, hi)
            index.add(("fl", sid, line.id, t), f"fl_s{sid}_{line.id}_t{t}", c)
            fl[(line.id, t)] = c

    th: dict[tuple, int] = {}
    for b in model.buses:
        lo, hi = (0.0, 0.0) if b.is_reference else (-inf, inf)
        for t in range(horizon):
            c = lb.add_col(lo, hi)
            index.add(("th", sid, b.id, t), f"th_s{sid}_{b.id}_t{t}", c)
            th[(b.id, t)] = c

    # ---- storage constraints ----
    for (zone, bus, key) in units:
        tech = tech_by_key[key]
        u = (zone, bus, key)
        uname = f"{bus}_{key}"
        keep = 1.0 - tech.self_discharge_daily / 24.0
        for t in range(1, horizon + 1):
            prev = e0[u] if t == 1 else e[u + (t - 1,)]
            lb.add_row(
                [e[u + (t,)], prev, ch[u + (t - 1,)], dc[u + (t - 1,)]],
                [1.0, -keep, -tech.charge_eff, 1.0 / tech.discharge_eff],
                "E", 0.0, f"dyn_s{sid}_{uname}_t{t}")
        lb.add_row([e0[u], e[u + (horizon,)]], [1.0, -1.0], "E", 0.0,
                   f"cyc_s{sid}_{uname}")

        cap_coef = tech.duration
        floor_coef = (1.0 - tech.max_dod) * tech.duration
        p = pbs[u]
        for t in range(1, horizon + 1):
            lb.add_row([e[u + (t,)], p], [1.0, -cap_coef], "L", 0.0,
                       f"eub_s{sid}_{uname}_t{t}")
            if floor_coef > 0.0:
                lb.add_row([e[u + (t,)], p], [-1.0, floor_coef], "L", 0.0,
                           f"elb_s{sid}_{uname}_t{t}")
        for t in range(horizon):
            lb.add_row([ch[u + (t,)], dc[u + (t,)], p], [1.0, 1.0, -1.0],
                       "L", 0.0, f"sim_s{sid}_{uname}_t{t}")
        cycle_rate = (tech.cycle_limit * econ.reference_dod * tech.duration
                      / tech.lifetime_years)
        lb.add_row([dc[u + (t,)] for t in range(horizon)] + [p],
                   [1.0] * horizon + [-cycle_rate],
                   "L", 0.0, f"cycap_s{sid}_{uname}")

    # ---- thermal ramps (hour 0 wraps to the cyclic predecessor) ----
    for g in model.generators:
        for t in range(horizon):
            prev = (t - 1) % horizon
            if math.isfinite(g.ramp_up):
                lb.add_row([dg[(g.id, t)], dg[(g.id, prev)]], [1.0, -1.0],
                           "L", g.ramp_up, f"rampu_s{sid}_{g.id}_t{t}")
            if math.isfinite(g.ramp_down):
                lb.add_row([dg[(g.id, prev)], dg[(g.id, t)]], [1.0, -1.0],
                           "L", g.ramp_down, f"rampd_s{sid}_{g.id}_t{t}")

    # ---- DC flow definition ----
    for line in model.lines:
        for t in range(horizon):
            lb.add_row(
                [fl[(line.id, t)], th[(line.from_bus, t)], th[(line.to_bus, t)]],
                [1.0, -line.susceptance, line.susceptance],
                "E", 0.0, f"fld_s{sid}_{line.id}_t{t}")

    # ---- zonal exchange bounds and power balance ----
    for zone in model.zones:
        zties = ties[zone.id]
        if not zties:
            if zone.exchange_min > 0 or zone.exchange_max < 0:
                raise ProgramError(
                    f"zone {zone.id}: exchange bounds exclude 0 but the zone "
                    "has no cross-zone lines")
        else:
            for t in range(horizon):
                cols = [fl[(lid, t)] for lid, _ in zties]
                vals = [sgn for _, sgn in zties]
                if math.isfinite(zone.exchange_max):
                    lb.add_row(cols, vals, "L", zone.exchange_max,
                               f"exhi_s{sid}_{zone.id}_t{t}")
                if math.isfinite(zone.exchange_min):
                    lb.add_row(cols, vals, "G", zone.exchange_min,
                               f"exlo_s{sid}_{zone.id}_t{t}")

        zbuses = [b for b in model.buses if b.zone == zone.id]
        zgens = [g for g in model.generators if model.bus_by_id[g.bus].zone == zone.id]
        zres = [r for r in model.renewables if model.bus_by_id[r.bus].zone == zone.id]
        zunits = [u for u in units if u[0] == zone.id]
        for t in range(horizon):
            cols: list[int] = []
            vals: list[float] = []
            for g in zgens:
                cols.append(dg[(g.id, t)])
                vals.append(1.0)
            for r in zres:
                cols.append(re_col[(r.id, t)])
                vals.append(1.0)
            for u in zunits:
                cols.append(dc[u + (t,)])
                vals.append(1.0)
                cols.append(ch[u + (t,)])
                vals.append(-1.0)
            for lid, sgn in zties:
                cols.append(fl[(lid, t)])
                vals.append(sgn)
            load_total = 0.0
            for b in zbuses:
                cols.append(ls[(b.id, t)])
                vals.append(1.0)
                load_total += float(scen.load_at(b.id)[t])
            lb.add_row(cols, vals, "E", load_total, f"bal_s{sid}_{zone.id}_t{t}")


# ---------------------------------------------------------------------------
# extraction
# ---------------------------------------------------------------------------

@dataclass
class CostBreakdown:
    capital: float = 0.0
    replacement: float = 0.0
    fixed_om: float = 0.0
    variable_om: float = 0.0
    degradation: float = 0.0
    operating: float = 0.0
    emissions: float = 0.0
    shedding: float = 0.0

    @property
    def total(self) -> float:
        return (self.capital + self.replacement + self.fixed_om
                + self.variable_om + self.degradation + self.operating
                + self.emissions + self.shedding)

    def as_dict(self) -> dict[str, float]:
        return {
            "capital": self.capital, "replacement": self.replacement,
            "fixed_om": self.fixed_om, "variable_om": self.variable_om,
            "degradation": self.degradation, "operating": self.operating,
            "emissions": self.emissions, "shedding": self.shedding,
            "total": self.total,
        }


@dataclass
class DispatchSolution:
    scenario_id: str
    horizon: int
    thermal: dict[str, np.ndarray]
    renewable: dict[str, np.ndarray]
    shedding: dict[str, np.ndarray]
    flows: dict[str, np.ndarray]
    angles: dict[str, np.ndarray]
    storage: dict[tuple[str, str, str], StorageState]
    costs: CostBreakdown = field(default_factory=CostBreakdown)

    def total_shedding(self) -> float:
        return float(sum(v.sum() for v in self.shedding.values()))

    def total_renewable(self) -> float:
        return float(sum(v.sum() for v in self.renewable.values()))

    def curtailment(self, scen: Scenario) -> float:
        used = self.total_renewable()
        available = float(sum(v.sum() for v in scen.res_cap.values()))
        return available - used


@dataclass
class PlanSolution:
    objective: float
    allocation: BssAllocation
    dispatches: list[DispatchSolution]
    costs: CostBreakdown
    iterations: int
    max_infeasibility: float

    def dispatch_for(self, sid: str) -> DispatchSolution:
        for d in self.dispatches:
            if d.scenario_id == sid:
                return d
        raise KeyError(sid)


def extract_solution(result: SolveResult, built: ProgramBuild) -> PlanSolution:
    """Turn raw column values into allocation, dispatches, and cost split."""
    if result.status is not Status.OPTIMAL:
        raise SolveFailure(result.status)
    x = result.x
    index = built.index
    model = built.model
    econ = built.econ
    tech_by_key = {t.key: t for t in built.catalog}
    horizon = built.horizon

    alloc = BssAllocation(entries={
        u: float(x[index.col("pbs", *u)]) for u in built.units
    })

    expected = CostBreakdown()
    for (zone, bus, key), p in alloc.entries.items():
        tech = tech_by_key[key]
        expected.capital += storage.annualized_capital_cost(tech, econ, p)
        expected.replacement += storage.annualized_replacement_cost(tech, econ, p)
        expected.fixed_om += storage.fixed_om_cost(tech, p)

    dispatches = []
    for scen, weight in zip(built.sset.scenarios, built.sset.weights):
        sid = scen.id
        sc = CostBreakdown(capital=expected.capital,
                           replacement=expected.replacement,
                           fixed_om=expected.fixed_om)
        stor: dict[tuple[str, str, str], StorageState] = {}
        for u in built.units:
            zone, bus, key = u
            tech = tech_by_key[key]
            energy = np.empty(horizon + 1)
            energy[0] = x[index.col("e0", sid, zone, bus, key)]
            for t in range(1, horizon + 1):
                energy[t] = x[index.col("e", sid, zone, bus, key, t)]
            charge = np.array([x[index.col("ch", sid, zone, bus, key, t)]
                               for t in range(horizon)])
            discharge = np.array([x[index.col("dc", sid, zone, bus, key, t)]
                                  for t in range(horizon)])
            state = StorageState(zone=zone, bus=bus, tech_key=key,
                                 energy=energy, charge=charge,
                                 discharge=discharge)
            stor[u] = state
            vo, bd = storage.variable_om_and_degradation_cost(tech, state)
            sc.variable_om += vo
            sc.degradation += bd

        thermal = {}
        for g in model.generators:
            series = np.array([x[index.col("dg", sid, g.id, t)]
                               for t in range(horizon)])
            thermal[g.id] = series
            costs = g.cost_profile(horizon)
            sc.operating += float(np.dot(series, costs))
            sc.emissions += float(model.carbon_price * g.emission_rate * series.sum())

        renewable = {r.id: np.array([x[index.col("re", sid, r.id, t)]
                                     for t in range(horizon)])
                     for r in model.renewables}
        shedding = {b.id: np.array([x[index.col("ls", sid, b.id, t)]
                                    for t in range(horizon)])
                    for b in model.buses}
        sc.shedding += model.voll * float(sum(v.sum() for v in shedding.values()))
        flows = {l.id: np.array([x[index.col("fl", sid, l.id, t)]
                                 for t in range(horizon)])
                 for l in model.lines}
        angles = {b.id: np.array([x[index.col("th", sid, b.id, t)]
                                  for t in range(horizon)])
                  for b in model.buses}

        dispatches.append(DispatchSolution(
            scenario_id=sid, horizon=horizon, thermal=thermal,
            renewable=renewable, shedding=shedding, flows=flows,
            angles=angles, storage=stor, costs=sc))

        expected.variable_om += weight * sc.variable_om
        expected.degradation += weight * sc.degradation
        expected.operating += weight * sc.operating
        expected.emissions += weight * sc.emissions
        expected.shedding += weight * sc.shedding

    plan = PlanSolution(objective=result.objective, allocation=alloc,
                        dispatches=dispatches, costs=expected,
                        iterations=result.iterations,
                        max_infeasibility=result.max_infeasibility)
    drift = abs(expected.total - result.objective)
    if drift > 1e-6 * max(1.0, abs(result.objective)):
        raise ProgramError(
            f"cost decomposition drifts from the LP objective by {drift}")
    return plan


def solve_program(built: ProgramBuild,
                  cfg: SolverConfig | None = None) -> PlanSolution:
    result = simplex.solve(built.lp, cfg)
    return extract_solution(result, built)


# ---------------------------------------------------------------------------
# solution verification
# ---------------------------------------------------------------------------

def verify_solution(plan: PlanSolution, built: ProgramBuild) -> dict[str, float]:
    """Worst-case residuals of the physical constraints, for diagnostics."""
    model = built.model
    tech_by_key = {t.key: t for t in built.catalog}
    out = {
        "balance": 0.0, "flow_definition": 0.0, "cyclic_energy": 0.0,
        "energy_bounds": 0.0, "cycle_cap": 0.0, "simultaneity": 0.0,
        "negative_curtailment": 0.0, "balance_scale": 1.0,
    }
    for scen, disp in zip(built.sset.scenarios, plan.dispatches):
        horizon = disp.horizon
        for zone in model.zones:
            zbuses = [b.id for b in model.buses if b.zone == zone.id]
            supply = np.zeros(horizon)
            for g in model.generators:
                if model.bus_by_id[g.bus].zone == zone.id:
                    supply += disp.thermal[g.id]
            for r in model.renewables:
                if model.bus_by_id[r.bus].zone == zone.id:
                    supply += disp.renewable[r.id]
            for u, st in disp.storage.items():
                if u[0] == zone.id:
                    supply += st.discharge - st.charge
            for line in model.lines:
                zf, zt = model.line_zones(line)
                if zf == zt:
                    continue
                if zt == zone.id:
                    supply += disp.flows[line.id]
                elif zf == zone.id:
                    supply -= disp.flows[line.id]
            load = np.zeros(horizon)
            shed = np.zeros(horizon)
            for bid in zbuses:
                load += scen.load_at(bid)
                shed += disp.shedding[bid]
            resid = np.max(np.abs(supply - (load - shed))) if horizon else 0.0
            scale = max(1.0, float(load.max(initial=0.0)))
            out["balance"] = max(out["balance"], float(resid))
            out["balance_scale"] = max(out["balance_scale"], scale)

        for line in model.lines:
            implied = line.susceptance * (disp.angles[line.from_bus]
                                          - disp.angles[line.to_bus])
            resid = np.max(np.abs(disp.flows[line.id] - implied))
            out["flow_definition"] = max(out["flow_definition"], float(resid))

        for u, st in disp.storage.items():
            tech = tech_by_key[u[2]]
            p = plan.allocation.entries[u]
            out["cyclic_energy"] = max(out["cyclic_energy"],
                                       abs(float(st.energy[0] - st.energy[-1])))
            hi = tech.duration * p
            lo = (1.0 - tech.max_dod) * hi
            out["energy_bounds"] = max(
                out["energy_bounds"],
                float(np.max(st.energy - hi, initial=0.0)),
                float(np.max(lo - st.energy, initial=0.0)))
            cap = storage.annual_discharge_cap(tech, built.econ, p)
            out["cycle_cap"] = max(out["cycle_cap"],
                                   float(np.sum(st.discharge) - cap))
            out["simultaneity"] = max(out["simultaneity"],
                                      float(np.max(st.charge * st.discharge,
                                                   initial=0.0)))
        for r in model.renewables:
            slack = scen.res_cap[r.id] - disp.renewable[r.id]
            out["negative_curtailment"] = max(out["negative_curtailment"],
                                              float(np.max(-slack, initial=0.0)))
    return out
