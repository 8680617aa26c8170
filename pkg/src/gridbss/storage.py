"""Battery technology catalog, storage dynamics, and cost formulas.

Catalog files carry vendor-style units ($/kWh, $/kW, $/kW-yr, percent per
day/year); everything is normalized at ingestion so that internal math is
uniformly $/MWh, $/MW, and plain fractions.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

#: Base characteristics per technology, in catalog-file units:
#: (energy capacity $/kWh, PCS $/kW, balance-of-plant $/kW, construction &
#: commissioning $/kWh, replacement $/kWh, fixed O&M $/kW-yr, variable O&M
#: $/MWh, round-trip eff., discharge eff., max DOD, self-discharge %/day,
#: annual RTE degradation %, cycle limit at reference DOD, lifetime years,
#: allowed duration range in hours).
TECHNOLOGY_DATA: dict[str, dict] = {
    "NaSB":  dict(energy_capacity_cost=465.0, pcs_cost=211.0, bop_cost=95.0,
                  candc_cost=127.0, replacement_cost=199.8, fixed_om=3.96,
                  variable_om=1.98, rte=0.75, discharge_eff=0.85, max_dod=0.90,
                  self_discharge_daily=0.05, rte_degradation=0.34,
                  cycle_limit=4000, lifetime_years=13, durations=(2, 8)),
    "LiB":   dict(energy_capacity_cost=189.0, pcs_cost=211.0, bop_cost=95.0,
                  candc_cost=96.0, replacement_cost=409.59, fixed_om=7.59,
                  variable_om=2.31, rte=0.85, discharge_eff=0.85, max_dod=0.80,
                  self_discharge_daily=0.20, rte_degradation=0.50,
                  cycle_limit=3500, lifetime_years=10, durations=(2, 8)),
    "LAB":   dict(energy_capacity_cost=220.0, pcs_cost=211.0, bop_cost=95.0,
                  candc_cost=167.0, replacement_cost=190.92, fixed_om=3.74,
                  variable_om=0.407, rte=0.72, discharge_eff=0.85, max_dod=0.65,
                  self_discharge_daily=0.08, rte_degradation=5.4,
                  cycle_limit=900, lifetime_years=3, durations=(2, 8)),
    "ZEBRA": dict(energy_capacity_cost=482.0, pcs_cost=211.0, bop_cost=95.0,
                  candc_cost=110.0, replacement_cost=202.02, fixed_om=6.05,
                  variable_om=0.66, rte=0.83, discharge_eff=0.85, max_dod=0.90,
                  self_discharge_daily=0.30, rte_degradation=0.35,
                  cycle_limit=3500, lifetime_years=12, durations=(2, 8)),
    "ZnBrB": dict(energy_capacity_cost=192.0, pcs_cost=211.0, bop_cost=95.0,
                  candc_cost=164.0, replacement_cost=216.45, fixed_om=4.73,
                  variable_om=0.66, rte=0.72, discharge_eff=0.78, max_dod=1.00,
                  self_discharge_daily=0.0, rte_degradation=1.5,
                  cycle_limit=3500, lifetime_years=10, durations=(2, 10)),
    "VRFB":  dict(energy_capacity_cost=393.0, pcs_cost=211.0, bop_cost=95.0,
                  candc_cost=180.0, replacement_cost=144.3, fixed_om=9.35,
                  variable_om=0.99, rte=0.70, discharge_eff=0.70, max_dod=1.00,
                  self_discharge_daily=0.15, rte_degradation=0.40,
                  cycle_limit=10000, lifetime_years=15, durations=(2, 12)),
}

#: Placeholder degradation cost, user-supplied in real catalogs ($/MWh).
DEFAULT_DEGRADATION_COST = 5.0


class CatalogError(Exception):
    """Raised when a technology catalog fails ingestion or validation."""


@dataclass(frozen=True)
class BssTechnology:
    """One (technology, storage duration) variant.

    Costs are internal units: $/MWh for energy-based costs, $/MW and $/MW-yr
    for power-based costs.  Efficiencies, DOD, and rates are fractions.
    """
    name: str
    duration: float                 # hours of discharge at rated power
    energy_capacity_cost: float     # $/MWh
    pcs_cost: float                 # $/MW
    bop_cost: float                 # $/MW
    candc_cost: float               # $/MWh
    replacement_cost: float         # $/MWh
    fixed_om: float                 # $/MW-yr
    variable_om: float              # $/MWh throughput
    degradation_cost: float         # $/MWh throughput
    rte: float
    discharge_eff: float
    charge_eff: float
    max_dod: float
    self_discharge_daily: float     # fraction of stored energy lost per day
    rte_degradation: float          # annual RTE degradation, fraction
    cycle_limit: float              # cycles at the reference DOD
    lifetime_years: float

    @property
    def key(self) -> str:
        """Stable identifier used in allocations, columns, and file output."""
        return f"{self.name}{self.duration:g}"

    def validate(self) -> list[str]:
        problems = []
        if not (0.0 < self.charge_eff <= 1.0):
            problems.append(f"{self.key}: charge_eff out of (0, 1]")
        if not (0.0 < self.discharge_eff <= 1.0):
            problems.append(f"{self.key}: discharge_eff out of (0, 1]")
        if abs(self.rte - self.charge_eff * self.discharge_eff) > 1e-9:
            problems.append(f"{self.key}: rte != charge_eff * discharge_eff")
        if not (0.0 < self.max_dod <= 1.0):
            problems.append(f"{self.key}: max_dod out of (0, 1]")
        if not (0.0 <= self.self_discharge_daily < 1.0):
            problems.append(f"{self.key}: self_discharge_daily out of [0, 1)")
        if self.duration <= 0:
            problems.append(f"{self.key}: duration must be positive")
        rng = TECHNOLOGY_DATA.get(self.name, {}).get("durations")
        if rng and not (rng[0] <= self.duration <= rng[1]):
            problems.append(
                f"{self.key}: duration {self.duration} outside allowed "
                f"range {rng[0]}-{rng[1]} h"
            )
        for label in ("energy_capacity_cost", "pcs_cost", "bop_cost", "candc_cost",
                      "replacement_cost", "fixed_om", "variable_om",
                      "degradation_cost"):
            if getattr(self, label) < 0:
                problems.append(f"{self.key}: negative {label}")
        if self.cycle_limit <= 0 or self.lifetime_years <= 0:
            problems.append(f"{self.key}: cycle_limit and lifetime_years must be positive")
        return problems


@dataclass(frozen=True)
class PlanningEconomics:
    interest_rate: float = 0.05   # fraction per year
    planning_horizon: int = 20    # years
    reference_dod: float = 0.8    # DOD used for equivalent-cycle counting

    def __post_init__(self):
        if not self.interest_rate > 0:
            raise ValueError(f"interest_rate must be > 0, got {self.interest_rate}")
        if self.planning_horizon < 1:
            raise ValueError(f"planning_horizon must be >= 1, got {self.planning_horizon}")
        if not (0.0 < self.reference_dod <= 1.0):
            raise ValueError(f"reference_dod must be in (0, 1], got {self.reference_dod}")


@dataclass(frozen=True)
class BssAllocation:
    """First-stage decision: rated power per (zone, bus, technology key)."""
    entries: dict[tuple[str, str, str], float]

    @property
    def total(self) -> float:
        return float(sum(self.entries.values()))

    def rated_power(self, zone: str, bus: str, tech_key: str) -> float:
        return self.entries.get((zone, bus, tech_key), 0.0)

    def nonzero(self, tol: float = 1e-9) -> dict[tuple[str, str, str], float]:
        return {k: v for k, v in self.entries.items() if v > tol}

    def validate(self, cap: float | None = None, tol: float = 1e-9) -> list[str]:
        problems = [f"{k}: negative rated power {v}"
                    for k, v in self.entries.items() if v < -tol]
        if cap is not None and self.total > cap + tol:
            problems.append(f"total rated power {self.total} exceeds cap {cap}")
        return problems

    def to_jsonable(self) -> list[dict]:
        return [
            {"zone": z, "bus": b, "technology": t, "rated_power_mw": p}
            for (z, b, t), p in sorted(self.entries.items())
        ]

    @classmethod
    def from_jsonable(cls, items: list[dict]) -> "BssAllocation":
        return cls(entries={
            (d["zone"], d["bus"], d["technology"]): float(d["rated_power_mw"])
            for d in items
        })


@dataclass
class StorageState:
    """Hourly trajectory of one installed unit over a horizon of T hours.

    ``energy`` has T+1 entries (index 0 is the initial level, tied to the
    final level by the cyclic condition); ``charge`` and ``discharge`` have
    T entries of MW.
    """
    zone: str
    bus: str
    tech_key: str
    energy: np.ndarray
    charge: np.ndarray
    discharge: np.ndarray

    def throughput(self) -> float:
        """Total charged plus discharged energy, MWh."""
        return float(np.sum(self.charge) + np.sum(self.discharge))

    def check(self, tech: BssTechnology, rated_power: float,
              tol: float = 1e-6) -> list[str]:
        problems = []
        e_hi = tech.duration * rated_power
        e_lo = (1.0 - tech.max_dod) * e_hi
        if np.any(self.energy > e_hi + tol) or np.any(self.energy < e_lo - tol):
            problems.append(f"{self.tech_key}@{self.bus}: energy outside [{e_lo}, {e_hi}]")
        if np.any(self.charge < -tol) or np.any(self.discharge < -tol):
            problems.append(f"{self.tech_key}@{self.bus}: negative charge/discharge")
        if np.any(self.charge + self.discharge > rated_power + tol):
            problems.append(f"{self.tech_key}@{self.bus}: charge+discharge exceeds rating")
        if abs(self.energy[0] - self.energy[-1]) > tol:
            problems.append(f"{self.tech_key}@{self.bus}: cyclic energy condition broken")
        return problems


# ---------------------------------------------------------------------------
# storage dynamics and cost formulas
# ---------------------------------------------------------------------------

def step_energy(e_prev: float, charge: float, discharge: float,
                tech: BssTechnology) -> float:
    """One-hour energy update with charging losses and daily self-discharge."""
    return (e_prev
            + tech.charge_eff * charge
            - discharge / tech.discharge_eff
            - (tech.self_discharge_daily / 24.0) * e_prev)


def capital_recovery_factor(rate: float, years: float) -> float:
    """Annuity factor spreading a present cost over ``years`` at ``rate``."""
    if rate <= 0:
        raise ValueError("interest rate must be positive")
    growth = (1.0 + rate) ** years
    return rate * growth / (growth - 1.0)


def sinking_fund_factor(rate: float, years: float) -> float:
    """Annual payment accumulating to one unit after ``years`` at ``rate``."""
    if rate <= 0:
        raise ValueError("interest rate must be positive")
    return rate / ((1.0 + rate) ** years - 1.0)


def annual_discharge_cap(tech: BssTechnology, econ: PlanningEconomics,
                         rated_power: float) -> float:
    """Yearly discharge budget (MWh) implied by the equivalent-cycle limit."""
    return (tech.cycle_limit * econ.reference_dod * tech.duration * rated_power
            / tech.lifetime_years)


def capital_cost_rate(tech: BssTechnology, econ: PlanningEconomics) -> float:
    """Annualized capital cost per MW of rated power, $/MW-yr."""
    raw = (tech.energy_capacity_cost * tech.duration
           + tech.pcs_cost + tech.bop_cost
           + tech.candc_cost * tech.duration)
    return raw * capital_recovery_factor(econ.interest_rate, econ.planning_horizon)


def replacement_cost_rate(tech: BssTechnology, econ: PlanningEconomics) -> float:
    """Annualized replacement cost per MW of rated power, $/MW-yr."""
    return (tech.replacement_cost * tech.duration
            * sinking_fund_factor(econ.interest_rate, tech.lifetime_years))


def annualized_capital_cost(tech: BssTechnology, econ: PlanningEconomics,
                            rated_power: float) -> float:
    return capital_cost_rate(tech, econ) * rated_power


def annualized_replacement_cost(tech: BssTechnology, econ: PlanningEconomics,
                                rated_power: float) -> float:
    return replacement_cost_rate(tech, econ) * rated_power


def fixed_om_cost(tech: BssTechnology, rated_power: float) -> float:
    return tech.fixed_om * rated_power


def throughput_cost_rate(tech: BssTechnology) -> tuple[float, float]:
    """(variable O&M, degradation) cost per MWh of charge+discharge."""
    return tech.variable_om, tech.degradation_cost * tech.rte_degradation / tech.rte


def variable_om_and_degradation_cost(tech: BssTechnology,
                                     states: StorageState) -> tuple[float, float]:
    """Total variable O&M and degradation cost of one unit's trajectory."""
    vo_rate, bd_rate = throughput_cost_rate(tech)
    throughput = states.throughput()
    return vo_rate * throughput, bd_rate * throughput


# ---------------------------------------------------------------------------
# catalog construction and ingestion
# ---------------------------------------------------------------------------

_CATALOG_COLUMNS = (
    "name", "duration", "energy_capacity_cost", "pcs_cost", "bop_cost",
    "candc_cost", "replacement_cost", "fixed_om", "variable_om",
    "degradation_cost", "rte", "discharge_eff", "max_dod",
    "self_discharge_daily", "rte_degradation", "cycle_limit", "lifetime_years",
)


def _tech_from_catalog_units(name: str, duration: float, row: dict,
                             degradation_cost: float | None = None) -> BssTechnology:
    """Build a variant from vendor units, normalizing to internal units."""
    rte = float(row["rte"])
    discharge_eff = float(row["discharge_eff"])
    if discharge_eff <= 0:
        raise CatalogError(f"{name}: discharge_eff must be positive")
    if degradation_cost is None:
        degradation_cost = DEFAULT_DEGRADATION_COST
    return BssTechnology(
        name=name,
        duration=float(duration),
        energy_capacity_cost=float(row["energy_capacity_cost"]) * 1000.0,
        pcs_cost=float(row["pcs_cost"]) * 1000.0,
        bop_cost=float(row["bop_cost"]) * 1000.0,
        candc_cost=float(row["candc_cost"]) * 1000.0,
        replacement_cost=float(row["replacement_cost"]) * 1000.0,
        fixed_om=float(row["fixed_om"]) * 1000.0,
        variable_om=float(row["variable_om"]),
        degradation_cost=float(degradation_cost),
        rte=rte,
        discharge_eff=discharge_eff,
        charge_eff=rte / discharge_eff,
        max_dod=float(row["max_dod"]),
        self_discharge_daily=float(row["self_discharge_daily"]) / 100.0,
        rte_degradation=float(row["rte_degradation"]) / 100.0,
        cycle_limit=float(row["cycle_limit"]),
        lifetime_years=float(row["lifetime_years"]),
    )


def default_catalog(durations: dict[str, list[float]] | None = None
                    ) -> list[BssTechnology]:
    """Enumerate built-in technologies over storage-duration variants.

    Without an explicit duration map, every even-hour duration inside each
    technology's allowed range is produced.
    """
    out: list[BssTechnology] = []
    for name, row in TECHNOLOGY_DATA.items():
        if durations is not None:
            wanted = durations.get(name, [])
        else:
            lo, hi = row["durations"]
            wanted = [d for d in range(2, int(hi) + 1, 2) if d >= lo]
        for d in wanted:
            out.append(_tech_from_catalog_units(name, float(d), row))
    _ensure_valid(out)
    return out


def load_catalog(path: str | Path) -> list[BssTechnology]:
    """Read a technology catalog CSV (one row per (technology, duration))."""
    path = Path(path)
    if not path.exists():
        raise CatalogError(f"catalog not found: {path}")
    with path.open(newline="") as fh:
        reader = csv.DictReader(fh)
        header = set(reader.fieldnames or ())
        required = set(_CATALOG_COLUMNS) - {"degradation_cost"}
        missing = required - header
        if missing:
            raise CatalogError(f"{path}: missing columns {sorted(missing)}")
        out = []
        for i, row in enumerate(reader):
            line = i + 2
            try:
                deg = row.get("degradation_cost", "")
                deg_val = float(deg) if deg not in (None, "") else None
                out.append(_tech_from_catalog_units(
                    row["name"].strip(), float(row["duration"]), row,
                    degradation_cost=deg_val))
            except (ValueError, TypeError) as exc:
                raise CatalogError(f"{path}: line {line}: {exc}") from None
    if not out:
        raise CatalogError(f"{path}: catalog is empty")
    _ensure_valid(out)
    return out


def write_catalog(path: str | Path, catalog: list[BssTechnology]) -> None:
    """Write a catalog back out in vendor units (inverse of load_catalog)."""
    path = Path(path)
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(_CATALOG_COLUMNS)
        for t in catalog:
            writer.writerow([
                t.name, f"{t.duration:g}",
                f"{t.energy_capacity_cost / 1000.0:g}", f"{t.pcs_cost / 1000.0:g}",
                f"{t.bop_cost / 1000.0:g}", f"{t.candc_cost / 1000.0:g}",
                f"{t.replacement_cost / 1000.0:g}", f"{t.fixed_om / 1000.0:g}",
                f"{t.variable_om:g}", f"{t.degradation_cost:g}",
                f"{t.rte:g}", f"{t.discharge_eff:g}", f"{t.max_dod:g}",
                f"{t.self_discharge_daily * 100.0:g}",
                f"{t.rte_degradation * 100.0:g}",
                f"{t.cycle_limit:g}", f"{t.lifetime_years:g}",
            ])


def _ensure_valid(catalog: list[BssTechnology]) -> None:
    problems = []
    seen: set[str] = set()
    for t in catalog:
        if t.key in seen:
            problems.append(f"duplicate catalog entry {t.key}")
        seen.add(t.key)
        problems.extend(t.validate())
    if problems:
        raise CatalogError("; ".join(problems))


def with_degradation_cost(tech: BssTechnology, cost: float) -> BssTechnology:
    return replace(tech, degradation_cost=cost)
