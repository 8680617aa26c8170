"""Static grid model: zones, buses, lines, thermal generators, renewables.

The network is immutable once constructed and is shared read-only by the
program builder, the SAA driver, and the analytics layer.  All power
quantities are MW, costs $/MWh, emission rates ton CO2/MWh.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path

RES_KINDS = ("BHD", "SHD", "UPV", "DPV", "UWT")
GENERATOR_KINDS = ("FFG", "NPG")

DEFAULT_VOLL = 10_000.0  # $/MWh penalty on unserved load


class NetworkError(Exception):
    """Raised when network input files cannot be parsed into a model."""


@dataclass(frozen=True)
class Zone:
    id: str
    is_external: bool = False
    exchange_min: float = -math.inf
    exchange_max: float = math.inf


@dataclass(frozen=True)
class Bus:
    id: str
    zone: str
    is_reference: bool = False


@dataclass(frozen=True)
class TransmissionLine:
    id: str
    from_bus: str
    to_bus: str
    susceptance: float
    flow_min: float = -math.inf
    flow_max: float = math.inf


@dataclass(frozen=True)
class ThermalGenerator:
    id: str
    bus: str
    kind: str  # FFG or NPG
    p_min: float
    p_max: float
    ramp_up: float = math.inf
    ramp_down: float = math.inf
    marginal_cost: float | tuple[float, ...] = 0.0
    emission_rate: float = 0.0

    def cost_profile(self, horizon: int) -> list[float]:
        """Marginal cost per hour; scalars broadcast over the horizon."""
        if isinstance(self.marginal_cost, tuple):
            if len(self.marginal_cost) != horizon:
                raise NetworkError(
                    f"generator {self.id}: marginal_cost has "
                    f"{len(self.marginal_cost)} entries, horizon is {horizon}"
                )
            return list(self.marginal_cost)
        return [float(self.marginal_cost)] * horizon

    def peak_cost(self) -> float:
        if isinstance(self.marginal_cost, tuple):
            return max(self.marginal_cost)
        return float(self.marginal_cost)


@dataclass(frozen=True)
class RenewableSource:
    id: str
    bus: str
    kind: str  # one of RES_KINDS


@dataclass(frozen=True)
class NetworkModel:
    zones: tuple[Zone, ...]
    buses: tuple[Bus, ...]
    lines: tuple[TransmissionLine, ...]
    generators: tuple[ThermalGenerator, ...]
    renewables: tuple[RenewableSource, ...]
    carbon_price: float = 0.0
    voll: float = DEFAULT_VOLL

    @cached_property
    def zone_by_id(self) -> dict[str, Zone]:
        return {z.id: z for z in self.zones}

    @cached_property
    def bus_by_id(self) -> dict[str, Bus]:
        return {b.id: b for b in self.buses}

    @cached_property
    def buses_in_zone(self) -> dict[str, tuple[Bus, ...]]:
        out: dict[str, list[Bus]] = {z.id: [] for z in self.zones}
        for b in self.buses:
            out.setdefault(b.zone, []).append(b)
        return {z: tuple(bs) for z, bs in out.items()}

    def line_zones(self, line: TransmissionLine) -> tuple[str, str]:
        """Zone ids of the two endpoints (may be equal)."""
        return (self.bus_by_id[line.from_bus].zone,
                self.bus_by_id[line.to_bus].zone)

    def is_cross_zone(self, line: TransmissionLine) -> bool:
        zf, zt = self.line_zones(line)
        return zf != zt

    def line_is_external(self, line: TransmissionLine) -> bool:
        """Cross-zone line with at least one neighbouring-ISO endpoint."""
        zf, zt = self.line_zones(line)
        if zf == zt:
            return False
        return self.zone_by_id[zf].is_external or self.zone_by_id[zt].is_external

    def total_cost_rate(self, gen: ThermalGenerator) -> float:
        """Peak marginal cost plus carbon charge, $/MWh."""
        return gen.peak_cost() + self.carbon_price * gen.emission_rate


@dataclass
class ValidationReport:
    violations: list[str] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.violations

    def add(self, message: str) -> None:
        self.violations.append(message)


def validate_network(model: NetworkModel) -> ValidationReport:
    """Check every structural invariant; empty report iff well-formed."""
    rep = ValidationReport()

    _check_unique([z.id for z in model.zones], "zone", rep)
    _check_unique([b.id for b in model.buses], "bus", rep)
    _check_unique([l.id for l in model.lines], "line", rep)
    _check_unique([g.id for g in model.generators], "generator", rep)
    _check_unique([r.id for r in model.renewables], "renewable", rep)

    zone_ids = {z.id for z in model.zones}
    bus_ids = {b.id for b in model.buses}

    for z in model.zones:
        if z.exchange_min > z.exchange_max:
            rep.add(f"zone {z.id}: exchange_min {z.exchange_min} > exchange_max {z.exchange_max}")

    for b in model.buses:
        if b.zone not in zone_ids:
            rep.add(f"bus {b.id}: unknown zone {b.zone}")

    for l in model.lines:
        if l.from_bus == l.to_bus:
            rep.add(f"line {l.id}: from_bus == to_bus ({l.from_bus})")
        for end in (l.from_bus, l.to_bus):
            if end not in bus_ids:
                rep.add(f"line {l.id}: unknown bus {end}")
        if not (l.susceptance > 0.0) or not math.isfinite(l.susceptance):
            rep.add(f"line {l.id}: susceptance must be positive and finite, got {l.susceptance}")
        if l.flow_min > l.flow_max:
            rep.add(f"line {l.id}: flow_min {l.flow_min} > flow_max {l.flow_max}")

    for g in model.generators:
        if g.bus not in bus_ids:
            rep.add(f"generator {g.id}: unknown bus {g.bus}")
        if g.kind not in GENERATOR_KINDS:
            rep.add(f"generator {g.id}: kind must be one of {GENERATOR_KINDS}, got {g.kind!r}")
        if not (0.0 <= g.p_min <= g.p_max):
            rep.add(f"generator {g.id}: requires 0 <= p_min <= p_max, got [{g.p_min}, {g.p_max}]")
        if g.ramp_up < 0 or g.ramp_down < 0:
            rep.add(f"generator {g.id}: negative ramp rate")
        if g.emission_rate < 0:
            rep.add(f"generator {g.id}: negative emission_rate")
        if g.kind == "NPG" and g.emission_rate != 0.0:
            rep.add(f"generator {g.id}: NPG must have zero emission_rate")

    for r in model.renewables:
        if r.bus not in bus_ids:
            rep.add(f"renewable {r.id}: unknown bus {r.bus}")
        if r.kind not in RES_KINDS:
            rep.add(f"renewable {r.id}: kind must be one of {RES_KINDS}, got {r.kind!r}")

    if model.carbon_price < 0:
        rep.add(f"carbon_price must be nonnegative, got {model.carbon_price}")

    # Shedding must be the most expensive recourse, otherwise the optimizer
    # prefers dropping load over running any generator.
    if model.generators:
        worst = max(model.total_cost_rate(g) for g in model.generators)
        if model.voll <= worst:
            rep.add(
                "VOLL dominance violated: voll "
                f"{model.voll} <= max generator cost+carbon {worst}"
            )

    _check_connectivity(model, rep)
    return rep


def _check_unique(ids: list[str], label: str, rep: ValidationReport) -> None:
    seen: set[str] = set()
    for i in ids:
        if i in seen:
            rep.add(f"duplicate {label} id {i}")
        seen.add(i)


def _check_connectivity(model: NetworkModel, rep: ValidationReport) -> None:
    bus_ids = [b.id for b in model.buses]
    if not bus_ids:
        rep.add("network has no buses")
        return
    adj: dict[str, list[str]] = {b: [] for b in bus_ids}
    for l in model.lines:
        if l.from_bus in adj and l.to_bus in adj and l.from_bus != l.to_bus:
            adj[l.from_bus].append(l.to_bus)
            adj[l.to_bus].append(l.from_bus)
    seen = {bus_ids[0]}
    stack = [bus_ids[0]]
    while stack:
        for nxt in adj[stack.pop()]:
            if nxt not in seen:
                seen.add(nxt)
                stack.append(nxt)
    if len(seen) != len(bus_ids) and len(bus_ids) > 1:
        missing = sorted(set(bus_ids) - seen)
        rep.add(f"network not connected; unreachable buses: {missing}")

    refs = [b.id for b in model.buses if b.is_reference]
    if len(refs) != 1:
        rep.add(f"expected exactly one reference bus, found {refs}")


@dataclass(frozen=True)
class ZonePartition:
    buses: tuple[str, ...]
    internal_lines: tuple[str, ...]
    external_lines: tuple[str, ...]


def zonal_partition(model: NetworkModel) -> dict[str, ZonePartition]:
    """Split lines into per-zone internal sets and shared cross-zone sets.

    A cross-zone line appears in the external set of both endpoint zones;
    every other line appears in exactly one internal set.
    """
    rep = validate_network(model)
    if not rep.ok:
        raise ValueError("model failed validation: " + "; ".join(rep.violations))

    internal: dict[str, list[str]] = {z.id: [] for z in model.zones}
    external: dict[str, list[str]] = {z.id: [] for z in model.zones}
    for l in model.lines:
        zf, zt = model.line_zones(l)
        if zf == zt:
            internal[zf].append(l.id)
        else:
            external[zf].append(l.id)
            external[zt].append(l.id)
    return {
        z.id: ZonePartition(
            buses=tuple(b.id for b in model.buses_in_zone.get(z.id, ())),
            internal_lines=tuple(internal[z.id]),
            external_lines=tuple(external[z.id]),
        )
        for z in model.zones
    }


# ---------------------------------------------------------------------------
# ingestion
# ---------------------------------------------------------------------------

def load_network(path: str | Path, *, voll: float | None = None,
                 carbon_price: float | None = None) -> NetworkModel:
    """Load a network from a JSON document or a directory of CSV tables.

    ``voll`` and ``carbon_price`` override whatever the file provides
    (CSV directories carry no scalars, so the overrides or defaults apply).
    """
    path = Path(path)
    if path.is_dir():
        raw = _read_csv_dir(path)
    else:
        try:
            raw = json.loads(path.read_text())
        except FileNotFoundError:
            raise NetworkError(f"network input not found: {path}") from None
        except json.JSONDecodeError as exc:
            raise NetworkError(f"{path}: invalid JSON: {exc}") from None
    return _model_from_raw(raw, path, voll=voll, carbon_price=carbon_price)


def _model_from_raw(raw: dict, origin: Path, *, voll: float | None,
                    carbon_price: float | None) -> NetworkModel:
    for key in ("zones", "buses", "lines", "generators", "renewables"):
        if key not in raw:
            raise NetworkError(f"{origin}: missing section {key!r}")
    try:
        zones = tuple(
            Zone(
                id=str(z["id"]),
                is_external=_as_bool(z.get("is_external", False)),
                exchange_min=_as_float(z.get("exchange_min", -math.inf)),
                exchange_max=_as_float(z.get("exchange_max", math.inf)),
            )
            for z in raw["zones"]
        )
        buses = tuple(
            Bus(id=str(b["id"]), zone=str(b["zone"]),
                is_reference=_as_bool(b.get("is_reference", False)))
            for b in raw["buses"]
        )
        lines = tuple(
            TransmissionLine(
                id=str(l["id"]), from_bus=str(l["from_bus"]), to_bus=str(l["to_bus"]),
                susceptance=_as_float(l["susceptance"]),
                flow_min=_as_float(l.get("flow_min", -math.inf)),
                flow_max=_as_float(l.get("flow_max", math.inf)),
            )
            for l in raw["lines"]
        )
        generators = tuple(
            ThermalGenerator(
                id=str(g["id"]), bus=str(g["bus"]), kind=str(g["kind"]),
                p_min=_as_float(g["p_min"]), p_max=_as_float(g["p_max"]),
                ramp_up=_as_float(g.get("ramp_up", math.inf)),
                ramp_down=_as_float(g.get("ramp_down", math.inf)),
                marginal_cost=_as_cost(g.get("marginal_cost", 0.0)),
                emission_rate=_as_float(g.get("emission_rate", 0.0)),
            )
            for g in raw["generators"]
        )
        renewables = tuple(
            RenewableSource(id=str(r["id"]), bus=str(r["bus"]), kind=str(r["kind"]))
            for r in raw["renewables"]
        )
    except KeyError as exc:
        raise NetworkError(f"{origin}: missing required column/field {exc}") from None
    except ValueError as exc:
        raise NetworkError(f"{origin}: {exc}") from None

    if voll is None:
        voll = _as_float(raw.get("voll", DEFAULT_VOLL))
    if carbon_price is None:
        carbon_price = _as_float(raw.get("carbon_price", 0.0))
    return NetworkModel(zones=zones, buses=buses, lines=lines,
                        generators=generators, renewables=renewables,
                        carbon_price=carbon_price, voll=voll)


def _read_csv_dir(path: Path) -> dict:
    tables = {
        "zones": "zones.csv",
        "buses": "buses.csv",
        "lines": "lines.csv",
        "generators": "generators.csv",
        "renewables": "renewables.csv",
    }
    raw: dict = {}
    for key, fname in tables.items():
        fpath = path / fname
        if not fpath.exists():
            raise NetworkError(f"missing table {fpath}")
        with fpath.open(newline="") as fh:
            rows = list(csv.DictReader(fh))
        for i, row in enumerate(rows):
            cleaned = {k.strip(): v.strip() for k, v in row.items() if k is not None}
            if any(v is None for v in row.values()):
                raise NetworkError(f"{fpath}: row {i + 2}: ragged row")
            rows[i] = {k: v for k, v in cleaned.items() if v != ""}
        raw[key] = rows
    return raw


def _as_bool(v) -> bool:
    if isinstance(v, bool):
        return v
    s = str(v).strip().lower()
    if s in ("true", "1", "yes"):
        return True
    if s in ("false", "0", "no", ""):
        return False
    raise ValueError(f"cannot interpret {v!r} as a boolean")


def _as_float(v) -> float:
    if isinstance(v, str):
        s = v.strip().lower()
        if s in ("inf", "+inf", "infinity"):
            return math.inf
        if s in ("-inf", "-infinity"):
            return -math.inf
    x = float(v)
    if math.isnan(x):
        raise ValueError("NaN is not a valid input value")
    return x


def _as_cost(v) -> float | tuple[float, ...]:
    if isinstance(v, (list, tuple)):
        return tuple(_as_float(x) for x in v)
    return _as_float(v)
