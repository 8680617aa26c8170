"""Scenario ingestion, validation, sampling, and averaging.

A scenario is one realization of the uncertain inputs: an hourly load series
per bus and an hourly generation cap per renewable source.  Scenario sets
are immutable after loading; sampling takes an explicit seed so replicated
draws are reproducible regardless of execution order.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np


class ScenarioError(Exception):
    """Raised for any scenario ingestion or consistency failure."""


@dataclass(frozen=True)
class Scenario:
    id: str
    horizon: int
    load: dict[str, np.ndarray]      # bus id -> (T,) MW
    res_cap: dict[str, np.ndarray]   # renewable source id -> (T,) MW

    def load_at(self, bus: str) -> np.ndarray:
        series = self.load.get(bus)
        if series is None:
            return np.zeros(self.horizon)
        return series

    def total_load(self) -> float:
        return float(sum(s.sum() for s in self.load.values()))


@dataclass(frozen=True)
class ScenarioSet:
    scenarios: tuple[Scenario, ...]
    weights: np.ndarray

    def __post_init__(self):
        if len(self.scenarios) != len(self.weights):
            raise ScenarioError("weights and scenarios differ in length")
        if len(self.scenarios) == 0:
            raise ScenarioError("scenario set is empty")
        if np.any(self.weights < 0):
            raise ScenarioError("negative scenario weight")
        total = float(np.sum(self.weights))
        if abs(total - 1.0) > 1e-9:
            raise ScenarioError(f"weights sum to {total}, expected 1")
        ids = [s.id for s in self.scenarios]
        if len(set(ids)) != len(ids):
            raise ScenarioError("duplicate scenario ids")
        horizons = {s.horizon for s in self.scenarios}
        if len(horizons) != 1:
            raise ScenarioError(f"inconsistent horizons {sorted(horizons)}")

    def __len__(self) -> int:
        return len(self.scenarios)

    @property
    def horizon(self) -> int:
        return self.scenarios[0].horizon

    @property
    def ids(self) -> tuple[str, ...]:
        return tuple(s.id for s in self.scenarios)

    def by_id(self, sid: str) -> Scenario:
        for s in self.scenarios:
            if s.id == sid:
                return s
        raise ScenarioError(f"unknown scenario id {sid!r}")

    def subset(self, ids: list[str]) -> "ScenarioSet":
        """Uniformly weighted subset in the given order."""
        picked = tuple(self.by_id(i) for i in ids)
        return ScenarioSet(picked, np.full(len(picked), 1.0 / len(picked)))

    def singleton(self, sid: str) -> "ScenarioSet":
        return ScenarioSet((self.by_id(sid),), np.array([1.0]))


def make_uniform_set(scenarios: list[Scenario]) -> ScenarioSet:
    n = len(scenarios)
    if n == 0:
        raise ScenarioError("scenario set is empty")
    return ScenarioSet(tuple(scenarios), np.full(n, 1.0 / n))


# ---------------------------------------------------------------------------
# ingestion
# ---------------------------------------------------------------------------

def load_scenarios(path: str | Path) -> ScenarioSet:
    """Load ``<id>.csv`` files from a scenario directory.

    An optional ``manifest.json`` selects ids and weights; without it every
    CSV in the directory is taken in name order with uniform weights.
    Each file needs an ``hour`` column plus ``load_<bus>`` and ``res_<id>``
    columns, identical across the whole set.
    """
    path = Path(path)
    if not path.is_dir():
        raise ScenarioError(f"scenario directory not found: {path}")

    manifest = path / "manifest.json"
    weights = None
    if manifest.exists():
        try:
            doc = json.loads(manifest.read_text())
        except json.JSONDecodeError as exc:
            raise ScenarioError(f"{manifest}: invalid JSON: {exc}") from None
        entries = doc.get("scenarios")
        if not isinstance(entries, list) or not entries:
            raise ScenarioError(f"{manifest}: expected a nonempty 'scenarios' list")
        ids = [str(e["id"]) for e in entries]
        if any("weight" in e for e in entries):
            weights = np.array([float(e.get("weight", 0.0)) for e in entries])
    else:
        ids = sorted(p.stem for p in path.glob("*.csv"))
        if not ids:
            raise ScenarioError(f"no scenario files in {path}")

    scenarios = [_read_scenario_csv(path / f"{sid}.csv", sid) for sid in ids]

    columns = {(tuple(sorted(s.load)), tuple(sorted(s.res_cap))) for s in scenarios}
    if len(columns) != 1:
        raise ScenarioError(
            "scenario files disagree on load/res series; every scenario must "
            "carry the same columns"
        )
    horizons = sorted({s.horizon for s in scenarios})
    if len(horizons) != 1:
        detail = {s.id: s.horizon for s in scenarios}
        raise ScenarioError(f"ragged horizon across scenarios: {detail}")

    if weights is None:
        return make_uniform_set(scenarios)
    total = float(np.sum(weights))
    if total <= 0:
        raise ScenarioError(f"{manifest}: weights must have a positive sum")
    return ScenarioSet(tuple(scenarios), weights / total)


def _read_scenario_csv(fpath: Path, sid: str) -> Scenario:
    if not fpath.exists():
        raise ScenarioError(f"missing scenario file {fpath}")
    with fpath.open(newline="") as fh:
        reader = csv.DictReader(fh)
        fields = reader.fieldnames or []
        if "hour" not in fields:
            raise ScenarioError(f"{fpath}: missing 'hour' column")
        load_cols = [c for c in fields if c.startswith("load_")]
        res_cols = [c for c in fields if c.startswith("res_")]
        unknown = [c for c in fields
                   if c != "hour" and c not in load_cols and c not in res_cols]
        if unknown:
            raise ScenarioError(f"{fpath}: unrecognized columns {unknown}")
        rows = list(reader)
    if not rows:
        raise ScenarioError(f"{fpath}: no data rows")

    horizon = len(rows)
    load = {c[len("load_"):]: np.zeros(horizon) for c in load_cols}
    res = {c[len("res_"):]: np.zeros(horizon) for c in res_cols}
    for t, row in enumerate(rows):
        line = t + 2
        for col in load_cols + res_cols:
            raw = row.get(col)
            if raw is None or raw.strip() == "":
                raise ScenarioError(f"{fpath}: line {line}: missing value in {col}")
            try:
                val = float(raw)
            except ValueError:
                raise ScenarioError(
                    f"{fpath}: line {line}: bad number {raw!r} in {col}") from None
            if not math.isfinite(val):
                raise ScenarioError(f"{fpath}: line {line}: non-finite value in {col}")
            if val < 0:
                key = col.split("_", 1)[1]
                raise ScenarioError(
                    f"{fpath}: negative value at ({key}, hour {t}) in column {col}")
            if col in load_cols:
                load[col[len("load_"):]][t] = val
            else:
                res[col[len("res_"):]][t] = val

    for d in (load, res):
        for k in d:
            d[k].setflags(write=False)
    return Scenario(id=sid, horizon=horizon, load=load, res_cap=res)


def write_scenario_csv(path: str | Path, scenario: Scenario) -> None:
    """Inverse of the reader; used to build fixtures and round-trip tests."""
    path = Path(path)
    load_cols = sorted(scenario.load)
    res_cols = sorted(scenario.res_cap)
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["hour"] + [f"load_{c}" for c in load_cols]
                        + [f"res_{c}" for c in res_cols])
        for t in range(scenario.horizon):
            row = [t]
            row += [f"{scenario.load[c][t]:.6g}" for c in load_cols]
            row += [f"{scenario.res_cap[c][t]:.6g}" for c in res_cols]
            writer.writerow(row)


# ---------------------------------------------------------------------------
# sampling and averaging
# ---------------------------------------------------------------------------

def derive_seed(master_seed: int, index: int) -> int:
    """Stable per-replication seed; independent of execution order."""
    ss = np.random.SeedSequence((master_seed, index))
    return int(ss.generate_state(1, np.uint64)[0])


def sample_without_replacement(sset: ScenarioSet, m: int, seed: int) -> ScenarioSet:
    """Draw ``m`` distinct scenarios uniformly; weights become 1/m."""
    n = len(sset)
    if not (1 <= m <= n):
        raise ValueError(f"sample size {m} out of range [1, {n}]")
    rng = np.random.default_rng(seed)
    idx = rng.choice(n, size=m, replace=False)
    picked = tuple(sset.scenarios[int(i)] for i in idx)
    return ScenarioSet(picked, np.full(m, 1.0 / m))


def expected_scenario(sset: ScenarioSet) -> Scenario:
    """Weight-averaged scenario (the deterministic 'expected value' input)."""
    horizon = sset.horizon
    load_keys = sorted({k for s in sset.scenarios for k in s.load})
    res_keys = sorted({k for s in sset.scenarios for k in s.res_cap})
    load = {k: np.zeros(horizon) for k in load_keys}
    res = {k: np.zeros(horizon) for k in res_keys}
    for s, w in zip(sset.scenarios, sset.weights):
        for k in load_keys:
            if k in s.load:
                load[k] += w * s.load[k]
        for k in res_keys:
            if k in s.res_cap:
                res[k] += w * s.res_cap[k]
    for d in (load, res):
        for k in d:
            d[k].setflags(write=False)
    return Scenario(id="expected", horizon=horizon, load=load, res_cap=res)


def check_compatible(model, sset: ScenarioSet) -> list[str]:
    """Cross-check a scenario set against a network model."""
    problems = []
    bus_ids = {b.id for b in model.buses}
    res_ids = {r.id for r in model.renewables}
    sample = sset.scenarios[0]
    for bus in sample.load:
        if bus not in bus_ids:
            problems.append(f"scenario load column references unknown bus {bus!r}")
    for rid in res_ids:
        if rid not in sample.res_cap:
            problems.append(f"missing res series for renewable source {rid!r}")
    for rid in sample.res_cap:
        if rid not in res_ids:
            problems.append(f"scenario res column references unknown source {rid!r}")
    return problems
