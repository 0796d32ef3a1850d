"""Event-counting energy model.

Dynamic energy is a dot product of event counts with a per-event cost table;
leakage charges each powered component for the whole run's wall time, with
unused memory banks power-gated.  The default table carries representative
28 nm-class relative costs only (DRAM roughly 200x on-chip SRAM per byte);
every assertion downstream is about ratios and counts, never absolute joules.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import TYPE_CHECKING

from .sched import Target

if TYPE_CHECKING:  # pragma: no cover
    from .arch import SimReport

MIB = float(2**20)


class EnergyConfigError(ValueError):
    """A counted event class has no cost entry."""


@dataclass(frozen=True)
class EnergyTable:
    # joules per byte moved
    weight_buffer_read: float | None = 1.0e-12
    weight_buffer_write: float | None = 1.2e-12
    row_buffer_read: float | None = 0.10e-12
    row_buffer_write: float | None = 0.12e-12
    input_buffer_read: float | None = 0.15e-12
    input_buffer_write: float | None = 0.18e-12
    intermediate_memory_read: float | None = 1.2e-12
    intermediate_memory_write: float | None = 1.4e-12
    dram_read: float | None = 200.0e-12
    dram_write: float | None = 200.0e-12
    # joules per operation
    dpu_subvector_op: float | None = 30.0e-12
    mu_op: float | None = 4.0e-12
    # leakage, watts; memories scale with powered capacity
    sram_leakage_w_per_mib: float = 3.0e-3
    logic_leakage_w: float = 20.0e-3

    def __post_init__(self):
        for name, v in self.__dict__.items():
            if v is not None and v < 0:
                raise EnergyConfigError(f"{name} must be non-negative")
        onchip = [self.weight_buffer_read, self.row_buffer_read,
                  self.input_buffer_read, self.intermediate_memory_read]
        if self.dram_read is not None and any(
                c is not None and self.dram_read <= c for c in onchip):
            raise EnergyConfigError(
                "dram per-byte cost must exceed every on-chip per-byte cost")

    def cost(self, name: str) -> float:
        v = getattr(self, name)
        if v is None:
            raise EnergyConfigError(f"no cost entry for counted event class '{name}'")
        return v

    def to_json(self) -> dict:
        return dict(self.__dict__)

    @classmethod
    def from_json(cls, obj: dict) -> "EnergyTable":
        return cls(**obj)


_BYTE_CLASSES = {
    Target.weight_buffer: ("weight_buffer_read", "weight_buffer_write"),
    Target.row_buffer: ("row_buffer_read", "row_buffer_write"),
    Target.input_buffer: ("input_buffer_read", "input_buffer_write"),
    Target.intermediate_memory: ("intermediate_memory_read", "intermediate_memory_write"),
    Target.dram: ("dram_read", "dram_write"),
}

SCRATCHPAD_COMPONENTS = ("weight_buffer", "row_buffer", "input_buffer",
                         "intermediate_memory")
OPERATION_COMPONENTS = ("dpu", "mu")


@dataclass
class EnergyReport:
    dynamic_by_component: dict[str, float]
    leakage_by_component: dict[str, float]
    meta: dict

    @property
    def dynamic_total(self) -> float:
        return sum(self.dynamic_by_component.values())

    @property
    def leakage_total(self) -> float:
        return sum(self.leakage_by_component.values())

    @property
    def total(self) -> float:
        return self.dynamic_total + self.leakage_total

    @property
    def fractions(self) -> dict[str, float]:
        """Share of total energy per group: on-chip scratchpads, operations, dram."""
        scratch = (sum(self.dynamic_by_component[c] for c in SCRATCHPAD_COMPONENTS)
                   + sum(v for k, v in self.leakage_by_component.items()
                         if k != "logic"))
        ops = (sum(self.dynamic_by_component[c] for c in OPERATION_COMPONENTS)
               + self.leakage_by_component.get("logic", 0.0))
        dram = self.dynamic_by_component.get("dram", 0.0)
        total = self.total
        return {"scratchpad": scratch / total, "operations": ops / total,
                "dram": dram / total}

    def to_json(self) -> dict:
        return {
            "dynamic_by_component": dict(self.dynamic_by_component),
            "leakage_by_component": dict(self.leakage_by_component),
            "dynamic_total": self.dynamic_total,
            "leakage_total": self.leakage_total,
            "total": self.total,
            "fractions": self.fractions,
            "meta": dict(self.meta),
        }


def account(report: "SimReport", table: EnergyTable) -> EnergyReport:
    """Convert a simulation's event counts into an energy breakdown."""
    dynamic: dict[str, float] = {}
    for target, (rname, wname) in _BYTE_CLASSES.items():
        sides = report.access.data[target]
        e = 0.0
        if sides["r"]["bytes"]:
            e += sides["r"]["bytes"] * table.cost(rname)
        if sides["w"]["bytes"]:
            e += sides["w"]["bytes"] * table.cost(wname)
        dynamic[target.value] = e
    dpu_ops = sum(report.access.dpu_ops_per_cu.values())
    dynamic["dpu"] = dpu_ops * table.cost("dpu_subvector_op") if dpu_ops else 0.0
    dynamic["mu"] = report.access.mu_ops * table.cost("mu_op") if report.access.mu_ops else 0.0

    # leakage: banks actually touched stay powered for the whole run
    bank = report.config.bank_bytes
    seconds = report.seconds
    powered = {
        "weight_memory": 4 * report.storage["weight_banks_per_cu"] * bank,
        "intermediate_memory": report.storage["intermediate_banks"] * bank,
        # small per-CU buffers are not banked; they stay powered at capacity
        "input_memory": 4 * report.config.input_mem_bytes_per_cu,
        "row_buffer": 4 * report.config.row_buffer_bytes,
    }
    leakage = {name: table.sram_leakage_w_per_mib * (nbytes / MIB) * seconds
               for name, nbytes in powered.items()}
    leakage["logic"] = table.logic_leakage_w * seconds

    meta = {
        "policy": report.policy.value,
        "sequence_length": report.T,
        "precision": report.precision,
        "network": report.network_summary,
        "seconds": seconds,
        "powered_bytes": powered,
    }
    return EnergyReport(dynamic, leakage, meta)


@dataclass
class EnergyComparison:
    ratios: dict[str, float]
    total_ratio: float
    regressions: list[str]

    def to_json(self) -> dict:
        return {"ratios": dict(self.ratios), "total_ratio": self.total_ratio,
                "regressions": list(self.regressions)}


def compare(baseline: EnergyReport, other: EnergyReport) -> EnergyComparison:
    """Per-component other/baseline energy ratios.

    Components where the second run consumes more are flagged (expected for
    the intermediate memory under MWL, which stores the partial outputs).
    """
    for key in ("sequence_length", "precision", "network"):
        if baseline.meta.get(key) != other.meta.get(key):
            raise ValueError(f"reports disagree on {key}; refusing to compare")
    ratios: dict[str, float] = {}
    regressions: list[str] = []

    def ratio_into(kind: str, a: dict[str, float], b: dict[str, float]):
        for comp, base_val in a.items():
            val = b.get(comp, 0.0)
            name = f"{kind}.{comp}"
            if base_val > 0:
                ratios[name] = val / base_val
                if val > base_val * (1 + 1e-12):
                    regressions.append(name)
            elif val > 0:
                ratios[name] = math.inf
                regressions.append(name)

    ratio_into("dynamic", baseline.dynamic_by_component, other.dynamic_by_component)
    ratio_into("leakage", baseline.leakage_by_component, other.leakage_by_component)
    total_ratio = other.total / baseline.total if baseline.total > 0 else math.inf
    return EnergyComparison(ratios, total_ratio, regressions)
