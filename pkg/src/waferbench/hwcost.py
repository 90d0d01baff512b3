"""Parametric area/power estimator for crossbar-based network hardware.

Primitive counts (memristors, activation neurons, gate circuit blocks) come
from the architecture; per-primitive constants come from a cost table. Every
signed value needs a differential pair, so memristor count is twice the
weight count plus twice the bias count. The shipped default table is
calibrated against published single-layer and recurrent reference designs,
not derived from device physics, and estimates should be read that way.
"""
from __future__ import annotations

from dataclasses import dataclass

from .dense import NetworkSpec
from .lstm import LstmConfig


@dataclass(frozen=True)
class CostTable:
    """Per-primitive constants: area in um^2, power in mW."""

    area_memristor_um2: float = 9.0
    power_memristor_mw: float = 0.05
    area_neuron_um2: float = 240.0
    power_neuron_mw: float = 64.7
    area_gate_block_um2: float = 15965.325
    power_gate_block_mw: float = 11.3125

    def __post_init__(self):
        for name in ("area_memristor_um2", "power_memristor_mw",
                     "area_neuron_um2", "power_neuron_mw",
                     "area_gate_block_um2", "power_gate_block_mw"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be non-negative")


CALIBRATED_COST_TABLE = CostTable()


@dataclass(frozen=True)
class Inventory:
    memristor_count: int = 0
    neuron_count: int = 0
    gate_block_count: int = 0

    def __post_init__(self):
        if min(self.memristor_count, self.neuron_count,
               self.gate_block_count) < 0:
            raise ValueError("counts must be non-negative")

    def __add__(self, other: "Inventory") -> "Inventory":
        return Inventory(self.memristor_count + other.memristor_count,
                         self.neuron_count + other.neuron_count,
                         self.gate_block_count + other.gate_block_count)


@dataclass(frozen=True)
class CostEstimate:
    area_um2: float
    power_mw: float


def inventory_dense(spec: NetworkSpec) -> Inventory:
    """One differential pair per weight and per bias; one activation neuron
    per non-input unit."""
    weights = sum(fi * fo for fi, fo in zip(spec.layer_sizes[:-1],
                                            spec.layer_sizes[1:]))
    biases = sum(spec.layer_sizes[1:]) if spec.use_bias else 0
    return Inventory(memristor_count=2 * (weights + biases),
                     neuron_count=sum(spec.layer_sizes[1:]),
                     gate_block_count=0)


def inventory_lstm(config: LstmConfig) -> Inventory:
    """Stacked gate matrices plus recurrent weights plus the linear head.

    Each hidden unit needs one circuit block per gate (4H blocks); the
    readout keeps a single output neuron.
    """
    h, d = config.hidden_dim, config.input_dim
    weights = 4 * h * (d + h) + h      # gate input+recurrent, then readout
    biases = 4 * h + 1
    return Inventory(memristor_count=2 * (weights + biases),
                     neuron_count=1,
                     gate_block_count=4 * h)


def estimate(inv: Inventory, table: CostTable) -> CostEstimate:
    area = (inv.memristor_count * table.area_memristor_um2
            + inv.neuron_count * table.area_neuron_um2
            + inv.gate_block_count * table.area_gate_block_um2)
    power = (inv.memristor_count * table.power_memristor_mw
             + inv.neuron_count * table.power_neuron_mw
             + inv.gate_block_count * table.power_gate_block_mw)
    return CostEstimate(area_um2=area, power_mw=power)
