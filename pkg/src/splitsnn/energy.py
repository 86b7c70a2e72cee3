"""Event-driven operation counting and energy estimation.

Counting convention (documented here; asserted by tests):

  * affine / AND-accumulate layers fire one *accumulate* per incoming
    spike per output (event-driven: silent inputs cost nothing), and
    one weight *memory read* per accumulate;
  * every LIF neuron performs one threshold *comparison*, one state
    read, and one state write per timestep, spiking or not;
  * every Bernoulli sample is one *random draw*;
  * a dense (non-spiking) equivalent of an affine layer performs
    fan_in x fan_out multiply-accumulates per step regardless of input,
    reads every weight once per step, and writes each output once.

With these rules, spiking accumulates / dense MACs equals the measured
mean input spike rate of a layer exactly, which tests assert.

Counts are raw tallies over whatever was recorded (a whole batch);
reports normalize per inference. Energy is an exact dot product of
counts with a per-operation table in picojoules. The default table is
representative digital-logic figures and is configuration, not ground
truth; swap in any table of interest.
"""

from dataclasses import dataclass, field, fields

import numpy as np

from .validation import require


@dataclass
class OpCounts:
    """Additive operation tallies."""

    accumulates: int = 0
    macs: int = 0
    comparisons: int = 0
    random_draws: int = 0
    memory_reads: int = 0
    memory_writes: int = 0

    def __post_init__(self):
        for f in fields(self):
            require(getattr(self, f.name) >= 0, f"{f.name} must be >= 0")

    def __add__(self, other: "OpCounts") -> "OpCounts":
        return OpCounts(**{f.name: getattr(self, f.name) + getattr(other, f.name)
                           for f in fields(self)})

    def scaled(self, factor: float) -> dict:
        """Per-inference view (float-valued) for reports."""
        return {f.name: getattr(self, f.name) * factor for f in fields(self)}


@dataclass(frozen=True)
class EnergyTable:
    """Energy per operation, picojoules. Defaults are representative
    digital-logic figures, exposed as configuration."""

    mac: float = 4.6
    accumulate: float = 0.9
    comparison: float = 0.1
    random_draw: float = 0.4
    memory_read: float = 5.0
    memory_write: float = 5.0

    def __post_init__(self):
        for f in fields(self):
            require(getattr(self, f.name) > 0, f"{f.name} must be > 0")

    def scaled(self, factor: float) -> "EnergyTable":
        return EnergyTable(**{f.name: getattr(self, f.name) * factor
                              for f in fields(self)})


def energy_of(counts: OpCounts, table: EnergyTable) -> float:
    """Exact dot product of counts and table, in picojoules."""
    return (counts.accumulates * table.accumulate
            + counts.macs * table.mac
            + counts.comparisons * table.comparison
            + counts.random_draws * table.random_draw
            + counts.memory_reads * table.memory_read
            + counts.memory_writes * table.memory_write)


def picojoules_to_joules(pj: float) -> float:
    return pj * 1e-12


def format_energy(pj: float) -> str:
    """Human-readable µJ/mJ formatting for CLI output."""
    joules = picojoules_to_joules(pj)
    if joules >= 1e-3:
        return f"{joules * 1e3:.3f} mJ"
    if joules >= 1e-6:
        return f"{joules * 1e6:.3f} µJ"
    return f"{joules * 1e9:.3f} nJ"


class SpikeRecorder:
    """Collects per-layer tallies while a spiking forward pass runs.

    Models call ``record_affine`` with the actual input tensor of every
    affine/AND-accumulate stage, ``record_lif`` per LIF step, and
    ``record_draws`` per Bernoulli block. Layer names carry an
    ``encoder.``/``decoder.`` prefix used for per-stage reports.
    """

    def __init__(self, keep_spike_tensors: bool = False):
        self.layers = {}
        self.lif_sites = {}
        self.draws = {}
        self.spike_stats = {}
        self.keep_spike_tensors = keep_spike_tensors
        self.spike_tensors = []
        self.n_inferences = 0

    def record_affine(self, name, inputs: np.ndarray, fan_out: int):
        entry = self.layers.setdefault(
            name, {"active": 0, "elements": 0, "fan_out": fan_out})
        require(entry["fan_out"] == fan_out, f"fan_out changed for {name}")
        entry["active"] += int(np.count_nonzero(inputs))
        entry["elements"] += int(inputs.size)

    def record_lif(self, name, n_neurons: int):
        self.lif_sites[name] = self.lif_sites.get(name, 0) + int(n_neurons)

    def record_draws(self, name, n: int):
        self.draws[name] = self.draws.get(name, 0) + int(n)

    def record_spikes(self, name, values: np.ndarray):
        entry = self.spike_stats.setdefault(name, {"active": 0, "elements": 0})
        entry["active"] += int(np.count_nonzero(values))
        entry["elements"] += int(values.size)
        if self.keep_spike_tensors:
            self.spike_tensors.append((name, values))

    def count_inference(self, n: int = 1):
        self.n_inferences += n

    # -- aggregation ---------------------------------------------------------

    def layer_spike_rate(self, name) -> float:
        entry = self.layers[name]
        return entry["active"] / entry["elements"] if entry["elements"] else 0.0

    def mean_spike_rate(self, prefix="") -> float:
        active = sum(e["active"] for n, e in self.layers.items()
                     if n.startswith(prefix))
        elements = sum(e["elements"] for n, e in self.layers.items()
                       if n.startswith(prefix))
        return active / elements if elements else 0.0


def count_spiking_forward(recorder: SpikeRecorder, prefix="") -> OpCounts:
    """Event-driven tallies for all recorded layers under ``prefix``."""
    require(bool(recorder.layers) or bool(recorder.lif_sites),
            "recorder holds no forward-pass recordings")
    counts = OpCounts()
    for name, entry in recorder.layers.items():
        if not name.startswith(prefix):
            continue
        ops = entry["active"] * entry["fan_out"]
        counts.accumulates += ops
        counts.memory_reads += ops
    for name, total in recorder.lif_sites.items():
        if not name.startswith(prefix):
            continue
        counts.comparisons += total
        counts.memory_reads += total
        counts.memory_writes += total
    for name, total in recorder.draws.items():
        if name.startswith(prefix):
            counts.random_draws += total
    return counts


def count_dense_affine(fan_in: int, fan_out: int, steps: int,
                       batch: int = 1) -> OpCounts:
    """Input-independent cost of the dense equivalent of one affine."""
    macs = fan_in * fan_out * steps * batch
    return OpCounts(
        macs=macs,
        memory_reads=macs,
        memory_writes=fan_out * steps * batch,
    )


def count_dense_equivalent(layer_specs, batch: int = 1) -> OpCounts:
    """Dense cost for ``(name, fan_in, fan_out, steps)`` layer specs."""
    counts = OpCounts()
    for _, fan_in, fan_out, steps in layer_specs:
        counts = counts + count_dense_affine(fan_in, fan_out, steps, batch)
    return counts


@dataclass
class StageReport:
    """Counts, energy, and rates for one pipeline stage."""

    name: str
    spiking: OpCounts
    dense: OpCounts
    spiking_pj: float
    dense_pj: float
    mean_spike_rate: float
    n_inferences: int

    @property
    def spiking_pj_per_inference(self) -> float:
        return self.spiking_pj / max(self.n_inferences, 1)

    @property
    def dense_pj_per_inference(self) -> float:
        return self.dense_pj / max(self.n_inferences, 1)


@dataclass
class EnergyReport:
    """Per-stage energy summary; totals are exact sums of the stages."""

    stages: list = field(default_factory=list)
    table: EnergyTable = field(default_factory=EnergyTable)

    def add_stage(self, name, recorder: SpikeRecorder, layer_specs,
                  n_inferences: int):
        spiking = count_spiking_forward(recorder, prefix=f"{name}.")
        dense = count_dense_equivalent(
            [(n, fi, fo, st) for n, fi, fo, st in layer_specs
             if n.startswith(f"{name}.")],
            batch=n_inferences)
        self.stages.append(StageReport(
            name=name,
            spiking=spiking,
            dense=dense,
            spiking_pj=energy_of(spiking, self.table),
            dense_pj=energy_of(dense, self.table),
            mean_spike_rate=recorder.mean_spike_rate(prefix=f"{name}."),
            n_inferences=n_inferences,
        ))

    def stage(self, name) -> StageReport:
        for st in self.stages:
            if st.name == name:
                return st
        raise KeyError(name)

    def as_dict(self) -> dict:
        return {
            "table_pj": {f.name: getattr(self.table, f.name)
                         for f in fields(EnergyTable)},
            "stages": [
                {
                    "name": st.name,
                    "n_inferences": st.n_inferences,
                    "mean_spike_rate": st.mean_spike_rate,
                    "spiking_counts": st.spiking.scaled(1.0),
                    "dense_counts": st.dense.scaled(1.0),
                    "spiking_pj_per_inference": st.spiking_pj_per_inference,
                    "dense_pj_per_inference": st.dense_pj_per_inference,
                    "spiking_energy": format_energy(st.spiking_pj_per_inference),
                    "dense_energy": format_energy(st.dense_pj_per_inference),
                }
                for st in self.stages
            ],
        }
