"""Uniform circuit-level noise annotation at a single physical rate p.

After every CX: two-qubit depolarizing(p) on its pair.  After every other
gate and on every idle qubit of a noisy layer: single-qubit depolarizing(p).
Measurement outcomes flip with probability p; resets flip to the orthogonal
state with probability p.  Layers marked noiseless (the final perfect round)
are skipped entirely.  Channel classes can be overridden individually for
parity checks against external conventions.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

from .circuit import CircuitProgram, Layer, NoiseChannel, MEASUREMENTS, RESETS

__all__ = ["NoiseModel", "apply_noise", "channel_census"]

CHANNEL_CLASSES = ("cx", "gate1", "idle", "measure_flip", "reset_flip")


@dataclass
class NoiseModel:
    p: float
    overrides: dict = field(default_factory=dict)

    def __post_init__(self):
        if not 0 <= self.p < 0.5:
            raise ValueError(f"physical rate must be in [0, 0.5), got {self.p}")
        for k in self.overrides:
            if k not in CHANNEL_CLASSES:
                raise ValueError(f"unknown channel class {k!r}")

    def rate(self, channel_class):
        return self.overrides.get(channel_class, self.p)


def apply_noise(program, model):
    """Return a copy of the program with noise channels attached per layer."""
    if program.noisy:
        raise ValueError("program is already noise-annotated")
    if program.lattice is not None:
        all_qubits = set(program.lattice.coords)
    else:
        all_qubits = {q for l in program.layers for i in l.instructions
                      for q in i.targets}

    new_layers = []
    for layer in program.layers:
        channels = []
        if not layer.noiseless and model.p > 0:
            busy = set()
            for ins in layer.instructions:
                busy.update(ins.targets)
                if ins.kind == "CX":
                    if model.rate("cx"):
                        channels.append(NoiseChannel("DEPOL2", model.rate("cx"),
                                                     ins.targets))
                elif ins.kind in MEASUREMENTS:
                    if model.rate("measure_flip"):
                        channels.append(NoiseChannel("FLIP_M",
                                                     model.rate("measure_flip"),
                                                     ins.targets))
                elif ins.kind in RESETS:
                    if model.rate("reset_flip"):
                        kind = "FLIP_RZ" if ins.kind == "RZ" else "FLIP_RX"
                        channels.append(NoiseChannel(kind,
                                                     model.rate("reset_flip"),
                                                     ins.targets))
                else:
                    if model.rate("gate1"):
                        channels.append(NoiseChannel("DEPOL1", model.rate("gate1"),
                                                     ins.targets))
            if model.rate("idle"):
                for q in sorted(all_qubits - busy):
                    channels.append(NoiseChannel("DEPOL1", model.rate("idle"),
                                                 (q,)))
        new_layers.append(Layer(list(layer.instructions),
                                noiseless=layer.noiseless, channels=channels))
    out = CircuitProgram(layers=new_layers, detectors=list(program.detectors),
                         observable=program.observable,
                         n_measurements=program.n_measurements,
                         lattice=program.lattice, noisy=True)
    if hasattr(program, "_protocol_config"):
        out._protocol_config = program._protocol_config
    return out


def channel_census(program):
    """Channel counts by class, for cross-checking the annotation."""
    counts = {"DEPOL2": 0, "DEPOL1": 0, "FLIP_M": 0, "FLIP_RZ": 0, "FLIP_RX": 0}
    for layer in program.layers:
        for ch in layer.channels:
            counts[ch.kind] += 1
    return counts
