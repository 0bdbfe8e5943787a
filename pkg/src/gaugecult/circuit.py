"""Layered circuit IR: instructions, detectors, observable, serialization.

One instruction touches exactly the qubits it names (single-qubit gates and
measurements are one instruction per qubit).  Layers are canonicalized at
close time (sorted by mnemonic then targets) and measurement indices are
assigned in that order, so a program serializes byte-stably.

Text format (.gcct): one instruction per line, ``TICK`` between layers,
``DETECTOR``/``OBSERVABLE`` with absolute measurement indices, conditional
single-qubit gates as ``COND m1,m2,... GATE q`` (applied when the referenced
outcome parity is odd relative to the noiseless reference), and ``NOISE``
annotation lines inside a layer block after noise has been applied.
"""

from __future__ import annotations

from dataclasses import dataclass, field

__all__ = [
    "Instruction",
    "NoiseChannel",
    "Layer",
    "Detector",
    "CircuitProgram",
    "ProgramBuilder",
    "validate",
    "depth_stats",
    "serialize",
    "parse",
    "export_stim_format",
    "ValidationError",
    "ParseError",
]

KINDS = ("RZ", "RX", "MZ", "MX", "CX", "H", "S", "SDG", "T", "TDG", "X", "Y", "Z")
_KIND_ORDER = {k: i for i, k in enumerate(KINDS)}
ONE_QUBIT_GATES = {"H", "S", "SDG", "T", "TDG", "X", "Y", "Z"}
MEASUREMENTS = {"MZ", "MX"}
RESETS = {"RZ", "RX"}
NON_CLIFFORD = {"T", "TDG"}


class ValidationError(Exception):
    pass


class ParseError(Exception):
    def __init__(self, msg, line, column=1):
        super().__init__(f"line {line}, col {column}: {msg}")
        self.line = line
        self.column = column


@dataclass(frozen=True)
class Instruction:
    kind: str
    targets: tuple
    cond: tuple | None = None   # measurement indices; gate fires on odd parity

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown instruction kind {self.kind!r}")
        if self.kind == "CX":
            if len(self.targets) != 2 or self.targets[0] == self.targets[1]:
                raise ValueError(f"CX needs two distinct targets, got {self.targets}")
        elif len(self.targets) != 1:
            raise ValueError(f"{self.kind} takes one target, got {self.targets}")
        if self.cond is not None and self.kind not in ONE_QUBIT_GATES:
            raise ValueError("only single-qubit Cliffords may be conditioned")

    def sort_key(self):
        return (_KIND_ORDER[self.kind], self.targets, self.cond or ())


@dataclass(frozen=True)
class NoiseChannel:
    kind: str        # DEPOL1 | DEPOL2 | FLIP_M | FLIP_R
    p: float
    targets: tuple


@dataclass
class Layer:
    instructions: list
    noiseless: bool = False
    channels: list = field(default_factory=list)

    def qubits(self):
        out = []
        for ins in self.instructions:
            out.extend(ins.targets)
        return out

    @property
    def has_cx(self):
        return any(i.kind == "CX" for i in self.instructions)

    @property
    def has_mr(self):
        return any(i.kind in MEASUREMENTS or i.kind in RESETS
                   for i in self.instructions)

    def layer_class(self):
        if self.has_cx and self.has_mr:
            return "mixed"
        if self.has_cx:
            return "CX-layer"
        if self.has_mr:
            return "M/R-layer"
        return "1q-layer"


@dataclass(frozen=True)
class Detector:
    mset: tuple
    tag: str = ""


@dataclass
class CircuitProgram:
    layers: list
    detectors: list
    observable: tuple
    n_measurements: int
    lattice: object = None
    noisy: bool = False

    def measurement_map(self):
        """measurement index -> (layer index, Instruction)."""
        out = {}
        m = 0
        for li, layer in enumerate(self.layers):
            for ins in layer.instructions:
                if ins.kind in MEASUREMENTS:
                    out[m] = (li, ins)
                    m += 1
        return out


class ProgramBuilder:
    def __init__(self, lattice=None):
        self.lattice = lattice
        self.layers = []
        self.detectors = []
        self.observable = None
        self._open = None
        self._open_noiseless = False
        self._n_meas = 0
        self._meas_by_qubit = {}

    # -- layer assembly ----------------------------------------------------
    def begin_layer(self, noiseless=False):
        if self._open is not None:
            raise RuntimeError("previous layer not closed")
        self._open = []
        self._open_noiseless = noiseless

    def add(self, kind, *targets, cond=None):
        self._open.append(Instruction(kind, tuple(targets),
                                      tuple(cond) if cond else None))

    def close_layer(self):
        ins = sorted(self._open, key=Instruction.sort_key)
        layer = Layer(ins, noiseless=self._open_noiseless)
        seen = set()
        for i in ins:
            for q in i.targets:
                if q in seen:
                    raise ValidationError(
                        f"qubit {q} used twice in layer {len(self.layers)}")
                seen.add(q)
            if i.cond is not None and any(m >= self._n_meas for m in i.cond):
                raise ValidationError("condition references a future measurement")
        for i in ins:
            if i.kind in MEASUREMENTS:
                q = i.targets[0]
                self._meas_by_qubit.setdefault(q, []).append(self._n_meas)
                self._n_meas += 1
        self.layers.append(layer)
        self._open = None

    def layer(self, instructions, noiseless=False):
        self.begin_layer(noiseless)
        for item in instructions:
            if isinstance(item, Instruction):
                self._open.append(item)
            else:
                self.add(*item)
        self.close_layer()

    # -- measurement bookkeeping -------------------------------------------
    def meas_index(self, qubit, occurrence=-1):
        """Absolute index of the qubit's occurrence-th measurement so far."""
        return self._meas_by_qubit[qubit][occurrence]

    def meas_count(self, qubit):
        return len(self._meas_by_qubit.get(qubit, ()))

    def detector(self, mset, tag=""):
        self.detectors.append(Detector(tuple(sorted(mset)), tag))

    def set_observable(self, mset):
        if self.observable is not None:
            raise ValidationError("program already has an observable")
        self.observable = tuple(sorted(mset))

    def finish(self):
        if self._open is not None:
            raise RuntimeError("open layer at finish")
        if self.observable is None:
            raise ValidationError("program needs exactly one observable")
        return CircuitProgram(
            layers=self.layers, detectors=self.detectors,
            observable=self.observable, n_measurements=self._n_meas,
            lattice=self.lattice)


# ---------------------------------------------------------------------------
# validation and stats

def validate(program):
    """Full structural + semantic check; raises ValidationError on failure."""
    m = 0
    for li, layer in enumerate(program.layers):
        seen = set()
        for ins in layer.instructions:
            for q in ins.targets:
                if q in seen:
                    raise ValidationError(f"layer {li}: qubit {q} used twice")
                seen.add(q)
            if ins.kind == "CX" and program.lattice is not None:
                c, t = ins.targets
                if not program.lattice.is_grid_adjacent(c, t):
                    raise ValidationError(
                        f"layer {li}: CX {c}->{t} is not grid-adjacent")
            if ins.cond is not None:
                for r in ins.cond:
                    if r >= m:
                        raise ValidationError(
                            f"layer {li}: condition references measurement {r} "
                            f"before it happens (have {m})")
            if ins.kind in MEASUREMENTS:
                m += 1
    if m != program.n_measurements:
        raise ValidationError(
            f"measurement count mismatch: {m} vs {program.n_measurements}")
    for det in program.detectors:
        for r in det.mset:
            if not 0 <= r < m:
                raise ValidationError(f"detector {det.tag!r} references index {r}")
    for r in program.observable:
        if not 0 <= r < m:
            raise ValidationError(f"observable references index {r}")
    # semantic check: every detector parity is deterministic under
    # randomized replays of the unmeasured degrees of freedom
    from .stab_sim import reference_simulate, BackendCapabilityError
    try:
        reference_simulate(program, determinism_replays=8)
    except BackendCapabilityError:
        return "ok"  # non-Clifford programs are checked by the statevector tests
    except ValueError as e:
        raise ValidationError(str(e))
    return "ok"


def depth_stats(program):
    cx = sum(1 for l in program.layers if l.has_cx)
    mr = sum(1 for l in program.layers if l.has_mr)
    mr_events = sum(1 for l in program.layers
                    for i in l.instructions if i.kind in MEASUREMENTS | RESETS)
    return {
        "cx_layers": cx,
        "mr_layers": mr,
        "mr_events": mr_events,
        "total_layers": len(program.layers),
    }


# ---------------------------------------------------------------------------
# text format

def serialize(program):
    lines = ["GCCT 1"]
    if program.lattice is not None:
        lines.append(f"LATTICE d={program.lattice.d}")
    if program.noisy:
        lines.append("NOISY")
    for li, layer in enumerate(program.layers):
        if li:
            lines.append("TICK")
        if layer.noiseless:
            lines.append("NOISELESS")
        for ins in layer.instructions:
            if ins.cond is not None:
                cond = ",".join(str(i) for i in ins.cond)
                lines.append(f"COND {cond} {ins.kind} {ins.targets[0]}")
            else:
                lines.append(f"{ins.kind} " + " ".join(str(t) for t in ins.targets))
        for ch in layer.channels:
            lines.append(f"NOISE {ch.kind} {ch.p!r} "
                         + " ".join(str(t) for t in ch.targets))
    for det in program.detectors:
        tag = f" t={det.tag}" if det.tag else ""
        lines.append(f"DETECTOR{tag} " + " ".join(str(i) for i in det.mset))
    lines.append("OBSERVABLE " + " ".join(str(i) for i in program.observable))
    return "\n".join(lines) + "\n"


def parse(text, lattice=None):
    layers = [Layer([])]
    detectors = []
    observable = None
    noisy = False
    n_meas = 0
    d_declared = None

    for ln, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        parts = line.split()
        head = parts[0]

        def ints(items, what):
            out = []
            for it in items:
                try:
                    out.append(int(it))
                except ValueError:
                    raise ParseError(f"bad {what} {it!r}", ln, raw.find(it) + 1)
            return out

        if head == "GCCT":
            continue
        elif head == "LATTICE":
            d_declared = int(parts[1].split("=")[1])
        elif head == "NOISY":
            noisy = True
        elif head == "TICK":
            layers.append(Layer([]))
        elif head == "NOISELESS":
            layers[-1].noiseless = True
        elif head == "DETECTOR":
            rest = parts[1:]
            tag = ""
            if rest and rest[0].startswith("t="):
                tag = rest[0][2:]
                rest = rest[1:]
            mset = ints(rest, "measurement index")
            for i in mset:
                if i >= n_meas:
                    raise ParseError(f"detector references measurement {i} "
                                     f"but only {n_meas} exist", ln)
            detectors.append(Detector(tuple(mset), tag))
        elif head == "OBSERVABLE":
            mset = ints(parts[1:], "measurement index")
            for i in mset:
                if i >= n_meas:
                    raise ParseError(f"observable references measurement {i}", ln)
            if observable is not None:
                raise ParseError("second OBSERVABLE", ln)
            observable = tuple(mset)
        elif head == "NOISE":
            kind = parts[1]
            p = float(parts[2])
            layers[-1].channels.append(
                NoiseChannel(kind, p, tuple(ints(parts[3:], "qubit"))))
        elif head == "COND":
            cond = tuple(ints(parts[1].split(","), "measurement index"))
            kind, q = parts[2], ints(parts[3:], "qubit")
            for i in cond:
                if i >= n_meas:
                    raise ParseError(f"condition references measurement {i}", ln)
            try:
                layers[-1].instructions.append(Instruction(kind, tuple(q), cond))
            except ValueError as e:
                raise ParseError(str(e), ln)
        elif head in KINDS:
            qubits = ints(parts[1:], "qubit")
            try:
                layers[-1].instructions.append(Instruction(head, tuple(qubits)))
            except ValueError as e:
                raise ParseError(str(e), ln)
            if head in MEASUREMENTS:
                n_meas += 1
        else:
            raise ParseError(f"unknown mnemonic {head!r}", ln)

    if observable is None:
        raise ParseError("missing OBSERVABLE", len(text.splitlines()) or 1)
    prog = CircuitProgram(layers=layers, detectors=detectors,
                          observable=observable, n_measurements=n_meas,
                          lattice=lattice, noisy=noisy)
    if lattice is not None and d_declared is not None and lattice.d != d_declared:
        raise ParseError(f"lattice distance mismatch: file says {d_declared}", 1)
    return prog


# ---------------------------------------------------------------------------
# exporter to the de-facto stabilizer-circuit text format

_STIM_NAMES = {"RZ": "R", "RX": "RX", "MZ": "M", "MX": "MX", "CX": "CX",
               "H": "H", "S": "S", "SDG": "S_DAG", "X": "X", "Y": "Y", "Z": "Z"}
_COND_NAMES = {"X": "CX", "Y": "CY", "Z": "CZ"}


def export_stim_format(program):
    """Emit the program in stim's text format with relative record targets.

    Conditional Paulis become classically-controlled gates (one per condition
    bit; Pauli parity composes).  Non-Pauli conditionals and T gates have no
    stim counterpart and raise ValidationError.
    """
    lines = []
    m_done = 0
    for li, layer in enumerate(program.layers):
        for ins in layer.instructions:
            if ins.kind in NON_CLIFFORD:
                raise ValidationError("T/TDG have no stabilizer-format equivalent")
            if ins.cond is not None:
                if ins.kind not in _COND_NAMES:
                    raise ValidationError(
                        f"conditional {ins.kind} has no stabilizer-format equivalent")
                for r in ins.cond:
                    lines.append(f"{_COND_NAMES[ins.kind]} rec[{r - m_done}] "
                                 f"{ins.targets[0]}")
                continue
            name = _STIM_NAMES[ins.kind]
            lines.append(name + " " + " ".join(str(t) for t in ins.targets))
            if ins.kind in MEASUREMENTS:
                m_done += 1
        for ch in layer.channels:
            if ch.kind == "DEPOL1":
                lines.append(f"DEPOLARIZE1({ch.p}) "
                             + " ".join(str(t) for t in ch.targets))
            elif ch.kind == "DEPOL2":
                lines.append(f"DEPOLARIZE2({ch.p}) "
                             + " ".join(str(t) for t in ch.targets))
            elif ch.kind in ("FLIP_M", "FLIP_R"):
                lines.append(f"X_ERROR({ch.p}) "
                             + " ".join(str(t) for t in ch.targets))
        if li < len(program.layers) - 1:
            lines.append("TICK")
    for det in program.detectors:
        recs = " ".join(f"rec[{i - m_done}]" for i in det.mset)
        lines.append(f"DETECTOR {recs}")
    recs = " ".join(f"rec[{i - m_done}]" for i in program.observable)
    lines.append(f"OBSERVABLE_INCLUDE(0) {recs}")
    return "\n".join(lines) + "\n"
