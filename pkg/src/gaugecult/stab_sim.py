"""Clifford reference simulation, Pauli-frame sampling, fault-model
extraction and fault-distance search.

The reference simulator is an Aaronson-Gottesman tableau.  Random measurement
outcomes take a fixed convention (bit 0) in the reference run; detectors and
the observable are reference-relative parities, so a validated program has
every detector unfired and the observable at its prepared value by
construction.  Determinism of detector parities is certified by replaying the
reference with randomized outcome choices.

Noise sampling never touches the tableau: every elementary fault is
propagated once (vectorized over all faults simultaneously) to a
detector/observable flip signature, and shots are drawn channel by channel
with sparse XOR accumulation.  Conditional Paulis keep the propagation
linear: a frame that flips a condition's parity injects the conditioned
Pauli at that point.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .circuit import MEASUREMENTS, NON_CLIFFORD, ONE_QUBIT_GATES, RESETS

__all__ = [
    "BackendCapabilityError",
    "ReferenceResult",
    "reference_simulate",
    "FaultMechanism",
    "extract_fault_model",
    "ShotBatch",
    "frame_sample",
    "distance_search",
    "detector_marginals",
    "kept_fraction_estimate",
]


class BackendCapabilityError(Exception):
    pass


# ---------------------------------------------------------------------------
# tableau reference simulator

class Tableau:
    """Stabilizer/destabilizer tableau over the qubits appearing in a program."""

    def __init__(self, qubits):
        self.qmap = {q: i for i, q in enumerate(sorted(qubits))}
        n = len(self.qmap)
        self.n = n
        self.x = np.zeros((2 * n, n), dtype=np.uint8)
        self.z = np.zeros((2 * n, n), dtype=np.uint8)
        self.r = np.zeros(2 * n, dtype=np.uint8)
        for i in range(n):
            self.x[i, i] = 1
            self.z[n + i, i] = 1

    # single-qubit/two-qubit Clifford actions on all rows at once
    def h(self, q):
        q = self.qmap[q]
        self.r ^= self.x[:, q] & self.z[:, q]
        self.x[:, q], self.z[:, q] = self.z[:, q].copy(), self.x[:, q].copy()

    def s(self, q):
        q = self.qmap[q]
        self.r ^= self.x[:, q] & self.z[:, q]
        self.z[:, q] ^= self.x[:, q]

    def sdg(self, q):
        self.s(q)
        self.s(q)
        self.s(q)

    def px(self, q):
        q = self.qmap[q]
        self.r ^= self.z[:, q]

    def pz(self, q):
        q = self.qmap[q]
        self.r ^= self.x[:, q]

    def py(self, q):
        qq = self.qmap[q]
        self.r ^= self.x[:, qq] ^ self.z[:, qq]

    def cx(self, c, t):
        c, t = self.qmap[c], self.qmap[t]
        self.r ^= self.x[:, c] & self.z[:, t] & (self.x[:, t] ^ self.z[:, c] ^ 1)
        self.x[:, t] ^= self.x[:, c]
        self.z[:, c] ^= self.z[:, t]

    def _rowmult_into(self, h, i):
        """Multiply row i into row h (phase-exact Aaronson-Gottesman rowsum)."""
        x1 = self.x[i].astype(np.int32)
        z1 = self.z[i].astype(np.int32)
        x2 = self.x[h].astype(np.int32)
        z2 = self.z[h].astype(np.int32)
        g = (x1 & z1) * (z2 - x2) \
            + (x1 & (1 - z1)) * z2 * (2 * x2 - 1) \
            + ((1 - x1) & z1) * x2 * (1 - 2 * z2)
        tot = 2 * int(self.r[h]) + 2 * int(self.r[i]) + int(g.sum())
        # odd totals only arise for destabilizer rows, whose phase is unused
        self.r[h] = (tot % 4) // 2
        self.x[h] ^= self.x[i]
        self.z[h] ^= self.z[i]

    def _batch_mult(self, rows, i):
        """Multiply row i into all listed rows at once (phase-exact)."""
        x1 = self.x[i].astype(np.int32)
        z1 = self.z[i].astype(np.int32)
        x2 = self.x[rows].astype(np.int32)
        z2 = self.z[rows].astype(np.int32)
        g = ((x1 & z1) * (z2 - x2)
             + (x1 & (1 - z1)) * z2 * (2 * x2 - 1)
             + ((1 - x1) & z1) * x2 * (1 - 2 * z2)).sum(axis=1)
        tot = 2 * self.r[rows].astype(np.int32) + 2 * int(self.r[i]) + g
        self.r[rows] = (tot % 4) // 2
        self.x[rows] ^= self.x[i]
        self.z[rows] ^= self.z[i]

    def measure_z(self, q, random_bit):
        """Measure Z on q; returns (outcome_bit, was_random)."""
        qq = self.qmap[q]
        n = self.n
        col = self.x[:, qq]
        stab_hits = np.flatnonzero(col[n:])
        if stab_hits.size:
            p = n + int(stab_hits[0])
            rows = np.flatnonzero(col)
            rows = rows[rows != p]
            if rows.size:
                self._batch_mult(rows, p)
            self.x[p - n] = self.x[p]
            self.z[p - n] = self.z[p]
            self.r[p - n] = self.r[p]
            self.x[p] = 0
            self.z[p] = 0
            self.z[p, qq] = 1
            self.r[p] = random_bit
            return int(random_bit), True
        # deterministic: accumulate destabilizer-paired stabilizers
        rows = np.flatnonzero(col[:n])
        xs = np.zeros(n, dtype=np.uint8)
        zs = np.zeros(n, dtype=np.uint8)
        phase = 0
        for i in rows:
            s = i + n
            x1, z1 = self.x[s].astype(np.int32), self.z[s].astype(np.int32)
            x2, z2 = xs.astype(np.int32), zs.astype(np.int32)
            g = ((x1 & z1) * (z2 - x2)
                 + (x1 & (1 - z1)) * z2 * (2 * x2 - 1)
                 + ((1 - x1) & z1) * x2 * (1 - 2 * z2)).sum()
            phase = (phase + 2 * int(self.r[s]) + int(g)) % 4
            xs ^= self.x[s]
            zs ^= self.z[s]
        return int(phase // 2), False

    def reset_z(self, q, to_one=False):
        out, _ = self.measure_z(q, 0)
        if out != int(to_one):
            self.px(q)


@dataclass
class ReferenceResult:
    record: list            # measurement bits, reference convention
    deterministic: list     # per-measurement determinism flags
    detector_parities: list
    observable_parity: int


def _run_tableau(program, rng=None):
    qubits = set()
    for layer in program.layers:
        for ins in layer.instructions:
            qubits.update(ins.targets)
    tab = Tableau(qubits)
    record, determ = [], []
    for layer in program.layers:
        for ins in layer.instructions:
            k = ins.kind
            if k in NON_CLIFFORD:
                raise BackendCapabilityError(
                    f"stabilizer backend cannot run {k}")
            if ins.cond is not None and k not in ("X", "Y", "Z"):
                raise BackendCapabilityError(
                    f"stabilizer backend cannot run conditional {k}")
            if ins.cond is not None:
                par = 0
                for m in ins.cond:
                    par ^= record[m]
                if not par:
                    continue
            q = ins.targets[0]
            if k == "CX":
                tab.cx(*ins.targets)
            elif k == "H":
                tab.h(q)
            elif k == "S":
                tab.s(q)
            elif k == "SDG":
                tab.sdg(q)
            elif k == "X":
                tab.px(q)
            elif k == "Y":
                tab.py(q)
            elif k == "Z":
                tab.pz(q)
            elif k == "RZ":
                tab.reset_z(q)
            elif k == "RX":
                tab.h(q)
                tab.reset_z(q)
                tab.h(q)
            elif k == "MZ":
                bit = 0 if rng is None else int(rng.integers(2))
                out, was_random = tab.measure_z(q, bit)
                record.append(out)
                determ.append(not was_random)
            elif k == "MX":
                tab.h(q)
                bit = 0 if rng is None else int(rng.integers(2))
                out, was_random = tab.measure_z(q, bit)
                tab.h(q)
                record.append(out)
                determ.append(not was_random)
            else:
                raise AssertionError(k)
    return record, determ


def reference_simulate(program, determinism_replays=0, seed=7):
    """Noiseless run with the fixed outcome convention.

    With determinism_replays > 0, detector parities are re-evaluated under
    randomized outcome choices and any parity that varies raises
    BackendCapabilityError-free ValueError naming the detector.
    """
    record, determ = _run_tableau(program)
    det_par = [_parity(record, d.mset) for d in program.detectors]
    obs_par = _parity(record, program.observable)
    if determinism_replays:
        rng = np.random.default_rng(seed)
        for _ in range(determinism_replays):
            rec2, _ = _run_tableau(program, rng)
            for di, det in enumerate(program.detectors):
                if _parity(rec2, det.mset) != det_par[di]:
                    raise ValueError(
                        f"detector {di} ({det.tag!r}) parity is not deterministic")
            if _parity(rec2, program.observable) != obs_par:
                raise ValueError("observable parity is not deterministic")
    return ReferenceResult(record, determ, det_par, obs_par)


def _parity(record, mset):
    p = 0
    for m in mset:
        p ^= record[m]
    return p


# ---------------------------------------------------------------------------
# noise channel enumeration (shared with the frame propagation)

_PAULI1 = ("X", "Y", "Z")
_PAULI2 = tuple((a, b) for a in ("I", "X", "Y", "Z")
                for b in ("I", "X", "Y", "Z") if (a, b) != ("I", "I"))


def _channel_outcomes(ch):
    """Elementary Pauli outcomes of a channel: list of (prob, [(q, pauli)...])."""
    if ch.kind == "DEPOL1":
        q = ch.targets[0]
        return [(ch.p / 3, [(q, p)]) for p in _PAULI1]
    if ch.kind == "DEPOL2":
        a, b = ch.targets
        out = []
        for pa, pb in _PAULI2:
            ops = [(q, p) for q, p in ((a, pa), (b, pb)) if p != "I"]
            out.append((ch.p / 15, ops))
        return out
    if ch.kind in ("FLIP_M", "FLIP_RZ", "FLIP_RX"):
        # FLIP_M flips the recorded outcome only; FLIP_R* flips the freshly
        # reset state to the orthogonal one (X after reset-Z, Z after reset-X).
        return [(ch.p, [(ch.targets[0], ch.kind)])]
    raise AssertionError(ch.kind)


# ---------------------------------------------------------------------------
# vectorized frame propagation -> fault signatures

@dataclass
class FaultMechanism:
    location: str
    probability: float
    detectors: frozenset
    observable: int

    def signature_int(self, index_of):
        s = 0
        for d in self.detectors:
            s |= 1 << index_of[d]
        return s


def _site_list(program):
    """Chronological list of (when, what) events for frame propagation.

    Yields tuples ('gate', ins) / ('channel', ch, layer_index) with channels
    of a layer placed after its gates (FLIP_M entries act on that layer's
    measurement record, FLIP_R after the resets, DEPOL after the gates,
    which is exactly the apply_noise placement).
    """
    for li, layer in enumerate(program.layers):
        pre = [c for c in layer.channels if c.kind == "FLIP_M"]
        post = [c for c in layer.channels if c.kind != "FLIP_M"]
        yield from (("channel", c, li) for c in pre)
        yield from (("gate", i, li) for i in layer.instructions)
        yield from (("channel", c, li) for c in post)


def _propagate_all(program, injections=None):
    """Propagate fault frames through the circuit, all faults at once.

    injections: optional list of fault column specs for witness verification:
    each is a list of (event_index, q, pauli) applied at that channel site.
    Returns (mech_meta, det_flips, obs_flips) where det_flips is a bool array
    (n_faults, n_detectors).

    Without injections, one column is created per elementary channel outcome,
    in chronological order; mech_meta[i] = (channel_order_index, prob, label).
    """
    events = list(_site_list(program))
    if injections is None:
        cols = []
        meta = []
        for ei, ev in enumerate(events):
            if ev[0] != "channel":
                continue
            ch, li = ev[1], ev[2]
            for oi, (p, ops) in enumerate(_channel_outcomes(ch)):
                label = f"L{li}:{ch.kind}:{','.join(map(str, ch.targets))}:{oi}"
                cols.append((ei, ops))
                meta.append((len(cols) - 1, p, label))
    else:
        cols = []
        meta = []
        for spec in injections:
            cols.append(("multi", spec))
            meta.append((len(cols) - 1, 1.0, "witness"))

    nf = len(cols)
    qubits = sorted({q for l in program.layers for i in l.instructions
                     for q in i.targets})
    qmap = {q: i for i, q in enumerate(qubits)}
    X = np.zeros((len(qubits), nf), dtype=bool)
    Z = np.zeros((len(qubits), nf), dtype=bool)
    mflips = np.zeros((program.n_measurements, nf), dtype=bool)

    # pre-index injections by event position
    by_event = {}
    if injections is None:
        for fi, (ei, ops) in enumerate(cols):
            by_event.setdefault(ei, []).append((fi, ops))
    else:
        for fi, (_, spec) in enumerate(cols):
            for (ei, q, pauli) in spec:
                by_event.setdefault(ei, []).append((fi, [(q, pauli)]))

    m = 0
    for ei, ev in enumerate(events):
        if ev[0] == "channel":
            for fi, ops in by_event.get(ei, ()):
                for q, pauli in ops:
                    if pauli == "FLIP_M":
                        # flips the measurement of q in this layer
                        mi = _meas_index_at(program, ev[2], q)
                        mflips[mi, fi] ^= True
                    elif pauli == "FLIP_RZ":
                        X[qmap[q], fi] ^= True
                    elif pauli == "FLIP_RX":
                        Z[qmap[q], fi] ^= True
                    else:
                        if pauli in ("X", "Y"):
                            X[qmap[q], fi] ^= True
                        if pauli in ("Z", "Y"):
                            Z[qmap[q], fi] ^= True
            continue
        ins = ev[1]
        k = ins.kind
        if k == "CX":
            c, t = (qmap[q] for q in ins.targets)
            X[t] ^= X[c]
            Z[c] ^= Z[t]
        elif k == "H":
            q = qmap[ins.targets[0]]
            X[q], Z[q] = Z[q].copy(), X[q].copy()
        elif k in ("S", "SDG"):
            q = qmap[ins.targets[0]]
            Z[q] ^= X[q]
        elif k in ("X", "Y", "Z"):
            if ins.cond is not None:
                par = np.zeros(nf, dtype=bool)
                for mi in ins.cond:
                    par ^= mflips[mi]
                q = qmap[ins.targets[0]]
                if k in ("X", "Y"):
                    X[q] ^= par
                if k in ("Z", "Y"):
                    Z[q] ^= par
            # unconditional Paulis don't move frames
        elif k in NON_CLIFFORD:
            raise BackendCapabilityError(f"stabilizer backend cannot run {k}")
        elif k == "RZ":
            q = qmap[ins.targets[0]]
            X[q] = False
            Z[q] = False
        elif k == "RX":
            q = qmap[ins.targets[0]]
            X[q] = False
            Z[q] = False
        elif k == "MZ":
            q = qmap[ins.targets[0]]
            mflips[m] ^= X[q]
            Z[q] = False
            m += 1
        elif k == "MX":
            q = qmap[ins.targets[0]]
            mflips[m] ^= Z[q]
            X[q] = False
            m += 1
        else:
            raise AssertionError(k)

    ndet = len(program.detectors)
    det = np.zeros((nf, ndet), dtype=bool)
    for di, d in enumerate(program.detectors):
        for mi in d.mset:
            det[:, di] ^= mflips[mi]
    obs = np.zeros(nf, dtype=bool)
    for mi in program.observable:
        obs ^= mflips[mi]
    return meta, det, obs


def _meas_index_at(program, layer_index, q):
    """Measurement index of qubit q's measurement inside the given layer."""
    m = 0
    for li, layer in enumerate(program.layers):
        for ins in layer.instructions:
            if ins.kind in MEASUREMENTS:
                if li == layer_index and ins.targets[0] == q:
                    return m
                m += 1
    raise KeyError((layer_index, q))


def extract_fault_model(program, merge=True):
    """One FaultMechanism per elementary Pauli outcome of each channel,
    with equal (detector set, observable bit) mechanisms merged."""
    if not program.noisy:
        return []
    meta, det, obs = _propagate_all(program)
    mechs = {}
    order = []
    for (fi, p, label) in meta:
        key = (frozenset(np.flatnonzero(det[fi]).tolist()), bool(obs[fi]))
        if merge and key in mechs:
            old = mechs[key]
            # probability of an odd number of the merged faults
            pnew = old.probability * (1 - p) + p * (1 - old.probability)
            mechs[key] = FaultMechanism(old.location, pnew, old.detectors,
                                        old.observable)
        else:
            mk = key if merge else (key, label)
            mechs[mk] = FaultMechanism(label, p, key[0], int(key[1]))
            order.append(mk)
    out = [mechs[k] for k in order]
    # drop trivial mechanisms (no detector, no observable effect)
    return [m for m in out if m.detectors or m.observable]


# ---------------------------------------------------------------------------
# frame sampling

@dataclass
class ShotBatch:
    shots: int
    detector_bits: np.ndarray   # packed uint64, shape (shots, words)
    observable_bits: np.ndarray  # uint8, shape (shots,)
    n_detectors: int

    @property
    def kept_mask(self):
        return ~self.detector_bits.any(axis=1)

    @property
    def kept(self):
        return int(self.kept_mask.sum())

    @property
    def failures(self):
        return int((self.kept_mask & (self.observable_bits != 0)).sum())


def _channel_tables(program):
    """Per-channel sampling tables from the unmerged fault signatures."""
    meta, det, obs = _propagate_all(program)
    ndet = len(program.detectors)
    words = max(1, (ndet + 63) // 64)
    sig = np.zeros((len(meta), words), dtype=np.uint64)
    for di in range(ndet):
        w, b = divmod(di, 64)
        col = det[:, di]
        sig[col, w] |= np.uint64(1 << b)
    osig = obs.astype(np.uint8)
    # group contiguous outcomes back into channels, dropping outcomes with
    # no detector or observable effect (identity up to stabilizers)
    effective = sig.any(axis=1) | (osig != 0)
    channels = []
    i = 0
    probs = [p for (_, p, _) in meta]
    labels = [lab for (_, _, lab) in meta]
    while i < len(meta):
        chan = labels[i].rsplit(":", 1)[0]
        j = i
        while j < len(meta) and labels[j].rsplit(":", 1)[0] == chan:
            j += 1
        idx = np.array([k for k in range(i, j) if effective[k]], dtype=int)
        if len(idx):
            channels.append((np.array([probs[k] for k in idx]), idx))
        i = j
    return channels, sig, osig, words


def frame_sample(program, shots, seed, batch=1 << 16, keep_detectors=None):
    """Monte-Carlo sample detector/observable flips; returns a ShotBatch.

    keep_detectors optionally restricts post-selection to a subset of
    detector indices (diagnostics); the full detector bits are returned
    regardless.
    """
    if not program.noisy:
        raise ValueError("frame_sample needs a noise-annotated program")
    channels, sig, osig, words = _channel_tables(program)
    rng = np.random.default_rng(seed)
    det_out = np.zeros((shots, words), dtype=np.uint64)
    obs_out = np.zeros(shots, dtype=np.uint8)
    p_any = np.array([float(p.sum()) for p, _ in channels])

    done = 0
    while done < shots:
        b = min(batch, shots - done)
        counts = rng.binomial(b, p_any)
        for ci, (p, idx) in enumerate(channels):
            k = int(counts[ci])
            if k == 0:
                continue
            hit = rng.choice(b, size=k, replace=False)
            which = idx[rng.choice(len(idx), size=k, p=p / p.sum())]
            # unique hit rows, so fancy-index XOR is safe
            det_out[done + hit] ^= sig[which]
            obs_out[done + hit] ^= osig[which]
        done += b

    if keep_detectors is not None:
        mask = np.zeros(words, dtype=np.uint64)
        for di in keep_detectors:
            w, bit = divmod(di, 64)
            mask[w] |= np.uint64(1 << bit)
        det_sel = det_out & mask
    else:
        det_sel = det_out
    return ShotBatch(shots=shots, detector_bits=det_sel,
                     observable_bits=obs_out,
                     n_detectors=len(program.detectors))


def detector_marginals(program):
    """Exact per-detector flip probabilities from the fault model."""
    channels, sig, osig, words = _channel_tables(program)
    ndet = len(program.detectors)
    marg = np.zeros(ndet)
    for di in range(ndet):
        w, b = divmod(di, 64)
        prod = 1.0
        for p, idx in channels:
            q = float(p[(sig[idx, w] >> np.uint64(b)) & np.uint64(1) == 1].sum())
            prod *= 1 - 2 * q
        marg[di] = (1 - prod) / 2
    return marg


def kept_fraction_estimate(program):
    """First-order estimate of the post-selection survival probability:
    product over channels of (probability no detector-flipping outcome fires).
    Cancellations between faults are O(p^2) and ignored."""
    channels, sig, osig, words = _channel_tables(program)
    logp = 0.0
    for p, idx in channels:
        flips = sig[idx].any(axis=1)
        q = float(p[flips].sum())
        logp += np.log1p(-q)
    return float(np.exp(logp))


# ---------------------------------------------------------------------------
# distance search

@dataclass
class DistanceResult:
    found_weight: int | None
    witness: list
    conclusive: bool
    trials: int = 0


def distance_search(fault_model, w_max, strategy="exhaustive", rng_seed=11,
                    trials=200_000):
    """Search for a minimum-weight undetected logical fault set.

    Exhaustive up to w_max <= 3; the randomized strategy samples subsets and
    descends on signature weight, reporting only lower-bound evidence when
    nothing is found.
    """
    mechs = [m for m in fault_model]
    if not mechs:
        return DistanceResult(None, [], True)
    sigs = []
    for m in mechs:
        s = 0
        for d in m.detectors:
            s |= 1 << d
        sigs.append(s)
    obs = [m.observable for m in mechs]
    n = len(mechs)

    if strategy == "exhaustive":
        if w_max > 3:
            raise ValueError("exhaustive search capped at weight 3")
        # weight 1
        for i in range(n):
            if sigs[i] == 0 and obs[i]:
                return DistanceResult(1, [mechs[i]], True)
        if w_max >= 2:
            by_sig = {}
            for i in range(n):
                by_sig.setdefault(sigs[i], []).append(i)
            for s, group in by_sig.items():
                o = {obs[i] for i in group}
                if o == {0, 1}:
                    i = next(i for i in group if obs[i] == 0)
                    j = next(j for j in group if obs[j] == 1)
                    return DistanceResult(2, [mechs[i], mechs[j]], True)
        if w_max >= 3:
            by_sig = {}
            for i in range(n):
                by_sig.setdefault(sigs[i], []).append(i)
            for i in range(n):
                for j in range(i + 1, n):
                    s = sigs[i] ^ sigs[j]
                    group = by_sig.get(s)
                    if not group:
                        continue
                    want = 1 ^ obs[i] ^ obs[j]
                    for k in group:
                        if k != i and k != j and obs[k] == want:
                            return DistanceResult(3, [mechs[i], mechs[j], mechs[k]],
                                                  True)
        return DistanceResult(None, [], True)

    if strategy != "randomized":
        raise ValueError(f"unknown strategy {strategy!r}")

    rng = np.random.default_rng(rng_seed)
    probs = np.array([m.probability for m in mechs])
    probs = probs / probs.sum()
    by_sig = {}
    for i in range(n):
        by_sig.setdefault(sigs[i], []).append(i)
    for t in range(trials):
        w = int(rng.integers(2, w_max + 1))
        subset = list(rng.choice(n, size=w - 1, replace=False, p=probs))
        s = 0
        o = 0
        for i in subset:
            s ^= sigs[i]
            o ^= obs[i]
        group = by_sig.get(s)
        if group:
            for k in group:
                if k not in subset and o ^ obs[k] == 1:
                    picked = subset + [k]
                    return DistanceResult(len(picked), [mechs[i] for i in picked],
                                          True, trials=t + 1)
        # local descent: replace a random member to reduce signature weight,
        # then retry the closing lookup
        for _ in range(4):
            if s == 0:
                break
            i = subset[int(rng.integers(len(subset)))]
            cand = int(rng.integers(n))
            s2 = s ^ sigs[i] ^ sigs[cand]
            if s2.bit_count() < s.bit_count() and cand not in subset:
                subset[subset.index(i)] = cand
                o ^= obs[i] ^ obs[cand]
                s = s2
                group = by_sig.get(s)
                if group:
                    for k in group:
                        if k not in subset and o ^ obs[k] == 1:
                            picked = subset + [k]
                            return DistanceResult(len(picked),
                                                  [mechs[i] for i in picked],
                                                  True, trials=t + 1)
    return DistanceResult(None, [], False, trials=trials)


def verify_witness(program, witness):
    """Re-verify a distance witness by injecting it as deterministic faults."""
    events = list(_site_list(program))
    chan_at = {}
    order = 0
    for ei, ev in enumerate(events):
        if ev[0] == "channel":
            ch = ev[1]
            for oi, (p, ops) in enumerate(_channel_outcomes(ch)):
                label = f"L{ev[2]}:{ch.kind}:{','.join(map(str, ch.targets))}:{oi}"
                chan_at[label] = (ei, ops)
    spec = []
    for m in witness:
        if m.location == "witness" or m.location not in chan_at:
            raise ValueError("witness mechanisms must carry channel labels "
                             "(extract the model unmerged)")
        ei, ops = chan_at[m.location]
        spec.extend((ei, q, pauli) for q, pauli in ops)
    meta, det, obs = _propagate_all(program, injections=[spec])
    return not det[0].any() and bool(obs[0])
