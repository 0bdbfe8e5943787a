"""Circuit fragments of the gauging-measurement protocol.

Rounds are emitted against a *stage view* (the sub-lattice active at the
current intermediate distance, embedded in the target lattice by shared grid
sites).  Detector measurement sets are recorded as candidates while
emitting; `_derive_detectors` then picks, for every candidate, the first
parity (alone, or combined with the matching sets of the previous round)
that is deterministic under randomized reference replays.  This pins all
basis-change sign conventions empirically instead of trusting hand算ebra.

Layer schedules:

* superdense syndrome round: 10 CX layers (Bell prep via the flag, left and
  right data blocks offset by one layer, two-CX decode), 2 M/R layers.
* gauging round: rotation layer, reset layer, 5 CX layers (edge k of each
  plaquette: targeting data CX at layer k, flag CX at k+1, finishing data CX
  at k+2), data X-measurement with conditioned |±> re-preparation, the 5 CX
  layers again, ancilla+flag measurement, tree-parity conditional byproduct,
  inverse rotation.  Pipelining compresses the repeat to 3 layers (CXs onto
  a common target commute) and overlaps measurements with CX layers, giving
  8 CX layers per Clifford check and 18 per (stabilizer, Clifford) pair.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .circuit import ProgramBuilder
from .lattice import HEX_ORDER, build_triangular_lattice

__all__ = ["ProtocolConfig", "full_protocol", "pipeline", "StageView",
           "correction_from_outcomes", "grow_pairs"]

# Superdense CX slots by hexagon corner.  Left corners (NW, SW, W) couple to
# a1, right corners (E, SE, NE) to a2; the ancilla-control CX (X parity)
# comes first, the data-control CX (Z parity) three layers later.  Every
# data qubit finishes all its X-phase CXs before its first Z-phase CX (A
# vertices use layers 2-4 then 5-7, B vertices 4-6 then 7-9), which keeps
# the measured check operators free of parasitic ancilla-X factors; the
# leftover Z-side crossings land on freshly reset ancillas and are +1.
SD_LEFT = ("NW", "SW", "W")
SD_RIGHT = ("E", "SE", "NE")
SD_X_SLOT = {"NW": 2, "SW": 3, "W": 4, "E": 4, "SE": 5, "NE": 6}
SD_Z_SLOT = {"NW": 5, "SW": 6, "W": 7, "E": 7, "SE": 8, "NE": 9}


@dataclass
class ProtocolConfig:
    d: int
    basis: str = "y"                  # x | y | xsdg
    flagged: bool = True
    pipelined: bool = False
    rounds_at_target: int = None      # default (d+1)/2
    include_final: bool = True
    determinism_replays: int = 6

    def __post_init__(self):
        if self.basis not in ("x", "y", "xsdg"):
            raise ValueError(f"unknown basis {self.basis!r}")
        if self.rounds_at_target is None:
            self.rounds_at_target = (self.d + 1) // 2
        if self.d % 2 == 0 or self.d < 3:
            raise ValueError("distance must be odd and >= 3")


class StageView:
    """The distance-d_int sub-lattice, with qubit ids of the target lattice."""

    def __init__(self, target, d_int):
        self.target = target
        self.d = d_int
        self.lat = target if d_int == target.d else build_triangular_lattice(d_int)
        if d_int == target.d:
            self.to_target = {q: q for q in target.coords}
        else:
            self.to_target = {q: target.site_index[site]
                              for q, site in self.lat.coords.items()}

    def ids(self, qubits):
        return [self.to_target[q] for q in qubits]

    def qid(self, q):
        return self.to_target[q]

    @property
    def data(self):
        return self.ids(self.lat.data_ids)

    @property
    def caps(self):
        return self.ids(self.lat.cap_ids)

    @property
    def vertices(self):
        return self.data + self.caps

    def vertex_type(self, target_qid):
        # type is a site property, identical in stage and target coordinates
        return self.target.vertex_type(target_qid)


@dataclass
class RoundRecord:
    """Measurement bookkeeping of one emitted round, for detector derivation."""
    kind: str                      # "syndrome" | "gauging" | "final"
    stage_d: int
    x_checks: dict = field(default_factory=dict)   # plaquette site -> mset
    z_checks: dict = field(default_factory=dict)
    y_checks: dict = field(default_factory=dict)   # final transversal readout
    flags: dict = field(default_factory=dict)
    gauge_x: dict = field(default_factory=dict)    # site -> data MX indices
    gauge_z: dict = field(default_factory=dict)    # site -> edge MZ indices
    sigma: tuple = ()
    logical_mset: tuple = ()   # final readout over a logical representative
    spectators: tuple = ()     # isolated-cap MX indices (deterministic)
    cycles: list = field(default_factory=list)     # edge-parity redundancy sets
    new_plaquettes: set = field(default_factory=set)   # straddling after growth


# ---------------------------------------------------------------------------
# round emitters

def emit_superdense_round(b, sv, noiseless=False, straddling=()):
    """One superdense stabilizer measurement round; exactly 10 CX layers.

    The flag mediates a Bell pair on the two interior ancillas
    (CX(f,a1), CX(f,a2), CX(a2,f) from |0>|+>|0>); each data qubit then
    exchanges a CX pair with its near ancilla (ancilla-control first, then
    data-control), the right side offset two layers from the left.  The
    Bell measurement is completed by CX(a1,f), CX(a2,f): MZ(f) then reads
    the plaquette's Z parity and MX(a1) xor MX(a2) its X parity.
    """
    lat = sv.lat
    rec = RoundRecord("syndrome", sv.d, new_plaquettes=set(straddling))
    plqs = lat.plaquettes
    a1 = {p.index: sv.qid(p.ancillas[0]) for p in plqs}
    a2 = {p.index: sv.qid(p.ancillas[1]) for p in plqs}
    fl = {p.index: sv.qid(p.flag) for p in plqs}
    corners = {}
    for p in plqs:
        real = set(p.data)
        corners[p.index] = {c: sv.qid(q) for c, q in p.corner_qubits.items()
                            if q in real}

    nl = noiseless
    b.begin_layer(nl)
    for p in plqs:
        b.add("RZ", a1[p.index])
        b.add("RZ", a2[p.index])
        b.add("RX", fl[p.index])
    b.close_layer()

    for t in range(1, 11):
        b.begin_layer(nl)
        for p in plqs:
            i = p.index
            if t == 1:
                b.add("CX", fl[i], a1[i])
            elif t == 2:
                b.add("CX", fl[i], a2[i])
            elif t == 3:
                b.add("CX", a2[i], fl[i])
            elif t == 8:
                b.add("CX", a1[i], fl[i])
            elif t == 10:
                b.add("CX", a2[i], fl[i])
            for c, d in corners[i].items():
                anc = a1[i] if c in SD_LEFT else a2[i]
                if SD_X_SLOT[c] == t:
                    b.add("CX", anc, d)
                if SD_Z_SLOT[c] == t:
                    b.add("CX", d, anc)
        b.close_layer()

    b.begin_layer(nl)
    for p in plqs:
        b.add("MZ", fl[p.index])
        b.add("MX", a1[p.index])
        b.add("MX", a2[p.index])
    b.close_layer()
    for p in plqs:
        site = p.center
        rec.z_checks[site] = (b.meas_index(fl[p.index]),)
        rec.x_checks[site] = (b.meas_index(a1[p.index]), b.meas_index(a2[p.index]))
    return rec


def _packed_phase_schedule(edges, flagged, dangerous):
    """Pack the repeated CX pass into three layers.

    All CXs of the pass share their ancilla as target and commute, so only
    layer-disjointness constrains the packing -- plus one fault-tolerance
    rule: on edges that lie inside a minimum-weight logical, the flag CX
    must not precede both data CXs (otherwise a single ancilla Z fault in
    the gap contracts the logical by two).  The boundary-parallel edge of
    each plaquette carries no minimum-weight logical and absorbs the
    leading flag slot.
    """
    import numpy as np
    from itertools import permutations

    layers = 3
    perms3 = list(permutations(range(layers)))
    perms2 = list(permutations(range(layers), 2))

    def gates(ei, perm):
        e, anc, tgt, fin, flag = edges[ei]
        if flagged:
            lt, lf, ln = perm
            return ((tgt, lt), (flag, lf), (fin, ln), (anc, lt), (anc, lf), (anc, ln))
        lt, ln = perm
        return ((tgt, lt), (fin, ln), (anc, lt), (anc, ln))

    def ok_for_edge(ei, perm):
        if not flagged or ei not in dangerous:
            return True
        lt, lf, ln = perm
        return lf > min(lt, ln)

    rng = np.random.default_rng(5)
    base_order = sorted(range(len(edges)), key=lambda i: edges[i][1])
    assign = {}
    for attempt in range(400):
        order = list(base_order)
        if attempt:
            rng.shuffle(order)
        busy, assign = set(), {}
        budget = [200_000]

        def place(i):
            if i == len(order):
                return True
            if budget[0] <= 0:
                return False
            ei = order[i]
            for perm in (perms3 if flagged else perms2):
                budget[0] -= 1
                if not ok_for_edge(ei, perm):
                    continue
                g = gates(ei, perm)
                if all(x not in busy for x in g):
                    busy.update(g)
                    assign[ei] = perm
                    if place(i + 1):
                        return True
                    busy.difference_update(g)
            return False

        if place(0):
            break
    else:
        raise AssertionError("no 3-layer packing of the repeated CX pass")
    out = [[] for _ in range(layers)]
    for ei, perm in assign.items():
        e, anc, tgt, fin, flag = edges[ei]
        if flagged:
            lt, lf, ln = perm
            out[lf].append((flag, anc))
        else:
            lt, ln = perm
        out[lt].append((tgt, anc))
        out[ln].append((fin, anc))
    return out


def _rotation_layers(basis, sv):
    """(forward gates, inverse gates) per real data qubit for step 1/8."""
    if basis == "x":
        return {}, {}
    if basis == "y":
        fw = {q: ["SDG"] for q in sv.data}
        bw = {q: ["S"] for q in sv.data}
        return fw, bw
    fw, bw = {}, {}
    for q in sv.data:
        if sv.vertex_type(q) == "A":
            fw[q], bw[q] = ["T"], ["TDG"]
        else:
            fw[q], bw[q] = ["TDG"], ["T"]
    return fw, bw


def emit_gauging_round(b, sv, basis, flagged=True, pipelined=False,
                       noiseless=False):
    """One gauging measurement round of the transversal logical operator."""
    lat = sv.lat
    rec = RoundRecord("gauging", sv.d)
    fw, bw = _rotation_layers(basis, sv)
    edges = [(e, sv.qid(e.ancilla), sv.qid(e.targeter), sv.qid(e.finisher),
              sv.qid(lat.plaquettes[e.plaquette].flag)) for e in lat.edges]
    verts = sv.vertices
    a_verts = [q for q in verts if sv.vertex_type(q) == "A"]
    b_verts = [q for q in verts if sv.vertex_type(q) == "B"]
    nl = noiseless

    # rotation + resets
    if fw:
        depth = max(len(g) for g in fw.values())
        for k in range(depth):
            b.begin_layer(nl)
            for q, gates in fw.items():
                if k < len(gates):
                    b.add(gates[k], q)
            b.close_layer()
    b.begin_layer(nl)
    for e, anc, tgt, fin, flag in edges:
        b.add("RZ", anc)
    for p in lat.plaquettes:
        b.add("RX", sv.qid(p.flag))
    for q in sv.caps:
        b.add("RX", q)
    b.close_layer()

    def emit_cx_layers(schedule):
        """schedule: list of layers, each a list of (control, target)."""
        for layer in schedule:
            b.begin_layer(nl)
            for c, t in layer:
                b.add("CX", c, t)
            b.close_layer()

    def five_layer_schedule():
        layers = [[] for _ in range(5)]
        for e, anc, tgt, fin, flag in edges:
            layers[e.pos - 1].append((tgt, anc))
            if flagged:
                layers[e.pos].append((flag, anc))
            layers[e.pos + 1].append((fin, anc))
        return layers

    five = five_layer_schedule()
    if pipelined:
        from .lattice import dangerous_edges
        danger_global = dangerous_edges(lat)
        latin = _packed_phase_schedule(edges, flagged, danger_global)
    else:
        latin = None

    emit_cx_layers(five)

    # data measurement + conditioned |±> re-preparation
    b.begin_layer(nl)
    for q in verts:
        b.add("MX", q)
    b.close_layer()
    rec.sigma = tuple(b.meas_index(q) for q in verts)
    b.begin_layer(nl)
    for q in verts:
        b.add("RX", q)
    b.close_layer()
    b.begin_layer(nl)
    for q, m in zip(verts, rec.sigma):
        b.add("Z", q, cond=[m])
    b.close_layer()

    emit_cx_layers(latin if pipelined else five)

    b.begin_layer(nl)
    for e, anc, tgt, fin, flag in edges:
        b.add("MZ", anc)
    for p in lat.plaquettes:
        b.add("MX", sv.qid(p.flag))
    b.close_layer()
    edge_meas = {}
    for ei, (e, anc, tgt, fin, flag) in enumerate(edges):
        edge_meas[ei] = b.meas_index(anc)
    if flagged:
        for p in lat.plaquettes:
            rec.flags[p.center] = (b.meas_index(sv.qid(p.flag)),)
    # per-plaquette outcome frames carried into later checks
    sigma_of = dict(zip(verts, rec.sigma))
    for p in lat.plaquettes:
        rec.gauge_x[p.center] = tuple(sigma_of[sv.qid(q)] for q in p.data)
        rec.gauge_z[p.center] = tuple(edge_meas[ei] for ei in p.edge_ids)
    # redundancy checks: spectator caps (trivial gauge operators, outcome
    # deterministic) and edge-outcome parities around ancilla-graph cycles
    rec.spectators = tuple(sigma_of[sv.qid(q)] for q in lat.cap_ids
                           if not lat.vertex_edges[q])
    roots, parent = lat.spanning_forest()
    tree = {pe for (_, pe) in parent.values()}
    cycles = []
    for ei in range(len(lat.edges)):
        if ei in tree:
            continue
        e = lat.edges[ei]
        path = {edge_meas[ei]}
        for v in (e.targeter, e.finisher):
            while v in parent:
                u, pe = parent[v]
                path ^= {edge_meas[pe]}
                v = u
        cycles.append(tuple(sorted(path)))
    rec.cycles = cycles

    # byproduct: conditional X (in the rotated frame) on the tree-path parity
    roots, parent = lat.spanning_forest()
    b.begin_layer(nl)
    for q in lat.data_ids:
        path = []
        v = q
        while v in parent:
            u, ei = parent[v]
            path.append(edge_meas[ei])
            v = u
        if path:
            b.add("X", sv.qid(q), cond=path)
    b.close_layer()

    if bw:
        depth = max(len(g) for g in bw.values())
        for k in range(depth):
            b.begin_layer(nl)
            for q, gates in bw.items():
                if k < len(gates):
                    b.add(gates[k], q)
            b.close_layer()
    return rec


def correction_from_outcomes(outcomes, lattice):
    """Data-qubit subset Q' from edge-ancilla outcome bits.

    outcomes: dict edge_index -> bit.  A qubit is in Q' when the outcome
    parity along its spanning-forest path to the component root is odd.
    Vertices in components whose outcomes are inconsistent with any
    coboundary cannot occur here (a forest admits every outcome pattern);
    cycle inconsistencies only exist with redundant edges and surface as
    detection events in sampling.
    """
    roots, parent = lattice.spanning_forest()
    q_prime = []
    for q in sorted(lattice.vertex_edges):
        par, v = 0, q
        while v in parent:
            u, ei = parent[v]
            par ^= outcomes.get(ei, 0)
            v = u
        if par:
            q_prime.append(q)
    return q_prime


def emit_injection(b, sv, basis):
    """Prepare the stage-3 logical |+>, |+i> or |T> state.

    Starts from |+>^n, runs one superdense round (doubling as the first
    stabilizer round of the schedule), then a transversal Clifford for the
    x/y bases.  The xsdg injection additionally pins the Z checks to +1 with
    corner feedforward; the first gauging round then projects onto the
    logical |T> with a conditional logical-Z fix-up.
    """
    b.begin_layer()
    for q in sv.data:
        b.add("RX", q)
    b.close_layer()
    rec = emit_superdense_round(b, sv)
    if basis == "y":
        b.begin_layer()
        for q in sv.data:
            b.add("S", q)
        b.close_layer()
    elif basis == "xsdg":
        # pin every Z check to +1: corner qubits sit in exactly one plaquette
        corners = _corner_fixers(sv)
        b.begin_layer()
        for site, q in corners.items():
            b.add("X", q, cond=rec.z_checks[site])
        b.close_layer()
    return rec


def _corner_fixers(sv):
    """plaquette center site -> a data qubit belonging to that plaquette only."""
    lat = sv.lat
    count = {}
    for p in lat.plaquettes:
        for q in p.data:
            count[q] = count.get(q, 0) + 1
    out = {}
    for p in lat.plaquettes:
        only = [q for q in p.data if count[q] == 1]
        if only:
            out[p.center] = sv.qid(only[0])
    return out


def grow_pairs(sv_from, sv_to):
    """New-data Bell pairing for one growth step.

    Returns (pairs, chains): pairs as (q1, q2, relay ancilla) in target ids,
    matched along edges whose color matches the boundary being grown along;
    leftover qubits (boundary corners without such an edge) are paired up
    greedily through the shortest relay chains avoiding old data, returned
    as alternating vertex/ancilla id paths.
    """
    if sv_to.d != sv_from.d + 2:
        raise ValueError("growth proceeds in steps of two")
    old_sites = set(sv_from.lat.coords[q] for q in sv_from.lat.data_ids)
    lat = sv_to.lat
    new = [q for q in lat.data_ids if lat.coords[q] not in old_sites]
    new_set = set(new)
    from .lattice import Color
    grow_color = Color.B
    pairs, used = [], set()
    for e in lat.edges:
        u, v = e.targeter, e.finisher
        if (e.color is grow_color and u in new_set and v in new_set
                and u not in used and v not in used):
            pairs.append((sv_to.qid(u), sv_to.qid(v), sv_to.qid(e.ancilla)))
            used.update((u, v))
    rest = [q for q in new if q not in used]
    if len(rest) % 2:
        raise AssertionError(f"odd number of unmatched growth qubits: {rest}")
    chains = []
    while rest:
        q1 = rest.pop(0)
        best = min(rest, key=lambda q:
                   len(_relay_path(lat, q1, q, old_sites)))
        rest.remove(best)
        path = _relay_path(lat, q1, best, old_sites)
        chains.append([sv_to.qid(q) for q in path])
    return pairs, chains


def _relay_path(lat, q1, q2, forbidden_sites):
    """Shortest alternating data/ancilla chain from q1 to q2 (BFS)."""
    from collections import deque
    prev = {q1: None}
    dq = deque([q1])
    roles = lat.roles
    while dq:
        u = dq.popleft()
        if u == q2:
            break
        x, y = lat.coords[u]
        for dx, dy in ((1, 0), (-1, 0), (0, 1), (0, -1)):
            s = (x + dx, y + dy)
            v = lat.site_index.get(s)
            if v is None or v in prev:
                continue
            if roles[v].value == "flag" or s in forbidden_sites:
                continue
            prev[v] = u
            dq.append(v)
    if q2 not in prev:
        raise AssertionError("no relay path found")
    path, v = [], q2
    while v is not None:
        path.append(v)
        v = prev[v]
    return path[::-1]


def emit_growth(b, sv_from, sv_to):
    """Initialize the new qubits of a growth step in Bell pairs."""
    pairs, chains = grow_pairs(sv_from, sv_to)
    init = {}
    for a, bq, anc in pairs:
        init.setdefault(a, "RZ")
        init.setdefault(bq, "RZ")
        init.setdefault(anc, "RZ")
    for chain in chains:
        for w in chain[1:]:
            init[w] = "RZ"
        init[chain[0]] = "RX"
    b.begin_layer()
    for q, kind in sorted(init.items()):
        b.add(kind, q)
    b.close_layer()
    # relay-chain Bell ladders first: their wires may overlap the local
    # pairs, and the undo pass returns every wire to |0>
    for chain in chains:
        for c, t in zip(chain, chain[1:]):
            b.begin_layer()
            b.add("CX", c, t)
            b.close_layer()
        for c, t in list(zip(chain, chain[1:]))[-2::-1]:
            b.begin_layer()
            b.add("CX", c, t)
            b.close_layer()
    b.begin_layer()
    for a, bq, anc in pairs:
        b.add("RX", a)
    b.close_layer()
    # local pairs: CX(a->anc), CX(anc->b), CX(a->anc)
    for step in range(3):
        b.begin_layer()
        for a, bq, anc in pairs:
            if step == 1:
                b.add("CX", anc, bq)
            else:
                b.add("CX", a, anc)
        b.close_layer()


def emit_final(b, sv, basis):
    """Noiseless stabilizer round plus transversal logical readout."""
    rec_s = emit_superdense_round(b, sv, noiseless=True)
    rec = RoundRecord("final", sv.d)
    if basis == "xsdg":
        return [rec_s]
    if basis == "y":
        b.begin_layer(noiseless=True)
        for q in sv.data:
            b.add("SDG", q)
        b.close_layer()
    b.begin_layer(noiseless=True)
    for q in sv.data:
        b.add("MX", q)
    b.close_layer()
    rec.sigma = tuple(b.meas_index(q) for q in sv.data)
    # the logical value is the readout parity over a representative support;
    # the parity over all data differs from it by plaquette readout checks
    from .lattice import logical_support
    rec.logical_mset = tuple(b.meas_index(sv.qid(q))
                             for q in logical_support(sv.lat))
    for p in sv.lat.plaquettes:
        rec.y_checks[p.center] = tuple(b.meas_index(sv.qid(q)) for q in p.data)
    return [rec_s, rec]


# ---------------------------------------------------------------------------
# detector derivation

def _gf2_solve(A, bvec):
    """Solve A c = b over GF(2); A is (rows, k) bool, b is (rows,) bool.

    Returns a solution vector c (bool array of length k) or None.
    """
    import numpy as np
    A = A.copy().astype(bool)
    b = bvec.copy().astype(bool)
    rows, k = A.shape
    piv_col_of_row = {}
    r = 0
    for col in range(k):
        sel = None
        for rr in range(r, rows):
            if A[rr, col]:
                sel = rr
                break
        if sel is None:
            continue
        if sel != r:
            A[[r, sel]] = A[[sel, r]]
            b[[r, sel]] = b[[sel, r]]
        mask = A[:, col].copy()
        mask[r] = False
        A[mask] ^= A[r]
        b[mask] ^= b[r]
        piv_col_of_row[r] = col
        r += 1
        if r == rows:
            break
    # consistency of zero rows
    for rr in range(r, rows):
        if b[rr] and not A[rr].any():
            return None
    c = np.zeros(k, dtype=bool)
    for rr in sorted(piv_col_of_row, reverse=True):
        col = piv_col_of_row[rr]
        val = b[rr] ^ (A[rr] & c).sum() % 2
        c[col] = bool(val % 2)
    # verify (handles inconsistent systems with nonzero rows beyond rank)
    if (((A @ c) % 2).astype(bool) ^ b).any():
        return None
    return c


def _derive_detectors(b, records, replays, seed=23):
    """Attach the deterministic detector set implied by the round records.

    Outcome dependences of check parities (conditioned re-preparations,
    teleportation byproducts, Heisenberg crossings of adjacent rounds) are
    all linear over GF(2).  Each candidate check is therefore combined with
    a pool of frame sets -- the same plaquette's previous checks, gauge
    frames, plus every single outcome bit of a two-round trailing window --
    and the combination is found by Gaussian elimination against randomized
    reference replays, then verified on held-out replays.  Candidates with
    no deterministic combination (straddling plaquettes right after growth)
    are skipped.  Flags, spectator caps and ancilla-cycle parities are
    deterministic as-is and become detectors directly.
    """
    import numpy as np

    from .stab_sim import _run_tableau

    prog = b.finish()
    base = np.array(_run_tableau(prog)[0], dtype=bool)
    rng = np.random.default_rng(seed)
    n_test = 24
    windows = [len(r.sigma) + sum(len(c) for c in r.gauge_z.values()) + 40
               for r in records if r.kind == "gauging"]
    n_train = max(64, (max(windows) if windows else 0) * 2 + 32)
    diffs = np.array([np.array(_run_tableau(prog, rng)[0], dtype=bool) ^ base
                      for _ in range(n_train + n_test)])
    train, test = diffs[:n_train], diffs[n_train:]

    def deterministic(mset, mat):
        if not mset:
            return True
        return not (mat[:, list(mset)].sum(axis=1) % 2).any()

    def solve(target, pool):
        if deterministic(target, train) and deterministic(target, test):
            return tuple(sorted(target))
        if not pool:
            return None
        bvec = (train[:, list(target)].sum(axis=1) % 2).astype(bool)
        A = np.zeros((train.shape[0], len(pool)), dtype=bool)
        for i, f in enumerate(pool):
            A[:, i] = (train[:, list(f)].sum(axis=1) % 2).astype(bool)
        c = _gf2_solve(A, bvec)
        if c is None:
            return None
        s = set(target)
        for i in np.flatnonzero(c):
            s ^= set(pool[i])
        if not s or not deterministic(s, test):
            return None
        return tuple(sorted(s))

    detectors = []
    seen_msets = set()

    def put(mset, tag):
        if mset and mset not in seen_msets:
            seen_msets.add(mset)
            detectors.append((mset, tag))

    prev_by_site = {}
    frames_by_site = {}
    window = []        # single-bit frames of the trailing rounds
    prev_window = []
    prev_sigma = None
    for r in records:
        if r.kind in ("syndrome", "final"):
            round_bits = []
            for checks in (r.x_checks, r.z_checks):
                for mset in checks.values():
                    round_bits.extend((m,) for m in mset)
            for typ, checks in (("X", r.x_checks), ("Z", r.z_checks)):
                for site, mset in checks.items():
                    prev = prev_by_site.get(site, {})
                    pool = [prev[t] for t in ("X", "Z") if t in prev]
                    pool += frames_by_site.get(site, [])
                    pool += prev_window + window
                    got = solve(mset, pool)
                    if got is not None:
                        put(got, f"plq{site}-{typ}-d{r.stage_d}")
            for site, mset in r.y_checks.items():
                prev = prev_by_site.get(site, {})
                pool = [prev[t] for t in ("X", "Z") if t in prev]
                pool += frames_by_site.get(site, []) + prev_window + window
                got = solve(mset, pool)
                if got is not None:
                    put(got, f"plq{site}-Y-final")
            for site, mset in r.x_checks.items():
                prev_by_site.setdefault(site, {})["X"] = tuple(mset)
                frames_by_site[site] = []
            for site, mset in r.z_checks.items():
                prev_by_site.setdefault(site, {})["Z"] = tuple(mset)
            for mset in r.y_checks.values():
                round_bits.append(tuple(mset))
            prev_window = window + round_bits
            window = []
        if r.kind == "gauging":
            for site, mset in r.flags.items():
                if deterministic(mset, diffs):
                    put(tuple(mset), f"flag{site}-d{r.stage_d}")
                else:
                    raise AssertionError(f"flag at {site} not deterministic")
            for m in r.spectators:
                if deterministic((m,), diffs):
                    put((m,), f"spectator-d{r.stage_d}")
            for cyc in r.cycles:
                if deterministic(cyc, diffs):
                    put(tuple(cyc), f"cycle-d{r.stage_d}")
            pool = ([] if prev_sigma is None else [prev_sigma]) + prev_window + window
            got = solve(r.sigma, pool)
            if got is not None:
                put(got, f"logical-d{r.stage_d}")
            prev_sigma = tuple(r.sigma)
            for site, mset in r.gauge_x.items():
                frames_by_site.setdefault(site, []).append(tuple(mset))
            for site, mset in r.gauge_z.items():
                frames_by_site.setdefault(site, []).append(tuple(mset))
            for m in r.sigma:
                window.append((m,))
            for mset in r.gauge_z.values():
                for m in mset:
                    window.append((m,))
            for mset in r.flags.values():
                window.append(tuple(mset))
    obs = solve(prog.observable, prev_window + window)
    if obs is None:
        # persistent frames (unrepaired check randomness of early stages)
        # can reach the readout; solve against every prior outcome bit
        M = prog.n_measurements
        need = M + 48
        while diffs.shape[0] < need + n_test:
            extra = np.array([np.array(_run_tableau(prog, rng)[0], dtype=bool)
                              ^ base for _ in range(need + n_test - diffs.shape[0])])
            diffs = np.vstack([diffs, extra])
        train_all = diffs[:need]
        test_all = diffs[need:need + n_test]
        bvec = (train_all[:, list(prog.observable)].sum(axis=1) % 2).astype(bool)
        c = _gf2_solve(train_all.astype(bool), bvec)
        if c is not None:
            s = set(prog.observable) ^ set(np.flatnonzero(c).tolist())
            if s and not (test_all[:, list(s)].sum(axis=1) % 2).any():
                obs = tuple(sorted(s))
        if obs is None:
            raise AssertionError("observable parity could not be made "
                                 "deterministic")
    return prog, detectors, obs


# ---------------------------------------------------------------------------
# full schedule

def full_protocol(config):
    """Injection, per-stage (stabilizer, gauging) pairs, growth, final round."""
    cfg = config
    target = build_triangular_lattice(cfg.d)
    b = ProgramBuilder(target)
    stages = list(range(3, cfg.d + 1, 2))
    views = {d: StageView(target, d) for d in stages}

    records = []
    gauge_sigmas = []
    for si, d_int in enumerate(stages):
        sv = views[d_int]
        rounds = cfg.rounds_at_target if d_int == cfg.d else 1
        for r in range(rounds):
            if si == 0 and r == 0:
                records.append(emit_injection(b, sv, cfg.basis))
            else:
                straddle = ()
                if r == 0:
                    prev_sites = {views[stages[si - 1]].lat.coords[q]
                                  for q in views[stages[si - 1]].lat.data_ids}
                    straddle = {p.center for p in sv.lat.plaquettes
                                if any(sv.lat.coords[q] in prev_sites for q in p.data)
                                and not all(sv.lat.coords[q] in prev_sites
                                            for q in p.data)}
                records.append(emit_superdense_round(b, sv, straddling=straddle))
            grec = emit_gauging_round(b, sv, cfg.basis, flagged=cfg.flagged,
                                      pipelined=cfg.pipelined)
            records.append(grec)
            gauge_sigmas.append(grec.sigma)
            if si == 0 and r == 0 and cfg.basis == "xsdg":
                # conditional logical-Z fix: the first gauging round projects
                # |+>_L onto |T> with a random sign
                from .lattice import logical_support
                b.begin_layer()
                for q in logical_support(sv.lat):
                    b.add("Z", sv.qid(q), cond=grec.sigma)
                b.close_layer()
        if d_int != cfg.d:
            emit_growth(b, sv, views[stages[si + 1]])

    sv = views[cfg.d]
    if cfg.include_final:
        records.extend(emit_final(b, sv, cfg.basis))
    final_rec = records[-1]
    if cfg.basis != "xsdg" and cfg.include_final:
        b.set_observable(tuple(final_rec.logical_mset) + tuple(gauge_sigmas[-1]))
    else:
        b.set_observable(tuple(gauge_sigmas[-1]))

    flat = []
    for r in records:
        flat.extend(r if isinstance(r, list) else [r])
    if cfg.basis == "xsdg":
        detectors = _derive_detectors_vec(b, flat, cfg)
        obs = b.observable
    else:
        _, detectors, obs = _derive_detectors(b, flat, cfg.determinism_replays)
    prog = b_to_program(b, detectors, obs)
    prog._protocol_config = cfg
    return prog


def b_to_program(b, detectors, observable=None):
    from .circuit import CircuitProgram, Detector
    return CircuitProgram(
        layers=b.layers,
        detectors=[Detector(mset, tag) for mset, tag in detectors],
        observable=b.observable if observable is None else tuple(observable),
        n_measurements=b._n_meas,
        lattice=b.lattice)


def _derive_detectors_vec(b, records, cfg):
    """Detector sets for the non-Clifford variant, mirrored from the
    structurally identical Y-basis program.

    The first gauging sigma is the |T> projection (random, consumed by the
    conditional logical-Z fix) so the first logical check is dropped, as are
    the twin's transversal-readout detectors beyond the xsdg measurement
    count."""
    twin_cfg = ProtocolConfig(d=cfg.d, basis="y", flagged=cfg.flagged,
                              pipelined=cfg.pipelined,
                              rounds_at_target=cfg.rounds_at_target,
                              include_final=cfg.include_final,
                              determinism_replays=cfg.determinism_replays)
    twin = full_protocol(twin_cfg)
    out = []
    first_logical_seen = False
    for det in twin.detectors:
        if det.tag.startswith("logical") and not first_logical_seen:
            first_logical_seen = True
            continue
        if any(m >= b._n_meas for m in det.mset):
            continue
        out.append((det.mset, det.tag))
    return out


def pipeline(program):
    """Pipelined rebuild of a full-protocol program (mixed layers allowed)."""
    cfg = getattr(program, "_protocol_config", None)
    if cfg is None:
        raise ValueError("pipeline() needs a program built by full_protocol")
    if cfg.pipelined:
        return program
    new_cfg = ProtocolConfig(d=cfg.d, basis=cfg.basis, flagged=cfg.flagged,
                             pipelined=True, rounds_at_target=cfg.rounds_at_target,
                             include_final=cfg.include_final,
                             determinism_replays=cfg.determinism_replays)
    return full_protocol(new_cfg)
