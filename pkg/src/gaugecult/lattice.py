"""Triangular color-code lattice embedded in a square grid.

Coordinates follow the usual triangular-patch convention: sites (x, y) with
0 <= y <= L, y <= x <= 2L - y, x = y (mod 2), where L = 3(d-1)/2.  Sites with
((x - y)/2) % 3 == (y + 2) % 3 are plaquette centers, everything else is a
data qubit.  The same integer pair doubles as the square-grid position
(col = x, row = y): data and flag qubits sit on the even-checkerboard
sublattice, edge ancillas on the odd one.

Each plaquette owns exactly three edge ancillas, at (cx-1, cy), (cx+1, cy)
and (cx, cy+1); the flag at the center is grid-adjacent to all three.  The
two missing hexagon corners of a boundary plaquette are materialized as
boundary qubits ("caps") so the plaquette keeps all three owned edges.  The
d=3 layout totals 25 qubits.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from fractions import Fraction
from itertools import combinations

import numpy as np

__all__ = [
    "Color",
    "QubitRole",
    "Plaquette",
    "Edge",
    "ColorCodeLattice",
    "build_triangular_lattice",
    "minimum_weight_logicals",
    "graph_diagnostics",
    "cheeger_lower_bound",
    "layout_json",
    "layout_ascii",
]


class Color(Enum):
    G = "G"
    B = "B"
    R = "R"


class QubitRole(Enum):
    DATA = "data"
    EDGE_ANCILLA = "ancilla"
    FLAG = "flag"
    BOUNDARY_DATA = "boundary"


# Hexagon corner offsets from the plaquette center, in cycle order.
HEX_OFFSETS = {
    "W": (-2, 0),
    "SW": (-1, -1),
    "SE": (1, -1),
    "E": (2, 0),
    "NE": (1, 1),
    "NW": (-1, 1),
}
HEX_ORDER = ("W", "SW", "SE", "E", "NE", "NW")

# Owned edges: (position, ancilla offset, endpoint corner pair).  Which
# endpoint targets (CX at layer pos) versus finishes (pos + 2) is solved per
# lattice so that no qubit is used twice in a layer.  Boundary plaquettes
# reroute the edges of their missing corners through one cap qubit, keeping
# the ancilla graph connected; the other cap stays an isolated spectator
# vertex (its gauge operator has empty ancilla support).
OWNED_EDGES_BULK = (
    (1, (-1, 0), "W", "SW"),
    (2, (1, 0), "SE", "E"),
    (3, (0, 1), "NW", "NE"),
)
OWNED_EDGES_BOTTOM = (          # missing SW, SE: caps hang as leaves so no
    (1, (-1, 0), "W", "SW"),    # vertex exceeds gauge degree 3
    (2, (1, 0), "SE", "E"),
    (3, (0, 1), "NW", "NE"),
)
OWNED_EDGES_BOTTOM_RIGHT = (    # bottom-right corner: E has no other edge,
    (1, (-1, 0), "W", "SW"),    # so it links through NE instead of the cap
    (2, (1, 0), "E", "NE"),
    (3, (0, 1), "NW", "NE"),
)
OWNED_EDGES_LEFT = (            # missing W, NW: corner variant links the
    (1, (-1, 0), "SW", "NW"),   # otherwise-degree-0 corner through the cap
    (2, (1, 0), "SE", "E"),
    (3, (0, 1), "NW", "NE"),
)
OWNED_EDGES_LEFT_EDGE = (       # missing W, NW, SW connected elsewhere
    (1, (-1, 0), "SW", "W"),
    (2, (1, 0), "SE", "E"),
    (3, (0, 1), "NW", "NE"),
)
OWNED_EDGES_RIGHT = (           # missing E, NE; NE becomes the linking cap
    (1, (-1, 0), "W", "SW"),
    (2, (1, 0), "SE", "NE"),
    (3, (0, 1), "NW", "NE"),
)

ROW_COLORS = (Color.G, Color.B, Color.R)


@dataclass
class Edge:
    ancilla: int
    targeter: int          # vertex qubit doing the CX at layer pos
    finisher: int          # vertex qubit doing the CX at layer pos + 2
    pos: int               # 1, 2 or 3 within the owning plaquette
    color: Color
    plaquette: int         # index of the owning (= flagging) plaquette

    @property
    def endpoints(self):
        return (self.targeter, self.finisher)


@dataclass
class Plaquette:
    index: int
    center: tuple
    color: Color
    data: list             # real data qubit ids, in hexagon cycle order
    caps: list             # boundary qubit ids for the missing corners
    flag: int
    ancillas: tuple        # (a1, a2) interior pair used for the Bell prep
    top_ancilla: int
    corner_qubits: dict    # corner name -> qubit id (data or cap)
    edge_ids: list         # indices into lattice.edges, pos order
    is_boundary: bool = False


@dataclass
class ColorCodeLattice:
    d: int
    coords: dict           # qubit id -> (x, y) natural coordinates
    roles: dict            # qubit id -> QubitRole
    site_index: dict       # (x, y) -> qubit id
    plaquettes: list
    edges: list
    data_ids: list
    cap_ids: list
    ancilla_ids: list
    flag_ids: list
    offset: tuple = (1, 1)  # added to (x, y) for the nonnegative grid coords
    # adjacency of the ancilla graph: vertex id -> list of edge indices
    vertex_edges: dict = field(default_factory=dict)

    @property
    def n_data(self):
        return len(self.data_ids)

    @property
    def n_qubits(self):
        return len(self.coords)

    def grid_coord(self, qubit):
        x, y = self.coords[qubit]
        return (y + self.offset[1], x + self.offset[0])  # (row, col)

    def is_grid_adjacent(self, q1, q2):
        x1, y1 = self.coords[q1]
        x2, y2 = self.coords[q2]
        return abs(x1 - x2) + abs(y1 - y2) == 1

    def vertex_type(self, qubit):
        """'A' vertices target (CX at layer pos), 'B' vertices finish."""
        x, y = self.coords[qubit]
        return "A" if ((x - y) // 2) % 3 == y % 3 else "B"

    def check_support(self, plaquette_index):
        return list(self.plaquettes[plaquette_index].data)

    def spanning_forest(self):
        """(root of each component, parent edge map) over the ancilla graph.

        Returns (roots, parent) where parent[v] = (u, edge_index) on the
        path toward the component root; used for outcome-to-correction
        conversion.
        """
        roots, parent, seen = [], {}, set()
        vertices = sorted(self.vertex_edges)
        for start in vertices:
            if start in seen:
                continue
            roots.append(start)
            seen.add(start)
            stack = [start]
            while stack:
                u = stack.pop()
                for ei in self.vertex_edges[u]:
                    e = self.edges[ei]
                    v = e.finisher if e.targeter == u else e.targeter
                    if v not in seen:
                        seen.add(v)
                        parent[v] = (u, ei)
                        stack.append(v)
        return roots, parent


def _anc_pos(y):
    return (y + 2) % 3


def _is_center(x, y):
    return ((x - y) // 2) % 3 == _anc_pos(y)


def build_triangular_lattice(d):
    """Construct the d x d triangular color-code layout with flags and caps."""
    if d % 2 == 0 or d < 3:
        raise ValueError(f"distance must be an odd integer >= 3, got {d}")

    L = 3 * (d - 1) // 2

    def in_patch(x, y):
        return 0 <= y <= L and y <= x <= 2 * L - y and (x - y) % 2 == 0

    coords, roles, site_index = {}, {}, {}

    def add_qubit(site, role):
        if site in site_index:
            raise AssertionError(f"site {site} assigned twice")
        qid = len(coords)
        coords[qid] = site
        roles[qid] = role
        site_index[site] = qid
        return qid

    # Data qubits first (row-major), then per-plaquette flags/ancillas/caps.
    centers = []
    for y in range(L + 1):
        for x in range(y, 2 * L - y + 1, 2):
            if _is_center(x, y):
                centers.append((x, y))
            else:
                add_qubit((x, y), QubitRole.DATA)

    data_ids = list(coords)
    n = len(data_ids)
    assert n == (3 * d * d + 1) // 4, (n, d)
    assert len(centers) == (n - 1) // 2

    plaquettes, edges = [], []
    for pi, (cx, cy) in enumerate(centers):
        color = ROW_COLORS[cy % 3]
        corner_sites = {name: (cx + dx, cy + dy) for name, (dx, dy) in HEX_OFFSETS.items()}
        missing = frozenset(name for name, s in corner_sites.items() if not in_patch(*s))
        # Boundary plaquettes lose exactly one of these corner pairs.
        assert missing in (frozenset(), frozenset({"SW", "SE"}),
                           frozenset({"W", "NW"}), frozenset({"E", "NE"})), (cx, cy, missing)

        flag = add_qubit((cx, cy), QubitRole.FLAG)
        corner_qubits, caps, data = {}, [], []
        for name in HEX_ORDER:
            s = corner_sites[name]
            if name in missing:
                corner_qubits[name] = add_qubit(s, QubitRole.BOUNDARY_DATA)
                caps.append(corner_qubits[name])
            else:
                corner_qubits[name] = site_index[s]
                data.append(site_index[s])

        if not missing:
            table = OWNED_EDGES_BULK
        elif missing == frozenset({"SW", "SE"}):
            table = (OWNED_EDGES_BOTTOM_RIGHT if cx == 2 * L - 2
                     else OWNED_EDGES_BOTTOM)
        elif missing == frozenset({"W", "NW"}):
            # only the bottom-left corner plaquette needs the vertical
            # reroute: its SW corner has no other gauge edge
            table = OWNED_EDGES_LEFT if (cx, cy) == (1, 1) else OWNED_EDGES_LEFT_EDGE
        else:
            table = OWNED_EDGES_RIGHT

        edge_ids = []
        anc_pair = []
        for pos, (dx, dy), n1, n2 in table:
            anc = add_qubit((cx + dx, cy + dy), QubitRole.EDGE_ANCILLA)
            edge_color = ROW_COLORS[(cy + 1) % 3]
            edges.append(Edge(ancilla=anc, targeter=corner_qubits[n1],
                              finisher=corner_qubits[n2], pos=pos,
                              color=edge_color, plaquette=pi))
            edge_ids.append(len(edges) - 1)
            if pos in (1, 2):
                anc_pair.append(anc)

        plaquettes.append(Plaquette(
            index=pi, center=(cx, cy), color=color, data=data, caps=caps, flag=flag,
            ancillas=tuple(anc_pair), top_ancilla=edges[edge_ids[2]].ancilla,
            corner_qubits=corner_qubits, edge_ids=edge_ids,
            is_boundary=bool(missing)))

    lattice = ColorCodeLattice(
        d=d, coords=coords, roles=roles, site_index=site_index,
        plaquettes=plaquettes, edges=edges,
        data_ids=data_ids,
        cap_ids=[q for q, r in roles.items() if r is QubitRole.BOUNDARY_DATA],
        ancilla_ids=[q for q, r in roles.items() if r is QubitRole.EDGE_ANCILLA],
        flag_ids=[q for q, r in roles.items() if r is QubitRole.FLAG])

    _orient_edges(lattice)
    for v in lattice.data_ids + lattice.cap_ids:
        lattice.vertex_edges[v] = []
    for ei, e in enumerate(lattice.edges):
        lattice.vertex_edges[e.targeter].append(ei)
        lattice.vertex_edges[e.finisher].append(ei)

    _check_invariants(lattice)
    return lattice


def _orient_edges(lat):
    """Pick targeter/finisher per edge so every vertex's CX layers (pos for
    the targeting side, pos+2 for the finishing side) are pairwise distinct.

    Backtracking over edges in a most-constrained-vertex order; the bulk
    honeycomb always admits the orientation with the 'A' sublattice
    targeting, boundary reroutes need the search.
    """
    def layers(edge, flip):
        t, f = (edge.finisher, edge.targeter) if flip else \
               (edge.targeter, edge.finisher)
        return (t, edge.pos), (f, edge.pos + 2)

    # row-major by ancilla site keeps conflicts local, so plain backtracking
    # stays linear in practice; a node budget guards against pathologies
    order = sorted(range(len(lat.edges)),
                   key=lambda ei: (lat.coords[lat.edges[ei].ancilla][1],
                                   lat.coords[lat.edges[ei].ancilla][0],
                                   lat.edges[ei].pos))
    flips = {}
    occupied = {}
    budget = [4_000_000]

    def place(k):
        if k == len(order):
            return True
        if budget[0] <= 0:
            return False
        ei = order[k]
        e = lat.edges[ei]
        for flip in (False, True):
            budget[0] -= 1
            (ta, tl), (fa, fl) = layers(e, flip)
            if (ta, tl) not in occupied and (fa, fl) not in occupied:
                occupied[(ta, tl)] = ei
                occupied[(fa, fl)] = ei
                flips[ei] = flip
                if place(k + 1):
                    return True
                del occupied[(ta, tl)]
                del occupied[(fa, fl)]
        return False

    if not place(0):
        raise AssertionError("no conflict-free CX orientation found")
    for ei, flip in flips.items():
        if flip:
            e = lat.edges[ei]
            e.targeter, e.finisher = e.finisher, e.targeter


def _check_invariants(lat):
    n = lat.n_data
    assert len(lat.plaquettes) == (n - 1) // 2
    assert len(lat.flag_ids) == (n - 1) // 2
    assert len(lat.ancilla_ids) == 3 * (n - 1) // 2
    # every ancilla'd edge is flagged by exactly one plaquette, 3 per flag
    for p in lat.plaquettes:
        assert len(p.edge_ids) == 3
        for ei in p.edge_ids:
            e = lat.edges[ei]
            assert e.plaquette == p.index
            assert lat.is_grid_adjacent(p.flag, e.ancilla)
            assert lat.is_grid_adjacent(e.targeter, e.ancilla)
            assert lat.is_grid_adjacent(e.finisher, e.ancilla)
        # every real data qubit of the plaquette is grid-adjacent to a1 or a2
        a1, a2 = p.ancillas
        for q in p.data:
            assert lat.is_grid_adjacent(q, a1) or lat.is_grid_adjacent(q, a2), (p.index, q)
    # schedule feasibility: each vertex occupies distinct CX layers
    for v, eids in lat.vertex_edges.items():
        layers = []
        for ei in eids:
            e = lat.edges[ei]
            layers.append(e.pos if e.targeter == v else e.pos + 2)
        assert len(set(layers)) == len(layers), (v, layers)
    # caps: two per boundary plaquette
    for p in lat.plaquettes:
        assert len(p.caps) == (2 if p.is_boundary else 0)
    # the ancilla graph restricted to vertices with edges is connected, so
    # the gauging measurement determines its correction up to the global
    # logical; spectator caps are isolated and carry trivial gauge operators
    adj = _ancilla_graph_adjacency(lat)
    active = {v for v, nb in adj.items() if nb}
    comps = _components({v: adj[v] for v in active})
    assert len(comps) <= 1, f"ancilla graph core has {len(comps)} components"
    assert set(lat.data_ids) <= active, "some data qubit has no gauge edge"
    # nonnegative normalized grid coords
    for q in lat.coords:
        r, c = lat.grid_coord(q)
        assert r >= 0 and c >= 0


# ---------------------------------------------------------------------------
# logical operators

def _corner_sites(lat):
    L = 3 * (lat.d - 1) // 2
    return {
        Color.B: (0, 0),        # bottom-left corner, blue boundary = right edge
        Color.G: (2 * L, 0),    # bottom-right corner, green boundary = left edge
        Color.R: (L, L),        # top corner, red boundary = bottom edge
    }


def _on_boundary(lat, site, color):
    x, y = site
    L = 3 * (lat.d - 1) // 2
    if color is Color.R:
        return y == 0
    if color is Color.G:
        return x == y
    return x == 2 * L - y


def logical_support(lat):
    """Bottom-row data qubits: a weight-d representative of both X_L and Z_L."""
    return [q for q in lat.data_ids if lat.coords[q][1] == 0]


def dangerous_edges(lat):
    """Edge indices whose two endpoints both lie on some minimum-weight
    logical representative.

    A mid-schedule Z fault on such an edge's ancilla acts as a weight-2
    logical segment, so these edges need their flag CX strictly inside the
    data-CX window; the remaining (boundary-parallel) edges tolerate a
    trailing flag.  Exhaustive for d <= 7, conservative corner-family
    heuristic above.
    """
    if lat.d <= 7:
        reps = [frozenset(r) for r in all_weight_d_logicals(lat)]
        out = set()
        for ei, e in enumerate(lat.edges):
            pair = {e.targeter, e.finisher}
            if any(pair <= r for r in reps):
                out.add(ei)
        return out
    # d > 7: diagonal edges conservative, horizontal (pos 3, parallel to the
    # bottom boundary) exempt, matching the exhaustive pattern at d <= 7
    data = set(lat.data_ids)
    return {ei for ei, e in enumerate(lat.edges)
            if e.pos != 3 and e.targeter in data and e.finisher in data}


def all_weight_d_logicals(lat):
    """Exhaustive minimum-weight logical representatives (d <= 7 only)."""
    if lat.d > 7:
        raise ValueError("exhaustive enumeration capped at d = 7")
    n = lat.n_data
    pos = {q: i for i, q in enumerate(lat.data_ids)}
    gens = []
    for p in lat.plaquettes:
        m = 0
        for q in p.data:
            m |= 1 << pos[q]
        gens.append(m)
    base = 0
    for q in logical_support(lat):
        base |= 1 << pos[q]
    reps = []
    k = len(gens)
    masks = [base]
    for g in gens:
        masks += [m ^ g for m in masks]
    for m in masks:
        if m.bit_count() == lat.d:
            reps.append(sorted(lat.data_ids[i] for i in range(n) if (m >> i) & 1))
    return reps


def minimum_weight_logicals(lattice, color):
    """Weight-d representatives running from the given color's corner to its
    opposite boundary (the same-colored-plaquette strings)."""
    corner = lattice.site_index[_corner_sites(lattice)[color]]
    corners = {lattice.site_index[s] for s in _corner_sites(lattice).values()}
    out = []
    for rep in all_weight_d_logicals(lattice):
        if corner not in rep:
            continue
        if any(q not in corners and _on_boundary(lattice, lattice.coords[q], color)
               for q in rep):
            out.append(rep)
    return out


# ---------------------------------------------------------------------------
# graph diagnostics

def _components(adjacency):
    seen, comps = set(), []
    for s in adjacency:
        if s in seen:
            continue
        comp, stack = [], [s]
        seen.add(s)
        while stack:
            u = stack.pop()
            comp.append(u)
            for v in adjacency[u]:
                if v not in seen:
                    seen.add(v)
                    stack.append(v)
        comps.append(comp)
    return comps


def cheeger_lower_bound(adjacency):
    """Edge-expansion bound of a graph given as {vertex: iterable(neighbors)}.

    Exact (a Fraction) for <= 24 vertices by subset enumeration; for larger
    graphs the spectral bound lambda_2 / 2 is returned with exact=False.
    """
    verts = sorted(adjacency)
    nv = len(verts)
    if nv == 0:
        return Fraction(0), True
    if len(_components(adjacency)) > 1:
        return Fraction(0), True
    idx = {v: i for i, v in enumerate(verts)}
    edge_list = sorted({tuple(sorted((idx[u], idx[v])))
                        for u in adjacency for v in adjacency[u]})
    if nv <= 24:
        best = None
        masks = np.arange(1, 1 << (nv - 1), dtype=np.uint32)  # fix vertex nv-1 outside S
        sizes = np.zeros_like(masks)
        tmp = masks.copy()
        while tmp.any():
            sizes += tmp & 1
            tmp >>= 1
        cut = np.zeros_like(masks)
        for a, b in edge_list:
            cut += ((masks >> a) ^ (masks >> b)) & 1
        keep = sizes <= nv // 2
        ratios = cut[keep] / sizes[keep]
        i = int(np.argmin(ratios))
        best = Fraction(int(cut[keep][i]), int(sizes[keep][i]))
        return best, True
    # spectral fallback: h >= lambda_2 / 2
    lap = np.zeros((nv, nv))
    for a, b in edge_list:
        lap[a, a] += 1
        lap[b, b] += 1
        lap[a, b] -= 1
        lap[b, a] -= 1
    lam2 = float(np.sort(np.linalg.eigvalsh(lap))[1])
    return Fraction(lam2 / 2).limit_denominator(10**6), False


def _ancilla_graph_adjacency(lat):
    adj = {v: [] for v in lat.vertex_edges}
    for e in lat.edges:
        adj[e.targeter].append(e.finisher)
        adj[e.finisher].append(e.targeter)
    return adj


def graph_diagnostics(lattice):
    """Cheeger bound, worst in-plaquette path length, and largest basis cycle
    of the ancilla graph."""
    adj = _ancilla_graph_adjacency(lattice)
    cheeger, exact = cheeger_lower_bound(adj)

    # BFS distances between cycle-consecutive plaquette members
    def bfs(src):
        dist = {src: 0}
        frontier = [src]
        while frontier:
            nxt = []
            for u in frontier:
                for v in adj[u]:
                    if v not in dist:
                        dist[v] = dist[u] + 1
                        nxt.append(v)
            frontier = nxt
        return dist

    max_path, disconnected = 0, 0
    for p in lattice.plaquettes:
        ring = [p.corner_qubits[name] for name in HEX_ORDER]
        for q1, q2 in zip(ring, ring[1:] + ring[:1]):
            dist = bfs(q1)
            if q2 in dist:
                max_path = max(max_path, dist[q2])
            else:
                disconnected += 1

    # fundamental cycles over a spanning forest
    roots, parent = lattice.spanning_forest()
    depth, par_v = {}, {}
    for r in roots:
        depth[r] = 0
    order = sorted(parent, key=lambda v: len(_path_to_root(v, parent)))
    for v in order:
        u, _ = parent[v]
        depth[v] = depth[u] + 1
        par_v[v] = u
    tree_edges = {pe for (_, pe) in parent.values()}
    max_cycle = 0
    for ei, e in enumerate(lattice.edges):
        if ei in tree_edges:
            continue
        u, v = e.targeter, e.finisher
        length = 1
        uu, vv = u, v
        while uu != vv:
            if depth.get(uu, 0) >= depth.get(vv, 0):
                uu = par_v[uu]
            else:
                vv = par_v[vv]
            length += 1
        max_cycle = max(max_cycle, length)

    return {
        "cheeger_lower_bound": cheeger,
        "cheeger_exact": exact,
        "max_check_path_length": max_path,
        "disconnected_check_pairs": disconnected,
        "cycle_basis_max_size": max_cycle,
    }


def _path_to_root(v, parent):
    path = []
    while v in parent:
        v = parent[v][0]
        path.append(v)
    return path


# ---------------------------------------------------------------------------
# layout emission

def layout_json(lat):
    qubits = []
    for q in sorted(lat.coords):
        r, c = lat.grid_coord(q)
        plqs = [p.index for p in lat.plaquettes
                if q in p.data or q in p.caps or q == p.flag
                or q in (lat.edges[ei].ancilla for ei in p.edge_ids)]
        edge_ids = [ei for ei, e in enumerate(lat.edges)
                    if q in (e.ancilla, e.targeter, e.finisher)]
        qubits.append({"id": q, "role": lat.roles[q].value, "row": r, "col": c,
                       "plaquettes": plqs, "edges": edge_ids})
    return {
        "distance": lat.d,
        "n_qubits": lat.n_qubits,
        "qubits": qubits,
        "plaquettes": [{"index": p.index, "color": p.color.value,
                        "flag": p.flag, "data": p.data, "caps": p.caps,
                        "ancillas": [lat.edges[ei].ancilla for ei in p.edge_ids]}
                       for p in lat.plaquettes],
        "edges": [{"index": ei, "ancilla": e.ancilla, "targeter": e.targeter,
                   "finisher": e.finisher, "pos": e.pos, "color": e.color.value,
                   "plaquette": e.plaquette}
                  for ei, e in enumerate(lat.edges)],
    }


SYMBOLS = {QubitRole.DATA: "D", QubitRole.EDGE_ANCILLA: "a",
           QubitRole.FLAG: "F", QubitRole.BOUNDARY_DATA: "b"}


def layout_ascii(lat):
    rows = max(r for r, _ in map(lat.grid_coord, lat.coords)) + 1
    cols = max(c for _, c in map(lat.grid_coord, lat.coords)) + 1
    grid = [["." for _ in range(cols)] for _ in range(rows)]
    for q in lat.coords:
        r, c = lat.grid_coord(q)
        grid[r][c] = SYMBOLS[lat.roles[q]]
    # print with the origin at the bottom-left
    lines = [" ".join(grid[r]) for r in range(rows - 1, -1, -1)]
    legend = "D data, a edge ancilla, F flag, b boundary qubit"
    return "\n".join(lines + [legend])
