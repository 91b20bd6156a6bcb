"""Open honeycomb clusters with Kitaev bond labels.

Sites live on a brick-wall grid: chain ``r`` (a horizontal zigzag) and
column ``c``.  Hexagon ``j`` of hexagon-row ``k`` spans columns
``c0 .. c0 + 2`` of chains ``k`` and ``k + 1`` with ``c0 = 2 j + (k % 2)``,
so alternate rows are shifted by half a hexagon.  Bond types follow the
pointy-top picture: vertical bonds are ``z``, a horizontal grid edge
``(r, c)-(r, c+1)`` is ``x`` when ``r + c`` is odd and ``y`` otherwise.

Sites are numbered row-major over ``(r, c)``.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from functools import cached_property
from itertools import combinations

from .pauli import PauliString, commutes

__all__ = [
    "Bond",
    "Plaquette",
    "Triple",
    "HoneycombLattice",
    "LatticeError",
    "build_lattice",
    "build_t_junction",
    "enumerate_triples",
    "assign_correction_qubits",
]

BOND_TYPES = ("x", "y", "z")
# middle-site Pauli for each unordered pair of adjacent bond types
_MIDDLE = {("x", "y"): "z", ("x", "z"): "y", ("y", "z"): "x"}
# corner labels of a hexagon in cyclic order: lower-left, upper-left, top,
# upper-right, lower-right, bottom
CORNERS = ("lower-left", "upper-left", "top", "upper-right", "lower-right", "bottom")


class LatticeError(ValueError):
    pass


@dataclass(frozen=True)
class Bond:
    j: int
    k: int
    kind: str


@dataclass(frozen=True)
class Plaquette:
    sites: tuple[int, ...]
    labels: tuple[str, ...]


@dataclass(frozen=True)
class Triple:
    """Adjacent bonds ``(i, j)`` of type ``a`` and ``(j, k)`` of type ``b`` with ``a < b``."""
    i: int
    j: int
    k: int
    a: str
    b: str

    @property
    def middle(self) -> str:
        return _MIDDLE[(self.a, self.b)]


@dataclass(frozen=True, eq=False)
class HoneycombLattice:
    n_sites: int
    bonds: tuple[Bond, ...]
    plaquettes: tuple[Plaquette, ...]
    boundary_terms: tuple[tuple[int, str], ...]
    triples: tuple[Triple, ...]
    positions: tuple[tuple[float, float], ...] = ()
    grid: tuple[tuple[int, int], ...] = ()
    shape: tuple[int, int] | None = None
    name: str = ""
    _corrections: dict = field(default_factory=dict, repr=False)

    # operators --------------------------------------------------------
    def bond_pauli(self, b: Bond, kind: str | None = None) -> PauliString:
        lab = (kind or b.kind).upper()
        return PauliString.from_factors(self.n_sites, {b.j: lab, b.k: lab})

    def plaquette_operator(self, p: Plaquette | int) -> PauliString:
        if isinstance(p, int):
            p = self.plaquettes[p]
        return PauliString.from_factors(self.n_sites, {s: l.upper() for s, l in zip(p.sites, p.labels)})

    def triple_pauli(self, t: Triple) -> PauliString:
        return PauliString.from_factors(
            self.n_sites, {t.i: t.a.upper(), t.j: t.middle.upper(), t.k: t.b.upper()})

    def boundary_pauli(self, site: int, kind: str) -> PauliString:
        return PauliString.single(self.n_sites, site, kind.upper())

    def bonds_of(self, kind: str) -> list[Bond]:
        return [b for b in self.bonds if b.kind == kind]

    def neighbors(self, site: int) -> dict[str, int]:
        out = {}
        for b in self.bonds:
            if b.j == site:
                out[b.kind] = b.k
            elif b.k == site:
                out[b.kind] = b.j
        return out

    def degree(self, site: int) -> int:
        return len(self.neighbors(site))

    @cached_property
    def correction_qubits(self) -> dict[int, tuple[int, str]]:
        return assign_correction_qubits(self)

    # edge geometry ----------------------------------------------------
    @cached_property
    def boundary_walk(self) -> tuple[int, ...]:
        """Outer boundary cycle, counterclockwise from the lowest-leftmost site."""
        if not self.plaquettes:
            return tuple(range(self.n_sites))
        count: dict[frozenset, int] = {}
        for p in self.plaquettes:
            cyc = p.sites
            for a, b in zip(cyc, cyc[1:] + cyc[:1]):
                key = frozenset((a, b))
                count[key] = count.get(key, 0) + 1
        adj: dict[int, list[int]] = {}
        for key, c in count.items():
            if c == 1:
                a, b = tuple(key)
                adj.setdefault(a, []).append(b)
                adj.setdefault(b, []).append(a)
        pos = self.positions
        start = min(adj, key=lambda s: (round(pos[s][1], 9), round(pos[s][0], 9), s))
        nxt = max(adj[start], key=lambda s: pos[s][0])
        walk = [start]
        prev, cur = start, nxt
        while cur != start:
            walk.append(cur)
            options = [s for s in adj[cur] if s != prev]
            prev, cur = cur, options[0]
        return tuple(walk)

    def right_of(self, site: int, steps: int = 1) -> int:
        """Site ``steps`` positions counterclockwise along the boundary."""
        w = self.boundary_walk
        return w[(w.index(site) + steps) % len(w)]

    def left_of(self, site: int, steps: int = 1) -> int:
        w = self.boundary_walk
        return w[(w.index(site) - steps) % len(w)]

    def bottom_center(self) -> int:
        """Lowest boundary site closest to the horizontal middle of the cluster."""
        pos = self.positions
        ymin = min(p[1] for p in pos)
        xs = [p[0] for p in pos]
        xmid = 0.5 * (min(xs) + max(xs))
        cands = [s for s in range(self.n_sites) if abs(pos[s][1] - ymin) < 1e-9]
        return min(cands, key=lambda s: (round(abs(pos[s][0] - xmid), 9), s))

    def edge_sites(self, center: int | None = None, distance: int = 2) -> dict[str, int]:
        c = self.bottom_center() if center is None else center
        return {"C": c, "L": self.left_of(c, distance), "R": self.right_of(c, distance)}

    # dumps ------------------------------------------------------------
    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "shape": list(self.shape) if self.shape else None,
            "n_sites": self.n_sites,
            "positions": [list(p) for p in self.positions],
            "bonds": [[b.j, b.k, b.kind] for b in self.bonds],
            "plaquettes": [{"sites": list(p.sites), "labels": list(p.labels)} for p in self.plaquettes],
            "boundary_terms": [[s, a] for s, a in self.boundary_terms],
            "triples": [[t.i, t.j, t.k, t.a, t.b] for t in self.triples],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=1)

    @classmethod
    def from_dict(cls, d: dict) -> HoneycombLattice:
        return cls(
            n_sites=d["n_sites"],
            bonds=tuple(Bond(j, k, t) for j, k, t in d["bonds"]),
            plaquettes=tuple(Plaquette(tuple(p["sites"]), tuple(p["labels"])) for p in d["plaquettes"]),
            boundary_terms=tuple((s, a) for s, a in d["boundary_terms"]),
            triples=tuple(Triple(*t) for t in d["triples"]),
            positions=tuple(tuple(p) for p in d.get("positions", [])),
            shape=tuple(d["shape"]) if d.get("shape") else None,
            name=d.get("name", ""),
        )

    def to_text(self) -> str:
        lines = [f"# {self.name or 'lattice'}: {self.n_sites} sites, {len(self.bonds)} bonds"]
        for s in range(self.n_sites):
            nb = self.neighbors(s)
            parts = " ".join(f"{k}:{nb[k]}" for k in BOND_TYPES if k in nb)
            lines.append(f"{s} {parts}")
        return "\n".join(lines) + "\n"


def _site_position(r: int, c: int) -> tuple[float, float]:
    return (c * math.sqrt(3) / 2.0, 1.5 * r + (0.5 if (r + c) % 2 == 0 else 0.0))


def _bond_kind(a: tuple[int, int], b: tuple[int, int]) -> str:
    (r1, c1), (r2, c2) = sorted((a, b))
    if c1 == c2:
        return "z"
    return "x" if (r1 + c1) % 2 == 1 else "y"


def _triples_of(n_sites: int, bonds: tuple[Bond, ...]) -> tuple[Triple, ...]:
    nbrs: dict[int, dict[str, int]] = {s: {} for s in range(n_sites)}
    for b in bonds:
        nbrs[b.j][b.kind] = b.k
        nbrs[b.k][b.kind] = b.j
    out = []
    for j in range(n_sites):
        for a, b in combinations(sorted(nbrs[j]), 2):
            out.append(Triple(nbrs[j][a], j, nbrs[j][b], a, b))
    return tuple(out)


def build_lattice(rows: int, cols: int) -> HoneycombLattice:
    """Cluster of ``rows x cols`` hexagons; ``build_lattice(2, 3)`` is the 22-site cluster."""
    if rows < 1 or cols < 1:
        raise LatticeError("rows and cols must both be >= 1")
    hexes = []
    for k in range(rows):
        for j in range(cols):
            c0 = 2 * j + (k % 2)
            lower = [(k, c0), (k, c0 + 1), (k, c0 + 2)]
            upper = [(k + 1, c0), (k + 1, c0 + 1), (k + 1, c0 + 2)]
            # lower-left, upper-left, top, upper-right, lower-right, bottom
            hexes.append([lower[0], upper[0], upper[1], upper[2], lower[2], lower[1]])
    cells = sorted({v for h in hexes for v in h})
    index = {v: i for i, v in enumerate(cells)}
    edges = set()
    for h in hexes:
        for a, b in zip(h, h[1:] + h[:1]):
            edges.add(tuple(sorted((index[a], index[b]))))
    bonds = tuple(Bond(j, k, _bond_kind(cells[j], cells[k])) for j, k in sorted(edges))
    kinds: dict[int, dict[int, str]] = {s: {} for s in range(len(cells))}
    for b in bonds:
        kinds[b.j][b.k] = b.kind
        kinds[b.k][b.j] = b.kind
    plaqs = []
    for h in hexes:
        ids = [index[v] for v in h]
        labels = []
        for t, s in enumerate(ids):
            inside = {kinds[s][ids[t - 1]], kinds[s][ids[(t + 1) % 6]]}
            (outer,) = set(BOND_TYPES) - inside
            labels.append(outer)
        plaqs.append(Plaquette(tuple(ids), tuple(labels)))
    boundary = []
    for s in range(len(cells)):
        missing = [a for a in BOND_TYPES if a not in kinds[s].values()]
        if len(missing) == 1:
            boundary.append((s, missing[0]))
        elif missing:
            raise LatticeError(f"site {s} has degree {3 - len(missing)}")
    return HoneycombLattice(
        n_sites=len(cells),
        bonds=bonds,
        plaquettes=tuple(plaqs),
        boundary_terms=tuple(boundary),
        triples=_triples_of(len(cells), bonds),
        positions=tuple(_site_position(r, c) for r, c in cells),
        grid=tuple(cells),
        shape=(rows, cols),
        name=f"honeycomb {rows}x{cols}",
    )


def build_t_junction() -> HoneycombLattice:
    """Centre site 0 bonded to 1 (x), 2 (y) and 3 (z); no boundary fields."""
    bonds = (Bond(0, 1, "x"), Bond(0, 2, "y"), Bond(0, 3, "z"))
    h = math.sqrt(3) / 2.0
    return HoneycombLattice(
        n_sites=4,
        bonds=bonds,
        plaquettes=(),
        boundary_terms=(),
        triples=_triples_of(4, bonds),
        positions=((0.0, 0.0), (h, 0.5), (-h, 0.5), (0.0, -1.0)),
        name="t-junction",
    )


def enumerate_triples(lat: HoneycombLattice) -> list[PauliString]:
    """Three-body operators, one per pair of adjacent bonds."""
    return [lat.triple_pauli(t) for t in lat.triples]


def assign_correction_qubits(lat: HoneycombLattice) -> dict[int, tuple[int, str]]:
    """Pick for every plaquette a boundary site owned by no other plaquette.

    The correction Pauli is Z wherever it anticommutes with the plaquette
    factor (so the qubit can start in |0>), otherwise X (start in |+>).
    Sites whose correction is Z are preferred; ties go to the lowest index.
    """
    owners: dict[int, list[int]] = {}
    for pi, p in enumerate(lat.plaquettes):
        for s in p.sites:
            owners.setdefault(s, []).append(pi)
    boundary = {s for s, _ in lat.boundary_terms}
    out = {}
    for pi, p in enumerate(lat.plaquettes):
        wp = lat.plaquette_operator(p)
        cands = []
        for s, lab in zip(p.sites, p.labels):
            if s not in boundary or owners[s] != [pi]:
                continue
            corr = "Z" if lab.upper() != "Z" else "X"
            cands.append((corr != "Z", s, corr))
        if not cands:
            raise LatticeError(f"plaquette {pi} has no exclusive boundary site for a correction qubit")
        _, site, corr = min(cands)
        pc = PauliString.single(lat.n_sites, site, corr)
        assert not commutes(pc, wp)
        out[pi] = (site, corr)
    return out
