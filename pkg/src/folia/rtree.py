"""Metric trees modelling leaf spaces of measured foliations.

Planar trivalent expansions of a valence ``V`` vertex are in bijection with
triangulations of a ``V``-gon: leaf ``k`` is the polygon side ``(k, k+1)``,
internal vertices are triangles and internal edges are diagonals.  This
gives the Catalan count and makes Whitehead moves diagonal flips.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Optional, Sequence

import networkx as nx

ATOL = 1e-12


class TreeError(ValueError):
    pass


# ----------------------------------------------------------- metric trees --

@dataclass(frozen=True)
class MetricTree:
    """Finite metric tree with labelled infinite rays.

    ``marks`` names distinguished vertices (``"q-"``, ``"q+"``, ``"q"``).
    ``flags`` holds extra data: vertex -> ``"Z"`` for the multiplicity marker
    left by a zero-measure gluing, and ``"root_side"`` (+1 or -1) on rooted
    pole domains.
    """

    vertices: tuple
    edges: tuple                 # (u, v, length)
    rays: tuple = ()             # (vertex, label)
    marks: dict = field(default_factory=dict)
    flags: dict = field(default_factory=dict)

    def __post_init__(self):
        verts, edges, marks, alias = _contract(self.vertices, self.edges, self.marks)
        if any(v not in alias for v, _ in self.rays):
            raise TreeError("ray on an unknown vertex")
        rays = tuple((alias[v], lab) for v, lab in self.rays)
        labels = [lab for _, lab in rays]
        if len(set(labels)) != len(labels):
            raise TreeError("repeated ray label")
        object.__setattr__(self, "vertices", verts)
        object.__setattr__(self, "edges", edges)
        object.__setattr__(self, "rays", rays)
        object.__setattr__(self, "marks", marks)
        if not self.is_tree():
            raise TreeError("not a tree")

    def graph(self) -> nx.Graph:
        g = nx.Graph()
        g.add_nodes_from(self.vertices)
        for u, v, length in self.edges:
            g.add_edge(u, v, length=length)
        return g

    def is_tree(self) -> bool:
        g = self.graph()
        return len(self.edges) == len(self.vertices) - 1 and nx.is_connected(g)

    def path(self, a, b) -> list:
        return nx.shortest_path(self.graph(), a, b)

    def distance(self, a, b) -> float:
        return nx.shortest_path_length(self.graph(), a, b, weight="length")

    @property
    def total_length(self) -> float:
        return float(sum(e[2] for e in self.edges))

    def degree(self, v) -> int:
        return sum(v in (a, b) for a, b, _ in self.edges) + sum(r[0] == v for r in self.rays)

    def ray_labels(self) -> list:
        return [lab for _, lab in self.rays]

    def to_json(self) -> dict:
        return {"vertices": list(self.vertices),
                "edges": [[u, v, float(length)] for u, v, length in self.edges],
                "rays": [[v, lab] for v, lab in self.rays],
                "marks": dict(sorted(self.marks.items())),
                "flags": {str(k): v for k, v in sorted(self.flags.items())}}

    @classmethod
    def from_json(cls, data: dict) -> "MetricTree":
        return cls(tuple(data["vertices"]),
                   tuple((u, v, float(length)) for u, v, length in data["edges"]),
                   tuple((v, lab) for v, lab in data.get("rays", [])),
                   dict(data.get("marks", {})), dict(data.get("flags", {})))

    def to_dot(self, name: str = "tree") -> str:
        lines = [f"graph {name} {{"]
        inverse = {}
        for mark, v in self.marks.items():
            inverse.setdefault(v, []).append(mark)
        for v in self.vertices:
            label = ",".join(sorted(inverse.get(v, []))) or ""
            shape = "point" if not label else "circle"
            lines.append(f'  "{v}" [label="{label}", shape={shape}];')
        for u, v, length in self.edges:
            lines.append(f'  "{u}" -- "{v}" [label="{length:.6g}"];')
        for i, (v, lab) in enumerate(self.rays):
            lines.append(f'  "ray{i}" [label="{lab}", shape=plaintext];')
            lines.append(f'  "{v}" -- "ray{i}" [style=dashed];')
        lines.append("}")
        return "\n".join(lines) + "\n"


def _contract(vertices, edges, marks):
    """Merge endpoints of zero-length edges, keeping marks."""
    parent = {v: v for v in vertices}

    def root(v):
        while parent[v] != v:
            parent[v] = parent[parent[v]]
            v = parent[v]
        return v

    for u, v, length in edges:
        if u not in parent or v not in parent:
            raise TreeError(f"edge ({u}, {v}) uses an unknown vertex")
        if length < 0:
            raise TreeError("negative edge length")
        if length <= ATOL:
            ru, rv = root(u), root(v)
            if ru == rv:
                raise TreeError("not a tree")
            # keep the marked vertex as representative
            marked = set(marks.values())
            if rv in marked and ru not in marked:
                ru, rv = rv, ru
            parent[rv] = ru
    verts = tuple(v for v in vertices if root(v) == v)
    new_edges = tuple((root(u), root(v), float(length)) for u, v, length in edges if length > ATOL)
    new_marks = {m: root(v) for m, v in marks.items()}
    return verts, new_edges, new_marks, {v: root(v) for v in vertices}


# ---------------------------------------------------------- expansions --

@dataclass(frozen=True)
class ExpansionType:
    """Planar trivalent expansion of a valence ``V`` vertex.

    ``diagonals`` is the triangulation of the ``V``-gon; ``lengths`` (one per
    diagonal, in sorted order) are the internal edge lengths.
    """

    valence: int
    diagonals: tuple
    lengths: Optional[tuple] = None

    @property
    def dimension(self) -> int:
        return self.valence - 3

    def with_lengths(self, lengths: Sequence[float]) -> "ExpansionType":
        lengths = tuple(float(x) for x in lengths)
        if len(lengths) != self.dimension:
            raise TreeError(f"expected {self.dimension} lengths, got {len(lengths)}")
        if any(x < 0 for x in lengths):
            raise TreeError("negative length")
        return ExpansionType(self.valence, self.diagonals, lengths)

    def triangles(self) -> list:
        return _triangles(self.valence, self.diagonals)

    def splits(self) -> set:
        """Leaf bipartitions cut by the internal edges (as frozensets of the smaller side containing no leaf 0)."""
        out = set()
        for i, j in self.diagonals:
            side = frozenset(range(i, j))
            if 0 in side:
                side = frozenset(range(self.valence)) - side
            out.add(side)
        return out

    def leaf_attachments(self) -> dict:
        """Leaf label -> index of the triangle (internal vertex) it hangs from."""
        V = self.valence
        out = {}
        for t, tri in enumerate(self.triangles()):
            for a, b in ((tri[0], tri[1]), (tri[1], tri[2]), (tri[0], tri[2])):
                if b - a == 1:
                    out[a] = t
                elif a == 0 and b == V - 1:
                    out[V - 1] = t
        return out

    def internal_edges(self) -> list:
        """``(triangle, triangle, length)`` per diagonal, in diagonal order."""
        tris = self.triangles()
        lengths = self.lengths or (0.0,) * self.dimension
        out = []
        for (i, j), length in zip(self.diagonals, lengths):
            owners = [t for t, tri in enumerate(tris) if i in tri and j in tri]
            out.append((owners[0], owners[1], length))
        return out

    def flip(self, diagonal) -> "ExpansionType":
        """Whitehead move: replace ``diagonal`` by the other diagonal of its quadrilateral."""
        i, j = diagonal
        tris = [t for t in self.triangles() if i in t and j in t]
        if len(tris) != 2:
            raise TreeError(f"{diagonal} is not a diagonal")
        a = [v for v in tris[0] if v not in (i, j)][0]
        b = [v for v in tris[1] if v not in (i, j)][0]
        new = tuple(sorted([d for d in self.diagonals if d != (i, j)] + [tuple(sorted((a, b)))]))
        return ExpansionType(self.valence, new, None)


def _triangles(V, diagonals):
    chords = set(diagonals) | {(k, k + 1) for k in range(V - 1)} | {(0, V - 1)}
    adj = {v: set() for v in range(V)}
    for a, b in chords:
        adj[a].add(b)
        adj[b].add(a)
    tris = set()
    for a, b in chords:
        for c in adj[a] & adj[b]:
            tris.add(tuple(sorted((a, b, c))))
    return sorted(tris)


@lru_cache(maxsize=None)
def _triangulations(i: int, j: int) -> tuple:
    if j - i < 2:
        return ((),)
    out = []
    for k in range(i + 1, j):
        own = tuple(d for d in ((i, k), (k, j)) if d[1] - d[0] > 1)
        for left in _triangulations(i, k):
            for right in _triangulations(k, j):
                out.append(tuple(sorted(own + left + right)))
    return tuple(out)


def enumerate_expansions(V: int) -> list[ExpansionType]:
    """All planar trivalent expansions of a valence-``V`` vertex, canonically sorted."""
    if V < 3:
        raise TreeError("valence must be >= 3")
    return [ExpansionType(V, d) for d in sorted(set(_triangulations(0, V - 1)))]


def catalan(k: int) -> int:
    return math.comb(2 * k, k) // (k + 1)


def expansion_tree(exp: ExpansionType, leaf_ends: dict) -> tuple:
    """Vertices and edges of the expansion with leaves realised per ``leaf_ends``.

    ``leaf_ends[label]`` is either ``("ray", ray_label)`` or
    ``("edge", vertex_name, length)``.
    """
    if exp.lengths is None and exp.dimension:
        raise TreeError("expansion lengths missing")
    verts = [f"t{t}" for t in range(len(exp.triangles()))]
    edges = [(f"t{a}", f"t{b}", length) for a, b, length in exp.internal_edges()]
    rays = []
    for leaf, t in sorted(exp.leaf_attachments().items()):
        end = leaf_ends[leaf]
        if end[0] == "ray":
            rays.append((f"t{t}", end[1]))
        else:
            verts.append(end[1])
            edges.append((f"t{t}", end[1], float(end[2])))
    return tuple(verts), tuple(edges), tuple(rays)


# ------------------------------------------------------- pole leaf spaces --

POSITIVE = "positive_measure"
ZERO = "zero_measure"


@dataclass(frozen=True)
class PoleLeafSpace:
    n: int
    fundamental_domain: MetricTree
    translation_length: float
    case: str
    expansion: Optional[ExpansionType]
    free_lengths: tuple

    @property
    def strip_widths(self) -> tuple:
        """Finite edge lengths: the widths of the strips dual to them."""
        return tuple(e[2] for e in self.fundamental_domain.edges)

    @property
    def parameter_dimension(self) -> int:
        """Free lengths of the fundamental domain plus the boundary measure."""
        return len(self.free_lengths) + 1


def build_pole_leafspace(n: int, boundary_measure: float, expansion: Optional[ExpansionType] = None,
                         lengths: Sequence[float] = (), a0: float = 0.0,
                         a_last: Optional[float] = None, root_width: float = 0.0) -> PoleLeafSpace:
    """Fundamental domain of the leaf space of a pole of order ``n``.

    Positive boundary measure: the expansion of a valence-``n`` vertex whose
    leaves ``0`` and ``n-1`` become edges of lengths ``a0`` and ``a_last``
    ending at ``q-`` and ``q+``; the remaining leaves are the ``n-2`` rays.
    ``a_last`` defaults to whatever makes the ``q-``/``q+`` distance equal
    the boundary measure.

    Zero boundary measure: a rooted expansion of a valence ``n-1`` vertex,
    leaf ``0`` joined to the root ``q`` by an edge of length
    ``|root_width|``.  A negative ``root_width`` shifts the ray labels by one.
    """
    if n < 3:
        raise TreeError("pole order must be >= 3")
    if boundary_measure < 0:
        raise TreeError("negative measure")
    lengths = tuple(float(x) for x in lengths)
    if boundary_measure > 0:
        V = n
        exp = expansion or enumerate_expansions(V)[0]
        if exp.valence != V:
            raise TreeError(f"expansion valence {exp.valence} != {V}")
        exp = exp.with_lengths(lengths)
        # distance between the attachment vertices of leaves 0 and n-1
        probe_verts, probe_edges, _ = expansion_tree(
            exp, {k: ("edge", f"l{k}", 1.0) for k in range(V)})
        probe = MetricTree(probe_verts, probe_edges)
        inner = probe.distance("l0", f"l{V - 1}") - 2.0
        if a_last is None:
            a_last = boundary_measure - a0 - inner
        if a0 < 0 or a_last < -ATOL:
            raise TreeError("inconsistent lengths")
        a_last = max(a_last, 0.0)
        if a0 + a_last <= 0:
            raise TreeError("inconsistent lengths: a0 + a_last must be positive")
        if abs(a0 + a_last + inner - boundary_measure) > 1e-9 * max(1.0, boundary_measure):
            raise TreeError("inconsistent lengths: axis length differs from the boundary measure")
        ends = {0: ("edge", "q-", a0), V - 1: ("edge", "q+", a_last)}
        ends.update({k: ("ray", k - 1) for k in range(1, V - 1)})
        verts, edges, rays = expansion_tree(exp, ends)
        tree = MetricTree(verts, edges, rays, {"q-": "q-", "q+": "q+"})
        return PoleLeafSpace(n, tree, float(boundary_measure), POSITIVE, exp, lengths)

    rays_n = n - 2
    shift = 1 if root_width < 0 else 0
    if n == 3:
        # a single ray issuing from the root; no length parameters
        if lengths or root_width:
            raise TreeError("inconsistent lengths: n = 3 has no free lengths")
        tree = MetricTree(("q",), (), (("q", 0),), {"q": "q"})
        return PoleLeafSpace(n, tree, 0.0, ZERO, None, ())
    V = n - 1
    exp = (expansion or enumerate_expansions(V)[0])
    if exp.valence != V:
        raise TreeError(f"expansion valence {exp.valence} != {V}")
    exp = exp.with_lengths(lengths)
    ends = {0: ("edge", "q", abs(root_width))}
    ends.update({k: ("ray", (k - 1 + shift) % rays_n) for k in range(1, V)})
    verts, edges, rays = expansion_tree(exp, ends)
    tree = MetricTree(verts, edges, rays, {"q": "q"}, {"root_side": -1 if shift else 1})
    return PoleLeafSpace(n, tree, 0.0, ZERO, exp, lengths + (float(root_width),))


# --------------------------------------------------------------- gluing --

def glue_trees(T0: MetricTree, TU: PoleLeafSpace, prefix: str = "U", tol: float = 1e-9) -> MetricTree:
    """Attach a pole leaf space to the tree of the complementary surface.

    Positive measure: the ``q-``..``q+`` axis segment of ``T0`` is identified
    isometrically with the fundamental segment of ``TU``.  Zero measure:
    ``T0``'s mark ``q`` is identified with the root, and the vertex is
    flagged ``"Z"`` for the ``Z``-many attached copies.
    """
    U = TU.fundamental_domain

    def rename(v):
        return f"{prefix}:{v}"

    if TU.case == ZERO:
        if "q" not in T0.marks or "q" not in U.marks:
            raise TreeError("marked data missing")
        q0 = T0.marks["q"]
        vmap = {v: rename(v) for v in U.vertices}
        vmap[U.marks["q"]] = q0
        verts = tuple(T0.vertices) + tuple(vmap[v] for v in U.vertices if vmap[v] != q0)
        edges = tuple(T0.edges) + tuple((vmap[a], vmap[b], length) for a, b, length in U.edges)
        rays = tuple(T0.rays) + tuple((vmap[v], f"{prefix}:{lab}") for v, lab in U.rays)
        flags = dict(T0.flags)
        flags[q0] = "Z"
        out = MetricTree(verts, edges, rays, dict(T0.marks), flags)
        if not out.is_tree():
            raise TreeError("gluing produced a non-tree")
        return out

    if not {"q-", "q+"} <= set(T0.marks) or not {"q-", "q+"} <= set(U.marks):
        raise TreeError("marked data missing")
    tau = TU.translation_length
    p0 = T0.path(T0.marks["q-"], T0.marks["q+"])
    pU = U.path(U.marks["q-"], U.marks["q+"])
    d0 = _cumulative(T0, p0)
    dU = _cumulative(U, pU)
    if abs(d0[-1] - tau) > tol * max(1.0, tau) or abs(dU[-1] - tau) > tol * max(1.0, tau):
        raise TreeError(f"measure mismatch: axis {d0[-1]} vs translation length {tau}")
    breaks = _merge(d0 + dU, tol * max(1.0, tau))
    axis = [f"axis{k}" for k in range(len(breaks))]

    def nearest(d):
        return axis[min(range(len(breaks)), key=lambda k: abs(breaks[k] - d))]

    map0 = {v: nearest(d) for v, d in zip(p0, d0)}
    mapU = {v: nearest(d) for v, d in zip(pU, dU)}
    on0 = set(zip(p0, p0[1:])) | set(zip(p0[1:], p0))
    onU = set(zip(pU, pU[1:])) | set(zip(pU[1:], pU))

    def v0(v):
        return map0.get(v, v)

    def vU(v):
        return mapU.get(v, rename(v))

    verts = list(axis)
    verts += [v for v in T0.vertices if v not in map0]
    verts += [rename(v) for v in U.vertices if v not in mapU]
    edges = [(axis[k], axis[k + 1], breaks[k + 1] - breaks[k]) for k in range(len(axis) - 1)]
    edges += [(v0(a), v0(b), length) for a, b, length in T0.edges if (a, b) not in on0]
    edges += [(vU(a), vU(b), length) for a, b, length in U.edges if (a, b) not in onU]
    rays = [(v0(v), lab) for v, lab in T0.rays] + [(vU(v), f"{prefix}:{lab}") for v, lab in U.rays]
    marks = {m: v0(v) for m, v in T0.marks.items()}
    out = MetricTree(tuple(verts), tuple(edges), tuple(rays), marks, dict(T0.flags))
    if not out.is_tree():
        raise TreeError("gluing produced a non-tree")
    return out


def _cumulative(T: MetricTree, path) -> list:
    lengths = {}
    for a, b, length in T.edges:
        lengths[(a, b)] = lengths[(b, a)] = length
    out = [0.0]
    for a, b in zip(path, path[1:]):
        out.append(out[-1] + lengths[(a, b)])
    return out


def _merge(values, tol):
    out = []
    for v in sorted(values):
        if not out or v - out[-1] > tol:
            out.append(v)
    return out


def axis_tree(tau: float) -> MetricTree:
    """A single axis segment of length ``tau`` with marked endpoints."""
    return MetricTree(("q-", "q+"), (("q-", "q+", float(tau)),), (), {"q-": "q-", "q+": "q+"})


# ------------------------------------------------------------ dimensions --

@dataclass(frozen=True)
class MFDimension:
    chi: int
    boundary_dimension: int
    pointed_pole_dimensions: tuple
    identity_holds: bool
    note: str = ""


def surface_with_boundary_dimension(g: int, b: int) -> int:
    return 6 * g - 6 + 3 * b


def pointed_pole_dimension(n: int) -> int:
    return n - 1


def mf_dimension(g: int, pole_orders: Sequence[int]) -> MFDimension:
    """Dimension ``6g - 6 + sum(n_i + 1)`` of measured foliations with pole data.

    The consistency check: foliations of the surface with ``k`` boundary
    circles, plus pointed pole models, minus the ``k`` shared boundary
    measures, give the same count.
    """
    orders = [int(n) for n in pole_orders]
    if g < 0 or not orders or any(n < 3 for n in orders):
        raise TreeError("need g >= 0 and pole orders >= 3")
    k = len(orders)
    chi = 6 * g - 6 + sum(n + 1 for n in orders)
    bdim = surface_with_boundary_dimension(g, k)
    pdims = tuple(pointed_pole_dimension(n) for n in orders)
    ok = bdim + sum(pdims) - k == chi
    note = "" if g >= 2 else "outside stated range g >= 2"
    return MFDimension(chi, bdim, pdims, ok, note)
