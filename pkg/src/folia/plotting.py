"""Deterministic SVG figures for trajectories, skeletons, trees and fields."""

from __future__ import annotations

from pathlib import Path

import matplotlib
import networkx as nx
import numpy as np
from matplotlib.figure import Figure
from matplotlib.patches import Polygon
from mpl_toolkits.axes_grid1.anchored_artists import AnchoredSizeBar

SVG_RC = {
    "svg.hashsalt": "folia",
    "svg.fonttype": "path",
    "font.size": 9,
    "axes.linewidth": 0.8,
    "lines.linewidth": 1.1,
    "legend.frameon": False,
}

PALETTE = ("#1f4e79", "#c0504d", "#4f8a3c", "#8064a2", "#d98c1f", "#3a9fb0")


def save_svg(fig: Figure, path) -> Path:
    path = Path(path)
    with matplotlib.rc_context(SVG_RC):
        fig.savefig(path, format="svg", metadata={"Date": None, "Creator": None})
    return path


def _figure(w=5.0, h=5.0) -> Figure:
    with matplotlib.rc_context(SVG_RC):
        return Figure(figsize=(w, h))


def _scale_bar(ax, span: float):
    # largest 1/2/5 x 10^k not exceeding a fifth of the view
    target = span / 5
    k = np.floor(np.log10(target))
    size = max(m * 10**k for m in (1, 2, 5) if m * 10**k <= target)
    bar = AnchoredSizeBar(ax.transData, size, f"{size:g}", "lower right",
                          pad=0.4, frameon=False, size_vertical=span / 400)
    ax.add_artist(bar)


def _clip(points: np.ndarray, box: float) -> np.ndarray:
    """Keep the part of a polyline before it leaves the box for good."""
    pts = np.asarray(points, dtype=complex)
    inside = np.abs(pts) <= box
    if not inside.any():
        return pts[:0]
    last = int(np.nonzero(inside)[0][-1])
    return pts[: min(last + 2, pts.size)]


def _view(points) -> float:
    pts = [complex(p) for p in points if not isinstance(p, str)]
    r = max([abs(p) for p in pts] + [1.0])
    return 2.2 * r


def _marks(ax, zeros, poles):
    zs = [complex(z) for z in zeros if not isinstance(z, str)]
    if zs:
        ax.plot([z.real for z in zs], [z.imag for z in zs], "o", color="k", ms=4, label="zeros")
    ps = [complex(p) for p, _ in poles if not isinstance(p, str)]
    if ps:
        ax.plot([p.real for p in ps], [p.imag for p in ps], "x", color=PALETTE[1], ms=6, label="poles")


def _finish_plane(ax, R, title):
    ax.set_xlim(-R, R)
    ax.set_ylim(-R, R)
    ax.set_aspect("equal")
    ax.set_xlabel("Re z")
    ax.set_ylabel("Im z")
    ax.set_title(title)
    _scale_bar(ax, 2 * R)
    ax.legend(loc="upper left", fontsize=7)


def plot_trajectory(traj, q, path, title="trajectory") -> Path:
    fig = _figure()
    ax = fig.add_subplot()
    R = _view([p.location for p in q.zeros] + [p.location for p in q.poles] + [traj.points[0]])
    pts = _clip(traj.points, 50 * R)
    ax.plot(pts.real, pts.imag, color=PALETTE[0], label=f"{traj.kind} ({traj.termination.kind})")
    ax.plot([pts[0].real], [pts[0].imag], "s", color=PALETTE[2], ms=4, label="start")
    _marks(ax, [p.location for p in q.zeros], [(p.location, p.order) for p in q.poles])
    _finish_plane(ax, R, title)
    return save_svg(fig, path)


def plot_skeleton(skeleton, path, title="horizontal foliation") -> Path:
    """Separatrices, shaded half-planes and strip transversals."""
    fig = _figure()
    ax = fig.add_subplot()
    R = _view(list(skeleton.zeros) + [p for p, _ in skeleton.poles])
    box = 50 * R
    seps = {tuple(t.origin): t for t in skeleton.separatrices if t.origin}
    for j, hp in enumerate(skeleton.half_planes):
        a, b = (seps.get((hp.zero, k)) for k in hp.prongs)
        if a is None or b is None:
            continue
        pa, pb = _clip(a.points, box), _clip(b.points, box)
        ring = np.concatenate([pa[::-1], pb])
        poly = Polygon(np.c_[ring.real, ring.imag], closed=True, alpha=0.18, lw=0,
                       color=PALETTE[(j % 4) + 2], label="half-planes" if j == 0 else None)
        ax.add_patch(poly)
    for j, t in enumerate(skeleton.separatrices):
        pts = _clip(t.points, box)
        ax.plot(pts.real, pts.imag, color=PALETTE[0], lw=0.9, label="separatrices" if j == 0 else None)
    for j, s in enumerate(skeleton.strips):
        arc = np.asarray(s.transverse_arc, dtype=complex)
        ax.plot(arc.real, arc.imag, "--", color=PALETTE[1], lw=1.0,
                label="strip transversals" if j == 0 else None)
    _marks(ax, skeleton.zeros, skeleton.poles)
    _finish_plane(ax, R, f"{title}: {len(skeleton.strips)} strips, {len(skeleton.half_planes)} half-planes")
    return save_svg(fig, path)


def plot_tree(tree, path, title="metric tree") -> Path:
    G = nx.Graph()
    G.add_nodes_from(tree.vertices)
    for u, v, length in tree.edges:
        G.add_edge(u, v, length=length)
    ray_nodes = []
    for k, (v, label) in enumerate(tree.rays):
        r = f"ray:{label}"
        G.add_edge(v, r, length=1.0)
        ray_nodes.append(r)
    if G.number_of_nodes() == 1:
        pos = {n: np.zeros(2) for n in G.nodes}
    else:
        pos = nx.kamada_kawai_layout(G, weight=None)
    fig = _figure(5.0, 4.0)
    ax = fig.add_subplot()
    finite = [(u, v) for u, v, _ in tree.edges]
    nx.draw_networkx_edges(G, pos, edgelist=finite, ax=ax, edge_color=PALETTE[0])
    nx.draw_networkx_edges(G, pos, edgelist=[(v, f"ray:{lab}") for v, lab in tree.rays], ax=ax,
                           style="dashed", edge_color=PALETTE[1], arrows=False)
    names = {}
    for mark, v in sorted(tree.marks.items()):
        names[v] = f"{names[v]}={mark}" if v in names else mark
    marked = list(names)
    nx.draw_networkx_nodes(G, pos, nodelist=list(tree.vertices), ax=ax, node_size=25, node_color="k")
    nx.draw_networkx_nodes(G, pos, nodelist=marked, ax=ax, node_size=60, node_color=PALETTE[2])
    nx.draw_networkx_labels(G, pos, labels=names, ax=ax, font_size=7)
    nx.draw_networkx_labels(G, pos, labels={r: r.split(":")[1] for r in ray_nodes}, ax=ax,
                            font_size=7, font_color=PALETTE[1])
    nx.draw_networkx_edge_labels(G, pos, edge_labels={(u, v): f"{w:.3g}" for u, v, w in tree.edges},
                                 ax=ax, font_size=6)
    ax.set_title(title)
    ax.set_axis_off()
    return save_svg(fig, path)


def plot_field(field_, path, title="harmonic field") -> Path:
    g = field_.grid
    fig = _figure(5.5, 3.6)
    ax = fig.add_subplot()
    im = ax.imshow(field_.values.T, origin="lower", aspect="auto", cmap="RdBu_r",
                   extent=(0.0, g.length, 0.0, 2 * np.pi), interpolation="nearest")
    fig.colorbar(im, ax=ax, label="h")
    ax.set_xlabel("x")
    ax.set_ylabel("theta")
    ax.set_title(f"{title} ({field_.mode})")
    return save_svg(fig, path)


def plot_decay(rows, path, slope=None) -> Path:
    L = np.array([r.L for r in rows])
    fig = _figure(4.5, 3.4)
    ax = fig.add_subplot()
    ax.semilogy(L, [r.midline_max for r in rows], "o-", color=PALETTE[0], label="midline sup |h|")
    ax.semilogy(L, [r.dtheta_max for r in rows], "s--", color=PALETTE[2], label="midline sup |dh/dtheta|")
    M = rows[0].midline_max / rows[0].ratio
    ax.semilogy(L, M * np.exp(-L / 2), ":", color="k", label="M exp(-L/2)")
    ax.set_xlabel("L")
    ax.set_title("midline decay" + (f", slope {slope:.3f}" if slope is not None else ""))
    ax.legend(fontsize=7)
    return save_svg(fig, path)


def plot_exhaustion(rows, path) -> Path:
    i = np.array([r.i for r in rows], dtype=float)
    fig = _figure(4.5, 3.4)
    ax = fig.add_subplot()
    ax.loglog(i, [r.boundary_max for r in rows], "o-", color=PALETTE[1], label="fixed boundary max")
    ax.loglog(i, [r.free_sup for r in rows], "s-", color=PALETTE[0], label="free boundary sup")
    ax.set_xlabel("i")
    ax.set_title("exhaustion")
    ax.legend(fontsize=7)
    return save_svg(fig, path)


def plot_periods(before, after, path) -> Path:
    fig = _figure(4.5, 3.6)
    ax = fig.add_subplot()
    b = np.array([p.period for p in before])
    a = np.array([p.period for p in after])
    ax.plot(b.real, b.imag, "o", color=PALETTE[0], label="periods")
    ax.plot(a.real, a.imag, "^", color=PALETTE[1], label="sheared")
    for x, y in zip(b, a):
        ax.annotate("", (y.real, y.imag), (x.real, x.imag),
                    arrowprops={"arrowstyle": "->", "color": "0.5", "lw": 0.8})
    ax.axhline(0.0, color="0.7", lw=0.6)
    ax.set_xlabel("Re")
    ax.set_ylabel("Im")
    ax.set_title("strip periods under shear")
    ax.legend(fontsize=7)
    return save_svg(fig, path)
