"""Brute-force enumeration of unrooted binary trees by leaf insertion."""

import itertools
import math


def insertions(V, prune):
    """All unrooted binary trees on leaves 0..V-1 as edge sets; optionally keep planar ones only."""
    trees = [frozenset({(0, "a"), (1, "a"), (2, "a")})]
    fresh = itertools.count()
    for leaf in range(3, V):
        nxt = []
        for edges in trees:
            for u, v in edges:
                mid = f"n{next(fresh)}"
                new = (edges - {(u, v)}) | {(u, mid), (mid, v), (leaf, mid)}
                if not prune or planar(new, leaf + 1):
                    nxt.append(new)
        trees = nxt
    return trees


def splits(edges, V):
    adj = {}
    for u, v in edges:
        adj.setdefault(u, set()).add(v)
        adj.setdefault(v, set()).add(u)
    out = set()
    for u, v in edges:
        if isinstance(u, int) or isinstance(v, int):
            continue
        seen, stack = {u}, [v]
        side = set()
        while stack:
            x = stack.pop()
            if x in seen:
                continue
            seen.add(x)
            if isinstance(x, int):
                side.add(x)
            stack.extend(adj[x] - seen)
        if 0 in side:
            side = set(range(V)) - side
        out.add(frozenset(side))
    return frozenset(out)


def _is_interval(side, V):
    s = sorted(side)
    gaps = sum(1 for a, b in zip(s, s[1:] + [s[0] + V]) if (b - a) % V != 1)
    return gaps <= 1


def planar(edges, V):
    return all(_is_interval(s, V) for s in splits(edges, V))


def double_factorial(k):
    return math.prod(range(k, 0, -2))
