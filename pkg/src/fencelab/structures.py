"""Finite Hasse partial orders, Hasse forests, and disjoint unions of chains.

Element ids are opaque strings. The cover relation is the single source of
truth: the order is its reflexive-transitive closure, the adjacency relation
its reflexive-symmetric closure. Everything is immutable after construction,
so values can be shared freely.
"""

from __future__ import annotations

import itertools
from collections import deque
from dataclasses import dataclass


class StructureError(ValueError):
    """Malformed structure data: duplicate ids, dangling covers, bad class."""


@dataclass(frozen=True)
class ValidationReport:
    partial_order: bool
    hasse_minimal: bool
    forest: bool
    chain_forest: bool
    kind: str
    problems: tuple

    @property
    def ok(self):
        return self.partial_order and self.hasse_minimal


class FiniteHPO:
    """A finite set of ids with a cover relation (a candidate Hasse diagram)."""

    def __init__(self, elements, covers):
        ids = tuple(str(e) for e in elements)
        seen = set()
        for e in ids:
            if e in seen:
                raise StructureError("duplicate element id %r" % e)
            seen.add(e)
        pairs = []
        pairset = set()
        for a, b in covers:
            a, b = str(a), str(b)
            if a not in seen or b not in seen:
                raise StructureError("cover (%r, %r) mentions an unknown id" % (a, b))
            if (a, b) not in pairset:
                pairset.add((a, b))
                pairs.append((a, b))
        self.elements = ids
        self.element_set = frozenset(ids)
        self.covers = tuple(pairs)
        self._cache = {}

    def __len__(self):
        return len(self.elements)

    def __contains__(self, e):
        return e in self.element_set

    def __eq__(self, other):
        if not isinstance(other, FiniteHPO):
            return NotImplemented
        return self.element_set == other.element_set and set(self.covers) == set(other.covers)

    def __hash__(self):
        return hash((self.element_set, frozenset(self.covers)))

    def __repr__(self):
        return "%s(%d elements, %d covers)" % (type(self).__name__, len(self.elements), len(self.covers))

    # -- derived relations, all recomputed from covers and cached --------

    def _memo(self, key, build):
        if key not in self._cache:
            self._cache[key] = build()
        return self._cache[key]

    def up(self):
        """Immediate successors, id -> sorted tuple."""
        def build():
            d = {e: [] for e in self.elements}
            for a, b in self.covers:
                d[a].append(b)
            return {e: tuple(sorted(v)) for e, v in d.items()}
        return self._memo("up", build)

    def down(self):
        def build():
            d = {e: [] for e in self.elements}
            for a, b in self.covers:
                d[b].append(a)
            return {e: tuple(sorted(v)) for e, v in d.items()}
        return self._memo("down", build)

    def r_neighbors(self):
        """Adjacency of the R-graph without the diagonal."""
        def build():
            d = {e: set() for e in self.elements}
            for a, b in self.covers:
                d[a].add(b)
                d[b].add(a)
            return {e: tuple(sorted(v)) for e, v in d.items()}
        return self._memo("r", build)

    def le_pairs(self):
        """All (a, b) with a <= b, reflexive pairs included."""
        def build():
            up = self.up()
            pairs = set()
            for a in self.elements:
                reach = {a}
                stack = [a]
                while stack:
                    x = stack.pop()
                    for y in up[x]:
                        if y not in reach:
                            reach.add(y)
                            stack.append(y)
                pairs.update((a, b) for b in reach)
            return frozenset(pairs)
        return self._memo("le", build)

    def r_pairs(self):
        """All R-related pairs, reflexive and symmetric."""
        def build():
            pairs = {(e, e) for e in self.elements}
            for a, b in self.covers:
                pairs.add((a, b))
                pairs.add((b, a))
            return frozenset(pairs)
        return self._memo("rp", build)

    def leq(self, a, b):
        return (a, b) in self.le_pairs()

    def r_related(self, a, b):
        return a == b or b in self.r_neighbors()[a]

    def interval(self, a, b):
        """[a, b] = elements c with a <= c <= b, in no particular order."""
        le = self.le_pairs()
        return frozenset(c for c in self.elements if (a, c) in le and (c, b) in le)

    # -- validation -------------------------------------------------------

    def validate(self):
        def build():
            problems = []
            po = self._strict_acyclic()
            if not po:
                problems.append("cover relation is not a strict order (directed cycle)")
            hasse = po and self._hasse_minimal(problems)
            forest = self._forest()
            if po and not forest:
                pass  # legal HPO, just not in the forest class
            cf = forest and self._chain_degrees()
            if po and hasse:
                kind = "chainforest" if cf else ("hforest" if forest else "hpo")
            else:
                kind = "invalid"
            return ValidationReport(po, hasse, forest, cf, kind, tuple(problems))
        return self._memo("report", build)

    def _strict_acyclic(self):
        up = self.up()
        state = {e: 0 for e in self.elements}  # 0 new, 1 open, 2 done
        for root in self.elements:
            if state[root]:
                continue
            stack = [(root, iter(up[root]))]
            state[root] = 1
            while stack:
                node, it = stack[-1]
                adv = next(it, None)
                if adv is None:
                    state[node] = 2
                    stack.pop()
                elif state[adv] == 1:
                    return False
                elif state[adv] == 0:
                    state[adv] = 1
                    stack.append((adv, iter(up[adv])))
        return True

    def _hasse_minimal(self, problems):
        # a cover (a, b) must not be implied by a longer cover path a -> .. -> b
        up = self.up()
        ok = True
        for a, b in self.covers:
            stack = [x for x in up[a] if x != b]
            seen = set(stack)
            while stack:
                x = stack.pop()
                if x == b:
                    problems.append("cover (%r, %r) is implied by transitivity" % (a, b))
                    ok = False
                    break
                for y in up[x]:
                    if y not in seen:
                        seen.add(y)
                        stack.append(y)
        return ok

    def _forest(self):
        parent = {e: e for e in self.elements}

        def find(x):
            while parent[x] != x:
                parent[x] = parent[parent[x]]
                x = parent[x]
            return x

        for a, b in self.covers:
            ra, rb = find(a), find(b)
            if ra == rb:
                return False
            parent[ra] = rb
        return True

    def _chain_degrees(self):
        up, down = self.up(), self.down()
        return all(len(up[e]) <= 1 and len(down[e]) <= 1 for e in self.elements)

    # -- branches ---------------------------------------------------------

    def branches(self):
        """Maximal chains, each as an id tuple, sorted lexicographically."""
        def build():
            if not self.validate().ok:
                raise StructureError("branches() requires a valid HPO")
            up, down = self.up(), self.down()
            out = []
            minimals = [e for e in self.elements if not down[e]]
            for m in sorted(minimals):
                stack = [(m,)]
                while stack:
                    path = stack.pop()
                    succ = up[path[-1]]
                    if not succ:
                        out.append(path)
                    else:
                        # reversed keeps the produced order lexicographic under pop()
                        for s in reversed(succ):
                            stack.append(path + (s,))
            return tuple(sorted(out))
        return self._memo("branches", build)

    def branch_of(self, e):
        """For chain forests: the unique branch containing e."""
        for i, b in enumerate(self.branches()):
            if e in b:
                return i, b
        raise StructureError("id %r not on any branch" % e)

    def relabel(self, mapping):
        new_elements = [mapping[e] for e in self.elements]
        new_covers = [(mapping[a], mapping[b]) for a, b in self.covers]
        return FiniteHPO(new_elements, new_covers)


class ChainForest(FiniteHPO):
    """A disjoint union of finite chains, the class of structures we generate."""

    def __init__(self, chains):
        chains = tuple(tuple(str(x) for x in c) for c in chains)
        if any(not c for c in chains):
            raise StructureError("empty chain")
        elements = [x for c in chains for x in c]
        covers = [(c[i], c[i + 1]) for c in chains for i in range(len(c) - 1)]
        super().__init__(elements, covers)
        self.chains = chains

    def relabel(self, mapping):
        return ChainForest([[mapping[x] for x in c] for c in self.chains])

    @classmethod
    def from_hpo(cls, h):
        rep = h.validate()
        if rep.kind != "chainforest":
            raise StructureError("structure is not a disjoint union of chains")
        if isinstance(h, ChainForest):
            return h
        return cls(h.branches())


def point(label="pt"):
    return ChainForest([[label]])


def chain(n, prefix="c"):
    return ChainForest([["%s%d" % (prefix, i) for i in range(n)]])


# -- module operations ----------------------------------------------------


def validate(h):
    return h.validate()


def branches(p):
    return [list(b) for b in p.branches()]


def r_distance(h, a, b):
    """Shortest path length in the R-graph; inf across components."""
    if a not in h or b not in h:
        raise StructureError("unknown id")
    if a == b:
        return 0
    adj = h.r_neighbors()
    dist = {a: 0}
    q = deque([a])
    while q:
        x = q.popleft()
        for y in adj[x]:
            if y not in dist:
                dist[y] = dist[x] + 1
                if y == b:
                    return dist[y]
                q.append(y)
    return float("inf")


def r_connected(h, subset):
    subset = set(subset)
    for e in subset:
        if e not in h:
            raise StructureError("unknown id")
    if not subset:
        return True
    adj = h.r_neighbors()
    start = next(iter(sorted(subset)))
    seen = {start}
    q = deque([start])
    while q:
        x = q.popleft()
        for y in adj[x]:
            if y in subset and y not in seen:
                seen.add(y)
                q.append(y)
    return seen == subset


def unfold_to_chainforest(p):
    """Disjoint copies of all maximal chains of p, with the covering map onto p."""
    from .morphisms import StructureMap

    if not p.validate().ok:
        raise StructureError("unfold requires a valid HPO")
    brs = p.branches()
    chains = []
    assignment = {}
    for i, b in enumerate(brs):
        copy = ["%d:%s" % (i, x) for x in b]
        chains.append(copy)
        for fresh, orig in zip(copy, b):
            assignment[fresh] = orig
    cf = ChainForest(chains)
    return cf, StructureMap(cf, p, assignment)


def dualize(p):
    """Reverse the order; R is unchanged and the operation is an involution."""
    if isinstance(p, ChainForest):
        return ChainForest([tuple(reversed(c)) for c in p.chains])
    return FiniteHPO(p.elements, [(b, a) for a, b in p.covers])


@dataclass(frozen=True)
class CanonicalSignature:
    kind: str
    value: tuple


def canonical_signature(p):
    """Isomorphism invariant: chain-length multiset for chain forests, a
    canonical rooted-tree string (minimized over roots) for other forests."""
    rep = p.validate()
    if not rep.ok or not rep.forest:
        raise StructureError("canonical_signature requires an H-forest")
    if rep.chain_forest:
        lengths = sorted(len(b) for b in p.branches())
        return CanonicalSignature("f0", tuple(lengths))
    return CanonicalSignature("forest", tuple(_forest_canon(p)))


def _forest_canon(p):
    coverset = set(p.covers)
    adj = {e: [] for e in p.elements}
    for a, b in p.covers:
        adj[a].append(b)
        adj[b].append(a)

    def encode(root, parent):
        subs = []
        for c in adj[root]:
            if c == parent:
                continue
            label = "+" if (root, c) in coverset else "-"
            subs.append(label + encode(c, root))
        return "(" + "".join(sorted(subs)) + ")"

    comps = []
    seen = set()
    for e in sorted(p.elements):
        if e in seen:
            continue
        comp = {e}
        q = deque([e])
        while q:
            x = q.popleft()
            for y in adj[x]:
                if y not in comp:
                    comp.add(y)
                    q.append(y)
        seen |= comp
        comps.append(min(encode(r, None) for r in sorted(comp)))
    return sorted(comps)


def partitions(k):
    """Partitions of k as ascending tuples, ordered by (#parts, lexicographic)."""
    out = []

    def rec(remaining, minimum, acc):
        if remaining == 0:
            out.append(tuple(acc))
            return
        for part in range(minimum, remaining + 1):
            rec(remaining - part, part, acc + [part])

    rec(k, 1, [])
    out.sort(key=lambda t: (len(t), t))
    return out


def enumerate_chainforests(max_size):
    """One representative per isomorphism class of chain forests of <= max_size
    elements, in a fixed deterministic order."""
    if max_size < 1:
        raise StructureError("max_size must be >= 1")
    for k in range(1, max_size + 1):
        for part in partitions(k):
            chains = []
            counter = itertools.count()
            for length in part:
                chains.append(["x%d" % next(counter) for _ in range(length)])
            yield ChainForest(chains)
