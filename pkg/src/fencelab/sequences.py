"""Projective sequences of chain forests: bonds, fineness and irreducibility
certificates, the fundamental-sequence generator, extension witnesses,
endpoint flags, clopen restriction, and back-and-forth steps."""

from __future__ import annotations

import heapq
from dataclasses import dataclass

from .amalgam import amalgamate_forests
from .morphisms import (StructureMap, compose, enumerate_epimorphisms,
                        identity, is_epimorphism)
from .structures import ChainForest, enumerate_chainforests, r_connected


class SequenceError(ValueError):
    """Inconsistent levels/bonds or indices out of range."""


class ProjectiveSequence:
    """Levels in the chain-forest class plus verified bonding epimorphisms;
    bonds[n] maps levels[n+1] onto levels[n]."""

    def __init__(self, levels, bonds, log=(), verify=True):
        levels = tuple(levels)
        bonds = tuple(bonds)
        if len(bonds) != max(len(levels) - 1, 0):
            raise SequenceError("need exactly one bond per adjacent level pair")
        for n, b in enumerate(bonds):
            if b.dom != levels[n + 1] or b.cod != levels[n]:
                raise SequenceError("bond %d does not connect levels %d -> %d" % (n, n + 1, n))
            if verify and not is_epimorphism(b):
                raise SequenceError("bond %d failed the epimorphism check" % n)
        self.levels = levels
        self.bonds = bonds
        self.log = tuple(log)
        self._composed = {}

    def __len__(self):
        return len(self.levels)

    @property
    def depth(self):
        return len(self.levels) - 1

    def bond(self, n, m):
        """The composed epimorphism levels[m] -> levels[n]."""
        if not (0 <= n <= m < len(self.levels)):
            raise SequenceError("bond indices out of range: %d, %d" % (n, m))
        if n == m:
            return identity(self.levels[n])
        key = (n, m)
        if key not in self._composed:
            self._composed[key] = compose(self.bond(n, m - 1), self.bonds[m - 1])
        return self._composed[key]

    def fiber(self, n, m, a):
        f = self.bond(n, m)
        return tuple(x for x in self.levels[m].elements if f(x) == a)


def bond(seq, n, m):
    return seq.bond(n, m)


def distance2_pairs(level):
    """Unordered pairs at R-distance exactly 2: the (i, i+2) pairs inside each
    chain of a chain forest."""
    out = []
    for c in level.branches():
        for i in range(len(c) - 2):
            out.append((c[i], c[i + 2]))
    return out


@dataclass(frozen=True)
class FinenessCertificate:
    up_to: int
    entries: tuple  # ((n, a, b, witness_m_or_None), ...)

    @property
    def resolved(self):
        return all(e[3] is not None for e in self.entries)

    def witness(self, n, a, b):
        for en, ea, eb, m in self.entries:
            if (en, ea, eb) in ((n, a, b), (n, b, a)):
                return m
        raise KeyError((n, a, b))


@dataclass(frozen=True)
class IrreducibilityCertificate:
    up_to: int
    entries: tuple  # ((n, a, (m, b)_or_None), ...)

    @property
    def resolved(self):
        return all(e[2] is not None for e in self.entries)

    def witness(self, n, a):
        for en, ea, w in self.entries:
            if (en, ea) == (n, a):
                return w
        raise KeyError((n, a))


def _separated(level, fiber_a, fiber_b):
    """Every pair across the two fibers is at R-distance >= 3."""
    adj = level.r_neighbors()
    frontier = set(fiber_a)
    reach = set(frontier)
    for _ in range(2):
        nxt = set()
        for x in frontier:
            nxt.update(adj[x])
        frontier = nxt - reach
        reach |= frontier
    return not (reach & set(fiber_b))


def fineness_check(seq, check_up_to):
    """Least witness level per R-distance-2 pair: all preimage pairs at the
    witness level sit at R-distance >= 3."""
    if check_up_to >= len(seq):
        raise SequenceError("check_up_to beyond the last level")
    entries = []
    for n in range(check_up_to + 1):
        for a, b in distance2_pairs(seq.levels[n]):
            found = None
            for m in range(n + 1, len(seq)):
                if _separated(seq.levels[m], seq.fiber(n, m, a), seq.fiber(n, m, b)):
                    found = m
                    break
            entries.append((n, a, b, found))
    return FinenessCertificate(check_up_to, tuple(entries))


def fineness_witness_ok(seq, n, a, b, m):
    return _separated(seq.levels[m], seq.fiber(n, m, a), seq.fiber(n, m, b))


def irreducibility_check(seq, check_up_to):
    """Least witness (m, b) per (n, a): the closed R-neighborhood of b maps to
    a under the composed bond."""
    if check_up_to >= len(seq):
        raise SequenceError("check_up_to beyond the last level")
    entries = []
    for n in range(check_up_to + 1):
        for a in seq.levels[n].elements:
            found = None
            for m in range(n + 1, len(seq)):
                g = seq.bond(n, m)
                adj = seq.levels[m].r_neighbors()
                for b in seq.levels[m].elements:
                    if g(b) == a and all(g(x) == a for x in adj[b]):
                        found = (m, b)
                        break
                if found:
                    break
            entries.append((n, a, found))
    return IrreducibilityCertificate(check_up_to, tuple(entries))


def irreducibility_witness_ok(seq, n, a, m, b):
    g = seq.bond(n, m)
    return g(b) == a and all(g(x) == a for x in seq.levels[m].r_neighbors()[b])


# -- endpoint flags, clopen sets, restriction -------------------------------


def classify_endpoints(seq, n, at):
    """Finite-stage stability flags: a at level `at` is n-max-stable when the
    top of its branch already maps to the same level-n element; dually min."""
    if not (0 <= n <= at < len(seq)):
        raise SequenceError("indices out of range")
    g = seq.bond(n, at)
    flags = {}
    for b in seq.levels[at].branches():
        top, bot = g(b[-1]), g(b[0])
        for a in b:
            flags[a] = {"min_stable": g(a) == bot, "max_stable": g(a) == top}
    return flags


@dataclass(frozen=True)
class ClopenSet:
    level: int
    branch_indices: tuple

    def union_ids(self, seq):
        brs = seq.levels[self.level].branches()
        out = set()
        for i in self.branch_indices:
            out.update(brs[i])
        return out


def clopen_preimage(seq, c, m):
    """Branches of levels[m] whose bond image lies inside the clopen union;
    the preimage of a branch union is again a branch union."""
    if not (c.level <= m < len(seq)):
        raise SequenceError("target level out of range")
    target = c.union_ids(seq)
    g = seq.bond(c.level, m)
    picked = []
    for i, b in enumerate(seq.levels[m].branches()):
        img = {g(x) for x in b}
        if img <= target:
            picked.append(i)
        elif img & target:
            raise AssertionError("branch image straddles a clopen set")
    return ClopenSet(m, tuple(picked))


def restrict_to_clopen(seq, c):
    """The tail sequence of branch unions over a clopen set, with restricted
    bonds (all verified epimorphisms)."""
    if not c.branch_indices:
        raise SequenceError("empty clopen set")
    levels = []
    for m in range(c.level, len(seq)):
        pm = clopen_preimage(seq, c, m)
        brs = seq.levels[m].branches()
        levels.append(ChainForest([brs[i] for i in pm.branch_indices]))
    bonds = []
    for k in range(len(levels) - 1):
        src = levels[k + 1]
        g = seq.bond(c.level + k, c.level + k + 1)
        bonds.append(StructureMap(src, levels[k], {e: g(e) for e in src.elements}))
    return ProjectiveSequence(levels, bonds)


# -- witness search ----------------------------------------------------------


def _runs(vals):
    out = []
    for v in vals:
        if out and out[-1][0] == v:
            out[-1][1] += 1
        else:
            out.append([v, 1])
    return [(v, ln) for v, ln in out]


def _qbranch_profile(qb, theta):
    """Value runs of theta along a q-branch: [(value, fiber ids)], in order."""
    prof = []
    for e in qb:
        v = theta(e)
        if prof and prof[-1][0] == v:
            prof[-1][1].append(e)
        else:
            prof.append([v, [e]])
    return [(v, tuple(f)) for v, f in prof]


def _run_path(fiber, length, enter_bottom, exit_top):
    """A monotone walk of `length` steps through a fiber interval, entering at
    the bottom and/or leaving from the top as required; None if impossible."""
    k = len(fiber)
    if enter_bottom and exit_top:
        if length < k:
            return None
        return [fiber[0]] * (length - k + 1) + list(fiber[1:])
    if enter_bottom:
        return [fiber[0]] * length
    if exit_top:
        start = max(k - length, 0)
        climb = k - 1 - start
        return [fiber[start]] * (length - climb) + list(fiber[start + 1:])
    return [fiber[-1]] * length


def _canonical_lift(gvals, profile, covering):
    """Deterministic lift of a value staircase through one q-branch profile,
    either covering the branch exactly or merely commuting; None when no lift
    exists (complete as an existence test)."""
    runs = _runs(gvals)
    values = [v for v, _ in runs]
    pvals = [v for v, _ in profile]
    if covering:
        if values != pvals:
            return None
    else:
        try:
            start = pvals.index(values[0])
        except ValueError:
            return None
        if pvals[start:start + len(values)] != values:
            return None
        profile = profile[start:start + len(values)]
    out = []
    last = len(runs) - 1
    for idx, (v, ln) in enumerate(runs):
        fiber = profile[idx][1]
        enter = covering or idx > 0
        leave = covering or idx < last
        path = _run_path(fiber, ln, enter, leave)
        if path is None:
            return None
        out.extend(path)
    return tuple(out)


def _constrained_lifts(branch_ids, gvals, qb, theta, allowed, forced):
    """All lifts of one branch through one q-branch under per-element
    constraints, walked element by element."""
    succ = {}
    for i, e in enumerate(qb):
        succ[e] = qb[i + 1] if i + 1 < len(qb) else None
    by_value = {}
    for e in qb:
        by_value.setdefault(theta(e), []).append(e)
    n = len(branch_ids)

    def ok(x, e):
        if x in forced and forced[x] != e:
            return False
        if x in allowed and e not in allowed[x]:
            return False
        return True

    def rec(i, prev, acc):
        if i == n:
            yield tuple(acc)
            return
        x = branch_ids[i]
        v = gvals[i]
        if prev is None:
            options = by_value.get(v, ())
        else:
            options = [e for e in (prev, succ[prev]) if e is not None and theta(e) == v]
        for e in options:
            if ok(x, e):
                acc.append(e)
                yield from rec(i + 1, e, acc)
                acc.pop()

    yield from rec(0, None, [])


def _witness_at_level(level, gamma, q, theta, allowed=None, forced=None, unions=()):
    """psi: level -> q with theta o psi = gamma, every q-branch exactly covered,
    optional per-element constraints and exact-union constraints; None when no
    such map exists. Complete: unconstrained branches use canonical lifts that
    exist iff any lift does, constrained branches are enumerated in full."""
    allowed = allowed or {}
    forced = forced or {}
    q_branches = q.branches()
    profiles = [_qbranch_profile(qb, theta) for qb in q_branches]

    per_chain = []
    for b in level.branches():
        gvals = [gamma(x) for x in b]
        constrained = any(x in allowed or x in forced for x in b)
        cands = {}
        if constrained:
            for qb in q_branches:
                for vals in _constrained_lifts(b, gvals, qb, theta, allowed, forced):
                    if vals not in cands:
                        cands[vals] = frozenset(qb) if set(vals) == set(qb) else None
        else:
            for qb, prof in zip(q_branches, profiles):
                cover = _canonical_lift(gvals, prof, covering=True)
                if cover is not None and cover not in cands:
                    cands[cover] = frozenset(qb)
                plain = _canonical_lift(gvals, prof, covering=False)
                if plain is not None and plain not in cands:
                    cands[plain] = frozenset(qb) if set(plain) == set(qb) else None
        if not cands:
            return None
        per_chain.append((b, list(cands.items())))

    need = {frozenset(qb) for qb in q_branches}

    def rec(i, covered, images):
        if i == len(per_chain):
            if not need <= covered:
                return None
            for members, target in unions:
                got = set()
                lookup = dict()
                for bb, vals in images:
                    lookup.update(zip(bb, vals))
                for x in members:
                    got.add(lookup[x])
                if got != set(target):
                    return None
            return list(images)
        if len(need - covered) > len(per_chain) - i:
            return None
        b, cands = per_chain[i]
        for vals, whole in cands:
            images.append((b, vals))
            out = rec(i + 1, covered | {whole} if whole else covered, images)
            if out is not None:
                return out
            images.pop()
        return None

    picked = rec(0, frozenset(), [])
    if picked is None:
        return None
    assignment = {}
    for b, vals in picked:
        assignment.update(zip(b, vals))
    psi = StructureMap(level, q, assignment)
    if not is_epimorphism(psi):
        return None
    return psi


def extension_witness(seq, n, q, theta, search_to):
    """Least m <= search_to admitting psi: levels[m] -> q with
    theta o psi = bond(n, m); None when absent in range."""
    if theta.cod != seq.levels[n]:
        raise SequenceError("theta must land on levels[n]")
    if not is_epimorphism(theta):
        raise SequenceError("theta must be an epimorphism onto levels[n]")
    if not (n <= search_to < len(seq)):
        raise SequenceError("search range out of bounds")
    for m in range(n, search_to + 1):
        psi = _witness_at_level(seq.levels[m], seq.bond(n, m), q, theta)
        if psi is not None:
            assert compose(theta, psi) == seq.bond(n, m)
            return m, psi
    return None


def back_and_forth_step(seq, n, p, phi, branch_targets=(), fix_points=(), search_to=None):
    """Constrained extension step: find m and psi: levels[m] -> p with
    phi o psi = bond(n, m), psi[bond-preimage of J] = I exactly for every
    (I, J) in branch_targets, and psi(thread[m]) = y for every (y, thread) in
    fix_points. J is a set of level-n ids, I an R-connected subset of p with
    phi[I] = J; threads give the constrained element per candidate level."""
    if search_to is None:
        search_to = len(seq) - 1
    if phi.cod != seq.levels[n]:
        raise SequenceError("phi must land on levels[n]")
    if not is_epimorphism(phi):
        raise SequenceError("phi must be an epimorphism onto levels[n]")
    targets = []
    for i_set, j_set in branch_targets:
        i_frozen, j_frozen = frozenset(i_set), frozenset(j_set)
        if not r_connected(p, i_frozen):
            raise SequenceError("target subset is not R-connected")
        if {phi(x) for x in i_frozen} != set(j_frozen):
            raise SequenceError("phi image of a target does not match its source trace")
        if len(j_frozen) == 1 and len(i_frozen) > 1:
            raise SequenceError("singleton sources need singleton targets")
        targets.append((i_frozen, j_frozen))

    for m in range(n, search_to + 1):
        gamma = seq.bond(n, m)
        allowed = {}
        unions = []
        feasible = True
        for i_frozen, j_frozen in targets:
            members = tuple(x for x in seq.levels[m].elements if gamma(x) in j_frozen)
            if not members:
                feasible = False
                break
            for x in members:
                allowed[x] = allowed.get(x, i_frozen) & i_frozen
            unions.append((members, i_frozen))
        if not feasible:
            continue
        forced = {}
        for y, thread in fix_points:
            xm = thread.get(m) if hasattr(thread, "get") else thread(m)
            if xm is None or xm not in seq.levels[m].element_set:
                feasible = False
                break
            forced[xm] = y
        if not feasible:
            continue
        psi = _witness_at_level(seq.levels[m], gamma, p, phi, allowed, forced, tuple(unions))
        if psi is not None:
            assert compose(phi, psi) == gamma
            return m, psi
    return None


# -- the fundamental-sequence generator --------------------------------------


def _subdivision_task(level):
    """Every element blown up to a two-element chain; certifies fineness for
    all R-distance-2 pairs of this level at the discharge level."""
    chains, assignment = [], {}
    for c in level.branches():
        ids = []
        for x in c:
            for k in (0, 1):
                e = "%s.%d" % (x, k)
                ids.append(e)
                assignment[e] = x
        chains.append(ids)
    q = ChainForest(chains)
    return q, StructureMap(q, level, assignment)


def _witness_chains_task(level):
    """Identity copy of the level plus, per comparable pair a <= a', a fresh
    chain whose ends sit doubly over a and a': the diagonal chains certify
    irreducibility, the strict ones give branches with interior endpoints."""
    chains = [list(c) for c in level.branches()]
    assignment = {e: e for e in level.elements}
    for c in level.branches():
        for a in c:
            ids = ["i.%s.%d" % (a, k) for k in range(3)]
            chains.append(ids)
            assignment.update({e: a for e in ids})
        for i in range(len(c)):
            for j in range(i + 1, len(c)):
                a, b = c[i], c[j]
                mids = list(c[i + 1:j])
                ids = ["a.%s.%s.%d" % (a, b, k) for k in range(4 + len(mids))]
                vals = [a, a] + mids + [b, b]
                chains.append(ids)
                assignment.update(zip(ids, vals))
    q = ChainForest(chains)
    return q, StructureMap(q, level, assignment)


def generate_fundamental(depth, task_bounds):
    """Grow a projective sequence from a point by discharging one task per new
    level through amalgamation with the current top bond.

    Tasks come in three kinds, dovetailed round-robin: EXTENSION tasks
    enumerate every chain forest up to task_bounds["max_structure_size"] with
    every epimorphism onto a past level, ordered by (size, level, enumeration
    index); FINENESS tasks subdivide a past level (all distance-2 pairs of all
    levels up to it get separation witnesses at the discharge level);
    IRREDUCIBILITY tasks attach per-pair witness chains (diagonal three-chains
    and doubled-end arcs). Fineness/irreducibility tasks are kept per level up
    to task_bounds.get("cert_horizon", 4) and discharged newest-first, the
    older ones being subsumed. Deterministic: identical bounds give an
    identical sequence.
    """
    if depth < 1:
        raise SequenceError("depth must be >= 1")
    max_q = task_bounds["max_structure_size"]
    horizon = task_bounds.get("cert_horizon", 4)
    q_classes = list(enumerate_chainforests(max_q))

    levels = [ChainForest([["0:0"]])]
    bonds = []
    log = []
    e_heap = []
    f_pending = set()
    ia_pending = set()

    def composed_to_top(n):
        top = len(levels) - 1
        f = identity(levels[top])
        for k in range(top, n, -1):
            f = compose(bonds[k - 1], f)
        return f

    def on_level_created(n):
        lvl = levels[n]
        if len(lvl) <= max_q:
            for ci, qc in enumerate(q_classes):
                if len(qc) < len(lvl):
                    continue
                for ei, theta in enumerate(enumerate_epimorphisms(qc, lvl)):
                    heapq.heappush(e_heap, (len(qc), n, ci, ei, qc, theta))
        else:
            log.append({"level": n, "kind": "extension-enumeration-deferred",
                        "reason": "level size %d exceeds bound %d" % (len(lvl), max_q)})
        if n <= horizon:
            if distance2_pairs(lvl):
                f_pending.add(n)
            ia_pending.add(n)

    on_level_created(0)
    rotation = ("extension", "fineness", "irreducibility")
    ptr = 0

    for new_index in range(1, depth + 1):
        task = None
        for probe in range(3):
            kind = rotation[(ptr + probe) % 3]
            if kind == "extension" and e_heap:
                _, n, ci, ei, qc, theta = heapq.heappop(e_heap)
                task = (kind, n, qc, theta, {"class_index": ci, "epi_index": ei})
            elif kind == "fineness" and f_pending:
                n = max(f_pending)
                subsumed = sorted(k for k in f_pending if k < n)
                f_pending.clear()
                qc, theta = _subdivision_task(levels[n])
                task = (kind, n, qc, theta, {"subsumes_levels": subsumed})
            elif kind == "irreducibility" and ia_pending:
                n = max(ia_pending)
                subsumed = sorted(k for k in ia_pending if k < n)
                ia_pending.clear()
                qc, theta = _witness_chains_task(levels[n])
                task = (kind, n, qc, theta, {"subsumes_levels": subsumed})
            if task is not None:
                ptr = (ptr + probe + 1) % 3
                break
        if task is None:
            # nothing queued anywhere: repeat the top level through an identity task
            top = len(levels) - 1
            task = ("extension", top, levels[top], identity(levels[top]), {"idle": True})
            ptr = (ptr + 1) % 3

        kind, n, qc, theta, meta = task
        gamma = composed_to_top(n)
        t, th1, th2 = amalgamate_forests(theta, gamma)
        mapping = {}
        counter = 0
        for c in t.chains:
            for e in c:
                mapping[e] = "%d:%d" % (new_index, counter)
                counter += 1
        new_level = t.relabel(mapping)
        psi = StructureMap(new_level, qc, {mapping[e]: th1(e) for e in t.elements})
        bond_map = StructureMap(new_level, levels[-1], {mapping[e]: th2(e) for e in t.elements})
        levels.append(new_level)
        bonds.append(bond_map)
        record = {"level": new_index, "kind": kind, "n": n,
                  "task_structure": qc.to_obj(), "theta": dict(theta.assignment),
                  "psi": dict(psi.assignment)}
        record.update(meta)
        log.append(record)
        on_level_created(new_index)

    seq = ProjectiveSequence(levels, bonds, log)
    for record in seq.log:
        if "theta" in record and not record.get("idle"):
            pass  # replayed in the test suite
    return seq, list(log)
