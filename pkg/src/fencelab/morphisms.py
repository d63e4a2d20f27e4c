"""Maps between finite structures: verification, enumeration, construction."""

from __future__ import annotations

import itertools

from .structures import ChainForest, FiniteHPO, StructureError


class MapError(ValueError):
    """Malformed map: not total, values outside the codomain, bad composition."""


class ChainMapHypothesisError(ValueError):
    """A cardinality hypothesis of the chain-map construction failed."""


class StructureMap:
    """A total function between two finite structures."""

    def __init__(self, dom, cod, assignment):
        missing = dom.element_set - set(assignment)
        if missing:
            raise MapError("assignment is not total, missing %s" % sorted(missing)[:4])
        bad = [v for k, v in assignment.items() if k in dom.element_set and v not in cod.element_set]
        if bad:
            raise MapError("values outside the codomain: %s" % sorted(set(bad))[:4])
        self.dom = dom
        self.cod = cod
        self.assignment = {e: assignment[e] for e in dom.elements}

    def __call__(self, a):
        return self.assignment[a]

    def __eq__(self, other):
        if not isinstance(other, StructureMap):
            return NotImplemented
        return (self.dom == other.dom and self.cod == other.cod
                and self.assignment == other.assignment)

    def __repr__(self):
        return "StructureMap(%d -> %d ids)" % (len(self.dom), len(self.cod))

    def image(self, subset=None):
        src = self.dom.elements if subset is None else subset
        return {self.assignment[a] for a in src}

    def fiber(self, b):
        return tuple(a for a in self.dom.elements if self.assignment[a] == b)

    def key(self):
        return tuple(self.assignment[e] for e in self.dom.elements)


def identity(h):
    return StructureMap(h, h, {e: e for e in h.elements})


def is_lr_preserving(f):
    """aRb implies f(a)Rf(b), and a<=b implies f(a)<=f(b)."""
    cod = f.cod
    for a, b in f.dom.covers:
        fa, fb = f(a), f(b)
        if not cod.r_related(fa, fb):
            return False
        if not cod.leq(fa, fb):
            return False
    return True


def is_epimorphism(f):
    """Definitional check: surjective, and each codomain relation is exactly
    the image of the domain relation."""
    if f.image() != set(f.cod.element_set):
        return False
    a = f.assignment
    r_img = {(a[x], a[y]) for x, y in f.dom.r_pairs()}
    if r_img != set(f.cod.r_pairs()):
        return False
    le_img = {(a[x], a[y]) for x, y in f.dom.le_pairs()}
    return le_img == set(f.cod.le_pairs())


def branch_epi_criterion(f):
    """Forest shortcut: L_R-preserving and every codomain branch is the exact
    image of some domain branch. Equivalent to is_epimorphism on H-forests."""
    if not (f.dom.validate().forest and f.cod.validate().forest):
        raise MapError("branch criterion applies to H-forests only")
    if not is_lr_preserving(f):
        return False
    dom_images = [frozenset(f(x) for x in b) for b in f.dom.branches()]
    return all(frozenset(b) in dom_images for b in f.cod.branches())


def compose(g, f):
    """g after f."""
    if f.cod != g.dom:
        raise MapError("compose: cod(f) != dom(g)")
    return StructureMap(f.dom, g.cod, {e: g(f(e)) for e in f.dom.elements})


def _staircases_onto(m, interval):
    """Monotone surjections from a chain of m elements onto the given id
    interval, as value tuples; C(m-1, len-1) of them, lexicographic by step
    pattern."""
    k = len(interval)
    if k > m:
        return
    for ups in itertools.combinations(range(1, m), k - 1):
        vals = []
        level = 0
        nxt = 0
        for i in range(m):
            if nxt < len(ups) and i == ups[nxt]:
                level += 1
                nxt += 1
            vals.append(interval[level])
        yield tuple(vals)


def _chain_candidates(chain_ids, cod):
    """All L_R-preserving maps of one chain into cod whose image is an interval
    of a branch, tried by (branch index, start, end); value: list of
    (value tuple, covered branch index or None), deduplicated."""
    m = len(chain_ids)
    out = {}
    for bi, branch in enumerate(cod.branches()):
        for start in range(len(branch)):
            for end in range(start, len(branch)):
                if end - start + 1 > m:
                    break
                whole = start == 0 and end == len(branch) - 1
                for vals in _staircases_onto(m, branch[start:end + 1]):
                    if vals not in out:
                        out[vals] = bi if whole else None
    return list(out.items())


def _coverage_feasible(uncovered_lengths, chain_lengths):
    # each remaining chain can exactly cover at most one branch, and only one
    # at least as long as itself
    if len(uncovered_lengths) > len(chain_lengths):
        return False
    pool = sorted(chain_lengths, reverse=True)
    for i, need in enumerate(sorted(uncovered_lengths, reverse=True)):
        if pool[i] < need:
            return False
    return True


def enumerate_epimorphisms(dom, cod):
    """All epimorphisms dom -> cod for a chain forest dom, by backtracking over
    per-chain interval assignments; deterministic order, each result verified."""
    if not isinstance(dom, ChainForest):
        dom = ChainForest.from_hpo(dom)
    if not cod.validate().ok or not cod.validate().forest:
        raise MapError("enumeration requires an H-forest codomain")
    if len(dom) < len(cod):
        return []
    chains = dom.chains
    cands = [_chain_candidates(c, cod) for c in chains]
    if any(not c for c in cands):
        return []
    n_branches = len(cod.branches())
    branch_lengths = [len(b) for b in cod.branches()]
    results = []

    def rec(i, acc, covered):
        if i == len(chains):
            if len(covered) == n_branches:
                assignment = {}
                for ids, vals in zip(chains, acc):
                    assignment.update(zip(ids, vals))
                f = StructureMap(dom, cod, assignment)
                if not is_epimorphism(f):
                    raise AssertionError("enumerated map failed verification")
                results.append(f)
            return
        uncovered = [branch_lengths[b] for b in range(n_branches) if b not in covered]
        remaining = [len(c) for c in chains[i:]]
        if not _coverage_feasible(uncovered, remaining):
            return
        for vals, whole in cands[i]:
            rec(i + 1, acc + [vals], covered | {whole} if whole is not None else covered)

    rec(0, [], frozenset())
    return results


def _distribute(src, dst):
    """Map src ids onto dst ids monotonically and surjectively, as evenly as
    possible, earliest dst elements taking the extras."""
    q, r = divmod(len(src), len(dst))
    out = {}
    pos = 0
    for j, d in enumerate(dst):
        take = q + (1 if j < r else 0)
        for s in src[pos:pos + take]:
            out[s] = d
        pos += take
    return out


def _single_chain(structure):
    rep = structure.validate()
    if rep.kind != "chainforest":
        raise MapError("expected a finite chain")
    brs = structure.branches()
    if len(brs) != 1:
        raise MapError("expected a single chain, found %d branches" % len(brs))
    return list(brs[0])


def build_chain_map(phi, psi, surjective=False, fixpoint=None):
    """Construct theta: B' -> B with phi o theta = psi for chain maps
    phi: B -> A, psi: B' -> A.

    Fibers of psi over interior values must be at least as large as the largest
    phi fiber (r). With surjective=True the endpoint fibers must allow exact
    coverage; with fixpoint=(b, b') there must be r-1 elements of the psi fiber
    on each side of b'.
    """
    if phi.cod != psi.cod:
        raise MapError("phi and psi must share a codomain")
    b_chain = _single_chain(phi.dom)
    bp_chain = _single_chain(psi.dom)
    _single_chain(phi.cod)
    if not is_lr_preserving(phi) or not is_lr_preserving(psi):
        raise MapError("phi and psi must be L_R-preserving chain maps")
    if not psi.image() <= phi.image():
        raise ChainMapHypothesisError("psi[B'] is not contained in phi[B]")

    a_order = list(phi.cod.branches()[0])
    phi_fib = {a: [x for x in b_chain if phi(x) == a] for a in a_order}
    psi_fib = {a: [x for x in bp_chain if psi(x) == a] for a in a_order}
    r = max(len(v) for v in phi_fib.values())
    image = [a for a in a_order if psi_fib[a]]
    a0, a1 = image[0], image[-1]

    for a in image[1:-1]:
        if len(psi_fib[a]) < r:
            raise ChainMapHypothesisError(
                "interior fiber over %r has %d < r = %d elements" % (a, len(psi_fib[a]), r))

    fix_a = None
    if fixpoint is not None:
        b, bp = fixpoint
        if b not in phi.dom or bp not in psi.dom:
            raise MapError("fixpoint ids must come from the two domains")
        fix_a = phi(b)
        if psi(bp) != fix_a:
            raise ChainMapHypothesisError("fixpoint pair does not sit over one element")
        below = sum(1 for c in psi_fib[fix_a] if bp_chain.index(c) < bp_chain.index(bp))
        above = len(psi_fib[fix_a]) - below - 1
        if min(below, above) < r - 1:
            raise ChainMapHypothesisError(
                "fixpoint fiber sides %d/%d below r-1 = %d" % (below, above, r - 1))

    if surjective:
        if [a for a in a_order if phi_fib[a]] != image:
            raise ChainMapHypothesisError("surjectivity requires psi[B'] = phi[B]")
        for a in (a0, a1):
            if a == fix_a:
                continue
            if len(phi_fib[a]) > 1 and len(psi_fib[a]) < r:
                raise ChainMapHypothesisError(
                    "endpoint fiber over %r has %d < r = %d elements and "
                    "phi fiber is not a singleton" % (a, len(psi_fib[a]), r))

    theta = {}
    for a in image:
        src, dst = psi_fib[a], phi_fib[a]
        if a == fix_a:
            b, bp = fixpoint
            cut_s = src.index(bp)
            cut_d = dst.index(b)
            theta.update(_distribute(src[:cut_s + 1], dst[:cut_d + 1]))
            hi = _distribute(list(reversed(src[cut_s:])), list(reversed(dst[cut_d:])))
            theta.update(hi)
            theta[bp] = b
        elif a == a0 or a == a1:
            # the constant endpoint rule keeps theta L_R-preserving without
            # any hypothesis; switch to an onto map when surjectivity needs it
            onto = surjective and (len(dst) == 1 or len(src) >= len(dst))
            if onto:
                theta.update(_distribute(src, dst))
            elif a == a0 and a != a1:
                theta.update({s: dst[-1] for s in src})
            elif a == a1 and a != a0:
                theta.update({s: dst[0] for s in src})
            else:
                theta.update({s: dst[-1] for s in src})
        else:
            theta.update(_distribute(src, dst))

    out = StructureMap(psi.dom, phi.dom, theta)
    assert is_lr_preserving(out)
    assert compose(phi, out) == psi
    if surjective and out.image() != set(phi.dom.element_set):
        raise ChainMapHypothesisError("construction did not reach surjectivity")
    return out
