"""Constructive amalgamation for chains and forests, and the bounded search
for amalgams that certifies non-amalgamation instances."""

from __future__ import annotations

from .morphisms import StructureMap, compose, enumerate_epimorphisms, is_epimorphism
from .structures import ChainForest, enumerate_chainforests


class AmalgamError(ValueError):
    """Inputs outside the amalgamation preconditions."""


def _staircase_states(vals1, vals2):
    """Walk the fiber product of two staircases over a common chain from
    (min, min) to (max, max). Advance the first walker when its next value
    stays level, else the second, else both. Values are positions in the
    common chain, so each projection moves by 0 or 1."""
    i, j, n1, n2 = 0, 0, len(vals1), len(vals2)
    states = [(0, 0)]
    while (i, j) != (n1 - 1, n2 - 1):
        assert vals1[i] == vals2[j]
        if i + 1 < n1 and vals1[i + 1] == vals2[j]:
            i += 1
        elif j + 1 < n2 and vals2[j + 1] == vals1[i]:
            j += 1
        else:
            i += 1
            j += 1
        states.append((i, j))
    return states


def amalgamate_chains(phi, psi):
    """Amalgamate two chain epimorphisms onto a common chain.

    Returns (E, theta1, theta2) with E a chain of at most |B| + |C| - 1
    elements and phi o theta1 = psi o theta2 exactly.
    """
    for f in (phi, psi):
        if f.dom.validate().kind != "chainforest" or len(f.dom.branches()) != 1:
            raise AmalgamError("amalgamate_chains needs single-chain domains")
        if not is_epimorphism(f):
            raise AmalgamError("inputs must be epimorphisms of chains")
    if phi.cod != psi.cod:
        raise AmalgamError("the two maps must share a codomain")
    if len(phi.cod.branches()) != 1:
        raise AmalgamError("codomain must be a single chain")

    a_pos = {a: k for k, a in enumerate(phi.cod.branches()[0])}
    b_ids = list(phi.dom.branches()[0])
    c_ids = list(psi.dom.branches()[0])
    states = _staircase_states([a_pos[phi(x)] for x in b_ids],
                               [a_pos[psi(x)] for x in c_ids])
    e_ids = ["e%d" % k for k in range(len(states))]
    e = ChainForest([e_ids])
    theta1 = StructureMap(e, phi.dom, {e_ids[k]: b_ids[i] for k, (i, _) in enumerate(states)})
    theta2 = StructureMap(e, psi.dom, {e_ids[k]: c_ids[j] for k, (_, j) in enumerate(states)})
    assert compose(phi, theta1) == compose(psi, theta2)
    return e, theta1, theta2


def _image_chain(f, ids):
    out = []
    for x in ids:
        v = f(x)
        if not out or out[-1] != v:
            out.append(v)
    return out


def _matching_interval(g, branches, img_set):
    """First branch of g's domain whose image covers img_set, restricted to the
    elements sitting over img_set (a contiguous run, since branch images are
    order-convex)."""
    for d in branches:
        if img_set <= {g(y) for y in d}:
            return [y for y in d if g(y) in img_set]
    raise AmalgamError("no branch of the other leg covers a branch image")


def _piece(phi, phi_ids, psi, psi_ids, img):
    pos = {a: k for k, a in enumerate(img)}
    states = _staircase_states([pos[phi(x)] for x in phi_ids],
                               [pos[psi(y)] for y in psi_ids])
    return (tuple(phi_ids[i] for i, _ in states),
            tuple(psi_ids[j] for _, j in states))


def amalgamate_forests(phi, psi):
    """Amalgamate two forest epimorphisms phi: B -> A and psi: C -> A.

    Per branch of B, pick the first branch of C whose psi-image covers the
    phi-image and amalgamate the restricted chains; symmetrically for branches
    of C. The result is the disjoint union of the pieces with duplicate pieces
    folded, a chain forest T with epimorphisms theta1: T -> B, theta2: T -> C
    and phi o theta1 = psi o theta2.
    """
    for name, f in (("phi", phi), ("psi", psi)):
        if not f.dom.validate().forest or not f.cod.validate().forest:
            raise AmalgamError("%s must connect H-forests (the Fig-style HPO "
                               "diagrams are outside the amalgamation class)" % name)
        if not is_epimorphism(f):
            raise AmalgamError("%s is not an epimorphism" % name)
    if phi.cod != psi.cod:
        raise AmalgamError("the two maps must share a codomain")

    pieces = []
    seen = set()

    def add(piece):
        if piece not in seen:
            seen.add(piece)
            pieces.append(piece)

    # one piece per branch of B, then per branch of C; the staircase always
    # advances the phi side first, so the symmetric duplicates fold away
    for cp in phi.dom.branches():
        img = _image_chain(phi, cp)
        cprime = _matching_interval(psi, psi.dom.branches(), set(img))
        add(_piece(phi, list(cp), psi, cprime, img))
    for cq in psi.dom.branches():
        img = _image_chain(psi, cq)
        bsec = _matching_interval(phi, phi.dom.branches(), set(img))
        add(_piece(phi, bsec, psi, list(cq), img))

    chains = []
    a1, a2 = {}, {}
    for k, (t1, t2) in enumerate(pieces):
        ids = ["t%de%d" % (k, j) for j in range(len(t1))]
        chains.append(ids)
        for e, v1, v2 in zip(ids, t1, t2):
            a1[e] = v1
            a2[e] = v2
    t = ChainForest(chains)
    theta1 = StructureMap(t, phi.dom, a1)
    theta2 = StructureMap(t, psi.dom, a2)
    assert is_epimorphism(theta1) and is_epimorphism(theta2)
    assert compose(phi, theta1) == compose(psi, theta2)
    return t, theta1, theta2


def joint_projection(a, b):
    """A common refinement of two forests: amalgamate over the one-point
    structure."""
    pt = ChainForest([["pt"]])
    const_a = StructureMap(a, pt, {e: "pt" for e in a.elements})
    const_b = StructureMap(b, pt, {e: "pt" for e in b.elements})
    return amalgamate_forests(const_a, const_b)


def search_amalgam(phi, psi, max_size):
    """Exhaustive search for a commuting amalgam T of at most max_size elements
    drawn from the chain-forest class, with T enumerated up to isomorphism and
    map pairs in the enumeration order. Returns (T, theta1, theta2) or None.

    The codomain may be an arbitrary HPO; the legs must be H-forests.
    """
    if phi.cod != psi.cod:
        raise AmalgamError("the two maps must share a codomain")
    for f in (phi, psi):
        if not is_epimorphism(f):
            raise AmalgamError("inputs must be epimorphisms")
        if not f.dom.validate().forest:
            raise AmalgamError("legs must be H-forests")
    for t in enumerate_chainforests(max_size):
        to_b = enumerate_epimorphisms(t, phi.dom)
        if not to_b:
            continue
        to_c = enumerate_epimorphisms(t, psi.dom)
        if not to_c:
            continue
        buckets = {}
        for g in to_c:
            buckets.setdefault(compose(psi, g).key(), []).append(g)
        for f in to_b:
            hit = buckets.get(compose(phi, f).key())
            if hit:
                assert is_epimorphism(f) and is_epimorphism(hit[0])
                return t, f, hit[0]
    return None
