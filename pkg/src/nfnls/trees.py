"""Ordered ternary trees with growth chronicles, signs, and index functions.

A tree of generation J has J internal nodes, 2J+1 terminal nodes and 3J+1
nodes total.  Trees are kept together with their chronicle (the sequence of
node ids expanded at each generation): two trees of the same shape grown in a
different order are distinct objects.  Node ids are assigned in creation
order, so expanding a node at generation j always creates children
3(j-1)+1 .. 3(j-1)+3 (left, middle, right) and ids are stable across
enumeration runs.

Signs: psgn(a) = -1 exactly for middle children (+1 for the root), and
fsgn(a) = psgn(a) * (-1)^{#middle strict ancestors of a}, the root never
counting as a middle ancestor.  A terminal node carries a conjugated factor
exactly when fsgn = -1.

An index function assigns an integer box to every node such that at every
internal node a with children a1, a2, a3:

* freq(a1) - freq(a2) + freq(a3) is within 1 of freq(a)   (convolution slack),
* |freq(a) - freq(a1)| > 1 and |freq(a) - freq(a3)| > 1   (non-resonance),

and the root tuple has interaction phase above the threshold N.  The
per-generation phases are signed by fsgn of the expanded node (the
conjugation flips the phase of everything inserted under a conjugated slot);
prefix sums mu~_j and the running products mu^_j are recorded in chronicle
order, in both the default (quartic) and the product phase conventions.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import BoxRangeError, DomainError, PreconditionError, ResourceGuardError
from .resonance import PRODUCT, QUARTIC, c_set_member, phase_value

__all__ = [
    "TreeNode",
    "OrderedTree",
    "SignTable",
    "PhaseRecord",
    "IndexAssignment",
    "enumerate_trees",
    "build_tree",
    "compute_signs",
    "dump_chronicle",
    "enumerate_index_functions",
    "sample_index_functions",
    "assignment_from_freqs",
    "double_factorial_odd",
]

J_MAX_ENUMERATION = 6


@dataclass(frozen=True)
class TreeNode:
    idx: int
    parent: int | None
    position: int  # 0 left, 1 middle, 2 right; -1 for the root
    children: tuple[int, int, int] | None
    generation_born: int


@dataclass(frozen=True)
class OrderedTree:
    nodes: tuple[TreeNode, ...]
    chronicle: tuple[int, ...]

    @property
    def J(self) -> int:
        return len(self.chronicle)

    def internal_ids(self) -> tuple[int, ...]:
        return self.chronicle

    def terminal_ids(self) -> tuple[int, ...]:
        """Terminal node ids in depth-first (left/middle/right) order."""
        out = []

        def walk(i):
            node = self.nodes[i]
            if node.children is None:
                out.append(i)
            else:
                for c in node.children:
                    walk(c)

        walk(0)
        return tuple(out)

    def size(self) -> int:
        return len(self.nodes)


def double_factorial_odd(J: int) -> int:
    """1*3*5*...*(2J-1)."""
    out = 1
    for j in range(1, J + 1):
        out *= 2 * j - 1
    return out


def _expand(nodes: list[TreeNode], chronicle: list[int], node_id: int) -> None:
    j = len(chronicle) + 1
    base = 3 * (j - 1)
    old = nodes[node_id]
    if old.children is not None:
        raise PreconditionError(f"node {node_id} is not terminal")
    kids = (base + 1, base + 2, base + 3)
    nodes[node_id] = TreeNode(old.idx, old.parent, old.position, kids, old.generation_born)
    for pos, c in enumerate(kids):
        nodes.append(TreeNode(c, node_id, pos, None, j))
    chronicle.append(node_id)


def build_tree(chronicle: Sequence[int]) -> OrderedTree:
    """Replay a chronicle into a tree; validates every expansion."""
    if len(chronicle) < 1 or chronicle[0] != 0:
        raise PreconditionError("a chronicle starts by expanding the root (id 0)")
    nodes: list[TreeNode] = [TreeNode(0, None, -1, None, 0)]
    chron: list[int] = []
    for a in chronicle:
        if not (0 <= a < len(nodes)):
            raise PreconditionError(f"chronicle names unknown node {a}")
        _expand(nodes, chron, a)
    return OrderedTree(nodes=tuple(nodes), chronicle=tuple(chron))


def enumerate_trees(J: int, j_max: int = J_MAX_ENUMERATION) -> list[OrderedTree]:
    """All chronicles of J generations: (2J-1)!! trees, stable order."""
    if J < 1:
        raise DomainError(f"need J >= 1, got {J}")
    if J > j_max:
        raise ResourceGuardError(f"J={J} exceeds the enumeration guard {j_max}")
    chronicles = [[0]]
    for _ in range(J - 1):
        grown = []
        for ch in chronicles:
            tree = build_tree(ch)
            for term in tree.terminal_ids():
                grown.append(ch + [term])
        chronicles = grown
    return [build_tree(ch) for ch in chronicles]


def dump_chronicle(tree: OrderedTree) -> str:
    """One-line debug form: chronicle node ids, parenthesized."""
    return "(" + " ".join(str(a) for a in tree.chronicle) + ")"


@dataclass(frozen=True)
class SignTable:
    psgn: tuple[int, ...]
    fsgn: tuple[int, ...]


def compute_signs(tree: OrderedTree) -> SignTable:
    """psgn by child position, fsgn by parity of middle strict ancestors."""
    n = tree.size()
    psgn = [0] * n
    fsgn = [0] * n
    middles = [0] * n  # number of middle strict ancestors

    def walk(i, mid_count):
        node = tree.nodes[i]
        psgn[i] = -1 if node.position == 1 else +1
        middles[i] = mid_count
        fsgn[i] = psgn[i] * (-1 if mid_count % 2 else +1)
        if node.children is not None:
            for c in node.children:
                walk(c, mid_count + (1 if node.position == 1 else 0))

    walk(0, 0)
    return SignTable(psgn=tuple(psgn), fsgn=tuple(fsgn))


@dataclass(frozen=True)
class PhaseRecord:
    """Signed per-generation phases with prefix sums and products.

    ``mu`` is under the default (quartic) convention, ``mu_product`` under the
    product convention 2*(n-n1)*(n-n3); both carry the fsgn sign of the node
    expanded at that generation.  ``mu_tilde``/``mu_hat`` are prefix sums and
    products of prefix sums of ``mu`` in chronicle order.
    """

    mu: tuple[int, ...]
    mu_tilde: tuple[int, ...]
    mu_hat: tuple[int, ...]
    mu_product: tuple[int, ...]
    mu_product_tilde: tuple[int, ...]

    @staticmethod
    def from_mu(mu: Sequence[int], mu_product: Sequence[int]) -> "PhaseRecord":
        mt = np.cumsum(np.asarray(mu, dtype=np.int64))
        mh = np.cumprod(mt)
        mpt = np.cumsum(np.asarray(mu_product, dtype=np.int64))
        return PhaseRecord(
            mu=tuple(int(x) for x in mu),
            mu_tilde=tuple(int(x) for x in mt),
            mu_hat=tuple(int(x) for x in mh),
            mu_product=tuple(int(x) for x in mu_product),
            mu_product_tilde=tuple(int(x) for x in mpt),
        )


@dataclass(frozen=True)
class IndexAssignment:
    tree: OrderedTree
    freq: tuple[int, ...]  # box per node id
    phases: PhaseRecord
    n_root: int

    def generation_tuples(self) -> list[tuple[int, int, int, int]]:
        """(freq(a), freq(a1), freq(a2), freq(a3)) per generation, chronicle order."""
        out = []
        for a in self.tree.chronicle:
            c1, c2, c3 = self.tree.nodes[a].children
            out.append((self.freq[a], self.freq[c1], self.freq[c2], self.freq[c3]))
        return out


def assignment_from_freqs(
    tree: OrderedTree,
    freq: Sequence[int],
    convention: str = QUARTIC,
    signs: SignTable | None = None,
) -> IndexAssignment:
    """Package a frequency map, recomputing the signed phase record."""
    signs = signs or compute_signs(tree)
    mu, mu_p = [], []
    for a in tree.chronicle:
        c1, c2, c3 = tree.nodes[a].children
        tup = (freq[a], freq[c1], freq[c2], freq[c3])
        mu.append(signs.fsgn[a] * phase_value(*tup, convention))
        mu_p.append(signs.fsgn[a] * phase_value(*tup, PRODUCT))
    return IndexAssignment(
        tree=tree,
        freq=tuple(int(f) for f in freq),
        phases=PhaseRecord.from_mu(mu, mu_p),
        n_root=int(freq[0]),
    )


def _child_choices(fa: int, window: int, child_sets):
    """Candidate (c1, c2, c3) triples under node frequency fa.

    ``child_sets`` holds one optional box set per child; None means the full
    window range.
    """
    lo, hi = -window, window

    def rng(allowed):
        if allowed is not None:
            return [b for b in allowed if lo <= b <= hi]
        return range(lo, hi + 1)

    s2 = child_sets[1]
    for c1 in rng(child_sets[0]):
        if abs(c1 - fa) <= 1:
            continue
        for c3 in rng(child_sets[2]):
            if abs(c3 - fa) <= 1:
                continue
            for c2 in (c1 + c3 - fa - 1, c1 + c3 - fa, c1 + c3 - fa + 1):
                if not (lo <= c2 <= hi):
                    continue
                if s2 is not None and c2 not in s2:
                    continue
                yield c1, c2, c3


def enumerate_index_functions(
    tree: OrderedTree,
    n_root: int,
    window: int,
    N: float,
    cJ_filter: str = "C_complement_chain",
    convention: str = QUARTIC,
    allowed_boxes=None,
    restrict_all: bool = False,
    max_count: int = 2_000_000,
) -> list[IndexAssignment]:
    """Exhaustive index functions on ``tree`` with root box ``n_root``.

    Constraints: convolution slack and non-resonance at every internal node,
    |phase| > N at the root (same membership predicate as the generation-one
    complement set), and, with the default filter, the complement chain
    |mu~_j| > (2j+1)^3 * max(|mu~_{j-1}|, |mu~_1|)^{0.99} for j = 2..J.

    ``allowed_boxes`` restricts node frequencies: a plain set applies to the
    final terminal nodes (every node if ``restrict_all``), while a dict maps
    node ids to per-node sets (missing or None entries mean the full window).
    """
    if cJ_filter not in ("C_complement_chain", "none"):
        raise DomainError(f"unknown filter {cJ_filter!r}")
    if window < 1:
        raise BoxRangeError(f"window must be >= 1, got {window}")
    if abs(n_root) > 3 * window + 1:
        raise BoxRangeError(f"root box {n_root} unreachable from window {window}")
    signs = compute_signs(tree)
    chron = tree.chronicle
    expanded = set(chron)
    nodes = tree.nodes

    if isinstance(allowed_boxes, dict):
        node_set = dict(allowed_boxes).get
    elif allowed_boxes is not None:
        allowed = set(allowed_boxes)

        def node_set(c):
            if restrict_all or c not in expanded:
                return allowed
            return None

    else:

        def node_set(c):
            return None

    out: list[IndexAssignment] = []

    freq = [0] * tree.size()
    freq[0] = n_root

    def recurse(j: int, mu: list[int], mu_p: list[int]):
        if len(out) > max_count:
            raise ResourceGuardError(
                f"index enumeration exceeded {max_count} assignments"
            )
        if j == len(chron):
            out.append(
                IndexAssignment(
                    tree=tree,
                    freq=tuple(freq),
                    phases=PhaseRecord.from_mu(mu, mu_p),
                    n_root=n_root,
                )
            )
            return
        a = chron[j]
        fa = freq[a]
        kids = nodes[a].children
        sign = signs.fsgn[a]
        child_sets = [node_set(c) for c in kids]
        for c1, c2, c3 in _child_choices(fa, window, child_sets):
            m = sign * phase_value(fa, c1, c2, c3, convention)
            if j == 0:
                if abs(m) <= N:
                    continue
            elif cJ_filter == "C_complement_chain":
                prev = sum(mu)
                if c_set_member(j, prev, prev + m, mu[0]):
                    continue
            freq[kids[0]], freq[kids[1]], freq[kids[2]] = c1, c2, c3
            recurse(j + 1, mu + [m], mu_p + [sign * phase_value(fa, c1, c2, c3, PRODUCT)])
        return

    recurse(0, [], [])
    return out


def _phase_slop_bound(fa: int, c1: int, c3: int) -> int:
    """Upper bound on |continuous product phase - integer product phase| over a cell."""
    return 2 * (abs(fa - c1) + abs(fa - c3) + 1)


def sample_index_functions(
    tree: OrderedTree,
    n_root: int,
    window: int,
    N: float,
    count: int,
    rng: np.random.Generator,
    convention: str = QUARTIC,
    min_denominator: float = 1.0,
    comparability: float = 0.0,
    max_attempts: int = 200_000,
) -> list[IndexAssignment]:
    """Random index functions with nonsingular continuous denominators.

    Generation-by-generation rejection sampling.  Beyond the index-function
    constraints, each signed product-prefix is required to clear
    ``min_denominator`` plus the accumulated bin-offset slop, so every
    continuous prefix denominator met by the kernel evaluation is at least
    ``min_denominator`` in modulus.  A nonzero ``comparability`` additionally
    demands the continuous prefixes stay at least that fraction of the integer
    ones (so integer denominator products certify the continuous kernel).
    """
    signs = compute_signs(tree)
    chron = tree.chronicle
    nodes = tree.nodes
    out: list[IndexAssignment] = []
    attempts = 0
    while len(out) < count and attempts < max_attempts:
        attempts += 1
        freq = [0] * tree.size()
        freq[0] = n_root
        mu: list[int] = []
        mu_p: list[int] = []
        slop = 0
        ok = True
        for j, a in enumerate(chron):
            fa = freq[a]
            kids = nodes[a].children
            sign = signs.fsgn[a]
            c1 = int(rng.integers(-window, window + 1))
            c3 = int(rng.integers(-window, window + 1))
            if abs(c1 - fa) <= 1 or abs(c3 - fa) <= 1:
                ok = False
                break
            delta = int(rng.integers(-1, 2))
            c2 = c1 + c3 - fa - delta
            if not (-window <= c2 <= window):
                ok = False
                break
            m = sign * phase_value(fa, c1, c2, c3, convention)
            if j == 0 and abs(m) <= N:
                ok = False
                break
            mu.append(m)
            mu_p.append(sign * phase_value(fa, c1, c2, c3, PRODUCT))
            slop += _phase_slop_bound(fa, c1, c3)
            # halved: continuous kernel denominators are prefix sums of
            # (xi-xi1)(xi-xi3), i.e. product phases over 2
            pref = abs(sum(mu_p)) / 2.0
            if pref - slop / 2.0 < max(min_denominator, comparability * pref):
                ok = False
                break
            freq[kids[0]], freq[kids[1]], freq[kids[2]] = c1, c2, c3
        if ok:
            out.append(
                IndexAssignment(
                    tree=tree,
                    freq=tuple(freq),
                    phases=PhaseRecord.from_mu(mu, mu_p),
                    n_root=n_root,
                )
            )
    if len(out) < count:
        raise ResourceGuardError(
            f"could only sample {len(out)}/{count} assignments in {max_attempts} attempts"
        )
    return out
