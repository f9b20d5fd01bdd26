"""Graded quadtrees/octrees and variable-coefficient FVM assembly.

Leaves are keyed by ``(level, i, j[, k])`` with integer coordinates at
that level; the root grid is level 0 and children double coordinates.
Every mutation preserves the 2:1 grading (edge/face-adjacent leaves
differ by at most one level) by cascading refinement onto coarser
neighbors before splitting a cell.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .errors import (
    CellNotLeaf,
    InvalidDimension,
    MalformedFile,
    NonPositiveSigma,
    UngradedTree,
)
from .ordering import VertexOrdering
from .system import SpdMSystem, assemble

JUMP_FACTOR = 2.0 / 3.0  # common factor of fine/coarse couplings at unit sigma


class AdaptiveTree:
    """Mutable graded tree over a box of root cells.

    Parameters
    ----------
    root_extents : tuple of int
        Root cells per axis (level 0).
    cell_size : float
        Edge length of a root cell; a level-l leaf has length
        ``cell_size / 2**l``.
    """

    def __init__(self, root_extents, cell_size: float = 1.0):
        self.root_extents = tuple(int(e) for e in root_extents)
        self.d = len(self.root_extents)
        if self.d not in (2, 3):
            raise InvalidDimension(f"tree dimension must be 2 or 3, got {self.d}")
        if any(e < 1 for e in self.root_extents):
            raise InvalidDimension("root extents must be at least 1")
        self.cell_size = float(cell_size)
        self._leaves = set()
        for idx in np.ndindex(*self.root_extents):
            self._leaves.add((0, *(int(x) for x in idx)))
        self._sorted_cache = None

    def copy(self) -> "AdaptiveTree":
        dup = AdaptiveTree.__new__(AdaptiveTree)
        dup.root_extents = self.root_extents
        dup.d = self.d
        dup.cell_size = self.cell_size
        dup._leaves = set(self._leaves)
        dup._sorted_cache = None
        return dup

    # -- queries ---------------------------------------------------------

    def is_leaf(self, cell) -> bool:
        return cell in self._leaves

    def leaves(self):
        """Leaves in canonical (level, coords) order; cached until mutation."""
        if self._sorted_cache is None:
            self._sorted_cache = sorted(self._leaves)
        return self._sorted_cache

    @property
    def n_leaves(self) -> int:
        return len(self._leaves)

    @property
    def max_level(self) -> int:
        return max(c[0] for c in self._leaves)

    def cell_length(self, cell) -> float:
        return self.cell_size / (1 << cell[0])

    def cell_center(self, cell):
        ell = self.cell_length(cell)
        return tuple((c + 0.5) * ell for c in cell[1:])

    def in_bounds(self, cell) -> bool:
        level = cell[0]
        return all(
            0 <= c < (e << level) for c, e in zip(cell[1:], self.root_extents)
        )

    def children(self, cell):
        level = cell[0]
        out = []
        for bits in np.ndindex(*(2,) * self.d):
            out.append(
                (level + 1, *(2 * c + int(b) for c, b in zip(cell[1:], bits)))
            )
        return out

    @staticmethod
    def parent(cell):
        return (cell[0] - 1, *(c >> 1 for c in cell[1:]))

    # -- mutation ---------------------------------------------------------

    def refine(self, cell) -> "AdaptiveTree":
        """Split a leaf into 2^d children, cascading to keep grading."""
        if cell not in self._leaves:
            raise CellNotLeaf(f"cell {cell} is not a leaf", cell=cell)
        level = cell[0]
        for axis in range(self.d):
            for sign in (-1, 1):
                nb = list(cell)
                nb[1 + axis] += sign
                nb = tuple(nb)
                if not self.in_bounds(nb):
                    continue
                if nb in self._leaves:
                    continue
                if level > 0:
                    coarse = self.parent(nb)
                    if coarse in self._leaves:
                        self.refine(coarse)
        self._leaves.remove(cell)
        self._leaves.update(self.children(cell))
        self._sorted_cache = None
        return self

    def uniform_refine(self) -> "AdaptiveTree":
        """Replace every leaf by its children; grading is preserved."""
        new_leaves = set()
        for cell in self._leaves:
            new_leaves.update(self.children(cell))
        self._leaves = new_leaves
        self._sorted_cache = None
        return self

    # -- topology ----------------------------------------------------------

    def neighbors(self, cell):
        """Edge/face-adjacent leaves of a leaf.

        Returns a list of ``(neighbor, relation, (axis, sign))`` with
        relation in {"same_level", "finer", "coarser"}.  A coarse cell
        sees 2^(d-1) finer neighbors per refined side.
        """
        if cell not in self._leaves:
            raise CellNotLeaf(f"cell {cell} is not a leaf", cell=cell)
        level = cell[0]
        out = []
        for axis in range(self.d):
            for sign in (-1, 1):
                same = list(cell)
                same[1 + axis] += sign
                same = tuple(same)
                if not self.in_bounds(same):
                    continue
                if same in self._leaves:
                    out.append((same, "same_level", (axis, sign)))
                    continue
                if level > 0:
                    coarse = self.parent(same)
                    if coarse in self._leaves:
                        out.append((coarse, "coarser", (axis, sign)))
                        continue
                fine = self._fine_face_neighbors(same, axis, sign)
                if fine is None:
                    raise UngradedTree(
                        f"no leaf covers the {('x','y','z')[axis]}{sign:+d} side of {cell}",
                        cell=cell,
                    )
                out.extend((f, "finer", (axis, sign)) for f in fine)
        return out

    def _fine_face_neighbors(self, same_level_cell, axis, sign):
        level = same_level_cell[0]
        base = [2 * c for c in same_level_cell[1:]]
        if sign < 0:
            base[axis] += 1  # touching face is the high side of the finer cells
        cells = []
        free_axes = [a for a in range(self.d) if a != axis]
        for bits in np.ndindex(*(2,) * len(free_axes)):
            coords = list(base)
            for a, b in zip(free_axes, bits):
                coords[a] += int(b)
            key = (level + 1, *coords)
            if key not in self._leaves:
                return None
            cells.append(key)
        return cells

    def boundary_face_count(self, cell) -> int:
        """Number of cell faces lying on the domain boundary."""
        count = 0
        for axis in range(self.d):
            for sign in (-1, 1):
                nb = list(cell)
                nb[1 + axis] += sign
                if not self.in_bounds(tuple(nb)):
                    count += 1
        return count

    def check_grading(self) -> bool:
        """True when all adjacent leaves differ by at most one level."""
        try:
            for cell in self._leaves:
                self.neighbors(cell)
        except UngradedTree:
            return False
        return True

    # -- serialization -------------------------------------------------------

    def to_json(self, path) -> None:
        rows = []
        for cell in self.leaves():
            level = cell[0]
            path_bits = []
            for t in range(1, level + 1):
                rank = 0
                for a in range(self.d):
                    rank |= ((cell[1 + a] >> (level - t)) & 1) << a
                path_bits.append(rank)
            rows.append({"path": path_bits, "level": level, "anchor": list(cell[1:])})
        obj = {
            "d": self.d,
            "root_extents": list(self.root_extents),
            "cell_size": self.cell_size,
            "leaves": rows,
        }
        with open(path, "w", encoding="ascii", newline="\n") as f:
            json.dump(obj, f)
            f.write("\n")

    @classmethod
    def from_json(cls, path) -> "AdaptiveTree":
        with open(path, "r", encoding="ascii") as f:
            obj = json.load(f)
        try:
            tree = cls.__new__(cls)
            tree.root_extents = tuple(int(e) for e in obj["root_extents"])
            tree.d = int(obj["d"])
            tree.cell_size = float(obj["cell_size"])
            leaves = set()
            for row in obj["leaves"]:
                level = int(row["level"])
                anchor = tuple(int(x) for x in row["anchor"])
                if len(anchor) != tree.d or len(row["path"]) != level:
                    raise MalformedFile("leaf record inconsistent", record=row)
                leaves.add((level, *anchor))
            tree._leaves = leaves
            tree._sorted_cache = None
        except (KeyError, TypeError, ValueError) as exc:
            raise MalformedFile(f"bad tree file: {exc}", path=str(path)) from exc
        return tree


# -- construction helpers ----------------------------------------------------------

def build_root(extents, cell_size: float = 1.0) -> AdaptiveTree:
    """Tree whose leaves are exactly the level-0 root cells."""
    return AdaptiveTree(extents, cell_size)


def refine(tree: AdaptiveTree, cell) -> AdaptiveTree:
    return tree.refine(cell)


def uniform_refine(tree: AdaptiveTree) -> AdaptiveTree:
    return tree.uniform_refine()


def random_tree(extents, max_depth: int, refine_probability: float, seed: int,
                cell_size: float = 1.0) -> AdaptiveTree:
    """Seeded random refinement, one breadth-first pass per level.

    Each leaf below ``max_depth`` is refined independently with the
    given probability; grading cascades may refine additional cells.
    Deterministic for a fixed seed.
    """
    if not 0.0 <= refine_probability <= 1.0:
        raise InvalidDimension(
            f"probability must be in [0, 1], got {refine_probability}"
        )
    tree = AdaptiveTree(extents, cell_size)
    rng = np.random.default_rng(seed)
    for level in range(max_depth):
        snapshot = [c for c in tree.leaves() if c[0] == level]
        draws = rng.random(len(snapshot))
        for cell, u in zip(snapshot, draws):
            if u < refine_probability and tree.is_leaf(cell):
                tree.refine(cell)
    return tree


def smallest_cell(tree: AdaptiveTree) -> float:
    """Edge length of the smallest leaf."""
    return tree.cell_size / (1 << tree.max_level)


# -- ordering -----------------------------------------------------------------------

def tree_order(tree: AdaptiveTree) -> VertexOrdering:
    """Hierarchical order: children occupy their parent's rank interval.

    Root cells are ranked by last-axis-major lexicographic order of
    their coordinates; siblings by the same rule on child indices.  Two
    leaves compare at the first level where their ancestors differ, so
    the order does not depend on the refinement history.
    """
    ext = tree.root_extents

    def key(cell):
        level = cell[0]
        root = tuple(c >> level for c in cell[1:])
        root_rank = 0
        for a in reversed(range(tree.d)):
            root_rank = root_rank * ext[a] + root[a]
        ranks = [root_rank]
        for t in range(1, level + 1):
            r = 0
            for a in range(tree.d):
                r |= ((cell[1 + a] >> (level - t)) & 1) << a
            ranks.append(r)
        return tuple(ranks)

    leaves = tree.leaves()
    order = sorted(range(len(leaves)), key=lambda i: key(leaves[i]))
    return VertexOrdering.from_perm(np.asarray(order, dtype=np.int64))


# -- coefficient fields ----------------------------------------------------------------

@dataclass(frozen=True)
class ScalarField:
    """Named strictly positive coefficient function of position."""

    name: str
    fn: Callable[..., float]

    def __call__(self, *x) -> float:
        return self.fn(*x)


def sigma_field(name: str) -> ScalarField:
    """Built-in coefficient registry: one, example1, example2.

    The example fields are planar; in 3D they ignore the z coordinate.
    """
    if name == "one":
        return ScalarField("one", lambda *x: 1.0)
    if name == "example1":
        return ScalarField(
            "example1",
            lambda x, y, *rest: math.sin(math.pi * x) * math.cos(2 * math.pi * y) + 1.5,
        )
    if name == "example2":
        return ScalarField(
            "example2",
            lambda x, y, *rest: math.exp(3.0 - 2.0 * x) * y * (3.0 - 3.0 * y) + 0.5,
        )
    raise MalformedFile(f"unknown coefficient field {name!r}", name=name)


# -- FVM assembly -----------------------------------------------------------------------

def fvm_matrix(tree: AdaptiveTree, sigma) -> SpdMSystem:
    """Variable-coefficient finite-volume operator on a graded tree.

    Couplings between same-level neighbors use the harmonic mean
    2/(1/s1 + 1/s2); across a level jump the finer cell C1 couples with
    3a/(1/s(C1) + 2/s(C2)), a = 2/3.  In 3D both weights carry a factor
    of the finer cell length.  Boundary faces contribute 2*sigma (times
    the cell length in 3D) per face to the slack.
    """
    if callable(sigma) and not isinstance(sigma, ScalarField):
        sigma = ScalarField(getattr(sigma, "__name__", "custom"), sigma)
    leaves = tree.leaves()
    index = {cell: i for i, cell in enumerate(leaves)}
    n = len(leaves)
    three_d = tree.d == 3

    sig = np.empty(n)
    for i, cell in enumerate(leaves):
        val = sigma(*tree.cell_center(cell))
        if not val > 0:
            raise NonPositiveSigma(
                f"sigma = {val} at center of {cell}", cell=cell
            )
        sig[i] = val

    edges = []
    slack = np.zeros(n)
    for i, cell in enumerate(leaves):
        nbs = tree.neighbors(cell)  # raises UngradedTree on violations
        for nb, relation, _direction in nbs:
            j = index[nb]
            if relation == "same_level":
                if i < j:
                    c = 2.0 / (1.0 / sig[i] + 1.0 / sig[j])
                    if three_d:
                        c *= tree.cell_length(cell)
                    edges.append((i, j, c))
            elif relation == "coarser":
                # current cell is the finer one; record the jump edge here
                c = 3.0 * JUMP_FACTOR / (1.0 / sig[i] + 2.0 / sig[j])
                if three_d:
                    c *= tree.cell_length(cell)
                edges.append((i, j, c))
            # "finer" edges are recorded from the fine side
        b_faces = tree.boundary_face_count(cell)
        if b_faces:
            s = 2.0 * b_faces * sig[i]
            if three_d:
                s *= tree.cell_length(cell)
            slack[i] = s
    return assemble(edges, slack)
