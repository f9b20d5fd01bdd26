"""Uniform-grid matrix builders: cut-cell Poisson and wide-stencil schemes.

Two families are assembled here.  The cut-cell builder places vertices
at grid nodes strictly inside an implicit domain and folds boundary
intersections into the diagonal slack.  The wide-stencil builders
(ifd11, ifd22, hifd22) combine an outer coefficient row with an inner
five-point smoothing vector on rectangles; ghost values outside the
rectangle are eliminated into the slack so the result stays in the
M-matrix class.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass
from fractions import Fraction
from typing import Callable

import numpy as np

from .errors import (
    DegenerateCut,
    EmptyDomain,
    GridTooSmall,
    InvalidDimension,
    MalformedFile,
    NoSignChange,
    NotAnMMatrix,
)
from .system import assemble

GRAZE_EPS = 1e-8
BISECT_REL_TOL = 1e-12


# -- implicit domains ----------------------------------------------------------

@dataclass(frozen=True)
class Domain:
    """Implicit domain: phi < 0 inside, phi >= 0 outside."""

    name: str
    phi: Callable[..., float]

    @property
    def is_box(self) -> bool:
        return self.name == "box"


def box_domain(lengths) -> Domain:
    lengths = tuple(float(x) for x in lengths)

    def phi(*x):
        return max(max(-xi, xi - li) for xi, li in zip(x, lengths))

    return Domain("box", phi)


def disk_domain(cx: float, cy: float, r: float) -> Domain:
    def phi(x, y):
        return (x - cx) ** 2 + (y - cy) ** 2 - r * r

    return Domain(f"disk({cx},{cy},{r})", phi)


def sphere_domain(cx: float, cy: float, cz: float, r: float) -> Domain:
    def phi(x, y, z):
        return (x - cx) ** 2 + (y - cy) ** 2 + (z - cz) ** 2 - r * r

    return Domain(f"sphere({cx},{cy},{cz},{r})", phi)


_DOMAIN_RE = re.compile(r"^(\w+)\(([^)]*)\)$")


def domain_from_name(name: str, d: int, lengths=None) -> Domain:
    """Resolve a registry name like ``box`` or ``disk(0.5,0.5,0.3)``."""
    name = name.strip()
    if name == "box":
        return box_domain(lengths if lengths is not None else (1.0,) * d)
    m = _DOMAIN_RE.match(name)
    if m is None:
        raise MalformedFile(f"unknown domain {name!r}", name=name)
    kind, arglist = m.group(1), m.group(2)
    try:
        args = [float(t) for t in arglist.split(",")] if arglist.strip() else []
    except ValueError as exc:
        raise MalformedFile(f"bad domain arguments in {name!r}") from exc
    if kind == "disk" and len(args) == 3:
        return disk_domain(*args)
    if kind == "sphere" and len(args) == 4:
        return sphere_domain(*args)
    raise MalformedFile(f"unknown domain {name!r}", name=name)


@dataclass(frozen=True)
class UniformGridSpec:
    """Lattice description: node counts per axis, spacing, and domain.

    Node coordinates are ``origin + index * h``; ``extents`` counts all
    lattice nodes per axis including those on or outside the boundary.
    """

    extents: tuple
    h: float
    domain: Domain

    @property
    def d(self) -> int:
        return len(self.extents)

    def node(self, idx):
        return tuple(i * self.h for i in idx)


def unit_box_spec(d: int, h: Fraction | float) -> UniformGridSpec:
    """Unit square/cube lattice with spacing h = 1/m."""
    if d not in (2, 3):
        raise InvalidDimension(f"d must be 2 or 3, got {d}", d=d)
    frac = Fraction(h) if not isinstance(h, Fraction) else h
    m = Fraction(1, 1) / frac
    if m.denominator != 1:
        raise MalformedFile(f"1/h must be an integer, got h={frac}")
    ext = int(m) + 1
    return UniformGridSpec(
        extents=(ext,) * d, h=float(frac), domain=box_domain((1.0,) * d)
    )


# -- boundary intersection ------------------------------------------------------

def _root_on_segment(phi, node, axis, sign, h, on_degenerate) -> float:
    """Bisect for the boundary crossing on (node, node + sign*h*e_axis].

    The endpoints are classified by the caller; interior evaluations
    drive 48 halvings, which puts the bracket below 1e-12 * h.  Roots
    within rounding of the far endpoint snap to exactly h.
    """
    def eval_at(t):
        q = list(node)
        q[axis] += sign * t
        return phi(*q)

    lo, hi = 0.0, h
    for _ in range(48):
        mid = 0.5 * (lo + hi)
        if eval_at(mid) < 0:
            lo = mid
        else:
            hi = mid
        if hi - lo <= BISECT_REL_TOL * h:
            break
    dist = hi
    if h - dist < 1e-11 * h:
        dist = h
    if dist <= GRAZE_EPS * h:
        if on_degenerate == "raise":
            raise DegenerateCut(
                f"cut distance {dist} below {GRAZE_EPS} * h at {node}", node=node
            )
        dist = GRAZE_EPS * h
    return dist


def boundary_distance(phi, node, axis: int, sign: int, h: float,
                      on_degenerate: str = "clamp") -> float:
    """Distance from an inside node to the boundary along a grid line.

    Requires phi(node) < 0 and phi at the neighboring node >= 0; the
    result lies in (0, h], snapped to h when the boundary passes
    through the neighbor and clamped away from zero at the grazing
    threshold.
    """
    node = tuple(float(x) for x in node)
    q = list(node)
    q[axis] += sign * h
    f0 = phi(*node)
    f1 = phi(*q)
    if not (f0 < 0 <= f1):
        raise NoSignChange(
            f"phi({node}) = {f0}, phi at step = {f1}; bracket does not straddle",
            node=node,
        )
    return _root_on_segment(phi, node, axis, sign, h, on_degenerate)


# -- cut-cell Poisson builder ----------------------------------------------------

def gibou_matrix(spec: UniformGridSpec):
    """Assemble the cut-cell Poisson matrix on interior lattice nodes.

    Returns ``(system, coords, boundary_info)`` where ``coords`` holds
    integer lattice indices per vertex and ``boundary_info`` maps each
    boundary-adjacent vertex to its [(axis, sign, distance)] cuts.

    Adjacent interior nodes couple with weight 1/h^2; a cut in
    direction (axis, sign) at distance ``t`` adds 1/(t*h) to the slack.
    """
    d = spec.d
    if d not in (2, 3):
        raise InvalidDimension(f"d must be 2 or 3, got {d}", d=d)
    h = spec.h
    phi = spec.domain.phi

    grids = np.meshgrid(*[np.arange(e) for e in spec.extents], indexing="ij")
    all_idx = np.stack([g.ravel() for g in grids], axis=1)
    phi_vals = np.array([phi(*(idx * h)) for idx in all_idx])
    inside = phi_vals < 0
    if not np.any(inside):
        raise EmptyDomain("no lattice node lies strictly inside the domain")

    inside_lookup = {
        tuple(idx): bool(flag) for idx, flag in zip(all_idx, inside)
    }
    coords = all_idx[inside]
    vid = {tuple(c): i for i, c in enumerate(coords)}
    n = len(coords)
    inv_h2 = 1.0 / (h * h)

    edges = []
    slack = np.zeros(n)
    boundary_info = {}
    for i, c in enumerate(coords):
        node = tuple(float(ci) * h for ci in c)
        for axis in range(d):
            for sign in (1, -1):
                nb = list(c)
                nb[axis] += sign
                key = tuple(nb)
                j = vid.get(key)
                if j is not None:
                    if sign == 1:  # each interior edge once
                        edges.append((i, j, inv_h2))
                    continue
                if key not in inside_lookup:
                    # neighbor lattice position falls outside the grid;
                    # the domain must not leak past it
                    probe = list(node)
                    probe[axis] += sign * h
                    if phi(*probe) < 0:
                        raise NoSignChange(
                            "domain extends beyond the lattice", node=node
                        )
                # the table classified the neighbor as outside, so the
                # segment brackets the boundary regardless of roundoff
                # in re-evaluating phi at the endpoint
                dist = _root_on_segment(phi, node, axis, sign, h,
                                        on_degenerate="raise")
                slack[i] += 1.0 / (dist * h)
                boundary_info.setdefault(i, []).append((axis, sign, dist))
    system = assemble(edges, slack)
    return system, coords, boundary_info


# -- wide-stencil schemes ---------------------------------------------------------

@dataclass(frozen=True)
class WideStencilScheme:
    """Outer coefficients c_0..c_m and inner vector parameters (b, d).

    All values are exact rationals so assembled signs are decided
    without rounding; ``c_{-s} = c_s`` by symmetry.
    """

    name: str
    m: int
    c: tuple  # Fractions, indexed by |offset| 0..m
    b: Fraction
    d: Fraction

    def outer(self, s: int) -> Fraction:
        s = abs(s)
        return self.c[s] if s <= self.m else Fraction(0)

    def inner(self, t: int) -> Fraction:
        t = abs(t)
        if t == 0:
            return 1 - 2 * self.b + 6 * self.d
        if t == 1:
            return self.b - 4 * self.d
        if t == 2:
            return self.d
        return Fraction(0)


IFD11 = WideStencilScheme(
    "ifd11", 1, (Fraction(-2), Fraction(1)), Fraction(1, 12), Fraction(0)
)
IFD22 = WideStencilScheme(
    "ifd22", 2, (Fraction(-17, 10), Fraction(4, 5), Fraction(1, 20)),
    Fraction(2, 15), Fraction(0),
)
HIFD22 = WideStencilScheme(
    "hifd22", 2, (Fraction(-53, 42), Fraction(32, 63), Fraction(31, 252)),
    Fraction(13, 63), Fraction(1, 164),
)

SCHEMES = {s.name: s for s in (IFD11, IFD22, HIFD22)}


def stencil_vector(scheme: WideStencilScheme) -> np.ndarray:
    """Inner smoothing vector [d, b-4d, 1-2b+6d, b-4d, d] as floats."""
    return np.array([float(scheme.inner(t)) for t in (-2, -1, 0, 1, 2)])


def stencil_offsets(scheme: WideStencilScheme):
    """Split the negated 2D stencil into edge weights and a diagonal.

    The raw tensor combination of outer and inner coefficients
    approximates the Laplacian, whose sign is negative definite; the
    whole stencil is therefore negated during assembly.  After the flip
    the off-diagonal matrix entries are ``-raw(a, b)``, so the returned
    edge weights equal the raw coefficients and must be nonnegative for
    the result to stay an M-matrix.

    Returns ``(weights, diag)`` where ``weights`` maps each nonzero
    off-center offset to an exact Fraction and ``diag`` is the negated
    center coefficient.
    """
    reach = max(scheme.m, 2)
    weights = {}
    for a in range(-reach, reach + 1):
        for b in range(-reach, reach + 1):
            raw = scheme.outer(a) * scheme.inner(b) + scheme.outer(b) * scheme.inner(a)
            if (a, b) != (0, 0) and raw != 0:
                weights[(a, b)] = raw
    diag = -2 * scheme.outer(0) * scheme.inner(0)
    return weights, diag


def ifd_matrix(scheme: WideStencilScheme, spec: UniformGridSpec):
    """Assemble a wide-stencil operator on the interior of a rectangle.

    Returns ``(system, coords)``.  Ghost points outside the interior
    region carry Dirichlet data; their coefficients are folded into the
    slack.  Raises NotAnMMatrix if any assembled off-diagonal comes out
    with the wrong sign, which would indicate a broken coefficient set.
    """
    if spec.d != 2:
        raise InvalidDimension("wide-stencil assembly is 2D", d=spec.d)
    if not spec.domain.is_box:
        raise NotAnMMatrix("wide-stencil schemes require the box domain")
    interior = tuple(e - 2 for e in spec.extents)
    need = 2 * scheme.m + 1
    if any(e < need for e in interior):
        raise GridTooSmall(
            f"interior extents {interior} below {need} for {scheme.name}",
            interior=interior,
        )
    offsets, diag_coef = stencil_offsets(scheme)
    if diag_coef <= 0:
        raise NotAnMMatrix(f"diagonal coefficient {diag_coef} is not positive")
    for off, coef in offsets.items():
        if coef < 0:
            raise NotAnMMatrix(
                f"edge weight {coef} at offset {off} is negative after the sign flip",
                offset=off,
            )

    nx, ny = interior
    inv_h2 = 1.0 / (spec.h * spec.h)
    coords = np.array([(i, j) for j in range(ny) for i in range(nx)], dtype=np.int64)
    vid = lambda i, j: j * nx + i  # noqa: E731  (row-major in j)

    n = nx * ny
    edges = []
    slack = np.zeros(n)
    w_float = {off: float(c) * inv_h2 for off, c in offsets.items()}
    for j in range(ny):
        for i in range(nx):
            k = vid(i, j)
            for (a, b), w in w_float.items():
                ia, jb = i + a, j + b
                if 0 <= ia < nx and 0 <= jb < ny:
                    if (b, a) > (0, 0):  # record each edge from its lower end
                        edges.append((k, vid(ia, jb), w))
                else:
                    slack[k] += w
    system = assemble(edges, slack)
    return system, coords


def scheme_symbol(scheme: WideStencilScheme, theta_x: float, theta_y: float,
                  h: float) -> float:
    """Exact eigenvalue of the assembled operator on the plane-wave mode
    with phase (theta_x, theta_y) per node, away from the boundary."""
    def outer_sym(t):
        return float(scheme.outer(0)) + 2 * sum(
            float(scheme.outer(s)) * math.cos(s * t) for s in range(1, scheme.m + 1)
        )

    def inner_sym(t):
        return float(scheme.inner(0)) + 2 * sum(
            float(scheme.inner(s)) * math.cos(s * t) for s in (1, 2)
        )

    val = outer_sym(theta_x) * inner_sym(theta_y) + outer_sym(theta_y) * inner_sym(theta_x)
    return -val / (h * h)
