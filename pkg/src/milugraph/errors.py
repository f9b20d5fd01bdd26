"""Exception hierarchy shared by all milugraph modules.

Every error carries a machine-readable ``code`` (the class name) and an
optional ``context`` dict so the CLI can emit structured error JSON.
"""

from __future__ import annotations


class MilugraphError(Exception):
    """Base class for all errors raised by this package."""

    def __init__(self, message: str, **context):
        super().__init__(message)
        self.message = message
        self.context = context

    @property
    def code(self) -> str:
        return type(self).__name__

    def to_json_obj(self) -> dict:
        return {"code": self.code, "message": self.message, "context": self.context}


# -- graph system ------------------------------------------------------------

class AsymmetricInput(MilugraphError):
    """The same undirected edge was supplied twice with different weights."""


class DuplicateEdge(MilugraphError):
    """The same undirected edge was supplied more than once."""


class NegativeWeight(MilugraphError):
    """An edge weight is not strictly positive, or a slack entry is negative."""


class SelfLoopEdge(MilugraphError):
    """An explicit self edge was supplied; self-loop weight is derived."""


class DimensionMismatch(MilugraphError):
    """Vector or index dimensions do not match the system size."""


class OracleSizeExceeded(MilugraphError):
    """A dense-oracle operation was requested beyond its size guard."""


class MalformedFile(MilugraphError):
    """An exchange file could not be parsed or violates format constraints."""


class SystemNotSpd(MilugraphError):
    """System fails the positive-definiteness prerequisite (no slack in a component)."""


# -- ordering ----------------------------------------------------------------

class DuplicateCoordinates(MilugraphError):
    """Two vertices share the same grid coordinates."""


class NonRectangularGrid(MilugraphError):
    """Sector ordering requires a full rectangular grid of coordinates."""


# -- preconditioners ---------------------------------------------------------

class NonPositivePivot(MilugraphError):
    """A factorization pivot is nonpositive or numerically degenerate."""


# -- lecn --------------------------------------------------------------------

class InvalidDimension(MilugraphError):
    """Spatial dimension outside the supported set {2, 3}."""


# -- stencil builders --------------------------------------------------------

class EmptyDomain(MilugraphError):
    """No grid node lies strictly inside the requested domain."""


class DegenerateCut(MilugraphError):
    """A boundary intersection distance is below the grazing threshold."""


class NoSignChange(MilugraphError):
    """Bisection bracket does not straddle the domain boundary."""


class GridTooSmall(MilugraphError):
    """Grid extents cannot host the requested stencil."""


class NotAnMMatrix(MilugraphError):
    """Assembled coefficients violate the sign structure of an M-matrix."""


# -- adaptive trees ----------------------------------------------------------

class CellNotLeaf(MilugraphError):
    """Refinement was requested on a cell that is not a leaf."""


class NonPositiveSigma(MilugraphError):
    """Coefficient field is not strictly positive at some cell center."""


class UngradedTree(MilugraphError):
    """Adjacent leaves differ by more than one level."""


# -- krylov ------------------------------------------------------------------

class IndefinitePreconditioner(MilugraphError):
    """Preconditioned inner product became nonpositive during PCG."""


class MaxIterations(MilugraphError):
    """An iteration hit its cap without converging."""


class InnerSolveFailure(MilugraphError):
    """An inner PCG solve inside inverse iteration did not converge."""


class NotPositiveDefinite(MilugraphError):
    """A matrix required to be SPD failed a definiteness check."""


# -- cli ---------------------------------------------------------------------

class ConfigError(MilugraphError):
    """Experiment configuration violates the schema."""
