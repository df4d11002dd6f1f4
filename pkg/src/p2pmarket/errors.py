"""Exception types raised across the package.

Every domain error derives from :class:`P2PMarketError` so callers (and the
CLI) can distinguish validation failures from convergence failures and from
plain bugs.
"""

from __future__ import annotations


class P2PMarketError(Exception):
    """Base class for all domain errors."""


class EmptySideError(P2PMarketError):
    """A graph build was asked for with no sellers or no buyers."""


class DisconnectedError(P2PMarketError):
    """Random topology generation failed to produce a connected graph."""


class NotConnectedError(P2PMarketError):
    """An operation that requires a connected graph received a disconnected one."""


class EmptyMarketError(P2PMarketError):
    """Clearing was requested with no prosumers."""


class UnbalancedError(P2PMarketError):
    """Total trades do not sum to zero."""


class MissingSideError(P2PMarketError):
    """An operation needs at least one seller and one buyer."""


class DegeneratePriceError(P2PMarketError):
    """Price interval has zero width; parameter intervals collapse."""


class EmptyIntervalError(P2PMarketError):
    """A derived parameter interval is empty."""


class NonOverlappingError(P2PMarketError):
    """Two prosumers' price intervals do not intersect."""

    def __init__(self, i: int, j: int, message: str | None = None):
        self.i = i
        self.j = j
        super().__init__(message or f"price intervals of prosumers {i} and {j} do not overlap")


class InvalidLocalKError(P2PMarketError):
    """A proposed k violates the global demand-supply condition."""

    def __init__(self, agent: int, message: str):
        self.agent = agent
        super().__init__(message)


class DegenerateDenominatorError(P2PMarketError):
    """Consensus average has a nonpositive curvature component."""


class ConvergenceError(P2PMarketError):
    """An iterative scheme hit its iteration budget before reaching tolerance.

    Carries whatever partial result the scheme produced (``trace`` for
    consensus runs, ``result`` for the QP oracle) so callers can inspect it.
    """

    def __init__(self, iterations: int, message: str | None = None, trace=None, result=None):
        self.iterations = iterations
        self.trace = trace
        self.result = result
        super().__init__(message or f"did not converge within {iterations} iterations")


class ScenarioParseError(P2PMarketError):
    """A scenario or results file is not well-formed JSON/CSV."""


class ScenarioSchemaError(P2PMarketError):
    """A scenario or results file is well-formed but violates an invariant."""


class PipelineStepError(P2PMarketError):
    """Wraps a module error with the pipeline step it occurred in.

    The original error is chained as ``__cause__`` and kept in ``cause``.
    """

    def __init__(self, step: str, cause: BaseException):
        self.step = step
        self.cause = cause
        super().__init__(f"[{step}] {cause}")
