"""Exception hierarchy shared by every module of the package."""

from __future__ import annotations

from typing import Any, Optional


class RadonHJError(Exception):
    """Base class for all package errors."""


class NonLipschitz(RadonHJError):
    """Sampled difference quotients of a flux diverge under refinement."""


class Unbounded(RadonHJError):
    """A flux exceeds the configured magnitude cap."""


class InconclusiveTail(RadonHJError):
    """The probe range is too short to stabilize tail quantities."""


class AnchorOnAtom(RadonHJError):
    """A primitive was requested with its anchor on an atom location."""


class DomainTooNarrow(RadonHJError):
    """The interval cannot host the smoothing partition (6*sqrt(eps) >= b - a)."""


class CFLViolation(RadonHJError):
    """Requested grid and viscosity need more steps than the cap allows."""


class BlowUp(RadonHJError):
    """A non-finite value appeared in a solver state."""


class NotConverged(RadonHJError):
    """A refinement schedule was exhausted before the Cauchy tolerance was met."""

    def __init__(self, message: str, residuals: Any = None, partial: Optional[Any] = None):
        super().__init__(message)
        self.residuals = residuals
        self.partial = partial


class NegativeMassOvershoot(RadonHJError):
    """An atom mass crossed zero between time levels by more than tol_mass."""


class WindowTooNarrow(RadonHJError):
    """A trace extraction window holds fewer than four cells."""


class MonotonicityViolation(RadonHJError):
    """An atom mass trajectory grows in magnitude or changes sign."""


class BreakpointMismatch(RadonHJError):
    """A primitive and a measure solution disagree on breakpoint locations."""


class HypothesisViolated(RadonHJError):
    """Inputs of a comparison check are not ordered as required."""


class RegimeMismatch(RadonHJError):
    """A check was requested for a flux outside its hypothesis regime."""


class ConfigError(RadonHJError):
    """A scenario configuration failed to parse or validate."""
