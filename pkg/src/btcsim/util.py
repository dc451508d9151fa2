"""Shared small utilities."""

from __future__ import annotations


class NumericsError(RuntimeError):
    """A numerical procedure failed (solver did not converge, step size too
    coarse, guard tripped).  Distinct from ValueError so callers can map
    usage errors and numerical failures to different exit codes."""
