"""Execution backends behind one submit/poll/cancel interface."""

from .base import Backend, BackendEvent, CancelOutcome, SubmitRequest
from .multiplex import MultiplexBackend, multiplex

__all__ = ["Backend", "BackendEvent", "CancelOutcome", "MultiplexBackend", "SubmitRequest", "multiplex"]
