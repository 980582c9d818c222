"""Shared exception types.

Every error raised by the package derives from BenchError so the CLI can
surface any failure as one machine-parsable line and a nonzero exit.
"""

from __future__ import annotations


class BenchError(Exception):
    """Base class for all package errors."""


# --- corpus ---------------------------------------------------------------

class MissingManifest(BenchError):
    pass


class MalformedManifest(BenchError):
    pass


class DuplicateSampleId(BenchError):
    pass


class ReportSampleMismatch(BenchError):
    pass


# --- model gateway --------------------------------------------------------

class GatewayFailure(BenchError):
    """Umbrella for anything that stops a model call from producing text."""


class AuthMissing(GatewayFailure):
    pass


class TransportFailure(GatewayFailure):
    """Network/provider failure. Retried with backoff before surfacing."""


class FixtureMiss(GatewayFailure):
    """Replay backend has no recorded response for the request digest."""

    def __init__(self, digest: str):
        super().__init__(f"no fixture recorded for digest {digest}")
        self.digest = digest


class TruncatedResponse(GatewayFailure):
    """Provider cut the response at the token budget; unusable as code."""


# --- prompting ------------------------------------------------------------

class UnboundPlaceholder(BenchError):
    def __init__(self, name: str):
        super().__init__(f"template placeholder not bound: {name}")
        self.name = name


class EmptyExtraction(BenchError):
    """Nothing remained after stripping fences, sentinel, and prose."""


# --- execution harness ----------------------------------------------------

class ToolMissing(BenchError):
    """Toolchain binary not resolvable: an environment problem, not a
    property of the code under evaluation."""


class SandboxFailure(BenchError):
    pass


class SandboxSetupFailure(SandboxFailure):
    pass


# --- metrics / quality ----------------------------------------------------

class PhaseMissing(BenchError):
    pass


class MalformedExport(BenchError):
    pass


class IoFailure(BenchError):
    pass
