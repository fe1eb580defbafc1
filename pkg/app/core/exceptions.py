class TestbedException(Exception):
    """Base exception for the testbed"""
    pass

class ConfigurationError(TestbedException):
    """Exception raised when a scenario or setting fails validation"""
    pass

class NumericalDivergenceError(TestbedException):
    """Exception raised when a propagated state becomes non-finite"""

    def __init__(self, tick: int, t: float, detail: str):
        self.tick = tick
        self.t = t
        self.detail = detail
        super().__init__(f"Non-finite state at tick {tick} (t={t:.3f} s): {detail}")

class AllocationError(TestbedException):
    """Exception raised when G·diag(θ̂) loses rank"""
    pass

class InsufficientHistoryError(TestbedException):
    """Exception raised when an estimator lacks the samples it needs"""
    pass

class FrameError(TestbedException):
    """Base exception for wire frame decoding"""
    pass

class FrameTruncatedError(FrameError):
    """Frame shorter than its header or declared payload"""
    pass

class FrameCrcError(FrameError):
    """Header or payload checksum mismatch"""
    pass

class UnknownTopicError(FrameError):
    """Topic id not in the topic table"""
    pass

class VersionMismatchError(FrameError):
    """Protocol version differs from ours"""
    pass

class PayloadTooLargeError(FrameError):
    """Payload exceeds the frame limit"""
    pass

class BusError(TestbedException):
    """Exception raised for pub/sub transport failures"""
    pass

class NodeDownError(BusError):
    """Exception raised when a node stops responding or disconnects"""

    def __init__(self, node: str, reason: str = "disconnected"):
        self.node = node
        self.reason = reason
        super().__init__(f"Node '{node}' down: {reason}")

class RunAbortedError(TestbedException):
    """Exception raised when a run is terminated before completion"""
    pass

class AcceptanceError(TestbedException):
    """Exception raised when a completed run misses its acceptance bounds"""

    def __init__(self, failures: list):
        self.failures = failures
        super().__init__("Acceptance failed: " + "; ".join(failures))
