"""Exception types shared across the toolkit."""


class SceneForgeError(Exception):
    """Base class for all domain errors raised by this package."""


class ParseError(SceneForgeError):
    """Syntax or resolution error in scene-program source, with position."""

    def __init__(self, message: str, line: int, col: int):
        super().__init__(f"{message} (line {line}, col {col})")
        self.message = message
        self.line = line
        self.col = col


class ExecError(SceneForgeError):
    """Runtime error while executing a scene program."""


class DegenerateGeometryError(SceneForgeError):
    """Raised when a geometric operation receives degenerate input."""


class RetrievalError(SceneForgeError):
    """Raised when the asset catalog cannot satisfy a retrieval request."""


class ProposalUnavailableError(SceneForgeError):
    """Remote proposal model could not be reached after bounded retries."""


class TrainingDivergedError(SceneForgeError):
    """Non-finite loss encountered during pose-model training."""

    def __init__(self, step: int, loss_value: float):
        super().__init__(f"non-finite loss {loss_value!r} at step {step}")
        self.step = step
        self.loss_value = loss_value
