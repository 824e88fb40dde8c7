"""Exception hierarchy for patchad."""


class PatchAdError(Exception):
    """Base class for all patchad errors."""


class InputError(PatchAdError):
    """Invalid data supplied by the caller (bad CSV cell, shape mismatch, ...)."""


class CheckpointError(PatchAdError):
    """Malformed or incompatible checkpoint file."""


class TrainingDivergedError(PatchAdError):
    """Loss became non-finite during training."""

    def __init__(self, iteration: int, message: str | None = None):
        self.iteration = iteration
        super().__init__(message or f"non-finite loss at iteration {iteration}")
