"""Exception hierarchy shared by all gazepipe modules."""


class GazepipeError(Exception):
    """Base class for every error raised by this package."""


class ConfigError(GazepipeError, ValueError):
    """Invalid configuration (rates, filter corners, generator counts, plans)."""


class ValidationError(GazepipeError, ValueError):
    """Input data does not match what an operation expects."""


class DegenerateInputError(GazepipeError, ValueError):
    """Input is well-formed but numerically unusable (all zeros, too short)."""


class SegmentEdgeError(GazepipeError, ValueError):
    """One or more triggers are too close to the recording edges.

    ``indices`` lists the offending trigger positions.
    """

    def __init__(self, indices, message=None):
        self.indices = list(indices)
        if message is None:
            message = f"triggers too close to recording edge: {self.indices}"
        super().__init__(message)


class TrainingError(GazepipeError, RuntimeError):
    """Training could not proceed (single class, divergence)."""


class SplitError(GazepipeError, ValueError):
    """A stratified split cannot be formed."""


class CellError(GazepipeError, RuntimeError):
    """A (input set, classifier) cell failed during an evaluation run."""

    def __init__(self, input_set, classifier, repetition, cause):
        self.input_set = input_set
        self.classifier = classifier
        self.repetition = repetition
        self.cause = cause
        super().__init__(
            f"cell {input_set}/{classifier} failed at repetition {repetition}: {cause}"
        )
