"""Exception hierarchy shared by every stage of the pipeline."""


class GaitSeqError(Exception):
    """Base class for all errors raised by :mod:`gaitseq`."""

    code = "error"

    def to_dict(self):
        return {"error": self.code, "type": type(self).__name__, "message": str(self)}


class InsufficientData(GaitSeqError, ValueError):
    code = "insufficient_data"


class InvalidTimestamps(GaitSeqError, ValueError):
    code = "invalid_timestamps"


class InvalidCutoff(GaitSeqError, ValueError):
    code = "invalid_cutoff"


class AlignmentFailure(GaitSeqError):
    code = "alignment_failure"


class DegenerateInput(GaitSeqError, ValueError):
    code = "degenerate_input"


class EstimationFailure(GaitSeqError):
    code = "estimation_failure"


class AmbiguousDecomposition(GaitSeqError):
    code = "ambiguous_decomposition"


class NoGaitDetected(GaitSeqError):
    code = "no_gait_detected"


class DegenerateChannel(GaitSeqError, ValueError):
    code = "degenerate_channel"


class NumericalDivergence(GaitSeqError, FloatingPointError):
    code = "numerical_divergence"

    def __init__(self, message, step=None):
        super().__init__(message)
        self.step = step


class ShapeError(GaitSeqError, ValueError):
    code = "shape_error"


class DegenerateDataset(GaitSeqError, ValueError):
    code = "degenerate_dataset"


class ConvergenceFailure(GaitSeqError):
    code = "convergence_failure"


class PipelineFailure(GaitSeqError):
    code = "pipeline_failure"


class GimbalWarning(UserWarning):
    """Pitch is within numerical reach of +/- pi/2; roll and yaw are coupled."""
