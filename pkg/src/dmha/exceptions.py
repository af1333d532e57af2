"""Custom exceptions for DMHA"""


class DmhaException(Exception):
    """Base exception for all DMHA errors"""
    pass


class TensorException(DmhaException):
    """Base exception for tensor engine errors"""
    pass


class ShapeMismatchException(TensorException):
    """Exception raised when operand dimensions are incompatible"""
    pass


class NonFiniteException(TensorException):
    """Exception raised when a forward or backward pass produces NaN or Inf"""
    pass


class GraphException(TensorException):
    """Exception raised when backward cannot run on the recorded graph"""
    pass


class OptimizerException(TensorException):
    """Exception raised when an optimizer step cannot be applied"""
    pass


class ModelException(DmhaException):
    """Exception raised for invalid model configuration or inputs"""
    pass


class FeatureException(DmhaException):
    """Exception raised for feature extraction and aggregation errors"""
    pass


class AugmentationException(DmhaException):
    """Exception raised when a waveform augmentation cannot be applied"""
    pass


class TrainingException(DmhaException):
    """Base exception for training errors"""
    pass


class DivergenceException(TrainingException):
    """Exception raised when the training loss becomes NaN or infinite"""
    pass


class MetricException(DmhaException):
    """Exception raised for invalid metric or loss inputs"""
    pass


class FormatException(DmhaException):
    """Base exception for persistent format errors"""
    pass


class FeatureFileException(FormatException):
    """Exception raised when a DMHF feature file cannot be read or written"""
    pass


class CheckpointException(FormatException):
    """Exception raised when a DMHC checkpoint cannot be read or written"""
    pass


class ManifestException(FormatException):
    """Exception raised for invalid manifest files"""
    pass


class WaveformFormatException(FormatException):
    """Exception raised when a WAV file is not 16 kHz mono 16-bit PCM"""
    pass


class ConfigurationException(DmhaException):
    """Exception raised for configuration errors"""
    pass


class EnsembleException(DmhaException):
    """Exception raised for invalid ensemble specifications"""
    pass


class GradcheckException(DmhaException):
    """Base exception for gradient check errors"""
    pass


class StochasticGraphException(GradcheckException):
    """Exception raised when a gradient check is asked to run with dropout"""
    pass
