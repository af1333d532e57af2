"""Unit tests for exceptions module"""

import unittest
from dmha.exceptions import (
    DmhaException,
    TensorException,
    ShapeMismatchException,
    NonFiniteException,
    TrainingException,
    DivergenceException,
    FormatException,
    FeatureFileException,
    CheckpointException,
    ManifestException,
    WaveformFormatException,
    GradcheckException,
    StochasticGraphException,
    ConfigurationException,
    EnsembleException,
)


class TestExceptions(unittest.TestCase):
    """Test custom exceptions"""

    def test_base_exception(self):
        """Test raising the base exception"""
        with self.assertRaises(DmhaException):
            raise DmhaException("Test error")

    def test_tensor_exception_hierarchy(self):
        """Test the tensor exception hierarchy"""
        self.assertTrue(issubclass(ShapeMismatchException, TensorException))
        self.assertTrue(issubclass(NonFiniteException, TensorException))
        self.assertTrue(issubclass(TensorException, DmhaException))

    def test_training_exception_hierarchy(self):
        """Test the training exception hierarchy"""
        self.assertTrue(issubclass(DivergenceException, TrainingException))
        self.assertTrue(issubclass(TrainingException, DmhaException))

    def test_format_exception_hierarchy(self):
        """Test the file format exception hierarchy"""
        for cls in (FeatureFileException, CheckpointException, ManifestException, WaveformFormatException):
            self.assertTrue(issubclass(cls, FormatException))
        self.assertTrue(issubclass(FormatException, DmhaException))

    def test_gradcheck_exception_hierarchy(self):
        """Test the gradient check exception hierarchy"""
        self.assertTrue(issubclass(StochasticGraphException, GradcheckException))

    def test_standalone_exceptions(self):
        """Test exceptions that derive from the base directly"""
        self.assertTrue(issubclass(ConfigurationException, DmhaException))
        self.assertTrue(issubclass(EnsembleException, DmhaException))

    def test_exception_chaining(self):
        """Test that causes survive re-raising"""
        try:
            try:
                raise ValueError("Original error")
            except ValueError as e:
                raise CheckpointException("Wrapped error") from e
        except CheckpointException as e:
            self.assertIsInstance(e.__cause__, ValueError)
            self.assertEqual(str(e), "Wrapped error")


if __name__ == '__main__':
    unittest.main()
