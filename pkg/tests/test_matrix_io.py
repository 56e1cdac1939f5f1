"""
Unit tests for Matrix Market input and output.
"""

import numpy as np
import pytest
from numpy.testing import assert_array_equal

from src.exceptions import ConfigValidationError
from src.matrix_io import read_matrix, write_matrix


class TestMatrixMarket:
    """Test cases for Matrix Market files."""

    def test_reimport_is_exact(self, tmp_path):
        """Written complex doubles come back bit-identical."""
        rng = np.random.default_rng(7)
        matrix = rng.standard_normal((4, 3)) + 1j * rng.standard_normal((4, 3))
        path = write_matrix(tmp_path / "m.mtx", matrix, comment="test")
        assert_array_equal(read_matrix(path), matrix)

    def test_suffix_added(self, tmp_path):
        """A missing .mtx suffix is appended."""
        path = write_matrix(tmp_path / "plain", np.eye(2))
        assert path.name == "plain.mtx"
        assert path.is_file()

    def test_coordinate_input(self, tmp_path):
        """Sparse coordinate files are densified."""
        path = tmp_path / "sparse.mtx"
        path.write_text(
            "%%MatrixMarket matrix coordinate real general\n2 2 1\n2 1 3.5\n",
            encoding="utf-8",
        )
        assert_array_equal(read_matrix(path), np.array([[0.0, 0.0], [3.5, 0.0]]))

    def test_missing_file(self, tmp_path):
        """A missing file is a configuration error."""
        with pytest.raises(ConfigValidationError):
            read_matrix(tmp_path / "absent.mtx")

    def test_malformed_file(self, tmp_path):
        """Garbage content is a configuration error."""
        path = tmp_path / "bad.mtx"
        path.write_text("not a matrix\n", encoding="utf-8")
        with pytest.raises(ConfigValidationError):
            read_matrix(path)
