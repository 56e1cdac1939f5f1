"""
Matrix Market ingestion and emission.

Complex entries are written as "real imag" pairs in array format with
17 significant digits, which reproduces IEEE doubles exactly on re-import.
"""

from pathlib import Path
from typing import Optional, Union

import numpy as np
import scipy.io
import scipy.sparse
import structlog

from .exceptions import ConfigValidationError
from .matfun import as_complex_matrix

logger = structlog.get_logger(__name__)

PathLike = Union[str, Path]


def read_matrix(path: PathLike) -> np.ndarray:
    """Read a coordinate or array Matrix Market file as a dense complex matrix."""
    path = Path(path)
    if not path.is_file():
        raise ConfigValidationError(f"Matrix file not found: {path}", field=str(path))
    try:
        data = scipy.io.mmread(str(path))
    except Exception as e:  # scipy raises parser-specific types
        raise ConfigValidationError(f"Malformed Matrix Market file {path}: {e}", field=str(path))
    if scipy.sparse.issparse(data):
        data = data.toarray()
    matrix = as_complex_matrix(data, name=str(path))
    logger.debug("Read matrix", path=str(path), shape=matrix.shape)
    return matrix


def write_matrix(path: PathLike, matrix: np.ndarray, comment: Optional[str] = None) -> Path:
    """Write a dense complex matrix in Matrix Market array format."""
    path = Path(path)
    if path.suffix != ".mtx":
        path = path.with_name(path.name + ".mtx")
    path.parent.mkdir(parents=True, exist_ok=True)
    dense = np.ascontiguousarray(as_complex_matrix(matrix))
    scipy.io.mmwrite(
        str(path), dense, comment=comment or "", field="complex", precision=17
    )
    logger.debug("Wrote matrix", path=str(path), shape=dense.shape)
    return path
