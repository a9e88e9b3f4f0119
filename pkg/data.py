import logging
from pathlib import Path

import numpy as np
import pandas as pd

from errors import DegenerateDataError
from model import Dataset

logger = logging.getLogger(__name__)

DELIMITERS = (",", "\t", ";")


def sniff_delimiter(first_line):
    """
    Pick the delimiter occurring most often in the first line.

    Args:
        first_line (str): First non-empty line of the file

    Returns:
        str: One of ',', tab or ';' (',' when none occurs)
    """
    counts = {sep: first_line.count(sep) for sep in DELIMITERS}
    best = max(DELIMITERS, key=lambda sep: counts[sep])
    return best if counts[best] > 0 else ","


def _is_number(cell):
    try:
        float(cell)
        return True
    except (TypeError, ValueError):
        return False


def load_dataset(path):
    """
    Load a delimiter-separated numeric table into a Dataset.

    The delimiter is detected among comma, tab and semicolon; the first row is
    taken as a header when any of its cells is not a number.

    Args:
        path (str or Path): File to read

    Returns:
        Dataset: Rows are observations, columns variables

    Raises:
        DegenerateDataError: unreadable file, non-numeric or non-finite cell (1-based row and
            column of the file), or too few rows
    """
    path = Path(path)
    try:
        with open(path, "r", encoding="utf-8") as fh:
            first_line = next((line for line in fh if line.strip()), "")
    except OSError as e:
        raise DegenerateDataError(f"cannot read {path}: {e}") from e
    if not first_line:
        raise DegenerateDataError(f"{path} is empty")

    sep = sniff_delimiter(first_line)
    try:
        raw = pd.read_csv(path, sep=sep, header=None, dtype=str, skip_blank_lines=True,
                          keep_default_na=False, skipinitialspace=True)
    except (pd.errors.ParserError, UnicodeDecodeError) as e:
        raise DegenerateDataError(f"cannot parse {path}: {e}") from e
    raw = raw.apply(lambda column: column.str.strip())

    header = None
    first_data_row = 1
    if not all(_is_number(cell) for cell in raw.iloc[0]):
        header = [str(cell).strip() for cell in raw.iloc[0]]
        raw = raw.iloc[1:]
        first_data_row = 2

    values = raw.apply(pd.to_numeric, errors="coerce")
    numeric = values.to_numpy(dtype=float)
    bad = ~np.isfinite(numeric)
    if bad.any():
        row, col = np.argwhere(bad)[0]
        cell = raw.iat[row, col]
        raise DegenerateDataError(
            f"non-numeric or non-finite value {cell!r} at row {row + first_data_row}, column {col + 1}",
            row=int(row) + first_data_row,
            column=int(col) + 1,
        )
    logger.debug("loaded %s: %d rows, %d columns, delimiter %r, header %s",
                 path, len(values), values.shape[1], sep, header is not None)
    return Dataset.from_array(numeric, header)
