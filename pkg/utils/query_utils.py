# utils/query_utils.py

from typing import Any, Dict, List

import numpy as np
import pandas as pd


def build_query_filters(filters: Dict[str, Any]) -> Dict[str, Dict[str, Any]]:
    """
    Builds column filters from query parameters.
    Handles the _gte / _lte comparison suffixes; anything else is an exact match.

    Returns:
        Mapping of column name to {"eq" | "gte" | "lte": value}
    """
    column_filters: Dict[str, Dict[str, Any]] = {}

    for key, value in filters.items():
        # Skip empty filters
        if value is None:
            continue

        if key.endswith("_gte"):
            column_filters.setdefault(key[: -len("_gte")], {})["gte"] = try_convert_numeric(value)
        elif key.endswith("_lte"):
            column_filters.setdefault(key[: -len("_lte")], {})["lte"] = try_convert_numeric(value)
        else:
            column_filters.setdefault(key, {})["eq"] = try_convert_numeric(value)

    return column_filters


def apply_query_filters(table: pd.DataFrame, filters: Dict[str, Any]) -> pd.DataFrame:
    """
    Applies query filters to a results table.

    Args:
        table: Results DataFrame
        filters: Raw query parameters, e.g. {"scheme": "AMAT-ORG", "snr_db_gte": 10}

    Returns:
        Filtered DataFrame with the original row order kept
    """
    mask = pd.Series(True, index=table.index)
    for column, ops in build_query_filters(filters).items():
        if column not in table.columns:
            raise KeyError(f"unknown column {column!r}")
        values = table[column]
        if "eq" in ops:
            mask &= values == ops["eq"]
        if "gte" in ops:
            mask &= values >= ops["gte"]
        if "lte" in ops:
            mask &= values <= ops["lte"]
    return table[mask]


def try_convert_numeric(value: Any) -> Any:
    """
    Try to convert a value to int or float if possible.
    """
    if isinstance(value, (int, float)):
        return value

    if isinstance(value, str):
        # Try int first
        try:
            return int(value)
        except ValueError:
            # Then try float
            try:
                return float(value)
            except ValueError:
                pass

    return value


def table_to_records(table: pd.DataFrame) -> List[Dict[str, Any]]:
    """
    Converts a DataFrame to JSON-ready rows; missing and infinite values become None.
    """
    usable = table.notna() & ~table.isin([np.inf, -np.inf])
    return table.astype(object).where(usable, None).to_dict(orient="records")
