# utils/excel_utils.py

from io import BytesIO
from typing import List, Optional, Sequence

import openpyxl
import pandas as pd
from openpyxl.styles import Alignment, Border, Font, PatternFill, Side
from openpyxl.utils import get_column_letter


def missing_columns(table_columns, expected_columns) -> List[str]:
    """
    Expected columns absent from a table, in expected order.
    Names must match exactly; extra table columns are allowed.
    """
    present = {str(col).strip() for col in table_columns}
    return [col for col in expected_columns if col not in present]


def create_results_workbook(table: pd.DataFrame, title: str, columns: Optional[Sequence[str]] = None) -> BytesIO:
    """
    Creates a styled Excel workbook from a results table.

    Args:
        table: Results DataFrame (one row per grid cell and scheme)
        title: Title written above the header row
        columns: Columns to write, defaults to every column of the table

    Returns:
        BytesIO stream containing the Excel file
    """
    columns = list(columns) if columns is not None else list(table.columns)

    wb = openpyxl.Workbook()
    ws = wb.active
    ws.title = "Results"

    # Add title row
    last_letter = get_column_letter(max(len(columns), 1))
    ws.merge_cells(f"A1:{last_letter}1")
    title_cell = ws["A1"]
    title_cell.value = title
    title_cell.font = Font(bold=True, size=14)
    title_cell.alignment = Alignment(horizontal="center", vertical="center")

    # Define header styles
    header_fill = PatternFill(start_color="4472C4", end_color="4472C4", fill_type="solid")
    header_font = Font(color="FFFFFF", bold=True)
    border = Border(
        left=Side(border_style="thin"),
        right=Side(border_style="thin"),
        top=Side(border_style="thin"),
        bottom=Side(border_style="thin"),
    )

    # Write header row
    for col_idx, col_name in enumerate(columns, 1):
        cell = ws.cell(row=3, column=col_idx)
        cell.value = col_name
        cell.fill = header_fill
        cell.font = header_font
        cell.border = border
        cell.alignment = Alignment(horizontal="center", vertical="center", wrap_text=True)
        ws.column_dimensions[get_column_letter(col_idx)].width = max(10, min(30, len(col_name) + 4))

    # Blank cells for missing values
    records = table[columns].astype(object).where(table[columns].notna(), None)
    for row_idx, record in enumerate(records.itertuples(index=False), 4):
        for col_idx, value in enumerate(record, 1):
            cell = ws.cell(row=row_idx, column=col_idx)
            cell.value = value.item() if hasattr(value, "item") else value
            cell.border = border
            if isinstance(cell.value, float):
                cell.alignment = Alignment(horizontal="right")
                cell.number_format = "0.000000"

    ws.freeze_panes = "A4"

    # Save to BytesIO stream
    excel_stream = BytesIO()
    wb.save(excel_stream)
    excel_stream.seek(0)

    return excel_stream


def read_results_workbook(stream, expected_columns: Optional[Sequence[str]] = None) -> pd.DataFrame:
    """
    Reads a workbook written by create_results_workbook back into a DataFrame.

    Raises:
        ValueError: If any of ``expected_columns`` is missing from the header row
    """
    table = pd.read_excel(stream, header=2, engine="openpyxl")
    absent = missing_columns(table.columns, expected_columns or [])
    if absent:
        raise ValueError(f"workbook is missing columns: {', '.join(absent)}")
    return table
