# utils/export_utils.py
import logging
from pathlib import Path
from typing import List, Optional, Sequence

import pandas as pd

from services.experiment_service import CSV_COLUMNS
from utils.excel_utils import create_results_workbook, missing_columns

logger = logging.getLogger(__name__)

FORMATS = ("csv", "plot-script", "xlsx")

PLOT_TEMPLATE = '''"""Rate curves from {csv_name}; run with matplotlib installed."""
import matplotlib.pyplot as plt
import pandas as pd

table = pd.read_csv("{csv_name}")
x_column = "{x_column}"
label_columns = {label_columns!r}

fig, ax = plt.subplots()
for keys, group in table.groupby(label_columns):
    group = group.sort_values(x_column)
    label = " ".join(str(k) for k in (keys if isinstance(keys, tuple) else (keys,)))
    ax.errorbar(group[x_column], group["mean_bits"], yerr=group["stderr"], marker="o", capsize=3, label=label)
ax.set_xlabel("{x_label}")
ax.set_ylabel("ergodic sum-rate [bits/s/Hz]")
ax.grid(True)
ax.legend()
fig.savefig("{png_name}", dpi=150, bbox_inches="tight")
'''


def export_columns(table: pd.DataFrame) -> List[str]:
    """Fixed result columns when the table has them, otherwise the table's own."""
    if not missing_columns(table.columns, CSV_COLUMNS):
        return list(CSV_COLUMNS)
    return list(table.columns)


def to_csv_text(table: pd.DataFrame, columns: Optional[Sequence[str]] = None) -> str:
    columns = list(columns) if columns is not None else export_columns(table)
    return table.to_csv(columns=columns, index=False, lineterminator="\n", float_format="%.10g")


def plot_script_text(table: pd.DataFrame, csv_name: str) -> str:
    """
    Builds a matplotlib script that draws rate curves from an emitted CSV.

    Rate vs SNR when every row shares one t pair, otherwise rate vs t with one
    curve per (scheme, snr_db).
    """
    if table["t_mag_A"].nunique() > 1:
        x_column, x_label, label_columns = "t_mag_A", "|t|", ["scheme", "snr_db"]
    else:
        x_column, x_label, label_columns = "snr_db", "SNR [dB]", ["scheme"]
    return PLOT_TEMPLATE.format(
        csv_name=csv_name,
        x_column=x_column,
        x_label=x_label,
        label_columns=label_columns,
        png_name=Path(csv_name).with_suffix(".png").name,
    )


def emit(table: pd.DataFrame, fmt: str, out_dir, stem: str) -> List[Path]:
    """
    Writes a result table to ``out_dir``.

    Args:
        table: Result table (run_scenario) or any check/trace table
        fmt: "csv", "plot-script" (CSV plus plot_<stem>.py) or "xlsx"
        out_dir: Output directory, created if missing
        stem: File name stem

    Returns:
        Paths written
    """
    if fmt not in FORMATS:
        raise ValueError(f"unknown format {fmt!r}, expected one of {FORMATS}")
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    written: List[Path] = []

    if fmt in ("csv", "plot-script"):
        csv_path = out_dir / f"{stem}.csv"
        with open(csv_path, "w", encoding="utf-8", newline="") as handle:
            handle.write(to_csv_text(table))
        written.append(csv_path)

    if fmt == "plot-script":
        absent = missing_columns(table.columns, CSV_COLUMNS)
        if absent:
            raise ValueError(f"plot scripts need a result table, missing {absent}")
        script_path = out_dir / f"plot_{stem}.py"
        script_path.write_text(plot_script_text(table, f"{stem}.csv"), encoding="utf-8")
        written.append(script_path)

    if fmt == "xlsx":
        xlsx_path = out_dir / f"{stem}.xlsx"
        stream = create_results_workbook(table, stem, export_columns(table))
        xlsx_path.write_bytes(stream.getvalue())
        written.append(xlsx_path)

    for path in written:
        logger.info("wrote %s", path)
    return written
