"""
Metrics Writer Module
Writes experiment tables as CSV, or as formatted Excel workbooks.
"""

from io import BytesIO
from pathlib import Path
from typing import Iterable, Optional, Union

import pandas as pd
from openpyxl import Workbook
from openpyxl.styles import Alignment, Border, Font, PatternFill, Side
from openpyxl.utils import get_column_letter

from .schema import METRICS_COLUMNS, MetricsRow


class MetricsWriter:
    """Converts metrics tables to CSV text or Excel workbooks."""

    def __init__(self, column_width: int = 14):
        """Initialize writer with header and border styles."""
        self.header_fill = PatternFill(start_color="4472C4", end_color="4472C4", fill_type="solid")
        self.header_font = Font(bold=True, color="FFFFFF", size=11)
        self.border = Border(
            left=Side(style="thin"),
            right=Side(style="thin"),
            top=Side(style="thin"),
            bottom=Side(style="thin"),
        )
        self.column_width = column_width

    def rows_to_dataframe(self, rows: Iterable[MetricsRow]) -> pd.DataFrame:
        """
        Build the metrics table with the fixed column order.

        Args:
            rows: Recorded emissions

        Returns:
            DataFrame with columns run, step, state, lo, hi, mean, width, update_ns
        """
        return pd.DataFrame([row.model_dump() for row in rows], columns=METRICS_COLUMNS)

    def write(self, frame: pd.DataFrame, output_path: Union[str, Path]) -> Path:
        """Write CSV, or a workbook when the path ends with ``.xlsx``."""
        path = Path(output_path)
        path.parent.mkdir(parents=True, exist_ok=True)
        if path.suffix.lower() == ".xlsx":
            self.dataframe_to_excel(frame, path)
        else:
            frame.to_csv(path, index=False)
        return path

    def dataframe_to_excel(
        self,
        frame: pd.DataFrame,
        output_path: Optional[Union[str, Path]] = None,
        title: str = "Metrics",
    ) -> BytesIO:
        """
        Render a table as a formatted workbook.

        Args:
            frame: Table to render; NaN cells are left empty
            output_path: Optional path to save the workbook
            title: Worksheet title

        Returns:
            BytesIO object containing the workbook
        """
        wb = Workbook()
        ws = wb.active
        ws.title = title

        ws.append([str(column) for column in frame.columns])
        self._format_header_row(ws, 1)

        for offset, record in enumerate(frame.itertuples(index=False), start=2):
            ws.append([None if pd.isna(value) else value for value in record])
            self._format_data_row(ws, offset)

        for index in range(1, len(frame.columns) + 1):
            ws.column_dimensions[get_column_letter(index)].width = self.column_width

        buffer = BytesIO()
        wb.save(buffer)
        buffer.seek(0)
        if output_path:
            wb.save(output_path)
        return buffer

    def _format_header_row(self, ws, row_num: int):
        for cell in ws[row_num]:
            cell.font = self.header_font
            cell.fill = self.header_fill
            cell.alignment = Alignment(horizontal="center", vertical="center")
            cell.border = self.border

    def _format_data_row(self, ws, row_num: int):
        for cell in ws[row_num]:
            cell.border = self.border
            cell.alignment = Alignment(horizontal="right", vertical="top")


