"""Display module for formatting experiment reports."""

from .formatting import (
    estimates_table,
    format_report_markdown,
    save_report_markdown,
    summary_table,
    verdict_counts,
    verdicts_table,
)

__all__ = [
    "estimates_table",
    "format_report_markdown",
    "save_report_markdown",
    "summary_table",
    "verdict_counts",
    "verdicts_table",
]
