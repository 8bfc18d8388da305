"""
Formatters package for CSV exports and markdown run reports.
"""

from .report_writer import (
    checks_passed,
    format_checks,
    generate_run_report,
    save_report,
    write_frame_errors,
    write_projection,
    write_recognition_trace,
    write_table,
    write_training_log,
)

__all__ = [
    "checks_passed",
    "format_checks",
    "generate_run_report",
    "save_report",
    "write_frame_errors",
    "write_projection",
    "write_recognition_trace",
    "write_table",
    "write_training_log",
]
