"Formatting utilities for experiment reports."

from pathlib import Path
from typing import Optional

from rich.table import Table

from ..core.models import EstimateWithCI, ExperimentReport, Verdict


def _fmt(value: Optional[float]) -> str:
    if value is None:
        return "-"
    return f"{value:.6g}"


def _interval(estimate: EstimateWithCI) -> str:
    return f"[{estimate.lo:.6g}, {estimate.hi:.6g}]"


def verdict_counts(report: ExperimentReport) -> dict:
    """Count verdicts by outcome.

    Returns:
        Dict with ``total``, ``passed``, ``failed`` and ``failed_legs``
        (verdicts recorded for legs that raised)
    """
    failed = [v for v in report.verdicts if not v.passed]
    return {
        "total": len(report.verdicts),
        "passed": len(report.verdicts) - len(failed),
        "failed": len(failed),
        "failed_legs": len(report.failures),
    }


def format_report_markdown(
    report: ExperimentReport,
    max_series_rows: Optional[int] = 20,
) -> str:
    """Format an ExperimentReport as Markdown.

    Args:
        report: The report to format
        max_series_rows: Rows shown per series (None for all)

    Returns:
        Markdown-formatted string
    """
    counts = verdict_counts(report)
    status = "PASS" if report.passed else "FAIL"
    lines = [
        f"# Experiment: {report.kind}",
        "",
        f"**Status:** {status}",
        f"**Config hash:** `{report.config_hash}`",
        f"**Seed:** {report.seed}",
        f"**Model:** `{report.model_fingerprint or 'n/a'}`",
        "",
        "## Summary",
        "",
        f"- Verdicts: {counts['total']}",
        f"- Passed: {counts['passed']}",
        f"- Failed: {counts['failed']}",
        "",
    ]

    if report.parameters:
        lines.extend(["## Parameters", ""])
        for key, value in report.parameters.items():
            lines.append(f"- {key}: {value}")
        lines.append("")

    if report.estimates:
        lines.extend(
            [
                "## Estimates",
                "",
                "| Quantity | Value | 95% interval | Method | n |",
                "|----------|-------|--------------|--------|---|",
            ]
        )
        for name, est in report.estimates.items():
            lines.append(
                f"| {name} | {est.value:.6g} | {_interval(est)} | {est.method} | {est.n} |"
            )
        lines.append("")

    lines.extend(
        [
            "## Verdicts",
            "",
            "| Criterion | Quantity | Value | Target | Result |",
            "|-----------|----------|-------|--------|--------|",
        ]
    )
    for v in report.verdicts:
        lines.append(
            f"| {v.criterion} | {v.quantity} | {_fmt(v.value)} | {v.target} | "
            f"{'PASS' if v.passed else 'FAIL'} |"
        )
    lines.append("")

    if report.failures:
        lines.extend(["## Failures", ""])
        for failure in report.failures:
            lines.append(
                f"- **{failure.get('leg', '?')}** [{failure.get('code', 'error')}]: "
                f"{failure.get('message', '')}"
            )
        lines.append("")

    for name, columns in report.series.items():
        names = list(columns)
        if not names:
            continue
        n_rows = len(columns[names[0]])
        shown = n_rows if max_series_rows is None else min(n_rows, max_series_rows)
        lines.extend(
            [
                f"## Series: {name}",
                "",
                "| " + " | ".join(names) + " |",
                "|" + "|".join("---" for _ in names) + "|",
            ]
        )
        for i in range(shown):
            lines.append("| " + " | ".join(f"{columns[c][i]:.6g}" for c in names) + " |")
        if shown < n_rows:
            lines.append("")
            lines.append(f"*... and {n_rows - shown} more rows*")
        lines.append("")

    return "\n".join(lines)


def save_report_markdown(
    report: ExperimentReport,
    output_path: Path,
    max_series_rows: Optional[int] = 20,
) -> None:
    """Save an ExperimentReport as a Markdown file."""
    markdown = format_report_markdown(report, max_series_rows=max_series_rows)

    with open(output_path, "w", encoding="utf-8") as f:
        f.write(markdown)


def estimates_table(report: ExperimentReport) -> Table:
    table = Table(title="Estimates")
    table.add_column("Quantity", style="cyan")
    table.add_column("Value", justify="right")
    table.add_column("95% interval", justify="right")
    table.add_column("Method", style="dim")
    table.add_column("n", justify="right")
    for name, est in report.estimates.items():
        table.add_row(name, f"{est.value:.6g}", _interval(est), est.method, str(est.n))
    return table


def _verdict_row(v: Verdict) -> tuple[str, ...]:
    result = "[green]PASS[/green]" if v.passed else "[bold red]FAIL[/bold red]"
    return (v.criterion, v.quantity, _fmt(v.value), v.target, result)


def verdicts_table(report: ExperimentReport) -> Table:
    """Rich table with one row per verdict, failures highlighted."""
    table = Table(title=f"{report.kind} verdicts")
    table.add_column("Criterion", style="cyan")
    table.add_column("Quantity")
    table.add_column("Value", justify="right")
    table.add_column("Target")
    table.add_column("Result", justify="center")
    for v in report.verdicts:
        table.add_row(*_verdict_row(v))
    return table


def summary_table(report: ExperimentReport) -> Table:
    counts = verdict_counts(report)
    table = Table(title="Run Summary", show_header=False)
    table.add_column("Property", style="cyan")
    table.add_column("Value", style="white")
    table.add_row("Experiment", report.kind)
    table.add_row("Seed", str(report.seed))
    table.add_row("Config hash", report.config_hash[:12] + "...")
    if report.model_fingerprint:
        table.add_row("Model", report.model_fingerprint)
    table.add_row("Verdicts", str(counts["total"]))
    table.add_row("Passed", f"[green]{counts['passed']}[/green]")
    table.add_row("Failed", f"[red]{counts['failed']}[/red]")
    status = "[bold green]PASS[/bold green]" if report.passed else "[bold red]FAIL[/bold red]"
    table.add_row("Status", status)
    return table
