"""
Report rendering and run output files.

A MetricsReport renders as CSV, a fixed-width text table or JSON. Each table
has one row per interval plus a comparison row holding the percent change
from the wave interval to the best controlled interval.
"""

import json
import math
from pathlib import Path
from typing import Any, Dict, Optional

import pandas as pd

from .actuation import StepResponseRun
from .dataset import TrajectoryDataset
from .logger import get_logger
from .metrics import COMPARED_METRICS, MetricsReport
from .trajectory_io import export_csv, save_events, save_intervals
from .utils import save_text


# Initialize logger for this module
logger = get_logger(__name__)

REPORT_COLUMNS = [
    'interval', 't_start', 't_end', 'v_mean', 'v_std',
    'fuel_l_per_100km', 'braking_events_per_veh_km', 'throughput_veh_hr',
]
REPORT_FORMATS = ('csv', 'text', 'json')

TEXT_HEADINGS = {
    'interval': 'Interval',
    't_start': 'Time (s)',
    'v_mean': 'Mean v (m/s)',
    'v_std': 'Vel. std (m/s)',
    'fuel_l_per_100km': 'Fuel (l/100km)',
    'braking_events_per_veh_km': 'Braking (ev/veh/km)',
    'throughput_veh_hr': 'Throughput (veh/hr)',
}


class ReportError(Exception):
    """Raised for unknown report formats."""
    pass


# ─────────────────────────────────────────────────────────────────────────────
# TABLES
# ─────────────────────────────────────────────────────────────────────────────

def comparison_label(report: MetricsReport) -> str:
    return f"change_{report.wave_label}_to_{report.best_label}"


def report_frame(report: MetricsReport) -> pd.DataFrame:
    """Report rows as a DataFrame, comparison row last when present."""
    rows = [{key: row.to_dict()[key] for key in REPORT_COLUMNS} for row in report.rows]
    if report.comparison:
        comparison: Dict[str, Any] = {key: None for key in REPORT_COLUMNS}
        comparison['interval'] = comparison_label(report)
        comparison.update(report.comparison)
        rows.append(comparison)
    return pd.DataFrame(rows, columns=REPORT_COLUMNS)


def render_csv(report: MetricsReport) -> str:
    return report_frame(report).to_csv(index=False, float_format='%.6f', na_rep='', lineterminator='\n')


def _format_percent(value: Optional[float]) -> str:
    if value is None or (isinstance(value, float) and math.isnan(value)):
        return "n/a"
    return f"{value:+.1f}%"


def render_text(report: MetricsReport) -> str:
    """
    Fixed-width table in the layout of the published interval tables.

    Example output:
        Interval          Time (s)  Vel. std (m/s)  ...
        waves_start          79.0            3.31  ...
        change_waves_start_to_autonomy_7.50   -  -80.8%  ...
    """
    keys = list(TEXT_HEADINGS)
    width = {key: max(len(TEXT_HEADINGS[key]), 10) for key in keys}
    width['interval'] = max([len(row.interval) for row in report.rows] + [len('Interval')])
    if report.comparison:
        width['interval'] = max(width['interval'], len(comparison_label(report)))

    def line(cells: Dict[str, str]) -> str:
        return "  ".join(
            cells[key].ljust(width[key]) if key == 'interval' else cells[key].rjust(width[key])
            for key in keys
        ).rstrip()

    lines = [
        f"Summary metrics by interval (tau = {report.tau:.3f} m/s^2)",
        line(TEXT_HEADINGS),
        "-" * (sum(width.values()) + 2 * (len(keys) - 1)),
    ]
    for row in report.rows:
        lines.append(line({
            'interval': row.interval,
            't_start': f"{row.t_start:.1f}",
            'v_mean': f"{row.v_mean:.2f}",
            'v_std': f"{row.v_std:.2f}",
            'fuel_l_per_100km': f"{row.fuel_l_per_100km:.1f}",
            'braking_events_per_veh_km': f"{row.braking_events_per_veh_km:.2f}",
            'throughput_veh_hr': f"{row.throughput_veh_hr:.0f}",
        }))
    if report.comparison:
        cells = {'interval': comparison_label(report), 't_start': '-'}
        cells.update({key: _format_percent(report.comparison.get(key)) for key in COMPARED_METRICS})
        lines.append(line(cells))
    return "\n".join(lines) + "\n"


def _json_safe(value: Any) -> Any:
    if isinstance(value, float) and not math.isfinite(value):
        return None
    if isinstance(value, dict):
        return {key: _json_safe(item) for key, item in value.items()}
    if isinstance(value, list):
        return [_json_safe(item) for item in value]
    return value


def render_json(report: MetricsReport) -> str:
    return json.dumps(_json_safe(report.to_dict()), indent=2, default=str) + "\n"


def render_report(report: MetricsReport, fmt: str = 'text', path: Optional[Path] = None) -> str:
    """
    Render a report and optionally write it.

    Args:
        report: Metrics to render
        fmt: csv, text or json
        path: Destination file, if any

    Returns:
        Rendered content

    Raises:
        ReportError: For an unknown format
        OSError: If the file cannot be written
    """
    renderers = {'csv': render_csv, 'text': render_text, 'json': render_json}
    if fmt not in renderers:
        raise ReportError(f"Unknown report format {fmt!r}; use one of {', '.join(REPORT_FORMATS)}")
    content = renderers[fmt](report)
    if path is not None:
        save_text(content, Path(path))
    return content


# ─────────────────────────────────────────────────────────────────────────────
# OUTPUT FOLDERS
# ─────────────────────────────────────────────────────────────────────────────

def save_reports(report: MetricsReport, out_dir: Path) -> Dict[str, Path]:
    """Write report.csv, report.txt and report.json into out_dir."""
    out_dir = Path(out_dir)
    paths = {
        'csv': out_dir / "report.csv",
        'text': out_dir / "report.txt",
        'json': out_dir / "report.json",
    }
    for fmt, path in paths.items():
        render_report(report, fmt, path)
    return paths


def save_run_outputs(dataset: TrajectoryDataset, report: MetricsReport, out_dir: Path) -> Dict[str, Path]:
    """
    Everything a simulate run leaves behind: the trajectory, the applied
    events, the interval table and the three report renderings.
    """
    out_dir = Path(out_dir)
    paths = {
        'trajectory': export_csv(dataset, out_dir / "trajectory.csv"),
        'events': save_events(dataset.events, out_dir / "events.yaml"),
        'intervals': save_intervals(dataset.intervals, out_dir / "intervals.yaml"),
    }
    paths.update(save_reports(report, out_dir))
    logger.info(f"✓ Wrote run outputs to {out_dir}")
    return paths


def save_sweep_summary(table: pd.DataFrame, file_path: Path) -> Path:
    file_path = Path(file_path)
    file_path.parent.mkdir(parents=True, exist_ok=True)
    table.to_csv(file_path, index=False, float_format='%.6f', na_rep='', lineterminator='\n')
    logger.info(f"Saved sweep summary to {file_path}")
    return file_path


def save_step_trace(run: StepResponseRun, file_path: Path) -> Path:
    """Write time,velocity_mps,pedal,mode for a step-response run."""
    file_path = Path(file_path)
    file_path.parent.mkdir(parents=True, exist_ok=True)
    frame = pd.DataFrame({
        'time': run.time,
        'velocity_mps': run.velocity,
        'pedal': run.pedal,
        'mode': run.modes,
    })
    frame.to_csv(file_path, index=False, float_format='%.6f', lineterminator='\n')
    logger.info(f"Saved step-response trace to {file_path}")
    return file_path
