"""JSON summaries and plot-ready CSV sweeps."""

import csv
import json
import math
from collections.abc import Iterable, Sequence
from pathlib import Path

from loguru import logger
from pydantic import BaseModel

from fundsol.model import (
    CompactDecayAudit,
    DecompositionAudit,
    EnvelopeFit,
    EnvelopeSample,
    KernelValue,
    NormEstimate,
    RadialPhaseAudit,
    SharpnessReport,
    SigmaAudit,
)


def to_jsonable(value):
    """Pydantic models (and lists of them) as plain JSON data."""
    if isinstance(value, BaseModel):
        return to_jsonable(value.model_dump(mode="json"))
    if isinstance(value, list | tuple):
        return [to_jsonable(v) for v in value]
    if isinstance(value, dict):
        return {str(k): to_jsonable(v) for k, v in value.items()}
    if isinstance(value, float) and not math.isfinite(value):
        return str(value)
    return value


def write_json(path: Path, payload: dict) -> Path:
    """Write payload with sorted keys; identical payloads give identical bytes."""
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(to_jsonable(payload), sort_keys=True, indent=2) + "\n")
    logger.info(f"Wrote {path}")
    return path


def write_csv(path: Path, header: Sequence[str], rows: Iterable[Sequence]) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(header)
        writer.writerows([_cell(v) for v in row] for row in rows)
    logger.info(f"Wrote {path}")
    return path


def _cell(value):
    return repr(float(value)) if isinstance(value, float) else value


def _envelope_rows(samples: list[EnvelopeSample]) -> list[list]:
    return [[s.t, s.x_norm, s.modulus, s.envelope, s.ratio] for s in samples]


def _kernel_rows(values: list[KernelValue]) -> tuple[list[str], list[list]]:
    n = len(values[0].x) if values else 0
    header = ["t", *[f"x{i + 1}" for i in range(n)], "re", "im", "abs", "method", "error_estimate"]
    rows = [[v.t, *v.x, v.value.real, v.value.imag, v.modulus, v.method.value, v.error_estimate] for v in values]
    return header, rows


def _norm_rows(estimate: NormEstimate) -> list[list]:
    """(t, max ratio, predicted guide) with the guide anchored at the first usable time."""
    usable = [(t, r) for t, r in zip(estimate.t_grid, estimate.max_ratios, strict=True) if math.isfinite(r) and r > 0.0]
    anchor = usable[0] if usable else None
    rows = []
    for t, r in zip(estimate.t_grid, estimate.max_ratios, strict=True):
        guide = anchor[1] * (t / anchor[0]) ** estimate.predicted_exponent if anchor else math.nan
        rows.append([t, r, guide])
    return rows


def emit_plotdata(command: str, report, output_dir: Path) -> list[Path]:
    """Write the CSV sweeps of a finished command; returns the written paths.

    Each file has a header row; measured columns come with the envelope or prediction they are compared against.
    """
    stem = command.replace("-", "_")
    written = []
    match report:
        case SigmaAudit():
            rows = [[row.k, row.s, row.derivative, row.weighted] for row in report.rows]
            written.append(write_csv(output_dir / f"{stem}.csv", ["k", "s", "derivative", "weighted"], rows))
        case [RadialPhaseAudit(), *_]:
            rows = [[a.t, a.r, c.s, c.d_minus, c.lower, c.upper] for a in report for c in a.minus_slope_curve]
            written.append(write_csv(output_dir / f"{stem}.csv", ["t", "r", "s", "d_minus", "lower", "upper"], rows))
        case DecompositionAudit():
            rows = [[x.lam, abs(x.phi), abs(x.psi_plus), abs(x.psi_minus), abs(x.psi0)] for x in report.samples]
            header = ["lambda", "abs_phi", "abs_psi_plus", "abs_psi_minus", "abs_psi0"]
            written.append(write_csv(output_dir / f"{stem}.csv", header, rows))
        case [KernelValue(), *_]:
            header, rows = _kernel_rows(report)
            written.append(write_csv(output_dir / f"{stem}.csv", header, rows))
        case EnvelopeFit() | CompactDecayAudit():
            header = ["t", "x_norm", "abs_I", "envelope", "ratio"]
            written.append(write_csv(output_dir / f"{stem}.csv", header, _envelope_rows(report.samples)))
        case SharpnessReport():
            rows = [[s.x_norm, s.modulus, s.envelope] for s in report.samples]
            written.append(write_csv(output_dir / f"{stem}.csv", ["x_norm", "abs_I", "guide"], rows))
        case NormEstimate():
            written.append(write_csv(output_dir / f"{stem}.csv", ["t", "max_ratio", "predicted"], _norm_rows(report)))
        case _:
            logger.debug(f"No plot data for {command}")
    return written
