"""Plain-text artifact formats.

All writers return strings with ``\\n`` line endings and fixed float formats,
so identical inputs give byte-identical files.
"""
from __future__ import annotations

import numpy as np

from .cascade import ScanRow
from .fitting import FitReport
from .hardware import CoincidenceHistogram
from .metrics import (
    bell_parameters,
    concurrence,
    dominant_eigenstate,
    fidelity_from_visibilities,
    fidelity_to_psi_plus,
    VisibilityTriple,
)
from .qcore import dumps_density_matrix, loads_density_matrix
from .tomography import MLEReport, TomographyCounts


class FormatError(ValueError):
    pass


def fmt6(x: float) -> str:
    return f"{x:.6g}"


# -- tomography counts ---------------------------------------------------------

def dumps_counts(data: TomographyCounts, comments: dict | None = None) -> str:
    lines = [f"# {k}: {v}" for k, v in (comments or {}).items()]
    with_exposure = np.any(data.exposure != 1.0)
    for s, k, e in zip(data.settings, data.counts, data.exposure):
        lines.append(f"{s.label},{int(k)},{e:.17g}" if with_exposure else f"{s.label},{int(k)}")
    return "\n".join(lines) + "\n"


def loads_counts(text: str) -> TomographyCounts:
    labels, counts, exposure = [], [], []
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        parts = [p.strip() for p in line.split(",")]
        if len(parts) not in (2, 3):
            raise FormatError(f"line {lineno}: expected label,count[,exposure], got {raw!r}")
        try:
            k = int(parts[1])
            e = float(parts[2]) if len(parts) == 3 else 1.0
        except ValueError as exc:
            raise FormatError(f"line {lineno}: {exc}") from exc
        labels.append(parts[0])
        counts.append(k)
        exposure.append(e)
    try:
        return TomographyCounts(tuple(labels), np.array(counts), np.array(exposure))
    except ValueError as exc:
        raise FormatError(str(exc)) from exc


# -- histograms and tables -----------------------------------------------------

def dumps_histogram(hist: CoincidenceHistogram, meta: dict) -> str:
    lines = [f"# {k}: {v}" for k, v in meta.items()]
    lines.append(f"# n_start_events: {hist.n_start_events}")
    lines.append("bin_center_ns,counts")
    for c, k in zip(hist.bin_centers, hist.counts):
        lines.append(f"{c:.6f},{int(k)}")
    return "\n".join(lines) + "\n"


def loads_histogram(text: str) -> tuple[np.ndarray, np.ndarray, dict[str, str]]:
    """Returns (bin centers, counts, metadata)."""
    meta, centers, counts = {}, [], []
    for raw in text.splitlines():
        if raw.startswith("#"):
            key, _, value = raw[1:].partition(":")
            meta[key.strip()] = value.strip()
        elif raw and raw != "bin_center_ns,counts":
            c, k = raw.split(",")
            centers.append(float(c))
            counts.append(int(k))
    return np.array(centers), np.array(counts, dtype=np.int64), meta


def dumps_scan(rows: list[ScanRow]) -> str:
    lines = ["fss_ueV,fidelity,concurrence"]
    lines += [f"{fmt6(r.fss_ueV)},{fmt6(r.fidelity)},{fmt6(r.concurrence)}" for r in rows]
    return "\n".join(lines) + "\n"


def dumps_table(header: list[str], rows) -> str:
    lines = [",".join(header)]
    lines += [",".join(fmt6(float(v)) for v in row) for row in rows]
    return "\n".join(lines) + "\n"


# -- reports -------------------------------------------------------------------

def report_text(fields: dict) -> str:
    return "".join(f"{k}: {v}\n" for k, v in fields.items())


def metrics_report(rho=None, visibilities: VisibilityTriple | None = None, extra: dict | None = None) -> str:
    """Figures of merit; entries that need the missing input are written as ``nan``."""
    nan = float("nan")
    out = dict.fromkeys(
        ["concurrence", "fidelity_direct", "fidelity_visibilities", "s_rc", "s_dc", "s_rd", "top_eigenvalue", "alpha"], nan
    )
    if rho is not None:
        dom = dominant_eigenstate(rho)
        out.update(
            concurrence=concurrence(rho),
            fidelity_direct=fidelity_to_psi_plus(rho),
            top_eigenvalue=dom.eigenvalue,
            alpha=nan if dom.alpha is None else dom.alpha,
        )
    if visibilities is not None:
        bell = bell_parameters(visibilities)
        out.update(
            fidelity_visibilities=fidelity_from_visibilities(visibilities),
            s_rc=bell.s_rc, s_dc=bell.s_dc, s_rd=bell.s_rd,
            c_linear=visibilities.c_linear, c_diagonal=visibilities.c_diagonal, c_circular=visibilities.c_circular,
        )
    out.update(extra or {})
    return report_text({k: fmt6(v) if isinstance(v, float) else v for k, v in out.items()})


def loads_report(text: str) -> dict[str, str]:
    out = {}
    for raw in text.splitlines():
        if raw and not raw.startswith("#"):
            key, _, value = raw.partition(":")
            out[key.strip()] = value.strip()
    return out


def fit_report(report: FitReport) -> str:
    fields = {"model": report.model}
    for name, v, e in zip(report.names, report.values, report.std_errors):
        fields[name] = f"{fmt6(v)} +/- {fmt6(e)}"
    fields["residual_rms"] = fmt6(report.residual_rms)
    fields["converged"] = str(bool(report.converged)).lower()
    fields["iterations"] = report.iterations
    for i, note in enumerate(report.notes):
        fields[f"note_{i}"] = note
    return report_text(fields)


def dumps_reconstruction(rho, report: MLEReport) -> str:
    return dumps_density_matrix(rho, report.as_dict())


def loads_reconstruction(text: str):
    return loads_density_matrix(text)
