"""Named analysis chains.  Each pipeline maps a config to ``{file name: text}``."""
from __future__ import annotations

from dataclasses import replace

import numpy as np

from . import formats
from .cascade import calibrate_background, fss_fidelity_scan, predicted_visibilities, time_integrated_dm
from .config import ExperimentConfig
from .fitting import FssScan, RabiCurve, fit_damped_rabi, fit_fss, fit_peak_cluster, fss_model, hom_visibility
from .metrics import VisibilityTriple, bell_parameters, fidelity_from_visibilities, visibility_from_histograms
from .rng import child_seed, substream
from .streams import (
    central_window_ns,
    cross_correlation,
    expected_hom_peak_ratio,
    g2_auto,
    g2_zero,
    hom_simulate,
    simulate_stream,
    tomography_counts_from_events,
)
from .tomography import MeasurementSetting, canonical_settings, linear_inversion, mle_reconstruct, simulate_counts


def _hist_meta(cfg: ExperimentConfig, setting: str, clock=None) -> dict:
    clock = clock or cfg.clock
    return {"experiment": cfg.experiment, "seed": cfg.seed, "n_cycles": clock.n_cycles, "setting": setting}


def cascade_scan(cfg: ExperimentConfig) -> dict[str, str]:
    grid = cfg.option("scan", "fss_grid_ueV")
    rows = fss_fidelity_scan(cfg.params, grid)
    rho = time_integrated_dm(replace(cfg.params, fss_ueV=grid[0]))
    return {
        "scan.csv": formats.dumps_scan(rows),
        "metrics.txt": formats.metrics_report(rho, predicted_visibilities(rho), {"fss_ueV": grid[0]}),
    }


def tomography(cfg: ExperimentConfig) -> dict[str, str]:
    params = cfg.params
    extra = {}
    target = cfg.option("tomography", "target_concurrence")
    if target is not None:
        beta = calibrate_background(params, target)
        params = replace(params, background_fraction=beta)
        extra["calibrated_background_fraction"] = beta
    source = cfg.option("tomography", "source")
    if source == "model":
        data = simulate_counts(
            time_integrated_dm(params), canonical_settings(), cfg.option("tomography", "n_per_setting"),
            child_seed(cfg.seed, "tomography", "counts"),
        )
    else:
        data = tomography_counts_from_events(
            params, cfg.clock, cfg.detector, child_seed(cfg.seed, "tomography", "events"), hist=cfg.hist
        )
    lin = linear_inversion(data)
    rho, report = mle_reconstruct(data)
    extra["linear_inversion_min_eigenvalue"] = lin.min_eigenvalue
    extra["mle_converged"] = str(report.converged).lower()
    return {
        "counts.txt": formats.dumps_counts(data, {"source": source, "seed": cfg.seed}),
        "reconstruction.txt": formats.dumps_reconstruction(rho, report),
        "metrics.txt": formats.metrics_report(rho, predicted_visibilities(rho), extra),
    }


def correlation_visibilities(cfg: ExperimentConfig, seed: int, workers: int = 1):
    """Six cross-correlation histograms, each from its own stream, and their visibilities."""
    labels = [s.strip() for s in cfg.option("correlation", "settings").split(",")]
    hists = {}
    for label in labels:
        stream = simulate_stream(cfg.params, cfg.clock, cfg.detector, child_seed(seed, "correlation", label), workers)
        hists[label] = cross_correlation(stream, MeasurementSetting(label), cfg.hist)
    w = central_window_ns(cfg.clock)
    vis = VisibilityTriple(*[
        visibility_from_histograms(hists[labels[i]], hists[labels[i + 1]], w) for i in (0, 2, 4)
    ])
    return hists, vis


def cross_correlation_pipeline(cfg: ExperimentConfig, workers: int = 1) -> dict[str, str]:
    hists, vis = correlation_visibilities(cfg, cfg.seed, workers)
    model = predicted_visibilities(time_integrated_dm(cfg.params))
    extra = {
        "window_ns": central_window_ns(cfg.clock),
        "model_fidelity_visibilities": fidelity_from_visibilities(model),
        "model_s_rd": bell_parameters(model).s_rd,
    }
    out = {f"hist_{k}.csv": formats.dumps_histogram(h, _hist_meta(cfg, k)) for k, h in hists.items()}
    out["metrics.txt"] = formats.metrics_report(None, vis, extra)
    return out


def hom(cfg: ExperimentConfig, workers: int = 1) -> dict[str, str]:
    line = cfg.option("hom", "line")
    v_in = cfg.option("hom", "v_in")
    stream = simulate_stream(cfg.params, cfg.clock, cfg.detector, child_seed(cfg.seed, "hom", "stream"), workers)
    sep = cfg.clock.pulse_pair_sep_ns
    centers = [-sep, 0.0, sep]
    out, peaks = {}, {}
    for pol in ("co", "cross"):
        h = hom_simulate(stream, cfg.beamsplitter, v_in, pol, cfg.hist, child_seed(cfg.seed, "hom", pol), line=line)
        pk, reports = fit_peak_cluster(h, centers, cfg.option("hom", "fit_half_window_ns"))
        peaks[pol] = pk
        out[f"hist_{pol}.csv"] = formats.dumps_histogram(h, _hist_meta(cfg, f"{line}-{pol}"))
        out[f"fit_{pol}.txt"] = "".join(
            f"# peak at {c:g} ns\n" + formats.fit_report(r) for c, r in zip(centers, reports)
        )
    vis = hom_visibility(peaks["co"], peaks["cross"], cfg.beamsplitter, sep)
    out["hom.txt"] = formats.report_text({
        "line": line,
        "v_in_configured": formats.fmt6(v_in),
        "v_raw": formats.fmt6(vis.v_raw),
        "v_corrected": formats.fmt6(vis.v_corrected),
        "clipped": str(vis.clipped).lower(),
        "correction_factor": formats.fmt6(vis.correction_factor),
        "expected_co_ratio": formats.fmt6(expected_hom_peak_ratio(cfg.beamsplitter, v_in, "co")),
    })
    return out


def g2(cfg: ExperimentConfig, workers: int = 1) -> dict[str, str]:
    line = cfg.option("g2", "line")
    stream = simulate_stream(cfg.params, cfg.clock, cfg.detector, child_seed(cfg.seed, "g2", "stream"), workers)
    h = g2_auto(stream, line, cfg.hist)
    value = g2_zero(h, cfg.clock.rep_period_ns, central_window_ns(cfg.clock))
    beta = cfg.params.background_fraction
    return {
        f"hist_g2_{line}.csv": formats.dumps_histogram(h, _hist_meta(cfg, line)),
        "g2.txt": formats.report_text({
            "line": line,
            "g2_zero": formats.fmt6(value),
            "background_oracle": formats.fmt6(beta * (2.0 - beta)),
        }),
    }


def rabi(cfg: ExperimentConfig, workers: int = 1) -> dict[str, str]:
    areas = np.asarray(cfg.option("rabi", "pulse_areas_pi"), dtype=float)
    pops = []
    for i, a in enumerate(areas):
        clock = replace(cfg.clock, pulse_area_pi=float(a))
        stream = simulate_stream(cfg.params, clock, cfg.detector, child_seed(cfg.seed, "rabi", i), workers)
        pops.append(len(stream) / stream.n_pulses)
    pops = np.array(pops)
    table = formats.dumps_table(["pulse_area_pi", "population"], zip(areas, pops))
    out = {"rabi.csv": table}
    try:
        out["fit.txt"] = formats.fit_report(fit_damped_rabi(RabiCurve(areas, pops)))
    except ValueError as exc:
        out["fit.txt"] = f"model: damped_rabi\nerror: {exc}\n"
    return out


def fss(cfg: ExperimentConfig) -> dict[str, str]:
    o = cfg.options["fss"]
    angles = np.linspace(0.0, 180.0, o["n_angles"], endpoint=False)
    rng = substream(cfg.seed, "fss", "noise")
    y = fss_model(angles, o["true_fss_ueV"], o["phase_deg"], o["offset_ueV"]) + o["noise_ueV"] * rng.standard_normal(len(angles))
    report = fit_fss(FssScan(angles, y))
    return {
        "fss_scan.csv": formats.dumps_table(["angle_deg", "delta_e_ueV"], zip(angles, y)),
        "fit.txt": formats.fit_report(report),
    }


def execute(cfg: ExperimentConfig, workers: int = 1) -> dict[str, str]:
    name = cfg.experiment
    if name == "cascade-scan":
        return cascade_scan(cfg)
    if name == "tomography":
        return tomography(cfg)
    if name == "cross-correlation":
        return cross_correlation_pipeline(cfg, workers)
    if name == "hom":
        return hom(cfg, workers)
    if name == "g2":
        return g2(cfg, workers)
    if name == "rabi":
        return rabi(cfg, workers)
    if name == "fss":
        return fss(cfg)
    raise ValueError(f"unknown experiment {name!r}")
