import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from xxcascade.cascade import CascadeParams, ScanRow, time_integrated_dm
from xxcascade.fitting import FitReport
from xxcascade.formats import (
    FormatError,
    dumps_counts,
    dumps_histogram,
    dumps_reconstruction,
    dumps_scan,
    fit_report,
    loads_counts,
    loads_histogram,
    loads_reconstruction,
    loads_report,
    metrics_report,
)
from xxcascade.hardware import CoincidenceHistogram
from xxcascade.metrics import VisibilityTriple
from xxcascade.tomography import TomographyCounts, canonical_settings, mle_reconstruct, simulate_counts

from test_qcore import random_density_matrix


@given(st.lists(st.integers(0, 10**12), min_size=16, max_size=16), st.booleans())
@settings(max_examples=30, deadline=None)
def test_counts_round_trip(counts, with_exposure):
    exposure = np.linspace(0.5, 1.5, 16) if with_exposure else None
    data = TomographyCounts(canonical_settings(), np.array(counts), exposure)
    back = loads_counts(dumps_counts(data, {"seed": 3}))
    assert back.labels == data.labels
    assert np.array_equal(back.counts, data.counts)
    assert np.array_equal(back.exposure, data.exposure)


def test_counts_errors_carry_line_numbers():
    text = dumps_counts(simulate_counts(random_density_matrix(np.random.default_rng(0)), canonical_settings(), 100, seed=1))
    lines = text.splitlines()
    lines[4] = "HD;12"
    with pytest.raises(FormatError, match="line 5"):
        loads_counts("\n".join(lines))
    lines[4] = "HD,x"
    with pytest.raises(FormatError, match="line 5"):
        loads_counts("\n".join(lines))


def test_counts_need_sixteen_settings():
    with pytest.raises(FormatError):
        loads_counts("HH,1\nHV,2\n")


def test_histogram_round_trip():
    edges = np.linspace(-30, 30, 1201)
    h = CoincidenceHistogram(edges, np.arange(1200), 77)
    centers, counts, meta = loads_histogram(dumps_histogram(h, {"setting": "DD"}))
    np.testing.assert_allclose(centers, h.bin_centers, atol=5e-7)
    assert np.array_equal(counts, h.counts)
    assert meta == {"setting": "DD", "n_start_events": "77"}


def test_scan_fixed_format():
    text = dumps_scan([ScanRow(1.2, 0.9139999, 1.0)])
    assert text == "fss_ueV,fidelity,concurrence\n1.2,0.914,1\n"


def test_metrics_report_fields():
    rho = time_integrated_dm(CascadeParams(fss_ueV=1.2))
    rep = loads_report(metrics_report(rho, VisibilityTriple(1.0, 0.8, -0.8), {"note": "x"}))
    assert float(rep["fidelity_direct"]) == pytest.approx(0.914, abs=1e-3)
    assert float(rep["fidelity_visibilities"]) == pytest.approx(0.9)
    assert rep["note"] == "x"


def test_metrics_report_missing_inputs_are_nan():
    rep = loads_report(metrics_report())
    assert rep["concurrence"] == "nan" and rep["s_rd"] == "nan"


def test_fit_report():
    r = FitReport("m", ["a"], np.array([1.5]), np.array([0.25]), 1e-3, True, 4, ["pinned"])
    assert loads_report(fit_report(r)) == {
        "model": "m", "a": "1.5 +/- 0.25", "residual_rms": "0.001", "converged": "true",
        "iterations": "4", "note_0": "pinned",
    }


def test_reconstruction_round_trip():
    data = simulate_counts(random_density_matrix(np.random.default_rng(2)), canonical_settings(), 1e4, seed=3)
    rho, rep = mle_reconstruct(data)
    back, meta = loads_reconstruction(dumps_reconstruction(rho, rep))
    np.testing.assert_array_equal(back, rho)
    assert meta["likelihood"] == "poisson"
