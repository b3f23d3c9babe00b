import os
import sys
import time

import numpy as np
import pytest
from hypothesis import settings

sys.path.insert(0, os.path.dirname(__file__))

settings.register_profile("default", max_examples=60, deadline=None)
settings.load_profile("default")

# Acceptance lines collected by tests/test_acceptance.py, echoed at the end.
ACCEPTANCE_LINES: list[str] = []

REFERENCE_DETUNING = 0.8
REFERENCE_A = 0.35
# starting values for analysis, each within 20% of the generator value
PERTURBED_START = {
    "coherent_amplitude": 0.045,
    "fluorescence_upper_amplitude": 0.055,
}


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


def matched_template(model, mode="airy"):
    from raman_decoherence.scan import AnalysisTemplate

    start = dict(PERTURBED_START, fluorescence_upper_center=-0.94 * model.write_detuning)
    return AnalysisTemplate(model, etalon_mode=mode, initial=start)


@pytest.fixture(scope="session")
def reference_roundtrips():
    """100 seeded synthesize-and-analyze runs of the reference scan (shared)."""
    from raman_decoherence.scan import ScanConfig, analyze_scan, run_synthetic_scan
    from raman_decoherence.spectrum import default_paper_model

    model = default_paper_model(REFERENCE_DETUNING)
    cfg = ScanConfig(model)
    template = matched_template(model)
    t0 = time.perf_counter()
    reports = [analyze_scan(run_synthetic_scan(cfg.with_seed(seed)), template) for seed in range(100)]
    elapsed = time.perf_counter() - t0
    return {"reports": reports, "elapsed": elapsed, "model": model}


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
