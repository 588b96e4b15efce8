import numpy as np
import pytest


def fit_amplitude(x, rate_hz, freq_hz):
    """Least-squares amplitude of a sinusoid at ``freq_hz`` in ``x``."""
    t = np.arange(x.size) / rate_hz
    A = np.column_stack([np.sin(2 * np.pi * freq_hz * t), np.cos(2 * np.pi * freq_hz * t)])
    coef, *_ = np.linalg.lstsq(A, x, rcond=None)
    return float(np.hypot(*coef))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


ACCEPTANCE_TITLES = {
    1: "gradient check (FCN, LSTM, CNN)",
    2: "orientation fusion accuracy and drift",
    3: "filter and envelope conformance",
    4: "dataset and split structure",
    5: "head-fixed pipeline",
    6: "head-free input ordering",
    7: "degraded neck-EMG",
    8: "determinism and runtime",
    9: "SVM solver",
}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(n): acceptance criterion number")
    config._acceptance = {"outcome": {}, "notes": {}}


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    marks = [m.args[0] for m in item.iter_markers("criterion")]
    if not marks:
        return
    state = item.config._acceptance["outcome"]
    failed = rep.failed or (rep.skipped and rep.when == "call")
    for n in marks:
        if rep.when == "call" or failed:
            state[n] = state.get(n, True) and not failed


@pytest.fixture
def acceptance_note(request):
    """Record a measured value for the acceptance summary line."""
    marks = [m.args[0] for m in request.node.iter_markers("criterion")]
    notes = request.config._acceptance["notes"]

    def note(text):
        for n in marks:
            notes.setdefault(n, []).append(text)

    return note


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    state = config._acceptance
    if not state["outcome"]:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(state["outcome"]):
        verdict = "PASS" if state["outcome"][n] else "FAIL"
        line = f"ACCEPTANCE {n} {verdict}  {ACCEPTANCE_TITLES.get(n, '')}"
        notes = state["notes"].get(n)
        if notes:
            line += "  [" + "; ".join(notes) + "]"
        terminalreporter.write_line(line)
