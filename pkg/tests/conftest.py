import pytest

from psc.model import AttackFamily, AttackRecord, MetricKind, Mode, RunContext

CTX = RunContext("mnist", "cnn4", Mode.UNTARGETED, AttackFamily.GRADIENT)


def rec(method="m", param_set="p0", context=CTX, **measurements):
    return AttackRecord(method, param_set, context, {MetricKind(k): v for k, v in measurements.items()})


@pytest.fixture
def ctx():
    return CTX


_ACCEPTANCE = {
    "test_sampling_oracle": "sampling oracle (1000 sets, < 10 s)",
    "test_fit_interpolation": "fit interpolation (500 trials, 1e-6, < 5 s)",
    "test_auc_exactness": "AUC exactness (200 pairs, 1e-9 rel; polyline = 150, < 5 s)",
    "test_constraint_enforcement": "constraint enforcement (r, d <= 10)",
    "test_crossing_phenomenon": "crossing phenomenon (one crossing within 0.05 of 1.5, < 10 s)",
    "test_underfit_phenomenon": "underfit phenomenon (d = 3 violates, d = 5 does not, < 5 s)",
    "test_resolution_sweep": "resolution sweep (non-increasing error over r = 5, 10, 20)",
    "test_registry_round_trip_and_atomicity": "registry round trip and atomicity",
    "test_determinism": "determinism (report, SVG, simgen)",
    "test_cli_contract": "CLI contract (exit codes, golden rank table)",
}
_outcomes = {}


def pytest_runtest_logreport(report):
    name = report.nodeid.rsplit("::", 1)[-1]
    if "test_acceptance.py" not in report.nodeid or name not in _ACCEPTANCE:
        return
    if report.failed:
        _outcomes[name] = "failed"
    elif report.when == "call":
        _outcomes.setdefault(name, "passed")


def pytest_terminal_summary(terminalreporter):
    if not _outcomes:
        return
    terminalreporter.section("acceptance")
    for name, label in _ACCEPTANCE.items():
        if name in _outcomes:
            verdict = "PASS" if _outcomes[name] == "passed" else "FAIL"
            terminalreporter.write_line(f"{verdict}  {label}")
