import pytest

from nepcap import _kernels as K

BACKENDS = ["python"] + (["cython"] if K.compiled_available() else [])


@pytest.fixture(params=BACKENDS)
def backend(request, monkeypatch):
    """Run the test once per available kernel backend."""
    monkeypatch.setattr(K, "_impl", K.get_backend(request.param))
    return request.param


# -- acceptance verdicts ------------------------------------------------------------------------

_VERDICTS = {}


def pytest_runtest_logreport(report):
    if "test_acceptance.py::test_criterion_" not in report.nodeid:
        return
    if report.when == "call" or (report.when == "setup" and report.outcome != "passed"):
        number = int(report.nodeid.split("test_criterion_")[1].split("_")[0])
        ok = report.outcome == "passed" and not hasattr(report, "wasxfail")
        detail = dict(report.user_properties).get("detail", "")
        # parametrized criteria pass only if every variant passes
        previous = _VERDICTS.get(number)
        if previous is not None:
            ok = ok and previous[0] == "PASS"
            detail = f"{previous[1]}; {detail}"
        _VERDICTS[number] = ("PASS" if ok else "FAIL", detail)


def pytest_terminal_summary(terminalreporter):
    if not _VERDICTS:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_VERDICTS):
        verdict, detail = _VERDICTS[number]
        terminalreporter.write_line(f"criterion {number}: {verdict}  {detail}".rstrip())
