import pytest

from profrisk import SynthConfig, eval_similarity, fit_logistic, prepare_training, synthesize_dataset

_criteria: dict[int, tuple[str, str]] = {}


def record_criterion(number: int, passed: bool, detail: str):
    _criteria[number] = ("PASS" if passed else "FAIL", detail)


@pytest.fixture(scope="session")
def criterion():
    return record_criterion


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    num = getattr(item.function, "criterion", None)
    if num is not None and rep.when == "call" and num not in _criteria:
        _criteria[num] = ("PASS" if rep.passed else "FAIL", rep.longreprtext.splitlines()[-1] if rep.failed else "")
    elif num is not None and rep.when == "call" and rep.failed and _criteria[num][0] == "PASS":
        _criteria[num] = ("FAIL", _criteria[num][1])


def pytest_terminal_summary(terminalreporter):
    if not _criteria:
        return
    terminalreporter.section("acceptance criteria")
    for num in sorted(_criteria):
        status, detail = _criteria[num]
        terminalreporter.write_line(f"criterion {num:2d}: {status}  {detail}")


@pytest.fixture(scope="session")
def default_run():
    """Default synthetic dataset, trained weights and the 500x500 evaluation matrix."""
    ds = synthesize_dataset(SynthConfig())
    data, stats = prepare_training(ds)
    w = fit_logistic(data)
    R = eval_similarity(ds, w, stats)
    return ds, w, stats, R
