import numpy as np

from autodiff import ops
from autodiff.tensor import Tensor
from relibev.selftest import (
    GradCase,
    corner_checks,
    module_cases,
    run_grad_case,
    run_selftest,
)


def wrong_square(x):
    if x.tape is None:
        return Tensor(x.values**2)
    return x.tape.record(x.values**2, (x.grad_id,), lambda g: (g * x.values,))


def test_full_selftest_passes():
    report = run_selftest()
    assert report.passed, report.render()
    modules = set(report.per_module_max())
    assert {"tensor-autodiff", "stfa", "bev-encode", "reliability", "cwmca-head"} <= modules
    assert "pipeline" in modules


def test_module_gradients_pass_individually():
    for case in module_cases():
        result = run_grad_case(case)
        assert result.passed, (case.name, result.max_rel_error)


def test_corner_checks_pass():
    assert all(r.passed for r in corner_checks())


def test_wrong_gradient_is_named_in_the_report():
    broken = GradCase(
        "broken_square",
        "tensor-autodiff",
        lambda x: ops.sum(wrong_square(x)),
        [np.array([1.0, -2.0, 0.5])],
    )
    report = run_selftest(extra_cases=[broken], include_pipeline=False)
    assert not report.passed
    assert [(r.module, r.name) for r in report.failures] == [("tensor-autodiff", "broken_square")]
    assert report.per_module_max()["tensor-autodiff"] >= 0.5
    assert "FAIL" in report.render()


def test_numeric_failure_becomes_a_failed_check():
    case = GradCase(
        "log_of_negative", "tensor-autodiff", lambda x: ops.sum(ops.log(x)), [-np.ones(2)]
    )
    result = run_grad_case(case)
    assert not result.passed
    assert "NumericError" in result.detail
