"""
Test script for the inversion workflow
Validates the graph stages, the stopping rule and recovery on manufactured cases
"""
import dataclasses
import logging

import numpy as np
import pytest
from pydantic import ValidationError

from src.errors import ParameterError
from src.schemas import Regime, RunConfig, SubcommandEnum
from src.verify import manufactured_case, relative_h_error
from src.workflow import run_inversion, solve_inverse

logging.basicConfig(level=logging.INFO)
logger = logging.getLogger(__name__)


def _numerical(case_id: str, nt: int, nx: int):
    case = manufactured_case(case_id, nt=nt, nx=nx)
    return case, dataclasses.replace(case.spec, prefer_analytic=False)


def test_schema_validation():
    """Test run configuration schema"""
    logger.info("Testing schema validation...")

    config = RunConfig(subcommand="invert", case="MMS-1", alpha=0.7)
    assert config.subcommand == SubcommandEnum.INVERT
    assert config.epsilon == 0.5
    assert config.tol == 1e-10
    assert config.max_iter == 60

    with pytest.raises(ValidationError, match=r"alpha must lie in \(0,1\)"):
        RunConfig(subcommand="invert", alpha=1.5)
    with pytest.raises(ValidationError, match=r"l0 must lie in \(0,pi\)"):
        RunConfig(subcommand="invert", l0=0.0)
    with pytest.raises(ValidationError):
        RunConfig(subcommand="invert", unknown_key=1)
    logger.info("✓ Schema validation passed")


def test_zero_data():
    """Zero data recover a zero source and a zero solution"""
    logger.info("Testing zero data...")
    _, spec = _numerical("MMS-0", 33, 33)
    state, recovered, report = solve_inverse(spec)

    assert float(np.max(np.abs(recovered.h))) <= 1e-12
    assert float(np.max(np.abs(state.values))) <= 1e-12
    assert report.converged
    assert report.iterations == 1
    assert report.ratios == [None]
    logger.info("✓ Zero data give h = 0")


def test_manufactured_recovery():
    """MMS-1: relative h error below 1e-2, at least halved by one grid doubling"""
    logger.info("Testing recovery on MMS-1...")
    errors = []
    for n in (65, 129):
        case, spec = _numerical("MMS-1", n, n)
        state, recovered, report = solve_inverse(spec)
        assert report.converged
        assert report.iterations <= 40
        errors.append(relative_h_error(case, recovered.h, spec))
        logger.info(f"✓ n={n}: relative h error {errors[-1]:.3e} after {report.iterations} iterations")

    assert errors[0] <= 1e-2
    assert errors[1] <= 0.5 * errors[0]


def test_geometric_contraction():
    """Weighted increments shrink at least by 0.6 per iteration"""
    logger.info("Testing contraction ratios...")
    _, spec = _numerical("MMS-1", 65, 65)
    outcome = run_inversion(spec)
    report = outcome.report

    assert report.regime == Regime.PROVEN
    assert report.condition_value <= 1.0
    assert report.ratios[0] is None
    measured = [r for r in report.ratios[1:] if r is not None]
    assert measured
    assert all(r <= 0.6 for r in measured)
    assert report.max_ratio == pytest.approx(max(measured))
    assert report.terminal_increment <= report.tol ** 2
    logger.info(f"✓ max ratio {report.max_ratio:.3e}")


def test_report_diagnostics():
    """Per-iterate bounds, envelope and distances to the final iterate"""
    _, spec = _numerical("MMS-1", 33, 33)
    outcome = run_inversion(spec)
    report = outcome.report
    n = report.iterations

    assert len(report.increments) == n
    assert len(report.state_norms) == n
    assert len(report.iterate_bounds) == n
    assert len(report.distance_to_final) == n
    assert report.fundamental_bounds[0] is None
    assert report.distance_to_final[-1] == 0.0
    A0 = outcome.constants.A0
    assert report.iterate_bounds[0] == pytest.approx(A0)
    assert all(norm <= bound for norm, bound in zip(report.state_norms, report.iterate_bounds))

    assert len(report.iterate_bound_margins) == n and len(report.iterate_bound_holds) == n
    assert all(report.iterate_bound_holds)
    for norm, bound, margin in zip(report.state_norms, report.iterate_bounds, report.iterate_bound_margins):
        assert margin == pytest.approx(bound - norm)

    assert len(report.fundamental_bound_margins) == n and len(report.fundamental_bound_holds) == n
    assert report.fundamental_bound_margins[0] is None
    assert report.fundamental_bound_holds[0] is None
    assert report.fundamental_bounds[1] == pytest.approx(A0)
    for step in range(1, n):
        envelope = A0 * 0.5 ** (step - 1)
        assert report.fundamental_bounds[step] == pytest.approx(envelope)
        assert report.fundamental_bound_margins[step] == pytest.approx(envelope - report.increments[step])
        assert report.fundamental_bound_holds[step] is True
    logger.info(f"✓ smallest iterate margin {min(report.iterate_bound_margins):.3e}")


def test_iterates_on_request():
    """Iterates are handed back only when asked for; distances are reported either way"""
    _, spec = _numerical("MMS-1", 17, 17)
    plain = run_inversion(spec)
    assert plain.iterates == []
    assert len(plain.report.distance_to_final) == plain.report.iterations

    kept = run_inversion(spec, keep_iterates=True)
    assert len(kept.iterates) == kept.report.iterations
    assert kept.iterates[-1] is kept.state or np.array_equal(kept.iterates[-1].values, kept.state.values)
    assert kept.report.distance_to_final == plain.report.distance_to_final
    logger.info(f"✓ {len(kept.iterates)} iterates kept on request")


def test_execution_log():
    """Test execution logging"""
    logger.info("Testing execution logging...")
    _, spec = _numerical("MMS-1", 17, 17)
    outcome = run_inversion(spec)

    assert len(outcome.execution_log) == outcome.report.iterations + 3
    for log_entry in outcome.execution_log:
        assert log_entry.timestamp is not None
        assert log_entry.stage is not None
        assert log_entry.action is not None
        assert log_entry.details is not None
    stages = [entry.stage for entry in outcome.execution_log]
    assert stages[0] == "PREPARE"
    assert stages[-2:] == ["RECONSTRUCT", "REPORT"]
    assert outcome.method_selections == {"psi_caputo": "numerical", "psi_xx": "numerical"}
    logger.info(f"✓ Execution log validated: {len(outcome.execution_log)} entries")


def test_iteration_budget():
    """Running out of iterations is a report status, not an error"""
    _, spec = _numerical("MMS-1", 17, 17)
    state, recovered, report = solve_inverse(spec, max_iter=2)
    assert not report.converged
    assert report.iterations == 2
    assert recovered.h.shape == (17, 17)

    with pytest.raises(ParameterError):
        solve_inverse(spec, tol=0.0)
    with pytest.raises(ParameterError):
        solve_inverse(spec, max_iter=0)


def run_all_tests():
    """Run all tests"""
    print("\n" + "=" * 80)
    print("  FRACSOURCE INVERSION WORKFLOW - TEST SUITE")
    print("=" * 80)

    tests = [
        ("Schema Validation", test_schema_validation),
        ("Zero Data", test_zero_data),
        ("Manufactured Recovery", test_manufactured_recovery),
        ("Geometric Contraction", test_geometric_contraction),
        ("Report Diagnostics", test_report_diagnostics),
        ("Iterates On Request", test_iterates_on_request),
        ("Execution Logging", test_execution_log),
        ("Iteration Budget", test_iteration_budget),
    ]

    passed = 0
    failed = 0

    for test_name, test_func in tests:
        try:
            print(f"\n[TEST] {test_name}")
            test_func()
            passed += 1
        except Exception as e:
            print(f"✗ {test_name} FAILED: {str(e)}")
            logger.error(f"Test failed: {e}", exc_info=True)
            failed += 1

    # Summary
    print("\n" + "=" * 80)
    print(f"  TEST SUMMARY: {passed} passed, {failed} failed")
    print("=" * 80)

    return failed == 0


if __name__ == "__main__":
    success = run_all_tests()
    exit(0 if success else 1)
