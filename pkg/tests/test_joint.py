import numpy as np
import pytest

from phasemeter import joint
from phasemeter.errors import AccuracyError, ValidationError
from phasemeter.fock import displace, make_number_state
from phasemeter.phasespace import CoherentLabel, Region, coherent_fock_coefficients, fidelity_with_pure, husimi_q, l1_distance


def analytic_product(s1, s2, kappa=1.0):
    dx2 = s1**2 / kappa**2 + kappa**2 / (16 * s2**2)
    dp2 = s2**2 / kappa**2 + kappa**2 / (16 * s1**2)
    return np.sqrt(dx2 * dp2)


# ---------------------------------------------------------------- configuration


def test_optimal_widths():
    assert joint.optimal_widths(2.0, 1.0) == (1.0, 0.25)
    assert joint.optimal_widths(1.0, 3.0) == (1.5, 1.5)


def test_config_validation_names_field():
    with pytest.raises(ValidationError, match="pointer_width1"):
        joint.MeasurementConfig(-1.0, 0.5)
    with pytest.raises(ValidationError, match="coupling"):
        joint.MeasurementConfig(0.5, 0.5, coupling=-1)
    with pytest.raises(ValidationError):
        joint.MeasurementConfig(0.5, 0.5, profile="huge")


def test_grid_spec_validation():
    with pytest.raises(ValidationError):
        joint.GridSpec((4, 64, 64), (5.0, 5.0, 5.0))
    with pytest.raises(ValidationError):
        joint.GridSpec((64, 64, 64), (5.0, -1.0, 5.0))
    g = joint.GridSpec((10, 10, 10), (1.0, 2.0, 3.0))
    assert g.step(1) == pytest.approx(0.4)
    assert g.axis(0)[0] == -1.0 and g.axis(0).size == 10


def test_under_resolved_pointer_rejected():
    cfg = joint.optimal_config(1.0, grid=joint.GridSpec((160, 32, 160), (14.2, 10.0, 10.0)))
    with pytest.raises(ValidationError, match="resolution"):
        joint.build_process(cfg)


def test_too_small_extent_rejected():
    cfg = joint.optimal_config(1.0, grid=joint.GridSpec((160, 160, 160), (4.0, 10.0, 10.0)))
    with pytest.raises(ValidationError, match="widths"):
        joint.build_process(cfg)


def test_config_to_dict_has_grid():
    d = joint.optimal_config(1.0).to_dict()
    assert d["grid"]["points"] == [160, 160, 160]
    assert d["pointer_width1"] == 0.5


# ---------------------------------------------------------------- propagation


def test_unitary_round_trip(optimal_process):
    rng = np.random.default_rng(0)
    shape = tuple(optimal_process.grid.points)
    v = joint._product(optimal_process, joint.system_wavefunction(optimal_process, make_number_state(2, 16)))
    v = v * (1 + 0.01 * rng.standard_normal(shape))
    back = optimal_process.apply_unitary(optimal_process.apply_unitary(v.copy()), inverse=True)
    assert np.max(np.abs(back - v)) < 1e-12


def test_vacuum_readout_is_husimi(optimal_process):
    s = make_number_state(0, 16)
    J = joint.evolve(optimal_process, s)
    assert J.norm == pytest.approx(1.0, abs=1e-12)
    rho = joint.pointer_distribution(J)
    q = husimi_q(s, optimal_process.mu_x, optimal_process.mu_p)
    assert l1_distance(rho, q) < 1e-10


def test_state_off_grid_raises(optimal_process):
    with pytest.raises(AccuracyError):
        joint.evolve(optimal_process, displace(make_number_state(0, 200), 13.0, 0.0))


def test_zero_coupling_reads_pointers_only():
    cfg = joint.MeasurementConfig(0.5, 0.5, coupling=0.0, grid=joint.GridSpec((64, 96, 96), (8.0, 6.0, 6.0)))
    proc = joint.build_process(cfg)
    assert proc.calibration == 1.0
    rho = joint.pointer_distribution(joint.evolve(proc, make_number_state(3, 16)))
    ref = np.outer(np.abs(proc.phi1) ** 2, np.abs(proc.phi2) ** 2)
    np.testing.assert_allclose(rho.values, ref, atol=1e-12)


# ---------------------------------------------------------------- error operators


def test_optimal_errors_saturate(optimal_process):
    for regime in joint.REGIMES:
        rep = joint.worst_case_errors(optimal_process, regime, dim=4)
        assert rep.product == pytest.approx(0.5, abs=1e-9)
        assert rep.delta_x == pytest.approx(np.sqrt(0.5), abs=1e-9)
        assert rep.resolution_lambda == pytest.approx(1.0, abs=1e-9)
        assert rep.bias_x < 1e-10 and rep.bias_p < 1e-10
        assert not rep.truncation_artifact
        assert rep.to_dict()["schema"] == "phasemeter/1"


def test_partial_expectations_are_scalar(optimal_process):
    ops = joint.partial_expectations(optimal_process, "retrodictive", 5)
    np.testing.assert_allclose(ops[("X", 2)].entries, 0.5 * np.eye(5), atol=1e-10)
    np.testing.assert_allclose(ops[("P", 2)].entries, 0.5 * np.eye(5), atol=1e-10)
    assert ops[("X", 2)].is_hermitian(1e-12)


def test_detuned_matches_closed_form():
    cfg = joint.detuned_config(1.0, 2.0)
    proc = joint.build_process(cfg)
    expected = analytic_product(cfg.pointer_width1, cfg.pointer_width2)
    assert expected == pytest.approx(0.625)
    for regime in joint.REGIMES:
        assert joint.worst_case_errors(proc, regime, dim=3).product == pytest.approx(expected, abs=1e-8)
    assert joint.c_residual(proc, make_number_state(0, 16), 1.0) > 0.05


def test_offset_shows_up_as_bias():
    proc = joint.build_process(joint.optimal_config(1.0, offset_x=0.3))
    rep = joint.worst_case_errors(proc, "retrodictive", dim=3)
    assert rep.bias_x == pytest.approx(0.3, abs=1e-9)
    assert rep.delta_x > np.sqrt(0.5)


def test_other_resolution():
    proc = joint.build_process(joint.optimal_config(0.7))
    rep = joint.worst_case_errors(proc, "predictive", dim=3)
    assert rep.product == pytest.approx(0.5, abs=1e-8)
    assert rep.resolution_lambda == pytest.approx(0.7, abs=1e-8)


@pytest.mark.parametrize("n", [0, 2])
def test_commutators_and_residuals(optimal_process, n):
    s = make_number_state(n, 16)
    assert abs(joint.commutator_expectation(optimal_process, s, "retrodictive") + 1j) < 1e-8
    assert abs(joint.commutator_expectation(optimal_process, s, "predictive") - 1j) < 1e-8
    assert joint.c_residual(optimal_process, s, 1.0) < 1e-5
    assert joint.d_residual(optimal_process, s, 1.0) < 1e-5


def test_error_expectations_state_independent(optimal_process):
    for s in (make_number_state(1, 16), displace(make_number_state(0, 32), 0.5, 0.5)):
        e = joint.error_expectations(optimal_process, s)
        assert e["second_x"] == pytest.approx(0.5, abs=1e-8)
        assert e["second_p"] == pytest.approx(0.5, abs=1e-8)
        assert abs(e["mean_x"]) < 1e-10


def test_error_moment_operator_first_power_vanishes(optimal_process):
    m = joint.error_moment_operator(optimal_process, "Xi", 1, dim=4)
    assert np.max(np.abs(m.entries)) < 1e-10
    with pytest.raises(ValidationError):
        joint.error_moment_operator(optimal_process, "Yi", 1)
    with pytest.raises(ValidationError):
        joint.error_moment_operator(optimal_process, "Xi", 3)


def test_sup_edge_flag_rule():
    from phasemeter.fock import OperatorMatrix

    flat = OperatorMatrix(0.5 * np.eye(6), 1.0)
    assert joint._sup(flat)[2] is False
    growing = OperatorMatrix(np.diag(np.arange(6.0)), 1.0)
    val, level, edge = joint._sup(growing)
    assert val == 5.0 and level == 5 and edge
    with pytest.raises(ValidationError):
        joint.worst_case_errors(joint.build_process(joint.optimal_config()), "sideways", dim=3)


# ---------------------------------------------------------------- conditioning


def test_small_region_collapses_to_coherent(optimal_process):
    J = joint.evolve(optimal_process, make_number_state(1, 16))
    mx, mp = optimal_process.mu_x, optimal_process.mu_p
    i, j = np.argmin(np.abs(mx - 0.5)), np.argmin(np.abs(mp + 0.25))
    rho, pr = joint.condition_on_region(J, Region.centred(mx[i], mp[j], 0.05), dim=24)
    c = coherent_fock_coefficients(CoherentLabel(mx[i], mp[j]), 24)
    assert 0 < pr < 1
    assert fidelity_with_pure(rho, c.amplitudes) > 1 - 1e-10


def test_empty_region_rejected(optimal_process):
    J = joint.evolve(optimal_process, make_number_state(0, 16))
    with pytest.raises(ValidationError):
        joint.condition_on_region(J, Region(0.01, 0.02, 0.01, 0.02))


def test_verify_optimal(optimal_process):
    reps = joint.verify_optimal(optimal_process, dim=2)
    assert set(reps) == set(joint.REGIMES)
    with pytest.raises(AccuracyError, match="optimality"):
        joint.verify_optimal(joint.build_process(joint.detuned_config(1.0, 1.25)), dim=2)
