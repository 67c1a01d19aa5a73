import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from multires_ipp import gp
from multires_ipp.camera import GsdLadder, altitude_at_gsd, footprint, inspection_grid, survey_grid
from multires_ipp.field import crop_window
from multires_ipp.oracle import OracleParams
from multires_ipp.planner import (CONTINUE, DESCEND, DecisionState, DegenerateTrainingField, Observation,
                                  PlannerError, PlannerSettings, collect_observations, decide, decide_linear,
                                  initialize, proxy_input, record_and_adapt, serialize_gp, snap_to_rung)

from conftest import SMALL_CAM
from test_metrics import brute_iou
from test_oracle import brute_pool

LADDER = GsdLadder()
H_MAX = altitude_at_gsd(SMALL_CAM, LADDER.survey)


def make_state(set_O, set_I, v_lo=0.1, v_hi=0.8, alpha=0.5, hyper=gp.Hyperparams(0.1, 1.0, 0.01),
               tau=0.0, K=5):
    fit = lambda pairs: gp.fit([p[0] for p in pairs], [p[1] for p in pairs], hyper)
    return DecisionState(tuple(set_O), tuple(set_I), fit(set_O), fit(set_I), LADDER, SMALL_CAM,
                         v_lo, v_hi, alpha, tau, K)


def constant_state(gsd_target, gain=0.1, **kw):
    xs = np.linspace(0.0, 0.5, 21)
    drop = H_MAX - altitude_at_gsd(SMALL_CAM, gsd_target)
    return make_state([(x, drop) for x in xs], [(x, -gain) for x in xs], **kw)


# -- initialization ------------------------------------------------------------

def test_initialize_counts_and_summary(small_field):
    state = initialize(small_field, SMALL_CAM, LADDER, OracleParams())
    assert len(state.set_O) == len(state.set_I) == 6 * 4
    assert state.gp_O.n == 24 and state.gp_I.n == 24
    records = collect_observations(small_field, SMALL_CAM, LADDER, OracleParams())
    v = np.array([r.v_hmax for r in records])
    assert state.v_lo == pytest.approx(np.percentile(v, 25))
    assert state.v_hi == pytest.approx(np.percentile(v, 90))
    veg = [r for r in records if r.v_hmax > 0]
    assert state.proxy_alpha == pytest.approx(np.mean([r.delta_v for r in veg]) / np.mean([r.v_hmax for r in veg]))
    assert all(r.delta_h > 0 for r in records)


def test_initialize_is_deterministic(small_field):
    a = initialize(small_field, SMALL_CAM, LADDER, OracleParams())
    b = initialize(small_field, SMALL_CAM, LADDER, OracleParams())
    assert a.dumps() == b.dumps()


def test_all_soil_training_field_is_rejected(soil_field):
    with pytest.raises(DegenerateTrainingField, match="degenerate training field"):
        initialize(soil_field, SMALL_CAM, LADDER, OracleParams())


def test_too_small_training_field(small_field):
    from multires_ipp.field import Rect
    tiny = crop_window(small_field, Rect(0, 0, 6, 3))
    with pytest.raises(PlannerError):
        initialize(tiny, SMALL_CAM, LADDER, OracleParams())


def test_noiseless_finer_never_worse(small_field):
    records = collect_observations(small_field, SMALL_CAM, LADDER, OracleParams.noiseless())
    assert all(r.delta_miou <= 0 for r in records)
    # independent recomputation for the rungs that tile the 3 m region exactly
    res = small_field.resolution
    for region, wp in enumerate(survey_grid(small_field.extent, SMALL_CAM, LADDER.survey)):
        gt = crop_window(small_field, footprint(SMALL_CAM, wp)).cells
        k_top = round(LADDER.survey / res)
        top = np.kron(brute_pool(gt, k_top), np.ones((k_top, k_top), np.uint8))
        top_iou = [x for x in brute_iou(top, gt) if x is not None]
        for g in (0.015, 0.01):
            k = round(g / res)
            child = np.kron(brute_pool(gt, k), np.ones((k, k), np.uint8))
            child_iou = [x for x in brute_iou(child, gt) if x is not None]
            rec = next(r for r in records if r.region_id == region and r.gsd_child == g)
            assert rec.delta_miou == pytest.approx(np.mean(top_iou) - np.mean(child_iou), abs=1e-12)
            assert len(inspection_grid(wp, SMALL_CAM, g, (wp.x, wp.y))) == round(LADDER.survey / g) ** 2


# -- decide ----------------------------------------------------------------------

def test_below_activity_range_continues():
    d = decide(constant_state(0.02), 0.0)
    assert d.action == CONTINUE and d.predicted_gain == 0.0 and d.target_gsd is None


def test_forced_finest_above_v_hi():
    d = decide(constant_state(0.025), 1.0)
    assert d.action == DESCEND and d.target_gsd == LADDER.finest and d.predicted_gain > 0


def test_constant_gp_targets_its_rung():
    for g in LADDER.finer:
        d = decide(constant_state(g), 0.4)
        assert d.action == DESCEND and d.target_gsd == g


def test_survey_target_continues():
    d = decide(constant_state(0.03), 0.4)
    assert d.action == CONTINUE


def test_gain_gate():
    state = constant_state(0.02, gain=-0.1)  # finer predicted to be worse
    assert decide(state, 0.4).action == CONTINUE
    assert decide(state, 1.0).action == CONTINUE
    state = constant_state(0.02, gain=0.1, tau=0.5)
    assert decide(state, 0.4).action == CONTINUE


def test_proxy_is_clamped():
    state = constant_state(0.02, alpha=10.0)
    assert proxy_input(state, 1.0) == pytest.approx(0.5)
    assert proxy_input(state, 0.0) == 0.0


def test_decide_rejects_bad_ratio():
    with pytest.raises(PlannerError):
        decide(constant_state(0.02), 1.5)


def test_snap_tie_goes_coarser():
    h25, h20 = altitude_at_gsd(SMALL_CAM, 0.025), altitude_at_gsd(SMALL_CAM, 0.02)
    assert snap_to_rung(LADDER, SMALL_CAM, (h25 + h20) / 2) == 0.025
    assert snap_to_rung(LADDER, SMALL_CAM, h20 + 1e-6) == 0.02
    assert snap_to_rung(LADDER, SMALL_CAM, 1e6) == 0.03


@settings(max_examples=60, deadline=None)
@given(st.floats(0.0, 1.0), st.floats(0.0, 0.6))
def test_snap_and_determinism(v, slope):
    xs = np.linspace(0.0, 0.5, 11)
    state = make_state([(x, slope * x * 4) for x in xs], [(x, -0.05) for x in xs])
    d = decide(state, v)
    assert d == decide(state, v)
    if d.descend:
        assert d.target_gsd in LADDER.finer


def test_monotone_in_ratio_for_monotone_state():
    xs = np.linspace(0.0, 0.5, 11)
    state = make_state([(x, 4.0 * x) for x in xs], [(x, -0.05) for x in xs], v_lo=0.05, v_hi=0.95, alpha=0.5)
    targets = []
    for v in np.linspace(0.05, 0.95, 40):
        d = decide(state, v)
        targets.append(d.target_gsd if d.descend else LADDER.survey)
    assert all(b <= a + 1e-12 for a, b in zip(targets, targets[1:]))
    assert targets[-1] < targets[0]


# -- decide_linear ---------------------------------------------------------------

def test_linear_examples():
    assert decide_linear(0.2, 0.2, 0.6, LADDER).action == CONTINUE
    assert decide_linear(0.6, 0.2, 0.6, LADDER).target_gsd == 0.01
    assert decide_linear(0.4, 0.2, 0.6, LADDER).target_gsd == pytest.approx(0.02)
    # 0.25 of the way is 2.5 cm/px; 0.125 is a tie between 3.0 and 2.5 and must not descend
    assert decide_linear(0.3, 0.2, 0.6, LADDER).target_gsd == pytest.approx(0.025)
    assert decide_linear(0.25, 0.2, 0.6, LADDER).action == CONTINUE


# -- online adaptation ------------------------------------------------------------

def _obs(dv, dh):
    return Observation(region_id=0, v_hmax=0.5, gsd_child=0.02, delta_v=dv, delta_h=dh)


def test_record_grows_set_O_only():
    state = constant_state(0.02)
    before_I = serialize_gp(state.gp_I)
    new = record_and_adapt(state, _obs(0.1, 0.5))
    assert len(new.set_O) == len(state.set_O) + 1 and new.gp_O.n == len(new.set_O)
    assert len(state.set_O) == 21  # old state untouched
    assert serialize_gp(new.gp_I) == before_I and new.set_I == state.set_I


def test_refit_period_cycles():
    state = constant_state(0.02, K=3)
    counts = []
    for i in range(7):
        state = record_and_adapt(state, _obs(0.01 * i, 0.4))
        counts.append(state.updates_since_refit)
    assert counts == [1, 2, 0, 1, 2, 0, 1]


def test_duplicate_observation_is_a_bounded_shift():
    import dense_gp
    xs = np.linspace(0.0, 0.5, 11)
    pairs = [(x, 1.0 + np.sin(6 * x)) for x in xs]
    h = gp.Hyperparams(0.1, 1.0, 0.2)
    state = make_state(pairs, [(x, -0.1) for x in xs], hyper=h, K=10**6)
    new = record_and_adapt(state, _obs(*pairs[5]))
    queries = np.linspace(0.0, 0.5, 51)
    before, _ = dense_gp.posterior([p[0] for p in pairs], [p[1] for p in pairs], queries, 0.1, 1.0, 0.2)
    after, _ = dense_gp.posterior([p[0] for p in new.set_O], [p[1] for p in new.set_O], queries, 0.1, 1.0, 0.2)
    np.testing.assert_allclose(new.gp_O.predict(queries)[0], after, atol=1e-9)
    assert np.max(np.abs(after - before)) < 0.1 * np.sqrt(h.signal_variance)


def test_monotone_injection_moves_toward_finer_rungs():
    xs = np.linspace(0.0, 0.5, 11)
    state = make_state([(x, 0.05) for x in xs], [(x, -0.1) for x in xs],
                       hyper=gp.Hyperparams(0.1, 1.0, 0.2), K=10**6)
    v = 0.2  # proxy 0.1, a small delta_v
    big = H_MAX - altitude_at_gsd(SMALL_CAM, LADDER.finest)
    targets = []
    for _ in range(12):
        d = decide(state, v)
        targets.append(d.target_gsd if d.descend else LADDER.survey)
        state = record_and_adapt(state, _obs(proxy_input(state, v), big))
    assert all(b <= a for a, b in zip(targets, targets[1:]))
    assert targets[0] == LADDER.survey and targets[-1] < LADDER.finer[1]


# -- serialization -----------------------------------------------------------------

def test_state_round_trip(small_field):
    state = initialize(small_field, SMALL_CAM, LADDER, OracleParams(),
                       PlannerSettings(gain_threshold=0.01, refit_period=3))
    loaded = DecisionState.loads(state.dumps())
    assert loaded.dumps() == state.dumps()
    probes = np.linspace(-0.1, 0.3, 10)
    for a, b in ((state.gp_O, loaded.gp_O), (state.gp_I, loaded.gp_I)):
        np.testing.assert_allclose(b.predict(probes)[0], a.predict(probes)[0], atol=1e-9, rtol=0)
        np.testing.assert_allclose(b.predict(probes)[1], a.predict(probes)[1], atol=1e-9, rtol=0)
    assert (loaded.gain_threshold, loaded.refit_period) == (0.01, 3)


def test_state_schema_version_checked(small_field):
    import json
    d = json.loads(constant_state(0.02).dumps())
    d["schema_version"] = 99
    with pytest.raises(PlannerError):
        DecisionState.from_dict(d)


def test_state_invariants():
    with pytest.raises(PlannerError):
        constant_state(0.02, v_lo=0.5, v_hi=0.5)
