import math

import numpy as np
import pytest

from cvsignal import build_corridor
from cvsignal.corridor import GREEN, RED
from cvsignal.forecast import (
    DIRECTION_LEVELS,
    FEATURE_NAMES,
    NUM_FEATURES,
    PHASE_LEVELS,
    LstmModel,
    build_features,
    forward,
    load_model,
    make_windows,
    predict_batch,
    read_dataset,
    required_samples,
    rmse,
    save_model,
    train,
    write_dataset,
)
from cvsignal.lstm import (
    NadamConfig,
    NadamState,
    flatten_params,
    forward_batch,
    init_params,
    loss_and_gradients,
    nadam_step,
    unflatten_params,
)
from cvsignal.sensing import Bsm


def corridor():
    return build_corridor({
        "corridor": {"intersections": 2, "entry_length_mi": 0.5},
        "phase_plan": {
            "cycle_s": 90,
            "coordinated": {"max_green_s": 54, "split_green_s": 54},
            "non_coordinated": {"max_green_s": 24, "split_green_s": 24},
        },
    })


def bsm(pos, speed, vid, seg="E1"):
    return Bsm(time_s=0.0, vehicle_id=vid, segment_id=seg,
               position_m=pos, speed_mph=speed, direction="major-east")


class TestBuildFeatures:
    def test_majority_vote_phase(self):
        corr = corridor()
        seg = corr.segment("E1")  # has an upstream signal (I0)
        seconds = [[] for _ in range(5)]
        phases = [GREEN, GREEN, RED, GREEN, GREEN]
        feats = build_features(seconds, phases, seg)
        names = list(FEATURE_NAMES)
        assert feats[-1][names.index("phase_green")] == 1.0
        assert feats[-1][names.index("phase_red")] == 0.0

    def test_no_cv_second_zeroed(self):
        corr = corridor()
        seg = corr.segment("E1")
        feats = build_features([[]], [GREEN], seg)
        names = list(FEATURE_NAMES)
        assert feats[0][names.index("num_cvs")] == 0.0
        assert feats[0][names.index("cv_to_cv_distance_m")] == 0.0
        assert feats[0][names.index("cv_speed_mph")] == 0.0

    def test_two_cvs_direct_aggregation(self):
        corr = corridor()
        seg = corr.segment("E1")
        feats = build_features([[bsm(100.0, 30.0, 1), bsm(150.0, 30.0, 2)]],
                               [GREEN], seg)
        names = list(FEATURE_NAMES)
        assert feats[0][names.index("cv_to_cv_distance_m")] == pytest.approx(50.0)
        assert feats[0][names.index("cv_speed_mph")] == pytest.approx(30.0)
        assert feats[0][names.index("num_cvs")] == 2.0

    def test_no_upstream_signal_phase_none(self):
        corr = corridor()
        seg = corr.segment("E0")  # corridor entry, no upstream signal
        feats = build_features([[]], [GREEN], seg)
        names = list(FEATURE_NAMES)
        assert feats[0][names.index("phase_none")] == 1.0

    def test_waiting_time_accumulates_for_stopped_cv(self):
        corr = corridor()
        seg = corr.segment("E1")
        seconds = [[bsm(700.0, 0.0, 5)] for _ in range(4)]
        feats = build_features(seconds, [RED] * 4, seg)
        names = list(FEATURE_NAMES)
        waits = [f[names.index("cv_waiting_s")] for f in feats]
        assert waits == [1.0, 2.0, 3.0, 4.0]

    def test_direction_onehot(self):
        corr = corridor()
        feats = build_features([[]], [None], corr.segment("N0"))
        names = list(FEATURE_NAMES)
        assert feats[0][names.index("dir_minor")] == 1.0
        assert feats[0][names.index("dir_major_east")] == 0.0

    def test_empty_window_rejected(self):
        with pytest.raises(ValueError):
            build_features([], [], corridor().segment("E1"))


class TestRmse:
    def test_identical_zero(self):
        assert rmse([3.0, 4.0, 5.0], [3.0, 4.0, 5.0]) == 0.0

    def test_hand_evaluated(self):
        assert rmse([11.0, 10.0], [10.0, 12.0]) == pytest.approx(math.sqrt(2.5))
        assert rmse([11.0, 10.0], [10.0, 12.0]) == pytest.approx(1.5811, abs=1e-4)

    def test_single_element(self):
        assert rmse([7.0], [4.0]) == pytest.approx(3.0)

    def test_length_mismatch_rejected(self):
        with pytest.raises(ValueError):
            rmse([1.0, 2.0], [1.0])
        with pytest.raises(ValueError):
            rmse([], [])


class TestRequiredSamples:
    def test_replication_count_case(self):
        # sigma 30 s, tolerance 10.5 s: ceil((1.96*30/10.5)^2) = ceil(31.36) = 32
        assert required_samples(30.0, 10.5) == 32

    def test_zero_sigma_clamps_to_one(self):
        assert required_samples(0.0, 5.0) == 1

    def test_doubling_sigma_quadruples_before_ceiling(self):
        raw = (1.96 * 30.0 / 10.5) ** 2
        raw2 = (1.96 * 60.0 / 10.5) ** 2
        assert raw2 == pytest.approx(4 * raw, rel=1e-12)
        assert required_samples(60.0, 10.5) == math.ceil(raw2)

    def test_nonpositive_tolerance_rejected(self):
        with pytest.raises(ValueError):
            required_samples(30.0, 0.0)


class TestLstmCore:
    def _rand_batch(self, rng, batch=3, steps=6, dim=5):
        return rng.normal(size=(batch, steps, dim)), rng.normal(size=batch)

    def test_gradient_check_small(self):
        rng = np.random.default_rng(0)
        params = init_params(5, 4, seed=1)
        x, t = self._rand_batch(rng)
        for point in range(3):
            vec = flatten_params(params) + rng.normal(scale=0.1, size=flatten_params(params).size)
            p = unflatten_params(vec, params)
            _, grads = loss_and_gradients(p, x, t)
            analytic = flatten_params(grads)
            numeric = np.empty_like(analytic)
            h = 1e-5
            for k in range(vec.size):
                vp = vec.copy(); vp[k] += h
                vm = vec.copy(); vm[k] -= h
                lp, _ = loss_and_gradients(unflatten_params(vp, params), x, t)
                lm, _ = loss_and_gradients(unflatten_params(vm, params), x, t)
                numeric[k] = (lp - lm) / (2 * h)
            rel = np.linalg.norm(analytic - numeric) / max(
                np.linalg.norm(analytic), np.linalg.norm(numeric))
            assert rel < 1e-4

    def test_nadam_zero_gradient_is_noop(self):
        params = init_params(5, 4, seed=2)
        before = flatten_params(params).copy()
        grads = {k: np.zeros_like(v) for k, v in params.items()}
        state = NadamState()
        nadam_step(params, grads, state, NadamConfig())
        assert np.array_equal(flatten_params(params), before)

    def test_nadam_moves_weights_against_gradient(self):
        params = init_params(5, 4, seed=2)
        x = np.ones((2, 3, 5))
        t = np.array([5.0, 5.0])
        cfg = NadamConfig()
        state = NadamState()
        loss0, grads = loss_and_gradients(params, x, t)
        for _ in range(200):
            _, grads = loss_and_gradients(params, x, t)
            nadam_step(params, grads, state, cfg)
        loss1, _ = loss_and_gradients(params, x, t)
        assert loss1 < loss0

    def test_nadam_config_validation(self):
        with pytest.raises(ValueError):
            NadamConfig(beta1=1.0)


class TestForward:
    def _zero_model(self, bias):
        params = init_params(NUM_FEATURES, 4, seed=0)
        for k in params:
            params[k] = np.zeros_like(params[k])
        params["b_out"][0] = bias
        return LstmModel(params=params, hidden=4, lookback=3,
                         input_dim=NUM_FEATURES, batch_size=8,
                         feature_mean=np.zeros(NUM_FEATURES),
                         feature_std=np.ones(NUM_FEATURES))

    def test_zero_weight_model_outputs_clamped_bias(self):
        model = self._zero_model(2.5)
        seq = np.zeros((3, NUM_FEATURES))
        assert forward(model, seq) == pytest.approx(2.5)
        model_neg = self._zero_model(-2.5)
        assert forward(model_neg, seq) == 0.0

    def test_shape_mismatch_rejected(self):
        model = self._zero_model(0.0)
        with pytest.raises(ValueError):
            forward(model, np.zeros((4, NUM_FEATURES)))
        with pytest.raises(ValueError):
            forward(model, np.zeros((3, NUM_FEATURES + 1)))

    def test_saturating_inputs_stay_finite(self):
        params = init_params(NUM_FEATURES, 6, seed=3)
        model = LstmModel(params=params, hidden=6, lookback=3,
                          input_dim=NUM_FEATURES, batch_size=8,
                          feature_mean=np.zeros(NUM_FEATURES),
                          feature_std=np.ones(NUM_FEATURES))
        seq = np.full((3, NUM_FEATURES), 1e9)
        out = forward(model, seq)
        assert math.isfinite(out) and out >= 0.0


def synthetic_windows(values, lookback=5):
    """Windows over a scalar series exposed through the num_cvs feature."""
    feats = np.zeros((len(values), NUM_FEATURES))
    feats[:, 3] = values[:len(values)]
    labels = np.roll(values, -1)
    feats, labels = feats[:-1], labels[:-1]
    return make_windows(feats, labels, lookback)


class TestTrain:
    def test_constant_series_recovered(self):
        values = np.full(400, 12.0)
        x, y = synthetic_windows(values)
        model = train(x, y, lookback=5, grid=({"hidden": 6},), batch_sizes=(32,),
                      seed=1, max_epochs=30, patience=5)
        pred = forward(model, x[10])
        assert abs(pred - 12.0) / 12.0 < 0.05

    def test_seed_determinism(self):
        values = np.arange(300) % 20.0
        x, y = synthetic_windows(values)
        m1 = train(x, y, lookback=5, grid=({"hidden": 5},), batch_sizes=(32,),
                   seed=9, max_epochs=5, patience=3)
        m2 = train(x, y, lookback=5, grid=({"hidden": 5},), batch_sizes=(32,),
                   seed=9, max_epochs=5, patience=3)
        assert np.array_equal(flatten_params(m1.params), flatten_params(m2.params))
        assert m1.val_rmse == m2.val_rmse

    def test_returns_grid_argmin(self):
        values = np.arange(300) % 20.0
        x, y = synthetic_windows(values)
        model = train(x, y, lookback=5, grid=({"hidden": 4}, {"hidden": 10}),
                      batch_sizes=(32,), seed=2, max_epochs=8, patience=3)
        results = model.meta["grid_results"]
        assert len(results) == 2
        best = min(r[2] for r in results)
        assert model.val_rmse == best
        winner = [r for r in results if r[2] == best][0]
        assert model.hidden == winner[0]

    def test_sawtooth_beats_persistence(self):
        # count = t mod 20; persistence (predict previous value) suffers at
        # every wrap, the trained model should not
        values = np.arange(1200) % 20.0
        x, y = synthetic_windows(values)
        model = train(x, y, lookback=5, grid=({"hidden": 10},), batch_sizes=(32,),
                      seed=4, max_epochs=40, patience=8)
        persistence_rmse = rmse(values[1:], values[:-1])
        assert persistence_rmse == pytest.approx(math.sqrt(19.0), rel=0.02)
        assert model.val_rmse < persistence_rmse

    def test_empty_dataset_rejected(self):
        with pytest.raises(ValueError):
            train(np.empty((0, 5, NUM_FEATURES)), np.empty(0))


class TestCheckpoint:
    def test_round_trip(self, tmp_path):
        values = np.full(200, 7.0)
        x, y = synthetic_windows(values)
        model = train(x, y, lookback=5, grid=({"hidden": 4},), batch_sizes=(32,),
                      seed=5, max_epochs=5, patience=2)
        path = tmp_path / "model.npz"
        save_model(path, model)
        back = load_model(path)
        assert back.hidden == model.hidden
        assert back.lookback == model.lookback
        seq = x[3]
        assert forward(back, seq) == pytest.approx(forward(model, seq))
        assert np.array_equal(back.feature_mean, model.feature_mean)


class TestDatasetIo:
    def test_round_trip(self, tmp_path):
        rows = [
            (0.0, "E0", np.arange(NUM_FEATURES, dtype=float), 5.0),
            (1.0, "E0", np.arange(NUM_FEATURES, dtype=float) * 2, 6.0),
            (0.0, "N1", np.zeros(NUM_FEATURES), 1.0),
        ]
        path = tmp_path / "data.csv"
        write_dataset(path, rows)
        back = read_dataset(path)
        assert set(back) == {"E0", "N1"}
        feats, labels = back["E0"]
        assert feats.shape == (2, NUM_FEATURES)
        assert labels.tolist() == [5.0, 6.0]

    def test_make_windows_shapes(self):
        feats = np.arange(40, dtype=float).reshape(10, 4)
        labels = np.arange(10, dtype=float)
        x, y = make_windows(feats, labels, lookback=3)
        assert x.shape == (8, 3, 4)
        assert y.tolist() == list(range(2, 10))
        x0 = x[0]
        assert np.array_equal(x0, feats[0:3])
        # too-short series yields nothing
        x, y = make_windows(feats[:2], labels[:2], lookback=3)
        assert len(x) == 0
