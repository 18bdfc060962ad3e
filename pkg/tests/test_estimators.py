import numpy as np
import pytest
from sklearn.base import clone
from sklearn.exceptions import NotFittedError

from pbp.errors import ConfigError, ValidationError
from pbp.estimators import PathBasedPredictor
from pbp.lane_graph import AgentTrack, Scene
from pbp.scenario_gen import GenConfig, generate


@pytest.fixture(scope="module")
def scenes():
    return generate(GenConfig(seed=31, layout="mixed", n_scenes=10, path_free_fraction=0.2))


@pytest.fixture(scope="module")
def fitted(scenes):
    return PathBasedPredictor(epochs=2, random_state=1).fit(scenes)


def test_params_roundtrip():
    est = PathBasedPredictor(decoder="goal_based", epochs=3, nms_radius_m=1.5)
    params = est.get_params()
    assert params["decoder"] == "goal_based" and params["epochs"] == 3
    twin = clone(est)
    assert twin.get_params() == params
    est.set_params(epochs=5)
    assert est.epochs == 5


def test_not_fitted(scenes):
    with pytest.raises(NotFittedError):
        PathBasedPredictor().predict(scenes)


def test_fit_predict(fitted, scenes):
    preds = fitted.predict(scenes)
    assert len(preds) == len(scenes)
    assert all(p.trajectories.shape == (6, 30, 2) for p in preds)
    assert len(fitted.history_) == 2


def test_score_is_negative_min_fde(fitted, scenes):
    assert fitted.score(scenes) == -fitted.evaluate(scenes).min_fde[6]


def test_fit_is_deterministic(scenes, fitted):
    again = PathBasedPredictor(epochs=2, random_state=1).fit(scenes)
    assert all(np.array_equal(a, b) for a, b in zip(fitted.params_.arrays, again.params_.arrays))


def test_bad_decoder(scenes):
    with pytest.raises(ConfigError):
        PathBasedPredictor(decoder="anchor").fit(scenes)


def test_fit_requires_futures(scenes):
    s = scenes[0]
    bare = Scene(s.map, [AgentTrack(0, s.focal_agent.history, None)], 0, s.dt)
    with pytest.raises(ValidationError):
        PathBasedPredictor(epochs=1).fit([bare])


def test_fit_rejects_non_scenes():
    with pytest.raises(ValidationError):
        PathBasedPredictor(epochs=1).fit([np.zeros((3, 2))])


def test_sampler_dict_accepted(scenes):
    est = PathBasedPredictor(epochs=1, sampler={"max_paths": 20}).fit(scenes[:4])
    assert len(est.predict(scenes[:1])) == 1
