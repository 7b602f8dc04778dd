"""The sklearn-style estimator facade."""

import numpy as np
import pytest
from sklearn.base import clone
from sklearn.exceptions import NotFittedError

from sdf_forge.errors import InputError
from sdf_forge.estimator import SdfAutoDecoder
from sdf_forge.geometry import Sphere, sample_analytic


def toy_dataset():
    return [sample_analytic(Sphere(0.4), total=1500, seed=41, shape_id="a"),
            sample_analytic(Sphere(0.6), total=1500, seed=42, shape_id="b")]


def toy_estimator(**overrides):
    params = dict(latent_dim=4, hidden_width=24, hidden_layers=2,
                  activation="siren", omega0_first=5.0, omega0_hidden=5.0,
                  epochs=150, lr_params=1e-3, samples_per_step=128,
                  shapes_per_batch=2, seed=3)
    params.update(overrides)
    return SdfAutoDecoder(**params)


def test_get_set_params_and_clone():
    est = toy_estimator()
    params = est.get_params()
    assert params["latent_dim"] == 4
    assert params["omega0_first"] == 5.0
    est.set_params(epochs=7)
    assert est.epochs == 7
    twin = clone(est)
    assert twin.get_params() == est.get_params()


def test_not_fitted_errors():
    est = toy_estimator()
    with pytest.raises(NotFittedError):
        est.predict(np.zeros((2, 3)))
    with pytest.raises(NotFittedError):
        est.transform(toy_dataset())


def test_fit_sets_trailing_underscore_attributes():
    est = toy_estimator().fit(toy_dataset())
    assert est.store_.values.ndim == 1
    assert est.table_.codes.shape == (2, 4)
    assert est.shape_ids_ == ["a", "b"]
    assert len(est.history_) == 150


def test_fit_predict_recovers_radii():
    data = toy_dataset()
    est = toy_estimator().fit(data)
    for index, sphere in ((0, Sphere(0.4)), (1, Sphere(0.6))):
        held = sample_analytic(sphere, total=800, seed=77 + index)
        near = held.near_surface_mask
        pred = est.predict(held.points[near], index=index)
        mae = np.mean(np.abs(pred - held.distances[near]))
        assert mae < 0.05


def test_predict_selector_rules():
    est = toy_estimator().fit(toy_dataset())
    pts = np.zeros((1, 3))
    with pytest.raises(InputError, match="several shapes"):
        est.predict(pts)
    with pytest.raises(InputError, match="out of range"):
        est.predict(pts, index=5)
    with pytest.raises(InputError, match="not both"):
        est.predict(pts, index=0, code=np.zeros(4))
    by_index = est.predict(pts, index=1)
    by_code = est.predict(pts, code=est.table_.codes[1])
    assert np.array_equal(by_index, by_code)


def test_predict_validates_points():
    est = toy_estimator().fit(toy_dataset())
    with pytest.raises(InputError):
        est.predict(np.zeros((2, 2)), index=0)


def test_transform_returns_useful_codes():
    data = toy_dataset()
    est = toy_estimator(infer_steps=100).fit(data)
    codes = est.transform([data[0]])
    assert codes.shape == (1, 4)
    held = sample_analytic(Sphere(0.4), total=600, seed=91)
    near = held.near_surface_mask
    pred = est.predict(held.points[near], code=codes[0])
    assert np.mean(np.abs(pred - held.distances[near])) < 0.08


def test_fit_is_deterministic():
    a = toy_estimator().fit(toy_dataset())
    b = toy_estimator().fit(toy_dataset())
    assert np.array_equal(a.store_.values, b.store_.values)
    assert np.array_equal(a.table_.codes, b.table_.codes)


def test_fit_rejects_non_sample_input():
    est = toy_estimator()
    with pytest.raises(InputError, match="SdfSampleSet"):
        est.fit([np.zeros((5, 3))])
    with pytest.raises(InputError, match="at least one"):
        est.fit([])
