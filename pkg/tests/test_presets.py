import numpy as np
import pytest

from frictionflow.geometry import ChannelDomain, build_space
from frictionflow.presets import BodyForce, SlipThreshold, initial_density, initial_velocity

DOM = ChannelDomain(2.0, 1.0, 16, 8)


def test_force_presets():
    pts = DOM.nodes()
    assert BodyForce("zero", {}, DOM).is_zero
    assert BodyForce("constant", {"value": [0, 0]}, DOM).is_zero
    f = BodyForce("constant", {"value": [1.0, -2.0]}, DOM)(0.0, pts)
    assert np.all(f == [1.0, -2.0])
    shear = BodyForce("tangential-shear", {"amplitude": 2.0}, DOM)(0.0, np.array([[0.3, 0.0], [0.3, 1.0]]))
    assert np.allclose(shear, [[-2.0, 0.0], [2.0, 0.0]])
    stc = BodyForce("space-time-cosine", {"amplitude": 1.0, "omega": np.pi, "k": 1}, DOM)
    assert np.allclose(stc(1.0, np.array([[0.0, 0.5]])), [[-1.0, 0.0]])
    with pytest.raises(ValueError):
        BodyForce("swirl", {}, DOM)


def test_force_table_interpolates_in_time():
    vals = np.stack([np.zeros((8, 16, 2)), np.ones((8, 16, 2))])
    f = BodyForce("table", {"values": vals, "times": [0.0, 1.0]}, DOM)
    assert np.allclose(f(0.25, DOM.nodes()), 0.25)
    assert np.allclose(f(5.0, DOM.nodes()), 1.0)


def test_force_forcing_has_zero_normal_component_on_walls():
    stc = BodyForce("space-time-cosine", {"amplitude": 1.0}, DOM)
    tq = build_space(1, DOM).trace
    assert np.max(np.abs(stc(0.3, tq.points)[:, 1])) <= 1e-15


def test_threshold_presets():
    tq = build_space(1, DOM).trace
    assert SlipThreshold("constant", {"value": 0.0}, DOM).is_zero
    g = SlipThreshold("space-time-cosine", {"g0": 1.0, "amplitude": 0.5}, DOM)(0.2, tq.points)
    assert g.min() >= 0.5 - 1e-15 and g.max() <= 1.5 + 1e-15
    vals = np.arange(2 * DOM.nb, dtype=float)
    tab = SlipThreshold("table", {"values": vals}, DOM)(0.0, tq.points)
    assert np.array_equal(tab, vals)


def test_initial_data_presets():
    assert np.all(initial_density({"kind": "constant", "value": 2.0}, DOM) == 2.0)
    r = initial_density({"kind": "cosine", "mean": 1.0, "amplitude": 0.2, "kx": 0, "ky": 1}, DOM)
    assert np.allclose(r[:, 0], 1 + 0.2 * np.cos(np.pi * DOM.y_centers))
    pts = DOM.nodes()
    u = initial_velocity([{"kind": "uniform", "value": 0.3}, {"kind": "jet", "amplitude": 1.0}], pts, DOM)
    assert np.allclose(u[:, 0], 0.3 + 4 * pts[:, 1] * (1 - pts[:, 1]))
    with pytest.raises(ValueError):
        initial_velocity({"kind": "spiral"}, pts, DOM)
    with pytest.raises(ValueError):
        initial_density({"kind": "gaussian"}, DOM)


def test_vortex_is_divergence_free_and_tangential_on_walls():
    space = build_space(8, DOM)
    u = initial_velocity({"kind": "vortex", "amplitude": 0.7}, space.trace.points, DOM)
    assert np.max(np.abs(u[:, 1])) <= 1e-15
    h = 1e-6
    p = np.array([[0.37, 0.41]])
    dux = (initial_velocity({"kind": "vortex"}, p + [h, 0], DOM) - initial_velocity({"kind": "vortex"}, p - [h, 0], DOM))[0, 0]
    duy = (initial_velocity({"kind": "vortex"}, p + [0, h], DOM) - initial_velocity({"kind": "vortex"}, p - [0, h], DOM))[0, 1]
    assert abs(dux + duy) / (2 * h) <= 1e-8
