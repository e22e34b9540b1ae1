import numpy as np
import pytest
from sklearn.base import clone
from sklearn.exceptions import NotFittedError

from movant import TwoTimescaleDesign
from movant.config import preset
from movant.two_timescale import draw_links


@pytest.fixture(scope="module")
def cfg():
    return preset("desk", n_iter=3, batch_size=2, n_short_iter=3)


@pytest.fixture(scope="module")
def fitted(cfg):
    stat = TwoTimescaleDesign.draw_statistics(cfg, random_state=0)
    return TwoTimescaleDesign("proposed-gmm", config=cfg, random_state=1).fit(stat)


def test_params_and_clone(cfg):
    est = TwoTimescaleDesign("scsit-upa", config=cfg, random_state=3)
    params = est.get_params()
    assert params == {"scheme": "scsit-upa", "config": cfg, "random_state": 3,
                      "record_trace": True}
    twin = clone(est)
    assert twin.get_params() == params and twin is not est
    est.set_params(scheme="proposed-pmm")
    assert est.scheme == "proposed-pmm"


def test_fitted_attributes(fitted, cfg):
    assert fitted.transmit_.shape == (cfg.n_tx, 2)
    assert fitted.covariance_.shape == (cfg.n_users, cfg.n_tx, cfg.n_tx)
    assert fitted.receive_ is None
    assert fitted.n_iter_ == cfg.n_iter
    assert len(fitted.trace_["solver_status"]) == cfg.n_iter


def test_predict_and_score(fitted, cfg):
    links = fitted.sample_links(5, random_state=2)
    r = fitted.predict(links)
    rates = fitted.predict_rates(links)
    assert r.shape == (5, cfg.n_users, cfg.n_rx, 2)
    assert rates.shape == (5, cfg.n_users)
    assert fitted.score(links) == pytest.approx(rates.sum(axis=1).mean())


def test_same_random_state_same_design(cfg):
    stat = TwoTimescaleDesign.draw_statistics(cfg, random_state=4)
    a = TwoTimescaleDesign("proposed-pmm", config=cfg, random_state=5).fit(stat)
    b = TwoTimescaleDesign("proposed-pmm", config=cfg, random_state=5).fit(stat)
    assert np.array_equal(a.transmit_, b.transmit_)


def test_trace_can_be_dropped(cfg):
    stat = TwoTimescaleDesign.draw_statistics(cfg, random_state=6)
    est = TwoTimescaleDesign("scsit-upa", config=cfg, record_trace=False).fit(stat)
    assert est.trace_ == {}


def test_fit_records_held_out_curve(cfg):
    stat = TwoTimescaleDesign.draw_statistics(cfg, random_state=7)
    links = draw_links(stat, np.random.default_rng(8), 3, cfg)
    est = TwoTimescaleDesign("proposed-gmm", config=cfg, random_state=9).fit(stat, trace_links=links)
    assert len(est.trace_["eval_sum_rate"]) == cfg.n_iter + 1


def test_errors(cfg, fitted):
    est = TwoTimescaleDesign(config=cfg)
    with pytest.raises(NotFittedError):
        est.predict(None)
    with pytest.raises(TypeError):
        est.fit(np.zeros(3))
    with pytest.raises(TypeError):
        fitted.predict(np.zeros((2, 2)))
    links = fitted.sample_links(2, random_state=0)
    with pytest.raises(ValueError):
        fitted.predict(links[0])
    stat = TwoTimescaleDesign.draw_statistics(cfg, random_state=0)
    with pytest.raises(ValueError):
        TwoTimescaleDesign("bogus", config=cfg).fit(stat)
