import numpy as np
import pytest
from sklearn.base import clone
from sklearn.exceptions import NotFittedError

from mmwave_assoc import (DSTAssociation, LoadBiasedAssociation, OptimalAssociation,
                          RandomAssociation, RSSIAssociation, objective, solve_dst)

from conftest import random_rates


@pytest.fixture
def batch(rng):
    return [random_rates(rng, 4, 2, 2) for _ in range(4)]


def test_params_roundtrip_and_clone():
    est = DSTAssociation(epsilon=0.05, step0=0.2)
    assert est.get_params()["epsilon"] == 0.05
    c = clone(est).set_params(tol=1e-4)
    assert c.get_params()["tol"] == 1e-4 and c.step0 == 0.2
    assert "DSTAssociation(epsilon=0.05" in repr(est)


def test_dst_fit_predict(batch):
    est = DSTAssociation().fit(batch)
    assert est.lambda_.shape == (2,) and est.gaps_.shape == (4,)
    preds = est.predict(batch)
    assert [p for p in preds] == [solve_dst(r).association for r in batch]
    assert est.score(batch) == pytest.approx(np.mean([objective(p, r) for p, r in zip(preds, batch)]))


def test_single_instance_and_triple_input(batch):
    r = batch[0]
    (a,) = RSSIAssociation().predict(r)
    (b,) = RSSIAssociation().predict((r.client_relay, r.client_ap, r.relay_ap))
    assert a == b


def test_load_biased(batch):
    est = LoadBiasedAssociation()
    with pytest.raises(NotFittedError):
        est.predict(batch)
    est.fit(batch)
    assert np.allclose(est.bias_, np.log(est.loads_.mean(axis=0)) + 1)
    assert len(est.predict(batch)) == 4
    with pytest.raises(ValueError, match="APs"):
        est.predict([random_rates(np.random.default_rng(0), 2, 1, 3)])


def test_baselines(batch):
    a = RandomAssociation(random_state=3).fit(batch).predict(batch)
    assert a == RandomAssociation(random_state=3).predict(batch)
    opt = OptimalAssociation().fit(batch)
    assert opt.score(batch) >= DSTAssociation().score(batch) - 1e-9
    with pytest.raises(ValueError, match="no instances"):
        RSSIAssociation().predict([])
