import io

import numpy as np
import pytest

from muller_ratchet.core import ModelParams, TypeDistribution
from muller_ratchet.rng import as_rng, make_rng
from muller_ratchet.trajectory import ClickEvent, TrajectoryRecord, load_archive, save_archive
from muller_ratchet.wright_fisher import PopulationState, RunConfig, run


@pytest.fixture
def wf_record():
    params = ModelParams(0.03, 0.3, 0.0, population_size=50)
    return run(PopulationState.monomorphic(50, 0, 20), params,
               RunConfig(seed=1, generations=400, record_every=100, state_every=200, k_max=20, xi=0.1))


def test_csv_schemas(wf_record):
    stats = wf_record.stats_csv().splitlines()
    assert stats[0] == "t,kappa1,kappa2,h_xi" and len(stats) == 6
    dist = wf_record.distribution_csv().splitlines()
    assert dist[0] == "t,k,weight"
    rows = [r.split(",") for r in dist[1:]]
    assert all(float(w) > 0 for _, _, w in rows)
    for t in ("0.0", "200.0", "400.0"):
        assert sum(float(w) for tt, _, w in rows if tt == t) == pytest.approx(1.0)
    clicks = wf_record.clicks_csv().splitlines()
    assert clicks[0] == "generation,old_best,new_best" and len(clicks) == len(wf_record.clicks) + 1


def test_json_round_trip(wf_record):
    back = TrajectoryRecord.from_json(wf_record.to_json())
    for attr in ("times", "kappa1", "kappa2", "h_xi", "state_times", "states"):
        np.testing.assert_array_equal(getattr(back, attr), getattr(wf_record, attr))
    assert back.clicks == wf_record.clicks and back.metadata == wf_record.metadata
    assert back.final == wf_record.final and back.initial == TypeDistribution.delta(0, 20)
    assert back.t_end == 400.0 and back.k_max == 20


def test_archive_round_trip(tmp_path, wf_record):
    params = ModelParams(0.03, 0.3, 0.0, population_size=50)
    path = tmp_path / "a.npz"
    save_archive(path, [wf_record, wf_record], params)
    recs, p = load_archive(path)
    assert p == (0.03, 0.3, 0.0, 50.0) and len(recs) == 2
    np.testing.assert_array_equal(recs[1].states, wf_record.states)
    buf = io.BytesIO()
    save_archive(buf, [wf_record])
    buf.seek(0)
    recs, p = load_archive(buf)
    assert p is None and recs[0].xi == 0.1
    with pytest.raises(ValueError):
        save_archive(tmp_path / "b.npz", [])


def test_click_event_is_a_value():
    assert ClickEvent(3, 0, 1) == ClickEvent(3, 0, 1)


def test_streams_are_reproducible_and_distinct():
    a = make_rng(5, 1).random(4)
    np.testing.assert_array_equal(a, make_rng(5, 1).random(4))
    assert not np.array_equal(a, make_rng(5, 2).random(4))
    assert not np.array_equal(a, make_rng(6, 1).random(4))
    g = make_rng(1)
    assert as_rng(g) is g
    np.testing.assert_array_equal(as_rng(7).random(3), make_rng(7).random(3))
    with pytest.raises(ValueError):
        make_rng(None)
