import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from domainaudit.calibration import calibrate
from domainaudit.classifiers import TrainConfig, fit_density_ratio, train_linear_readout
from domainaudit.curation import (
    CleanTestSet,
    MixMode,
    MixSpec,
    build_mix,
    clean_testset,
    ratio_sweep,
    subsample_balanced,
    subsample_random,
)
from domainaudit.errors import PoolExhausted, UsageError
from domainaudit.labels import DomainLabel
from domainaudit.store import write_store_arrays
from domainaudit.synth import SynthConfig, gen_two_domain

NAT, AMB, REND = DomainLabel.NATURAL, DomainLabel.AMBIGUOUS, DomainLabel.RENDITION


def test_subsample_full_pool_is_same_set_regardless_of_order():
    pool = np.arange(100, dtype=np.uint64)
    shuffled_pool = pool[np.random.default_rng(1).permutation(100)]
    a = subsample_random(pool, 100, seed=5)
    b = subsample_random(shuffled_pool, 100, seed=9)
    assert set(a.tolist()) == set(b.tolist()) == set(pool.tolist())


def test_subsample_zero_is_empty():
    assert len(subsample_random(np.arange(10, dtype=np.uint64), 0, seed=1)) == 0


def test_subsample_deterministic_and_seed_sensitive():
    pool = np.arange(10_000, dtype=np.uint64)
    a = subsample_random(pool, 500, seed=11)
    b = subsample_random(pool, 500, seed=11)
    np.testing.assert_array_equal(a, b)
    # across 100 seed pairs, at least one element must differ
    differing = 0
    for s in range(100):
        x = subsample_random(pool, 50, seed=2 * s)
        y = subsample_random(pool, 50, seed=2 * s + 1)
        if set(x.tolist()) != set(y.tolist()):
            differing += 1
    assert differing >= 1


def test_subsample_overdraw_errors():
    with pytest.raises(PoolExhausted):
        subsample_random(np.arange(3, dtype=np.uint64), 4, seed=0)


def _labeled_pool():
    # class support mirrors a seed-label corpus: 7268 / 2978 / 2754
    sizes = {int(NAT): 7268, int(REND): 2978, int(AMB): 2754}
    labels = np.concatenate([np.full(n, lab) for lab, n in sizes.items()])
    ids = np.arange(len(labels), dtype=np.uint64)
    return ids, labels


def test_subsample_balanced_fixture_counts():
    ids, labels = _labeled_pool()
    out = subsample_balanced(ids, labels, per_class=2754, seed=3)
    assert len(out) == 8262
    for lab in (int(NAT), int(AMB), int(REND)):
        assert np.count_nonzero(labels[out.astype(np.int64)] == lab) == 2754


def test_subsample_balanced_zero():
    ids, labels = _labeled_pool()
    assert len(subsample_balanced(ids, labels, 0, seed=1)) == 0


def test_subsample_balanced_names_deficient_class():
    ids, labels = _labeled_pool()
    with pytest.raises(PoolExhausted, match="ambiguous"):
        subsample_balanced(ids, labels, per_class=2755, seed=1)


def _pools(n_nat=200, n_rend=100):
    nat = np.arange(n_nat, dtype=np.uint64)
    rend = np.arange(1000, 1000 + n_rend, dtype=np.uint64)
    return nat, rend


def test_build_mix_replace_desk_scale_fixture():
    nat, rend = _pools()
    spec = MixSpec(nat, rend, n_total=57, n_rendition=16, mode=MixMode.REPLACE, seed=9)
    out = build_mix(spec)
    assert len(out) == 57
    assert np.count_nonzero(out < 1000) == 41
    assert np.count_nonzero(out >= 1000) == 16
    assert spec.n_natural == 41


def test_build_mix_zero_renditions_pure_natural():
    nat, rend = _pools()
    out = build_mix(MixSpec(nat, rend, n_total=30, n_rendition=0,
                            mode=MixMode.REPLACE, seed=1))
    assert len(out) == 30 and (out < 1000).all()


def test_build_mix_add_mode_counts():
    nat, rend = _pools(n_nat=100)
    spec = MixSpec(nat, rend, n_total=125, n_rendition=25, mode=MixMode.ADD, seed=2)
    out = build_mix(spec)
    assert len(out) == 125
    assert np.count_nonzero(out < 1000) == 100
    assert np.count_nonzero(out >= 1000) == 25


def test_build_mix_output_is_shuffled_and_deterministic():
    nat, rend = _pools()
    spec = MixSpec(nat, rend, n_total=80, n_rendition=40, mode=MixMode.REPLACE, seed=5)
    a, b = build_mix(spec), build_mix(spec)
    np.testing.assert_array_equal(a, b)
    # natural ids are drawn first; a sorted-by-pool layout would place all
    # natural ids in the first 40 slots
    assert np.count_nonzero(a[:40] < 1000) < 40


def test_build_mix_rejects_overlapping_pools():
    ids = np.arange(50, dtype=np.uint64)
    spec = MixSpec(ids, ids[40:], n_total=10, n_rendition=5, mode=MixMode.REPLACE, seed=0)
    with pytest.raises(UsageError, match="overlap"):
        build_mix(spec)


def test_build_mix_pool_exhaustion():
    nat, rend = _pools(n_nat=10, n_rend=5)
    with pytest.raises(PoolExhausted):
        build_mix(MixSpec(nat, rend, n_total=20, n_rendition=6, mode=MixMode.REPLACE, seed=0))
    with pytest.raises(PoolExhausted):
        build_mix(MixSpec(nat, rend, n_total=16, n_rendition=2, mode=MixMode.REPLACE, seed=0))


@settings(max_examples=60, deadline=None)
@given(
    n_nat=st.integers(1, 60),
    n_rend=st.integers(1, 60),
    seed=st.integers(0, 2**32 - 1),
    data=st.data(),
)
def test_build_mix_exact_composition_property(n_nat, n_rend, seed, data):
    nat = np.arange(n_nat, dtype=np.uint64)
    rend = np.arange(1000, 1000 + n_rend, dtype=np.uint64)
    n_rendition = data.draw(st.integers(0, n_rend))
    n_total = data.draw(st.integers(n_rendition, n_rendition + n_nat))
    spec = MixSpec(nat, rend, n_total=n_total, n_rendition=n_rendition,
                   mode=MixMode.REPLACE, seed=seed)
    out = build_mix(spec)
    assert len(out) == n_total
    assert np.count_nonzero(out >= 1000) == n_rendition
    assert len(np.unique(out)) == len(out)


def test_mix_spec_json_round_trip():
    nat, rend = _pools(20, 10)
    spec = MixSpec(nat, rend, n_total=15, n_rendition=5, mode=MixMode.ADD, seed=123)
    loaded = MixSpec.from_dict(json.loads(json.dumps(spec.to_dict())))
    np.testing.assert_array_equal(loaded.natural_pool, spec.natural_pool)
    assert loaded.mode == MixMode.ADD and loaded.seed == 123
    np.testing.assert_array_equal(build_mix(loaded), build_mix(spec))


def test_ratio_sweep_fixtures():
    nat, rend = _pools(200, 150)
    specs = ratio_sweep(100, [(1, 1), (1, 3), (1, 0)], nat, rend, seed=4)
    assert [s.n_rendition for s in specs] == [50, 25, 100]
    assert all(s.mode == MixMode.REPLACE and s.n_total == 100 for s in specs)


def test_ratio_sweep_rounding_within_one_sample():
    nat, rend = _pools(500, 500)
    rng = np.random.default_rng(0)
    for _ in range(50):
        r = float(rng.uniform(0.01, 5.0))
        (spec,) = ratio_sweep(173, [(r, 1.0)], nat, rend, seed=1)
        exact = 173 * r / (1 + r)
        assert abs(spec.n_rendition - exact) <= 0.5 + 1e-9


def test_ratio_sweep_infeasible_ratio_errors():
    nat, rend = _pools(10, 10)
    with pytest.raises(PoolExhausted):
        ratio_sweep(40, [(1, 1)], nat, rend, seed=0)
    with pytest.raises(UsageError, match="ratio"):
        ratio_sweep(10, [(0, 0)], nat, rend, seed=0)


@pytest.fixture(scope="module")
def oracle_graded():
    """Near-noiseless corpus where the calibrated pair decides perfectly."""
    cfg = SynthConfig(seed=21, samples_per_cell=200, num_classes=4,
                      natural_noise=0.05, rendition_noise=0.05)
    data = gen_two_domain(cfg)
    rng = np.random.default_rng(1)
    perm = rng.permutation(len(data.ids))
    tr, va = perm[:1200], perm[1200:1800]
    x = data.vectors.astype(np.float64)
    d = data.domains
    ft = train_linear_readout(x[tr], d[tr], [NAT, AMB, REND], TrainConfig(seed=2, epochs=50))
    dr = fit_density_ratio(x[tr], d[tr], REND, TrainConfig(seed=3, epochs=50))
    natural = calibrate(ft, x[va], d[va], NAT, 0.98, "ft")
    rendition = calibrate(dr, x[va], d[va], REND, 0.98, "dr-r")
    return data, natural, rendition


def test_clean_testset_removes_exactly_planted_contamination(tmp_path, oracle_graded):
    data, natural, rendition = oracle_graded
    nat_rows = np.flatnonzero(data.domains == int(NAT))[:540]
    rend_rows = np.flatnonzero(data.domains == int(REND))[:60]
    rows = np.concatenate([nat_rows, rend_rows])
    path = tmp_path / "contaminated.embs"
    write_store_arrays(path, data.ids[rows], data.domains[rows],
                       data.classes[rows], data.vectors[rows])
    result = clean_testset(path, natural, rendition, NAT)
    assert result.kept_count == 540
    assert result.removed_as_opposite == 60
    assert result.removed_as_ambiguous == 0
    assert set(result.kept_ids.tolist()) == set(data.ids[nat_rows].tolist())
    assert result.classes_remaining == len(np.unique(data.classes[nat_rows]))


def test_clean_testset_no_removals_when_clean(tmp_path, oracle_graded):
    data, natural, rendition = oracle_graded
    rows = np.flatnonzero(data.domains == int(REND))[:200]
    path = tmp_path / "clean.embs"
    write_store_arrays(path, data.ids[rows], data.domains[rows],
                       data.classes[rows], data.vectors[rows])
    result = clean_testset(path, natural, rendition, REND)
    assert result.kept_count == 200
    assert result.removed_as_opposite == 0 and result.removed_as_ambiguous == 0


def test_clean_testset_rejects_bad_intended(tmp_path, oracle_graded):
    data, natural, rendition = oracle_graded
    path = tmp_path / "c.embs"
    data.write(path)
    with pytest.raises(UsageError, match="intended"):
        clean_testset(path, natural, rendition, AMB)


def test_clean_testset_paper_scale_documentation_fixture(tmp_path):
    # serialization-layout fixture: a cleaned benchmark keeping 17864
    # samples across 985 classes
    result = CleanTestSet(
        source="imagenet-val-analog",
        intended=NAT,
        kept_ids=np.arange(17_864, dtype=np.uint64),
        removed_as_ambiguous=31_946,
        removed_as_opposite=190,
        classes_remaining=985,
    )
    path = tmp_path / "clean.json"
    result.save(path)
    loaded = json.loads(path.read_text())
    assert loaded["kept_count"] == 17_864
    assert loaded["classes_remaining"] == 985
    assert loaded["intended"] == "natural"
