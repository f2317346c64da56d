import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.optimize import linear_sum_assignment
from scipy.signal import sawtooth, square

from myoctrl.model import shipped_model
from myoctrl.represent import (LatentCodec, SynergyMap, decode, encode, fit_codec, fit_ica, fit_pca,
                               interface_from_dict, make_interface, reconstruction_error,
                               synergy_expand)

from conftest import build, hinge, model_doc, muscle, seg


def _model(clusters, cluster_of):
    ms = [muscle(f"m{i}", [("base", (0.1 * i, 0)), ("arm", (0, -0.3))], cluster=cluster_of.get(f"m{i}"))
          for i in (1, 2, 3)]
    return build(model_doc([seg("base", 1.0, 0.01), seg("arm", 1.0, 0.02, "base", com=(0, -0.2))],
                           [hinge("j", "arm")], ms, clusters))


def test_synergy_examples():
    one = SynergyMap.from_model(_model([{"name": "A", "members": ["m1", "m2", "m3"]}],
                                       {"m1": "A", "m2": "A", "m3": "A"}))
    assert one.dim == 1
    assert np.array_equal(synergy_expand(one, [0.5]), [0.5, 0.5, 0.5])
    ident = SynergyMap.from_model(_model([], {}))
    u = np.array([0.1, 0.7, 0.3])
    assert np.array_equal(synergy_expand(ident, u), u)
    mixed = SynergyMap.from_model(_model([{"name": "A", "members": ["m1", "m2"]}],
                                         {"m1": "A", "m2": "A"}))
    assert mixed.dim == 2
    assert np.array_equal(synergy_expand(mixed, [0.2, 0.9]), [0.2, 0.2, 0.9])
    with pytest.raises(ValueError):
        synergy_expand(mixed, [0.2])


def test_synergy_covers_every_muscle_once():
    for name in ("walker2d", "walker2d_exo", "walker2d_prosthetic"):
        model = shipped_model(name)
        smap = SynergyMap.from_model(model)
        assert smap.m == len(model.muscles)
        assert smap.dim == model.action_dim
        assert set(smap.slot.tolist()) == set(range(smap.dim))


@settings(max_examples=100, deadline=None)
@given(st.lists(st.floats(0, 1), min_size=12, max_size=12), st.lists(st.floats(0, 1), min_size=12, max_size=12))
def test_synergy_expand_lipschitz_and_bounded(a, b):
    smap = SynergyMap.from_model(shipped_model("walker2d"))
    ua, ub = synergy_expand(smap, a), synergy_expand(smap, b)
    assert np.all((ua >= 0) & (ua <= 1))
    assert np.max(np.abs(ua - ub)) <= np.max(np.abs(np.subtract(a, b)))


def test_pca_line_data(rng):
    t = rng.normal(size=200)
    X = np.outer(t, [1.0, -2.0, 0.5]) + [0.3, 0.1, 0.2]
    codec = fit_codec(X, 1)
    assert reconstruction_error(codec, X) < 1e-10


def test_pca_properties(rng):
    X = rng.normal(size=(400, 6)) @ rng.normal(size=(6, 6))
    p = fit_pca(X, 6)
    assert np.allclose(p.components @ p.components.T, np.eye(6), atol=1e-8)
    assert np.all(np.diff(p.explained_variance) <= 0)
    assert p.rank == 6 and not p.padded
    with pytest.raises(ValueError):
        fit_pca(X, 7)


def test_full_rank_round_trip(rng):
    X = rng.uniform(0.1, 0.9, size=(500, 5))
    codec = fit_codec(X, 5)
    assert reconstruction_error(codec, X) < 1e-8
    assert np.max(np.abs(codec.decode(codec.encode(X), clamp=False) - X)) < 1e-8
    assert np.allclose(encode(codec, codec.mean), 0.0, atol=1e-12)
    assert np.allclose(codec.ica_mixing @ codec.ica_unmixing, np.eye(5), atol=1e-6)
    assert np.allclose(codec.components @ codec.components.T, np.eye(5), atol=1e-8)


def test_rmse_nonincreasing_in_d(rng):
    X = rng.uniform(0, 1, size=(600, 8)) @ rng.uniform(0, 1, size=(8, 8)) / 8
    errs = [reconstruction_error(fit_codec(X, d), X) for d in range(1, 9)]
    assert all(b <= a + 1e-12 for a, b in zip(errs, errs[1:]))
    assert errs[-1] < 1e-8


def test_rmse_isotropic_noise_d1():
    sigma, m = 0.3, 10
    X = np.random.default_rng(7).normal(0.5, sigma, size=(20_000, m))
    err = reconstruction_error(fit_codec(X, 1), X)
    assert err == pytest.approx(np.sqrt((m - 1) / m) * sigma, rel=0.05)


def test_decode_clamped(rng):
    X = rng.uniform(0, 1, size=(300, 6))
    codec = fit_codec(X, 3)
    U = decode(codec, rng.normal(0, 50, size=(200, 3)))
    assert np.all((U >= 0) & (U <= 1))


def _sources(n=5000):
    t = np.linspace(0, 8, n)
    s = np.column_stack([square(2 * np.pi * 1.3 * t), sawtooth(2 * np.pi * 0.7 * t),
                         np.random.default_rng(0).laplace(size=n)])
    return s


def _matched_abs_corr(S, Y):
    C = np.abs(np.corrcoef(S.T, Y.T)[:S.shape[1], S.shape[1]:])
    r, c = linear_sum_assignment(-C)
    return C[r, c]


@pytest.mark.parametrize("seed", range(5))
def test_ica_recovers_three_sources(seed):
    S = _sources()
    A = np.random.default_rng(100 + seed).normal(size=(3, 3))
    X = S @ A.T
    codec = fit_codec(X, 3, seed=seed)
    Y = codec.encode(X)
    assert np.all(_matched_abs_corr(S, Y) > 0.95)
    assert codec.report["ica_converged"]


def test_ica_on_independent_data_is_signed_permutation():
    # finite samples of independent signals are slightly correlated; tolerance covers that
    S = _sources()
    Z = (S - S.mean(0)) / S.std(0)
    W = fit_ica(Z, seed=3).unmixing
    P = np.abs(W)
    assert np.allclose(np.sort(P, axis=1)[:, -1], 1.0, atol=0.02)
    assert np.allclose(np.sort(P, axis=1)[:, :-1], 0.0, atol=0.15)
    assert sorted(np.argmax(P, axis=1)) == [0, 1, 2]


def test_ica_invariant_to_row_order():
    S = _sources(2000)
    Z = (S - S.mean(0)) / S.std(0)
    perm = np.random.default_rng(1).permutation(len(Z))
    a = fit_ica(Z, seed=0).unmixing
    b = fit_ica(Z[perm], seed=0).unmixing
    assert np.allclose(a, b, atol=1e-6)


def test_ica_mixing_inverts_unmixing(rng):
    fit = fit_ica(rng.laplace(size=(1000, 4)), seed=2)
    assert np.allclose(fit.mixing @ fit.unmixing, np.eye(4), atol=1e-6)


def test_rank_deficient_data_is_padded(rng):
    X = np.outer(rng.uniform(size=100), np.ones(4)) * 0.5
    codec = fit_codec(X, 3)
    assert codec.report["rank"] == 1 and codec.report["rank_padded"]
    assert np.all(np.isfinite(codec.encode(X)))


def test_codec_serialization_bit_exact(tmp_path, rng):
    codec = fit_codec(rng.uniform(0, 1, size=(400, 7)), 4, seed=5)
    codec.save(tmp_path / "c.json")
    back = LatentCodec.load(tmp_path / "c.json")
    for k in ("mean", "components", "scales", "ica_unmixing", "ica_mixing"):
        assert np.array_equal(getattr(back, k), getattr(codec, k))
    assert back.dumps() == codec.dumps()


def test_interfaces(rng):
    model = shipped_model("walker2d")
    full = make_interface("full", model)
    assert np.array_equal(full.to_excitation(-np.ones(18)), np.zeros(18))
    assert np.array_equal(full.to_excitation(np.ones(18)), np.ones(18))
    clus = make_interface("cluster", model)
    assert clus.dim == model.action_dim and clus.m == 18
    codec = fit_codec(rng.uniform(0, 1, size=(300, 18)), 8)
    lat = make_interface("latent", model, codec)
    assert lat.dim == 8
    u = lat.to_excitation(rng.uniform(-1, 1, 8))
    assert u.shape == (18,) and np.all((u >= 0) & (u <= 1))
    back = interface_from_dict(lat.to_dict(), model)
    x = rng.uniform(-1, 1, 8)
    assert np.array_equal(back.to_excitation(x), lat.to_excitation(x))
    with pytest.raises(ValueError):
        make_interface("latent", model)
