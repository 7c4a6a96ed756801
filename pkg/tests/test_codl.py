"""Semi-supervised training degeneracies and interpolation behavior."""

import warnings

import numpy as np
import pytest

import support
from rqlqa.crf import (
    CodlConfig,
    CrfHyperparams,
    NonConvergence,
    codl_train,
    complete_partial,
    crf_train,
    estimate_rho,
)
from rqlqa.features import FeatureExtractor

HYPER = CrfHyperparams(labels=support.CHAIN_LABELS, max_iter=40, tol=1e-4)


def small_setup(seed=0, n_labeled=6, n_partial=8):
    rng = np.random.default_rng(seed)
    labeled, partials, _ = support.chain_corpus(
        rng, n_labeled=n_labeled, n_partial=n_partial, n_held=0
    )
    return labeled, partials


def shared_extractor(labeled, partials):
    extractor = FeatureExtractor()
    for question, _ in labeled:
        extractor.extract(question)
    for question, _ in partials:
        extractor.extract(question)
    extractor.freeze()
    return extractor


@pytest.fixture(autouse=True)
def quiet_nonconvergence():
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", NonConvergence)
        yield


def test_gamma_one_returns_supervised_parameters_bitwise():
    labeled, partials = small_setup()
    cons = support.random_constraints(np.random.default_rng(1))
    extractor = shared_extractor(labeled, partials)
    supervised = crf_train(extractor, labeled, HYPER)
    model, rhos = codl_train(
        labeled, partials, cons, CodlConfig(gamma=1.0), HYPER, extractor=extractor
    )
    assert np.array_equal(model.emissions, supervised.emissions)
    assert np.array_equal(model.transitions, supervised.transitions)
    assert rhos == estimate_rho(cons, labeled)


def test_empty_partials_equals_supervised_training():
    labeled, _ = small_setup()
    cons = support.random_constraints(np.random.default_rng(2))
    extractor = FeatureExtractor()
    for question, _ in labeled:
        extractor.extract(question)
    extractor.freeze()
    supervised = crf_train(extractor, labeled, HYPER)
    model, _ = codl_train(
        labeled, [], cons, CodlConfig(gamma=0.5), HYPER, extractor=extractor
    )
    assert np.array_equal(model.emissions, supervised.emissions)
    assert np.array_equal(model.transitions, supervised.transitions)


def test_gamma_zero_single_round_equals_relearned_parameters():
    labeled, partials = small_setup(seed=3)
    cons = support.random_constraints(np.random.default_rng(3))
    extractor = shared_extractor(labeled, partials)

    # Expected: complete the partials with the supervised model, then train
    # on the completed set alone.
    supervised = crf_train(extractor, labeled, HYPER)
    rhos0 = estimate_rho(cons, labeled)
    completed = [
        (q, complete_partial(supervised, cons.with_rhos(rhos0), q, p))
        for q, p in partials
    ]
    relearned = crf_train(extractor, completed, HYPER)

    model, rhos = codl_train(
        labeled, partials, cons,
        CodlConfig(gamma=0.0, max_iter=1), HYPER, extractor=extractor,
    )
    assert np.array_equal(model.emissions, relearned.emissions)
    assert np.array_equal(model.transitions, relearned.transitions)
    assert rhos == estimate_rho(cons, completed)


def test_interpolation_stays_between_endpoints():
    labeled, partials = small_setup(seed=4)
    cons = support.random_constraints(np.random.default_rng(4))
    extractor = shared_extractor(labeled, partials)
    supervised = crf_train(extractor, labeled, HYPER)
    model, _ = codl_train(
        labeled, partials, cons,
        CodlConfig(gamma=0.9, max_iter=2), HYPER, extractor=extractor,
    )
    # gamma=0.9 keeps parameters anchored near the supervised model.
    drift = np.max(np.abs(model.emissions - supervised.emissions))
    spread = np.max(np.abs(supervised.emissions)) + 1.0
    assert drift < 0.2 * spread


def test_codl_requires_labeled_data():
    with pytest.raises(ValueError):
        codl_train([], [], support.random_constraints(np.random.default_rng(5)))


def test_codl_is_deterministic():
    labeled, partials = small_setup(seed=6)
    cons = support.random_constraints(np.random.default_rng(6))
    runs = []
    for _ in range(2):
        extractor = shared_extractor(labeled, partials)
        model, rhos = codl_train(
            labeled, partials, cons,
            CodlConfig(gamma=0.9, max_iter=2), HYPER, extractor=extractor,
        )
        runs.append((model.emissions.copy(), model.transitions.copy(), rhos))
    assert np.array_equal(runs[0][0], runs[1][0])
    assert np.array_equal(runs[0][1], runs[1][1])
    assert runs[0][2] == runs[1][2]
