import math

import numpy as np
import pytest

import tamperlab


@pytest.fixture(scope="module")
def corpus():
    return tamperlab.synthetic_corpus(
        {"categories": 4, "classes_per_category": 2, "train_per_class": 30, "test_per_class": 10, "seed": 9}
    )


@pytest.fixture(scope="module")
def trained(corpus, tmp_path_factory):
    scenario = tamperlab.build_scenario(corpus, "NT", 31)
    model = tamperlab.train(corpus, scenario, {"epochs": 6, "batch_size": 16, "seed": 4})
    path = tmp_path_factory.mktemp("ckpt") / "suspect.tlck"
    tamperlab.save_model(model, str(path))
    return scenario, model, path


def test_corpus_shape(corpus):
    assert corpus.num_classes == 8
    assert corpus.num_categories == 4
    assert corpus.num_images == 8 * 40
    assert corpus.category_of(5) == 2
    images = corpus.images_of(0)
    assert images.shape == (40, 3, 16, 16)
    assert images.min() >= 0.0 and images.max() <= 1.0


def test_scenario_is_deterministic(corpus):
    a = tamperlab.build_scenario(corpus, "ET", 7)
    b = tamperlab.build_scenario(corpus, "ET", 7)
    assert a == b
    assert a["action_class"] in a["retained_classes"]


def test_rank_from_predictions():
    # counts: class 2 -> 3, class 1 -> 2, class 0 -> 1
    assert tamperlab.rank_from_predictions([2, 2, 1, 0, 2, 1], 1, 3) == 2
    assert tamperlab.rank_from_predictions([2, 2, 1, 0, 2, 1], 2, 3) == 1
    # zero-count ties broken by ascending index
    assert tamperlab.rank_from_predictions([0, 0], 1, 3) == 2
    assert tamperlab.rank_from_predictions([0, 0], 2, 3) == 3


def test_welch_matches_reference_values():
    r = tamperlab.welch_t_test([3.1, 4.2, 5.0, 2.2, 3.3], [4.0, 6.1, 5.5, 7.2])
    assert r["t"] == pytest.approx(-2.603568166867606, rel=1e-9)
    assert r["df"] == pytest.approx(5.755629409727581, rel=1e-9)
    assert r["p"] == pytest.approx(0.042052809788729995, rel=1e-6)
    assert not r["degenerate"]


def test_checkpoint_roundtrip(corpus, trained):
    scenario, model, path = trained
    loaded = tamperlab.load_model(str(path))
    assert loaded.class_index_map == scenario["retained_classes"]
    assert loaded.architecture == model.architecture
    images = corpus.images_of(scenario["retained_classes"][0])
    assert loaded.predict(images) == model.predict(images)
    logits = loaded.logits(images)
    assert logits.shape == (len(scenario["retained_classes"]), images.shape[0])
    assert np.all(np.isfinite(logits))


def test_grey_probe_is_binary_and_matches_white_support(corpus, trained):
    _, model, _ = trained
    images = corpus.images_of(1)[:5]
    layer = model.num_layers - 3
    grey = tamperlab.grey_probe(model, images, layer)
    assert set(np.unique(grey)) <= {0.0, 1.0}
    white = tamperlab.white_read(model, images, layer)
    assert white.shape[1] == grey.shape[1] == 5
    assert grey.shape[0] > white.shape[0]


def test_analyze_reports_a_verdict(corpus, trained):
    scenario, model, _ = trained
    evidence = tamperlab.evidence_manifest(corpus, scenario)
    report = tamperlab.analyze(model, corpus, evidence, access="grey")
    assert report["verdict"]["mode"] in {"NT", "RT", "ET"}
    assert sorted(report["ranks"]) == ["set-1", "set-2", "set-3"]
    assert all(1 <= r <= len(scenario["retained_classes"]) for r in report["ranks"].values())
    assert report["features_collected"]
    black = tamperlab.analyze(model, corpus, evidence, access="black")
    assert not black["features_collected"]
    assert black["ranks"] == report["ranks"]
    assert not math.isnan(report["errors"]["err_overall"])


def test_errors_map_to_python_exceptions(corpus, tmp_path):
    with pytest.raises(tamperlab.LoadError):
        tamperlab.load_model(str(tmp_path / "missing.tlck"))
    with pytest.raises(tamperlab.ConfigError):
        tamperlab.build_scenario(corpus, "XT", 1)
    with pytest.raises(tamperlab.UndefinedStatisticError):
        tamperlab.welch_t_test([1.0], [2.0, 3.0])
    assert issubclass(tamperlab.LoadError, tamperlab.TamperlabError)
