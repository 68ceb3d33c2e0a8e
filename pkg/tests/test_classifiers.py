import json

import numpy as np
import pytest

from smoothcert.classifiers import (
    Denoised,
    LabelMap,
    LocalModel,
    Remote,
    classify_remote,
)
from smoothcert.errors import MappingError, RemoteError, ShapeError
from smoothcert.nn import Linear, Model, build_classifier, build_denoiser
from smoothcert.server import serve


@pytest.fixture(scope="module")
def small_classifier():
    return build_classifier(1, 6, 6, 3, widths=(4,), seed=5)


@pytest.fixture(scope="module")
def running_server(small_classifier):
    server = serve(small_classifier).start()
    yield server
    server.stop()


def identity_denoiser(channels, height, width):
    m = build_denoiser(channels, height, width, hidden=4, depth=2, seed=0)
    for p in m.params.values():
        p[...] = 0.0
    return m  # residual net with zero weights: D(x) = x - 0 = x


# ---------------------------------------------------------------- label map


def test_label_map_roundtrip():
    lm = LabelMap(["cat", "dog", "eel"], allow_other=False)
    assert lm.num_classes == 3
    for i, name in enumerate(["cat", "dog", "eel"]):
        assert lm.index_of(name) == i
        assert lm.label_of(i) == name


def test_label_map_other_fallback():
    lm = LabelMap(["cat", "dog"], allow_other=True)
    assert lm.num_classes == 3
    assert lm.index_of("zebra") == lm.other_index == 2


def test_label_map_mapping_error():
    lm = LabelMap(["cat", "dog"], allow_other=False)
    with pytest.raises(MappingError):
        lm.index_of("zebra")
    with pytest.raises(MappingError):
        LabelMap(["a", "a"])


def test_label_map_file_roundtrip(tmp_path):
    lm = LabelMap(["x", "y", "z"], allow_other=False)
    path = tmp_path / "labels.json"
    lm.save(path)
    again = LabelMap.load(path, allow_other=False)
    assert again.labels == lm.labels


# ---------------------------------------------------------------- local


def test_constant_logit_tie_breaks_low(small_classifier):
    m = Model([Linear(4, 3)], (4,))  # zero weights: all logits equal
    h = LocalModel(m)
    out = h.classify(np.ones((5, 4)))
    assert np.all(out == 0)


def test_linear_sign_classifier():
    m = Model([Linear(4, 2)], (4,))
    m.params["layer0.weight"][...] = np.array([[0.0, 0, 0, 0], [1.0, 0, 0, 0]])
    h = LocalModel(m)
    x = np.zeros((2, 4))
    x[0, 0] = 0.3
    x[1, 0] = -0.3
    assert list(h.classify(x)) == [1, 0]


def test_preprocessing_applied_after_denoising():
    m = Model([Linear(1, 2)], (1,))
    m.params["layer0.weight"][...] = np.array([[0.0], [1.0]])
    h = LocalModel(m, mean=[0.5], std=[2.0])
    # logit_1 = (x - 0.5)/2: positive iff x > 0.5
    assert list(h.classify(np.array([[0.6], [0.4]]))) == [1, 0]


def test_denoised_identity_equals_inner(small_classifier):
    inner = LocalModel(small_classifier)
    den = Denoised(identity_denoiser(1, 6, 6), inner)
    x = np.random.default_rng(0).normal(0.5, 0.3, size=(20, 1, 6, 6))
    assert np.array_equal(den.classify(x), inner.classify(x))


def test_denoised_composition_associative(small_classifier):
    gen = np.random.default_rng(1)
    inner = LocalModel(small_classifier)
    d1 = build_denoiser(1, 6, 6, hidden=4, depth=2, seed=1)
    d2 = build_denoiser(1, 6, 6, hidden=4, depth=2, seed=2)
    x = gen.normal(0.5, 0.3, size=(10, 1, 6, 6))
    nested = Denoised(d1, Denoised(d2, inner))
    manual = inner.classify(d2.forward(d1.forward(x)))
    assert np.array_equal(nested.classify(x), manual)


def test_denoised_shape_mismatch(small_classifier):
    with pytest.raises(ShapeError):
        Denoised(build_denoiser(1, 8, 8, hidden=4, depth=2, seed=0), LocalModel(small_classifier))


# ---------------------------------------------------------------- server + remote


def test_server_round_trip_matches_local(running_server, small_classifier):
    local = LocalModel(small_classifier)
    remote = Remote(
        running_server.endpoint,
        LabelMap.default(3, allow_other=False),
        (1, 6, 6),
    )
    gen = np.random.default_rng(2)
    x = gen.normal(0.5, 0.4, size=(1000, 1, 6, 6))
    assert np.array_equal(remote.classify(x), local.classify(x))


def test_remote_deterministic(running_server):
    remote = Remote(running_server.endpoint, LabelMap.default(3, allow_other=False), (1, 6, 6))
    x = np.random.default_rng(3).normal(0.5, 0.4, size=(4, 1, 6, 6))
    assert np.array_equal(remote.classify(x), remote.classify(x))


def test_classify_remote_function(running_server, small_classifier):
    local = LocalModel(small_classifier)
    image = np.random.default_rng(4).normal(0.5, 0.4, size=(1, 6, 6))
    got = classify_remote(running_server.endpoint, image, LabelMap.default(3, allow_other=False))
    assert got == local.classify(image[None])[0]


def test_server_sorts_scores_descending(running_server):
    import requests

    image = np.random.default_rng(5).normal(0.5, 0.4, size=(1, 6, 6))
    resp = requests.post(
        f"{running_server.endpoint}/v1/classify",
        json={"shape": [1, 6, 6], "pixels": image.ravel().tolist()},
        timeout=10,
    )
    labels = resp.json()["labels"]
    scores = [entry["score"] for entry in labels]
    assert scores == sorted(scores, reverse=True)
    assert abs(sum(scores) - 1.0) < 1e-9


def test_server_malformed_json(running_server):
    import requests

    resp = requests.post(
        f"{running_server.endpoint}/v1/classify",
        data=b"{not json",
        headers={"Content-Type": "application/json"},
        timeout=10,
    )
    assert resp.status_code == 400


def test_server_wrong_length(running_server):
    import requests

    resp = requests.post(
        f"{running_server.endpoint}/v1/classify",
        json={"shape": [1, 6, 6], "pixels": [0.0] * 10},
        timeout=10,
    )
    assert resp.status_code == 400
    assert resp.json()["error"] == "shape"


def test_server_wrong_shape(running_server):
    import requests

    resp = requests.post(
        f"{running_server.endpoint}/v1/classify",
        json={"shape": [1, 5, 5], "pixels": [0.0] * 25},
        timeout=10,
    )
    assert resp.status_code == 400
    assert resp.json()["error"] == "shape"


def test_remote_error_on_unreachable():
    remote = Remote("http://127.0.0.1:1", LabelMap.default(2), (1, 2, 2), timeout=0.5)
    with pytest.raises(RemoteError):
        remote.classify_one(np.zeros((1, 2, 2)))


def test_remote_top1_tie_takes_first_listed():
    # ranking ties are resolved by the service's listing order: the
    # client must take the first entry, not re-sort
    class FakeResponse:
        status_code = 200

        def json(self):
            return {"labels": [{"name": "dog", "score": 0.9}, {"name": "cat", "score": 0.9}]}

    remote = Remote("http://example.invalid", LabelMap(["cat", "dog"]), (1, 2, 2))

    class FakeSession:
        def post(self, *a, **k):
            return FakeResponse()

    remote._local.session = FakeSession()
    assert remote.classify_one(np.zeros((1, 2, 2))) == 1  # dog


def test_remote_unmapped_label_goes_to_other():
    class FakeResponse:
        status_code = 200

        def json(self):
            return {"labels": [{"name": "zebra", "score": 0.9}]}

    remote = Remote("http://example.invalid", LabelMap(["cat", "dog"], allow_other=True), (1, 2, 2))

    class FakeSession:
        def post(self, *a, **k):
            return FakeResponse()

    remote._local.session = FakeSession()
    assert remote.classify_one(np.zeros((1, 2, 2))) == 2


def test_remote_malformed_payload_raises():
    class FakeResponse:
        status_code = 200

        def json(self):
            return {"nope": []}

    remote = Remote("http://example.invalid", LabelMap(["cat"]), (1, 2, 2))

    class FakeSession:
        def post(self, *a, **k):
            return FakeResponse()

    remote._local.session = FakeSession()
    with pytest.raises(RemoteError):
        remote.classify_one(np.zeros((1, 2, 2)))
